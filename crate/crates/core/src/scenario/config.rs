//! Flat `key = value` configuration files.
//!
//! ```text
//! # comment
//! N = 5
//! group_sizes = [5, 5]
//! [limits]
//! p_dl = 50
//! ```
//!
//! Keys before the first `[section]` header belong to the root section.
//! Consumers pull typed values out of a [`Section`] and then call
//! [`Section::finish`], which rejects any key nobody asked for.

use std::fmt::Write as _;

use super::{NominalPowers, PowerLimits, SystemConfig};
use crate::error::{Error, Result};

pub const ROOT: &str = "";

const ROOT_ALIASES: &[(&str, &str)] = &[
    ("N", "n_raus"),
    ("L", "antennas_per_rau"),
    ("U", "n_unicast"),
    ("K", "group_sizes"),
    ("K_m", "group_sizes"),
    ("a", "path_loss_exponent"),
    ("b", "reference_gain"),
    ("T", "coherence_length"),
    ("tau", "pilot_length"),
    ("seed", "rng_seed"),
];

fn canonical_key(section: &str, key: &str) -> String {
    if section == ROOT {
        if let Some((_, canon)) = ROOT_ALIASES.iter().find(|(alias, _)| *alias == key) {
            return (*canon).to_string();
        }
    }
    key.to_string()
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Line(usize),
    Override(String),
}

impl Origin {
    fn error(&self, message: String) -> Error {
        match self {
            Origin::Line(line) => Error::ConfigSyntax { line: *line, message },
            Origin::Override(text) => Error::Config(format!("override `{text}`: {message}")),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    key: String,
    raw: String,
    origin: Origin,
}

/// Values that can be parsed from a raw config string.
pub trait ConfigValue: Sized {
    const EXPECTED: &'static str;
    fn parse_raw(raw: &str) -> Option<Self>;
}

impl ConfigValue for f64 {
    const EXPECTED: &'static str = "a number";
    fn parse_raw(raw: &str) -> Option<Self> {
        raw.parse::<f64>().ok().filter(|v| v.is_finite())
    }
}

impl ConfigValue for usize {
    const EXPECTED: &'static str = "a non-negative integer";
    fn parse_raw(raw: &str) -> Option<Self> {
        raw.parse().ok()
    }
}

impl ConfigValue for u64 {
    const EXPECTED: &'static str = "a non-negative integer";
    fn parse_raw(raw: &str) -> Option<Self> {
        raw.parse().ok()
    }
}

impl ConfigValue for bool {
    const EXPECTED: &'static str = "true or false";
    fn parse_raw(raw: &str) -> Option<Self> {
        raw.parse().ok()
    }
}

impl ConfigValue for String {
    const EXPECTED: &'static str = "a string";
    fn parse_raw(raw: &str) -> Option<Self> {
        let unquoted = raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(raw);
        (!unquoted.is_empty()).then(|| unquoted.to_string())
    }
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    const EXPECTED: &'static str = "a bracketed list such as [1, 2]";
    fn parse_raw(raw: &str) -> Option<Self> {
        let inner = raw.strip_prefix('[')?.strip_suffix(']')?.trim();
        if inner.is_empty() {
            return Some(Vec::new());
        }
        inner.split(',').map(|item| T::parse_raw(item.trim())).collect()
    }
}

/// One `[section]` of a document.
#[derive(Debug, Clone)]
pub struct Section {
    name: String,
    entries: Vec<Entry>,
}

impl Section {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), entries: Vec::new() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    fn set(&mut self, key: String, raw: String, origin: Origin) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.key == key) {
            e.raw = raw;
            e.origin = origin;
        } else {
            self.entries.push(Entry { key, raw, origin });
        }
    }

    fn qualified(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    /// Removes and parses `key`, returning `None` if absent.
    pub fn take<T: ConfigValue>(&mut self, key: &str) -> Result<Option<T>> {
        let Some(pos) = self.entries.iter().position(|e| e.key == key) else {
            return Ok(None);
        };
        let entry = self.entries.remove(pos);
        match T::parse_raw(&entry.raw) {
            Some(v) => Ok(Some(v)),
            None => Err(entry.origin.error(format!(
                "key `{}`: expected {}, got `{}`",
                self.qualified(key),
                T::EXPECTED,
                entry.raw
            ))),
        }
    }

    pub fn take_or<T: ConfigValue>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take(key)?.unwrap_or(default))
    }

    pub fn take_required<T: ConfigValue>(&mut self, key: &str) -> Result<T> {
        self.take(key)?.ok_or_else(|| Error::Config(format!("missing required key `{}`", self.qualified(key))))
    }

    /// Fails on the first key that no consumer took.
    pub fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some(e) => Err(e.origin.error(format!("unknown key `{}`", self.qualified(&e.key)))),
        }
    }
}

/// Parsed configuration file: a root section plus named sections.
#[derive(Debug, Clone)]
pub struct ConfigDocument {
    sections: Vec<(Section, Origin)>,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        Self { sections: vec![(Section::new(ROOT), Origin::Line(0))] }
    }
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Self::default();
        let mut current = 0usize;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw_line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                if !content.contains('=') {
                    let name = rest
                        .strip_suffix(']')
                        .map(str::trim)
                        .filter(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
                    let Some(name) = name else {
                        return Err(Error::ConfigSyntax {
                            line,
                            message: format!("malformed section header `{content}`"),
                        });
                    };
                    if doc.sections.iter().any(|(s, _)| s.name == name) {
                        return Err(Error::ConfigSyntax { line, message: format!("duplicate section `[{name}]`") });
                    }
                    doc.sections.push((Section::new(name), Origin::Line(line)));
                    current = doc.sections.len() - 1;
                    continue;
                }
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::ConfigSyntax { line, message: format!("expected `key = value`, got `{content}`") });
            };
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::ConfigSyntax { line, message: format!("expected `key = value`, got `{content}`") });
            }
            let section = &mut doc.sections[current].0;
            let key = canonical_key(&section.name, key);
            if section.entries.iter().any(|e| e.key == key) {
                return Err(Error::ConfigSyntax {
                    line,
                    message: format!("duplicate key `{}`", section.qualified(&key)),
                });
            }
            section.set(key, value.to_string(), Origin::Line(line));
        }
        Ok(doc)
    }

    /// Applies `key=value` or `section.key=value`, replacing any file value.
    pub fn apply_override(&mut self, text: &str) -> Result<()> {
        let bad = || Error::Config(format!("override `{text}` is not of the form key=value"));
        let (path, value) = text.split_once('=').ok_or_else(bad)?;
        let (path, value) = (path.trim(), value.trim());
        if path.is_empty() || value.is_empty() {
            return Err(bad());
        }
        let (section, key) = path.rsplit_once('.').unwrap_or((ROOT, path));
        let idx = match self.sections.iter().position(|(s, _)| s.name == section) {
            Some(i) => i,
            None => {
                self.sections.push((Section::new(section), Origin::Override(text.to_string())));
                self.sections.len() - 1
            }
        };
        let key = canonical_key(section, key);
        self.sections[idx].0.set(key, value.to_string(), Origin::Override(text.to_string()));
        Ok(())
    }

    /// Removes a section, yielding an empty one if it was never declared.
    pub fn take_section(&mut self, name: &str) -> Section {
        match self.sections.iter().position(|(s, _)| s.name == name) {
            Some(i) => self.sections.remove(i).0,
            None => Section::new(name),
        }
    }

    /// Fails on the first section that no consumer took.
    pub fn finish(self) -> Result<()> {
        for (s, origin) in self.sections {
            if s.name == ROOT {
                s.finish()?;
            } else {
                return Err(origin.error(format!("unknown section `[{}]`", s.name)));
            }
        }
        Ok(())
    }
}

/// Builds canonical config text, one section at a time.
#[derive(Debug, Default)]
pub struct ConfigWriter {
    text: String,
}

impl ConfigWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn section(&mut self, name: &str) -> &mut Self {
        if !self.text.is_empty() {
            self.text.push('\n');
        }
        let _ = writeln!(self.text, "[{name}]");
        self
    }

    pub fn value(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.text, "{key} = {value}");
        self
    }

    pub fn list<T: std::fmt::Display>(&mut self, key: &str, values: &[T]) -> &mut Self {
        let items: Vec<String> = values.iter().map(ToString::to_string).collect();
        self.value(key, format!("[{}]", items.join(", ")))
    }

    pub fn finish(self) -> String {
        self.text
    }
}

impl SystemConfig {
    /// Reads the system keys from the root section; shape keys are required.
    pub fn from_section(section: &mut Section) -> Result<Self> {
        let d = SystemConfig::default();
        let n_unicast: usize = section.take_required("n_unicast")?;
        let group_sizes: Vec<usize> = section.take_required("group_sizes")?;
        let cfg = SystemConfig {
            n_raus: section.take_required("n_raus")?,
            antennas_per_rau: section.take_required("antennas_per_rau")?,
            pilot_length: section.take_or("pilot_length", n_unicast + group_sizes.len())?,
            n_unicast,
            group_sizes,
            path_loss_exponent: section.take_or("path_loss_exponent", d.path_loss_exponent)?,
            reference_gain: section.take_or("reference_gain", d.reference_gain)?,
            area_radius: section.take_or("area_radius", d.area_radius)?,
            min_distance: section.take_or("min_distance", d.min_distance)?,
            noise_ul: section.take_or("noise_ul", d.noise_ul)?,
            noise_dl: section.take_or("noise_dl", d.noise_dl)?,
            coherence_length: section.take_or("coherence_length", d.coherence_length)?,
            rng_seed: section.take_or("rng_seed", d.rng_seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn write_to(&self, w: &mut ConfigWriter) {
        w.value("n_raus", self.n_raus)
            .value("antennas_per_rau", self.antennas_per_rau)
            .value("n_unicast", self.n_unicast)
            .list("group_sizes", &self.group_sizes)
            .value("path_loss_exponent", self.path_loss_exponent)
            .value("reference_gain", self.reference_gain)
            .value("area_radius", self.area_radius)
            .value("min_distance", self.min_distance)
            .value("noise_ul", self.noise_ul)
            .value("noise_dl", self.noise_dl)
            .value("coherence_length", self.coherence_length)
            .value("pilot_length", self.pilot_length)
            .value("rng_seed", self.rng_seed);
    }
}

impl NominalPowers {
    /// Reads `p_ul`, `q_ul`, `p_dl`, `q_dl` from the root section.
    pub fn from_section(section: &mut Section) -> Result<Self> {
        let d = NominalPowers::default();
        let n = NominalPowers {
            p_ul: section.take_or("p_ul", d.p_ul)?,
            q_ul: section.take_or("q_ul", d.q_ul)?,
            p_dl: section.take_or("p_dl", d.p_dl)?,
            q_dl: section.take_or("q_dl", d.q_dl)?,
        };
        if [n.p_ul, n.q_ul, n.p_dl, n.q_dl].iter().any(|p| *p < 0.0) {
            return Err(Error::Config("nominal powers must be non-negative".into()));
        }
        Ok(n)
    }

    pub fn write_to(&self, w: &mut ConfigWriter) {
        w.value("p_ul", self.p_ul).value("q_ul", self.q_ul).value("p_dl", self.p_dl).value("q_dl", self.q_dl);
    }
}

impl PowerLimits {
    /// Reads the `[limits]` section.
    pub fn from_section(section: &mut Section) -> Result<Self> {
        let d = PowerLimits::default();
        let limits = PowerLimits {
            p_ul_un: section.take_or("p_ul_un", d.p_ul_un)?,
            p_ul_mu: section.take_or("p_ul_mu", d.p_ul_mu)?,
            p_dl_un: section.take_or("p_dl_un", d.p_dl_un)?,
            p_dl_mu: section.take_or("p_dl_mu", d.p_dl_mu)?,
            p_dl: section.take_or("p_dl", d.p_dl)?,
            se_min_unicast: section.take_or("se_min_unicast", d.se_min_unicast)?,
            se_min_multicast: section.take_or("se_min_multicast", d.se_min_multicast)?,
        };
        limits.validate()?;
        Ok(limits)
    }

    pub fn write_to(&self, w: &mut ConfigWriter) {
        w.value("p_ul_un", self.p_ul_un)
            .value("p_ul_mu", self.p_ul_mu)
            .value("p_dl_un", self.p_dl_un)
            .value("p_dl_mu", self.p_dl_mu)
            .value("p_dl", self.p_dl)
            .value("se_min_unicast", self.se_min_unicast)
            .value("se_min_multicast", self.se_min_multicast);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# deployment
N = 5
L = 50
U = 10
group_sizes = [5, 5]   # two groups
noise_dl = 0.02

[limits]
p_dl = 40
";

    fn system(text: &str) -> Result<SystemConfig> {
        let mut doc = ConfigDocument::parse(text)?;
        let mut root = doc.take_section(ROOT);
        let cfg = SystemConfig::from_section(&mut root)?;
        root.finish()?;
        Ok(cfg)
    }

    #[test]
    fn parses_aliases_and_defaults() {
        let cfg = system(SAMPLE.split("[limits]").next().unwrap()).unwrap();
        assert_eq!(cfg.n_raus, 5);
        assert_eq!(cfg.antennas_per_rau, 50);
        assert_eq!(cfg.group_sizes, vec![5, 5]);
        assert_eq!(cfg.noise_dl, 0.02);
        assert_eq!(cfg.pilot_length, 12);
        assert_eq!(cfg.coherence_length, 196);
    }

    #[test]
    fn sections_are_separate() {
        let mut doc = ConfigDocument::parse(SAMPLE).unwrap();
        let mut limits = doc.take_section("limits");
        let l = PowerLimits::from_section(&mut limits).unwrap();
        limits.finish().unwrap();
        assert_eq!(l.p_dl, 40.0);
        assert_eq!(l.p_dl_un, 50.0);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = system("N = 5\nL = 50\nU = 10\nK = [5, 5]\nbogus = 1\n").unwrap_err();
        match err {
            Error::ConfigSyntax { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_list_names_the_key() {
        let err = system("N = 5\nL = 50\nU = 10\ngroup_sizes = [5, 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("group_sizes"), "{msg}");
        assert!(msg.starts_with("line 4"), "{msg}");
    }

    #[test]
    fn missing_required_key() {
        let err = system("N = 5\nL = 50\nK = [5, 5]\n").unwrap_err();
        assert!(err.to_string().contains("n_unicast"));
    }

    #[test]
    fn unknown_section_rejected() {
        let mut doc = ConfigDocument::parse("[weird]\nx = 1\n").unwrap();
        doc.take_section(ROOT);
        assert!(matches!(doc.finish(), Err(Error::ConfigSyntax { line: 1, .. })));
    }

    #[test]
    fn syntax_errors() {
        assert!(ConfigDocument::parse("N 5").is_err());
        assert!(ConfigDocument::parse("N = 5\nN = 6").is_err());
        assert!(ConfigDocument::parse("[a]\n[a]").is_err());
        assert!(ConfigDocument::parse("[bad name]").is_err());
        assert!(ConfigDocument::parse("N = 5\nn_raus = 6").is_err());
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut doc = ConfigDocument::parse(SAMPLE).unwrap();
        doc.apply_override("L=100").unwrap();
        doc.apply_override("limits.p_dl = 10").unwrap();
        let mut root = doc.take_section(ROOT);
        let cfg = SystemConfig::from_section(&mut root).unwrap();
        assert_eq!(cfg.antennas_per_rau, 100);
        let mut limits = doc.take_section("limits");
        assert_eq!(PowerLimits::from_section(&mut limits).unwrap().p_dl, 10.0);
        assert!(doc.apply_override("novalue").is_err());
    }

    #[test]
    fn bad_override_value_mentions_override() {
        let mut doc = ConfigDocument::parse(SAMPLE).unwrap();
        doc.apply_override("L=many").unwrap();
        let mut root = doc.take_section(ROOT);
        let msg = SystemConfig::from_section(&mut root).unwrap_err().to_string();
        assert!(msg.contains("override `L=many`"), "{msg}");
    }

    #[test]
    fn writer_output_parses_back() {
        let cfg = SystemConfig { noise_dl: 0.1 + 0.2, ..Default::default() };
        let limits = PowerLimits::default();
        let mut w = ConfigWriter::new();
        cfg.write_to(&mut w);
        NominalPowers::default().write_to(&mut w);
        limits.write_to(w.section("limits"));
        let text = w.finish();
        let mut doc = ConfigDocument::parse(&text).unwrap();
        let mut root = doc.take_section(ROOT);
        assert_eq!(SystemConfig::from_section(&mut root).unwrap(), cfg);
        assert_eq!(NominalPowers::from_section(&mut root).unwrap(), NominalPowers::default());
        root.finish().unwrap();
        let mut sec = doc.take_section("limits");
        assert_eq!(PowerLimits::from_section(&mut sec).unwrap(), limits);
        sec.finish().unwrap();
        doc.finish().unwrap();
    }

    #[test]
    fn list_parsing() {
        assert_eq!(Vec::<usize>::parse_raw("[]"), Some(vec![]));
        assert_eq!(Vec::<f64>::parse_raw("[1, 2.5]"), Some(vec![1.0, 2.5]));
        assert_eq!(Vec::<usize>::parse_raw("[1, x]"), None);
        assert_eq!(Vec::<usize>::parse_raw("1, 2"), None);
    }
}
