//! Loading and echoing the run configuration.

use cellfree_core::dnn::{AdamSettings, TrainConfig};
use cellfree_core::montecarlo::{McOptions, Sampler};
use cellfree_core::moop::Nsga2Params;
use cellfree_core::precoding::PrecoderKind;
use cellfree_core::scenario::config::{ConfigDocument, ConfigWriter, Section, ROOT};
use cellfree_core::scenario::{NominalPowers, PowerLimits, SystemConfig};
use cellfree_core::{Error, Result};

/// Configuration used when `--config` is not given.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct DnnSettings {
    pub n_unicast: usize,
    pub group_sizes: Vec<usize>,
    pub p_dl: f64,
    pub precoder: PrecoderKind,
    pub train: TrainConfig,
    pub test_scenarios: usize,
}

impl DnnSettings {
    /// The root deployment with this section's user layout.
    pub fn system(&self, base: &SystemConfig) -> Result<SystemConfig> {
        let cfg = SystemConfig {
            n_unicast: self.n_unicast,
            group_sizes: self.group_sizes.clone(),
            pilot_length: self.n_unicast + self.group_sizes.len(),
            ..base.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Root limits with this section's downlink budget and no QoS floors.
    pub fn limits(&self, base: &PowerLimits) -> PowerLimits {
        PowerLimits { p_dl: self.p_dl, se_min_unicast: 0.0, se_min_multicast: 0.0, ..base.clone() }
    }
}

/// Parameters shared by the experiment recipes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    pub precoders: Vec<PrecoderKind>,
    /// Antennas per RAU for the antenna sweeps.
    pub antennas: Vec<usize>,
    /// Number of independent user layouts per experiment.
    pub geometries: usize,
    pub comparison_users: usize,
    pub comparison_group_size: usize,
    /// Downlink power of every stream in the unicast/multicast comparison.
    pub stream_power: f64,
    pub t_max: usize,
    pub multicast_power_min: f64,
    pub multicast_power_max: f64,
    pub multicast_power_step: f64,
    pub noise_levels: Vec<f64>,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            precoders: PrecoderKind::ALL.to_vec(),
            antennas: vec![20, 50, 100],
            geometries: 5,
            comparison_users: 20,
            comparison_group_size: 5,
            stream_power: 2.0,
            t_max: 300,
            multicast_power_min: 0.1,
            multicast_power_max: 9.6,
            multicast_power_step: 0.5,
            noise_levels: vec![0.015, 0.0015],
        }
    }
}

impl ExperimentParams {
    /// Multicast downlink powers of the power sweep, inclusive of both ends.
    pub fn multicast_powers(&self) -> Vec<f64> {
        let n =
            ((self.multicast_power_max - self.multicast_power_min) / self.multicast_power_step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.multicast_power_min + i as f64 * self.multicast_power_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub system: SystemConfig,
    pub nominal: NominalPowers,
    pub limits: PowerLimits,
    pub nsga2: Nsga2Params,
    pub mc: McOptions,
    pub dnn: DnnSettings,
    pub experiment: ExperimentParams,
}

fn config_error(message: impl Into<String>) -> Error {
    Error::Config(message.into())
}

fn parse_kind(name: &str) -> Result<PrecoderKind> {
    name.parse().map_err(|_| config_error(format!("unknown precoder `{name}`")))
}

impl Settings {
    /// Parses `text`, applies `overrides` in order and validates every section.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc = ConfigDocument::parse(text)?;
        for o in overrides {
            doc.apply_override(o)?;
        }
        let mut root = doc.take_section(ROOT);
        let system = SystemConfig::from_section(&mut root)?;
        let nominal = NominalPowers::from_section(&mut root)?;
        root.finish()?;

        let mut s = doc.take_section("limits");
        let limits = PowerLimits::from_section(&mut s)?;
        s.finish()?;

        let mut s = doc.take_section("nsga2");
        let nsga2 = read_nsga2(&mut s)?;
        s.finish()?;

        let mut s = doc.take_section("mc");
        let mc = read_mc(&mut s)?;
        s.finish()?;

        let mut s = doc.take_section("dnn");
        let dnn = read_dnn(&mut s)?;
        s.finish()?;

        let mut s = doc.take_section("experiment");
        let experiment = read_experiment(&mut s)?;
        s.finish()?;

        doc.finish()?;
        dnn.system(&system)?;
        Ok(Self { system, nominal, limits, nsga2, mc, dnn, experiment })
    }

    pub fn seed(&self) -> u64 {
        self.system.rng_seed
    }

    /// Canonical configuration text; loading it reproduces these settings.
    pub fn echo(&self) -> String {
        let mut w = ConfigWriter::new();
        self.system.write_to(&mut w);
        self.nominal.write_to(&mut w);
        w.section("limits");
        self.limits.write_to(&mut w);

        let n = &self.nsga2;
        w.section("nsga2")
            .value("population", n.population)
            .value("generations", n.generations)
            .value("crossover_prob", n.crossover_prob)
            .value("eta_crossover", n.eta_crossover)
            .value("eta_mutation", n.eta_mutation);
        if let Some(p) = n.mutation_prob {
            w.value("mutation_prob", p);
        }

        let sampler = match self.mc.sampler {
            Sampler::Statistical => "statistical",
            Sampler::Pilot => "pilot",
        };
        w.section("mc").value("realizations", self.mc.n_real).value("sampler", sampler);

        let d = &self.dnn;
        let t = &d.train;
        w.section("dnn")
            .value("n_unicast", d.n_unicast)
            .list("group_sizes", &d.group_sizes)
            .value("p_dl", d.p_dl)
            .value("precoder", d.precoder)
            .value("iterations", t.iterations)
            .value("batch_size", t.batch_size)
            .list("hidden", &t.hidden)
            .value("learning_rate", t.adam.learning_rate)
            .value("beta1", t.adam.beta1)
            .value("beta2", t.adam.beta2)
            .value("epsilon", t.adam.epsilon)
            .value("validation_size", t.validation_size)
            .value("validation_every", t.validation_every)
            .value("normalization_samples", t.normalization_samples)
            .value("test_scenarios", d.test_scenarios);
        if let Some(temp) = t.smooth_min {
            w.value("smooth_min", temp);
        }

        let e = &self.experiment;
        w.section("experiment")
            .list("precoders", &e.precoders)
            .list("antennas", &e.antennas)
            .value("geometries", e.geometries)
            .value("comparison_users", e.comparison_users)
            .value("comparison_group_size", e.comparison_group_size)
            .value("stream_power", e.stream_power)
            .value("t_max", e.t_max)
            .value("multicast_power_min", e.multicast_power_min)
            .value("multicast_power_max", e.multicast_power_max)
            .value("multicast_power_step", e.multicast_power_step)
            .list("noise_levels", &e.noise_levels);
        w.finish()
    }
}

fn read_nsga2(s: &mut Section) -> Result<Nsga2Params> {
    let d = Nsga2Params::default();
    let p = Nsga2Params {
        population: s.take_or("population", d.population)?,
        generations: s.take_or("generations", d.generations)?,
        crossover_prob: s.take_or("crossover_prob", d.crossover_prob)?,
        eta_crossover: s.take_or("eta_crossover", d.eta_crossover)?,
        eta_mutation: s.take_or("eta_mutation", d.eta_mutation)?,
        mutation_prob: s.take("mutation_prob")?,
    };
    p.validate()?;
    Ok(p)
}

fn read_mc(s: &mut Section) -> Result<McOptions> {
    let n_real = s.take_or("realizations", 10_000usize)?;
    let sampler = match s.take_or("sampler", "statistical".to_string())?.as_str() {
        "statistical" => Sampler::Statistical,
        "pilot" => Sampler::Pilot,
        other => return Err(config_error(format!("mc.sampler must be statistical or pilot, got `{other}`"))),
    };
    if n_real < cellfree_core::montecarlo::MIN_REALIZATIONS {
        return Err(config_error(format!(
            "mc.realizations must be at least {}",
            cellfree_core::montecarlo::MIN_REALIZATIONS
        )));
    }
    Ok(McOptions { n_real, sampler })
}

fn read_dnn(s: &mut Section) -> Result<DnnSettings> {
    let d = TrainConfig::default();
    let a = AdamSettings::default();
    let train = TrainConfig {
        adam: AdamSettings {
            learning_rate: s.take_or("learning_rate", a.learning_rate)?,
            beta1: s.take_or("beta1", a.beta1)?,
            beta2: s.take_or("beta2", a.beta2)?,
            epsilon: s.take_or("epsilon", a.epsilon)?,
        },
        batch_size: s.take_or("batch_size", d.batch_size)?,
        iterations: s.take_or("iterations", d.iterations)?,
        hidden: s.take_or("hidden", d.hidden.clone())?,
        validation_size: s.take_or("validation_size", d.validation_size)?,
        validation_every: s.take_or("validation_every", d.validation_every)?,
        normalization_samples: s.take_or("normalization_samples", d.normalization_samples)?,
        smooth_min: s.take("smooth_min")?,
    };
    train.validate()?;
    let settings = DnnSettings {
        n_unicast: s.take_or("n_unicast", 4)?,
        group_sizes: s.take_or("group_sizes", vec![2, 2])?,
        p_dl: s.take_or("p_dl", 47.0)?,
        precoder: parse_kind(&s.take_or("precoder", "zf".to_string())?)?,
        train,
        test_scenarios: s.take_or("test_scenarios", 10)?,
    };
    if !(settings.p_dl > 0.0) || settings.test_scenarios == 0 {
        return Err(config_error("dnn.p_dl and dnn.test_scenarios must be positive"));
    }
    Ok(settings)
}

fn read_experiment(s: &mut Section) -> Result<ExperimentParams> {
    let d = ExperimentParams::default();
    let names: Option<Vec<String>> = s.take("precoders")?;
    let precoders = match names {
        Some(n) => n.iter().map(|k| parse_kind(k)).collect::<Result<Vec<_>>>()?,
        None => d.precoders.clone(),
    };
    let e = ExperimentParams {
        precoders,
        antennas: s.take_or("antennas", d.antennas.clone())?,
        geometries: s.take_or("geometries", d.geometries)?,
        comparison_users: s.take_or("comparison_users", d.comparison_users)?,
        comparison_group_size: s.take_or("comparison_group_size", d.comparison_group_size)?,
        stream_power: s.take_or("stream_power", d.stream_power)?,
        t_max: s.take_or("t_max", d.t_max)?,
        multicast_power_min: s.take_or("multicast_power_min", d.multicast_power_min)?,
        multicast_power_max: s.take_or("multicast_power_max", d.multicast_power_max)?,
        multicast_power_step: s.take_or("multicast_power_step", d.multicast_power_step)?,
        noise_levels: s.take_or("noise_levels", d.noise_levels.clone())?,
    };
    if e.precoders.is_empty() || e.antennas.is_empty() || e.antennas.contains(&0) {
        return Err(config_error("experiment.precoders and experiment.antennas must be non-empty and positive"));
    }
    if e.geometries == 0 {
        return Err(config_error("experiment.geometries must be at least 1"));
    }
    if e.comparison_group_size == 0 || !e.comparison_users.is_multiple_of(e.comparison_group_size) {
        return Err(config_error(
            "experiment.comparison_users must be a positive multiple of experiment.comparison_group_size",
        ));
    }
    if !(e.stream_power > 0.0) || e.noise_levels.is_empty() || e.noise_levels.iter().any(|n| !(*n > 0.0)) {
        return Err(config_error("experiment.stream_power and experiment.noise_levels must be positive"));
    }
    if !(e.multicast_power_step > 0.0)
        || !(e.multicast_power_min >= 0.0)
        || e.multicast_power_max < e.multicast_power_min
    {
        return Err(config_error("experiment multicast power range is empty or has a non-positive step"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_loads() {
        let s = Settings::load(DEFAULT_CONFIG, &[]).unwrap();
        assert_eq!(s.system.n_raus, 5);
        assert_eq!(s.system.pilot_length, 12);
        assert_eq!(s.limits.p_dl, 50.0);
        assert_eq!(s.nsga2, Nsga2Params::default());
        assert_eq!(s.mc.n_real, 10_000);
        assert_eq!(s.dnn.train, TrainConfig::default());
        assert_eq!(s.experiment, ExperimentParams::default());
    }

    #[test]
    fn echo_round_trips() {
        let s = Settings::load(DEFAULT_CONFIG, &["L=100".into(), "nsga2.mutation_prob=0.2".into()]).unwrap();
        assert_eq!(s.system.antennas_per_rau, 100);
        let again = Settings::load(&s.echo(), &[]).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.echo(), s.echo());
    }

    #[test]
    fn overrides_apply_after_file() {
        let s = Settings::load(DEFAULT_CONFIG, &["experiment.antennas=[10, 30]".into(), "seed=9".into()]).unwrap();
        assert_eq!(s.experiment.antennas, vec![10, 30]);
        assert_eq!(s.seed(), 9);
        assert!(s.echo().contains("antennas_per_rau = 50"));
    }

    #[test]
    fn bad_values_are_config_errors() {
        for o in ["mc.sampler=exact", "experiment.precoders=[foo]", "nsga2.population=5", "dnn.beta1=1", "bogus=1"] {
            let err = Settings::load(DEFAULT_CONFIG, &[o.to_string()]).unwrap_err();
            assert!(matches!(err, Error::Config(_) | Error::ConfigSyntax { .. }), "{o}: {err:?}");
        }
    }

    #[test]
    fn multicast_power_grid() {
        let p = ExperimentParams::default().multicast_powers();
        assert_eq!(p.len(), 20);
        assert!((p[0] - 0.1).abs() < 1e-12 && (p[19] - 9.6).abs() < 1e-9);
    }
}
