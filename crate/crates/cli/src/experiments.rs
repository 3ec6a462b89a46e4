//! Experiment recipes: each turns the loaded settings into CSV artifacts.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::time::Instant;

use cellfree_core::dnn::{self, TrainResult};
use cellfree_core::montecarlo::{estimate_appendix_terms, estimate_sinr_multi, AppendixTerm};
use cellfree_core::moop::{run_nsga2, ParetoFront};
use cellfree_core::numerics::SimRng;
use cellfree_core::scenario::{place_uniform, Point, PowerAllocation, PowerLimits, Scenario, SystemConfig};
use cellfree_core::spectral::{closed_form_report, SeReport};
use cellfree_core::Error;

use crate::manifest::Artifact;
use crate::plot::{Chart, Series};
use crate::settings::Settings;
use crate::{CliError, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    ValidateClosedForm,
    AppendixTerms,
    UnicastVsMulticast,
    SweepT,
    DistributedVsCentralized,
    SweepMulticastPower,
    Pareto,
    DnnTrain,
    DnnVsNsga2,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::ValidateClosedForm,
        Experiment::AppendixTerms,
        Experiment::UnicastVsMulticast,
        Experiment::SweepT,
        Experiment::DistributedVsCentralized,
        Experiment::SweepMulticastPower,
        Experiment::Pareto,
        Experiment::DnnTrain,
        Experiment::DnnVsNsga2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ValidateClosedForm => "validate_closed_form",
            Experiment::AppendixTerms => "appendix_terms",
            Experiment::UnicastVsMulticast => "unicast_vs_multicast",
            Experiment::SweepT => "sweep_T",
            Experiment::DistributedVsCentralized => "distributed_vs_centralized",
            Experiment::SweepMulticastPower => "sweep_multicast_power",
            Experiment::Pareto => "pareto",
            Experiment::DnnTrain => "dnn_train",
            Experiment::DnnVsNsga2 => "dnn_vs_nsga2",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment `{s}`; expected one of: {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also render SVG charts.
    pub plots: bool,
    /// Write wall-clock columns instead of `NA`; such files are not reproducible.
    pub record_timings: bool,
}

pub const VALIDATE_HEADER: &str =
    "precoder,antennas_per_rau,total_antennas,user,closed_form_sinr,mc_sinr,mc_ci,rel_err,closed_form_se,mc_se";
pub const COMPARISON_HEADER: &str =
    "precoder,antennas_per_rau,total_antennas,geometry,unicast_se,multicast_se,multicast_min_se";
pub const SWEEP_T_HEADER: &str = "precoder,mode,coherence_length,tau,prelog,mean_sinr,mean_se";
pub const SWEEP_T_SINR_HEADER: &str = "precoder,mode,geometry,user,sinr";
pub const CENTRALIZED_HEADER: &str = "precoder,antennas_per_rau,total_antennas,geometry,distributed_multicast_se,centralized_multicast_se,distributed_unicast_se,centralized_unicast_se";
pub const POWER_SWEEP_HEADER: &str =
    "precoder,noise,multicast_power,mean_unicast_se,min_multicast_se,mean_multicast_se";
pub const HYPERVOLUME_HEADER: &str = "precoder,generation,archive_hypervolume,population_hypervolume";
pub const PARETO_SUMMARY_HEADER: &str = "precoder,points,feasible,hypervolume,best_sum_f1,best_sum_f2,evaluations";
pub const DNN_SUMMARY_HEADER: &str = "precoder,parameters,best_iter,best_val_loss,train_ms";
pub const DNN_VS_NSGA2_HEADER: &str = "scenario,dnn_sum,nsga2_sum,uniform_sum,ratio,dnn_ms,nsga2_ms";
pub const DNN_VS_NSGA2_SUMMARY_HEADER: &str =
    "scenarios,mean_ratio,min_ratio,uniform_mean_ratio,train_ms,mean_dnn_ms,mean_nsga2_ms";

/// Runs one experiment and returns its artifacts in a fixed order.
pub fn run_experiment(exp: Experiment, s: &Settings, opts: RunOptions) -> Result<Vec<Artifact>, CliError> {
    let mut out = match exp {
        Experiment::ValidateClosedForm => validate_closed_form(s)?,
        Experiment::AppendixTerms => appendix_terms(s)?,
        Experiment::UnicastVsMulticast => unicast_vs_multicast(s)?,
        Experiment::SweepT => sweep_t(s)?,
        Experiment::DistributedVsCentralized => distributed_vs_centralized(s)?,
        Experiment::SweepMulticastPower => sweep_multicast_power(s)?,
        Experiment::Pareto => pareto(s)?,
        Experiment::DnnTrain => dnn_train(s, opts)?,
        Experiment::DnnVsNsga2 => dnn_vs_nsga2(s, opts)?,
    };
    if !opts.plots {
        out.charts.clear();
    }
    let mut artifacts = out.files;
    artifacts.extend(out.charts.into_iter().map(|(name, chart)| Artifact::text(name, chart.to_svg())));
    Ok(artifacts)
}

#[derive(Default)]
struct Output {
    files: Vec<Artifact>,
    charts: Vec<(String, Chart)>,
}

impl Output {
    fn csv(&mut self, name: &str, body: String) {
        self.files.push(Artifact::text(name, body));
    }

    fn chart(&mut self, name: &str, chart: Chart) {
        self.charts.push((name.to_string(), chart));
    }
}

fn with_header(header: &str) -> String {
    let mut s = String::from(header);
    s.push('\n');
    s
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn ms(timings: bool, value: f64) -> String {
    if timings {
        format!("{value:.6}")
    } else {
        "NA".into()
    }
}

fn antenna_config(base: &SystemConfig, antennas: usize, exp: Experiment) -> Result<SystemConfig, CliError> {
    let cfg = SystemConfig { antennas_per_rau: antennas, ..base.clone() };
    cfg.validate().context(exp, "config")?;
    Ok(cfg)
}

fn geometry(cfg: &SystemConfig, seed: u64, g: usize, exp: Experiment) -> Result<Scenario, CliError> {
    place_uniform(cfg, &mut SimRng::new(seed).substream("geometry", g as u64)).context(exp, "place_uniform")
}

fn validate_closed_form(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::ValidateClosedForm;
    let root = SimRng::new(s.seed());
    let kinds = &s.experiment.precoders;
    let mut csv = with_header(VALIDATE_HEADER);
    // (total antennas, closed form, Monte Carlo) mean SE per precoder and user kind
    let mut curves: Vec<[Vec<(f64, f64, f64)>; 2]> = vec![Default::default(); kinds.len()];
    for &l in &s.experiment.antennas {
        let cfg = antenna_config(&s.system, l, exp)?;
        let scn = geometry(&cfg, s.seed(), 0, exp)?;
        let alloc = PowerAllocation::uniform(&cfg, &s.nominal);
        let nl = cfg.total_antennas();
        let reports = estimate_sinr_multi(kinds, &scn, &alloc, &cfg, s.mc, &root.substream("mc-validate", l as u64))
            .context(exp, "estimate_sinr")?;
        for (ki, report) in reports.iter().enumerate() {
            let cf = closed_form_report(report.kind, &scn, &alloc, &cfg).context(exp, "closed_form_sinr")?;
            let cf_sinr: Vec<f64> = cf.sinr_unicast.iter().chain(cf.sinr_multicast.iter().flatten()).copied().collect();
            let mut se = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
            for (rx, &c) in report.receivers.iter().zip(&cf_sinr) {
                let m = rx.sinr.mean;
                let rel = if c != 0.0 { (m - c).abs() / c.abs() } else { m.abs() };
                let se_c = cf.prelog * (1.0 + c).log2();
                let se_m = cf.prelog * (1.0 + m).log2();
                let _ = writeln!(
                    csv,
                    "{},{l},{nl},{},{c:.10e},{m:.10e},{:.10e},{rel:.10e},{se_c:.10e},{se_m:.10e}",
                    report.kind,
                    rx.receiver.label(),
                    rx.sinr.half_width_95
                );
                let slot = usize::from(matches!(rx.receiver, cellfree_core::montecarlo::Receiver::Multicast(..)));
                se[slot].0.push(se_c);
                se[slot].1.push(se_m);
            }
            for (slot, (c, m)) in se.iter().enumerate() {
                curves[ki][slot].push((nl as f64, mean(c), mean(m)));
            }
        }
    }
    let mut out = Output::default();
    out.csv("validate_closed_form.csv", csv);
    for (slot, kind_name) in ["unicast", "multicast"].iter().enumerate() {
        let mut chart =
            Chart::new(format!("Mean {kind_name} SE against total antennas"), "total antennas NL", "SE (bit/s/Hz)");
        for (ki, kind) in kinds.iter().enumerate() {
            let pts = &curves[ki][slot];
            chart = chart
                .with(Series::line(format!("{kind} closed form"), pts.iter().map(|p| (p.0, p.1)).collect()))
                .with(Series::scatter(format!("{kind} simulation"), pts.iter().map(|p| (p.0, p.2)).collect()));
        }
        out.chart(&format!("validate_closed_form_{kind_name}.svg"), chart);
    }
    Ok(out)
}

fn appendix_terms(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::AppendixTerms;
    let cfg = &s.system;
    let scn = geometry(cfg, s.seed(), 0, exp)?;
    let alloc = PowerAllocation::uniform(cfg, &s.nominal);
    let rng = SimRng::new(s.seed()).substream("mc-appendix", 0);
    let terms = estimate_appendix_terms(&s.experiment.precoders, &scn, &alloc, cfg, s.mc, &rng)
        .context(exp, "estimate_appendix_terms")?;
    let mut csv = with_header(AppendixTerm::CSV_HEADER);
    for t in &terms {
        csv.push_str(&t.csv_row());
        csv.push('\n');
    }
    let mut out = Output::default();
    out.csv("appendix_terms.csv", csv);
    let mut chart = Chart::new("Expectation terms: simulation against closed form", "closed form", "simulation");
    for kind in &s.experiment.precoders {
        let pts = terms.iter().filter(|t| t.kind == *kind && t.closed_form > 0.0 && t.mc.mean > 0.0);
        chart = chart
            .with(Series::scatter(kind.to_string(), pts.map(|t| (t.closed_form.log10(), t.mc.mean.log10())).collect()));
    }
    chart.x_label = "log10 closed form".into();
    chart.y_label = "log10 simulation".into();
    out.chart("appendix_terms.svg", chart);
    Ok(out)
}

/// The same users served once as unicast users and once as equal-size groups.
struct Comparison {
    unicast: (SystemConfig, Scenario, PowerAllocation),
    multicast: (SystemConfig, Scenario, PowerAllocation),
}

fn comparison(s: &Settings, antennas: usize, g: usize, exp: Experiment) -> Result<Comparison, CliError> {
    let e = &s.experiment;
    let users = e.comparison_users;
    let size = e.comparison_group_size;
    if size == 0 || !users.is_multiple_of(size) {
        return Err(CliError::config(
            "experiment",
            Error::Config(format!("comparison_users ({users}) must be a multiple of comparison_group_size ({size})")),
        ));
    }
    let groups = users / size;
    let ucfg = SystemConfig {
        antennas_per_rau: antennas,
        n_unicast: users,
        group_sizes: Vec::new(),
        pilot_length: users,
        ..s.system.clone()
    };
    let mcfg = SystemConfig { n_unicast: 0, group_sizes: vec![size; groups], pilot_length: groups, ..ucfg.clone() };
    ucfg.validate().context(exp, "config")?;
    mcfg.validate().context(exp, "config")?;
    let uscn = geometry(&ucfg, s.seed(), g, exp)?;
    let members = uscn.unicast_positions.chunks(size).map(<[Point]>::to_vec).collect();
    let mscn = Scenario::from_positions(&mcfg, uscn.rau_positions.clone(), Vec::new(), members)
        .context(exp, "from_positions")?;
    let alloc = |cfg: &SystemConfig| PowerAllocation {
        p_ul: vec![s.nominal.p_ul; cfg.n_unicast],
        q_ul: cfg.group_sizes.iter().map(|&k| vec![s.nominal.q_ul; k]).collect(),
        p_dl: vec![e.stream_power; cfg.n_unicast],
        q_dl: vec![e.stream_power; cfg.n_groups()],
        tau: cfg.pilot_length,
    };
    Ok(Comparison { unicast: (ucfg.clone(), uscn, alloc(&ucfg)), multicast: (mcfg.clone(), mscn, alloc(&mcfg)) })
}

fn unicast_vs_multicast(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::UnicastVsMulticast;
    let kinds = &s.experiment.precoders;
    let mut csv = with_header(COMPARISON_HEADER);
    let mut curves: Vec<[Vec<(f64, f64)>; 2]> = vec![Default::default(); kinds.len()];
    for &l in &s.experiment.antennas {
        let pairs = (0..s.experiment.geometries).map(|g| comparison(s, l, g, exp)).collect::<Result<Vec<_>, _>>()?;
        for (ki, &kind) in kinds.iter().enumerate() {
            let mut sums = [Vec::new(), Vec::new()];
            for (g, pair) in pairs.iter().enumerate() {
                let (ucfg, uscn, ualloc) = &pair.unicast;
                let (mcfg, mscn, malloc) = &pair.multicast;
                let ur = closed_form_report(kind, uscn, ualloc, ucfg).context(exp, "closed_form_sinr")?;
                let mr = closed_form_report(kind, mscn, malloc, mcfg).context(exp, "closed_form_sinr")?;
                let _ = writeln!(
                    csv,
                    "{kind},{l},{},{g},{:.10e},{:.10e},{:.10e}",
                    ucfg.total_antennas(),
                    ur.mean_unicast_se(),
                    mr.mean_multicast_se(),
                    mr.min_multicast_se()
                );
                sums[0].push(ur.mean_unicast_se());
                sums[1].push(mr.mean_multicast_se());
            }
            let nl = (s.system.n_raus * l) as f64;
            for slot in 0..2 {
                curves[ki][slot].push((nl, mean(&sums[slot])));
            }
        }
    }
    let mut out = Output::default();
    out.csv("unicast_vs_multicast.csv", csv);
    let mut chart = Chart::new("Per-user SE: multicast against unicast", "total antennas NL", "SE (bit/s/Hz)");
    for (ki, kind) in kinds.iter().enumerate() {
        chart = chart
            .with(Series::line(format!("{kind} unicast"), curves[ki][0].clone()))
            .with(Series::line(format!("{kind} multicast"), curves[ki][1].clone()));
    }
    out.chart("unicast_vs_multicast.svg", chart);
    Ok(out)
}

fn all_sinr(r: &SeReport) -> Vec<f64> {
    r.sinr_unicast.iter().chain(r.sinr_multicast.iter().flatten()).copied().collect()
}

fn all_se(r: &SeReport) -> Vec<f64> {
    r.se_unicast.iter().chain(r.se_multicast.iter().flatten()).copied().collect()
}

fn sweep_t(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::SweepT;
    let e = &s.experiment;
    let pairs =
        (0..e.geometries).map(|g| comparison(s, s.system.antennas_per_rau, g, exp)).collect::<Result<Vec<_>, _>>()?;
    let mut csv = with_header(SWEEP_T_HEADER);
    let mut sinr_csv = with_header(SWEEP_T_SINR_HEADER);
    let mut chart = Chart::new("Mean SE against coherence length", "coherence length T", "SE (bit/s/Hz)");
    for &kind in &e.precoders {
        for mode in ["unicast", "multicast"] {
            let setups: Vec<_> =
                pairs.iter().map(|p| if mode == "unicast" { &p.unicast } else { &p.multicast }).collect();
            let tau = setups[0].2.tau;
            if e.t_max < tau {
                return Err(CliError::config(
                    "experiment",
                    Error::Config(format!("t_max ({}) is below the {mode} pilot length {tau}", e.t_max)),
                ));
            }
            let mut curve = Vec::new();
            for t in tau..=e.t_max {
                let mut sinr = Vec::new();
                let mut se = Vec::new();
                let mut prelog = 0.0;
                for (g, (cfg, scn, alloc)) in setups.iter().enumerate() {
                    let cfg_t = SystemConfig { coherence_length: t, ..cfg.clone() };
                    let r = closed_form_report(kind, scn, alloc, &cfg_t).context(exp, "closed_form_sinr")?;
                    prelog = r.prelog;
                    if t == e.t_max {
                        for (u, v) in all_sinr(&r).iter().enumerate() {
                            let _ = writeln!(sinr_csv, "{kind},{mode},{g},{u},{v:.10e}");
                        }
                    }
                    sinr.extend(all_sinr(&r));
                    se.extend(all_se(&r));
                }
                let mean_se = mean(&se);
                let _ = writeln!(csv, "{kind},{mode},{t},{tau},{prelog:.10e},{:.10e},{mean_se:.10e}", mean(&sinr));
                curve.push((t as f64, mean_se));
            }
            chart = chart.with(Series::line(format!("{kind} {mode}"), curve));
        }
    }
    let mut out = Output::default();
    out.csv("sweep_T.csv", csv);
    out.csv("sweep_T_sinr.csv", sinr_csv);
    out.chart("sweep_T.svg", chart);
    Ok(out)
}

fn distributed_vs_centralized(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::DistributedVsCentralized;
    let kinds = &s.experiment.precoders;
    let mut csv = with_header(CENTRALIZED_HEADER);
    let mut curves: Vec<[Vec<(f64, f64)>; 2]> = vec![Default::default(); kinds.len()];
    for &l in &s.experiment.antennas {
        let cfg = antenna_config(&s.system, l, exp)?;
        let ccfg = SystemConfig { n_raus: 1, antennas_per_rau: cfg.total_antennas(), ..cfg.clone() };
        ccfg.validate().context(exp, "config")?;
        let alloc = PowerAllocation::uniform(&cfg, &s.nominal);
        let mut setups = Vec::new();
        for g in 0..s.experiment.geometries {
            let scn = geometry(&cfg, s.seed(), g, exp)?;
            let cscn = Scenario::from_positions(
                &ccfg,
                vec![Point::new(0.0, 0.0)],
                scn.unicast_positions.clone(),
                scn.multicast_positions.clone(),
            )
            .context(exp, "from_positions")?;
            setups.push((scn, cscn));
        }
        for (ki, &kind) in kinds.iter().enumerate() {
            let mut means = [Vec::new(), Vec::new()];
            for (g, (scn, cscn)) in setups.iter().enumerate() {
                let d = closed_form_report(kind, scn, &alloc, &cfg).context(exp, "closed_form_sinr")?;
                let c = closed_form_report(kind, cscn, &alloc, &ccfg).context(exp, "closed_form_sinr")?;
                let _ = writeln!(
                    csv,
                    "{kind},{l},{},{g},{:.10e},{:.10e},{:.10e},{:.10e}",
                    cfg.total_antennas(),
                    d.mean_multicast_se(),
                    c.mean_multicast_se(),
                    d.mean_unicast_se(),
                    c.mean_unicast_se()
                );
                means[0].push(d.mean_multicast_se());
                means[1].push(c.mean_multicast_se());
            }
            let nl = cfg.total_antennas() as f64;
            for slot in 0..2 {
                curves[ki][slot].push((nl, mean(&means[slot])));
            }
        }
    }
    let mut out = Output::default();
    out.csv("distributed_vs_centralized.csv", csv);
    let mut chart = Chart::new("Multicast SE: distributed against centralized", "total antennas NL", "SE (bit/s/Hz)");
    for (ki, kind) in kinds.iter().enumerate() {
        chart = chart
            .with(Series::line(format!("{kind} distributed"), curves[ki][0].clone()))
            .with(Series::line(format!("{kind} centralized"), curves[ki][1].clone()));
    }
    out.chart("distributed_vs_centralized.svg", chart);
    Ok(out)
}

fn sweep_multicast_power(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::SweepMulticastPower;
    let e = &s.experiment;
    let powers = e.multicast_powers();
    let mut csv = with_header(POWER_SWEEP_HEADER);
    let mut out = Output::default();
    for (ni, &noise) in e.noise_levels.iter().enumerate() {
        let cfg = SystemConfig { noise_ul: noise, noise_dl: noise, ..s.system.clone() };
        cfg.validate().context(exp, "config")?;
        let scenarios = (0..e.geometries).map(|g| geometry(&cfg, s.seed(), g, exp)).collect::<Result<Vec<_>, _>>()?;
        let mut chart = Chart::new(
            format!("SE against multicast power, noise {noise} W"),
            "multicast downlink power (W)",
            "SE (bit/s/Hz)",
        );
        for &kind in &e.precoders {
            let mut unicast_curve = Vec::new();
            let mut multicast_curve = Vec::new();
            for &q in &powers {
                let alloc =
                    PowerAllocation { q_dl: vec![q; cfg.n_groups()], ..PowerAllocation::uniform(&cfg, &s.nominal) };
                let mut stats = [Vec::new(), Vec::new(), Vec::new()];
                for scn in &scenarios {
                    let r = closed_form_report(kind, scn, &alloc, &cfg).context(exp, "closed_form_sinr")?;
                    stats[0].push(r.mean_unicast_se());
                    stats[1].push(r.min_multicast_se());
                    stats[2].push(r.mean_multicast_se());
                }
                let [u, mn, mm] = [mean(&stats[0]), mean(&stats[1]), mean(&stats[2])];
                let _ = writeln!(csv, "{kind},{noise:.10e},{q:.10e},{u:.10e},{mn:.10e},{mm:.10e}");
                unicast_curve.push((q, u));
                multicast_curve.push((q, mm));
            }
            chart = chart
                .with(Series::line(format!("{kind} unicast"), unicast_curve))
                .with(Series::line(format!("{kind} multicast"), multicast_curve));
        }
        out.chart(&format!("sweep_multicast_power_{ni}.svg"), chart);
    }
    out.files.insert(0, Artifact::text("sweep_multicast_power.csv", csv));
    Ok(out)
}

fn pareto(s: &Settings) -> Result<Output, CliError> {
    let exp = Experiment::Pareto;
    let cfg = &s.system;
    let scn = geometry(cfg, s.seed(), 0, exp)?;
    let n_genes = PowerAllocation::gene_len(cfg);
    let mut front_csv = format!("precoder,{}\n", ParetoFront::csv_header(n_genes));
    let mut hv_csv = with_header(HYPERVOLUME_HEADER);
    let mut summary = with_header(PARETO_SUMMARY_HEADER);
    let mut chart = Chart::new("Pareto front", "min multicast SE f1", "mean unicast SE f2");
    for (ki, &kind) in s.experiment.precoders.iter().enumerate() {
        let rng = SimRng::new(s.seed()).substream("nsga2", ki as u64);
        let res = run_nsga2(kind, &scn, cfg, &s.limits, &s.nsga2, &rng).context(exp, "run_nsga2")?;
        for line in res.front.csv_rows().lines() {
            let _ = writeln!(front_csv, "{kind},{line}");
        }
        for (g, (a, p)) in res.hypervolume_history.iter().zip(&res.population_hypervolume).enumerate() {
            let _ = writeln!(hv_csv, "{kind},{g},{a:.10e},{p:.10e}");
        }
        let (b1, b2) = res.front.best_sum().map_or((f64::NAN, f64::NAN), |p| (p.f1, p.f2));
        let _ = writeln!(
            summary,
            "{kind},{},{},{:.10e},{b1:.10e},{b2:.10e},{}",
            res.front.len(),
            res.front.feasible,
            res.front.hypervolume(),
            res.evaluations
        );
        chart = chart.with(Series::scatter(kind.to_string(), res.front.points.iter().map(|p| (p.f1, p.f2)).collect()));
    }
    let mut out = Output::default();
    out.csv("pareto_front.csv", front_csv);
    out.csv("pareto_hypervolume.csv", hv_csv);
    out.csv("pareto_summary.csv", summary);
    out.chart("pareto_front.svg", chart);
    Ok(out)
}

struct Trained {
    cfg: SystemConfig,
    limits: PowerLimits,
    result: TrainResult,
    train_ms: f64,
}

fn train_allocator(s: &Settings, exp: Experiment) -> Result<Trained, CliError> {
    let cfg = s.dnn.system(&s.system).context(exp, "config")?;
    let limits = s.dnn.limits(&s.limits);
    let sampler = |rng: &mut SimRng| place_uniform(&cfg, rng);
    let rng = SimRng::new(s.seed()).substream("dnn", 0);
    let start = Instant::now();
    let result = dnn::train(s.dnn.precoder, &cfg, &limits, &sampler, &s.dnn.train, &rng).context(exp, "train")?;
    let train_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(Trained { cfg, limits, result, train_ms })
}

fn training_artifacts(out: &mut Output, s: &Settings, t: &Trained, timings: bool) {
    let r = &t.result;
    out.csv("dnn_train_log.csv", r.log_csv(timings));
    out.files.push(Artifact::binary("dnn_model.bin", r.allocator.to_bytes()));
    let mut summary = with_header(DNN_SUMMARY_HEADER);
    let _ = writeln!(
        summary,
        "{},{},{},{:.10e},{}",
        s.dnn.precoder,
        r.allocator.net.n_params(),
        r.best_iter,
        r.best_val_loss,
        ms(timings, t.train_ms)
    );
    out.csv("dnn_summary.csv", summary);
    let train: Vec<(f64, f64)> = r.log.iter().map(|row| (row.iter as f64, row.train_loss)).collect();
    let val: Vec<(f64, f64)> = r.log.iter().filter_map(|row| row.val_loss.map(|v| (row.iter as f64, v))).collect();
    out.chart(
        "dnn_train_loss.svg",
        Chart::new("Training loss", "iteration", "loss")
            .with(Series::line("batch", train))
            .with(Series::line("validation", val)),
    );
}

fn dnn_train(s: &Settings, opts: RunOptions) -> Result<Output, CliError> {
    let trained = train_allocator(s, Experiment::DnnTrain)?;
    let mut out = Output::default();
    training_artifacts(&mut out, s, &trained, opts.record_timings);
    Ok(out)
}

/// Pilots at their caps and the downlink budget split evenly over the streams.
pub fn uniform_split(cfg: &SystemConfig, limits: &PowerLimits) -> PowerAllocation {
    let share = limits.p_dl / cfg.n_streams() as f64;
    PowerAllocation {
        p_ul: vec![limits.p_ul_un; cfg.n_unicast],
        q_ul: cfg.group_sizes.iter().map(|&k| vec![limits.p_ul_mu; k]).collect(),
        p_dl: vec![share.min(limits.p_dl_un / cfg.n_unicast.max(1) as f64); cfg.n_unicast],
        q_dl: vec![share.min(limits.p_dl_mu / cfg.n_groups().max(1) as f64); cfg.n_groups()],
        tau: cfg.n_streams(),
    }
}

fn dnn_vs_nsga2(s: &Settings, opts: RunOptions) -> Result<Output, CliError> {
    let exp = Experiment::DnnVsNsga2;
    let timings = opts.record_timings;
    let t = train_allocator(s, exp)?;
    let kind = s.dnn.precoder;
    let (cfg, limits) = (&t.cfg, &t.limits);
    let allocator = &t.result.allocator;
    let root = SimRng::new(s.seed());
    let mut csv = with_header(DNN_VS_NSGA2_HEADER);
    let (mut ratios, mut uniform_ratios, mut dnn_ms, mut nsga_ms) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut bars = (Vec::new(), Vec::new());
    for i in 0..s.dnn.test_scenarios {
        let scn = place_uniform(cfg, &mut root.substream("dnn-test", i as u64)).context(exp, "place_uniform")?;
        let start = Instant::now();
        let alloc = allocator.allocate(&scn, cfg).context(exp, "allocate")?;
        let d_ms = start.elapsed().as_secs_f64() * 1e3;
        let dnn_sum = dnn::sum_objective(kind, &scn, cfg, &alloc).context(exp, "sum_objective")?;

        let start = Instant::now();
        let res = run_nsga2(kind, &scn, cfg, limits, &s.nsga2, &root.substream("dnn-nsga2", i as u64))
            .context(exp, "run_nsga2")?;
        let n_ms = start.elapsed().as_secs_f64() * 1e3;
        let best = res.front.best_sum().filter(|_| res.front.feasible).ok_or_else(|| CliError::Runtime {
            experiment: exp.to_string(),
            op: "run_nsga2".into(),
            source: Error::Parameter("no feasible point found".into()),
        })?;
        let nsga_sum = best.f1 + best.f2;
        let uniform_sum =
            dnn::sum_objective(kind, &scn, cfg, &uniform_split(cfg, limits)).context(exp, "sum_objective")?;
        let ratio = dnn_sum / nsga_sum;
        let _ = writeln!(
            csv,
            "{i},{dnn_sum:.10e},{nsga_sum:.10e},{uniform_sum:.10e},{ratio:.10e},{},{}",
            ms(timings, d_ms),
            ms(timings, n_ms)
        );
        ratios.push(ratio);
        uniform_ratios.push(uniform_sum / nsga_sum);
        dnn_ms.push(d_ms);
        nsga_ms.push(n_ms);
        bars.0.push((i as f64, dnn_sum));
        bars.1.push((i as f64, nsga_sum));
    }
    let mut summary = with_header(DNN_VS_NSGA2_SUMMARY_HEADER);
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let _ = writeln!(
        summary,
        "{},{:.10e},{min_ratio:.10e},{:.10e},{},{},{}",
        ratios.len(),
        mean(&ratios),
        mean(&uniform_ratios),
        ms(timings, t.train_ms),
        ms(timings, mean(&dnn_ms)),
        ms(timings, mean(&nsga_ms))
    );
    let mut out = Output::default();
    out.csv("dnn_vs_nsga2.csv", csv);
    out.csv("dnn_vs_nsga2_summary.csv", summary);
    training_artifacts(&mut out, s, &t, timings);
    out.chart(
        "dnn_vs_nsga2.svg",
        Chart::new("Sum objective per test scenario", "scenario", "mean unicast SE + min multicast SE")
            .with(Series::scatter("DNN", bars.0))
            .with(Series::scatter("NSGA-II best sum", bars.1)),
    );
    Ok(out)
}
