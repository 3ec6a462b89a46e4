//! Monte Carlo estimation of the downlink SINR and of each expectation that
//! enters the closed-form analysis.
//!
//! Realization `r` always draws from substream `("mc", r)` of the base seed and
//! realizations are grouped in fixed batches merged in batch order, so results
//! do not depend on the number of worker threads.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::{draw_sample_pilot, draw_sample_statistical, equivalent_gains, ChannelSample, EquivalentGains};
use crate::error::{Error, Result};
use crate::numerics::{inner, CVector, Complex64, SimRng};
use crate::precoding::{build_precoders, PrecoderKind};
use crate::scenario::{PowerAllocation, Scenario, SystemConfig};
use crate::spectral::j_factor;

/// Realizations per work unit.
pub const BATCH_SIZE: usize = 32;
pub const MIN_REALIZATIONS: usize = 100;
const Z95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Statistical,
    Pilot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Receiver {
    Unicast(usize),
    Multicast(usize, usize),
}

impl Receiver {
    pub fn label(&self) -> String {
        match self {
            Receiver::Unicast(k) => format!("un{k}"),
            Receiver::Multicast(m, k) => format!("mu{m}.{k}"),
        }
    }
}

/// All receivers in report order: unicast users, then each group's users.
pub fn receivers(cfg: &SystemConfig) -> Vec<Receiver> {
    (0..cfg.n_unicast)
        .map(Receiver::Unicast)
        .chain(cfg.group_sizes.iter().enumerate().flat_map(|(m, &k)| (0..k).map(move |k| Receiver::Multicast(m, k))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_samples: usize,
}

/// Streaming mean and centered co-moments of a fixed-size vector.
#[derive(Debug, Clone)]
struct Moments<const D: usize> {
    n: usize,
    mean: [f64; D],
    comoment: [[f64; D]; D],
}

impl<const D: usize> Moments<D> {
    fn new() -> Self {
        Self { n: 0, mean: [0.0; D], comoment: [[0.0; D]; D] }
    }

    fn push(&mut self, x: [f64; D]) {
        self.n += 1;
        let n = self.n as f64;
        let mut delta = [0.0; D];
        for i in 0..D {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
        }
        for i in 0..D {
            for j in 0..D {
                self.comoment[i][j] += delta[i] * (x[j] - self.mean[j]);
            }
        }
    }

    fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let mut delta = [0.0; D];
        for i in 0..D {
            delta[i] = other.mean[i] - self.mean[i];
        }
        for i in 0..D {
            for j in 0..D {
                self.comoment[i][j] += other.comoment[i][j] + delta[i] * delta[j] * na * nb / n;
            }
        }
        for i in 0..D {
            self.mean[i] += delta[i] * nb / n;
        }
        self.n += other.n;
    }

    /// Covariance of the sample mean.
    fn mean_covariance(&self, i: usize, j: usize) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        self.comoment[i][j] / (n - 1.0) / n
    }

    /// Delta-method 95% half-width of `f(mean)` given its gradient.
    fn delta_half_width(&self, grad: [f64; D]) -> f64 {
        let mut var = 0.0;
        for i in 0..D {
            for j in 0..D {
                var += grad[i] * grad[j] * self.mean_covariance(i, j);
            }
        }
        Z95 * var.max(0.0).sqrt()
    }

    fn estimate(&self, i: usize) -> McEstimate {
        McEstimate {
            mean: self.mean[i],
            half_width_95: Z95 * self.mean_covariance(i, i).max(0.0).sqrt(),
            n_samples: self.n,
        }
    }
}

/// Accumulators of one receiver under one precoder.
#[derive(Debug, Clone)]
struct ReceiverAcc {
    /// `(Re x, Im x, sum_j |g^H a_j|^2)` where `x = g^H a_own`.
    joint: Moments<3>,
    stream_power: Vec<Moments<1>>,
}

impl ReceiverAcc {
    fn new(streams: usize) -> Self {
        Self { joint: Moments::new(), stream_power: vec![Moments::new(); streams] }
    }

    fn merge(&mut self, other: &Self) {
        self.joint.merge(&other.joint);
        for (a, b) in self.stream_power.iter_mut().zip(&other.stream_power) {
            a.merge(b);
        }
    }
}

/// Per-receiver terms of the SINR definition.
#[derive(Debug, Clone)]
pub struct ReceiverEstimate {
    pub receiver: Receiver,
    pub signal_re: McEstimate,
    pub signal_im: McEstimate,
    /// `|E[g^H a_own]|^2`
    pub numerator: McEstimate,
    /// `E|g^H a_own|^2 - |E[g^H a_own]|^2`
    pub signal_variance: f64,
    /// `E|g^H a_j|^2` for every stream `j` (unicast streams, then groups).
    pub stream_power: Vec<McEstimate>,
    pub sinr: McEstimate,
}

#[derive(Debug, Clone)]
pub struct McSinrReport {
    pub kind: PrecoderKind,
    pub n_samples: usize,
    pub receivers: Vec<ReceiverEstimate>,
}

impl McSinrReport {
    pub fn sinr_unicast(&self) -> Vec<f64> {
        self.receivers.iter().filter(|r| matches!(r.receiver, Receiver::Unicast(_))).map(|r| r.sinr.mean).collect()
    }

    pub fn sinr_multicast(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for r in &self.receivers {
            if let Receiver::Multicast(m, _) = r.receiver {
                if out.len() <= m {
                    out.resize(m + 1, Vec::new());
                }
                out[m].push(r.sinr.mean);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub n_real: usize,
    pub sampler: Sampler,
}

impl McOptions {
    pub fn new(n_real: usize) -> Self {
        Self { n_real, sampler: Sampler::Statistical }
    }
}

fn stream_of(receiver: Receiver, n_unicast: usize) -> usize {
    match receiver {
        Receiver::Unicast(k) => k,
        Receiver::Multicast(m, _) => n_unicast + m,
    }
}

fn true_channel(sample: &ChannelSample, receiver: Receiver) -> &CVector {
    match receiver {
        Receiver::Unicast(k) => &sample.c[k],
        Receiver::Multicast(m, k) => &sample.t[m][k],
    }
}

struct Problem<'a> {
    kinds: &'a [PrecoderKind],
    scn: &'a Scenario,
    alloc: &'a PowerAllocation,
    cfg: &'a SystemConfig,
    gains: EquivalentGains,
    receivers: Vec<Receiver>,
    opts: McOptions,
}

impl Problem<'_> {
    fn run_batch(&self, base: &SimRng, batch: usize) -> Result<Vec<Vec<ReceiverAcc>>> {
        let streams = self.cfg.n_streams();
        let mut acc: Vec<Vec<ReceiverAcc>> =
            self.kinds.iter().map(|_| vec![ReceiverAcc::new(streams); self.receivers.len()]).collect();
        let start = batch * BATCH_SIZE;
        let end = (start + BATCH_SIZE).min(self.opts.n_real);
        for r in start..end {
            let mut rng = base.substream("mc", r as u64);
            let sample = match self.opts.sampler {
                Sampler::Statistical => draw_sample_statistical(self.scn, self.alloc, self.cfg, &self.gains, &mut rng)?,
                Sampler::Pilot => draw_sample_pilot(self.scn, self.alloc, self.cfg, &mut rng)?,
            };
            for (ki, &kind) in self.kinds.iter().enumerate() {
                let pre = build_precoders(kind, &sample, &self.gains, self.alloc, self.cfg)?;
                let vectors: Vec<&CVector> = pre.v.iter().chain(&pre.w).collect();
                for (ri, &receiver) in self.receivers.iter().enumerate() {
                    let g = true_channel(&sample, receiver);
                    let own = stream_of(receiver, self.cfg.n_unicast);
                    let mut total = 0.0;
                    let mut x = Complex64::new(0.0, 0.0);
                    let slot = &mut acc[ki][ri];
                    for (j, a) in vectors.iter().enumerate() {
                        let z = inner(g, a);
                        let p = z.norm_sqr();
                        total += p;
                        slot.stream_power[j].push([p]);
                        if j == own {
                            x = z;
                        }
                    }
                    slot.joint.push([x.re, x.im, total]);
                }
            }
        }
        Ok(acc)
    }

    fn finish(&self, acc: Vec<Vec<ReceiverAcc>>) -> Vec<McSinrReport> {
        let noise = self.cfg.noise_dl;
        self.kinds
            .iter()
            .zip(acc)
            .map(|(&kind, per_rx)| {
                let receivers = self
                    .receivers
                    .iter()
                    .zip(per_rx)
                    .map(|(&receiver, a)| {
                        let m = &a.joint;
                        let (re, im, d) = (m.mean[0], m.mean[1], m.mean[2]);
                        let s = re * re + im * im;
                        let den = noise - s + d;
                        let sinr = if den > 0.0 { s / den } else { 0.0 };
                        let sinr_grad = if den > 0.0 {
                            let c = 2.0 * (den + s) / (den * den);
                            [c * re, c * im, -s / (den * den)]
                        } else {
                            [0.0; 3]
                        };
                        let own = stream_of(receiver, self.cfg.n_unicast);
                        ReceiverEstimate {
                            receiver,
                            signal_re: m.estimate(0),
                            signal_im: m.estimate(1),
                            numerator: McEstimate {
                                mean: s,
                                half_width_95: m.delta_half_width([2.0 * re, 2.0 * im, 0.0]),
                                n_samples: m.n,
                            },
                            signal_variance: a.stream_power[own].mean[0] - s,
                            stream_power: a.stream_power.iter().map(|p| p.estimate(0)).collect(),
                            sinr: McEstimate {
                                mean: sinr,
                                half_width_95: m.delta_half_width(sinr_grad),
                                n_samples: m.n,
                            },
                        }
                    })
                    .collect();
                McSinrReport { kind, n_samples: self.opts.n_real, receivers }
            })
            .collect()
    }
}

/// Estimates the SINR of every receiver for each precoder in `kinds`, sharing
/// channel draws across precoders.
pub fn estimate_sinr_multi(
    kinds: &[PrecoderKind],
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    opts: McOptions,
    rng: &SimRng,
) -> Result<Vec<McSinrReport>> {
    if opts.n_real < MIN_REALIZATIONS {
        return Err(Error::Parameter(format!(
            "at least {MIN_REALIZATIONS} realizations are required, got {}",
            opts.n_real
        )));
    }
    let problem =
        Problem { kinds, scn, alloc, cfg, gains: equivalent_gains(scn, alloc, cfg)?, receivers: receivers(cfg), opts };
    let n_batches = opts.n_real.div_ceil(BATCH_SIZE);
    let batches = (0..n_batches).into_par_iter().map(|b| problem.run_batch(rng, b)).collect::<Result<Vec<_>>>()?;
    let mut iter = batches.into_iter();
    let mut total = iter.next().expect("at least one batch");
    for batch in iter {
        for (ka, kb) in total.iter_mut().zip(&batch) {
            for (a, b) in ka.iter_mut().zip(kb) {
                a.merge(b);
            }
        }
    }
    Ok(problem.finish(total))
}

pub fn estimate_sinr(
    kind: PrecoderKind,
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    opts: McOptions,
    rng: &SimRng,
) -> Result<McSinrReport> {
    let mut v = estimate_sinr_multi(&[kind], scn, alloc, cfg, opts, rng)?;
    Ok(v.remove(0))
}

/// One analytically evaluated expectation next to its Monte Carlo estimate.
#[derive(Debug, Clone)]
pub struct AppendixTerm {
    pub kind: PrecoderKind,
    /// `signal`, `self`, `cross_un{u}` or `cross_mu{m}`.
    pub term: String,
    pub receiver: Receiver,
    pub mc: McEstimate,
    pub closed_form: f64,
    pub rel_err: f64,
}

impl AppendixTerm {
    pub const CSV_HEADER: &'static str = "kind,term,user,mc_mean,ci,closed_form,rel_err";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
            self.kind,
            self.term,
            self.receiver.label(),
            self.mc.mean,
            self.mc.half_width_95,
            self.closed_form,
            self.rel_err
        )
    }
}

/// Closed-form values of the signal mean and of every `E|g^H a_j|^2`.
pub struct ClosedFormTerms {
    pub signal: f64,
    pub stream_power: Vec<f64>,
}

pub fn closed_form_terms(
    kind: PrecoderKind,
    scn: &Scenario,
    gains: &EquivalentGains,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    receiver: Receiver,
) -> Result<ClosedFormTerms> {
    let j = j_factor(kind, cfg)?;
    let nl = cfg.total_antennas() as f64;
    let (own_power, equiv, large_scale) = match receiver {
        Receiver::Unicast(k) => (alloc.p_dl[k], gains.theta[k], scn.beta.column_sum(k)),
        Receiver::Multicast(m, k) => (alloc.q_dl[m], gains.zeta[m][k], scn.eta[m].column_sum(k)),
    };
    let own = stream_of(receiver, cfg.n_unicast);
    let powers = alloc.p_dl.iter().chain(&alloc.q_dl);
    let stream_power = powers
        .enumerate()
        .map(|(s, &p)| {
            let leak = p * large_scale / nl;
            if s == own {
                j * p * equiv + leak
            } else {
                leak
            }
        })
        .collect();
    Ok(ClosedFormTerms { signal: (j * own_power * equiv).sqrt(), stream_power })
}

fn rel_err(mc: f64, closed: f64) -> f64 {
    if closed != 0.0 {
        (mc - closed).abs() / closed.abs()
    } else {
        mc.abs()
    }
}

/// Monte Carlo estimate, closed form and relative error of each expectation.
pub fn estimate_appendix_terms(
    kinds: &[PrecoderKind],
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    opts: McOptions,
    rng: &SimRng,
) -> Result<Vec<AppendixTerm>> {
    let gains = equivalent_gains(scn, alloc, cfg)?;
    let reports = estimate_sinr_multi(kinds, scn, alloc, cfg, opts, rng)?;
    let mut out = Vec::new();
    for report in &reports {
        for rx in &report.receivers {
            let cf = closed_form_terms(report.kind, scn, &gains, alloc, cfg, rx.receiver)?;
            let own = stream_of(rx.receiver, cfg.n_unicast);
            let mut push = |term: String, mc: McEstimate, closed: f64| {
                out.push(AppendixTerm {
                    kind: report.kind,
                    term,
                    receiver: rx.receiver,
                    mc,
                    closed_form: closed,
                    rel_err: rel_err(mc.mean, closed),
                });
            };
            push("signal".into(), rx.signal_re, cf.signal);
            for (s, (&mc, &closed)) in rx.stream_power.iter().zip(&cf.stream_power).enumerate() {
                let term = if s == own {
                    "self".to_string()
                } else if s < cfg.n_unicast {
                    format!("cross_un{s}")
                } else {
                    format!("cross_mu{}", s - cfg.n_unicast)
                };
                push(term, mc, closed);
            }
        }
    }
    Ok(out)
}

pub const SINR_CSV_HEADER: &str = "kind,user,mc_sinr,ci,numerator,numerator_ci,signal_variance";

pub fn sinr_csv_rows(report: &McSinrReport) -> String {
    let mut out = String::new();
    for r in &report.receivers {
        let _ = writeln!(
            out,
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            report.kind,
            r.receiver.label(),
            r.sinr.mean,
            r.sinr.half_width_95,
            r.numerator.mean,
            r.numerator.half_width_95,
            r.signal_variance
        );
    }
    out
}
