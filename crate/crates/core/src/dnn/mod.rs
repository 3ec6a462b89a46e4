//! Unsupervised neural power allocator: large-scale gains in, a power
//! allocation out, trained to maximize the closed-form rate objective.

mod mlp;
mod model_file;
mod train;

pub use mlp::{Activation, Adam, AdamSettings, ForwardCache, Mlp, MlpGrad};
pub use model_file::MODEL_MAGIC;
pub use train::{train, TrainConfig, TrainLogRow, TrainResult, TRAIN_LOG_HEADER};

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::precoding::PrecoderKind;
use crate::scenario::{PowerAllocation, PowerLimits, Scenario, SystemConfig};
use crate::spectral::{closed_form_report, sinr_jacobian};

/// Shape and budgets of the grouped-softmax output layer.
///
/// Outputs are ordered `p_dl (U) ∥ q_dl (M) ∥ p_ul (U) ∥ q_ul (sum K_m)`: the
/// first `U + M` share the downlink budget, the rest share the uplink budget.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputLayout {
    pub n_unicast: usize,
    pub group_sizes: Vec<usize>,
    pub p_dl_total: f64,
    /// Per-user pilot power caps, unicast users first.
    pub p_ul_caps: Vec<f64>,
}

/// Output of the grouped softmax with what its backward pass needs.
#[derive(Debug, Clone)]
pub struct LayerOutput {
    pub powers: Vec<f64>,
    /// Softmax restricted to the unclipped entries of each group.
    weights: Vec<f64>,
    clipped: Vec<bool>,
    /// Budget shared by the unclipped uplink entries.
    ul_budget: f64,
}

impl OutputLayout {
    pub fn new(cfg: &SystemConfig, limits: &PowerLimits) -> Self {
        let mut p_ul_caps = vec![limits.p_ul_un; cfg.n_unicast];
        p_ul_caps.extend(std::iter::repeat_n(limits.p_ul_mu, cfg.n_multicast_users()));
        Self { n_unicast: cfg.n_unicast, group_sizes: cfg.group_sizes.clone(), p_dl_total: limits.p_dl, p_ul_caps }
    }

    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn downlink_len(&self) -> usize {
        self.n_unicast + self.n_groups()
    }

    pub fn n_outputs(&self) -> usize {
        self.downlink_len() + self.p_ul_caps.len()
    }

    /// Uplink budget: the sum of the per-user caps.
    pub fn p_ul_total(&self) -> f64 {
        self.p_ul_caps.iter().sum()
    }

    pub fn check_config(&self, cfg: &SystemConfig) -> Result<()> {
        if self.n_unicast != cfg.n_unicast || self.group_sizes != cfg.group_sizes {
            return Err(Error::Config(format!(
                "allocator was built for U={} groups={:?}, configuration has U={} groups={:?}",
                self.n_unicast, self.group_sizes, cfg.n_unicast, cfg.group_sizes
            )));
        }
        Ok(())
    }

    /// Softmax per group scaled by its budget. Uplink entries above their cap
    /// are clipped and the excess is shared among the rest in proportion to
    /// their softmax weight, repeated until no entry exceeds its cap.
    pub fn apply(&self, logits: &[f64]) -> Result<LayerOutput> {
        if logits.len() != self.n_outputs() {
            return Err(Error::Parameter(format!(
                "output layer expects {} logits, got {}",
                self.n_outputs(),
                logits.len()
            )));
        }
        let split = self.downlink_len();
        let mut weights = softmax(&logits[..split]);
        let mut powers: Vec<f64> = weights.iter().map(|w| self.p_dl_total * w).collect();
        let mut clipped = vec![false; logits.len()];

        let ul = softmax(&logits[split..]);
        let mut active = vec![true; ul.len()];
        let mut budget = self.p_ul_total();
        let mut ul_powers = vec![0.0; ul.len()];
        loop {
            let mass: f64 = ul.iter().zip(&active).filter(|(_, a)| **a).map(|(s, _)| s).sum();
            let mut changed = false;
            for i in 0..ul.len() {
                if !active[i] {
                    continue;
                }
                let p = budget * ul[i] / mass;
                if p > self.p_ul_caps[i] {
                    active[i] = false;
                    ul_powers[i] = self.p_ul_caps[i];
                    budget = (budget - self.p_ul_caps[i]).max(0.0);
                    changed = true;
                }
            }
            if !changed {
                for i in (0..ul.len()).filter(|&i| active[i]) {
                    ul_powers[i] = budget * ul[i] / mass;
                }
                for i in 0..ul.len() {
                    clipped[split + i] = !active[i];
                    weights.push(if active[i] { ul[i] / mass } else { 0.0 });
                }
                break;
            }
        }
        powers.extend(ul_powers);
        Ok(LayerOutput { powers, weights, clipped, ul_budget: budget })
    }

    /// `d loss / d logits` from `d loss / d powers`. Clipped entries are
    /// constant and receive no gradient.
    pub fn backward(&self, out: &LayerOutput, d_powers: &[f64]) -> Vec<f64> {
        let split = self.downlink_len();
        let mut d = vec![0.0; d_powers.len()];
        for (range, budget) in [(0..split, self.p_dl_total), (split..d_powers.len(), out.ul_budget)] {
            let dot: f64 = range.clone().filter(|&i| !out.clipped[i]).map(|i| out.weights[i] * d_powers[i]).sum();
            for i in range.filter(|&i| !out.clipped[i]) {
                d[i] = budget * out.weights[i] * (d_powers[i] - dot);
            }
        }
        d
    }

    /// Reorders powers into genes `p_ul ∥ q_ul ∥ p_dl ∥ q_dl`.
    pub fn powers_to_genes(&self, powers: &[f64]) -> Vec<f64> {
        let (u, split) = (self.n_unicast, self.downlink_len());
        let mut genes = powers[split..].to_vec();
        genes.extend_from_slice(&powers[..u]);
        genes.extend_from_slice(&powers[u..split]);
        genes
    }

    /// Inverse of [`OutputLayout::powers_to_genes`].
    pub fn genes_to_powers(&self, genes: &[f64]) -> Vec<f64> {
        let n_ul = self.p_ul_caps.len();
        let mut powers = genes[n_ul..].to_vec();
        powers.extend_from_slice(&genes[..n_ul]);
        powers
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    softmax_of(z).collect()
}

fn softmax_of(z: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = z.iter().map(|v| (v - max).exp()).sum();
    z.iter().map(move |v| (v - max).exp() / total)
}

/// Per-feature standardization of log10 gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let first =
            samples.first().ok_or_else(|| Error::Parameter("cannot fit a normalizer on zero samples".into()))?;
        let n = samples.len() as f64;
        let dim = first.len();
        let mut mean = vec![0.0; dim];
        for s in samples {
            mean.iter_mut().zip(s).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; dim];
        for s in samples {
            var.iter_mut().zip(s.iter().zip(&mean)).for_each(|(a, (v, m))| *a += (v - m).powi(2) / n);
        }
        let std = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// Network input before standardization: log10 of `beta ∥ eta`.
pub fn log_gain_features(scn: &Scenario) -> Vec<f64> {
    scn.flat_gains().into_iter().map(|g| g.max(f64::MIN_POSITIVE).log10()).collect()
}

/// Loss of one scenario, `-(mean unicast rate + min multicast rate)` without
/// prelog, and its gradient with respect to the genes.
///
/// With `smooth_min = Some(t)` the minimum is replaced by `-t ln sum exp(-r/t)`.
/// Otherwise ties in the minimum go to the lowest `(m, k)`.
pub fn rate_loss(
    kind: PrecoderKind,
    scn: &Scenario,
    cfg: &SystemConfig,
    alloc: &PowerAllocation,
    smooth_min: Option<f64>,
) -> Result<(f64, Vec<f64>)> {
    let sj = sinr_jacobian(kind, scn, alloc, cfg)?;
    let u = cfg.n_unicast;
    let rate = |s: f64| (1.0 + s).log2();
    let drate = |s: f64| 1.0 / ((1.0 + s) * LN_2);
    let mut d_sinr = vec![0.0; sj.sinr.len()];
    let mut loss = 0.0;
    if u > 0 {
        for k in 0..u {
            loss -= rate(sj.sinr[k]) / u as f64;
            d_sinr[k] = -drate(sj.sinr[k]) / u as f64;
        }
    }
    let multicast = &sj.sinr[u..];
    if !multicast.is_empty() {
        let rates: Vec<f64> = multicast.iter().map(|&s| rate(s)).collect();
        let (argmin, min) =
            rates.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &r)| if r < acc.1 { (i, r) } else { acc });
        match smooth_min {
            None => {
                loss -= min;
                d_sinr[u + argmin] = -drate(multicast[argmin]);
            }
            Some(t) => {
                let weights: Vec<f64> = rates.iter().map(|r| (-(r - min) / t).exp()).collect();
                let total: f64 = weights.iter().sum();
                loss -= min - t * total.ln();
                for (i, w) in weights.iter().enumerate() {
                    d_sinr[u + i] = -w / total * drate(multicast[i]);
                }
            }
        }
    }
    let jac = &sj.jacobian;
    let d_genes = (0..jac.cols()).map(|g| (0..jac.rows()).map(|r| d_sinr[r] * jac.get(r, g)).sum()).collect();
    Ok((loss, d_genes))
}

/// `mean unicast SE + min multicast SE`, the scalar compared against NSGA-II.
pub fn sum_objective(kind: PrecoderKind, scn: &Scenario, cfg: &SystemConfig, alloc: &PowerAllocation) -> Result<f64> {
    let r = closed_form_report(kind, scn, alloc, cfg)?;
    Ok(r.mean_unicast_se() + r.min_multicast_se())
}

/// Trained network with its input standardization and output layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocator {
    pub net: Mlp,
    pub normalizer: Normalizer,
    pub layout: OutputLayout,
}

impl Allocator {
    pub fn new(net: Mlp, normalizer: Normalizer, layout: OutputLayout) -> Result<Self> {
        net.validate()?;
        if normalizer.mean.len() != net.n_inputs() || normalizer.std.len() != net.n_inputs() {
            return Err(Error::Parameter("normalizer does not match the input width".into()));
        }
        if layout.n_outputs() != net.n_outputs() {
            return Err(Error::Parameter(format!(
                "network has {} outputs, layout needs {}",
                net.n_outputs(),
                layout.n_outputs()
            )));
        }
        Ok(Self { net, normalizer, layout })
    }

    /// Network input length `N (U + sum K_m)`.
    pub fn input_len(cfg: &SystemConfig) -> usize {
        cfg.n_raus * (cfg.n_unicast + cfg.n_multicast_users())
    }

    pub fn powers(&self, scn: &Scenario) -> Result<LayerOutput> {
        let x = self.normalizer.apply(&log_gain_features(scn));
        self.layout.apply(&self.net.forward(&x)?)
    }

    pub fn allocate(&self, scn: &Scenario, cfg: &SystemConfig) -> Result<PowerAllocation> {
        self.layout.check_config(cfg)?;
        let out = self.powers(scn)?;
        PowerAllocation::from_genes(cfg, &self.layout.powers_to_genes(&out.powers), cfg.n_streams())
    }

    pub fn loss(&self, kind: PrecoderKind, scn: &Scenario, cfg: &SystemConfig, smooth_min: Option<f64>) -> Result<f64> {
        let alloc = self.allocate(scn, cfg)?;
        Ok(rate_loss(kind, scn, cfg, &alloc, smooth_min)?.0)
    }

    /// Loss of one scenario and its gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        kind: PrecoderKind,
        scn: &Scenario,
        cfg: &SystemConfig,
        smooth_min: Option<f64>,
    ) -> Result<(f64, MlpGrad)> {
        self.layout.check_config(cfg)?;
        let x = self.normalizer.apply(&log_gain_features(scn));
        let cache = self.net.forward_cached(&x)?;
        let out = self.layout.apply(cache.logits())?;
        let genes = self.layout.powers_to_genes(&out.powers);
        let alloc = PowerAllocation::from_genes(cfg, &genes, cfg.n_streams())?;
        let (loss, d_genes) = rate_loss(kind, scn, cfg, &alloc, smooth_min)?;
        let d_logits = self.layout.backward(&out, &self.layout.genes_to_powers(&d_genes));
        let mut grad = MlpGrad::zeros_like(&self.net);
        self.net.backward(&cache, &d_logits, &mut grad);
        Ok((loss, grad))
    }

    /// Human-readable summary for model inspection.
    pub fn describe(&self) -> String {
        let acts: Vec<&str> = self
            .net
            .activations
            .iter()
            .map(|a| match a {
                Activation::Relu => "relu",
                Activation::Identity => "identity",
            })
            .collect();
        format!(
            "widths: {:?}\nactivations: {:?}\nparameters: {}\nunicast users: {}\ngroup sizes: {:?}\ndownlink budget: {} W\nuplink caps: {:?}\n",
            self.net.widths,
            acts,
            self.net.n_params(),
            self.layout.n_unicast,
            self.layout.group_sizes,
            self.layout.p_dl_total,
            self.layout.p_ul_caps,
        )
    }
}
