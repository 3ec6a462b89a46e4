use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use super::{log_gain_features, Adam, AdamSettings, Allocator, Mlp, MlpGrad, Normalizer, OutputLayout};
use crate::error::{Error, Result};
use crate::numerics::SimRng;
use crate::precoding::PrecoderKind;
use crate::scenario::{PowerLimits, Scenario, SystemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamSettings,
    /// Mini-batch size `s`.
    pub batch_size: usize,
    /// Number of iterations `t`.
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub validation_size: usize,
    /// Validation loss is computed every this many iterations.
    pub validation_every: usize,
    /// Scenarios drawn to fit the input standardization.
    pub normalization_samples: usize,
    /// Temperature of the soft minimum; `None` uses the exact minimum.
    pub smooth_min: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamSettings::default(),
            batch_size: 128,
            iterations: 1000,
            hidden: vec![128, 128, 128],
            validation_size: 64,
            validation_every: 25,
            normalization_samples: 512,
            smooth_min: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        if !(a.beta1 > 0.0 && a.beta1 < 1.0 && a.beta2 > 0.0 && a.beta2 < 1.0) {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        if !(a.learning_rate > 0.0) || !(a.epsilon > 0.0) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        if self.batch_size == 0 || self.validation_size == 0 || self.validation_every == 0 {
            return Err(Error::Config("batch size, validation size and validation interval must be at least 1".into()));
        }
        if self.normalization_samples == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths and normalization samples must be positive".into()));
        }
        if self.smooth_min.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("soft-min temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRow {
    pub iter: usize,
    /// Batch loss at the parameters before this iteration's update.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_ms: f64,
}

pub const TRAIN_LOG_HEADER: &str = "iter,train_loss,val_loss,wall_ms";

#[derive(Debug, Clone)]
pub struct TrainResult {
    /// Parameters with the lowest validation loss.
    pub allocator: Allocator,
    pub best_val_loss: f64,
    pub best_iter: usize,
    pub log: Vec<TrainLogRow>,
}

impl TrainResult {
    /// Log rows; `wall_ms` is `NA` unless `timings` is set, so that the file
    /// stays reproducible.
    pub fn log_csv(&self, timings: bool) -> String {
        let mut out = String::from(TRAIN_LOG_HEADER);
        out.push('\n');
        for row in &self.log {
            let val = row.val_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
            let wall = if timings { format!("{:.3}", row.wall_ms) } else { "NA".into() };
            let _ = writeln!(out, "{},{:.10e},{},{}", row.iter, row.train_loss, val, wall);
        }
        out
    }
}

fn mean_loss(
    alloc: &Allocator,
    kind: PrecoderKind,
    set: &[Scenario],
    cfg: &SystemConfig,
    smooth: Option<f64>,
) -> Result<f64> {
    let losses = set.par_iter().map(|s| alloc.loss(kind, s, cfg, smooth)).collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

fn draw(
    sampler: &(dyn Fn(&mut SimRng) -> Result<Scenario> + Sync),
    rng: &SimRng,
    label: &str,
    count: usize,
) -> Result<Vec<Scenario>> {
    (0..count).map(|i| sampler(&mut rng.substream(label, i as u64))).collect()
}

/// Trains an allocator with Adam on i.i.d. scenarios from `sampler` and
/// returns the parameters with the best held-out loss.
pub fn train(
    kind: PrecoderKind,
    cfg: &SystemConfig,
    limits: &PowerLimits,
    sampler: &(dyn Fn(&mut SimRng) -> Result<Scenario> + Sync),
    tc: &TrainConfig,
    rng: &SimRng,
) -> Result<TrainResult> {
    tc.validate()?;
    limits.validate()?;
    let start = Instant::now();
    let layout = OutputLayout::new(cfg, limits);
    let features: Vec<Vec<f64>> =
        draw(sampler, rng, "dnn-normalizer", tc.normalization_samples)?.iter().map(log_gain_features).collect();
    let normalizer = Normalizer::fit(&features)?;
    let mut widths = vec![Allocator::input_len(cfg)];
    widths.extend(&tc.hidden);
    widths.push(layout.n_outputs());
    let net = Mlp::new(&widths, &mut rng.substream("dnn-init", 0))?;
    let mut current = Allocator::new(net, normalizer, layout)?;
    let validation = draw(sampler, rng, "dnn-validation", tc.validation_size)?;

    let mut adam = Adam::new(tc.adam, current.net.n_params());
    let mut best = current.clone();
    let mut best_val = f64::INFINITY;
    let mut best_iter = 0;
    let mut log = Vec::with_capacity(tc.iterations);

    for it in 0..=tc.iterations {
        let validate_now = it % tc.validation_every == 0 || it == tc.iterations;
        let val_loss = if validate_now {
            let v = mean_loss(&current, kind, &validation, cfg, tc.smooth_min)?;
            if !v.is_finite() {
                return Err(Error::Divergence { iteration: it });
            }
            if v < best_val {
                best_val = v;
                best_iter = it;
                best = current.clone();
            }
            Some(v)
        } else {
            None
        };
        if it == tc.iterations {
            break;
        }
        let batch = draw(sampler, &rng.substream("dnn-batch", it as u64), "item", tc.batch_size)?;
        let parts =
            batch.par_iter().map(|s| current.loss_and_grad(kind, s, cfg, tc.smooth_min)).collect::<Result<Vec<_>>>()?;
        let mut grad = MlpGrad::zeros_like(&current.net);
        let mut loss = 0.0;
        for (l, g) in &parts {
            loss += l;
            grad.add(g);
        }
        let scale = 1.0 / tc.batch_size as f64;
        loss *= scale;
        grad.scale(scale);
        if !loss.is_finite() || !grad.flat().iter().all(|g| g.is_finite()) {
            return Err(Error::Divergence { iteration: it });
        }
        adam.update(&mut current.net, &grad);
        if current.net.validate().is_err() {
            return Err(Error::Divergence { iteration: it });
        }
        log.push(TrainLogRow { iter: it, train_loss: loss, val_loss, wall_ms: start.elapsed().as_secs_f64() * 1e3 });
    }
    Ok(TrainResult { allocator: best, best_val_loss: best_val, best_iter, log })
}
