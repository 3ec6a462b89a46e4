//! System configuration, user/RAU placement and large-scale fading.

mod allocation;
pub mod config;
mod io;

pub use allocation::{NominalPowers, PowerAllocation, PowerLimits};
pub use io::{read_scenario_csv, write_scenario_csv};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{RMatrix, SimRng};

/// Maximum redraws per user before a placement is declared impossible.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Scalar parameters of the deployment. Powers and noise share one linear unit (W).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub n_raus: usize,
    pub antennas_per_rau: usize,
    pub n_unicast: usize,
    /// Users per multicast group; its length is the number of groups `M`.
    pub group_sizes: Vec<usize>,
    pub path_loss_exponent: f64,
    /// Linear gain at 1 km.
    pub reference_gain: f64,
    /// Disc radius in km.
    pub area_radius: f64,
    /// Distances are clipped to at least this many km.
    pub min_distance: f64,
    pub noise_ul: f64,
    pub noise_dl: f64,
    pub coherence_length: usize,
    pub pilot_length: usize,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_raus: 5,
            antennas_per_rau: 50,
            n_unicast: 10,
            group_sizes: vec![5, 5],
            path_loss_exponent: 3.7,
            reference_gain: 1.0,
            area_radius: 1.0,
            min_distance: 0.03,
            noise_ul: 0.015,
            noise_dl: 0.015,
            coherence_length: 196,
            pilot_length: 12,
            rng_seed: 1,
        }
    }
}

impl SystemConfig {
    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn n_multicast_users(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    /// `M + U`: number of pilots / precoded streams.
    pub fn n_streams(&self) -> usize {
        self.n_unicast + self.n_groups()
    }

    /// `NL`
    pub fn total_antennas(&self) -> usize {
        self.n_raus * self.antennas_per_rau
    }

    /// `NL - M - U`, negative when the array cannot null all streams.
    pub fn zf_dimension(&self) -> i64 {
        self.total_antennas() as i64 - self.n_streams() as i64
    }

    /// Smallest valid pilot length.
    pub fn min_pilot_length(&self) -> usize {
        self.n_streams()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_raus == 0 || self.antennas_per_rau == 0 {
            return fail("n_raus and antennas_per_rau must be at least 1".into());
        }
        if self.n_streams() == 0 {
            return fail("at least one unicast user or multicast group is required".into());
        }
        if let Some(m) = self.group_sizes.iter().position(|&k| k == 0) {
            return fail(format!("multicast group {m} is empty"));
        }
        if self.zf_dimension() <= 0 {
            return fail(format!("N*L = {} must exceed M+U = {}", self.total_antennas(), self.n_streams()));
        }
        if self.pilot_length < self.n_streams() || self.pilot_length > self.coherence_length {
            return fail(format!(
                "pilot length {} must lie in [M+U, T] = [{}, {}]",
                self.pilot_length,
                self.n_streams(),
                self.coherence_length
            ));
        }
        for (name, v) in
            [("noise_ul", self.noise_ul), ("noise_dl", self.noise_dl), ("path_loss_exponent", self.path_loss_exponent)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return fail(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("reference_gain", self.reference_gain),
            ("area_radius", self.area_radius),
            ("min_distance", self.min_distance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return fail(format!("{name} must be finite and positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `b * max(d, d_min)^-a`.
pub fn large_scale_gain(cfg: &SystemConfig, distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::Parameter(format!("distance must be positive, got {distance_km}")));
    }
    let d = distance_km.max(cfg.min_distance);
    Ok(cfg.reference_gain * d.powf(-cfg.path_loss_exponent))
}

/// Geometry plus the large-scale fading it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub rau_positions: Vec<Point>,
    pub unicast_positions: Vec<Point>,
    pub multicast_positions: Vec<Vec<Point>>,
    /// `beta[n][u]`, `N x U`.
    pub beta: RMatrix,
    /// Per group `eta[m][n][k]`, `N x K_m`.
    pub eta: Vec<RMatrix>,
}

impl Scenario {
    pub fn from_positions(
        cfg: &SystemConfig,
        raus: Vec<Point>,
        unicast: Vec<Point>,
        multicast: Vec<Vec<Point>>,
    ) -> Result<Self> {
        let gain = |p: &Point, r: &Point| large_scale_gain(cfg, p.distance(r).max(f64::MIN_POSITIVE));
        let mut beta = RMatrix::zeros(raus.len(), unicast.len());
        for (n, r) in raus.iter().enumerate() {
            for (u, p) in unicast.iter().enumerate() {
                beta.set(n, u, gain(p, r)?);
            }
        }
        let mut eta = Vec::with_capacity(multicast.len());
        for group in &multicast {
            let mut e = RMatrix::zeros(raus.len(), group.len());
            for (n, r) in raus.iter().enumerate() {
                for (k, p) in group.iter().enumerate() {
                    e.set(n, k, gain(p, r)?);
                }
            }
            eta.push(e);
        }
        Ok(Self { rau_positions: raus, unicast_positions: unicast, multicast_positions: multicast, beta, eta })
    }

    /// A scenario defined only by its gains (no geometry).
    pub fn from_gains(beta: RMatrix, eta: Vec<RMatrix>) -> Result<Self> {
        let n = beta.rows();
        if eta.iter().any(|e| e.rows() != n) {
            return Err(Error::Parameter("all gain matrices need N rows".into()));
        }
        let all_positive =
            beta.as_slice().iter().chain(eta.iter().flat_map(|e| e.as_slice())).all(|&g| g > 0.0 && g.is_finite());
        if !all_positive {
            return Err(Error::Parameter("large-scale gains must be finite and positive".into()));
        }
        Ok(Self {
            rau_positions: Vec::new(),
            unicast_positions: Vec::new(),
            multicast_positions: Vec::new(),
            beta,
            eta,
        })
    }

    pub fn n_raus(&self) -> usize {
        self.beta.rows()
    }

    pub fn n_unicast(&self) -> usize {
        self.beta.cols()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.eta.iter().map(RMatrix::cols).collect()
    }

    pub fn check_matches(&self, cfg: &SystemConfig) -> Result<()> {
        if self.n_raus() != cfg.n_raus || self.n_unicast() != cfg.n_unicast || self.group_sizes() != cfg.group_sizes {
            return Err(Error::Parameter(format!(
                "scenario shape (N={}, U={}, K={:?}) does not match configuration (N={}, U={}, K={:?})",
                self.n_raus(),
                self.n_unicast(),
                self.group_sizes(),
                cfg.n_raus,
                cfg.n_unicast,
                cfg.group_sizes
            )));
        }
        Ok(())
    }

    /// Gains flattened as `beta` (row-major `N x U`) followed by each group's `eta`.
    pub fn flat_gains(&self) -> Vec<f64> {
        let mut out = self.beta.as_slice().to_vec();
        for e in &self.eta {
            out.extend_from_slice(e.as_slice());
        }
        out
    }
}

fn uniform_in_disc(rng: &mut SimRng, radius: f64) -> Point {
    let r = radius * rng.uniform().sqrt();
    let phi = 2.0 * PI * rng.uniform();
    Point::new(r * phi.cos(), r * phi.sin())
}

fn place_user(cfg: &SystemConfig, rng: &mut SimRng, raus: &[Point]) -> Result<Point> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let p = uniform_in_disc(rng, cfg.area_radius);
        if raus.iter().all(|r| p.distance(r) >= cfg.min_distance) {
            return Ok(p);
        }
    }
    Err(Error::Config(format!(
        "could not place a user at least {} km from every RAU within radius {} km after {} attempts",
        cfg.min_distance, cfg.area_radius, MAX_PLACEMENT_ATTEMPTS
    )))
}

/// Uniform placement of RAUs and users in the disc of `area_radius`.
pub fn place_uniform(cfg: &SystemConfig, rng: &mut SimRng) -> Result<Scenario> {
    cfg.validate()?;
    let raus: Vec<Point> = (0..cfg.n_raus).map(|_| uniform_in_disc(rng, cfg.area_radius)).collect();
    let unicast = (0..cfg.n_unicast).map(|_| place_user(cfg, rng, &raus)).collect::<Result<Vec<_>>>()?;
    let multicast = cfg
        .group_sizes
        .iter()
        .map(|&k| (0..k).map(|_| place_user(cfg, rng, &raus)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Scenario::from_positions(cfg, raus, unicast, multicast)
}

/// Places `count` points uniformly in the configured disc (no distance constraint).
pub fn sample_disc_points(cfg: &SystemConfig, rng: &mut SimRng, count: usize) -> Vec<Point> {
    (0..count).map(|_| uniform_in_disc(rng, cfg.area_radius)).collect()
}
