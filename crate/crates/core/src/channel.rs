//! Channel realizations, MMSE estimates and the equivalent large-scale gains.
//!
//! Vectors of length `NL` are stacked RAU-major: antenna `l` of RAU `n` sits at
//! index `n * L + l`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{circular_gaussian, CMatrix, CVector, Complex64, RMatrix, SimRng};
use crate::scenario::{PowerAllocation, Scenario, SystemConfig};

/// Variances of the channel estimates and their sums over RAUs.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalentGains {
    /// `N x U`
    pub lambda: RMatrix,
    /// Per group, `N x K_m`.
    pub xi: Vec<RMatrix>,
    /// `N x M`
    pub mu: RMatrix,
    pub theta: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub zeta: Vec<Vec<f64>>,
}

/// `num / den`, with `0 / 0 = 0` for users that send no pilot.
#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Received pilot energy of group `m` at RAU `n`: `sum_j tau q_j eta_{n,j}`.
pub fn group_pilot_energy(scn: &Scenario, alloc: &PowerAllocation, m: usize, n: usize) -> f64 {
    let tau = alloc.tau as f64;
    alloc.q_ul[m].iter().enumerate().map(|(k, q)| tau * q * scn.eta[m].get(n, k)).sum()
}

fn check_inputs(scn: &Scenario, alloc: &PowerAllocation, cfg: &SystemConfig) -> Result<()> {
    scn.check_matches(cfg)?;
    alloc.check_shape(cfg)
}

pub fn equivalent_gains(scn: &Scenario, alloc: &PowerAllocation, cfg: &SystemConfig) -> Result<EquivalentGains> {
    check_inputs(scn, alloc, cfg)?;
    let n_raus = cfg.n_raus;
    let tau = alloc.tau as f64;
    let s2 = cfg.noise_ul;

    let lambda = RMatrix::from_fn(n_raus, cfg.n_unicast, |n, u| {
        let b = scn.beta.get(n, u);
        let e = tau * alloc.p_ul[u] * b;
        ratio(e * b, e + s2)
    });
    let mut xi = Vec::with_capacity(cfg.n_groups());
    let mut mu = RMatrix::zeros(n_raus, cfg.n_groups());
    for (m, eta) in scn.eta.iter().enumerate() {
        let energy: Vec<f64> = (0..n_raus).map(|n| group_pilot_energy(scn, alloc, m, n)).collect();
        xi.push(RMatrix::from_fn(n_raus, eta.cols(), |n, k| {
            let h = eta.get(n, k);
            ratio(tau * alloc.q_ul[m][k] * h * h, energy[n] + s2)
        }));
        for (n, &s) in energy.iter().enumerate() {
            mu.set(n, m, ratio(s * s, s + s2));
        }
    }
    let theta = (0..cfg.n_unicast).map(|u| lambda.column_sum(u)).collect();
    let upsilon = (0..cfg.n_groups()).map(|m| mu.column_sum(m)).collect();
    let zeta = xi.iter().map(|x| (0..x.cols()).map(|k| x.column_sum(k)).collect()).collect();
    Ok(EquivalentGains { lambda, xi, mu, theta, upsilon, zeta })
}

/// One joint draw of true channels and their estimates.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    pub c: Vec<CVector>,
    pub t: Vec<Vec<CVector>>,
    pub c_hat: Vec<CVector>,
    /// Composite co-pilot estimate of each group.
    pub t_hat_group: Vec<CVector>,
    /// Per-user estimates from the same despread observation.
    pub t_hat_user: Vec<Vec<CVector>>,
}

impl ChannelSample {
    /// `[C_hat, T_hat]`, `NL x (U + M)`.
    pub fn estimate_matrix(&self) -> Result<CMatrix> {
        let cols: Vec<CVector> = self.c_hat.iter().chain(self.t_hat_group.iter()).cloned().collect();
        CMatrix::from_columns(&cols)
    }
}

/// Draws `sqrt(gain_n) * h` with `h ~ CN(0, I_NL)`.
fn draw_channel(rng: &mut SimRng, gains: &RMatrix, col: usize, l: usize) -> CVector {
    let mut v = Vec::with_capacity(gains.rows() * l);
    for n in 0..gains.rows() {
        let s = gains.get(n, col).sqrt();
        for _ in 0..l {
            v.push(circular_gaussian(rng, 1.0) * s);
        }
    }
    v
}

fn draw_noise(rng: &mut SimRng, len: usize, variance: f64) -> CVector {
    (0..len).map(|_| circular_gaussian(rng, variance)).collect()
}

/// Applies a per-RAU scalar filter `f(n)` to a stacked vector.
fn filter_per_rau(y: &[Complex64], l: usize, f: impl Fn(usize) -> f64) -> CVector {
    y.chunks(l)
        .enumerate()
        .flat_map(|(n, block)| {
            let g = f(n);
            block.iter().map(move |z| z * g)
        })
        .collect()
}

/// Unicast MMSE filter weight at RAU `n`.
fn unicast_filter(scn: &Scenario, alloc: &PowerAllocation, s2: f64, u: usize, n: usize) -> f64 {
    let tau = alloc.tau as f64;
    let b = scn.beta.get(n, u);
    ratio((tau * alloc.p_ul[u]).sqrt() * b, tau * alloc.p_ul[u] * b + s2)
}

/// Estimates every multicast quantity from the despread group observations `y[m]`.
fn multicast_estimates(
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    y: &[CVector],
) -> (Vec<CVector>, Vec<Vec<CVector>>) {
    let l = cfg.antennas_per_rau;
    let tau = alloc.tau as f64;
    let s2 = cfg.noise_ul;
    let mut group = Vec::with_capacity(y.len());
    let mut user = Vec::with_capacity(y.len());
    for (m, ym) in y.iter().enumerate() {
        let energy: Vec<f64> = (0..cfg.n_raus).map(|n| group_pilot_energy(scn, alloc, m, n)).collect();
        group.push(filter_per_rau(ym, l, |n| ratio(energy[n], energy[n] + s2)));
        user.push(
            (0..cfg.group_sizes[m])
                .map(|k| {
                    let a = (tau * alloc.q_ul[m][k]).sqrt();
                    filter_per_rau(ym, l, |n| ratio(a * scn.eta[m].get(n, k), energy[n] + s2))
                })
                .collect(),
        );
    }
    (group, user)
}

fn draw_multicast_truth(rng: &mut SimRng, scn: &Scenario, l: usize) -> Vec<Vec<CVector>> {
    scn.eta.iter().map(|eta| (0..eta.cols()).map(|k| draw_channel(rng, eta, k, l)).collect()).collect()
}

/// Column `j` of the unitary `tau x tau` DFT matrix.
pub fn pilot_sequence(tau: usize, j: usize) -> CVector {
    let scale = 1.0 / (tau as f64).sqrt();
    (0..tau).map(|i| Complex64::from_polar(scale, -2.0 * PI * (i * j) as f64 / tau as f64)).collect()
}

/// Full pilot phase: forms the `NL x tau` received block, despreads and filters.
pub fn draw_sample_pilot(
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    rng: &mut SimRng,
) -> Result<ChannelSample> {
    check_inputs(scn, alloc, cfg)?;
    let tau = alloc.tau;
    if tau < cfg.n_streams() {
        return Err(Error::Config(format!(
            "pilot length {tau} is shorter than the {} orthogonal pilots needed",
            cfg.n_streams()
        )));
    }
    let l = cfg.antennas_per_rau;
    let nl = cfg.total_antennas();
    let tf = tau as f64;

    let c: Vec<CVector> = (0..cfg.n_unicast).map(|u| draw_channel(rng, &scn.beta, u, l)).collect();
    let t = draw_multicast_truth(rng, scn, l);
    let pilots: Vec<CVector> = (0..cfg.n_streams()).map(|j| pilot_sequence(tau, j)).collect();

    // Y = sum_u sqrt(tau p) c_u phi_u^H + sum_{m,k} sqrt(tau q) t_mk phi_m^H + N
    let mut y = CMatrix::zeros(nl, tau);
    let add_outer = |y: &mut CMatrix, v: &[Complex64], amp: f64, phi: &[Complex64]| {
        for (i, vi) in v.iter().enumerate() {
            let a = vi * amp;
            for (s, ph) in phi.iter().enumerate() {
                y[(i, s)] += a * ph.conj();
            }
        }
    };
    for (u, cu) in c.iter().enumerate() {
        add_outer(&mut y, cu, (tf * alloc.p_ul[u]).sqrt(), &pilots[u]);
    }
    for (m, group) in t.iter().enumerate() {
        for (k, tk) in group.iter().enumerate() {
            add_outer(&mut y, tk, (tf * alloc.q_ul[m][k]).sqrt(), &pilots[cfg.n_unicast + m]);
        }
    }
    for i in 0..nl {
        for s in 0..tau {
            y[(i, s)] += circular_gaussian(rng, cfg.noise_ul);
        }
    }
    let despread =
        |j: usize| -> CVector { (0..nl).map(|i| (0..tau).map(|s| y[(i, s)] * pilots[j][s]).sum()).collect() };

    let s2 = cfg.noise_ul;
    let c_hat =
        (0..cfg.n_unicast).map(|u| filter_per_rau(&despread(u), l, |n| unicast_filter(scn, alloc, s2, u, n))).collect();
    let y_groups: Vec<CVector> = (0..cfg.n_groups()).map(|m| despread(cfg.n_unicast + m)).collect();
    let (t_hat_group, t_hat_user) = multicast_estimates(scn, alloc, cfg, &y_groups);
    Ok(ChannelSample { c, t, c_hat, t_hat_group, t_hat_user })
}

/// Fast sampler with the same joint law as [`draw_sample_pilot`].
///
/// Unicast estimates and their errors are drawn as independent Gaussians;
/// multicast channels go through the despread observation so that the
/// co-pilot contamination is reproduced exactly.
pub fn draw_sample_statistical(
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
    gains: &EquivalentGains,
    rng: &mut SimRng,
) -> Result<ChannelSample> {
    check_inputs(scn, alloc, cfg)?;
    let l = cfg.antennas_per_rau;
    let nl = cfg.total_antennas();
    let tf = alloc.tau as f64;

    let mut c = Vec::with_capacity(cfg.n_unicast);
    let mut c_hat = Vec::with_capacity(cfg.n_unicast);
    for u in 0..cfg.n_unicast {
        let mut est = Vec::with_capacity(nl);
        let mut truth = Vec::with_capacity(nl);
        for n in 0..cfg.n_raus {
            let lam = gains.lambda.get(n, u);
            let err = (scn.beta.get(n, u) - lam).max(0.0);
            for _ in 0..l {
                let e = circular_gaussian(rng, lam);
                est.push(e);
                truth.push(e + circular_gaussian(rng, err));
            }
        }
        c.push(truth);
        c_hat.push(est);
    }

    let t = draw_multicast_truth(rng, scn, l);
    let y_groups: Vec<CVector> = t
        .iter()
        .enumerate()
        .map(|(m, group)| {
            let mut y = draw_noise(rng, nl, cfg.noise_ul);
            for (k, tk) in group.iter().enumerate() {
                let a = (tf * alloc.q_ul[m][k]).sqrt();
                for (yi, ti) in y.iter_mut().zip(tk) {
                    *yi += ti * a;
                }
            }
            y
        })
        .collect();
    let (t_hat_group, t_hat_user) = multicast_estimates(scn, alloc, cfg, &y_groups);
    Ok(ChannelSample { c, t, c_hat, t_hat_group, t_hat_user })
}
