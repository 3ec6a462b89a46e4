//! Closed-form downlink SINR and spectral efficiency for all three precoders.

use std::fmt::Write as _;

use crate::channel::{equivalent_gains, group_pilot_energy, EquivalentGains};
use crate::error::{Error, Result};
use crate::numerics::RMatrix;
use crate::precoding::{zf_dimension, PrecoderKind};
use crate::scenario::{PowerAllocation, Scenario, SystemConfig};

/// Array-gain coefficient of the closed-form SINR.
pub fn j_factor(kind: PrecoderKind, cfg: &SystemConfig) -> Result<f64> {
    Ok(match kind {
        PrecoderKind::Mrt => cfg.antennas_per_rau as f64,
        PrecoderKind::Zf => zf_dimension(cfg)?,
        PrecoderKind::Mmse => {
            let nl = cfg.total_antennas() as f64;
            nl * nl / zf_dimension(cfg)?
        }
    })
}

/// `1 - tau/T`
pub fn prelog(tau: usize, coherence_length: usize) -> Result<f64> {
    if tau > coherence_length || coherence_length == 0 {
        return Err(Error::Config(format!("pilot length {tau} exceeds coherence length {coherence_length}")));
    }
    Ok(1.0 - tau as f64 / coherence_length as f64)
}

pub fn se_from_sinr(sinr: f64, tau: usize, coherence_length: usize) -> Result<f64> {
    Ok(prelog(tau, coherence_length)? * (1.0 + sinr).log2())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeReport {
    pub kind: PrecoderKind,
    pub prelog: f64,
    pub sinr_unicast: Vec<f64>,
    pub sinr_multicast: Vec<Vec<f64>>,
    pub se_unicast: Vec<f64>,
    pub se_multicast: Vec<Vec<f64>>,
}

impl SeReport {
    pub fn from_sinr(
        kind: PrecoderKind,
        sinr_unicast: Vec<f64>,
        sinr_multicast: Vec<Vec<f64>>,
        tau: usize,
        coherence_length: usize,
    ) -> Result<Self> {
        let prelog = prelog(tau, coherence_length)?;
        let se = |s: f64| prelog * (1.0 + s).log2();
        Ok(Self {
            kind,
            prelog,
            se_unicast: sinr_unicast.iter().map(|&s| se(s)).collect(),
            se_multicast: sinr_multicast.iter().map(|g| g.iter().map(|&s| se(s)).collect()).collect(),
            sinr_unicast,
            sinr_multicast,
        })
    }

    pub fn mean_unicast_se(&self) -> f64 {
        if self.se_unicast.is_empty() {
            return 0.0;
        }
        self.se_unicast.iter().sum::<f64>() / self.se_unicast.len() as f64
    }

    pub fn min_multicast_se(&self) -> f64 {
        let mut all = self.se_multicast.iter().flatten().copied().peekable();
        if all.peek().is_none() {
            return 0.0;
        }
        all.fold(f64::INFINITY, f64::min)
    }

    pub fn mean_multicast_se(&self) -> f64 {
        let all: Vec<f64> = self.se_multicast.iter().flatten().copied().collect();
        if all.is_empty() {
            return 0.0;
        }
        all.iter().sum::<f64>() / all.len() as f64
    }

    pub const CSV_HEADER: &'static str = "kind,user_kind,group,index,sinr,se";

    /// Rows without the header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (u, (s, e)) in self.sinr_unicast.iter().zip(&self.se_unicast).enumerate() {
            let _ = writeln!(out, "{},unicast,,{u},{s:.10e},{e:.10e}", self.kind);
        }
        for (m, (gs, ge)) in self.sinr_multicast.iter().zip(&self.se_multicast).enumerate() {
            for (k, (s, e)) in gs.iter().zip(ge).enumerate() {
                let _ = writeln!(out, "{},multicast,{m},{k},{s:.10e},{e:.10e}", self.kind);
            }
        }
        out
    }
}

#[inline]
fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// `sum_n gain_n / NL` for every user: the interference weight of each receiver.
fn interference_weights(scn: &Scenario, cfg: &SystemConfig) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nl = cfg.total_antennas() as f64;
    let un = (0..scn.n_unicast()).map(|u| scn.beta.column_sum(u) / nl).collect();
    let mu = scn.eta.iter().map(|e| (0..e.cols()).map(|k| e.column_sum(k) / nl).collect()).collect();
    (un, mu)
}

/// Closed-form SINR and SE of every unicast and multicast user.
pub fn closed_form_sinr(
    kind: PrecoderKind,
    scn: &Scenario,
    gains: &EquivalentGains,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
) -> Result<SeReport> {
    let j = j_factor(kind, cfg)?;
    let total = alloc.total_dl();
    let (w_un, w_mu) = interference_weights(scn, cfg);
    let sinr_unicast =
        (0..cfg.n_unicast).map(|k| ratio(j * alloc.p_dl[k] * gains.theta[k], cfg.noise_dl + w_un[k] * total)).collect();
    let sinr_multicast = gains
        .zeta
        .iter()
        .enumerate()
        .map(|(m, zeta)| {
            zeta.iter()
                .enumerate()
                .map(|(k, &z)| ratio(j * alloc.q_dl[m] * z, cfg.noise_dl + w_mu[m][k] * total))
                .collect()
        })
        .collect();
    SeReport::from_sinr(kind, sinr_unicast, sinr_multicast, alloc.tau, cfg.coherence_length)
}

/// Computes the equivalent gains and then [`closed_form_sinr`].
pub fn closed_form_report(
    kind: PrecoderKind,
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
) -> Result<SeReport> {
    let gains = equivalent_gains(scn, alloc, cfg)?;
    closed_form_sinr(kind, scn, &gains, alloc, cfg)
}

/// SINRs flattened as unicast users then multicast users group by group, with
/// their Jacobian with respect to the genes `p_ul ∥ q_ul ∥ p_dl ∥ q_dl`.
#[derive(Debug, Clone)]
pub struct SinrJacobian {
    pub sinr: Vec<f64>,
    /// `(U + sum K_m) x genes`
    pub jacobian: RMatrix,
}

pub fn sinr_jacobian(
    kind: PrecoderKind,
    scn: &Scenario,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
) -> Result<SinrJacobian> {
    let gains = equivalent_gains(scn, alloc, cfg)?;
    let j = j_factor(kind, cfg)?;
    let tau = alloc.tau as f64;
    let s2_ul = cfg.noise_ul;
    let total = alloc.total_dl();
    let (w_un, w_mu) = interference_weights(scn, cfg);

    let u_count = cfg.n_unicast;
    let q_offsets: Vec<usize> = cfg
        .group_sizes
        .iter()
        .scan(u_count, |acc, &k| {
            let start = *acc;
            *acc += k;
            Some(start)
        })
        .collect();
    let p_dl_off = u_count + cfg.n_multicast_users();
    let q_dl_off = p_dl_off + u_count;
    let n_genes = q_dl_off + cfg.n_groups();
    let n_out = u_count + cfg.n_multicast_users();

    let mut sinr = Vec::with_capacity(n_out);
    let mut jac = RMatrix::zeros(n_out, n_genes);
    let mut row = 0;

    // Downlink part shared by every receiver: -S * w / D for every downlink gene.
    let fill_downlink = |jac: &mut RMatrix, row: usize, s: f64, w: f64, d: f64| {
        for g in p_dl_off..n_genes {
            jac.set(row, g, ratio(-s * w, d));
        }
    };

    for k in 0..u_count {
        let d = cfg.noise_dl + w_un[k] * total;
        let s = ratio(j * alloc.p_dl[k] * gains.theta[k], d);
        sinr.push(s);
        fill_downlink(&mut jac, row, s, w_un[k], d);
        let own = p_dl_off + k;
        jac.set(row, own, jac.get(row, own) + ratio(j * gains.theta[k], d));
        let dtheta: f64 = (0..cfg.n_raus)
            .map(|n| {
                let b = scn.beta.get(n, k);
                let e = tau * alloc.p_ul[k] * b + s2_ul;
                ratio(tau * b * b * s2_ul, e * e)
            })
            .sum();
        jac.set(row, k, ratio(j * alloc.p_dl[k] * dtheta, d));
        row += 1;
    }

    for (m, eta) in scn.eta.iter().enumerate() {
        let energy: Vec<f64> = (0..cfg.n_raus).map(|n| group_pilot_energy(scn, alloc, m, n) + s2_ul).collect();
        for k in 0..eta.cols() {
            let d = cfg.noise_dl + w_mu[m][k] * total;
            let s = ratio(j * alloc.q_dl[m] * gains.zeta[m][k], d);
            sinr.push(s);
            fill_downlink(&mut jac, row, s, w_mu[m][k], d);
            let own = q_dl_off + m;
            jac.set(row, own, jac.get(row, own) + ratio(j * gains.zeta[m][k], d));
            let coeff = ratio(j * alloc.q_dl[m], d);
            for jj in 0..eta.cols() {
                let dzeta: f64 = (0..cfg.n_raus)
                    .map(|n| {
                        let hk = eta.get(n, k);
                        let e = energy[n];
                        let direct = if jj == k { ratio(tau * hk * hk, e) } else { 0.0 };
                        direct - ratio(tau * alloc.q_ul[m][k] * hk * hk * tau * eta.get(n, jj), e * e)
                    })
                    .sum();
                jac.set(row, q_offsets[m] + jj, coeff * dzeta);
            }
            row += 1;
        }
    }
    Ok(SinrJacobian { sinr, jacobian: jac })
}
