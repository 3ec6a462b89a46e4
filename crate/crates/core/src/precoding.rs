//! MRT, ZF and MMSE downlink precoders under average-power normalization.

use std::fmt;
use std::str::FromStr;

use crate::channel::{ChannelSample, EquivalentGains};
use crate::error::{Error, Result};
use crate::numerics::{gram_of_columns, solve_hpd, CMatrix, CVector, Complex64};
use crate::scenario::{PowerAllocation, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrecoderKind {
    Mrt,
    Zf,
    Mmse,
}

impl PrecoderKind {
    pub const ALL: [PrecoderKind; 3] = [PrecoderKind::Mrt, PrecoderKind::Zf, PrecoderKind::Mmse];

    pub fn as_str(self) -> &'static str {
        match self {
            PrecoderKind::Mrt => "mrt",
            PrecoderKind::Zf => "zf",
            PrecoderKind::Mmse => "mmse",
        }
    }
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mrt" => Ok(PrecoderKind::Mrt),
            "zf" => Ok(PrecoderKind::Zf),
            "mmse" => Ok(PrecoderKind::Mmse),
            other => Err(Error::Parameter(format!("unknown precoder `{other}` (expected mrt, zf or mmse)"))),
        }
    }
}

/// A downlink stream: unicast user `u` or multicast group `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Unicast(usize),
    Multicast(usize),
}

#[derive(Debug, Clone)]
pub struct PrecodeSet {
    pub kind: PrecoderKind,
    pub v: Vec<CVector>,
    pub w: Vec<CVector>,
}

/// `NL - M - U` as a float, rejecting non-positive values.
pub fn zf_dimension(cfg: &SystemConfig) -> Result<f64> {
    let a = cfg.zf_dimension();
    if a <= 0 {
        return Err(Error::Config(format!(
            "N*L = {} must exceed M+U = {} for ZF/MMSE",
            cfg.total_antennas(),
            cfg.n_streams()
        )));
    }
    Ok(a as f64)
}

/// Closed-form `E[|a|^2]` of the unnormalized precoder column of `stream`.
pub fn expected_norm_closed_form(
    kind: PrecoderKind,
    gains: &EquivalentGains,
    cfg: &SystemConfig,
    stream: Stream,
) -> Result<f64> {
    let g = match stream {
        Stream::Unicast(u) => gains.theta.get(u),
        Stream::Multicast(m) => gains.upsilon.get(m),
    }
    .copied()
    .ok_or_else(|| Error::Parameter(format!("{stream:?} out of range")))?;
    Ok(match kind {
        PrecoderKind::Mrt => cfg.antennas_per_rau as f64 * g,
        PrecoderKind::Zf => 1.0 / (zf_dimension(cfg)? * g),
        PrecoderKind::Mmse => {
            let ag = zf_dimension(cfg)? * g;
            ag / (ag + cfg.noise_dl).powi(2)
        }
    })
}

fn normalization(
    kind: PrecoderKind,
    gains: &EquivalentGains,
    cfg: &SystemConfig,
    stream: Stream,
    power: f64,
) -> Result<f64> {
    let e = expected_norm_closed_form(kind, gains, cfg, stream)?;
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::Normalization(format!(
            "{kind} precoder for {stream:?} has zero equivalent gain (no pilot power)"
        )));
    }
    Ok((power / e).sqrt())
}

/// Builds all `U + M` precoding vectors for one channel realization.
pub fn build_precoders(
    kind: PrecoderKind,
    sample: &ChannelSample,
    gains: &EquivalentGains,
    alloc: &PowerAllocation,
    cfg: &SystemConfig,
) -> Result<PrecodeSet> {
    let u_count = sample.c_hat.len();
    let estimates: Vec<&CVector> = sample.c_hat.iter().chain(&sample.t_hat_group).collect();
    let streams: Vec<(Stream, f64)> = (0..u_count)
        .map(|u| (Stream::Unicast(u), alloc.p_dl[u]))
        .chain(alloc.q_dl.iter().enumerate().map(|(m, &q)| (Stream::Multicast(m), q)))
        .collect();
    let scales = streams.iter().map(|&(s, p)| normalization(kind, gains, cfg, s, p)).collect::<Result<Vec<_>>>()?;

    let columns: Vec<CVector> = match kind {
        PrecoderKind::Mrt => estimates.iter().zip(&scales).map(|(e, &s)| e.iter().map(|z| z * s).collect()).collect(),
        PrecoderKind::Zf | PrecoderKind::Mmse => {
            let owned: Vec<CVector> = estimates.iter().map(|e| (*e).clone()).collect();
            let mut g = gram_of_columns(&owned);
            if kind == PrecoderKind::Mmse {
                g.add_diagonal(cfg.noise_dl);
            }
            let inv = solve_hpd(&g, &CMatrix::identity(g.rows()))?;
            let nl = owned[0].len();
            (0..owned.len())
                .map(|j| {
                    let mut col = vec![Complex64::new(0.0, 0.0); nl];
                    for (i, e) in owned.iter().enumerate() {
                        let coeff = inv[(i, j)] * scales[j];
                        for (c, z) in col.iter_mut().zip(e) {
                            *c += z * coeff;
                        }
                    }
                    col
                })
                .collect()
        }
    };
    let mut columns = columns;
    let w = columns.split_off(u_count);
    Ok(PrecodeSet { kind, v: columns, w })
}
