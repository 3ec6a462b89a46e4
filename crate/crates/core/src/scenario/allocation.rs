use super::SystemConfig;
use crate::error::{Error, Result};

/// Per-link power budgets and QoS floors.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLimits {
    /// Per-user unicast pilot power cap.
    pub p_ul_un: f64,
    /// Per-user multicast pilot power cap.
    pub p_ul_mu: f64,
    /// Cap on the summed unicast downlink power.
    pub p_dl_un: f64,
    /// Cap on the summed multicast downlink power.
    pub p_dl_mu: f64,
    /// Cap on the total downlink power.
    pub p_dl: f64,
    pub se_min_unicast: f64,
    pub se_min_multicast: f64,
}

impl Default for PowerLimits {
    fn default() -> Self {
        Self {
            p_ul_un: 0.5,
            p_ul_mu: 0.5,
            p_dl_un: 50.0,
            p_dl_mu: 50.0,
            p_dl: 50.0,
            se_min_unicast: 3.0,
            se_min_multicast: 3.0,
        }
    }
}

impl PowerLimits {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.p_ul_un,
            self.p_ul_mu,
            self.p_dl_un,
            self.p_dl_mu,
            self.p_dl,
            self.se_min_unicast,
            self.se_min_multicast,
        ];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("power limits and SE floors must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Fixed per-user powers used when no optimizer is involved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalPowers {
    pub p_ul: f64,
    pub q_ul: f64,
    pub p_dl: f64,
    pub q_dl: f64,
}

impl Default for NominalPowers {
    fn default() -> Self {
        Self { p_ul: 0.5, q_ul: 0.5, p_dl: 1.0, q_dl: 0.5 }
    }
}

/// Uplink pilot and downlink data powers of every user and group.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p_ul: Vec<f64>,
    pub q_ul: Vec<Vec<f64>>,
    pub p_dl: Vec<f64>,
    pub q_dl: Vec<f64>,
    pub tau: usize,
}

impl PowerAllocation {
    pub fn uniform(cfg: &SystemConfig, nominal: &NominalPowers) -> Self {
        Self {
            p_ul: vec![nominal.p_ul; cfg.n_unicast],
            q_ul: cfg.group_sizes.iter().map(|&k| vec![nominal.q_ul; k]).collect(),
            p_dl: vec![nominal.p_dl; cfg.n_unicast],
            q_dl: vec![nominal.q_dl; cfg.n_groups()],
            tau: cfg.pilot_length,
        }
    }

    /// Length of the flattened `p_ul ∥ q_ul ∥ p_dl ∥ q_dl` vector.
    pub fn gene_len(cfg: &SystemConfig) -> usize {
        2 * cfg.n_unicast + cfg.n_multicast_users() + cfg.n_groups()
    }

    pub fn to_genes(&self) -> Vec<f64> {
        let mut g = self.p_ul.clone();
        for q in &self.q_ul {
            g.extend_from_slice(q);
        }
        g.extend_from_slice(&self.p_dl);
        g.extend_from_slice(&self.q_dl);
        g
    }

    pub fn from_genes(cfg: &SystemConfig, genes: &[f64], tau: usize) -> Result<Self> {
        if genes.len() != Self::gene_len(cfg) {
            return Err(Error::Parameter(format!("expected {} genes, got {}", Self::gene_len(cfg), genes.len())));
        }
        let u = cfg.n_unicast;
        let mut rest = genes;
        let mut take = |n: usize| {
            let (head, tail) = rest.split_at(n);
            rest = tail;
            head.to_vec()
        };
        let p_ul = take(u);
        let q_ul = cfg.group_sizes.iter().map(|&k| take(k)).collect();
        let p_dl = take(u);
        let q_dl = take(cfg.n_groups());
        Ok(Self { p_ul, q_ul, p_dl, q_dl, tau })
    }

    pub fn sum_p_dl(&self) -> f64 {
        self.p_dl.iter().sum()
    }

    pub fn sum_q_dl(&self) -> f64 {
        self.q_dl.iter().sum()
    }

    pub fn total_dl(&self) -> f64 {
        self.sum_p_dl() + self.sum_q_dl()
    }

    pub fn check_shape(&self, cfg: &SystemConfig) -> Result<()> {
        let q_shape: Vec<usize> = self.q_ul.iter().map(Vec::len).collect();
        if self.p_ul.len() != cfg.n_unicast
            || self.p_dl.len() != cfg.n_unicast
            || self.q_dl.len() != cfg.n_groups()
            || q_shape != cfg.group_sizes
        {
            return Err(Error::Parameter("power allocation shape does not match the configuration".into()));
        }
        if self.to_genes().iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Parameter("powers must be finite and non-negative".into()));
        }
        if self.tau == 0 || self.tau > cfg.coherence_length {
            return Err(Error::Config(format!("pilot length {} outside [1, T={}]", self.tau, cfg.coherence_length)));
        }
        Ok(())
    }

    /// Box and sum-power feasibility with an absolute slack of `tol`.
    pub fn satisfies_power_limits(&self, limits: &PowerLimits, tol: f64) -> bool {
        self.to_genes().iter().all(|&p| p >= 0.0)
            && self.p_ul.iter().all(|&p| p <= limits.p_ul_un + tol)
            && self.q_ul.iter().flatten().all(|&q| q <= limits.p_ul_mu + tol)
            && self.sum_p_dl() <= limits.p_dl_un + tol
            && self.sum_q_dl() <= limits.p_dl_mu + tol
            && self.total_dl() <= limits.p_dl + tol
    }
}
