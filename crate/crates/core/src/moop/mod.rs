//! Bi-objective power allocation: worst multicast SE against mean unicast SE.

mod nsga2;
mod pareto;

pub use nsga2::{run_nsga2, Nsga2Params, Nsga2Result};
pub use pareto::{hypervolume, FrontPoint, ParetoArchive, ParetoFront};

use crate::error::Result;
use crate::precoding::PrecoderKind;
use crate::scenario::{PowerAllocation, PowerLimits, Scenario, SystemConfig};
use crate::spectral::closed_form_report;

/// Objectives and constraint violation of one gene vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Minimum multicast SE.
    pub f1: f64,
    /// Mean unicast SE.
    pub f2: f64,
    pub violation: f64,
}

impl Evaluation {
    pub fn is_feasible(&self) -> bool {
        self.violation == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genes: Vec<f64>,
    pub eval: Evaluation,
    pub rank: usize,
    pub crowding: f64,
}

/// Lower and upper bound of every gene (`p_ul ∥ q_ul ∥ p_dl ∥ q_dl`).
pub fn gene_bounds(cfg: &SystemConfig, limits: &PowerLimits) -> Vec<(f64, f64)> {
    let mut b = vec![(0.0, limits.p_ul_un); cfg.n_unicast];
    b.extend(std::iter::repeat_n((0.0, limits.p_ul_mu), cfg.n_multicast_users()));
    b.extend(std::iter::repeat_n((0.0, limits.p_dl_un.min(limits.p_dl)), cfg.n_unicast));
    b.extend(std::iter::repeat_n((0.0, limits.p_dl_mu.min(limits.p_dl)), cfg.n_groups()));
    b
}

fn excess(value: f64, bound: f64) -> f64 {
    if value <= bound {
        0.0
    } else if bound > 0.0 {
        (value - bound) / bound
    } else {
        value
    }
}

/// Evaluates genes at the optimal pilot length `tau = M + U`.
pub fn evaluate(
    genes: &[f64],
    kind: PrecoderKind,
    scn: &Scenario,
    cfg: &SystemConfig,
    limits: &PowerLimits,
) -> Result<Evaluation> {
    let alloc = PowerAllocation::from_genes(cfg, genes, cfg.n_streams())?;
    let report = closed_form_report(kind, scn, &alloc, cfg)?;
    let shortfall = |se: f64, floor: f64| {
        if floor > 0.0 {
            ((floor - se) / floor).max(0.0)
        } else {
            0.0
        }
    };
    let qos: f64 = report
        .se_unicast
        .iter()
        .map(|&s| shortfall(s, limits.se_min_unicast))
        .chain(report.se_multicast.iter().flatten().map(|&s| shortfall(s, limits.se_min_multicast)))
        .sum();
    let power = excess(alloc.sum_p_dl(), limits.p_dl_un)
        + excess(alloc.sum_q_dl(), limits.p_dl_mu)
        + excess(alloc.total_dl(), limits.p_dl);
    Ok(Evaluation { f1: report.min_multicast_se(), f2: report.mean_unicast_se(), violation: qos + power })
}

/// Deb's constraint domination for maximization of `(f1, f2)`.
pub fn constrained_dominates(a: &Evaluation, b: &Evaluation) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => pareto_dominates(a.f1, a.f2, b.f1, b.f2),
    }
}

pub fn pareto_dominates(a1: f64, a2: f64, b1: f64, b2: f64) -> bool {
    a1 >= b1 && a2 >= b2 && (a1 > b1 || a2 > b2)
}

/// Fast non-dominated sort under constraint domination; ranks start at 1.
pub fn nondominated_sort(evals: &[Evaluation]) -> Vec<usize> {
    let n = evals.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(&evals[i], &evals[j]) {
                dominates[i].push(j);
                dominated_by_count[j] += 1;
            } else if constrained_dominates(&evals[j], &evals[i]) {
                dominates[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut rank = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    let mut r = 1;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            rank[i] = r;
            for &j in &dominates[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        current = next;
        r += 1;
    }
    rank
}

/// Crowding distance of the points of one front, in input order.
pub fn crowding_distance(front: &[Evaluation]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [fn(&Evaluation) -> f64; 2] = [|e| e.f1, |e| e.f2];
    for obj in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| obj(&front[a]).total_cmp(&obj(&front[b])).then(a.cmp(&b)));
        let lo = obj(&front[order[0]]);
        let hi = obj(&front[order[n - 1]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = obj(&front[order[w + 1]]) - obj(&front[order[w - 1]]);
            dist[order[w]] += gap / range;
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{RMatrix, SimRng};
    use crate::scenario::{place_uniform, NominalPowers};

    fn ev(f1: f64, f2: f64, violation: f64) -> Evaluation {
        Evaluation { f1, f2, violation }
    }

    #[test]
    fn dominance_ranks() {
        assert_eq!(nondominated_sort(&[ev(1.0, 1.0, 0.0), ev(2.0, 2.0, 0.0)]), vec![2, 1]);
        assert_eq!(nondominated_sort(&[ev(5.0, 5.0, 0.1), ev(0.0, 0.0, 0.0)]), vec![2, 1]);
        assert_eq!(nondominated_sort(&[ev(1.0, 1.0, 0.0); 4]), vec![1; 4]);
        assert_eq!(
            nondominated_sort(&[ev(0.0, 0.0, 0.3), ev(0.0, 0.0, 0.1), ev(1.0, 3.0, 0.0), ev(3.0, 1.0, 0.0)]),
            vec![3, 2, 1, 1]
        );
    }

    #[test]
    fn crowding_examples() {
        let two = crowding_distance(&[ev(0.0, 1.0, 0.0), ev(1.0, 0.0, 0.0)]);
        assert!(two.iter().all(|d| d.is_infinite()));
        let line = crowding_distance(&[ev(0.0, 2.0, 0.0), ev(1.0, 1.0, 0.0), ev(2.0, 0.0, 0.0)]);
        assert!(line[0].is_infinite() && line[2].is_infinite());
        assert!((line[1] - 2.0).abs() < 1e-15);
        let flat = crowding_distance(&[ev(1.0, 1.0, 0.0); 5]);
        assert!(flat.iter().filter(|d| d.is_finite()).all(|&d| d == 0.0));
        assert_eq!(flat.iter().filter(|d| d.is_finite()).count(), 3);
    }

    #[test]
    fn all_zero_genes() {
        let cfg = SystemConfig::default();
        let scn = place_uniform(&cfg, &mut SimRng::new(1)).unwrap();
        let limits = PowerLimits::default();
        let genes = vec![0.0; PowerAllocation::gene_len(&cfg)];
        let e = evaluate(&genes, PrecoderKind::Zf, &scn, &cfg, &limits).unwrap();
        assert_eq!((e.f1, e.f2), (0.0, 0.0));
        assert!(e.violation > 0.0);
        assert!((e.violation - 20.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_scenario_equal_multicast_se() {
        let cfg = SystemConfig { n_unicast: 2, group_sizes: vec![3, 3], pilot_length: 4, ..Default::default() };
        let ones = |c| RMatrix::from_fn(cfg.n_raus, c, |_, _| 0.7);
        let scn = Scenario::from_gains(ones(2), vec![ones(3), ones(3)]).unwrap();
        let alloc = PowerAllocation::uniform(&cfg, &NominalPowers::default());
        let limits = PowerLimits::default();
        let e = evaluate(&alloc.to_genes(), PrecoderKind::Mrt, &scn, &cfg, &limits).unwrap();
        let r = closed_form_report(PrecoderKind::Mrt, &scn, &alloc, &cfg).unwrap();
        for &s in r.se_multicast.iter().flatten() {
            assert!((s - e.f1).abs() < 1e-12);
        }
    }

    #[test]
    fn power_violation_is_normalized() {
        let cfg = SystemConfig::default();
        let scn = place_uniform(&cfg, &mut SimRng::new(2)).unwrap();
        let limits = PowerLimits {
            se_min_unicast: 0.0,
            se_min_multicast: 0.0,
            p_dl_un: 1e3,
            p_dl_mu: 1e3,
            p_dl: 10.0,
            ..Default::default()
        };
        let mut alloc = PowerAllocation::uniform(&cfg, &NominalPowers::default());
        alloc.p_dl = vec![1.5; 10];
        alloc.q_dl = vec![2.5, 2.5];
        assert_eq!(alloc.total_dl(), 20.0);
        let e = evaluate(&alloc.to_genes(), PrecoderKind::Mrt, &scn, &cfg, &limits).unwrap();
        assert!((e.violation - 1.0).abs() < 1e-12);
    }
}
