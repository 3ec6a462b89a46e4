//! Constrained NSGA-II with an elitist archive of feasible non-dominated points.

use rayon::prelude::*;

use super::{
    crowding_distance, evaluate, gene_bounds, nondominated_sort, Evaluation, FrontPoint, Individual, ParetoArchive,
    ParetoFront,
};
use crate::error::{Error, Result};
use crate::numerics::SimRng;
use crate::precoding::PrecoderKind;
use crate::scenario::{PowerLimits, Scenario, SystemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Nsga2Params {
    /// Population size `Y`, even.
    pub population: usize,
    /// Number of generations `G`.
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    /// Per-gene mutation probability; `None` means `1 / genes`.
    pub mutation_prob: Option<f64>,
}

impl Default for Nsga2Params {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_prob: 0.9,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
            mutation_prob: None,
        }
    }
}

impl Nsga2Params {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || !self.population.is_multiple_of(2) {
            return Err(Error::Config(format!("population must be even and at least 4, got {}", self.population)));
        }
        let probs = [self.crossover_prob, self.mutation_prob.unwrap_or(0.0)];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("probabilities must lie in [0, 1]".into()));
        }
        if !(self.eta_crossover >= 0.0) || !(self.eta_mutation >= 0.0) {
            return Err(Error::Config("distribution indices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Nsga2Result {
    pub front: ParetoFront,
    /// Archive hypervolume after initialization and after each generation.
    pub hypervolume_history: Vec<f64>,
    /// Hypervolume of the population's feasible first front, same indexing.
    pub population_hypervolume: Vec<f64>,
    pub population: Vec<Individual>,
    pub evaluations: usize,
}

/// `Dirichlet(1, ..., 1)` split of `budget` over `n` shares plus one slack share.
fn dirichlet_split(rng: &mut SimRng, n: usize, budget: f64) -> Vec<f64> {
    let draws: Vec<f64> = (0..=n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws[..n].iter().map(|d| budget * d / total).collect()
}

fn random_genes(cfg: &SystemConfig, limits: &PowerLimits, rng: &mut SimRng) -> Vec<f64> {
    let mut genes: Vec<f64> = (0..cfg.n_unicast).map(|_| limits.p_ul_un * rng.uniform()).collect();
    for _ in 0..cfg.n_multicast_users() {
        genes.push(limits.p_ul_mu * rng.uniform());
    }
    let mut p_dl = dirichlet_split(rng, cfg.n_unicast, limits.p_dl_un.min(limits.p_dl));
    let mut q_dl = dirichlet_split(rng, cfg.n_groups(), limits.p_dl_mu.min(limits.p_dl));
    let total: f64 = p_dl.iter().chain(&q_dl).sum();
    if total > limits.p_dl {
        let s = limits.p_dl / total;
        p_dl.iter_mut().chain(q_dl.iter_mut()).for_each(|p| *p *= s);
    }
    genes.extend(p_dl);
    genes.extend(q_dl);
    genes
}

/// Bounded simulated binary crossover applied gene by gene.
fn sbx(a: &mut [f64], b: &mut [f64], bounds: &[(f64, f64)], eta: f64, rng: &mut SimRng) {
    for i in 0..a.len() {
        let (lo, hi) = bounds[i];
        if rng.uniform() > 0.5 || (a[i] - b[i]).abs() <= 1e-14 || hi <= lo {
            continue;
        }
        let (y1, y2) = if a[i] < b[i] { (a[i], b[i]) } else { (b[i], a[i]) };
        let u = rng.uniform();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let bq1 = spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
        let bq2 = spread(1.0 + 2.0 * (hi - y2) / (y2 - y1));
        let c1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(lo, hi);
        let c2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(lo, hi);
        if rng.uniform() <= 0.5 {
            a[i] = c2;
            b[i] = c1;
        } else {
            a[i] = c1;
            b[i] = c2;
        }
    }
}

/// Bounded polynomial mutation.
fn polynomial_mutation(x: &mut [f64], bounds: &[(f64, f64)], eta: f64, prob: f64, rng: &mut SimRng) {
    let pow = 1.0 / (eta + 1.0);
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        if rng.uniform() > prob || hi <= lo {
            continue;
        }
        let d1 = (*xi - lo) / (hi - lo);
        let d2 = (hi - *xi) / (hi - lo);
        let u = rng.uniform();
        let dq = if u <= 0.5 {
            let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(pow)
        };
        *xi = (*xi + dq * (hi - lo)).clamp(lo, hi);
    }
}

/// Binary tournament on (rank, crowding); ties go to the first draw.
fn tournament<'a>(pop: &'a [Individual], rng: &mut SimRng) -> &'a Individual {
    let a = &pop[rng.below(pop.len())];
    let b = &pop[rng.below(pop.len())];
    if b.rank < a.rank || (b.rank == a.rank && b.crowding > a.crowding) {
        b
    } else {
        a
    }
}

/// Survivor selection by front then crowding; sets rank and crowding.
fn select(combined: Vec<(Vec<f64>, Evaluation)>, size: usize) -> Vec<Individual> {
    let evals: Vec<Evaluation> = combined.iter().map(|(_, e)| *e).collect();
    let ranks = nondominated_sort(&evals);
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    let mut crowding = vec![0.0; combined.len()];
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    for r in 1..=max_rank {
        let members: Vec<usize> = (0..combined.len()).filter(|&i| ranks[i] == r).collect();
        let front: Vec<Evaluation> = members.iter().map(|&i| evals[i]).collect();
        for (&i, d) in members.iter().zip(crowding_distance(&front)) {
            crowding[i] = d;
        }
        if chosen.len() + members.len() <= size {
            chosen.extend(&members);
        } else {
            let mut rest = members;
            rest.sort_by(|&a, &b| crowding[b].total_cmp(&crowding[a]).then(a.cmp(&b)));
            chosen.extend(rest.into_iter().take(size - chosen.len()));
        }
        if chosen.len() == size {
            break;
        }
    }
    let mut slots: Vec<Option<(Vec<f64>, Evaluation)>> = combined.into_iter().map(Some).collect();
    chosen
        .into_iter()
        .map(|i| {
            let (genes, eval) = slots[i].take().expect("each index chosen once");
            Individual { genes, eval, rank: ranks[i], crowding: crowding[i] }
        })
        .collect()
}

fn evaluate_all(
    genes: &[Vec<f64>],
    kind: PrecoderKind,
    scn: &Scenario,
    cfg: &SystemConfig,
    limits: &PowerLimits,
) -> Result<Vec<Evaluation>> {
    genes.par_iter().map(|g| evaluate(g, kind, scn, cfg, limits)).collect()
}

fn population_hypervolume(pop: &[Individual]) -> f64 {
    let pts: Vec<(f64, f64)> =
        pop.iter().filter(|i| i.rank == 1 && i.eval.is_feasible()).map(|i| (i.eval.f1, i.eval.f2)).collect();
    super::hypervolume(&pts)
}

pub fn run_nsga2(
    kind: PrecoderKind,
    scn: &Scenario,
    cfg: &SystemConfig,
    limits: &PowerLimits,
    params: &Nsga2Params,
    rng: &SimRng,
) -> Result<Nsga2Result> {
    params.validate()?;
    limits.validate()?;
    cfg.validate()?;
    scn.check_matches(cfg)?;
    let bounds = gene_bounds(cfg, limits);
    let n_genes = bounds.len();
    let pm = params.mutation_prob.unwrap_or(1.0 / n_genes as f64);
    let y = params.population;

    let mut archive = ParetoArchive::new();
    let absorb = |archive: &mut ParetoArchive, genes: &[Vec<f64>], evals: &[Evaluation]| {
        for (g, e) in genes.iter().zip(evals) {
            if e.is_feasible() {
                archive.insert(e.f1, e.f2, g);
            }
        }
    };

    let init: Vec<Vec<f64>> =
        (0..y).map(|i| random_genes(cfg, limits, &mut rng.substream("nsga2-init", i as u64))).collect();
    let init_evals = evaluate_all(&init, kind, scn, cfg, limits)?;
    absorb(&mut archive, &init, &init_evals);
    let mut pop = select(init.into_iter().zip(init_evals).collect(), y);
    let mut evaluations = y;
    let mut hv_history = vec![archive.hypervolume()];
    let mut pop_hv = vec![population_hypervolume(&pop)];

    for gen in 1..=params.generations {
        let children: Vec<Vec<f64>> = (0..y / 2)
            .flat_map(|pair| {
                let key = ((gen as u64) << 32) | pair as u64;
                let mut r = rng.substream("nsga2-offspring", key);
                let mut a = tournament(&pop, &mut r).genes.clone();
                let mut b = tournament(&pop, &mut r).genes.clone();
                if r.uniform() <= params.crossover_prob {
                    sbx(&mut a, &mut b, &bounds, params.eta_crossover, &mut r);
                }
                polynomial_mutation(&mut a, &bounds, params.eta_mutation, pm, &mut r);
                polynomial_mutation(&mut b, &bounds, params.eta_mutation, pm, &mut r);
                [a, b]
            })
            .collect();
        let child_evals = evaluate_all(&children, kind, scn, cfg, limits)?;
        evaluations += children.len();
        absorb(&mut archive, &children, &child_evals);
        let combined: Vec<(Vec<f64>, Evaluation)> =
            pop.into_iter().map(|i| (i.genes, i.eval)).chain(children.into_iter().zip(child_evals)).collect();
        pop = select(combined, y);
        hv_history.push(archive.hypervolume());
        pop_hv.push(population_hypervolume(&pop));
    }

    let front = if archive.is_empty() {
        let best: Vec<FrontPoint> = pop
            .iter()
            .filter(|i| i.rank == 1)
            .map(|i| FrontPoint { f1: i.eval.f1, f2: i.eval.f2, genes: i.genes.clone() })
            .collect();
        ParetoFront::new(best, false)
    } else {
        archive.into_front()
    };
    Ok(Nsga2Result {
        front,
        hypervolume_history: hv_history,
        population_hypervolume: pop_hv,
        population: pop,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::place_uniform;

    #[test]
    fn random_genes_respect_box_and_budget() {
        let cfg = SystemConfig::default();
        let limits = PowerLimits { p_dl: 30.0, p_dl_un: 25.0, p_dl_mu: 20.0, ..Default::default() };
        let bounds = gene_bounds(&cfg, &limits);
        for i in 0..200 {
            let g = random_genes(&cfg, &limits, &mut SimRng::new(i));
            assert!(g.iter().zip(&bounds).all(|(x, (lo, hi))| *x >= *lo && *x <= *hi));
            let un: f64 = g[20..30].iter().sum();
            let mu: f64 = g[30..].iter().sum();
            assert!(un <= 25.0 + 1e-9 && mu <= 20.0 + 1e-9 && un + mu <= 30.0 + 1e-9);
        }
    }

    #[test]
    fn operators_stay_in_bounds() {
        let bounds = vec![(0.0, 1.0), (0.0, 2.0), (0.5, 0.5)];
        let mut rng = SimRng::new(4);
        for _ in 0..2000 {
            let mut a = vec![rng.uniform(), 2.0 * rng.uniform(), 0.5];
            let mut b = vec![rng.uniform(), 2.0 * rng.uniform(), 0.5];
            sbx(&mut a, &mut b, &bounds, 15.0, &mut rng);
            polynomial_mutation(&mut a, &bounds, 20.0, 1.0, &mut rng);
            for (x, (lo, hi)) in a.iter().chain(&b).zip(bounds.iter().cycle()) {
                assert!(x >= lo && x <= hi);
            }
        }
    }

    #[test]
    fn zero_generations_returns_initial_nondominated_set() {
        let cfg = SystemConfig::default();
        let scn = place_uniform(&cfg, &mut SimRng::new(1)).unwrap();
        let limits = PowerLimits { se_min_unicast: 0.0, se_min_multicast: 0.0, ..Default::default() };
        let params = Nsga2Params { population: 20, generations: 0, ..Default::default() };
        let rng = SimRng::new(9);
        let res = run_nsga2(PrecoderKind::Zf, &scn, &cfg, &limits, &params, &rng).unwrap();
        let init: Vec<Vec<f64>> =
            (0..20).map(|i| random_genes(&cfg, &limits, &mut rng.substream("nsga2-init", i))).collect();
        let evals: Vec<Evaluation> =
            init.iter().map(|g| evaluate(g, PrecoderKind::Zf, &scn, &cfg, &limits).unwrap()).collect();
        let ranks = nondominated_sort(&evals);
        let expected = ranks.iter().filter(|&&r| r == 1).count();
        assert_eq!(res.front.len(), expected);
        assert!(res.front.feasible);
        assert_eq!(res.hypervolume_history.len(), 1);
    }

    #[test]
    fn params_validation() {
        assert!(Nsga2Params { population: 7, ..Default::default() }.validate().is_err());
        assert!(Nsga2Params { crossover_prob: 1.5, ..Default::default() }.validate().is_err());
        assert!(Nsga2Params::default().validate().is_ok());
    }

    #[test]
    fn infeasible_problem_is_flagged() {
        let cfg = SystemConfig::default();
        let scn = place_uniform(&cfg, &mut SimRng::new(1)).unwrap();
        let limits = PowerLimits { se_min_unicast: 1e3, ..Default::default() };
        let params = Nsga2Params { population: 8, generations: 3, ..Default::default() };
        let res = run_nsga2(PrecoderKind::Mrt, &scn, &cfg, &limits, &params, &SimRng::new(1)).unwrap();
        assert!(!res.front.feasible);
        assert!(!res.front.is_empty());
    }
}
