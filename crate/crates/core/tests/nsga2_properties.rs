use cellfree_core::moop::{evaluate, gene_bounds, pareto_dominates, run_nsga2, Evaluation, Nsga2Params, Nsga2Result};
use cellfree_core::numerics::SimRng;
use cellfree_core::precoding::PrecoderKind;
use cellfree_core::scenario::{place_uniform, NominalPowers, PowerAllocation, PowerLimits, Scenario, SystemConfig};

fn table_run(seed: u64, params: &Nsga2Params) -> (SystemConfig, Scenario, PowerLimits, Nsga2Result) {
    let cfg = SystemConfig::default();
    let scn = place_uniform(&cfg, &mut SimRng::new(1)).unwrap();
    let limits = PowerLimits::default();
    let res = run_nsga2(PrecoderKind::Zf, &scn, &cfg, &limits, params, &SimRng::new(seed)).unwrap();
    (cfg, scn, limits, res)
}

#[test]
fn fixed_seed_reproduces_front() {
    let params = Nsga2Params { generations: 30, ..Default::default() };
    let (.., a) = table_run(5, &params);
    let (.., b) = table_run(5, &params);
    assert_eq!(a.front, b.front);
    assert_eq!(a.hypervolume_history, b.hypervolume_history);
    let (.., c) = table_run(6, &params);
    assert_ne!(a.front, c.front);
}

#[test]
fn front_is_nondominated_and_hypervolume_grows() {
    let (cfg, scn, limits, res) = table_run(7, &Nsga2Params { generations: 60, ..Default::default() });
    assert!(res.front.feasible);
    assert!(res.front.is_mutually_nondominated());
    for w in res.front.points.windows(2) {
        assert!(w[0].f1 < w[1].f1 && w[0].f2 > w[1].f2);
    }
    assert_eq!(res.hypervolume_history.len(), 61);
    assert!(res.hypervolume_history.windows(2).all(|w| w[1] >= w[0]));
    assert!(res.hypervolume_history[60] > res.hypervolume_history[0]);
    let bounds = gene_bounds(&cfg, &limits);
    for p in &res.front.points {
        assert!(p.genes.iter().zip(&bounds).all(|(g, (lo, hi))| g >= lo && g <= hi));
        let e = evaluate(&p.genes, PrecoderKind::Zf, &scn, &cfg, &limits).unwrap();
        assert_eq!((e.f1, e.f2), (p.f1, p.f2));
        assert!(e.is_feasible());
    }
}

#[test]
fn zero_generations_returns_nondominated_initial_points() {
    let (cfg, scn, limits, res) = table_run(8, &Nsga2Params { generations: 0, ..Default::default() });
    assert_eq!(res.evaluations, 100);
    assert_eq!(res.hypervolume_history.len(), 1);
    let evals: Vec<Evaluation> =
        res.population.iter().map(|i| evaluate(&i.genes, PrecoderKind::Zf, &scn, &cfg, &limits).unwrap()).collect();
    for p in &res.front.points {
        assert!(res.population.iter().any(|i| i.genes == p.genes));
        assert!(!evals.iter().any(|e| e.is_feasible() && pareto_dominates(e.f1, e.f2, p.f1, p.f2)));
    }
}

/// Feasible single-objective pattern search on the mean unicast SE.
fn hill_climb_f2(cfg: &SystemConfig, scn: &Scenario, limits: &PowerLimits, start: Vec<f64>) -> f64 {
    let bounds = gene_bounds(cfg, limits);
    let eval = |g: &[f64]| evaluate(g, PrecoderKind::Zf, scn, cfg, limits).unwrap();
    let mut x = start;
    let mut best = eval(&x);
    assert!(best.is_feasible());
    let mut step = 0.25;
    while step > 1e-4 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                let (lo, hi) = bounds[i];
                y[i] = (y[i] + dir * step * (hi - lo)).clamp(lo, hi);
                let e = eval(&y);
                if e.is_feasible() && e.f2 > best.f2 {
                    x = y;
                    best = e;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    best.f2
}

#[test]
fn max_f2_endpoint_beats_hill_climb_floor() {
    let (cfg, scn, limits, res) = table_run(9, &Nsga2Params::default());
    let start = PowerAllocation::uniform(&cfg, &NominalPowers::default()).to_genes();
    let climbed = hill_climb_f2(&cfg, &scn, &limits, start);
    // f2 falls along ascending f1, so the max-f2 endpoint comes first.
    let endpoint = res.front.points[0].f2;
    assert!(endpoint >= climbed * 0.98, "front max f2 {endpoint}, hill climb {climbed}");
}

#[test]
fn tiny_instance_grid_oracle() {
    let cfg = SystemConfig { n_unicast: 2, group_sizes: vec![2], pilot_length: 3, ..Default::default() };
    let scn = place_uniform(&cfg, &mut SimRng::new(3)).unwrap();
    let limits = PowerLimits::default();
    let res = run_nsga2(PrecoderKind::Mmse, &scn, &cfg, &limits, &Nsga2Params::default(), &SimRng::new(4)).unwrap();
    assert!(res.front.feasible && !res.front.is_empty());

    let bounds = gene_bounds(&cfg, &limits);
    let levels = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
        (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
    };
    let uplink: Vec<Vec<f64>> = bounds[..4].iter().map(|&b| levels(b, 2)).collect();
    let downlink: Vec<Vec<f64>> = bounds[4..].iter().map(|&b| levels(b, 20)).collect();
    let mut checked = 0;
    let mut genes = vec![0.0; 7];
    for &a in &uplink[0] {
        for &b in &uplink[1] {
            for &c in &uplink[2] {
                for &d in &uplink[3] {
                    for &e in &downlink[0] {
                        for &f in &downlink[1] {
                            for &g in &downlink[2] {
                                genes.copy_from_slice(&[a, b, c, d, e, f, g]);
                                let ev = evaluate(&genes, PrecoderKind::Mmse, &scn, &cfg, &limits).unwrap();
                                if !ev.is_feasible() {
                                    continue;
                                }
                                checked += 1;
                                for p in &res.front.points {
                                    assert!(
                                        !pareto_dominates(ev.f1, ev.f2, p.f1, p.f2),
                                        "grid point {genes:?} ({}, {}) dominates front point ({}, {})",
                                        ev.f1,
                                        ev.f2,
                                        p.f1,
                                        p.f2
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    assert!(checked > 0);
}
