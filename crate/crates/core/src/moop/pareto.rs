use std::fmt::Write as _;

use super::pareto_dominates;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub f1: f64,
    pub f2: f64,
    pub genes: Vec<f64>,
}

/// Non-dominated feasible points seen so far; adding a point never lowers
/// the hypervolume.
#[derive(Debug, Clone, Default)]
pub struct ParetoArchive {
    points: Vec<FrontPoint>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts unless dominated by or equal to an archived point.
    pub fn insert(&mut self, f1: f64, f2: f64, genes: &[f64]) -> bool {
        if self.points.iter().any(|p| p.f1 >= f1 && p.f2 >= f2) {
            return false;
        }
        self.points.retain(|p| !pareto_dominates(f1, f2, p.f1, p.f2));
        self.points.push(FrontPoint { f1, f2, genes: genes.to_vec() });
        true
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hypervolume(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.f1, p.f2)).collect();
        hypervolume(&pts)
    }

    pub fn into_front(self) -> ParetoFront {
        ParetoFront::new(self.points, true)
    }
}

/// Area dominated by `points` above the reference point `(0, 0)`.
pub fn hypervolume(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|&(a, b)| (a.max(0.0), b.max(0.0))).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut hv = 0.0;
    let mut level = 0.0;
    for (f1, f2) in pts {
        if f2 > level {
            hv += f1 * (f2 - level);
            level = f2;
        }
    }
    hv
}

/// Mutually non-dominated points sorted by ascending `f1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoFront {
    pub points: Vec<FrontPoint>,
    /// False when no feasible point exists and the points minimize violation instead.
    pub feasible: bool,
}

impl ParetoFront {
    pub fn new(mut points: Vec<FrontPoint>, feasible: bool) -> Self {
        points.sort_by(|a, b| a.f1.total_cmp(&b.f1).then(b.f2.total_cmp(&a.f2)));
        Self { points, feasible }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hypervolume(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self.points.iter().map(|p| (p.f1, p.f2)).collect();
        hypervolume(&pts)
    }

    /// Point maximizing `f1 + f2`, the scalarized trade-off.
    pub fn best_sum(&self) -> Option<&FrontPoint> {
        self.points.iter().max_by(|a, b| (a.f1 + a.f2).total_cmp(&(b.f1 + b.f2)))
    }

    pub fn is_mutually_nondominated(&self) -> bool {
        self.points.iter().enumerate().all(|(i, a)| {
            self.points.iter().enumerate().all(|(j, b)| i == j || !pareto_dominates(b.f1, b.f2, a.f1, a.f2))
        })
    }

    /// `f1,f2,g0,g1,...` header for `n_genes` genes.
    pub fn csv_header(n_genes: usize) -> String {
        let mut h = String::from("f1,f2");
        for i in 0..n_genes {
            let _ = write!(h, ",g{i}");
        }
        h
    }

    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for p in &self.points {
            let _ = write!(out, "{:.10e},{:.10e}", p.f1, p.f2);
            for g in &p.genes {
                let _ = write!(out, ",{g:.10e}");
            }
            out.push('\n');
        }
        out
    }
}
