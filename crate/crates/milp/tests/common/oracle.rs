//! Reference solvers for cross-checking: a dense two-phase tableau simplex
//! with Bland's rule, and exhaustive enumeration over integer assignments.
//! Written independently of the crate's solver; only the problem container
//! is shared.

#![allow(dead_code)]

use mesbench_milp::{LpProblem, MilpProblem, RowSense};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl Outcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            Outcome::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

const EPS: f64 = 1e-10;

struct Tableau {
    // rows 0..m are constraints, each entry [coefs.., rhs]
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.t[r][q];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[q];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = q;
    }

    /// Minimises `cost` over columns `allowed`. Returns false if unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> bool {
        loop {
            let m = self.t.len();
            let entering = (0..self.cols).filter(|&j| allowed(j)).find(|&j| {
                let z: f64 = (0..m).map(|i| cost[self.basis[i]] * self.t[i][j]).sum();
                cost[j] - z < -1e-9
            });
            let Some(q) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][q];
                if a > 1e-9 {
                    let ratio = self.t[i][self.cols] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else { return false };
            self.pivot(r, q);
        }
    }
}

/// Dense two-phase simplex. Every variable must have finite bounds.
pub fn dense_lp(lp: &LpProblem) -> Outcome {
    let n = lp.num_vars();
    for &(lo, hi) in &lp.bounds {
        assert!(lo.is_finite() && hi.is_finite(), "oracle needs finite bounds");
        if lo > hi {
            return Outcome::Infeasible;
        }
    }
    // shifted variables y = x - lo in [0, hi - lo]
    let mut rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::new();
    for r in &lp.rows {
        let mut a = vec![0.0; n];
        let mut shift = 0.0;
        for &(j, v) in &r.coefs {
            a[j] += v;
            shift += v * lp.bounds[j].0;
        }
        rows.push((a, r.sense, r.rhs - shift));
    }
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        rows.push((a, RowSense::Le, lp.bounds[j].1 - lp.bounds[j].0));
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let cols = n + n_slack + m;
    let mut t = Vec::with_capacity(m);
    let mut slack = n;
    for (i, (a, sense, b)) in rows.iter().enumerate() {
        let mut row = vec![0.0; cols + 1];
        row[..n].copy_from_slice(a);
        match sense {
            RowSense::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            RowSense::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            RowSense::Eq => {}
        }
        row[cols] = *b;
        if *b < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n + n_slack + i] = 1.0;
        t.push(row);
    }
    let art0 = n + n_slack;
    let mut tab = Tableau { t, basis: (art0..art0 + m).collect(), cols };

    let mut phase1 = vec![0.0; cols];
    for c in phase1.iter_mut().skip(art0) {
        *c = 1.0;
    }
    tab.optimise(&phase1, &|_| true);
    let infeas: f64 = (0..m).filter(|&i| tab.basis[i] >= art0).map(|i| tab.t[i][cols]).sum();
    if infeas > 1e-7 {
        return Outcome::Infeasible;
    }
    // drive zero-level artificials out where possible
    for i in 0..m {
        if tab.basis[i] >= art0 {
            if let Some(q) = (0..art0).find(|&j| tab.t[i][j].abs() > 1e-9) {
                tab.pivot(i, q);
            }
        }
    }
    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(&lp.c);
    if !tab.optimise(&phase2, &|j| j < art0) {
        return Outcome::Unbounded;
    }
    let mut x: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] += tab.t[i][cols];
        }
    }
    let objective = lp.objective_of(&x);
    Outcome::Optimal { x, objective }
}

/// Enumerates every integer assignment and solves the continuous rest with
/// [`dense_lp`].
pub fn enumerate_milp(p: &MilpProblem) -> Outcome {
    let ints: Vec<usize> = p.int_vars.iter().copied().collect();
    let ranges: Vec<(i64, i64)> = ints
        .iter()
        .map(|&j| {
            let (lo, hi) = p.base.bounds[j];
            ((lo - 1e-9).ceil() as i64, (hi + 1e-9).floor() as i64)
        })
        .collect();
    if ranges.iter().any(|(lo, hi)| lo > hi) {
        return Outcome::Infeasible;
    }
    let mut assignment: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut best = Outcome::Infeasible;
    loop {
        let mut fixed = p.base.clone();
        for (k, &j) in ints.iter().enumerate() {
            fixed.bounds[j] = (assignment[k] as f64, assignment[k] as f64);
        }
        match dense_lp(&fixed) {
            Outcome::Unbounded => return Outcome::Unbounded,
            Outcome::Optimal { x, objective } => {
                if best.objective().map_or(true, |b| objective < b - 1e-12) {
                    best = Outcome::Optimal { x, objective };
                }
            }
            Outcome::Infeasible => {}
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == ints.len() {
                return best;
            }
            if assignment[k] < ranges[k].1 {
                assignment[k] += 1;
                break;
            }
            assignment[k] = ranges[k].0;
            k += 1;
        }
    }
}

fn coef(rng: &mut ChaCha8Rng) -> f64 {
    (rng.gen_range(-50..=50) as f64) / 10.0
}

/// Seeded random MILP with at most 8 integer, 6 continuous variables and
/// 10 rows. Most instances are built around a known feasible point.
pub fn random_milp(seed: u64) -> MilpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_int = rng.gen_range(1..=8);
    let n_cont = rng.gen_range(0..=6);
    let m = rng.gen_range(1..=10);
    let mut lp = LpProblem::new();
    let mut anchor = Vec::new();
    for _ in 0..n_int {
        let (lo, hi) = match rng.gen_range(0..3) {
            0 => (-1.0, 1.0),
            1 => (0.0, 2.0),
            _ => (0.0, 1.0),
        };
        lp.add_var(coef(&mut rng), lo, hi);
        anchor.push(rng.gen_range(lo as i64..=hi as i64) as f64);
    }
    for _ in 0..n_cont {
        let lo = rng.gen_range(-5..=0) as f64;
        let hi = lo + rng.gen_range(1..=10) as f64;
        lp.add_var(coef(&mut rng), lo, hi);
        anchor.push(rng.gen_range(lo..=hi));
    }
    let n = n_int + n_cont;
    let loose = rng.gen_bool(0.85);
    for _ in 0..m {
        let k = rng.gen_range(1..=n.min(5));
        let mut coefs = Vec::new();
        for _ in 0..k {
            coefs.push((rng.gen_range(0..n), coef(&mut rng)));
        }
        let has_cont = coefs.iter().any(|&(j, _)| j >= n_int);
        let act: f64 = coefs.iter().map(|&(j, a)| a * anchor[j]).sum();
        let sense = match rng.gen_range(0..5) {
            0 if has_cont => RowSense::Eq,
            0 | 1 => RowSense::Ge,
            _ => RowSense::Le,
        };
        let slack = if loose { rng.gen_range(0.0..3.0) } else { rng.gen_range(-3.0..3.0) };
        let rhs = match sense {
            RowSense::Le => act + slack,
            RowSense::Ge => act - slack,
            RowSense::Eq => act,
        };
        lp.add_row(coefs, sense, (rhs * 1000.0).round() / 1000.0);
    }
    let mut p = MilpProblem::new(lp);
    p.int_vars.extend(0..n_int);
    p
}
