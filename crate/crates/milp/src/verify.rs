//! Independent feasibility check of a candidate point. Shares no code with
//! the solver beyond the problem container.

use crate::problem::{MilpProblem, RowSense};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Violation {
    pub max_row: f64,
    pub max_bound: f64,
    pub max_integrality: f64,
}

impl Violation {
    pub fn worst(&self) -> f64 {
        self.max_row.max(self.max_bound).max(self.max_integrality)
    }
}

pub fn measure(p: &MilpProblem, x: &[f64]) -> Violation {
    let mut v = Violation::default();
    if x.len() != p.base.num_vars() {
        return Violation { max_row: f64::INFINITY, max_bound: f64::INFINITY, max_integrality: f64::INFINITY };
    }
    for row in &p.base.rows {
        let act: f64 = row.coefs.iter().map(|&(j, a)| a * x[j]).sum();
        let viol = match row.sense {
            RowSense::Le => act - row.rhs,
            RowSense::Ge => row.rhs - act,
            RowSense::Eq => (act - row.rhs).abs(),
        };
        v.max_row = v.max_row.max(viol);
    }
    for (xj, &(lo, hi)) in x.iter().zip(&p.base.bounds) {
        v.max_bound = v.max_bound.max(lo - xj).max(xj - hi);
    }
    for &j in &p.int_vars {
        v.max_integrality = v.max_integrality.max((x[j] - x[j].round()).abs());
    }
    v
}

/// `Ok` when every row, bound and integrality requirement holds within `tol`.
pub fn check(p: &MilpProblem, x: &[f64], tol: f64) -> Result<(), Violation> {
    let v = measure(p, x);
    if v.worst() <= tol {
        Ok(())
    } else {
        Err(v)
    }
}
