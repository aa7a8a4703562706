//! Best-first branch-and-bound over LP relaxations.
//!
//! Until the first incumbent exists the search dives depth-first, taking the
//! child on the rounding side of the branching variable first. Afterwards
//! nodes are expanded in order of their parent's LP bound; equal bounds go
//! to the deeper node, then to the lower branching index. Children reuse the
//! parent's optimal basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use crate::error::MilpError;
use crate::problem::MilpProblem;
use crate::simplex::{self, Basis, LpStatus, StandardForm};
use crate::solution::{MilpSolution, Status};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilpLimits {
    pub max_nodes: usize,
    /// Relative gap `(incumbent - bound) / max(|incumbent|, 1)` accepted as optimal.
    pub gap_tol: f64,
}

impl Default for MilpLimits {
    fn default() -> Self {
        Self { max_nodes: 100_000, gap_tol: 1e-6 }
    }
}

struct Node {
    changes: Vec<(usize, f64, f64)>,
    bound: f64,
    depth: usize,
    branch_var: usize,
    warm: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap pops the maximum, so "greater" means "expand first".
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.branch_var.cmp(&self.branch_var))
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound).max(0.0)) / incumbent.abs().max(1.0)
}

const ROUNDING_PERIOD_NO_INCUMBENT: usize = 10;
const ROUNDING_PERIOD: usize = 50;

/// Primal heuristic: fixes every integer variable at its rounded relaxation
/// value (nearest, then upward) and re-solves the remaining LP.
fn round_and_fix(
    p: &MilpProblem,
    sf: &StandardForm,
    bounds: &[(f64, f64)],
    x: &[f64],
    warm: &Basis,
    tol: &Tolerances,
) -> Result<Option<(Vec<f64>, f64, usize)>, MilpError> {
    let mut iterations = 0;
    let mut fixed = bounds.to_vec();
    for up in [false, true] {
        for &j in &p.int_vars {
            let v = x[j];
            let r = if up { (v - tol.integrality).ceil() } else { v.round() };
            let (lo, hi) = bounds[j];
            let r = r.clamp(lo, hi);
            fixed[j] = (r, r);
        }
        let res = simplex::solve(sf, &fixed, Some(warm), tol)?;
        iterations += res.iterations;
        if res.status == LpStatus::Optimal {
            return Ok(Some((res.x, res.objective, iterations)));
        }
    }
    Ok(None)
}

pub(crate) fn branch_and_bound(
    p: &MilpProblem,
    limits: &MilpLimits,
    tol: &Tolerances,
) -> Result<MilpSolution, MilpError> {
    p.validate()?;
    let sf = StandardForm::new(&p.base);
    let mut root_bounds = p.base.bounds.clone();
    for &j in &p.int_vars {
        let (lo, hi) = root_bounds[j];
        root_bounds[j] = ((lo - tol.integrality).ceil(), (hi + tol.integrality).floor());
    }

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut dive: Vec<Node> = vec![Node {
        changes: Vec::new(),
        bound: f64::NEG_INFINITY,
        depth: 0,
        branch_var: 0,
        warm: None,
    }];
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut bounds = root_bounds.clone();

    loop {
        let open_bound = heap
            .peek()
            .map(|n| n.bound)
            .into_iter()
            .chain(dive.iter().map(|n| n.bound))
            .fold(f64::INFINITY, f64::min);
        if let Some((x, obj)) = &incumbent {
            let gap = if heap.is_empty() && dive.is_empty() { 0.0 } else { relative_gap(*obj, open_bound) };
            if gap <= limits.gap_tol {
                return Ok(MilpSolution {
                    status: Status::Optimal,
                    x: x.clone(),
                    objective: *obj,
                    gap,
                    node_count: nodes,
                    iterations,
                    row_duals: Vec::new(),
                });
            }
            if nodes >= limits.max_nodes {
                return Ok(MilpSolution {
                    status: Status::GapLimit,
                    x: x.clone(),
                    objective: *obj,
                    gap,
                    node_count: nodes,
                    iterations,
                    row_duals: Vec::new(),
                });
            }
        } else if heap.is_empty() && dive.is_empty() {
            return Ok(MilpSolution::without_point(Status::Infeasible, nodes, iterations));
        } else if nodes >= limits.max_nodes {
            return Err(MilpError::NoIncumbent);
        }

        if incumbent.is_some() && !dive.is_empty() {
            heap.extend(dive.drain(..));
        }
        let node = match dive.pop() {
            Some(n) => n,
            None => heap.pop().expect("open node"),
        };
        let cutoff = incumbent.as_ref().map(|(_, obj)| obj - limits.gap_tol * obj.abs().max(1.0));
        if let Some(c) = cutoff {
            if node.bound >= c {
                continue;
            }
        }

        bounds.copy_from_slice(&root_bounds);
        for &(j, lo, hi) in &node.changes {
            bounds[j] = (lo, hi);
        }
        nodes += 1;
        let res = simplex::solve(&sf, &bounds, node.warm.as_deref(), tol)?;
        iterations += res.iterations;
        match res.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    return Ok(MilpSolution::without_point(Status::Unbounded, nodes, iterations));
                }
                continue;
            }
            LpStatus::Optimal => {}
        }
        if let Some(c) = cutoff {
            if res.objective >= c {
                continue;
            }
        }

        let mut branch: Option<(usize, f64)> = None;
        let mut best_dist = tol.integrality;
        for &j in &p.int_vars {
            let v = res.x[j];
            let dist = (v - v.round()).abs();
            if dist > best_dist {
                best_dist = dist;
                branch = Some((j, v));
            }
        }
        let Some((j, v)) = branch else {
            if incumbent.as_ref().map_or(true, |(_, obj)| res.objective < *obj) {
                incumbent = Some((res.x, res.objective));
            }
            continue;
        };
        let period = if incumbent.is_none() { ROUNDING_PERIOD_NO_INCUMBENT } else { ROUNDING_PERIOD };
        if nodes == 1 || nodes % period == 0 {
            if let Some((x, obj, iters)) = round_and_fix(p, &sf, &bounds, &res.x, &res.basis, tol)? {
                iterations += iters;
                if incumbent.as_ref().map_or(true, |(_, best)| obj < *best) {
                    incumbent = Some((x, obj));
                }
            }
        }

        let warm = Some(Rc::new(res.basis));
        let (lo, hi) = bounds[j];
        let mut down = node.changes.clone();
        down.retain(|&(k, _, _)| k != j);
        let mut up = down.clone();
        down.push((j, lo, v.floor()));
        up.push((j, v.ceil(), hi));
        let make = |changes| Node { changes, bound: res.objective, depth: node.depth + 1, branch_var: j, warm: warm.clone() };
        let (first, second) = if v - v.floor() >= 0.5 { (make(up), make(down)) } else { (make(down), make(up)) };
        if incumbent.is_none() {
            // popped last-in-first-out: rounding side first
            dive.push(second);
            dive.push(first);
        } else {
            heap.push(first);
            heap.push(second);
        }
    }
}
