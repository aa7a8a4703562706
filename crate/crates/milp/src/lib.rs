//! A self-contained mixed-integer linear programming solver.
//!
//! LP relaxations are solved with a bounded-variable revised primal simplex
//! over a sparse LU factorisation of the basis; integrality is enforced by
//! best-first branch-and-bound with most-fractional branching.
//!
//! ```
//! use mesbench_milp::{solve_lp, LpProblem, RowSense, Status};
//!
//! let mut lp = LpProblem::new();
//! let x = lp.add_var(-1.0, 0.0, f64::INFINITY);
//! lp.add_row([(x, 1.0)], RowSense::Le, 1.0);
//! let sol = solve_lp(&lp).unwrap();
//! assert_eq!(sol.status, Status::Optimal);
//! assert!((sol.x[0] - 1.0).abs() < 1e-9);
//! ```

mod bnb;
mod error;
mod lpfile;
mod lu;
mod problem;
mod simplex;
mod solution;
mod tolerances;
pub mod verify;

pub use bnb::MilpLimits;
pub use error::MilpError;
pub use lpfile::{read_lp, write_lp};
pub use problem::{LpProblem, MilpProblem, Row, RowSense};
pub use solution::{MilpSolution, Status};
pub use tolerances::{Tolerances, DEFAULT_TOLERANCES};

use simplex::{LpStatus, StandardForm};

pub fn solve_lp(p: &LpProblem) -> Result<MilpSolution, MilpError> {
    solve_lp_with(p, &DEFAULT_TOLERANCES)
}

pub fn solve_lp_with(p: &LpProblem, tol: &Tolerances) -> Result<MilpSolution, MilpError> {
    p.validate()?;
    let sf = StandardForm::new(p);
    let res = simplex::solve(&sf, &p.bounds, None, tol)?;
    let status = match res.status {
        LpStatus::Optimal => Status::Optimal,
        LpStatus::Infeasible => Status::Infeasible,
        LpStatus::Unbounded => Status::Unbounded,
    };
    if status != Status::Optimal {
        return Ok(MilpSolution::without_point(status, 1, res.iterations));
    }
    Ok(MilpSolution {
        status,
        x: res.x,
        objective: res.objective,
        gap: 0.0,
        node_count: 1,
        iterations: res.iterations,
        row_duals: res.duals,
    })
}

pub fn solve_milp(p: &MilpProblem, limits: &MilpLimits) -> Result<MilpSolution, MilpError> {
    bnb::branch_and_bound(p, limits, &DEFAULT_TOLERANCES)
}

pub fn solve_milp_with(p: &MilpProblem, limits: &MilpLimits, tol: &Tolerances) -> Result<MilpSolution, MilpError> {
    bnb::branch_and_bound(p, limits, tol)
}
