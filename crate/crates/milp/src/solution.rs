#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Node budget exhausted; `x` is the best incumbent and `gap` its proven bound.
    GapLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub node_count: usize,
    pub iterations: usize,
    /// Row multipliers of the final LP (`d = c - A'y`). Empty for MILP solves.
    pub row_duals: Vec<f64>,
}

impl MilpSolution {
    pub(crate) fn without_point(status: Status, node_count: usize, iterations: usize) -> Self {
        let objective = match status {
            Status::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        Self { status, x: Vec::new(), objective, gap: f64::INFINITY, node_count, iterations, row_duals: Vec::new() }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}
