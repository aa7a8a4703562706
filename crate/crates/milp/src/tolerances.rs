/// Every numeric threshold used by the simplex and branch-and-bound code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal bound/row violation accepted as feasible.
    pub primal_feas: f64,
    /// Reduced-cost magnitude accepted as optimal.
    pub dual_feas: f64,
    /// Entries of a transformed column below this are treated as zero in the ratio test.
    pub pivot_candidate: f64,
    /// LU pivots below this mean the basis is numerically singular.
    pub pivot_zero: f64,
    /// Distance to the nearest integer accepted as integral.
    pub integrality: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Eta updates kept before the basis is refactorised.
    pub refactor_interval: usize,
}

pub const DEFAULT_TOLERANCES: Tolerances = Tolerances {
    primal_feas: 1e-9,
    dual_feas: 1e-9,
    pivot_candidate: 1e-9,
    pivot_zero: 1e-11,
    integrality: 1e-6,
    bland_after: 1000,
    refactor_interval: 64,
};

impl Default for Tolerances {
    fn default() -> Self {
        DEFAULT_TOLERANCES
    }
}
