//! Numerical tolerances shared by the solvers and the identity checks.

use serde::{Deserialize, Serialize};

/// Tolerances in force for a computation. Echoed into every report so a
/// result can be reproduced with the same acceptance thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative residual accepted from a linear solve.
    pub solve_residual: f64,
    /// Absolute tolerance for pointwise identities (Laplacians, sums).
    pub identity: f64,
    /// Accepted gap between primal and dual LP values.
    pub lp_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { solve_residual: 1e-10, identity: 1e-9, lp_gap: 1e-8 }
    }
}
