//! Finite-difference solvers on the space-time grid.
//!
//! Space uses the second-order central Laplacian with Dirichlet rows; time
//! uses the theta scheme (`theta = 1/2` Crank-Nicolson, `theta = 1`
//! implicit Euler). Time-dependent data is taken from the right at the
//! start of each step and from the left at its end, so jumps placed on
//! grid nodes are never smeared.

mod evolution;
pub mod io;
mod tridiag;

pub use evolution::{
    apply_a, cost, discrete_adjoint, estimate_m1, laplacian, solve_costate, solve_linearized, solve_state,
    solve_zeta, solve_zeta_batch, step_potential, CostBreakdown, EvolutionOptions, Potential, Scheme, ZetaBatch,
};
pub use tridiag::{solve_tridiagonal, TridiagFactor};

#[cfg(test)]
mod tests;
