//! Problem data, grids, sampled fields and the running state constraints.

pub mod config;
pub mod expr;
mod discrete;
mod grid;
mod types;

pub use discrete::{Discretization, SidedField};
pub use grid::Grid;
pub use types::{Field, GohDirection, Multiplier, TimeSamples, Trajectory};

use expr::Expr;

use crate::error::{Error, Result};
use crate::quadrature::space_inner;

/// All data of one optimal control problem on a 1-D interval.
///
/// Functions are stored as [`Expr`] so that both the solvers and the test
/// oracles evaluate the exact same expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub horizon: f64,
    /// Coefficient of the cubic term.
    pub gamma: f64,
    /// Source term `f(x, t)`.
    pub source: Expr,
    pub initial_state: Expr,
    /// Fixed channel `b_0`, multiplied by the constant control `u_0 = 1`.
    pub drift: Expr,
    /// Control channels `b_1 .. b_m`.
    pub channels: Vec<Expr>,
    /// Linear control cost weights `alpha`.
    pub linear_cost: Vec<f64>,
    /// State-constraint densities `c_j`.
    pub constraint_densities: Vec<Expr>,
    /// State-constraint offsets `d_j`.
    pub constraint_offsets: Vec<f64>,
    pub running_target: Expr,
    pub terminal_target: Expr,
    pub u_lower: Vec<f64>,
    pub u_upper: Vec<f64>,
}

impl ProblemSpec {
    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn q(&self) -> usize {
        self.constraint_densities.len()
    }

    /// Breakpoints of every piecewise-in-time function in the problem.
    pub fn time_breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = [&self.source, &self.running_target]
            .iter()
            .flat_map(|e| e.breakpoints())
            .filter(|&b| b > 0.0 && b < self.horizon)
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) || !self.x_min.is_finite() || !self.x_max.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "spatial interval ({}, {}) is empty",
                self.x_min, self.x_max
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon {} must be > 0", self.horizon)));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidProblem(format!("gamma {} must be >= 0", self.gamma)));
        }
        let m = self.m();
        if m == 0 {
            return Err(Error::InvalidProblem("at least one control channel is required".into()));
        }
        for (name, len) in [
            ("linear_cost", self.linear_cost.len()),
            ("bounds.lower", self.u_lower.len()),
            ("bounds.upper", self.u_upper.len()),
        ] {
            if len != m {
                return Err(Error::InvalidProblem(format!("{name} has length {len}, expected m = {m}")));
            }
        }
        if self.constraint_offsets.len() != self.q() {
            return Err(Error::InvalidProblem(format!(
                "{} constraint offsets for {} densities",
                self.constraint_offsets.len(),
                self.q()
            )));
        }
        for (i, (&lo, &hi)) in self.u_lower.iter().zip(&self.u_upper).enumerate() {
            if !(lo < hi) {
                return Err(Error::DegenerateBounds { index: i, lower: lo, upper: hi });
            }
        }

        let mut spatial: Vec<(String, &Expr)> = vec![
            ("initial_state".into(), &self.initial_state),
            ("drift".into(), &self.drift),
            ("terminal_target".into(), &self.terminal_target),
        ];
        spatial.extend(self.channels.iter().enumerate().map(|(i, e)| (format!("channels[{i}]"), e)));
        spatial.extend(
            self.constraint_densities
                .iter()
                .enumerate()
                .map(|(j, e)| (format!("constraints[{j}].density"), e)),
        );
        for (name, e) in &spatial {
            if e.depends_on_t() {
                return Err(Error::InvalidProblem(format!("{name} must not depend on t")));
            }
        }

        let mut vanishing: Vec<(String, &Expr)> = vec![
            ("initial_state".into(), &self.initial_state),
            ("terminal_target".into(), &self.terminal_target),
        ];
        vanishing.extend(
            self.constraint_densities
                .iter()
                .enumerate()
                .map(|(j, e)| (format!("constraints[{j}].density"), e)),
        );
        for (name, e) in vanishing {
            let scale = (0..=32)
                .map(|k| {
                    let x = self.x_min + (self.x_max - self.x_min) * k as f64 / 32.0;
                    e.eval(x, 0.0).abs()
                })
                .fold(1.0, f64::max);
            for x in [self.x_min, self.x_max] {
                let v = e.eval(x, 0.0);
                if !(v.abs() <= 1e-9 * scale) {
                    return Err(Error::BoundaryCompatibility { field: name, x, value: v });
                }
            }
        }
        Ok(())
    }
}

/// `g_j(y(., t_k)) = int c_j y dx + d_j` for every constraint, by the
/// trapezoid rule on the grid.
pub fn eval_state_constraint(disc: &Discretization, y: &Field, t_index: usize) -> Vec<f64> {
    let row = y.row(t_index);
    let row = row.as_slice().expect("field rows are contiguous");
    disc.c
        .iter()
        .zip(&disc.spec.constraint_offsets)
        .map(|(c, &d)| space_inner(disc.grid.dx, c, row) + d)
        .collect()
}

/// `g_j` at every time node; shape `(nodes, q)`.
pub fn state_constraint_series(disc: &Discretization, y: &Field) -> ndarray::Array2<f64> {
    let n = disc.grid.n_times();
    let q = disc.spec.q();
    let mut out = ndarray::Array2::zeros((n, q));
    for k in 0..n {
        for (j, g) in eval_state_constraint(disc, y, k).into_iter().enumerate() {
            out[[k, j]] = g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;

    #[test]
    fn constraint_of_zero_field_is_offset() {
        let spec = example::example_spec();
        let disc = Discretization::new(&spec, Grid::uniform(&spec, 20, 30).unwrap());
        let y = Field::zeros((disc.grid.n_times(), disc.grid.n_space()));
        assert_eq!(eval_state_constraint(&disc, &y, 3), vec![-2.0]);
    }

    #[test]
    fn constraint_of_twice_density_is_zero() {
        // int 2 c_1^2 = 2 and d_1 = -2; trapezoid is exact for sin^2 over a period
        let spec = example::example_spec();
        let disc = Discretization::new(&spec, Grid::uniform(&spec, 40, 30).unwrap());
        let mut y = Field::zeros((disc.grid.n_times(), disc.grid.n_space()));
        for k in 0..disc.grid.n_times() {
            for (i, &c) in disc.c[0].iter().enumerate() {
                y[[k, i]] = 2.0 * c;
            }
        }
        let g = eval_state_constraint(&disc, &y, 5);
        assert!(g[0].abs() < 1e-13, "{g:?}");
    }

    #[test]
    fn constraint_refinement_is_second_order() {
        // y = e^x does not vanish at the boundary, so the endpoint derivative
        // terms of the trapezoid error survive
        let spec = example::example_spec();
        let exact = {
            // fine reference
            let disc = Discretization::new(&spec, Grid::uniform(&spec, 20_000, 2).unwrap());
            eval_state_constraint(&disc, &exp_field(&disc), 0)[0]
        };
        let errs: Vec<f64> = [20usize, 41, 83]
            .iter()
            .map(|&nx| {
                let disc = Discretization::new(&spec, Grid::uniform(&spec, nx, 2).unwrap());
                (eval_state_constraint(&disc, &exp_field(&disc), 0)[0] - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}, errs {errs:?}");
        }
    }

    fn exp_field(disc: &Discretization) -> Field {
        let mut y = Field::zeros((disc.grid.n_times(), disc.grid.n_space()));
        for k in 0..disc.grid.n_times() {
            for (i, &x) in disc.grid.x.iter().enumerate() {
                y[[k, i]] = x.exp();
            }
        }
        y
    }

    #[test]
    fn validation_errors() {
        let mut spec = example::example_spec();
        spec.u_upper[0] = spec.u_lower[0];
        assert!(matches!(spec.validate(), Err(Error::DegenerateBounds { .. })));

        let mut spec = example::example_spec();
        spec.initial_state = Expr::parse("x").unwrap();
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("boundary compatibility"), "{err}");

        let mut spec = example::example_spec();
        spec.channels[0] = Expr::parse("1 + t").unwrap();
        assert!(matches!(spec.validate(), Err(Error::InvalidProblem(_))));

        let mut spec = example::example_spec();
        spec.gamma = -1.0;
        assert!(matches!(spec.validate(), Err(Error::InvalidProblem(_))));
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::example;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn constraint_is_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let spec = example::example_spec();
            let disc = Discretization::new(&spec, Grid::uniform(&spec, 24, 4).unwrap());
            let shape = (disc.grid.n_times(), disc.grid.n_space());
            let mk = |s: u64| {
                Field::from_shape_fn(shape, |(k, i)| {
                    let x = disc.grid.x[i];
                    ((s as f64 + 1.0) * x).sin() * (x * (1.0 - x)) * (k as f64 + 1.0)
                })
            };
            let (y1, y2) = (mk(seed), mk(seed + 7));
            let combo = &y1 * a + &y2 * b;
            let lhs = eval_state_constraint(&disc, &combo, 2)[0] + (a + b - 1.0) * -2.0;
            let rhs = a * eval_state_constraint(&disc, &y1, 2)[0] + b * eval_state_constraint(&disc, &y2, 2)[0];
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
