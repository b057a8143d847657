//! The closed-form bang / constrained / singular example on `(0, 1) x (0, 3)`.
//!
//! Every field of the example is a multiple of the first sine mode
//! `c_1(x) = sqrt(2) sin(pi x)`, so the PDE collapses to scalar ODEs for the
//! modal coefficients. The junctions are `log 2` (upper bound to state
//! constraint) and `2` (state constraint to singular arc).

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::config::load_problem;
use crate::problem::expr::Side;
use crate::problem::{Discretization, Grid, ProblemSpec, TimeSamples};

/// JSON configuration of the example.
pub const EXAMPLE_CONFIG: &str = include_str!("../data/example.json");

/// Same as [`EXAMPLE_CONFIG`] except that the running target on the first
/// arc is `0.5 e^t` instead of `1.5 e^t`, which flips the sign of the
/// costate there while leaving the state untouched.
pub const NEGATED_COSTATE_CONFIG: &str = include_str!("../data/example_negated_costate.json");

/// Junction times.
pub const JUNCTIONS: [f64; 2] = [LN_2, 2.0];

pub fn example_spec() -> ProblemSpec {
    load_problem(EXAMPLE_CONFIG).expect("bundled example config is valid")
}

pub fn negated_costate_spec() -> ProblemSpec {
    load_problem(NEGATED_COSTATE_CONFIG).expect("bundled fixture config is valid")
}

/// Example discretization with `log 2`, `1` and `2` as time nodes.
pub fn example_discretization(nx: usize, nt: usize) -> Result<Discretization> {
    Discretization::with_grid(&example_spec(), nx, nt, &JUNCTIONS)
}

/// Modal values of the optimal solution at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleTruth {
    pub t: f64,
    pub u_bar: f64,
    pub y1_bar: f64,
    pub p1: f64,
    pub mu1_dot: f64,
    pub yhat_d: f64,
}

impl ExampleTruth {
    /// `Psi_1 = int b_1 ybar p = p_1 ybar_1` (using `int c_1^2 = 1`).
    pub fn psi1(&self) -> f64 {
        self.p1 * self.y1_bar
    }

    /// Closed-form time derivative of `ybar_1`.
    pub fn y1_bar_dot(&self) -> f64 {
        match arc_of(self.t, Side::Right) {
            0 => self.y1_bar,
            1 => 0.0,
            _ => -1.0,
        }
    }
}

// 0: (0, log 2), 1: (log 2, 2), 2: (2, 3); `side` picks the arc at a junction
fn arc_of(t: f64, side: Side) -> usize {
    let after = |tau: f64| match side {
        Side::Left => t > tau,
        Side::Right => t >= tau,
    };
    JUNCTIONS.iter().filter(|&&tau| after(tau)).count()
}

fn yhat_d(t: f64, side: Side) -> f64 {
    let after = |tau: f64| match side {
        Side::Left => t > tau,
        Side::Right => t >= tau,
    };
    if after(1.0) {
        4.0 - t
    } else if after(LN_2) {
        3.0
    } else {
        1.5 * t.exp()
    }
}

/// Closed-form solution at `t`; at a junction `side` selects the one-sided
/// limit.
pub fn example_truth(t: f64, side: Side) -> Result<ExampleTruth> {
    if !(0.0..=3.0).contains(&t) {
        return Err(Error::TimeOutOfRange(t));
    }
    let yd = yhat_d(t, side);
    let (u_bar, y1_bar, p1, mu1_dot) = match arc_of(t, side) {
        0 => (PI * PI + 1.0, t.exp(), t.exp() / 4.0 - (-t).exp(), 0.0),
        1 => (PI * PI, 2.0, 0.0, yd - 2.0),
        _ => (PI * PI - 1.0 / yd, 4.0 - t, 0.0, 0.0),
    };
    Ok(ExampleTruth { t, u_bar, y1_bar, p1, mu1_dot, yhat_d: yd })
}

/// Optimal control and state-constraint density sampled on `grid`, with
/// one-sided limits at the junctions.
pub fn example_candidate(grid: &Grid) -> (TimeSamples, TimeSamples) {
    let sample = |pick: fn(&ExampleTruth) -> f64| {
        TimeSamples::from_fn(grid, 1, |t, side| vec![pick(&example_truth(t, side).expect("grid inside [0, 3]"))])
    };
    (sample(|e| e.u_bar), sample(|e| e.mu1_dot))
}

/// Integrates `y_1' = (u(t) - pi^2) y_1`, `y_1(0) = 1` with classical RK4,
/// `rk_substeps` steps per interval of `times`. `u(t, side)` is evaluated
/// from the right at the start of each interval and from the left at its
/// end, so jumps placed at entries of `times` are resolved exactly.
pub fn ode_oracle_fn(u: impl Fn(f64, Side) -> f64, times: &[f64], rk_substeps: usize) -> Vec<f64> {
    let substeps = rk_substeps.max(1);
    let pi2 = PI * PI;
    let mut y = 1.0;
    let mut out = Vec::with_capacity(times.len());
    out.push(y);
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / substeps as f64;
        let rhs = |s: f64, side: Side, y: f64| (u(s, side) - pi2) * y;
        for j in 0..substeps {
            let s0 = a + j as f64 * h;
            let s1 = if j + 1 == substeps { b } else { s0 + h };
            let sm = 0.5 * (s0 + s1);
            let k1 = rhs(s0, Side::Right, y);
            let k2 = rhs(sm, Side::Right, y + 0.5 * h * k1);
            let k3 = rhs(sm, Side::Right, y + 0.5 * h * k2);
            let k4 = rhs(s1, Side::Left, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(y);
    }
    out
}

/// [`ode_oracle_fn`] for grid samples; inside each cell the control is the
/// linear interpolant of its right limit at the start and left limit at the
/// end, which is what the PDE solvers see.
pub fn ode_oracle(grid: &Grid, u: &TimeSamples, rk_substeps: usize) -> Vec<f64> {
    let t = &grid.t;
    let interp = |s: f64, side: Side| {
        let k = match side {
            Side::Right => t.partition_point(|&v| v <= s).saturating_sub(1).min(grid.n_steps() - 1),
            Side::Left => t.partition_point(|&v| v < s).saturating_sub(1),
        };
        let th = (s - t[k]) / grid.step(k);
        (1.0 - th) * u.at(k, 0, Side::Right) + th * u.at(k + 1, 0, Side::Left)
    };
    ode_oracle_fn(interp, t, rk_substeps)
}

/// CSV text of the example candidate: header `t,u1,mu_dot1`, one row per
/// node and a second row at each junction holding the right limits.
pub fn candidate_csv(grid: &Grid) -> String {
    let (u, mu_dot) = example_candidate(grid);
    let mut s = String::from("t,u1,mu_dot1\n");
    for (k, &t) in grid.t.iter().enumerate() {
        s.push_str(&format!("{t:.17e},{:.17e},{:.17e}\n", u.left()[[k, 0]], mu_dot.left()[[k, 0]]));
        if u.left()[[k, 0]] != u.right()[[k, 0]] || mu_dot.left()[[k, 0]] != mu_dot.right()[[k, 0]] {
            s.push_str(&format!("{t:.17e},{:.17e},{:.17e}\n", u.right()[[k, 0]], mu_dot.right()[[k, 0]]));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::eval_state_constraint;

    #[test]
    fn bounds_and_boundary() {
        let spec = example_spec();
        assert_eq!(spec.u_lower, vec![-1.0]);
        assert!((spec.u_upper[0] - (PI * PI + 1.0)).abs() < 1e-14);
        assert!(spec.initial_state.eval(0.0, 0.0).abs() < 1e-15);
        assert!(spec.initial_state.eval(1.0, 0.0).abs() < 1e-15);
    }

    #[test]
    fn truth_samples() {
        let e = example_truth(0.5, Side::Left).unwrap();
        assert_eq!(e.u_bar, PI * PI + 1.0);
        assert_eq!(e.y1_bar, 0.5f64.exp());
        assert_eq!(e.p1, 0.5f64.exp() / 4.0 - (-0.5f64).exp());
        assert_eq!(e.mu1_dot, 0.0);
        assert_eq!(example_truth(0.8, Side::Left).unwrap().mu1_dot, 1.0);
        assert!((example_truth(1.5, Side::Left).unwrap().mu1_dot - 0.5).abs() < 1e-15);
        assert!(example_truth(3.1, Side::Left).is_err());
        assert!(example_truth(-0.1, Side::Left).is_err());
    }

    #[test]
    fn truth_limits_at_junctions() {
        let l = example_truth(LN_2, Side::Left).unwrap();
        let r = example_truth(LN_2, Side::Right).unwrap();
        assert_eq!(l.u_bar, PI * PI + 1.0);
        assert_eq!(r.u_bar, PI * PI);
        assert!((l.y1_bar - 2.0).abs() < 1e-15 && r.y1_bar == 2.0);
        assert!(l.p1.abs() < 1e-15);
        assert_eq!((l.mu1_dot, r.mu1_dot), (0.0, 1.0));
        let l = example_truth(2.0, Side::Left).unwrap();
        let r = example_truth(2.0, Side::Right).unwrap();
        assert_eq!((l.u_bar, r.u_bar), (PI * PI, PI * PI - 0.5));
        assert_eq!((l.mu1_dot, r.mu1_dot), (0.0, 0.0));
    }

    #[test]
    fn truth_invariants() {
        for k in 0..=3000 {
            let t = 3.0 * k as f64 / 3000.0;
            for side in [Side::Left, Side::Right] {
                let e = example_truth(t, side).unwrap();
                assert!(e.u_bar >= -1.0 && e.u_bar <= PI * PI + 1.0);
                assert!(e.y1_bar <= 2.0 + 1e-15);
                assert!(e.mu1_dot >= 0.0);
                assert!(e.p1 <= 1e-15);
                if e.mu1_dot > 0.0 {
                    assert!((LN_2..=2.0).contains(&t));
                }
            }
        }
    }

    #[test]
    fn constraint_on_third_arc() {
        let spec = example_spec();
        let disc = Discretization::with_grid(&spec, 64, 30, &JUNCTIONS).unwrap();
        let k = disc.grid.node_of(2.5).unwrap();
        let mut y = crate::problem::Field::zeros((disc.grid.n_times(), disc.grid.n_space()));
        for (i, &c) in disc.c[0].iter().enumerate() {
            y[[k, i]] = 1.5 * c;
        }
        assert!((eval_state_constraint(&disc, &y, k)[0] + 0.5).abs() < 1e-13);
    }

    #[test]
    fn oracle_reproduces_closed_form() {
        let times: Vec<f64> = {
            let spec = example_spec();
            Grid::with_breakpoints(&spec, 8, 300, &JUNCTIONS).unwrap().t
        };
        let y = ode_oracle_fn(|t, side| example_truth(t, side).unwrap().u_bar, &times, 10);
        let worst = times
            .iter()
            .zip(&y)
            .map(|(&t, &v)| (v - example_truth(t, Side::Left).unwrap().y1_bar).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "worst {worst:e}");
    }

    #[test]
    fn oracle_trivial_controls() {
        let times: Vec<f64> = (0..=30).map(|k| k as f64 * 0.1).collect();
        let y = ode_oracle_fn(|_, _| PI * PI, &times, 4);
        assert!(y.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let y = ode_oracle_fn(|_, _| 0.0, &times, 100);
        for (&t, &v) in times.iter().zip(&y) {
            let exact = (-PI * PI * t).exp();
            assert!((v - exact).abs() <= 1e-6 * exact.max(1e-12) + 1e-14, "t {t}: {v} vs {exact}");
        }
    }

    #[test]
    fn sampled_oracle_matches_closure_oracle() {
        let spec = example_spec();
        let grid = Grid::with_breakpoints(&spec, 8, 600, &JUNCTIONS).unwrap();
        let (u, _) = example_candidate(&grid);
        let a = ode_oracle(&grid, &u, 4);
        let b = ode_oracle_fn(|t, side| example_truth(t, side).unwrap().u_bar, &grid.t, 4);
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-5, "{worst:e}");
    }

    #[test]
    fn candidate_csv_duplicates_junction_rows() {
        let spec = example_spec();
        let grid = Grid::with_breakpoints(&spec, 8, 30, &JUNCTIONS).unwrap();
        let text = candidate_csv(&grid);
        assert_eq!(text.lines().count(), 1 + grid.n_times() + 2);
    }
}
