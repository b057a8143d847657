use ndarray::{Array1, Array2, ArrayView1};

use super::expr::Side;
use super::Grid;
use crate::error::{Error, Result};

/// Space-time field, one row per time node and one column per spatial node
/// (boundary nodes included).
pub type Field = Array2<f64>;

/// Vector-valued function of time sampled at the time nodes, with separate
/// left and right limits so that jumps at nodes are represented exactly.
///
/// Both arrays have shape `(time nodes, dim)`. Where the function is
/// continuous the two arrays agree.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSamples {
    left: Array2<f64>,
    right: Array2<f64>,
}

impl TimeSamples {
    pub fn zeros(n_times: usize, dim: usize) -> Self {
        let a = Array2::zeros((n_times, dim));
        TimeSamples { left: a.clone(), right: a }
    }

    /// Continuous samples.
    pub fn from_nodal(values: Array2<f64>) -> Self {
        TimeSamples { right: values.clone(), left: values }
    }

    pub fn with_jumps(left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        if left.dim() != right.dim() {
            return Err(Error::Shape(format!("left {:?} vs right {:?}", left.dim(), right.dim())));
        }
        Ok(TimeSamples { left, right })
    }

    /// Samples `f(t, side)` at every node of `grid`.
    pub fn from_fn(grid: &Grid, dim: usize, f: impl Fn(f64, Side) -> Vec<f64>) -> Self {
        let n = grid.n_times();
        let mut left = Array2::zeros((n, dim));
        let mut right = Array2::zeros((n, dim));
        for (k, &t) in grid.t.iter().enumerate() {
            let l = f(t, Side::Left);
            let r = f(t, Side::Right);
            for i in 0..dim {
                left[[k, i]] = l[i];
                right[[k, i]] = r[i];
            }
        }
        TimeSamples { left, right }
    }

    pub fn n_times(&self) -> usize {
        self.left.nrows()
    }

    pub fn dim(&self) -> usize {
        self.left.ncols()
    }

    pub fn left(&self) -> &Array2<f64> {
        &self.left
    }

    pub fn right(&self) -> &Array2<f64> {
        &self.right
    }

    pub fn left_row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.left.row(k)
    }

    pub fn right_row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.right.row(k)
    }

    pub fn at(&self, k: usize, i: usize, side: Side) -> f64 {
        match side {
            Side::Left => self.left[[k, i]],
            Side::Right => self.right[[k, i]],
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> Self {
        TimeSamples { left: self.left.mapv(f), right: self.right.mapv(f) }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &TimeSamples) -> Self {
        TimeSamples { left: &self.left + &other.left, right: &self.right + &other.right }
    }

    pub fn sub(&self, other: &TimeSamples) -> Self {
        TimeSamples { left: &self.left - &other.left, right: &self.right - &other.right }
    }

    /// Component-wise clamp into `[lo[i], hi[i]]`.
    pub fn clamp(&self, lo: &[f64], hi: &[f64]) -> Self {
        let mut out = self.clone();
        for arr in [&mut out.left, &mut out.right] {
            for mut row in arr.rows_mut() {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = v.clamp(lo[i], hi[i]);
                }
            }
        }
        out
    }

    /// Nodes where some component jumps.
    pub fn jump_nodes(&self) -> Vec<usize> {
        (0..self.n_times())
            .filter(|&k| self.left.row(k).iter().zip(self.right.row(k)).any(|(a, b)| a != b))
            .collect()
    }

    /// Trapezoid integral of component `i` over the whole horizon.
    pub fn integral(&self, grid: &Grid, i: usize) -> f64 {
        (0..grid.n_steps())
            .map(|k| 0.5 * grid.step(k) * (self.right[[k, i]] + self.left[[k + 1, i]]))
            .sum()
    }

    /// Cumulative trapezoid integral from 0, shape `(time nodes, dim)`.
    pub fn cumulative(&self, grid: &Grid) -> Array2<f64> {
        let mut out = Array2::zeros(self.left.dim());
        for k in 0..grid.n_steps() {
            let h = grid.step(k);
            for i in 0..self.dim() {
                out[[k + 1, i]] = out[[k, i]] + 0.5 * h * (self.right[[k, i]] + self.left[[k + 1, i]]);
            }
        }
        out
    }

    /// Trapezoid L^2(0,T) norm over all components.
    pub fn l2_norm(&self, grid: &Grid) -> f64 {
        let sq = self.map(|v| v * v);
        (0..self.dim()).map(|i| sq.integral(grid, i)).sum::<f64>().sqrt()
    }
}

/// A control with its state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub u: TimeSamples,
    pub y: Field,
}

/// Costate with the absolutely continuous state-constraint multiplier; the
/// cost multiplier is fixed to one.
#[derive(Debug, Clone)]
pub struct Multiplier {
    pub p: Field,
    pub mu_dot: TimeSamples,
    /// `mu_j(t) = -int_t^T mu_dot_j`, so `mu(T) = 0`.
    pub mu: Array2<f64>,
}

impl Multiplier {
    pub fn new(grid: &Grid, p: Field, mu_dot: TimeSamples) -> Result<Self> {
        if mu_dot.left().iter().chain(mu_dot.right().iter()).any(|&v| v < 0.0) {
            return Err(Error::Candidate("state-constraint density mu_dot must be >= 0".into()));
        }
        let mu = mu_from_density(grid, &mu_dot);
        Ok(Multiplier { p, mu_dot, mu })
    }
}

/// `mu_j(t_k) = -int_{t_k}^T mu_dot_j` by the trapezoid rule.
pub fn mu_from_density(grid: &Grid, mu_dot: &TimeSamples) -> Array2<f64> {
    let cum = mu_dot.cumulative(grid);
    let last = cum.row(cum.nrows() - 1).to_owned();
    let mut mu = cum;
    for mut row in mu.rows_mut() {
        row -= &last;
    }
    mu
}

/// A transformed direction: `w = int v`, `zeta = z - B.w`, `h = w(T)`.
#[derive(Debug, Clone)]
pub struct GohDirection {
    pub zeta: Field,
    /// Shape `(time nodes, m)`.
    pub w: Array2<f64>,
    pub h: Array1<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;

    #[test]
    fn cumulative_of_constant() {
        let spec = example::example_spec();
        let g = Grid::with_breakpoints(&spec, 8, 30, &[std::f64::consts::LN_2]).unwrap();
        let v = TimeSamples::from_fn(&g, 1, |_, _| vec![1.0]);
        let w = v.cumulative(&g);
        for (k, &t) in g.t.iter().enumerate() {
            assert!((w[[k, 0]] - t).abs() < 1e-13);
        }
    }

    #[test]
    fn cumulative_exact_for_jumps() {
        // v = 0 before 2, 1 after: w = max(0, t - 2)
        let spec = example::example_spec();
        let g = Grid::with_breakpoints(&spec, 8, 25, &[2.0]).unwrap();
        let v = TimeSamples::from_fn(&g, 1, |t, side| {
            let on = match side {
                Side::Left => t > 2.0,
                Side::Right => t >= 2.0,
            };
            vec![if on { 1.0 } else { 0.0 }]
        });
        let w = v.cumulative(&g);
        for (k, &t) in g.t.iter().enumerate() {
            assert!((w[[k, 0]] - (t - 2.0).max(0.0)).abs() < 1e-13);
        }
        assert_eq!(v.jump_nodes(), vec![g.node_of(2.0).unwrap()]);
    }

    #[test]
    fn mu_vanishes_at_horizon() {
        let spec = example::example_spec();
        let g = Grid::uniform(&spec, 8, 30).unwrap();
        let md = TimeSamples::from_fn(&g, 1, |t, _| vec![t]);
        let mu = mu_from_density(&g, &md);
        assert_eq!(mu[[30, 0]], 0.0);
        assert!((mu[[0, 0]] + 4.5).abs() < 1e-12);
        assert!(mu.column(0).to_vec().windows(2).all(|w| w[1] >= w[0]));
        assert!(Multiplier::new(&g, Field::zeros((31, 10)), md.scaled(-1.0)).is_err());
    }
}
