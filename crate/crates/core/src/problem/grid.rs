use serde::Serialize;

use super::ProblemSpec;
use crate::error::{Error, Result};

/// Uniform spatial grid with `nx` interior nodes plus the two boundary
/// nodes, and a time grid that is uniform except where breakpoints were
/// inserted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    /// Interior spatial node count.
    pub nx: usize,
    /// Requested (uniform) time step count.
    pub nt: usize,
    pub dx: f64,
    /// Uniform step `T / nt`; actual steps differ only next to breakpoints.
    pub dt: f64,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl Grid {
    pub fn uniform(spec: &ProblemSpec, nx: usize, nt: usize) -> Result<Grid> {
        Grid::with_breakpoints(spec, nx, nt, &[])
    }

    /// Builds the grid and makes every breakpoint in `(0, T)` a time node.
    ///
    /// The nearest uniform node is moved onto the breakpoint, so steps stay
    /// between `dt / 2` and `3 dt / 2` and no sliver cells appear. When that
    /// node is already taken (an end or an earlier breakpoint) the cell is
    /// split instead.
    pub fn with_breakpoints(spec: &ProblemSpec, nx: usize, nt: usize, breakpoints: &[f64]) -> Result<Grid> {
        if nx < 2 || nt < 1 {
            return Err(Error::InvalidGrid(format!("need nx >= 2 and nt >= 1, got ({nx}, {nt})")));
        }
        let (a, b, horizon) = (spec.x_min, spec.x_max, spec.horizon);
        let dx = (b - a) / (nx + 1) as f64;
        let x: Vec<f64> = (0..nx + 2)
            .map(|i| if i == nx + 1 { b } else { a + (b - a) * i as f64 / (nx + 1) as f64 })
            .collect();
        let dt = horizon / nt as f64;
        let mut t: Vec<f64> = (0..=nt).map(|k| horizon * k as f64 / nt as f64).collect();
        let mut pinned: Vec<bool> = (0..=nt).map(|k| k == 0 || k == nt).collect();

        let mut bps: Vec<f64> = breakpoints.iter().copied().filter(|&s| s > 0.0 && s < horizon).collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        for s in bps {
            let k = t.partition_point(|&v| v < s);
            // t[k-1] < s <= t[k]
            if t[k] == s {
                pinned[k] = true;
                continue;
            }
            let mut order = [k, k - 1];
            if s - t[k - 1] < t[k] - s {
                order.swap(0, 1);
            }
            if let Some(&j) = order.iter().find(|&&j| !pinned[j] && (t[j] - s).abs() <= 0.5 * dt * (1.0 + 1e-12)) {
                t[j] = s;
                pinned[j] = true;
            } else {
                t.insert(k, s);
                pinned.insert(k, true);
            }
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidGrid("time nodes are not strictly increasing (breakpoints too close)".into()));
        }
        Ok(Grid { nx, nt, dx, dt, x, t })
    }

    /// Spatial node count including the boundary.
    pub fn n_space(&self) -> usize {
        self.nx + 2
    }

    /// Time node count.
    pub fn n_times(&self) -> usize {
        self.t.len()
    }

    /// Actual number of time steps.
    pub fn n_steps(&self) -> usize {
        self.t.len() - 1
    }

    pub fn step(&self, k: usize) -> f64 {
        self.t[k + 1] - self.t[k]
    }

    pub fn horizon(&self) -> f64 {
        *self.t.last().unwrap()
    }

    /// Index of the time node equal to `t` (up to `1e-12 T`).
    pub fn node_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.horizon().max(1.0);
        let k = self.t.partition_point(|&v| v < t - tol);
        (k < self.t.len() && (self.t[k] - t).abs() <= tol).then_some(k)
    }

    /// Trapezoid weights `(w_left, w_right)` of node `k`: the half steps to
    /// the left and to the right.
    pub fn time_weights(&self, k: usize) -> (f64, f64) {
        let left = if k > 0 { 0.5 * self.step(k - 1) } else { 0.0 };
        let right = if k < self.n_steps() { 0.5 * self.step(k) } else { 0.0 };
        (left, right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;

    #[test]
    fn uniform_spacing() {
        let spec = example::example_spec();
        let g = Grid::uniform(&spec, 9, 30).unwrap();
        assert_eq!(g.n_space(), 11);
        assert!((g.dx - 0.1).abs() < 1e-15);
        assert!((g.dt - 0.1).abs() < 1e-15);
        assert_eq!(g.n_times(), 31);
        assert_eq!(g.x[10], 1.0);
        assert_eq!(g.t[30], 3.0);
        assert!(g.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn breakpoints_are_nodes() {
        let spec = example::example_spec();
        let ln2 = std::f64::consts::LN_2;
        let g = Grid::with_breakpoints(&spec, 9, 48, &[ln2, 2.0]).unwrap();
        assert!(g.node_of(ln2).is_some());
        assert_eq!(g.node_of(2.0), Some(32));
        assert_eq!(g.n_steps(), 48);
        let steps: Vec<f64> = (0..g.n_steps()).map(|k| g.step(k)).collect();
        assert!(steps.iter().all(|&h| h >= 0.5 * g.dt - 1e-14 && h <= 1.5 * g.dt + 1e-14));
        let s: f64 = (0..g.n_steps()).map(|k| g.step(k)).sum();
        assert!((s - 3.0).abs() < 1e-13);

        // the nearest free node moves; a taken one forces a split
        let g = Grid::with_breakpoints(&spec, 9, 30, &[1.0005, 1.02]).unwrap();
        assert_eq!(g.n_steps(), 31);
        assert_eq!(g.node_of(1.0005), Some(10));
        assert_eq!(g.node_of(1.02), Some(11));
        let g = Grid::with_breakpoints(&spec, 9, 30, &[0.01]).unwrap();
        assert_eq!(g.node_of(0.01), Some(1));
        let g = Grid::with_breakpoints(&spec, 9, 30, &[0.01, 0.06]).unwrap();
        assert_eq!(g.n_steps(), 31);
        assert_eq!(g.node_of(0.06), Some(2));
    }

    #[test]
    fn time_weights_sum_to_horizon() {
        let spec = example::example_spec();
        let g = Grid::with_breakpoints(&spec, 9, 17, &[std::f64::consts::LN_2]).unwrap();
        let total: f64 = (0..g.n_times()).map(|k| {
            let (l, r) = g.time_weights(k);
            l + r
        }).sum();
        assert!((total - 3.0).abs() < 1e-13);
    }
}
