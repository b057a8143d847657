use super::expr::{Expr, Side};
use super::{Field, Grid, ProblemSpec};

/// A space-time field sampled at every grid node. When the generating
/// expression jumps in time, `right` holds the right limits at every node.
#[derive(Debug, Clone)]
pub struct SidedField {
    pub left: Field,
    pub right: Option<Field>,
}

impl SidedField {
    fn sample(e: &Expr, grid: &Grid) -> SidedField {
        let shape = (grid.n_times(), grid.n_space());
        let at = |side: Side| Field::from_shape_fn(shape, |(k, i)| e.eval_sided(grid.x[i], grid.t[k], side));
        let left = at(Side::Left);
        let right = if e.breakpoints().is_empty() { None } else { Some(at(Side::Right)) };
        SidedField { left, right }
    }

    pub fn side(&self, side: Side) -> &Field {
        match (side, &self.right) {
            (Side::Right, Some(r)) => r,
            _ => &self.left,
        }
    }
}

/// Problem data sampled on a grid, shared by every solver and check.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub spec: ProblemSpec,
    pub grid: Grid,
    /// `b_0 .. b_m` at the spatial nodes.
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub y0: Vec<f64>,
    pub y_dt: Vec<f64>,
    pub f: SidedField,
    pub y_d: SidedField,
}

impl Discretization {
    pub fn new(spec: &ProblemSpec, grid: Grid) -> Discretization {
        let nodes = |e: &Expr| grid.x.iter().map(|&x| e.eval(x, 0.0)).collect::<Vec<f64>>();
        let all_b: Vec<Expr> = std::iter::once(spec.drift.clone()).chain(spec.channels.iter().cloned()).collect();
        Discretization {
            b: all_b.iter().map(nodes).collect(),
            c: spec.constraint_densities.iter().map(nodes).collect(),
            y0: nodes(&spec.initial_state),
            y_dt: nodes(&spec.terminal_target),
            f: SidedField::sample(&spec.source, &grid),
            y_d: SidedField::sample(&spec.running_target, &grid),
            spec: spec.clone(),
            grid,
        }
    }

    pub fn m(&self) -> usize {
        self.spec.m()
    }

    pub fn q(&self) -> usize {
        self.spec.q()
    }

    /// Default grid for `spec`: every time breakpoint of the data is a node.
    pub fn with_grid(spec: &ProblemSpec, nx: usize, nt: usize, extra_breakpoints: &[f64]) -> crate::Result<Discretization> {
        let mut bps = spec.time_breakpoints();
        bps.extend_from_slice(extra_breakpoints);
        Ok(Discretization::new(spec, Grid::with_breakpoints(spec, nx, nt, &bps)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;

    #[test]
    fn running_target_keeps_both_limits() {
        let spec = example::example_spec();
        let disc = Discretization::with_grid(&spec, 9, 30, &[]).unwrap();
        let k = disc.grid.node_of(1.0).unwrap();
        let mid = 5;
        let c = disc.c[0][mid];
        let right = disc.y_d.right.as_ref().unwrap();
        assert!((disc.y_d.left[[k, mid]] - 3.0 * c).abs() < 1e-12);
        assert!((right[[k, mid]] - 3.0 * c).abs() < 1e-12);
        let k = disc.grid.node_of(std::f64::consts::LN_2).unwrap();
        assert!((disc.y_d.left[[k, mid]] - 3.0 * c).abs() < 1e-12);
        assert!((right[[k, mid]] - 3.0 * c).abs() < 1e-12);
        assert!(disc.f.right.is_none());
    }
}
