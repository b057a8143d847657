//! Composite trapezoid rules on the grid and a least-squares log-log slope.

use crate::problem::Grid;

/// Trapezoid integral of nodal values with uniform spacing `dx`.
pub fn space_trapz(dx: f64, f: &[f64]) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    dx * (inner + 0.5 * (f[0] + f[n - 1]))
}

/// Trapezoid `int a b dx`.
pub fn space_inner(dx: f64, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = a[1..n - 1].iter().zip(&b[1..n - 1]).map(|(x, y)| x * y).sum();
    dx * (inner + 0.5 * (a[0] * b[0] + a[n - 1] * b[n - 1]))
}

/// Trapezoid `int a b c dx`.
pub fn space_inner3(dx: f64, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let mut s = 0.5 * (a[0] * b[0] * c[0] + a[n - 1] * b[n - 1] * c[n - 1]);
    for i in 1..n - 1 {
        s += a[i] * b[i] * c[i];
    }
    dx * s
}

/// Trapezoid integral over `[0, T]` of a function given by left limits
/// `left[k]` and right limits `right[k]` at the time nodes.
pub fn time_trapz_sided(grid: &Grid, left: &[f64], right: &[f64]) -> f64 {
    (0..grid.n_steps()).map(|k| 0.5 * grid.step(k) * (right[k] + left[k + 1])).sum()
}

/// Trapezoid integral of a continuous nodal series.
pub fn time_trapz(grid: &Grid, f: &[f64]) -> f64 {
    time_trapz_sided(grid, f, f)
}

/// Least-squares slope of `log y` against `log x`.
///
/// Returns `NaN` when fewer than two points have positive coordinates.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example;
    use std::f64::consts::PI;

    #[test]
    fn trapezoid_exact_for_linear() {
        let dx = 0.1;
        let f: Vec<f64> = (0..=10).map(|i| 2.0 + 3.0 * i as f64 * dx).collect();
        assert!((space_trapz(dx, &f) - 3.5).abs() < 1e-14);
    }

    #[test]
    fn sine_squared_is_exact() {
        let n = 17;
        let dx = 1.0 / (n - 1) as f64;
        let c: Vec<f64> = (0..n).map(|i| 2f64.sqrt() * (PI * i as f64 * dx).sin()).collect();
        assert!((space_inner(dx, &c, &c) - 1.0).abs() < 1e-14);
        let ones = vec![1.0; n];
        assert!((space_inner3(dx, &c, &c, &ones) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sided_time_integral_of_step() {
        let spec = example::example_spec();
        let g = Grid::with_breakpoints(&spec, 8, 10, &[2.0]).unwrap();
        let left: Vec<f64> = g.t.iter().map(|&t| if t > 2.0 { 1.0 } else { 0.0 }).collect();
        let right: Vec<f64> = g.t.iter().map(|&t| if t >= 2.0 { 1.0 } else { 0.0 }).collect();
        assert!((time_trapz_sided(&g, &left, &right) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.2, 0.1, 0.05, 0.025];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.7)).collect();
        assert!((loglog_slope(&x, &y) - 1.7).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_nan());
    }
}
