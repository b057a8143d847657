//! Goh-transform auxiliaries.
//!
//! With `w = int_0^t v` and `B_i = ybar b_i`, the linearized state splits as
//! `z = zeta + B . w` where `zeta' + A zeta = B1 . w`. The quadratic form in
//! `(zeta, w, h)` then involves the matrices `S`, `S_dot` and `R` computed
//! here.

use ndarray::{Array1, Array2, Array3};
use serde::Serialize;

use crate::problem::expr::Side;
use crate::problem::{Discretization, Field, SidedField, TimeSamples};
use crate::quadrature::{space_inner, space_inner3};

/// `w(t) = int_0^t v` by the trapezoid rule, and `h = w(T)`.
pub fn goh_w(disc: &Discretization, v: &TimeSamples) -> (Array2<f64>, Array1<f64>) {
    let w = v.cumulative(&disc.grid);
    let h = w.row(w.nrows() - 1).to_owned();
    (w, h)
}

/// Discrete Laplacian with zero boundary entries.
fn lap_h(dx: f64, y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    crate::solvers::laplacian(dx, y, &mut out);
    out[0] = 0.0;
    let n = y.len();
    out[n - 1] = 0.0;
    out
}

/// `Lap_h(a b) - b Lap_h(a)` on the interior, the discrete counterpart of
/// `2 a' b' + a b''`.
pub(crate) fn commutator(dx: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let l1 = lap_h(dx, &ab);
    let l2 = lap_h(dx, a);
    l1.iter().zip(&l2).zip(b).map(|((p, q), bb)| p - bb * q).collect()
}

/// `B_i = ybar b_i` for `i = 1..m`.
pub fn compute_b(disc: &Discretization, ybar: &Field) -> Vec<Field> {
    (1..=disc.m())
        .map(|i| Field::from_shape_fn(ybar.raw_dim(), |(k, x)| ybar[[k, x]] * disc.b[i][x]))
        .collect()
}

/// `B1_i = -f b_i + 2 ybar' b_i' + ybar b_i'' - 2 gamma ybar^3 b_i`.
///
/// The derivative part is formed as `Lap_h(ybar b_i) - b_i Lap_h(ybar)` with
/// the solver's Laplacian, so the split `z = zeta + B.w` holds exactly in
/// space on the grid.
pub fn compute_b1(disc: &Discretization, ybar: &Field) -> Vec<SidedField> {
    let grid = &disc.grid;
    let (nt, ns) = (grid.n_times(), grid.n_space());
    let gamma = disc.spec.gamma;
    (1..=disc.m())
        .map(|i| {
            let b = &disc.b[i];
            let mut comm = Field::zeros((nt, ns));
            for k in 0..nt {
                let c = commutator(grid.dx, ybar.row(k).as_slice().expect("contiguous"), b);
                comm.row_mut(k).assign(&Array1::from(c));
            }
            let build = |f: &Field| {
                Field::from_shape_fn((nt, ns), |(k, x)| {
                    if x == 0 || x == ns - 1 {
                        return 0.0;
                    }
                    let y = ybar[[k, x]];
                    -f[[k, x]] * b[x] + comm[[k, x]] - 2.0 * gamma * y.powi(3) * b[x]
                })
            };
            SidedField { left: build(&disc.f.left), right: disc.f.right.as_ref().map(build) }
        })
        .collect()
}

/// `M_ji(t) = int b_i c_j ybar`, shape `(time nodes, q, m)`.
pub fn compute_m(disc: &Discretization, ybar: &Field) -> Array3<f64> {
    let (nt, q, m) = (disc.grid.n_times(), disc.q(), disc.m());
    let mut out = Array3::zeros((nt, q, m));
    for k in 0..nt {
        let y = ybar.row(k);
        let y = y.as_slice().expect("contiguous");
        for j in 0..q {
            for i in 0..m {
                out[[k, j, i]] = space_inner3(disc.grid.dx, &disc.b[i + 1], &disc.c[j], y);
            }
        }
    }
    out
}

/// Matrix-valued function of time with one-sided limits; shape
/// `(time nodes, m, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SidedMatrix {
    pub left: Array3<f64>,
    pub right: Array3<f64>,
}

impl SidedMatrix {
    pub fn side(&self, side: Side) -> &Array3<f64> {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    /// Largest `|X_ij - X_ji|` over all nodes and both limits.
    pub fn asymmetry(&self) -> f64 {
        asymmetry(&self.left).max(asymmetry(&self.right))
    }
}

pub fn asymmetry(a: &Array3<f64>) -> f64 {
    let (nt, m, _) = a.dim();
    let mut worst = 0.0f64;
    for k in 0..nt {
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((a[[k, i, j]] - a[[k, j, i]]).abs());
            }
        }
    }
    worst
}

/// `chi = d/dt (p ybar)` without its Laplacian part, which is handled in
/// integrated-by-parts form by [`compute_s_and_sdot`].
fn chi_local(disc: &Discretization, ybar: &Field, p: &Field, mu_dot: &TimeSamples, k: usize, side: Side) -> Vec<f64> {
    let gamma = disc.spec.gamma;
    let (f, yd) = (disc.f.side(side), disc.y_d.side(side));
    (0..disc.grid.n_space())
        .map(|x| {
            let (y, pp) = (ybar[[k, x]], p[[k, x]]);
            let mut mu_term = 0.0;
            for (j, c) in disc.c.iter().enumerate() {
                mu_term += c[x] * mu_dot.at(k, j, side);
            }
            pp * f[[k, x]] + 2.0 * gamma * pp * y.powi(3) - y * (y - yd[[k, x]]) - y * mu_term
        })
        .collect()
}

/// `S_ij = int b_i b_j p ybar` and `S_dot_ij = int b_i b_j chi`.
///
/// The Laplacian part of `chi`, `p Lap(ybar) - ybar Lap(p)`, is integrated
/// against `b_i b_j` by summation by parts over grid cells, so no second
/// differences of `p` are formed. On the grid this equals the nodal form
/// with the discrete Laplacian exactly.
pub fn compute_s_and_sdot(
    disc: &Discretization,
    ybar: &Field,
    p: &Field,
    mu_dot: &TimeSamples,
) -> (Array3<f64>, SidedMatrix) {
    let grid = &disc.grid;
    let (nt, ns, m) = (grid.n_times(), grid.n_space(), disc.m());
    let dx = grid.dx;
    let mut s = Array3::zeros((nt, m, m));
    let mut sd_left = Array3::zeros((nt, m, m));
    let mut sd_right = Array3::zeros((nt, m, m));
    let bb: Vec<Vec<Vec<f64>>> = (0..m)
        .map(|i| (0..m).map(|j| (0..ns).map(|x| disc.b[i + 1][x] * disc.b[j + 1][x]).collect()).collect())
        .collect();
    for k in 0..nt {
        let (y, pp) = (ybar.row(k), p.row(k));
        let py: Vec<f64> = (0..ns).map(|x| y[x] * pp[x]).collect();
        // cell fluxes p_x y_{x+1} - y_x p_{x+1}
        let flux: Vec<f64> = (0..ns - 1).map(|x| pp[x] * y[x + 1] - y[x] * pp[x + 1]).collect();
        let chi_l = chi_local(disc, ybar, p, mu_dot, k, Side::Left);
        let chi_r = chi_local(disc, ybar, p, mu_dot, k, Side::Right);
        for i in 0..m {
            for j in i..m {
                let phi = &bb[i][j];
                let lap: f64 = -(0..ns - 1).map(|x| (phi[x + 1] - phi[x]) * flux[x]).sum::<f64>() / dx;
                let sv = crate::quadrature::space_trapz(dx, &phi.iter().zip(&py).map(|(a, b)| a * b).collect::<Vec<_>>());
                let l = space_inner(dx, phi, &chi_l) + lap;
                let r = space_inner(dx, phi, &chi_r) + lap;
                for (a, b) in [(i, j), (j, i)] {
                    s[[k, a, b]] = sv;
                    sd_left[[k, a, b]] = l;
                    sd_right[[k, a, b]] = r;
                }
            }
        }
    }
    (s, SidedMatrix { left: sd_left, right: sd_right })
}

/// How to read the `w^2` coefficient formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RReading {
    /// `int kappa b_i b_j ybar^2 - S_dot_ij - int p (b_i B1_j + b_j B1_i)`;
    /// this is the coefficient that makes the transformed form equal the
    /// untransformed one.
    Derived,
    /// Same with `+ int p (b_i B1_j + b_j B1_i)`.
    PlusCrossSign,
    /// `S_dot_ij` placed inside the spatial integral, i.e. multiplied by
    /// the length of the interval.
    SdotInsideIntegral,
}

/// `P_ij = int b_i p B1_j`, shape `(time nodes, m, m)` with one-sided limits.
pub fn compute_p_matrix(disc: &Discretization, p: &Field, b1: &[SidedField]) -> SidedMatrix {
    let (nt, m) = (disc.grid.n_times(), disc.m());
    let dx = disc.grid.dx;
    let mut left = Array3::zeros((nt, m, m));
    let mut right = Array3::zeros((nt, m, m));
    for k in 0..nt {
        let pr = p.row(k);
        let pr = pr.as_slice().expect("contiguous");
        for i in 0..m {
            for j in 0..m {
                let bl = b1[j].left.row(k);
                let br = b1[j].side(Side::Right).row(k);
                left[[k, i, j]] = space_inner3(dx, &disc.b[i + 1], pr, bl.as_slice().expect("contiguous"));
                right[[k, i, j]] = space_inner3(dx, &disc.b[i + 1], pr, br.as_slice().expect("contiguous"));
            }
        }
    }
    SidedMatrix { left, right }
}

/// Coefficient of `w_i w_j` in the integrand of the transformed form.
pub fn compute_r(
    disc: &Discretization,
    ybar: &Field,
    kappa: &Field,
    s_dot: &SidedMatrix,
    pmat: &SidedMatrix,
    reading: RReading,
) -> SidedMatrix {
    let (nt, ns, m) = (disc.grid.n_times(), disc.grid.n_space(), disc.m());
    let dx = disc.grid.dx;
    let len = disc.spec.x_max - disc.spec.x_min;
    let mut out = SidedMatrix { left: Array3::zeros((nt, m, m)), right: Array3::zeros((nt, m, m)) };
    for k in 0..nt {
        let ky2: Vec<f64> = (0..ns).map(|x| kappa[[k, x]] * ybar[[k, x]] * ybar[[k, x]]).collect();
        for i in 0..m {
            for j in 0..m {
                let base = space_inner3(dx, &disc.b[i + 1], &disc.b[j + 1], &ky2);
                for side in [Side::Left, Side::Right] {
                    let sd = s_dot.side(side)[[k, i, j]];
                    let cross = pmat.side(side)[[k, i, j]] + pmat.side(side)[[k, j, i]];
                    let v = match reading {
                        RReading::Derived => base - sd - cross,
                        RReading::PlusCrossSign => base - sd + cross,
                        RReading::SdotInsideIntegral => base - len * sd - cross,
                    };
                    match side {
                        Side::Left => out.left[[k, i, j]] = v,
                        Side::Right => out.right[[k, i, j]] = v,
                    }
                }
            }
        }
    }
    out
}

/// The `w^2` coefficient following the integration-by-parts chain written
/// out for the closed-form example, where the bilinear term of the second
/// variation enters as `p v z` rather than `2 p v z`:
/// `int kappa b^2 ybar^2 - S_dot / 2 - P`. Scalar controls only.
pub fn single_cross_coefficient(
    disc: &Discretization,
    ybar: &Field,
    kappa: &Field,
    s_dot: &SidedMatrix,
    pmat: &SidedMatrix,
) -> Option<TimeSamples> {
    if disc.m() != 1 {
        return None;
    }
    let nt = disc.grid.n_times();
    let ns = disc.grid.n_space();
    let mut left = Array2::zeros((nt, 1));
    let mut right = Array2::zeros((nt, 1));
    for k in 0..nt {
        let ky2: Vec<f64> = (0..ns).map(|x| kappa[[k, x]] * ybar[[k, x]] * ybar[[k, x]]).collect();
        let base = space_inner3(disc.grid.dx, &disc.b[1], &disc.b[1], &ky2);
        left[[k, 0]] = base - 0.5 * s_dot.left[[k, 0, 0]] - pmat.left[[k, 0, 0]];
        right[[k, 0]] = base - 0.5 * s_dot.right[[k, 0, 0]] - pmat.right[[k, 0, 0]];
    }
    TimeSamples::with_jumps(left, right).ok()
}

/// `kappa = 1 - 6 gamma ybar p`.
pub fn kappa(disc: &Discretization, ybar: &Field, p: &Field) -> Field {
    let g = disc.spec.gamma;
    Field::from_shape_fn(ybar.raw_dim(), |(k, x)| 1.0 - 6.0 * g * ybar[[k, x]] * p[[k, x]])
}

/// Everything the transformed form needs at one candidate.
#[derive(Debug, Clone)]
pub struct GohAuxiliaries {
    pub b: Vec<Field>,
    pub b1: Vec<SidedField>,
    /// `(time nodes, q, m)`.
    pub m_mat: Array3<f64>,
    pub s: Array3<f64>,
    pub s_dot: SidedMatrix,
    pub p_mat: SidedMatrix,
    pub r: SidedMatrix,
}

impl GohAuxiliaries {
    pub fn new(disc: &Discretization, ybar: &Field, p: &Field, mu_dot: &TimeSamples, kappa: &Field) -> Self {
        let b1 = compute_b1(disc, ybar);
        let (s, s_dot) = compute_s_and_sdot(disc, ybar, p, mu_dot);
        let p_mat = compute_p_matrix(disc, p, &b1);
        let r = compute_r(disc, ybar, kappa, &s_dot, &p_mat, RReading::Derived);
        GohAuxiliaries { b: compute_b(disc, ybar), b1, m_mat: compute_m(disc, ybar), s, s_dot, p_mat, r }
    }
}

/// `max |z - zeta - B . w|` over the space-time grid.
pub fn goh_identity_residual(disc: &Discretization, ybar: &Field, z: &Field, zeta: &Field, w: &Array2<f64>) -> f64 {
    let mut worst = 0.0f64;
    for ((k, x), &zv) in z.indexed_iter() {
        let bw: f64 = (0..disc.m()).map(|i| disc.b[i + 1][x] * w[[k, i]]).sum::<f64>() * ybar[[k, x]];
        worst = worst.max((zv - zeta[[k, x]] - bw).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::{self, example_candidate, example_truth, JUNCTIONS};
    use crate::problem::expr::Expr;
    use crate::problem::Grid;
    use crate::solvers::{solve_costate, solve_linearized, solve_state, solve_zeta, EvolutionOptions, Scheme};
    use std::f64::consts::LN_2;

    struct Setup {
        disc: Discretization,
        u: TimeSamples,
        mu_dot: TimeSamples,
        y: Field,
        p: Field,
    }

    fn setup(spec: &crate::problem::ProblemSpec, nx: usize, nt: usize) -> Setup {
        let disc = Discretization::with_grid(spec, nx, nt, &JUNCTIONS).unwrap();
        let (u0, mu_dot0) = example_candidate(&disc.grid);
        let m = disc.m();
        // extra channels get a smooth interior control
        let u = TimeSamples::from_fn(&disc.grid, m, |t, side| {
            let row = u0.at(disc.grid.node_of(t).unwrap(), 0, side);
            (0..m).map(|i| if i == 0 { row } else { 0.3 * (t + i as f64).sin() }).collect()
        });
        let mu_dot = mu_dot0;
        let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
        let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
        Setup { disc, u, mu_dot, y, p }
    }

    fn stress_spec() -> crate::problem::ProblemSpec {
        let mut spec = example::example_spec();
        spec.gamma = 0.7;
        spec.channels = vec![Expr::parse("1 + x*(1-x)").unwrap(), Expr::parse("cos(pi*x)").unwrap()];
        spec.linear_cost = vec![0.0, 0.1];
        spec.u_lower = vec![-1.0, -1.0];
        spec.u_upper = vec![spec.u_upper[0], 1.0];
        spec.source = Expr::parse("x*(1-x)*cos(t)").unwrap();
        spec
    }

    fn smooth_v(grid: &Grid, m: usize, seed: u64) -> TimeSamples {
        let s = seed as f64;
        TimeSamples::from_fn(grid, m, |t, _| {
            (0..m).map(|i| (1.1 * t + s + i as f64).sin() + 0.4 * (2.3 * t - s).cos()).collect()
        })
    }

    #[test]
    fn commutator_approximates_product_rule() {
        let errs: Vec<f64> = [20usize, 40, 80]
            .iter()
            .map(|&n| {
                let dx = 1.0 / n as f64;
                let xs: Vec<f64> = (0..=n).map(|i| i as f64 * dx).collect();
                let a: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin()).collect();
                let b: Vec<f64> = xs.iter().map(|x| x * x * (1.0 - x)).collect();
                let c = commutator(dx, &a, &b);
                (1..n)
                    .map(|i| {
                        let x = xs[i];
                        let exact = 2.0 * 3.0 * (3.0 * x).cos() * (2.0 * x - 3.0 * x * x) + (3.0 * x).sin() * (2.0 - 6.0 * x);
                        (c[i] - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(crate::quadrature::loglog_slope(&[4.0, 2.0, 1.0], &errs) > 1.9, "{errs:?}");
    }

    #[test]
    fn w_fixtures() {
        let disc = example::example_discretization(8, 300).unwrap();
        let (w, h) = goh_w(&disc, &TimeSamples::zeros(disc.grid.n_times(), 1));
        assert!(w.iter().all(|&v| v == 0.0) && h[0] == 0.0);
        let (w, h) = goh_w(&disc, &TimeSamples::from_fn(&disc.grid, 1, |_, _| vec![1.0]));
        assert!((h[0] - 3.0).abs() < 1e-13);
        for (k, &t) in disc.grid.t.iter().enumerate() {
            assert!((w[[k, 0]] - t).abs() < 1e-13);
        }
        let errs: Vec<f64> = [150usize, 300, 600]
            .iter()
            .map(|&nt| {
                let spec = example::example_spec();
                let disc = Discretization::new(&spec, Grid::uniform(&spec, 8, nt).unwrap());
                let (w, _) = goh_w(&disc, &TimeSamples::from_fn(&disc.grid, 1, |t, _| vec![t.cos()]));
                disc.grid.t.iter().enumerate().map(|(k, &t)| (w[[k, 0]] - t.sin()).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(crate::quadrature::loglog_slope(&[0.02, 0.01, 0.005], &errs) > 1.9, "{errs:?}");
    }

    #[test]
    fn s_vanishes_with_costate() {
        let st = setup(&example::example_spec(), 21, 60);
        let zero = Field::zeros(st.y.raw_dim());
        let mu0 = TimeSamples::zeros(st.disc.grid.n_times(), 1);
        let mut d2 = st.disc.clone();
        d2.y_d.left = st.y.clone();
        d2.y_d.right = None;
        let (s, sd) = compute_s_and_sdot(&d2, &st.y, &zero, &mu0);
        assert!(s.iter().all(|&v| v == 0.0));
        assert!(sd.left.iter().chain(sd.right.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn s_on_first_arc_matches_closed_form() {
        let st = setup(&example::example_spec(), 201, 1200);
        let (s, _) = compute_s_and_sdot(&st.disc, &st.y, &st.p, &st.mu_dot);
        for (k, &t) in st.disc.grid.t.iter().enumerate() {
            if t <= LN_2 {
                let exact = (2.0 * t).exp() / 4.0 - 1.0;
                assert!((s[[k, 0, 0]] - exact).abs() < 5e-3, "t {t}: {} vs {exact}", s[[k, 0, 0]]);
            }
        }
    }

    // centered difference of S minus S_dot, worst over nodes at least two
    // cells away from any junction
    fn fd_gap(st: &Setup) -> f64 {
        let (s, sd) = compute_s_and_sdot(&st.disc, &st.y, &st.p, &st.mu_dot);
        let g = &st.disc.grid;
        let m = st.disc.m();
        let mut worst = 0.0f64;
        for k in 2..g.n_times() - 2 {
            let near = [LN_2, 1.0, 2.0].iter().any(|&tau| (g.t[k] - tau).abs() < 2.5 * g.dt);
            if near {
                continue;
            }
            let h = g.t[k + 1] - g.t[k - 1];
            for i in 0..m {
                for j in 0..m {
                    let fd = (s[[k + 1, i, j]] - s[[k - 1, i, j]]) / h;
                    worst = worst.max((fd - sd.left[[k, i, j]]).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn s_dot_matches_finite_differences() {
        let gaps: Vec<f64> = [(21usize, 150usize), (21, 300), (21, 600), (21, 1200)]
            .iter()
            .map(|&(nx, nt)| fd_gap(&setup(&stress_spec(), nx, nt)))
            .collect();
        let slope = crate::quadrature::loglog_slope(&[4.0, 2.0, 1.0], &gaps[1..]);
        assert!(slope > 1.7, "{gaps:?}");
        assert!(gaps[3] < 5e-4, "{gaps:?}");
    }

    #[test]
    fn r_on_example_arcs() {
        let st = setup(&example::example_spec(), 201, 1200);
        let kap = kappa(&st.disc, &st.y, &st.p);
        let aux = GohAuxiliaries::new(&st.disc, &st.y, &st.p, &st.mu_dot, &kap);
        assert!(aux.b1[0].left.iter().all(|&v| v == 0.0));
        for (k, &t) in st.disc.grid.t.iter().enumerate() {
            let e = example_truth(t, Side::Right).unwrap();
            let r = aux.r.right[[k, 0, 0]];
            if t > LN_2 + 1e-9 && t < 3.0 {
                let exact = e.y1_bar * e.y1_bar;
                assert!((r - exact).abs() <= 0.01 * exact, "t {t}: {r} vs {exact}");
            } else if t < LN_2 - 1e-9 {
                // kappa ybar^2 - S_dot with S = e^{2t}/4 - 1
                let exact = (2.0 * t).exp() / 2.0;
                assert!((r - exact).abs() <= 0.01 * exact, "t {t}: {r} vs {exact}");
            }
        }
    }

    #[test]
    fn symmetry_and_m_linearity() {
        let st = setup(&stress_spec(), 21, 120);
        let kap = kappa(&st.disc, &st.y, &st.p);
        let aux = GohAuxiliaries::new(&st.disc, &st.y, &st.p, &st.mu_dot, &kap);
        assert_eq!(asymmetry(&aux.s), 0.0);
        assert_eq!(aux.s_dot.asymmetry(), 0.0);
        assert!(aux.r.asymmetry() < 1e-14, "{}", aux.r.asymmetry());
        let m2 = compute_m(&st.disc, &(&st.y * 2.0));
        assert_eq!(m2, &aux.m_mat * 2.0);
        for reading in [RReading::PlusCrossSign, RReading::SdotInsideIntegral] {
            let r = compute_r(&st.disc, &st.y, &kap, &aux.s_dot, &aux.p_mat, reading);
            assert!(r.asymmetry() < 1e-14);
        }
    }

    #[test]
    fn identity_residual_vanishes_for_zero_direction() {
        let st = setup(&stress_spec(), 21, 60);
        let v = TimeSamples::zeros(st.disc.grid.n_times(), 2);
        let (w, _) = goh_w(&st.disc, &v);
        let z = solve_linearized(&st.disc, &st.y, &st.u, &v, Scheme::CrankNicolson);
        let zeta = solve_zeta(&st.disc, &st.y, &st.u, &w, Scheme::CrankNicolson);
        assert_eq!(goh_identity_residual(&st.disc, &st.y, &z, &zeta, &w), 0.0);
    }

    #[test]
    fn identity_residual_converges() {
        for seed in 0..5 {
            let res: Vec<f64> = [(10usize, 60usize), (21, 120), (43, 240)]
                .iter()
                .map(|&(nx, nt)| {
                    let st = setup(&stress_spec(), nx, nt);
                    let v = smooth_v(&st.disc.grid, 2, seed);
                    let (w, _) = goh_w(&st.disc, &v);
                    let z = solve_linearized(&st.disc, &st.y, &st.u, &v, Scheme::CrankNicolson);
                    let zeta = solve_zeta(&st.disc, &st.y, &st.u, &w, Scheme::CrankNicolson);
                    goh_identity_residual(&st.disc, &st.y, &z, &zeta, &w)
                })
                .collect();
            assert!(res[0] > res[1] && res[1] > res[2], "seed {seed}: {res:?}");
            assert!(res[1] / res[2] > 3.0, "seed {seed}: {res:?}");
        }
    }

    #[test]
    fn identity_residual_single_mode() {
        let st = setup(&example::example_spec(), 41, 120);
        let v = smooth_v(&st.disc.grid, 1, 4);
        let (w, _) = goh_w(&st.disc, &v);
        let z = solve_linearized(&st.disc, &st.y, &st.u, &v, Scheme::CrankNicolson);
        let zeta = solve_zeta(&st.disc, &st.y, &st.u, &w, Scheme::CrankNicolson);
        let res = goh_identity_residual(&st.disc, &st.y, &z, &zeta, &w);
        let dx = st.disc.grid.dx;
        let c = &st.disc.c[0];
        let cmax = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let modal = |f: &Field, k: usize| crate::quadrature::space_inner(dx, f.row(k).as_slice().unwrap(), c);
        let scalar = (0..st.disc.grid.n_times())
            .map(|k| (modal(&z, k) - modal(&zeta, k) - modal(&st.y, k) * w[[k, 0]]).abs())
            .fold(0.0, f64::max);
        assert!((res - scalar * cmax).abs() <= 1e-10 * res.max(1e-300), "{res:e} vs {:e}", scalar * cmax);
    }
}
