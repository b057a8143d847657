use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tridiag::{solve_tridiagonal, TridiagFactor};
use crate::error::{Error, Result};
use crate::problem::expr::Side;
use crate::problem::{Discretization, Field, TimeSamples};
use crate::quadrature::{space_inner, time_trapz_sided};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[value(name = "implicit_euler")]
    ImplicitEuler,
    #[default]
    #[value(name = "crank_nicolson")]
    CrankNicolson,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::ImplicitEuler => "implicit_euler",
            Scheme::CrankNicolson => "crank_nicolson",
        })
    }
}

impl Scheme {
    pub fn theta(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::CrankNicolson => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionOptions {
    /// Newton stops once the step residual is below `newton_tol * (1 + |rhs|)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub scheme: Scheme,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        EvolutionOptions { newton_tol: 1e-12, newton_max_iter: 25, scheme: Scheme::CrankNicolson }
    }
}

impl EvolutionOptions {
    pub fn with_scheme(scheme: Scheme) -> Self {
        EvolutionOptions { scheme, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidProblem(format!(
                "newton_tol must be > 0 and newton_max_iter >= 1 (got {}, {})",
                self.newton_tol, self.newton_max_iter
            )));
        }
        Ok(())
    }
}

/// Central second difference on interior nodes; boundary entries are 0.
pub fn laplacian(dx: f64, z: &[f64], out: &mut [f64]) {
    let n = z.len();
    let inv = 1.0 / (dx * dx);
    out[0] = 0.0;
    out[n - 1] = 0.0;
    for i in 1..n - 1 {
        out[i] = (z[i - 1] - 2.0 * z[i] + z[i + 1]) * inv;
    }
}

/// Zeroth-order coefficient of `A`: `3 gamma ybar^2 - b_0 - sum_i u_i b_i`.
pub fn step_potential(disc: &Discretization, ybar_row: ArrayView1<f64>, u: ArrayView1<f64>) -> Vec<f64> {
    let gamma = disc.spec.gamma;
    (0..disc.grid.n_space())
        .map(|x| {
            let mut a = 3.0 * gamma * ybar_row[x] * ybar_row[x] - disc.b[0][x];
            for (i, &ui) in u.iter().enumerate() {
                a -= ui * disc.b[i + 1][x];
            }
            a
        })
        .collect()
}

/// `A z = -Lz + 3 gamma ybar^2 z - sum_{i=0}^m ubar_i b_i z` with `ubar_0 = 1`
/// implicit; `ubar` holds the `m` control values.
pub fn apply_a(disc: &Discretization, ybar_row: &[f64], ubar: &[f64], z: &[f64]) -> Vec<f64> {
    let a = step_potential(disc, ArrayView1::from(ybar_row), ArrayView1::from(ubar));
    let mut out = vec![0.0; z.len()];
    laplacian(disc.grid.dx, z, &mut out);
    let n = z.len();
    for i in 0..n {
        out[i] = if i == 0 || i == n - 1 { 0.0 } else { -out[i] + a[i] * z[i] };
    }
    out
}

/// `A` coefficient at every node with one-sided control values.
#[derive(Debug, Clone)]
pub struct Potential {
    pub left: Field,
    pub right: Field,
}

impl Potential {
    pub fn new(disc: &Discretization, ybar: &Field, ubar: &TimeSamples) -> Potential {
        let shape = (disc.grid.n_times(), disc.grid.n_space());
        let mut left = Field::zeros(shape);
        let mut right = Field::zeros(shape);
        for k in 0..shape.0 {
            let l = step_potential(disc, ybar.row(k), ubar.left_row(k));
            let r = step_potential(disc, ybar.row(k), ubar.right_row(k));
            left.row_mut(k).assign(&ArrayView1::from(&l[..]));
            right.row_mut(k).assign(&ArrayView1::from(&r[..]));
        }
        Potential { left, right }
    }
}

// One theta step of `z' + A z = F` on the interior nodes.
struct ThetaStep {
    theta: f64,
    inv_dx2: f64,
}

impl ThetaStep {
    fn new(disc: &Discretization, scheme: Scheme) -> Self {
        ThetaStep { theta: scheme.theta(), inv_dx2: 1.0 / (disc.grid.dx * disc.grid.dx) }
    }

    // interior tridiagonal factors of I + theta h A(a)
    fn implicit(&self, h: f64, a: ArrayView1<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = a.len() - 2;
        let off = -self.theta * h * self.inv_dx2;
        let diag: Vec<f64> = (1..=n).map(|i| 1.0 + self.theta * h * (2.0 * self.inv_dx2 + a[i])).collect();
        (vec![off; n], diag, vec![off; n])
    }

    // interior entries of (I - (1 - theta) h A(a)) z
    fn explicit(&self, h: f64, a: ArrayView1<f64>, z: ArrayView1<f64>, out: &mut [f64]) {
        let n = z.len() - 2;
        let c = (1.0 - self.theta) * h;
        for i in 1..=n {
            let lap = (z[i - 1] - 2.0 * z[i] + z[i + 1]) * self.inv_dx2;
            out[i - 1] = z[i] - c * (-lap + a[i] * z[i]);
        }
    }
}

/// Forward linear evolution `z' + A z = F`, `z(0) = z0`, with
/// `forcing(k, side, out)` writing `F` at node `k`.
fn evolve_forward(
    disc: &Discretization,
    pot: &Potential,
    scheme: Scheme,
    z0: Option<&[f64]>,
    mut forcing: impl FnMut(usize, Side, &mut [f64]),
) -> Field {
    let grid = &disc.grid;
    let ns = grid.n_space();
    let n = ns - 2;
    let st = ThetaStep::new(disc, scheme);
    let mut z = Field::zeros((grid.n_times(), ns));
    if let Some(z0) = z0 {
        z.row_mut(0).assign(&ArrayView1::from(z0));
        z[[0, 0]] = 0.0;
        z[[0, ns - 1]] = 0.0;
    }
    let mut f_old = vec![0.0; ns];
    let mut f_new = vec![0.0; ns];
    let mut rhs = vec![0.0; n];
    let mut sol = vec![0.0; n];
    for k in 0..grid.n_steps() {
        let h = grid.step(k);
        forcing(k, Side::Right, &mut f_old);
        forcing(k + 1, Side::Left, &mut f_new);
        st.explicit(h, pot.right.row(k), z.row(k), &mut rhs);
        for i in 0..n {
            rhs[i] += h * (st.theta * f_new[i + 1] + (1.0 - st.theta) * f_old[i + 1]);
        }
        let (lo, di, up) = st.implicit(h, pot.left.row(k + 1));
        solve_tridiagonal(&lo, &di, &up, &rhs, &mut sol);
        for i in 0..n {
            z[[k + 1, i + 1]] = sol[i];
        }
    }
    z
}

/// Solves the semilinear state equation with Newton on each step.
pub fn solve_state(disc: &Discretization, u: &TimeSamples, opts: &EvolutionOptions) -> Result<Field> {
    opts.validate()?;
    let grid = &disc.grid;
    if u.n_times() != grid.n_times() || u.dim() != disc.m() {
        return Err(Error::Shape(format!(
            "control samples {}x{} for grid with {} nodes and m = {}",
            u.n_times(),
            u.dim(),
            grid.n_times(),
            disc.m()
        )));
    }
    if u.left().iter().chain(u.right().iter()).any(|v| !v.is_finite()) {
        return Err(Error::Candidate("control contains non-finite values".into()));
    }
    let ns = grid.n_space();
    let n = ns - 2;
    let gamma = disc.spec.gamma;
    let theta = opts.scheme.theta();
    let inv_dx2 = 1.0 / (grid.dx * grid.dx);
    // s = b_0 + sum u_i b_i, one-sided
    let bilinear = |k: usize, side: Side| -> Vec<f64> {
        (0..ns)
            .map(|x| disc.b[0][x] + (0..disc.m()).map(|i| u.at(k, i, side) * disc.b[i + 1][x]).sum::<f64>())
            .collect()
    };
    // N(y) = -Ly + gamma y^3 - s y on interior node i (1-based)
    let nonlinear = |y: &[f64], s: &[f64], i: usize| {
        let lap = (y[i - 1] - 2.0 * y[i] + y[i + 1]) * inv_dx2;
        -lap + gamma * y[i].powi(3) - s[i] * y[i]
    };

    let mut y = Field::zeros((grid.n_times(), ns));
    for i in 1..ns - 1 {
        y[[0, i]] = disc.y0[i];
    }
    let mut rhs = vec![0.0; n];
    let mut res = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut cur = vec![0.0; ns];
    for k in 0..grid.n_steps() {
        let h = grid.step(k);
        let s_old = bilinear(k, Side::Right);
        let s_new = bilinear(k + 1, Side::Left);
        let prev: Vec<f64> = y.row(k).to_vec();
        let f_old = disc.f.side(Side::Right).row(k);
        let f_new = disc.f.left.row(k + 1);
        for i in 1..=n {
            rhs[i - 1] = prev[i] - (1.0 - theta) * h * nonlinear(&prev, &s_old, i)
                + h * (theta * f_new[i] + (1.0 - theta) * f_old[i]);
        }
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        cur.copy_from_slice(&prev);
        let mut converged = false;
        let mut last_res = f64::INFINITY;
        for _ in 0..=opts.newton_max_iter {
            for i in 1..=n {
                res[i - 1] = cur[i] + theta * h * nonlinear(&cur, &s_new, i) - rhs[i - 1];
            }
            last_res = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if last_res <= opts.newton_tol * scale {
                converged = true;
                break;
            }
            if !last_res.is_finite() {
                break;
            }
            let off = vec![-theta * h * inv_dx2; n];
            let diag: Vec<f64> = (1..=n)
                .map(|i| 1.0 + theta * h * (2.0 * inv_dx2 + 3.0 * gamma * cur[i] * cur[i] - s_new[i]))
                .collect();
            for r in res.iter_mut() {
                *r = -*r;
            }
            solve_tridiagonal(&off, &diag, &off, &res, &mut delta);
            for i in 1..=n {
                cur[i] += delta[i - 1];
            }
        }
        if !converged {
            return Err(Error::NewtonDivergence { step: k, residual: last_res });
        }
        y.row_mut(k + 1).assign(&ArrayView1::from(&cur[..]));
    }
    Ok(y)
}

/// Value of the cost split into its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub terminal: f64,
    pub linear: f64,
    pub total: f64,
}

/// `J = 1/2 int int (y - y_d)^2 + 1/2 int (y(T) - y_dT)^2 + sum alpha_i int u_i`.
pub fn cost(disc: &Discretization, u: &TimeSamples, y: &Field) -> CostBreakdown {
    let grid = &disc.grid;
    let dx = grid.dx;
    let sq = |side: Side| -> Vec<f64> {
        let yd = disc.y_d.side(side);
        (0..grid.n_times())
            .map(|k| {
                let d: Vec<f64> = y.row(k).iter().zip(yd.row(k)).map(|(a, b)| a - b).collect();
                space_inner(dx, &d, &d)
            })
            .collect()
    };
    let tracking = 0.5 * time_trapz_sided(grid, &sq(Side::Left), &sq(Side::Right));
    let last = grid.n_times() - 1;
    let d: Vec<f64> = y.row(last).iter().zip(&disc.y_dt).map(|(a, b)| a - b).collect();
    let terminal = 0.5 * space_inner(dx, &d, &d);
    let linear: f64 = disc
        .spec
        .linear_cost
        .iter()
        .enumerate()
        .map(|(i, &a)| if a == 0.0 { 0.0 } else { a * u.integral(grid, i) })
        .sum();
    CostBreakdown { tracking, terminal, linear, total: tracking + terminal + linear }
}

/// Linearized state `z' + A z = sum_i v_i b_i ybar`, `z(0) = 0`.
pub fn solve_linearized(
    disc: &Discretization,
    ybar: &Field,
    ubar: &TimeSamples,
    v: &TimeSamples,
    scheme: Scheme,
) -> Field {
    let pot = Potential::new(disc, ybar, ubar);
    let ns = disc.grid.n_space();
    evolve_forward(disc, &pot, scheme, None, |k, side, out| {
        for x in 0..ns {
            out[x] = (0..disc.m()).map(|i| v.at(k, i, side) * disc.b[i + 1][x]).sum::<f64>() * ybar[[k, x]];
        }
    })
}

/// Goh-transformed state `zeta' + A zeta = B1 . w`, `zeta(0) = 0`.
pub fn solve_zeta(
    disc: &Discretization,
    ybar: &Field,
    ubar: &TimeSamples,
    w: &Array2<f64>,
    scheme: Scheme,
) -> Field {
    let pot = Potential::new(disc, ybar, ubar);
    let b1 = crate::goh::compute_b1(disc, ybar);
    let ns = disc.grid.n_space();
    evolve_forward(disc, &pot, scheme, None, |k, side, out| {
        for x in 0..ns {
            out[x] = (0..disc.m()).map(|i| w[[k, i]] * b1[i].side(side)[[k, x]]).sum();
        }
    })
}

/// Batched `zeta` stepper: advances many transformed states at once with a
/// single factorization per step.
pub struct ZetaBatch<'a> {
    disc: &'a Discretization,
    pot: &'a Potential,
    b1: &'a [crate::problem::SidedField],
    st: ThetaStep,
}

impl<'a> ZetaBatch<'a> {
    pub fn new(
        disc: &'a Discretization,
        pot: &'a Potential,
        b1: &'a [crate::problem::SidedField],
        scheme: Scheme,
    ) -> Self {
        ZetaBatch { disc, pot, b1, st: ThetaStep::new(disc, scheme) }
    }

    /// Step-`k` factorization of `I + theta h A`.
    pub fn factor(&self, k: usize) -> TridiagFactor {
        let (lo, di, up) = self.st.implicit(self.disc.grid.step(k), self.pot.left.row(k + 1));
        TridiagFactor::new(&lo, &di, &up)
    }

    /// Advances every row of `zeta` (elements x space) from node `k` to
    /// `k + 1`, given `w` at both nodes (elements x m).
    pub fn advance(
        &self,
        k: usize,
        factor: &TridiagFactor,
        zeta: ArrayView2<f64>,
        w_old: ArrayView2<f64>,
        w_new: ArrayView2<f64>,
    ) -> Array2<f64> {
        let h = self.disc.grid.step(k);
        let ns = self.disc.grid.n_space();
        let n = ns - 2;
        let theta = self.st.theta;
        let mut out = Array2::zeros(zeta.raw_dim());
        let mut rhs = vec![0.0; n];
        for (e, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            self.st.explicit(h, self.pot.right.row(k), zeta.row(e), &mut rhs);
            for (i, b1) in self.b1.iter().enumerate() {
                let (wo, wn) = ((1.0 - theta) * h * w_old[[e, i]], theta * h * w_new[[e, i]]);
                if wo == 0.0 && wn == 0.0 {
                    continue;
                }
                let (bo, bn) = (b1.side(Side::Right).row(k), b1.left.row(k + 1));
                for x in 0..n {
                    rhs[x] += wo * bo[x + 1] + wn * bn[x + 1];
                }
            }
            factor.solve(&mut rhs);
            for x in 0..n {
                row[x + 1] = rhs[x];
            }
        }
        out
    }

    /// `(I + theta h A)^{-1} theta h B1_i(t_{k+1})`: the response of
    /// `zeta(t_{k+1})` to a unit `w_i(t_{k+1})`.
    pub fn unit_response(&self, k: usize, factor: &TridiagFactor, i: usize) -> Vec<f64> {
        let h = self.disc.grid.step(k);
        let ns = self.disc.grid.n_space();
        let b = self.b1[i].left.row(k + 1);
        let mut x: Vec<f64> = (1..ns - 1).map(|j| self.st.theta * h * b[j]).collect();
        factor.solve(&mut x);
        let mut out = vec![0.0; ns];
        out[1..ns - 1].copy_from_slice(&x);
        out
    }
}

/// `zeta[w]` for many `w` (each time nodes x m), in parallel.
pub fn solve_zeta_batch(
    disc: &Discretization,
    ybar: &Field,
    ubar: &TimeSamples,
    ws: &[Array2<f64>],
    scheme: Scheme,
) -> Vec<Field> {
    let pot = Potential::new(disc, ybar, ubar);
    let b1 = crate::goh::compute_b1(disc, ybar);
    let ns = disc.grid.n_space();
    ws.par_iter()
        .map(|w| {
            evolve_forward(disc, &pot, scheme, None, |k, side, out| {
                for x in 0..ns {
                    out[x] = (0..disc.m()).map(|i| w[[k, i]] * b1[i].side(side)[[k, x]]).sum();
                }
            })
        })
        .collect()
}

/// Costate `-p' + A p = (ybar - y_d) + sum_j c_j mu_dot_j`,
/// `p(T) = ybar(T) - y_dT`, by the theta scheme run backward in time.
pub fn solve_costate(
    disc: &Discretization,
    ybar: &Field,
    ubar: &TimeSamples,
    mu_dot: &TimeSamples,
    scheme: Scheme,
) -> Field {
    let grid = &disc.grid;
    let ns = grid.n_space();
    let n = ns - 2;
    let pot = Potential::new(disc, ybar, ubar);
    let st = ThetaStep::new(disc, scheme);
    let source = |k: usize, side: Side| -> Vec<f64> {
        let yd = disc.y_d.side(side);
        (0..ns)
            .map(|x| {
                let mut r = ybar[[k, x]] - yd[[k, x]];
                for (j, c) in disc.c.iter().enumerate() {
                    r += c[x] * mu_dot.at(k, j, side);
                }
                r
            })
            .collect()
    };
    let last = grid.n_times() - 1;
    let mut p = Field::zeros((grid.n_times(), ns));
    for x in 1..ns - 1 {
        p[[last, x]] = ybar[[last, x]] - disc.y_dt[x];
    }
    let mut rhs = vec![0.0; n];
    let mut sol = vec![0.0; n];
    for k in (0..grid.n_steps()).rev() {
        let h = grid.step(k);
        let r_new = source(k, Side::Right);
        let r_old = source(k + 1, Side::Left);
        st.explicit(h, pot.left.row(k + 1), p.row(k + 1), &mut rhs);
        for i in 0..n {
            rhs[i] += h * (st.theta * r_new[i + 1] + (1.0 - st.theta) * r_old[i + 1]);
        }
        let (lo, di, up) = st.implicit(h, pot.right.row(k));
        solve_tridiagonal(&lo, &di, &up, &rhs, &mut sol);
        for i in 0..n {
            p[[k, i + 1]] = sol[i];
        }
    }
    p
}

/// Exact transpose of the forward linear scheme.
///
/// Given nodal loads `r_n`, returns step multipliers `lambda_k` (one row per
/// time step) such that for every forcing `F` the forward solution `z`
/// satisfies `sum_n <r_n, z_n> = sum_k h_k <lambda_k, theta F_{k+1} + (1 - theta) F_k>`
/// to round-off, where `<.,.>` is the trapezoid space inner product.
pub fn discrete_adjoint(
    disc: &Discretization,
    ybar: &Field,
    ubar: &TimeSamples,
    loads: &Field,
    scheme: Scheme,
) -> Array2<f64> {
    let grid = &disc.grid;
    let ns = grid.n_space();
    let n = ns - 2;
    let pot = Potential::new(disc, ybar, ubar);
    let st = ThetaStep::new(disc, scheme);
    let steps = grid.n_steps();
    let mut lam = Array2::zeros((steps, ns));
    let mut rhs = vec![0.0; n];
    let mut sol = vec![0.0; n];
    for nidx in (1..=steps).rev() {
        // M+_{n-1} lam_{n-1} = r_n + M-_n lam_n, with lam_steps = 0
        if nidx < steps {
            st.explicit(grid.step(nidx), pot.right.row(nidx), lam.row(nidx), &mut rhs);
        } else {
            rhs.iter_mut().for_each(|v| *v = 0.0);
        }
        for i in 0..n {
            rhs[i] += loads[[nidx, i + 1]];
        }
        let (lo, di, up) = st.implicit(grid.step(nidx - 1), pot.left.row(nidx));
        solve_tridiagonal(&lo, &di, &up, &rhs, &mut sol);
        for i in 0..n {
            lam[[nidx - 1, i + 1]] = sol[i];
        }
    }
    lam
}

/// `M_1 = exp(T/2 + sum_{i=0}^m |ubar_i|_1 |b_i|_inf) |ybar|_{L^inf(L^2)}`, the
/// constant of the a priori bound
/// `|z|_{L^inf(L^2)} <= M_1 sum_i |b_i|_inf |v_i|_1`.
pub fn estimate_m1(disc: &Discretization, ybar: &Field, ubar: &TimeSamples) -> f64 {
    let grid = &disc.grid;
    let sup = |b: &Vec<f64>| b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let abs_u = ubar.map(f64::abs);
    let mut exponent = grid.horizon() / 2.0 + grid.horizon() * sup(&disc.b[0]);
    for i in 0..disc.m() {
        exponent += abs_u.integral(grid, i) * sup(&disc.b[i + 1]);
    }
    let ynorm = (0..grid.n_times())
        .map(|k| {
            let r = ybar.row(k);
            let r = r.as_slice().expect("contiguous");
            space_inner(grid.dx, r, r).sqrt()
        })
        .fold(0.0, f64::max);
    exponent.exp() * ynorm
}
