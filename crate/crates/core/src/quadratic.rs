//! The second variation `Q` in the original variables and its Goh-transformed
//! counterpart `Qhat` in `(zeta, w, h)`, their Hessians on a finite basis,
//! and the probe of the linearization remainder.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::goh::{goh_identity_residual, goh_w, kappa, GohAuxiliaries};
use crate::problem::expr::Side;
use crate::problem::{Discretization, Field, GohDirection, Grid, SidedField, TimeSamples};
use crate::quadrature::{loglog_slope, space_inner, time_trapz_sided};
use crate::solvers::{solve_linearized, solve_state, solve_zeta, EvolutionOptions, Potential, Scheme, ZetaBatch};

/// A candidate together with everything both quadratic forms need.
pub struct QuadContext<'a> {
    pub disc: &'a Discretization,
    pub ybar: &'a Field,
    pub ubar: &'a TimeSamples,
    pub p: &'a Field,
    pub mu_dot: &'a TimeSamples,
    pub scheme: Scheme,
    pub kappa: Field,
    pub aux: GohAuxiliaries,
    /// `K_i = -p b_i'' - 2 p' b_i' + b_i (ybar - y_d) + b_i sum_j c_j mu_dot_j`,
    /// the weight of `w_i` against `zeta` in the transformed integrand. The
    /// derivative part uses the same discrete commutator as `B1`.
    pub k_fields: Vec<SidedField>,
    pub pot: Potential,
}

impl<'a> QuadContext<'a> {
    pub fn new(
        disc: &'a Discretization,
        ybar: &'a Field,
        ubar: &'a TimeSamples,
        p: &'a Field,
        mu_dot: &'a TimeSamples,
        scheme: Scheme,
    ) -> Self {
        let kap = kappa(disc, ybar, p);
        let aux = GohAuxiliaries::new(disc, ybar, p, mu_dot, &kap);
        let k_fields = compute_k(disc, ybar, p, mu_dot);
        let pot = Potential::new(disc, ybar, ubar);
        QuadContext { disc, ybar, ubar, p, mu_dot, scheme, kappa: kap, aux, k_fields, pot }
    }

    /// Replaces the curvature weight `kappa`; the dynamics are unchanged.
    pub fn with_kappa(mut self, kappa: Field) -> Self {
        self.aux = GohAuxiliaries::new(self.disc, self.ybar, self.p, self.mu_dot, &kappa);
        self.kappa = kappa;
        self
    }

    fn n_times(&self) -> usize {
        self.disc.grid.n_times()
    }

    fn m(&self) -> usize {
        self.disc.m()
    }
}

fn compute_k(disc: &Discretization, ybar: &Field, p: &Field, mu_dot: &TimeSamples) -> Vec<SidedField> {
    let grid = &disc.grid;
    let (nt, ns) = (grid.n_times(), grid.n_space());
    let sided = disc.y_d.right.is_some() || !mu_dot.jump_nodes().is_empty();
    (1..=disc.m())
        .map(|i| {
            let b = &disc.b[i];
            let mut comm = Field::zeros((nt, ns));
            for k in 0..nt {
                let c = crate::goh::commutator(grid.dx, p.row(k).as_slice().expect("contiguous"), b);
                comm.row_mut(k).assign(&Array1::from(c));
            }
            let build = |side: Side| {
                let yd = disc.y_d.side(side);
                Field::from_shape_fn((nt, ns), |(k, x)| {
                    let mu: f64 = disc.c.iter().enumerate().map(|(j, c)| c[x] * mu_dot.at(k, j, side)).sum();
                    -comm[[k, x]] + b[x] * (ybar[[k, x]] - yd[[k, x]]) + b[x] * mu
                })
            };
            SidedField { left: build(Side::Left), right: sided.then(|| build(Side::Right)) }
        })
        .collect()
}

/// Terms of `Q(z, v) = int int kappa z^2 + 2 int int p (sum v_i b_i) z + int z(T)^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct QTerms {
    pub kappa_term: f64,
    pub control_term: f64,
    pub terminal: f64,
}

impl QTerms {
    pub fn total(&self) -> f64 {
        self.kappa_term + self.control_term + self.terminal
    }
}

/// Terms of the transformed form.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct QhatTerms {
    /// `int int kappa (zeta + ybar sum b_i w_i)^2`.
    pub kappa_term: f64,
    /// `-int w' S_dot w`.
    pub s_dot_term: f64,
    /// `2 int sum w_i <zeta, K_i>`.
    pub zeta_cross: f64,
    /// `-2 int w' P w`.
    pub p_cross: f64,
    /// `int (zeta(T) + ybar(T) sum h_i b_i)^2`.
    pub terminal_square: f64,
    /// `2 sum h_i int b_i p(T) zeta(T)`.
    pub terminal_cross: f64,
    /// `h' S(T) h`.
    pub terminal_s: f64,
}

impl QhatTerms {
    pub fn total(&self) -> f64 {
        self.kappa_term
            + self.s_dot_term
            + self.zeta_cross
            + self.p_cross
            + self.terminal_square
            + self.terminal_cross
            + self.terminal_s
    }
}

fn weighted_sq(dx: f64, kap: &[f64], f: &[f64]) -> f64 {
    dx * kap.iter().zip(f).map(|(k, v)| k * v * v).sum::<f64>()
}

/// Evaluates `Q` at a linearized state `z` and its direction `v`.
pub fn eval_q(ctx: &QuadContext, z: &Field, v: &TimeSamples) -> QTerms {
    let disc = ctx.disc;
    let dx = disc.grid.dx;
    let nt = ctx.n_times();
    let kz: Vec<f64> = (0..nt)
        .map(|k| weighted_sq(dx, ctx.kappa.row(k).as_slice().unwrap(), z.row(k).as_slice().unwrap()))
        .collect();
    let cross = |side: Side| -> Vec<f64> {
        (0..nt)
            .map(|k| {
                let zr = z.row(k);
                (0..ctx.m())
                    .map(|i| {
                        let b = &disc.b[i + 1];
                        let s: f64 = (0..zr.len()).map(|x| ctx.p[[k, x]] * b[x] * zr[x]).sum();
                        2.0 * v.at(k, i, side) * dx * s
                    })
                    .sum()
            })
            .collect()
    };
    let last = z.row(nt - 1);
    let last = last.as_slice().unwrap();
    QTerms {
        kappa_term: time_trapz_sided(&disc.grid, &kz, &kz),
        control_term: time_trapz_sided(&disc.grid, &cross(Side::Left), &cross(Side::Right)),
        terminal: space_inner(dx, last, last),
    }
}

/// `zeta + ybar sum_i b_i w_i` at node `k`.
fn recombine(ctx: &QuadContext, k: usize, zeta: &[f64], w: &[f64]) -> Vec<f64> {
    let disc = ctx.disc;
    (0..zeta.len())
        .map(|x| zeta[x] + ctx.ybar[[k, x]] * (0..ctx.m()).map(|i| disc.b[i + 1][x] * w[i]).sum::<f64>())
        .collect()
}

/// Evaluates the transformed form at `(zeta, w, h)`.
pub fn eval_qhat(ctx: &QuadContext, dir: &GohDirection) -> QhatTerms {
    let disc = ctx.disc;
    let grid = &disc.grid;
    let dx = grid.dx;
    let (nt, m) = (ctx.n_times(), ctx.m());
    let mut kap = vec![0.0; nt];
    let mut sd = [vec![0.0; nt], vec![0.0; nt]];
    let mut zc = [vec![0.0; nt], vec![0.0; nt]];
    let mut pc = [vec![0.0; nt], vec![0.0; nt]];
    for k in 0..nt {
        let zeta = dir.zeta.row(k);
        let zeta = zeta.as_slice().unwrap();
        let w = dir.w.row(k);
        let w = w.as_slice().unwrap();
        let phi = recombine(ctx, k, zeta, w);
        kap[k] = weighted_sq(dx, ctx.kappa.row(k).as_slice().unwrap(), &phi);
        for (s, side) in [Side::Left, Side::Right].into_iter().enumerate() {
            let (sdm, pm) = (ctx.aux.s_dot.side(side), ctx.aux.p_mat.side(side));
            for i in 0..m {
                let kf = ctx.k_fields[i].side(side).row(k);
                zc[s][k] += 2.0 * w[i] * space_inner(dx, zeta, kf.as_slice().unwrap());
                for j in 0..m {
                    sd[s][k] -= w[i] * sdm[[k, i, j]] * w[j];
                    pc[s][k] -= 2.0 * w[i] * pm[[k, i, j]] * w[j];
                }
            }
        }
    }
    let last = nt - 1;
    let zeta_t = dir.zeta.row(last);
    let zeta_t = zeta_t.as_slice().unwrap();
    let h = dir.h.as_slice().unwrap();
    let psi = recombine(ctx, last, zeta_t, h);
    let mut terminal_cross = 0.0;
    let mut terminal_s = 0.0;
    for i in 0..m {
        let bp: Vec<f64> = (0..zeta_t.len()).map(|x| disc.b[i + 1][x] * ctx.p[[last, x]]).collect();
        terminal_cross += 2.0 * h[i] * space_inner(dx, &bp, zeta_t);
        for j in 0..m {
            terminal_s += h[i] * ctx.aux.s[[last, i, j]] * h[j];
        }
    }
    QhatTerms {
        kappa_term: time_trapz_sided(grid, &kap, &kap),
        s_dot_term: time_trapz_sided(grid, &sd[0], &sd[1]),
        zeta_cross: time_trapz_sided(grid, &zc[0], &zc[1]),
        p_cross: time_trapz_sided(grid, &pc[0], &pc[1]),
        terminal_square: space_inner(dx, &psi, &psi),
        terminal_cross,
        terminal_s,
    }
}

/// `Q` and `Qhat` at the same direction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadReport {
    pub q_value: f64,
    pub qhat_value: f64,
    /// `|Q - Qhat| / max(1, |Q|)`.
    pub rel_gap: f64,
    pub identity_residual: f64,
    pub q_terms: QTerms,
    pub qhat_terms: QhatTerms,
}

/// The transformed direction of `v`.
pub fn goh_direction(ctx: &QuadContext, v: &TimeSamples) -> GohDirection {
    let (w, h) = goh_w(ctx.disc, v);
    let zeta = solve_zeta(ctx.disc, ctx.ybar, ctx.ubar, &w, ctx.scheme);
    GohDirection { zeta, w, h }
}

pub fn compare_forms(ctx: &QuadContext, v: &TimeSamples) -> QuadReport {
    let z = solve_linearized(ctx.disc, ctx.ybar, ctx.ubar, v, ctx.scheme);
    let dir = goh_direction(ctx, v);
    let q_terms = eval_q(ctx, &z, v);
    let qhat_terms = eval_qhat(ctx, &dir);
    let (q, qh) = (q_terms.total(), qhat_terms.total());
    QuadReport {
        q_value: q,
        qhat_value: qh,
        rel_gap: (q - qh).abs() / q.abs().max(1.0),
        identity_residual: goh_identity_residual(ctx.disc, ctx.ybar, &z, &dir.zeta, &dir.w),
        q_terms,
        qhat_terms,
    }
}

/// Gram matrix of the transformed form on a finite family of `(w, h)`:
/// `w` has shape `(elements, time nodes, m)` and `h` `(elements, m)`.
///
/// The `zeta` of every element is advanced together and the integrand is
/// accumulated node by node, so no space-time field is stored.
pub fn qhat_hessian(ctx: &QuadContext, w: &Array3<f64>, h: &Array2<f64>) -> Array2<f64> {
    let disc = ctx.disc;
    let grid = &disc.grid;
    let dx = grid.dx;
    let (nb, nt, m) = w.dim();
    let ns = grid.n_space();
    let b1 = &ctx.aux.b1;
    let batch = ZetaBatch::new(disc, &ctx.pot, b1, ctx.scheme);
    let mut zeta = Array2::<f64>::zeros((nb, ns));
    let mut hess = Array2::<f64>::zeros((nb, nb));
    // kappa terms of a block of nodes go through one product
    const BLOCK: usize = 32;
    let mut left = Array2::<f64>::zeros((nb, BLOCK * ns));
    let mut right = Array2::<f64>::zeros((nb, BLOCK * ns));
    let mut filled = 0;
    for k in 0..nt {
        if k > 0 {
            let f = batch.factor(k - 1);
            zeta = batch.advance(k - 1, &f, zeta.view(), w.index_axis(Axis(1), k - 1), w.index_axis(Axis(1), k));
        }
        let wk = w.index_axis(Axis(1), k);
        let (wl, wr) = grid.time_weights(k);
        let phi = recombined_rows(ctx, k, zeta.view(), wk);
        let scaled = &phi * &(&ctx.kappa.row(k) * ((wl + wr) * dx));
        left.slice_mut(s![.., filled * ns..(filled + 1) * ns]).assign(&scaled);
        right.slice_mut(s![.., filled * ns..(filled + 1) * ns]).assign(&phi);
        filled += 1;
        if filled == BLOCK || k == nt - 1 {
            let cols = filled * ns;
            hess += &left.slice(s![.., ..cols]).dot(&right.slice(s![.., ..cols]).t());
            filled = 0;
        }
        accumulate_node(ctx, k, zeta.view(), wk, wl, wr, &mut hess);
    }
    // terminal part
    let last = nt - 1;
    let phi = recombined_rows(ctx, last, zeta.view(), h.view());
    hess += &(phi.dot(&phi.t()) * dx);
    let mut bp = Array2::<f64>::zeros((m, ns));
    for i in 0..m {
        for x in 0..ns {
            bp[[i, x]] = disc.b[i + 1][x] * ctx.p[[last, x]];
        }
    }
    let zb = zeta.dot(&bp.t()) * dx; // (nb, m)
    let cross = h.dot(&zb.t());
    hess += &cross;
    hess += &cross.t();
    let s_t = ctx.aux.s.index_axis(Axis(0), last);
    hess += &h.dot(&s_t).dot(&h.t());
    hess
}

fn recombined_rows(ctx: &QuadContext, k: usize, zeta: ArrayView2<f64>, w: ArrayView2<f64>) -> Array2<f64> {
    let disc = ctx.disc;
    let ns = disc.grid.n_space();
    let mut by = Array2::<f64>::zeros((ctx.m(), ns));
    for i in 0..ctx.m() {
        for x in 0..ns {
            by[[i, x]] = disc.b[i + 1][x] * ctx.ybar[[k, x]];
        }
    }
    &zeta + &w.dot(&by)
}

fn accumulate_node(
    ctx: &QuadContext,
    k: usize,
    zeta: ArrayView2<f64>,
    w: ArrayView2<f64>,
    wl: f64,
    wr: f64,
    hess: &mut Array2<f64>,
) {
    let dx = ctx.disc.grid.dx;
    let m = ctx.m();
    for (side, wt) in [(Side::Left, wl), (Side::Right, wr)] {
        if wt == 0.0 {
            continue;
        }
        let sd = ctx.aux.s_dot.side(side).index_axis(Axis(0), k);
        let pm = ctx.aux.p_mat.side(side).index_axis(Axis(0), k);
        let coupling = &sd + &pm + pm.t();
        *hess -= &(w.dot(&coupling).dot(&w.t()) * wt);
        let mut kmat = Array2::<f64>::zeros((m, zeta.ncols()));
        for i in 0..m {
            kmat.row_mut(i).assign(&ctx.k_fields[i].side(side).row(k));
        }
        let zk = zeta.dot(&kmat.t()) * dx; // (nb, m)
        let cross = w.dot(&zk.t());
        *hess += &(&cross * wt);
        *hess += &(&cross.t() * wt);
    }
}

/// Band-limited random direction: per component, a sum of `modes` Fourier
/// modes on `[0, T]` with standard normal coefficients.
pub fn band_limited<R: Rng + ?Sized>(grid: &Grid, m: usize, modes: usize, rng: &mut R) -> TimeSamples {
    let t_end = grid.horizon();
    let coeffs: Vec<Vec<(f64, f64)>> = (0..m)
        .map(|_| {
            (0..modes)
                .map(|_| {
                    let a: f64 = StandardNormal.sample(&mut *rng);
                    (a, rng.random_range(0.0..std::f64::consts::TAU))
                })
                .collect()
        })
        .collect();
    TimeSamples::from_fn(grid, m, |t, _| {
        coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .map(|(n, (a, ph))| a * ((n as f64 + 1.0) * std::f64::consts::PI * t / t_end + ph).cos())
                    .sum()
            })
            .collect()
    })
}

/// One amplitude of the remainder probe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RemainderPoint {
    pub amplitude: f64,
    /// `||w||_2 + |w(T)|`.
    pub w_size: f64,
    /// `max_t ||y[u + a v](t) - ybar(t)||`.
    pub delta_y: f64,
    /// Same for `eta = delta_y - z`.
    pub eta: f64,
    pub delta_ratio: f64,
    pub eta_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainderProbe {
    pub points: Vec<RemainderPoint>,
    /// Log-log slope of `eta_ratio` in the amplitude; one for a quadratic
    /// remainder.
    pub eta_slope: f64,
    /// Same for `delta_ratio`; zero when `delta_y` is of the size of `w`.
    pub delta_slope: f64,
}

fn sup_l2(dx: f64, f: &Field) -> f64 {
    f.rows().into_iter().map(|r| space_inner(dx, r.as_slice().unwrap(), r.as_slice().unwrap())).fold(0.0, f64::max).sqrt()
}

/// Compares `y[ubar + a v] - ybar` with its linearization `a z[v]` over the
/// given amplitudes. The perturbed controls need not respect the bounds.
pub fn remainder_probe(
    disc: &Discretization,
    ubar: &TimeSamples,
    ybar: &Field,
    v: &TimeSamples,
    amplitudes: &[f64],
    opts: &EvolutionOptions,
) -> Result<RemainderProbe> {
    if amplitudes.len() < 3 {
        return Err(Error::TooFewSweepPoints(amplitudes.len()));
    }
    let grid = &disc.grid;
    let z1 = solve_linearized(disc, ybar, ubar, v, opts.scheme);
    let (w1, h1) = goh_w(disc, v);
    let w1_norm = {
        let sq: Vec<f64> = w1.rows().into_iter().map(|r| r.dot(&r)).collect();
        time_trapz_sided(grid, &sq, &sq).sqrt()
    };
    let h1_norm = h1.dot(&h1).sqrt();
    let mut points = Vec::with_capacity(amplitudes.len());
    for &a in amplitudes {
        let u = ubar.add(&v.scaled(a));
        let y = solve_state(disc, &u, opts).map_err(|e| Error::ProbeSolve { amplitude: a, source: Box::new(e) })?;
        let dy = &y - ybar;
        let eta = &dy - &(&z1 * a);
        let w_size = a.abs() * (w1_norm + h1_norm);
        let (dn, en) = (sup_l2(grid.dx, &dy), sup_l2(grid.dx, &eta));
        points.push(RemainderPoint {
            amplitude: a,
            w_size,
            delta_y: dn,
            eta: en,
            delta_ratio: dn / w_size,
            eta_ratio: en / w_size,
        });
    }
    let amps: Vec<f64> = points.iter().map(|p| p.amplitude.abs()).collect();
    let er: Vec<f64> = points.iter().map(|p| p.eta_ratio).collect();
    let dr: Vec<f64> = points.iter().map(|p| p.delta_ratio).collect();
    Ok(RemainderProbe { eta_slope: loglog_slope(&amps, &er), delta_slope: loglog_slope(&amps, &dr), points })
}

/// `v` restricted to `[t0, t1]` (zero outside).
pub fn windowed(grid: &Grid, v: &TimeSamples, t0: f64, t1: f64) -> TimeSamples {
    let inside = |t: f64, side: Side| match side {
        Side::Left => t > t0 && t <= t1,
        Side::Right => t >= t0 && t < t1,
    };
    let mut left = v.left().clone();
    let mut right = v.right().clone();
    for (k, &t) in grid.t.iter().enumerate() {
        if !inside(t, Side::Left) {
            left.row_mut(k).fill(0.0);
        }
        if !inside(t, Side::Right) {
            right.row_mut(k).fill(0.0);
        }
    }
    TimeSamples::with_jumps(left, right).expect("same shapes")
}

/// `w` (time nodes x m) of each basis element as a 3-D array.
pub fn stack_w(ws: &[Array2<f64>]) -> Array3<f64> {
    let (nt, m) = ws[0].dim();
    let mut out = Array3::zeros((ws.len(), nt, m));
    for (e, w) in ws.iter().enumerate() {
        out.slice_mut(s![e, .., ..]).assign(w);
    }
    out
}

#[cfg(test)]
mod tests;
