//! Sampling check of quadratic growth of the cost near the candidate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::goh::goh_w;
use crate::optimality::Tolerances;
use crate::problem::{state_constraint_series, Discretization, Field, TimeSamples};
use crate::quadratic::band_limited;
use crate::quadrature::{time_trapz, time_trapz_sided};
use crate::solvers::{cost, solve_state, EvolutionOptions};

/// Which perturbed states count as feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityFilter {
    /// `g_j(y[u])(t) <= max(g_j(ybar)(t), 0) + tol_j`: the discrete candidate
    /// state itself may sit above zero by the discretization error.
    RelativeToCandidate,
    /// `g_j(y[u]) <= tol_j` everywhere.
    Strict,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthOptions {
    pub n_samples: usize,
    /// Upper bound on `||u - ubar||_2` before projection onto the bounds.
    pub radius: f64,
    pub seed: u64,
    /// Fourier modes per control in each perturbation.
    pub modes: usize,
    pub filter: FeasibilityFilter,
    pub tol_state: Vec<f64>,
    /// A draw fails only if `F(u) - F(ubar) < -(slack * ||u - ubar||_1 + offset)`.
    /// Both are zero by default. On coarse grids `slack` is the first-order
    /// tolerance, bounding the linear term left by an inexact discrete
    /// candidate, and `offset` is `sum_j tol_state_j int mu_dot_j`, the gain
    /// available from the state tolerance.
    pub slack: f64,
    pub offset: f64,
}

impl GrowthOptions {
    pub fn new(n_samples: usize, radius: f64, seed: u64, tol_state: Vec<f64>) -> Self {
        GrowthOptions { n_samples, radius, seed, modes: 5, filter: FeasibilityFilter::RelativeToCandidate, tol_state, slack: 0.0, offset: 0.0 }
    }

    /// State tolerances from `tol`, plus slack and offset in coarse mode.
    pub fn from_tolerances(
        n_samples: usize,
        radius: f64,
        seed: u64,
        disc: &Discretization,
        mu_dot: &TimeSamples,
        tol: &Tolerances,
    ) -> Self {
        let mut opts = GrowthOptions::new(n_samples, radius, seed, tol.state.clone());
        if tol.coarse {
            opts.slack = tol.first_order;
            opts.offset = (0..disc.q())
                .map(|j| {
                    let l: Vec<f64> = (0..disc.grid.n_times()).map(|k| mu_dot.left()[[k, j]]).collect();
                    let r: Vec<f64> = (0..disc.grid.n_times()).map(|k| mu_dot.right()[[k, j]]).collect();
                    tol.state[j] * time_trapz_sided(&disc.grid, &l, &r)
                })
                .sum();
        }
        opts
    }
}

/// One accepted draw.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GrowthSample {
    pub index: usize,
    pub distance: f64,
    pub cost_increase: f64,
    /// `||u - ubar||_1`.
    pub l1_distance: f64,
    /// `||w||_2^2 + |w(T)|^2`.
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub draws: usize,
    pub accepted: usize,
    pub infeasible: usize,
    /// Draws that coincide with the candidate after projection.
    pub degenerate: usize,
    pub discard_rate: f64,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub negative: Vec<GrowthSample>,
    /// Draws whose decrease exceeds the slack and offset.
    pub violations: usize,
    pub slack: f64,
    pub offset: f64,
    #[serde(skip)]
    pub samples: Vec<GrowthSample>,
    pub passed: bool,
}

enum Outcome {
    Accepted(GrowthSample),
    Infeasible,
    Degenerate,
}

/// Draws `n_samples` perturbations `ubar + delta` with band-limited `delta`
/// of random size up to `radius`, projects them onto the bounds, discards
/// infeasible states and records
/// `(F(u) - F(ubar)) / (||w||_2^2 + |w(T)|^2)` with `w = int (u - ubar)`.
///
/// Draws are generated sequentially from the seed and evaluated in
/// parallel, so results do not depend on the thread count.
pub fn growth_probe(
    disc: &Discretization,
    ubar: &TimeSamples,
    ybar: &Field,
    opts: &GrowthOptions,
    evo: &EvolutionOptions,
) -> Result<GrowthReport> {
    if opts.radius.is_nan() || opts.radius <= 0.0 {
        return Err(Error::InvalidProblem(format!("growth radius must be > 0, got {}", opts.radius)));
    }
    let grid = &disc.grid;
    let spec = &disc.spec;
    let m = disc.m();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let perturbations: Vec<TimeSamples> = (0..opts.n_samples)
        .map(|_| {
            let d = band_limited(grid, m, opts.modes, &mut rng);
            let size: f64 = opts.radius * rng.random_range(0.05..=1.0);
            let norm = d.l2_norm(grid);
            if norm > 0.0 {
                d.scaled(size / norm)
            } else {
                d
            }
        })
        .collect();
    let f_bar = cost(disc, ubar, ybar).total;
    let g_bar = state_constraint_series(disc, ybar);
    let outcomes: Vec<Result<Outcome>> = perturbations
        .par_iter()
        .enumerate()
        .map(|(index, d)| {
            let u = ubar.add(d).clamp(&spec.u_lower, &spec.u_upper);
            let du = u.sub(ubar);
            let (w, h) = goh_w(disc, &du);
            let sq: Vec<f64> = w.rows().into_iter().map(|r| r.dot(&r)).collect();
            let denominator = time_trapz(grid, &sq) + h.dot(&h);
            if denominator <= 1e-14 {
                return Ok(Outcome::Degenerate);
            }
            let y = solve_state(disc, &u, evo)?;
            let g = state_constraint_series(disc, &y);
            for ((k, j), &v) in g.indexed_iter() {
                let limit = match opts.filter {
                    FeasibilityFilter::RelativeToCandidate => g_bar[[k, j]].max(0.0),
                    FeasibilityFilter::Strict => 0.0,
                } + opts.tol_state[j];
                if v > limit {
                    return Ok(Outcome::Infeasible);
                }
            }
            let inc = cost(disc, &u, &y).total - f_bar;
            let abs: Vec<f64> = (0..grid.n_times())
                .map(|k| (0..m).map(|i| du.left()[[k, i]].abs()).sum())
                .collect();
            let abs_r: Vec<f64> = (0..grid.n_times())
                .map(|k| (0..m).map(|i| du.right()[[k, i]].abs()).sum())
                .collect();
            Ok(Outcome::Accepted(GrowthSample {
                index,
                distance: du.l2_norm(grid),
                l1_distance: time_trapz_sided(grid, &abs, &abs_r),
                cost_increase: inc,
                denominator,
                ratio: inc / denominator,
            }))
        })
        .collect();
    let mut samples = Vec::new();
    let (mut infeasible, mut degenerate) = (0, 0);
    for o in outcomes {
        match o? {
            Outcome::Accepted(s) => samples.push(s),
            Outcome::Infeasible => infeasible += 1,
            Outcome::Degenerate => degenerate += 1,
        }
    }
    if samples.is_empty() {
        return Err(Error::AllDrawsInfeasible { attempts: opts.n_samples });
    }
    let mut ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let median_ratio = if ratios.len() % 2 == 1 {
        ratios[ratios.len() / 2]
    } else {
        0.5 * (ratios[ratios.len() / 2 - 1] + ratios[ratios.len() / 2])
    };
    let negative: Vec<GrowthSample> = samples.iter().filter(|s| s.ratio < 0.0).copied().collect();
    let violations = samples.iter().filter(|s| s.cost_increase < -(opts.slack * s.l1_distance + opts.offset)).count();
    Ok(GrowthReport {
        draws: opts.n_samples,
        accepted: samples.len(),
        infeasible,
        degenerate,
        discard_rate: infeasible as f64 / opts.n_samples as f64,
        min_ratio: ratios[0],
        median_ratio,
        passed: violations == 0,
        negative,
        violations,
        slack: opts.slack,
        offset: opts.offset,
        samples,
    })
}
