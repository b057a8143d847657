//! Refinement and amplitude studies with fitted log-log slopes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::pipeline::Solved;
use super::report::Table;
use crate::error::{Error, Result};
use super::truth::state_rel_error;
use crate::example::{example_candidate, example_discretization};
use crate::quadratic::{band_limited, remainder_probe, RemainderProbe};
use crate::quadrature::loglog_slope;
use crate::solvers::{solve_state, EvolutionOptions, Scheme};

pub const DEFAULT_GRIDS: [(usize, usize); 3] = [(51, 375), (101, 750), (201, 1500)];
pub const DEFAULT_AMPLITUDES: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
/// `eta_ratio` must grow at least this fast in the amplitude.
pub const ETA_SLOPE_MIN: f64 = 0.9;
/// `|slope|` of `delta_ratio` must stay below this.
pub const DELTA_SLOPE_MAX: f64 = 0.15;

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub state_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSweep {
    pub scheme: Scheme,
    pub points: Vec<GridPoint>,
    /// Slope of the state error against `dx`.
    pub slope: f64,
    pub min_slope: f64,
    pub passed: bool,
}

/// Expected order in `dx` when `dt` is refined with `dx`.
pub fn expected_order(scheme: Scheme) -> f64 {
    match scheme {
        Scheme::CrankNicolson => 2.0,
        Scheme::ImplicitEuler => 1.0,
    }
}

/// State error of the closed-form example against the single-mode oracle
/// over a list of grids.
pub fn grid_sweep(grids: &[(usize, usize)], scheme: Scheme) -> Result<(GridSweep, Table)> {
    if grids.len() < 3 {
        return Err(Error::TooFewSweepPoints(grids.len()));
    }
    let mut points = Vec::new();
    for &(nx, nt) in grids {
        let disc = example_discretization(nx, nt)?;
        let (u, _) = example_candidate(&disc.grid);
        let y = solve_state(&disc, &u, &EvolutionOptions::with_scheme(scheme))?;
        points.push(GridPoint { nx, nt, dx: disc.grid.dx, dt: disc.grid.dt, state_rel_error: state_rel_error(&disc.grid, &u, &y) });
    }
    let dx: Vec<f64> = points.iter().map(|p| p.dx).collect();
    let err: Vec<f64> = points.iter().map(|p| p.state_rel_error).collect();
    let slope = loglog_slope(&dx, &err);
    let min_slope = expected_order(scheme) - 0.1;
    let mut t = Table::new("orders.csv", &["nx", "nt", "dx", "dt", "state_rel_error"]);
    for p in &points {
        t.push_f64(&[p.nx as f64, p.nt as f64, p.dx, p.dt, p.state_rel_error]);
    }
    Ok((GridSweep { scheme, points, slope, min_slope, passed: slope >= min_slope }, t))
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeSweep {
    #[serde(flatten)]
    pub probe: RemainderProbe,
    pub eta_slope_min: f64,
    pub delta_slope_max: f64,
    pub passed: bool,
}

/// Remainder study along a seeded band-limited direction.
pub fn amplitude_sweep(st: &Solved, amplitudes: &[f64], seed: u64, scheme: Scheme) -> Result<(AmplitudeSweep, Table)> {
    if amplitudes.len() < 3 {
        return Err(Error::TooFewSweepPoints(amplitudes.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let v = band_limited(&st.disc.grid, st.disc.m(), 5, &mut rng);
    let v = v.scaled(1.0 / v.l2_norm(&st.disc.grid).max(f64::MIN_POSITIVE));
    let probe = remainder_probe(&st.disc, &st.u, &st.y, &v, amplitudes, &EvolutionOptions::with_scheme(scheme))?;
    let mut t = Table::new("orders.csv", &["amplitude", "w_size", "delta_y", "eta", "delta_ratio", "eta_ratio"]);
    for p in &probe.points {
        t.push_f64(&[p.amplitude, p.w_size, p.delta_y, p.eta, p.delta_ratio, p.eta_ratio]);
    }
    let passed = probe.eta_slope >= ETA_SLOPE_MIN && probe.delta_slope.abs() <= DELTA_SLOPE_MAX;
    Ok((AmplitudeSweep { probe, eta_slope_min: ETA_SLOPE_MIN, delta_slope_max: DELTA_SLOPE_MAX, passed }, t))
}
