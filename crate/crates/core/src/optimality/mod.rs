//! First-order checks, arc structure, the critical cone, coercivity and the
//! growth probe.

mod cone;
mod growth;

pub use cone::{build_cone_basis, estimate_coercivity, gram_matrix, Coercivity, ConeBasis, ConeMode, SegmentKind, DEFAULT_HAT_CAP};
pub use growth::{growth_probe, FeasibilityFilter, GrowthOptions, GrowthReport, GrowthSample};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::problem::expr::Side;
use crate::problem::{state_constraint_series, Discretization, Field, TimeSamples};
use crate::quadrature::{space_inner, space_inner3, time_trapz_sided};
use crate::solvers::Scheme;

/// `Psi_i(t) = alpha_i + int b_i ybar p`, shape `(time nodes, m)`.
pub fn switching(disc: &Discretization, ybar: &Field, p: &Field) -> Array2<f64> {
    let (nt, m) = (disc.grid.n_times(), disc.m());
    Array2::from_shape_fn((nt, m), |(k, i)| {
        let (y, pr) = (ybar.row(k), p.row(k));
        disc.spec.linear_cost[i]
            + space_inner3(disc.grid.dx, &disc.b[i + 1], y.as_slice().unwrap(), pr.as_slice().unwrap())
    })
}

/// Where a candidate comes from; sets how tightly bound activity is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    /// Closed-form or tabulated values that hit the bounds exactly.
    Analytic,
    /// Output of an iterative optimizer.
    Solver,
}

/// Every tolerance used by the checks, in one place.
#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    /// Distance to a bound below which the bound counts as active.
    pub bounds: Vec<f64>,
    /// `g_j >= -state[j]` counts as state-active.
    pub state: Vec<f64>,
    /// Sign conditions on `Psi` and complementarity.
    pub first_order: f64,
    /// Bound on `|Q - Qhat| / max(1, |Q|)`.
    pub equivalence: f64,
    /// `rho` must exceed this.
    pub coercivity: f64,
    /// Relative residual of the state-arc constraints in the cone basis.
    pub constraint_residual: f64,
    /// Lower bound on the smallest singular value of the state-arc block.
    pub controllability: f64,
    /// `10 (dt + dx^2)`, the tolerance used in coarse mode.
    pub discretization: f64,
    /// Set below the resolution the default tolerances are calibrated for
    /// (`nx < 150` or `nt < 1000`, or a first-order scheme); every check
    /// tolerance is then relaxed to `discretization`.
    pub coarse: bool,
}

pub const DEFAULT_FIRST_ORDER_TOL: f64 = 5e-3;
pub const DEFAULT_EQUIVALENCE_TOL: f64 = 1e-4;
pub const CALIBRATED_NX: usize = 150;
pub const CALIBRATED_NT: usize = 1000;

impl Tolerances {
    pub fn new(disc: &Discretization, ybar: &Field, source: CandidateSource, scheme: Scheme) -> Self {
        let grid = &disc.grid;
        let spec = &disc.spec;
        let rel = match source {
            CandidateSource::Analytic => 1e-9,
            CandidateSource::Solver => 1e-6,
        };
        let bounds = spec.u_upper.iter().zip(&spec.u_lower).map(|(hi, lo)| rel * (hi - lo)).collect();
        let dx2 = grid.dx * grid.dx;
        let y_norm = ybar
            .rows()
            .into_iter()
            .map(|r| space_inner(grid.dx, r.as_slice().unwrap(), r.as_slice().unwrap()))
            .fold(0.0, f64::max)
            .sqrt();
        let state = disc
            .c
            .iter()
            .map(|c| {
                let cn = space_inner(grid.dx, c, c).sqrt();
                (10.0 * dx2 * cn * y_norm).max(f64::EPSILON)
            })
            .collect();
        let dt = (0..grid.n_steps()).map(|k| grid.step(k)).fold(0.0, f64::max);
        let discretization = 10.0 * (dt + dx2);
        let coarse = grid.nx < CALIBRATED_NX || grid.nt < CALIBRATED_NT || scheme == Scheme::ImplicitEuler;
        let relax = |t: f64| if coarse { t.max(discretization) } else { t };
        let m_scale = crate::goh::compute_m(disc, ybar).iter().fold(1.0f64, |a, v| a.max(v.abs()));
        Tolerances {
            bounds,
            state,
            first_order: relax(DEFAULT_FIRST_ORDER_TOL),
            equivalence: relax(DEFAULT_EQUIVALENCE_TOL),
            coercivity: 0.0,
            constraint_residual: 1e-8,
            controllability: 1e-8 * m_scale,
            discretization,
            coarse,
        }
    }
}

/// Activity of one control on one arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundActivity {
    Lower,
    Upper,
    Interior,
}

/// A maximal interval with constant activity pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Arc {
    pub t_start: f64,
    pub t_end: f64,
    /// First and last time node of the arc (junction nodes are shared).
    pub k_start: usize,
    pub k_end: usize,
    /// Per control.
    pub controls: Vec<BoundActivity>,
    /// Active state constraints.
    pub state_active: Vec<usize>,
}

impl Arc {
    pub fn is_bang(&self, i: usize) -> bool {
        self.controls[i] != BoundActivity::Interior
    }

    pub fn free_controls(&self) -> Vec<usize> {
        (0..self.controls.len()).filter(|&i| !self.is_bang(i)).collect()
    }

    /// Short label: `B` for all controls at bounds, `C` for an active state
    /// constraint, `S` otherwise (mixed patterns list both).
    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.controls.iter().any(|c| *c != BoundActivity::Interior) {
            s.push('B');
        }
        if !self.state_active.is_empty() {
            s.push('C');
        }
        if self.controls.contains(&BoundActivity::Interior) && self.state_active.is_empty() {
            s.push('S');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArcStructure {
    pub arcs: Vec<Arc>,
    /// `0`, the interior junctions, and `T`.
    pub junctions: Vec<f64>,
}

pub const DEFAULT_MAX_ARCS: usize = 64;

/// Arcs spanning fewer cells are transitions and join a neighbour.
pub const MIN_ARC_CELLS: usize = 2;

// A sliver joins the arc before it (the first arc joins the one after), and
// equal neighbours that meet as a result are fused.
fn absorb_slivers(arcs: &mut Vec<Arc>, min_cells: usize) {
    while let Some(a) = (0..arcs.len()).find(|&a| arcs.len() > 1 && arcs[a].k_end - arcs[a].k_start < min_cells) {
        let sliver = arcs.remove(a);
        if a == 0 {
            arcs[0].k_start = sliver.k_start;
            arcs[0].t_start = sliver.t_start;
        } else {
            arcs[a - 1].k_end = sliver.k_end;
            arcs[a - 1].t_end = sliver.t_end;
            if a < arcs.len() && arcs[a].controls == arcs[a - 1].controls && arcs[a].state_active == arcs[a - 1].state_active {
                let next = arcs.remove(a);
                arcs[a - 1].k_end = next.k_end;
                arcs[a - 1].t_end = next.t_end;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CellClass {
    controls: Vec<BoundActivity>,
    state: Vec<usize>,
}

/// Splits `[0, T]` into arcs of constant activity.
///
/// Each time cell is classified from the right limit at its start and the
/// left limit at its end, so control jumps on nodes do not create spurious
/// one-node arcs. A bound is active on a cell when both values are within
/// `tol.bounds` of it. A state constraint is active when `g_j >= -tol.state`
/// at both ends; values above zero are infeasibility, which
/// [`check_first_order`] reports, not inactivity.
pub fn detect_arcs(
    disc: &Discretization,
    u: &TimeSamples,
    y: &Field,
    tol: &Tolerances,
    max_arcs: usize,
) -> Result<ArcStructure> {
    let grid = &disc.grid;
    let spec = &disc.spec;
    let g = state_constraint_series(disc, y);
    let classes: Vec<CellClass> = (0..grid.n_steps())
        .map(|k| {
            let controls = (0..disc.m())
                .map(|i| {
                    let (a, b) = (u.at(k, i, Side::Right), u.at(k + 1, i, Side::Left));
                    if a.max(b) <= spec.u_lower[i] + tol.bounds[i] {
                        BoundActivity::Lower
                    } else if a.min(b) >= spec.u_upper[i] - tol.bounds[i] {
                        BoundActivity::Upper
                    } else {
                        BoundActivity::Interior
                    }
                })
                .collect();
            let state = (0..disc.q()).filter(|&j| g[[k, j]].min(g[[k + 1, j]]) >= -tol.state[j]).collect();
            CellClass { controls, state }
        })
        .collect();
    let mut arcs: Vec<Arc> = Vec::new();
    let mut start = 0;
    for k in 1..=classes.len() {
        if k == classes.len() || classes[k] != classes[start] {
            arcs.push(Arc {
                t_start: grid.t[start],
                t_end: grid.t[k],
                k_start: start,
                k_end: k,
                controls: classes[start].controls.clone(),
                state_active: classes[start].state.clone(),
            });
            start = k;
        }
    }
    absorb_slivers(&mut arcs, MIN_ARC_CELLS);
    if arcs.len() > max_arcs {
        return Err(Error::TooManyArcs { count: arcs.len(), max: max_arcs });
    }
    let mut junctions = vec![arcs[0].t_start];
    junctions.extend(arcs.iter().map(|a| a.t_end));
    Ok(ArcStructure { arcs, junctions })
}

/// Worst offending sample of a sign condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub arc: usize,
    pub control: usize,
    pub t: f64,
    pub psi: f64,
    /// Amount by which the condition is violated (<= 0 when satisfied).
    pub excess: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FirstOrderReport {
    pub passed: bool,
    pub tol: f64,
    /// Largest excess over all arcs and controls.
    pub worst: Option<Violation>,
    pub sign_conditions_hold: bool,
    /// `sum_j int g_j mu_dot_j`.
    pub complementarity: f64,
    pub complementarity_holds: bool,
    /// `max g_j`, positive when the state is infeasible.
    pub max_infeasibility: f64,
    pub feasible: bool,
    pub min_mu_dot: f64,
    /// Smallest `max_i |Psi_i|` over interior nodes of bang arcs; positive
    /// margins support strict complementarity at this multiplier.
    pub strict_margin: Option<f64>,
}

/// Sign conditions on `Psi` arc by arc, complementarity of `mu_dot` with `g`,
/// and feasibility of the state.
pub fn check_first_order(
    disc: &Discretization,
    psi: &Array2<f64>,
    arcs: &ArcStructure,
    mu_dot: &TimeSamples,
    g: &Array2<f64>,
    tol: f64,
) -> FirstOrderReport {
    let grid = &disc.grid;
    let mut worst: Option<Violation> = None;
    let mut margin: Option<f64> = None;
    for (a, arc) in arcs.arcs.iter().enumerate() {
        for k in arc.k_start..=arc.k_end {
            let mut bang_max = 0.0f64;
            for (i, act) in arc.controls.iter().enumerate() {
                let v = psi[[k, i]];
                let excess = match act {
                    BoundActivity::Lower => -v,
                    BoundActivity::Upper => v,
                    BoundActivity::Interior => v.abs(),
                };
                if *act != BoundActivity::Interior {
                    bang_max = bang_max.max(v.abs());
                }
                if worst.is_none_or(|w| excess > w.excess) {
                    worst = Some(Violation { arc: a, control: i, t: grid.t[k], psi: v, excess });
                }
            }
            if k > arc.k_start && k < arc.k_end && arc.controls.iter().any(|c| *c != BoundActivity::Interior) {
                margin = Some(margin.map_or(bang_max, |m| m.min(bang_max)));
            }
        }
    }
    let sign_ok = worst.is_none_or(|w| w.excess <= tol);
    let q = disc.q();
    let comp: f64 = (0..q)
        .map(|j| {
            let l: Vec<f64> = (0..grid.n_times()).map(|k| g[[k, j]] * mu_dot.at(k, j, Side::Left)).collect();
            let r: Vec<f64> = (0..grid.n_times()).map(|k| g[[k, j]] * mu_dot.at(k, j, Side::Right)).collect();
            time_trapz_sided(grid, &l, &r)
        })
        .sum();
    let max_infeasibility = g.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let min_mu_dot = mu_dot.left().iter().chain(mu_dot.right().iter()).fold(f64::INFINITY, |a, &v| a.min(v));
    let comp_ok = comp >= -tol && (q == 0 || min_mu_dot >= 0.0);
    let feasible = q == 0 || max_infeasibility <= tol;
    FirstOrderReport {
        passed: sign_ok && comp_ok && feasible,
        tol,
        worst,
        sign_conditions_hold: sign_ok,
        complementarity: comp,
        complementarity_holds: comp_ok,
        max_infeasibility: if q == 0 { 0.0 } else { max_infeasibility },
        feasible,
        min_mu_dot: if q == 0 { 0.0 } else { min_mu_dot },
        strict_margin: margin,
    }
}

#[cfg(test)]
mod tests;
