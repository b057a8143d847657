//! The verification pipeline: solves, checks and the tables behind them.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::report::{GridMeta, Section, Status, Table};
use crate::error::{Error, Result};
use crate::goh::{kappa, SidedMatrix};
use crate::optimality::{
    build_cone_basis, check_first_order, detect_arcs, estimate_coercivity, growth_probe, switching, ArcStructure,
    CandidateSource, Coercivity, ConeBasis, ConeMode, FirstOrderReport, GrowthOptions, GrowthReport, SegmentKind,
    Tolerances, DEFAULT_MAX_ARCS,
};
use crate::problem::expr::Side;
use crate::problem::{state_constraint_series, Discretization, Field, TimeSamples};
use crate::quadratic::{band_limited, compare_forms, QuadContext};
use crate::solvers::{solve_costate, solve_state, EvolutionOptions, Scheme};

/// Which checks run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Checks {
    pub first_order: bool,
    pub arcs: bool,
    pub quadratic_equivalence: bool,
    pub coercivity: bool,
    pub growth: bool,
}

impl Checks {
    pub const NAMES: [&'static str; 5] = ["first_order", "arcs", "quadratic_equivalence", "coercivity", "growth"];

    pub fn all() -> Self {
        Checks { first_order: true, arcs: true, quadratic_equivalence: true, coercivity: true, growth: true }
    }

    pub fn none() -> Self {
        Checks { first_order: false, arcs: false, quadratic_equivalence: false, coercivity: false, growth: false }
    }

    fn needs_arcs(&self) -> bool {
        self.first_order || self.arcs || self.coercivity
    }
}

impl Default for Checks {
    fn default() -> Self {
        Checks::all()
    }
}

impl FromStr for Checks {
    type Err = String;

    /// `all`, `none`, or a comma-separated list of check names.
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "all" => return Ok(Checks::all()),
            "none" | "" => return Ok(Checks::none()),
            _ => {}
        }
        let mut c = Checks::none();
        for name in s.split(',').map(str::trim) {
            match name {
                "first_order" => c.first_order = true,
                "arcs" => c.arcs = true,
                "quadratic_equivalence" | "equivalence" => c.quadratic_equivalence = true,
                "coercivity" => c.coercivity = true,
                "growth" => c.growth = true,
                other => {
                    return Err(format!("unknown check `{other}` (expected all, none, or any of {})", Checks::NAMES.join(", ")))
                }
            }
        }
        Ok(c)
    }
}

impl fmt::Display for Checks {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = [self.first_order, self.arcs, self.quadratic_equivalence, self.coercivity, self.growth];
        let names: Vec<&str> = Checks::NAMES.iter().zip(on).filter(|(_, b)| *b).map(|(n, _)| *n).collect();
        if names.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&names.join(","))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub checks: Checks,
    pub seed: u64,
    pub cone: ConeMode,
    pub hat_cap: usize,
    pub growth_samples: usize,
    pub growth_radius: f64,
    /// Random directions for the `Q = Qhat` comparison.
    pub equivalence_samples: usize,
    pub scheme: Scheme,
    pub source: CandidateSource,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            checks: Checks::all(),
            seed: 7,
            cone: ConeMode::Pc2Star,
            hat_cap: crate::optimality::DEFAULT_HAT_CAP,
            growth_samples: 100,
            growth_radius: 0.1,
            equivalence_samples: 10,
            scheme: Scheme::CrankNicolson,
            source: CandidateSource::Solver,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArcsDetails {
    pub labels: Vec<String>,
    #[serde(flatten)]
    pub structure: ArcStructure,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceSample {
    pub q: f64,
    pub qhat: f64,
    pub rel_gap: f64,
    pub identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceDetails {
    pub samples: Vec<EquivalenceSample>,
    pub max_identity_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoercivityDetails {
    pub mode: ConeMode,
    pub hat_cap: usize,
    pub kinds: Vec<Vec<SegmentKind>>,
    pub max_constraint_residual: f64,
    #[serde(flatten)]
    pub estimate: Coercivity,
    /// `h` part of the minimizing direction; `w` is in `coercivity_direction.csv`.
    pub direction_h: Vec<f64>,
}

/// Everything a verification run produces.
#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub status: Status,
    pub passed: bool,
    pub grid: GridMeta,
    pub tolerances: Tolerances,
    pub settings: Settings,
    pub first_order: Section<FirstOrderReport>,
    pub arcs: Section<ArcsDetails>,
    pub quadratic_equivalence: Section<EquivalenceDetails>,
    pub coercivity: Section<CoercivityDetails>,
    pub growth: Section<GrowthReport>,
}

impl Verification {
    pub fn sections(&self) -> Vec<(&'static str, Option<bool>, bool)> {
        vec![
            ("first_order", self.first_order.passed, self.first_order.error.is_some()),
            ("arcs", self.arcs.passed, self.arcs.error.is_some()),
            ("quadratic_equivalence", self.quadratic_equivalence.passed, self.quadratic_equivalence.error.is_some()),
            ("coercivity", self.coercivity.passed, self.coercivity.error.is_some()),
            ("growth", self.growth.passed, self.growth.error.is_some()),
        ]
    }
}

/// Candidate solves shared by all checks.
pub struct Solved {
    pub disc: Discretization,
    pub u: TimeSamples,
    pub mu_dot: TimeSamples,
    pub y: Field,
    pub p: Field,
}

impl Solved {
    pub fn new(disc: Discretization, u: TimeSamples, mu_dot: TimeSamples, scheme: Scheme) -> Result<Solved> {
        if u.dim() != disc.m() || mu_dot.dim() != disc.q() {
            return Err(Error::Candidate(format!(
                "candidate has {} controls and {} multipliers, problem needs {} and {}",
                u.dim(),
                mu_dot.dim(),
                disc.m(),
                disc.q()
            )));
        }
        let y = solve_state(&disc, &u, &EvolutionOptions::with_scheme(scheme))?;
        let p = solve_costate(&disc, &y, &u, &mu_dot, scheme);
        Ok(Solved { disc, u, mu_dot, y, p })
    }
}

/// Runs the enabled checks; failures inside a check are recorded in its
/// section rather than returned.
pub fn verify(st: &Solved, settings: &Settings) -> (Verification, Vec<Table>) {
    let disc = &st.disc;
    let checks = settings.checks;
    let tol = Tolerances::new(disc, &st.y, settings.source, settings.scheme);
    let meta = GridMeta::new(&disc.grid, settings.scheme, tol.coarse);
    let mut tables = base_tables(st);

    let arcs = if checks.needs_arcs() { Some(detect_arcs(disc, &st.u, &st.y, &tol, DEFAULT_MAX_ARCS)) } else { None };
    let arcs_section = match (&arcs, checks.arcs) {
        (Some(Ok(a)), true) => {
            let g = state_constraint_series(disc, &st.y);
            let worst = a
                .arcs
                .iter()
                .flat_map(|arc| arc.state_active.iter().flat_map(move |&j| (arc.k_start..=arc.k_end).map(move |k| (k, j))))
                .fold(0.0f64, |acc, (k, j)| acc.max(-g[[k, j]] / tol.state[j]));
            // distance below zero on active nodes, in units of the state tolerance
            let labels = a.arcs.iter().map(|x| x.label()).collect();
            Section::done(worst <= 1.0, worst, 1.0, &meta, ArcsDetails { labels, structure: a.clone() })
        }
        (Some(Err(e)), true) => Section::failed(e.to_string(), &meta),
        _ => Section::default(),
    };
    if let Some(Ok(a)) = &arcs {
        tables.push(arcs_table(a));
    }
    let first_order = if !checks.first_order {
        Section::default()
    } else if let Some(s) = arc_failure(&arcs, &meta) {
        s
    } else {
        let a = arcs.as_ref().and_then(|r| r.as_ref().ok()).expect("arcs computed");
        let psi = switching(disc, &st.y, &st.p);
        let g = state_constraint_series(disc, &st.y);
        let rep = check_first_order(disc, &psi, a, &st.mu_dot, &g, tol.first_order);
        let worst = rep.worst.map_or(0.0, |w| w.excess).max(rep.max_infeasibility);
        Section::done(rep.passed, worst, tol.first_order, &meta, rep)
    };

    let ctx = QuadContext::new(disc, &st.y, &st.u, &st.p, &st.mu_dot, settings.scheme);
    let equivalence = if checks.quadratic_equivalence {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(1);
        let dirs: Vec<TimeSamples> =
            (0..settings.equivalence_samples).map(|_| band_limited(&disc.grid, disc.m(), 5, &mut rng)).collect();
        let samples: Vec<EquivalenceSample> = dirs
            .par_iter()
            .map(|v| {
                let r = compare_forms(&ctx, v);
                EquivalenceSample {
                    q: r.q_value,
                    qhat: r.qhat_value,
                    rel_gap: r.rel_gap,
                    identity_residual: r.identity_residual,
                }
            })
            .collect();
        let mut t = Table::new("equivalence.csv", &["sample", "q", "qhat", "rel_gap", "identity_residual"]);
        for (i, s) in samples.iter().enumerate() {
            t.push_f64(&[i as f64, s.q, s.qhat, s.rel_gap, s.identity_residual]);
        }
        tables.push(t);
        let worst = samples.iter().map(|s| s.rel_gap).fold(0.0, f64::max);
        let max_identity_residual = samples.iter().map(|s| s.identity_residual).fold(0.0, f64::max);
        Section::done(
            worst <= tol.equivalence,
            worst,
            tol.equivalence,
            &meta,
            EquivalenceDetails { samples, max_identity_residual },
        )
    } else {
        Section::default()
    };

    let run_coercivity = || -> Result<(ConeBasis, Coercivity)> {
        let a = arcs.as_ref().and_then(|r| r.as_ref().ok()).expect("arcs computed");
        let basis = build_cone_basis(&ctx, a, settings.cone, &tol, settings.hat_cap)?;
        let c = estimate_coercivity(&ctx, &basis)?;
        Ok((basis, c))
    };
    let run_growth = || -> Result<GrowthReport> {
        let opts = GrowthOptions::from_tolerances(
            settings.growth_samples,
            settings.growth_radius,
            settings.seed,
            disc,
            &st.mu_dot,
            &tol,
        );
        growth_probe(disc, &st.u, &st.y, &opts, &EvolutionOptions::with_scheme(settings.scheme))
    };
    let coercivity_enabled = checks.coercivity && matches!(arcs, Some(Ok(_)));
    let (coercivity, growth) = rayon::join(
        || coercivity_enabled.then(run_coercivity),
        || checks.growth.then(run_growth),
    );

    let coercivity = match coercivity {
        Some(Ok((basis, c))) => {
            let mut t = Table::new("coercivity.csv", &["rank", "eigenvalue"]);
            for (i, v) in c.lowest.iter().enumerate() {
                t.push_f64(&[i as f64, *v]);
            }
            tables.push(t);
            let mut header = vec!["t".to_string()];
            header.extend((1..=disc.m()).map(|i| format!("w{i}")));
            let mut d = Table::with_header("coercivity_direction.csv", header);
            for (k, &tk) in disc.grid.t.iter().enumerate() {
                let mut row = vec![tk];
                row.extend(c.direction_w.row(k).iter());
                d.push_f64(&row);
            }
            tables.push(d);
            let passed = c.rho > tol.coercivity && basis.max_constraint_residual <= tol.constraint_residual;
            let details = CoercivityDetails {
                mode: basis.mode,
                hat_cap: basis.hat_cap,
                kinds: basis.kinds.clone(),
                max_constraint_residual: basis.max_constraint_residual,
                direction_h: c.direction_h.to_vec(),
                estimate: c.clone(),
            };
            Section::done(passed, c.rho, tol.coercivity, &meta, details)
        }
        Some(Err(e)) => Section::failed(e.to_string(), &meta),
        None if checks.coercivity => arc_failure(&arcs, &meta).unwrap_or_default(),
        None => Section::default(),
    };

    let growth = match growth {
        Some(Ok(rep)) => {
            let mut t =
                Table::new("growth.csv", &["draw", "distance", "l1_distance", "cost_increase", "denominator", "ratio"]);
            for s in &rep.samples {
                t.push_f64(&[s.index as f64, s.distance, s.l1_distance, s.cost_increase, s.denominator, s.ratio]);
            }
            tables.push(t);
            Section::done(rep.passed, rep.min_ratio, 0.0, &meta, rep)
        }
        Some(Err(e)) => Section::failed(e.to_string(), &meta),
        None => Section::default(),
    };

    let mut v = Verification {
        status: Status::Pass,
        passed: true,
        grid: meta,
        tolerances: tol,
        settings: settings.clone(),
        first_order,
        arcs: arcs_section,
        quadratic_equivalence: equivalence,
        coercivity,
        growth,
    };
    let outcomes: Vec<(Option<bool>, bool)> = v.sections().iter().map(|(_, p, e)| (*p, *e)).collect();
    v.status = Status::combine(&outcomes);
    v.passed = v.status == Status::Pass;
    (v, tables)
}

fn arc_failure<T>(arcs: &Option<Result<ArcStructure>>, meta: &GridMeta) -> Option<Section<T>> {
    match arcs {
        Some(Err(e)) => Some(Section::failed(format!("arc detection failed: {e}"), meta)),
        _ => None,
    }
}

fn sided_header(prefix: &str, n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=n {
        h.push(format!("{prefix}{i}_left"));
        h.push(format!("{prefix}{i}_right"));
    }
    h
}

// Psi, g, mu_dot and R along the time grid.
fn base_tables(st: &Solved) -> Vec<Table> {
    let disc = &st.disc;
    let grid = &disc.grid;
    let (m, q) = (disc.m(), disc.q());
    let psi = switching(disc, &st.y, &st.p);
    let g = state_constraint_series(disc, &st.y);

    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("psi{i}")));
    let mut psi_t = Table::with_header("psi.csv", header);
    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|j| format!("g{j}")));
    let mut g_t = Table::with_header("g.csv", header);
    let mut mu_t = Table::with_header("mu_dot.csv", sided_header("mu_dot", q));
    let mut u_t = Table::with_header("control.csv", sided_header("u", m));
    for (k, &t) in grid.t.iter().enumerate() {
        let mut row = vec![t];
        row.extend(psi.row(k).iter());
        psi_t.push_f64(&row);
        let mut row = vec![t];
        row.extend(g.row(k).iter());
        g_t.push_f64(&row);
        let sided = |s: &TimeSamples, n: usize| {
            let mut row = vec![t];
            for i in 0..n {
                row.push(s.at(k, i, Side::Left));
                row.push(s.at(k, i, Side::Right));
            }
            row
        };
        mu_t.push_f64(&sided(&st.mu_dot, q));
        u_t.push_f64(&sided(&st.u, m));
    }

    let kap = kappa(disc, &st.y, &st.p);
    let aux = crate::goh::GohAuxiliaries::new(disc, &st.y, &st.p, &st.mu_dot, &kap);
    vec![psi_t, g_t, mu_t, u_t, r_table(grid, &aux.r, m)]
}

fn r_table(grid: &crate::problem::Grid, r: &SidedMatrix, m: usize) -> Table {
    let mut header = vec!["t".to_string()];
    for i in 1..=m {
        for j in 1..=m {
            header.push(format!("r{i}{j}_left"));
            header.push(format!("r{i}{j}_right"));
        }
    }
    let mut t = Table::with_header("r.csv", header);
    for (k, &tk) in grid.t.iter().enumerate() {
        let mut row = vec![tk];
        for i in 0..m {
            for j in 0..m {
                row.push(r.left[[k, i, j]]);
                row.push(r.right[[k, i, j]]);
            }
        }
        t.push_f64(&row);
    }
    t
}

fn arcs_table(a: &ArcStructure) -> Table {
    let mut t = Table::new("arcs.csv", &["arc", "label", "t_start", "t_end", "k_start", "k_end", "controls", "state_active"]);
    for (i, arc) in a.arcs.iter().enumerate() {
        let controls: Vec<String> = arc.controls.iter().map(|c| format!("{c:?}").to_lowercase()).collect();
        let state: Vec<String> = arc.state_active.iter().map(|j| (j + 1).to_string()).collect();
        t.rows.push(vec![
            i.to_string(),
            arc.label(),
            arc.t_start.to_string(),
            arc.t_end.to_string(),
            arc.k_start.to_string(),
            arc.k_end.to_string(),
            controls.join(" "),
            state.join(" "),
        ]);
    }
    t
}
