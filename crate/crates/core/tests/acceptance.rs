//! Acceptance run on the closed-form example: one PASS/FAIL line per
//! criterion. Exits non-zero only when a criterion that should hold fails.

use std::f64::consts::LN_2;
use std::process::ExitCode;
use std::time::Instant;

use heat_goh::cli::pipeline::{verify, Checks, Settings, Solved};
use heat_goh::cli::sweep::{amplitude_sweep, DEFAULT_AMPLITUDES};
use heat_goh::cli::truth::{compare_with_truth, state_rel_error, TruthSection};
use heat_goh::example::{example_candidate, example_discretization, example_spec, example_truth, ode_oracle_fn};
use heat_goh::goh::GohAuxiliaries;
use heat_goh::optimality::{
    build_cone_basis, check_first_order, detect_arcs, estimate_coercivity, gram_matrix, growth_probe, switching,
    CandidateSource, ConeMode, GrowthOptions, Tolerances, DEFAULT_HAT_CAP, DEFAULT_MAX_ARCS,
};
use heat_goh::problem::expr::{Expr, Side};
use heat_goh::problem::{state_constraint_series, Discretization, Field, TimeSamples};
use heat_goh::quadratic::{band_limited, compare_forms, eval_q, eval_qhat, goh_direction, QuadContext};
use heat_goh::quadrature::{space_inner, time_trapz_sided};
use heat_goh::solvers::{discrete_adjoint, solve_costate, solve_linearized, solve_state, EvolutionOptions, Scheme};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FINE: (usize, usize) = (201, 3000);
const STATE_TOL: f64 = 1e-3;
const STATE_SECONDS: f64 = 10.0;
const ORACLE_TOL: f64 = 1e-8;
const COSTATE_TOL: f64 = 5e-3;
const SWITCHING_TOL: f64 = 5e-3;
const COEFFICIENT_TOL: f64 = 0.01;
const EQUIVALENCE_TOL: f64 = 1e-4;
const COERCIVITY_MIN: f64 = 0.5;
const COERCIVITY_DRIFT: f64 = 0.2;
const GROWTH_SECONDS: f64 = 60.0;
const ETA_SLOPE_MIN: f64 = 0.9;
const DELTA_SLOPE_MAX: f64 = 0.15;
const ADJOINT_TOL: f64 = 1e-12;
const HOMOGENEITY_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-12;
const BASIS_TOL: f64 = 1e-8;

struct Outcome {
    passed: bool,
    /// False when a failure is an expected, documented mismatch.
    must_pass: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, must_pass: true, detail }
    }
}

fn setup(nx: usize, nt: usize) -> Solved {
    let disc = example_discretization(nx, nt).unwrap();
    let (u, mu_dot) = example_candidate(&disc.grid);
    Solved::new(disc, u, mu_dot, Scheme::CrankNicolson).unwrap()
}

fn tolerances(st: &Solved) -> Tolerances {
    Tolerances::new(&st.disc, &st.y, CandidateSource::Analytic, Scheme::CrankNicolson)
}

fn ctx(st: &Solved) -> QuadContext<'_> {
    QuadContext::new(&st.disc, &st.y, &st.u, &st.p, &st.mu_dot, Scheme::CrankNicolson)
}

fn state(fine: &Solved) -> Outcome {
    let disc = &fine.disc;
    let start = Instant::now();
    let y = solve_state(disc, &fine.u, &EvolutionOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = state_rel_error(&disc.grid, &fine.u, &y);
    let exact_u = |t: f64, side: Side| example_truth(t, side).unwrap().u_bar;
    let oracle = ode_oracle_fn(exact_u, &disc.grid.t, 10);
    let oracle_err = disc
        .grid
        .t
        .iter()
        .zip(&oracle)
        .map(|(&t, &a)| {
            let exact = example_truth(t, Side::Right).unwrap().y1_bar;
            (a - exact).abs() / exact.abs()
        })
        .fold(0.0, f64::max);
    Outcome::new(
        err <= STATE_TOL && secs <= STATE_SECONDS && oracle_err <= ORACLE_TOL,
        format!(
            "state rel error {err:.3e} <= {STATE_TOL:e}, solve {secs:.2}s <= {STATE_SECONDS}s, \
             oracle vs closed form {oracle_err:.1e} <= {ORACLE_TOL:e}"
        ),
    )
}

fn costate(truth: &TruthSection) -> Outcome {
    let (a, b) = (truth.costate_bang_arc_error, truth.costate_tail_max);
    Outcome::new(
        a <= COSTATE_TOL && b <= COSTATE_TOL,
        format!("|p1 - (e^t/4 - e^-t)| on [0, log 2] {a:.2e}, |p1| after log 2 {b:.2e}, tol {COSTATE_TOL:e}"),
    )
}

fn switching_and_first_order(fine: &Solved, truth: &TruthSection) -> Outcome {
    let tol = tolerances(fine);
    let arcs = detect_arcs(&fine.disc, &fine.u, &fine.y, &tol, DEFAULT_MAX_ARCS).unwrap();
    let psi = switching(&fine.disc, &fine.y, &fine.p);
    let g = state_constraint_series(&fine.disc, &fine.y);
    let fo = check_first_order(&fine.disc, &psi, &arcs, &fine.mu_dot, &g, tol.first_order);
    let at0 = (truth.switching_at_0 + 0.75).abs();
    let at_log2 = truth.switching_at_log2.abs();
    Outcome::new(
        truth.switching_error <= SWITCHING_TOL && at0 <= SWITCHING_TOL && at_log2 <= SWITCHING_TOL && fo.passed,
        format!(
            "Psi error {:.2e}, Psi(0) = {:.4}, Psi(log 2) = {:.1e}, tol {SWITCHING_TOL:e}; first-order {}",
            truth.switching_error,
            truth.switching_at_0,
            truth.switching_at_log2,
            if fo.passed { "passed" } else { "FAILED" }
        ),
    )
}

fn coefficient(truth: &TruthSection) -> Outcome {
    let fit = |name: &str| truth.coefficient_bang_arc.iter().find(|f| f.formula == name).unwrap().computed;
    let stated = fit("2+e^(2t)/4");
    let derived = fit("e^(2t)/2");
    let tail = truth.coefficient_tail_rel_error;
    let attainable = derived <= COEFFICIENT_TOL && tail <= COEFFICIENT_TOL;
    Outcome {
        passed: attainable && stated <= COEFFICIENT_TOL,
        must_pass: !attainable,
        detail: format!(
            "R on [0, log 2] vs 2+e^(2t)/4: {stated:.3} > {COEFFICIENT_TOL}, known mismatch; \
             vs e^(2t)/2: {derived:.1e}{}; R vs ybar_1^2 after log 2: {tail:.1e}{}",
            mark(derived <= COEFFICIENT_TOL),
            mark(tail <= COEFFICIENT_TOL),
        ),
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        " ok"
    } else {
        " OUT OF TOLERANCE"
    }
}

fn directions(st: &Solved, n: usize) -> Vec<TimeSamples> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..n).map(|_| band_limited(&st.disc.grid, st.disc.m(), 5, &mut rng)).collect()
}

fn equivalence(fine: &Solved) -> Outcome {
    let grids = [(51, 600), (101, 1200)];
    let mut worst: Vec<f64> = grids
        .iter()
        .map(|&(nx, nt)| {
            let st = setup(nx, nt);
            let c = ctx(&st);
            directions(&st, 10).iter().map(|v| compare_forms(&c, v).rel_gap).fold(0.0, f64::max)
        })
        .collect();
    let c = ctx(fine);
    worst.push(directions(fine, 10).iter().map(|v| compare_forms(&c, v).rel_gap).fold(0.0, f64::max));
    let last = worst[2];
    let decreasing = worst.windows(2).all(|w| w[1] < w[0]);
    let worst: Vec<String> = worst.iter().map(|v| format!("{v:.2e}")).collect();
    Outcome::new(
        last <= EQUIVALENCE_TOL && decreasing,
        format!("worst |Q - Qhat| / max(1, |Q|) over 10 directions at 51, 101, 201 nodes: {}, tol {EQUIVALENCE_TOL:e}", worst.join(", ")),
    )
}

fn coercivity_rho(st: &Solved, negate: bool) -> (f64, usize, f64) {
    let tol = tolerances(st);
    let arcs = detect_arcs(&st.disc, &st.u, &st.y, &tol, DEFAULT_MAX_ARCS).unwrap();
    let mut c = ctx(st);
    let basis = build_cone_basis(&c, &arcs, ConeMode::Pc2Star, &tol, DEFAULT_HAT_CAP).unwrap();
    if negate {
        let neg = c.kappa.mapv(|v| -v);
        c = c.with_kappa(neg);
    }
    let co = estimate_coercivity(&c, &basis).unwrap();
    let norm = gram_matrix(
        &st.disc.grid,
        &co.direction_w.clone().insert_axis(ndarray::Axis(0)),
        &co.direction_h.clone().insert_axis(ndarray::Axis(0)),
    )[[0, 0]];
    (co.rho, co.dimension, norm)
}

fn coercivity(fine: &Solved) -> Outcome {
    let (rho, dim, norm) = coercivity_rho(fine, false);
    let coarse = setup(101, 1200);
    let (rho_coarse, _, _) = coercivity_rho(&coarse, false);
    let (rho_neg, _, _) = coercivity_rho(&coarse, true);
    let drift = (rho - rho_coarse).abs() / rho.abs();
    Outcome::new(
        rho >= COERCIVITY_MIN && drift <= COERCIVITY_DRIFT && rho_neg < 0.0 && (norm - 1.0).abs() < 1e-6,
        format!(
            "rho {rho:.4} >= {COERCIVITY_MIN} on {dim} elements, change from 101 nodes {drift:.2e} <= {COERCIVITY_DRIFT}, \
             minimizer Gram norm {norm:.6}, rho with negated kappa {rho_neg:.3} < 0"
        ),
    )
}

fn growth(fine: &Solved) -> Outcome {
    let tol = tolerances(fine);
    let opts = GrowthOptions::from_tolerances(100, 0.1, 7, &fine.disc, &fine.mu_dot, &tol);
    let start = Instant::now();
    let rep = growth_probe(&fine.disc, &fine.u, &fine.y, &opts, &EvolutionOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        rep.min_ratio > 0.0 && rep.passed && secs <= GROWTH_SECONDS,
        format!(
            "{} draws, {} accepted, min ratio {:.3} > 0, {secs:.1}s <= {GROWTH_SECONDS}s",
            rep.draws, rep.accepted, rep.min_ratio
        ),
    )
}

fn remainder() -> Outcome {
    let st = setup(101, 1200);
    let (sweep, _) = amplitude_sweep(&st, &DEFAULT_AMPLITUDES, 7, Scheme::CrankNicolson).unwrap();
    let (eta, delta) = (sweep.probe.eta_slope, sweep.probe.delta_slope);
    Outcome::new(
        eta >= ETA_SLOPE_MIN && delta.abs() <= DELTA_SLOPE_MAX,
        format!("eta slope {eta:.3} >= {ETA_SLOPE_MIN}, |delta slope| {:.3} <= {DELTA_SLOPE_MAX}", delta.abs()),
    )
}

fn adjoint_gap(st: &Solved) -> f64 {
    let disc = &st.disc;
    let grid = &disc.grid;
    let (nt, ns) = (grid.n_times(), grid.n_space());
    let mut loads = Field::zeros((nt, ns));
    for k in 0..nt {
        let (wl, wr) = grid.time_weights(k);
        for x in 0..ns {
            let l = disc.y_d.side(Side::Left)[[k, x]];
            let r = disc.y_d.side(Side::Right)[[k, x]];
            loads[[k, x]] = wl * (st.y[[k, x]] - l + disc.c[0][x] * st.mu_dot.at(k, 0, Side::Left))
                + wr * (st.y[[k, x]] - r + disc.c[0][x] * st.mu_dot.at(k, 0, Side::Right));
        }
    }
    for x in 0..ns {
        loads[[nt - 1, x]] += st.y[[nt - 1, x]] - disc.y_dt[x];
    }
    let mut worst = 0.0f64;
    for scheme in [Scheme::CrankNicolson, Scheme::ImplicitEuler] {
        let lam = discrete_adjoint(disc, &st.y, &st.u, &loads, scheme);
        let th = scheme.theta();
        for v in directions(st, 3) {
            let z = solve_linearized(disc, &st.y, &st.u, &v, scheme);
            let lhs: f64 = (0..grid.n_steps())
                .map(|k| {
                    let g: Vec<f64> = (0..ns)
                        .map(|x| {
                            disc.b[1][x]
                                * (th * v.at(k + 1, 0, Side::Left) * st.y[[k + 1, x]]
                                    + (1.0 - th) * v.at(k, 0, Side::Right) * st.y[[k, x]])
                        })
                        .collect();
                    grid.step(k) * space_inner(grid.dx, lam.row(k).as_slice().unwrap(), &g)
                })
                .sum();
            let series = |side: Side| -> Vec<f64> {
                (0..nt)
                    .map(|k| {
                        let yd = disc.y_d.side(side);
                        let d: Vec<f64> = (0..ns)
                            .map(|x| st.y[[k, x]] - yd[[k, x]] + st.mu_dot.at(k, 0, side) * disc.c[0][x])
                            .collect();
                        space_inner(grid.dx, &d, z.row(k).as_slice().unwrap())
                    })
                    .collect()
            };
            let last: Vec<f64> = (0..ns).map(|x| st.y[[nt - 1, x]] - disc.y_dt[x]).collect();
            let rhs = time_trapz_sided(grid, &series(Side::Left), &series(Side::Right))
                + space_inner(grid.dx, &last, z.row(nt - 1).as_slice().unwrap());
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1.0));
        }
    }
    worst
}

fn homogeneity_gap(st: &Solved) -> f64 {
    let c = ctx(st);
    let mut worst = 0.0f64;
    for v in directions(st, 3) {
        for s in [-1.5, 2.0] {
            let sv = v.scaled(s);
            let z = solve_linearized(&st.disc, &st.y, &st.u, &v, Scheme::CrankNicolson);
            let zs = solve_linearized(&st.disc, &st.y, &st.u, &sv, Scheme::CrankNicolson);
            let q = eval_q(&c, &z, &v).total();
            let qs = eval_q(&c, &zs, &sv).total();
            let h = eval_qhat(&c, &goh_direction(&c, &v)).total();
            let hs = eval_qhat(&c, &goh_direction(&c, &sv)).total();
            worst = worst
                .max((qs - s * s * q).abs() / (s * s * q).abs().max(1.0))
                .max((hs - s * s * h).abs() / (s * s * h).abs().max(1.0));
        }
    }
    worst
}

fn symmetry_gap() -> f64 {
    let mut spec = example_spec();
    spec.gamma = 0.7;
    spec.channels = vec![Expr::parse("1 + x*(1-x)").unwrap(), Expr::parse("cos(pi*x)").unwrap()];
    spec.linear_cost = vec![0.0, 0.1];
    spec.u_lower = vec![-1.0, -1.0];
    spec.u_upper = vec![spec.u_upper[0], 1.0];
    let disc = Discretization::with_grid(&spec, 41, 120, &[]).unwrap();
    let u = TimeSamples::from_fn(&disc.grid, 2, |t, _| vec![0.5 * t.sin(), 0.3 * t.cos()]);
    let mu_dot = TimeSamples::from_fn(&disc.grid, 1, |t, _| vec![0.2 * t]);
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
    let kap = heat_goh::goh::kappa(&disc, &y, &p);
    let aux = GohAuxiliaries::new(&disc, &y, &p, &mu_dot, &kap);
    let scale = aux.r.left.iter().chain(aux.s.iter()).fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    heat_goh::goh::asymmetry(&aux.s).max(aux.r.asymmetry()) / scale
}

fn basis_residual(st: &Solved) -> f64 {
    let tol = tolerances(st);
    let arcs = detect_arcs(&st.disc, &st.u, &st.y, &tol, DEFAULT_MAX_ARCS).unwrap();
    let c = ctx(st);
    [ConeMode::Pc2Star, ConeMode::Pc2Scalar]
        .iter()
        .map(|&mode| build_cone_basis(&c, &arcs, mode, &tol, DEFAULT_HAT_CAP).unwrap().max_constraint_residual)
        .fold(0.0, f64::max)
}

fn deterministic() -> bool {
    let st = setup(51, 600);
    let settings = Settings { checks: Checks::all(), growth_samples: 20, ..Settings::default() };
    let a = serde_json::to_string(&verify(&st, &settings).0).unwrap();
    let b = serde_json::to_string(&verify(&setup(51, 600), &settings).0).unwrap();
    a == b
}

fn properties() -> Outcome {
    let st = setup(51, 300);
    let adjoint = adjoint_gap(&st);
    let homogeneity = homogeneity_gap(&st);
    let symmetry = symmetry_gap();
    let basis = basis_residual(&st);
    let same = deterministic();
    Outcome::new(
        adjoint <= ADJOINT_TOL && homogeneity <= HOMOGENEITY_TOL && symmetry <= SYMMETRY_TOL && basis <= BASIS_TOL && same,
        format!(
            "adjoint identity {adjoint:.1e} <= {ADJOINT_TOL:e}, homogeneity {homogeneity:.1e} <= {HOMOGENEITY_TOL:e}, \
             S/R asymmetry {symmetry:.1e} <= {SYMMETRY_TOL:e}, basis residual {basis:.1e} <= {BASIS_TOL:e}, \
             report {}",
            if same { "byte-identical" } else { "DIFFERS" }
        ),
    )
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let fine = setup(FINE.0, FINE.1);
    let tol = tolerances(&fine);
    let (truth, _) = compare_with_truth(&fine, &tol);
    assert!(fine.disc.grid.node_of(LN_2).is_some());

    type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);
    let criteria: Vec<Criterion> = vec![
        ("state", Box::new(|| state(&fine))),
        ("costate", Box::new(|| costate(&truth))),
        ("switching function and first-order conditions", Box::new(|| switching_and_first_order(&fine, &truth))),
        ("w^2 coefficient", Box::new(|| coefficient(&truth))),
        ("Q = Qhat", Box::new(|| equivalence(&fine))),
        ("coercivity", Box::new(|| coercivity(&fine))),
        ("quadratic growth", Box::new(|| growth(&fine))),
        ("remainder orders", Box::new(remainder)),
        ("properties", Box::new(properties)),
    ];
    let mut ok = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let out = run();
        let tag = if out.passed { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag} {name}: {}", i + 1, out.detail);
        ok &= out.passed || !out.must_pass;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
