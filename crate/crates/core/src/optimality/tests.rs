use super::*;
use std::f64::consts::{LN_2, PI};

use crate::example::{self, example_candidate, example_truth, JUNCTIONS};
use crate::problem::expr::Expr;
use crate::problem::GohDirection;
use crate::problem::ProblemSpec;
use crate::quadratic::QuadContext;
use crate::solvers::{solve_costate, solve_state, solve_zeta, EvolutionOptions};

pub(super) struct Setup {
    pub disc: Discretization,
    pub u: TimeSamples,
    pub mu_dot: TimeSamples,
    pub y: Field,
    pub p: Field,
}

impl Setup {
    pub fn ctx(&self) -> QuadContext<'_> {
        QuadContext::new(&self.disc, &self.y, &self.u, &self.p, &self.mu_dot, Scheme::CrankNicolson)
    }

    pub fn tol(&self) -> Tolerances {
        Tolerances::new(&self.disc, &self.y, CandidateSource::Analytic, Scheme::CrankNicolson)
    }

    pub fn arcs(&self) -> ArcStructure {
        detect_arcs(&self.disc, &self.u, &self.y, &self.tol(), DEFAULT_MAX_ARCS).unwrap()
    }
}

pub(super) fn example_setup(spec: &ProblemSpec, nx: usize, nt: usize) -> Setup {
    let disc = Discretization::with_grid(spec, nx, nt, &JUNCTIONS).unwrap();
    let (u, mu_dot) = example_candidate(&disc.grid);
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
    Setup { disc, u, mu_dot, y, p }
}

fn constant_setup(spec: &ProblemSpec, nx: usize, nt: usize, value: f64) -> Setup {
    let disc = Discretization::with_grid(spec, nx, nt, &[]).unwrap();
    let u = TimeSamples::from_fn(&disc.grid, disc.m(), |_, _| vec![value; spec.m()]);
    let mu_dot = TimeSamples::zeros(disc.grid.n_times(), disc.q());
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
    Setup { disc, u, mu_dot, y, p }
}

fn unconstrained() -> ProblemSpec {
    let mut spec = example::example_spec();
    spec.constraint_densities.clear();
    spec.constraint_offsets.clear();
    spec
}

fn max_dt(st: &Setup) -> f64 {
    (0..st.disc.grid.n_steps()).map(|k| st.disc.grid.step(k)).fold(0.0, f64::max)
}

#[test]
fn switching_is_alpha_when_costate_vanishes() {
    let mut spec = example::example_spec();
    spec.channels.push(Expr::parse("x").unwrap());
    spec.linear_cost = vec![0.25, -0.5];
    spec.u_lower = vec![-1.0, -1.0];
    spec.u_upper = vec![1.0, 1.0];
    let disc = Discretization::with_grid(&spec, 21, 30, &[]).unwrap();
    let y = Field::from_elem((disc.grid.n_times(), disc.grid.n_space()), 1.3);
    let p = Field::zeros(y.dim());
    let psi = switching(&disc, &y, &p);
    assert!(psi.column(0).iter().all(|v| *v == 0.25));
    assert!(psi.column(1).iter().all(|v| *v == -0.5));
}

#[test]
fn switching_matches_closed_form_on_bang_arc() {
    let st = example_setup(&example::example_spec(), 201, 3000);
    let psi = switching(&st.disc, &st.y, &st.p);
    let grid = &st.disc.grid;
    let mut worst = 0.0f64;
    for k in 0..=grid.node_of(LN_2).unwrap() {
        let truth = example_truth(grid.t[k], Side::Left).unwrap().psi1();
        worst = worst.max((psi[[k, 0]] - truth).abs());
    }
    assert!(worst < 5e-3, "worst {worst}");
}

#[test]
fn example_arcs_are_bang_constrained_singular() {
    for (nx, nt) in [(201, 3000), (101, 1200), (51, 600), (17, 48)] {
        let st = example_setup(&example::example_spec(), nx, nt);
        let arcs = st.arcs();
        let labels: Vec<String> = arcs.arcs.iter().map(Arc::label).collect();
        assert_eq!(labels, ["B", "C", "S"], "grid {nx}x{nt}");
        assert_eq!(arcs.arcs[0].controls, [BoundActivity::Upper]);
        assert_eq!(arcs.junctions.len(), 4);
        assert_eq!(arcs.junctions[1], LN_2);
        let late = arcs.junctions[2] - 2.0;
        assert!((0.0..=3.0 * max_dt(&st)).contains(&late), "grid {nx}x{nt}: second junction {}", arcs.junctions[2]);
        assert_eq!(arcs.junctions[3], 3.0);
    }
}

#[test]
fn interior_constant_control_gives_one_singular_arc() {
    let st = constant_setup(&example::example_spec(), 21, 60, PI * PI);
    let arcs = st.arcs();
    assert_eq!(arcs.arcs.len(), 1);
    assert_eq!(arcs.arcs[0].label(), "S");
    assert_eq!(arcs.junctions, [0.0, 3.0]);
}

#[test]
fn infeasible_state_counts_as_active() {
    // y_1 = e^t crosses 2 at log 2 and keeps growing
    let st = constant_setup(&example::example_spec(), 101, 300, PI * PI + 1.0);
    let arcs = st.arcs();
    let labels: Vec<String> = arcs.arcs.iter().map(Arc::label).collect();
    assert_eq!(labels, ["B", "BC"]);
    assert!((arcs.junctions[1] - LN_2).abs() < 0.05);
    let err = detect_arcs(&st.disc, &st.u, &st.y, &st.tol(), 1).unwrap_err();
    assert!(matches!(err, Error::TooManyArcs { count: 2, max: 1 }));
}

fn arc(k_start: usize, k_end: usize, act: BoundActivity, state: &[usize]) -> Arc {
    Arc {
        t_start: k_start as f64,
        t_end: k_end as f64,
        k_start,
        k_end,
        controls: vec![act],
        state_active: state.to_vec(),
    }
}

#[test]
fn slivers_join_their_neighbours() {
    use BoundActivity::*;
    let mut arcs = vec![arc(0, 10, Upper, &[]), arc(10, 11, Upper, &[0]), arc(11, 20, Interior, &[0])];
    absorb_slivers(&mut arcs, MIN_ARC_CELLS);
    assert_eq!(arcs, vec![arc(0, 11, Upper, &[]), arc(11, 20, Interior, &[0])]);

    let mut arcs = vec![arc(0, 1, Lower, &[]), arc(1, 9, Interior, &[])];
    absorb_slivers(&mut arcs, MIN_ARC_CELLS);
    assert_eq!(arcs, vec![arc(0, 9, Interior, &[])]);

    // a blip inside one arc disappears entirely
    let mut arcs = vec![arc(0, 5, Interior, &[]), arc(5, 6, Upper, &[]), arc(6, 9, Interior, &[])];
    absorb_slivers(&mut arcs, MIN_ARC_CELLS);
    assert_eq!(arcs, vec![arc(0, 9, Interior, &[])]);

    let mut arcs = vec![arc(0, 1, Lower, &[])];
    absorb_slivers(&mut arcs, MIN_ARC_CELLS);
    assert_eq!(arcs.len(), 1);
}

#[test]
fn first_order_holds_on_the_example() {
    let st = example_setup(&example::example_spec(), 201, 3000);
    let tol = st.tol();
    assert!(!tol.coarse);
    let psi = switching(&st.disc, &st.y, &st.p);
    let g = state_constraint_series(&st.disc, &st.y);
    let rep = check_first_order(&st.disc, &psi, &st.arcs(), &st.mu_dot, &g, tol.first_order);
    assert!(rep.passed, "{rep:?}");
    assert!(rep.complementarity.abs() < 1e-3);
    assert_eq!(rep.min_mu_dot, 0.0);
    assert!(rep.max_infeasibility < 1e-3);
}

#[test]
fn negated_costate_fails_on_the_bang_arc() {
    let st = example_setup(&example::negated_costate_spec(), 101, 1200);
    let tol = st.tol();
    let psi = switching(&st.disc, &st.y, &st.p);
    let g = state_constraint_series(&st.disc, &st.y);
    let rep = check_first_order(&st.disc, &psi, &st.arcs(), &st.mu_dot, &g, tol.first_order);
    assert!(!rep.passed);
    assert!(!rep.sign_conditions_hold);
    let worst = rep.worst.unwrap();
    assert_eq!(worst.arc, 0);
    assert!(worst.psi > 0.1, "{worst:?}");
}

#[test]
fn coarse_mode_relaxes_tolerances() {
    let coarse = example_setup(&example::example_spec(), 17, 48).tol();
    assert!(coarse.coarse);
    assert!(coarse.first_order > DEFAULT_FIRST_ORDER_TOL);
    assert_eq!(coarse.first_order, coarse.discretization);
    let fine = example_setup(&example::example_spec(), 201, 3000).tol();
    assert!(!fine.coarse);
    assert_eq!(fine.first_order, DEFAULT_FIRST_ORDER_TOL);
    assert_eq!(fine.equivalence, DEFAULT_EQUIVALENCE_TOL);
}

#[test]
fn example_cone_spans_the_singular_arc() {
    let st = example_setup(&example::example_spec(), 21, 120);
    let arcs = st.arcs();
    let ctx = st.ctx();
    let basis = build_cone_basis(&ctx, &arcs, ConeMode::Pc2Star, &st.tol(), usize::MAX).unwrap();
    let s = &arcs.arcs[2];
    // nodes after the junction, including T, plus h
    assert_eq!(basis.len(), s.k_end - s.k_start + 1);
    assert_eq!(basis.kinds, vec![vec![SegmentKind::Zero], vec![SegmentKind::Determined], vec![SegmentKind::Free]]);
    // w vanishes on the bang arc
    assert!(basis.w.slice(ndarray::s![.., ..=arcs.arcs[0].k_end, ..]).iter().all(|v| *v == 0.0));

    let scalar = build_cone_basis(&ctx, &arcs, ConeMode::Pc2Scalar, &st.tol(), usize::MAX).unwrap();
    assert_eq!(scalar.len(), basis.len());
    assert_eq!(scalar.w, basis.w);
}

#[test]
fn constrained_directions_satisfy_the_state_arc_equation() {
    let st = example_setup(&example::example_spec(), 21, 120);
    let arcs = st.arcs();
    let tol = st.tol();
    let basis = build_cone_basis(&st.ctx(), &arcs, ConeMode::Pc2Star, &tol, 16).unwrap();
    assert!(basis.max_constraint_residual <= tol.constraint_residual);
    let mmat = crate::goh::compute_m(&st.disc, &st.y);
    let c_arc = &arcs.arcs[1];
    let dx = st.disc.grid.dx;
    for e in [0, basis.len() / 2, basis.len() - 1] {
        let w = basis.w.index_axis(ndarray::Axis(0), e).to_owned();
        let zeta = solve_zeta(&st.disc, &st.y, &st.u, &w, Scheme::CrankNicolson);
        let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs())) * mmat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for k in c_arc.k_start + 1..c_arc.k_end {
            let z = zeta.row(k);
            let r = crate::quadrature::space_inner(dx, &st.disc.c[0], z.as_slice().unwrap()) + mmat[[k, 0, 0]] * w[[k, 0]];
            assert!(r.abs() <= 1e-8 * scale, "element {e} node {k}: {r}");
        }
    }
}

#[test]
fn unconstrained_singular_cone_is_everything() {
    let st = constant_setup(&unconstrained(), 11, 20, PI * PI);
    let basis = build_cone_basis(&st.ctx(), &st.arcs(), ConeMode::Pc2Star, &st.tol(), usize::MAX).unwrap();
    assert_eq!(basis.len(), st.disc.m() * (20 + 1) + st.disc.m());
    let capped = build_cone_basis(&st.ctx(), &st.arcs(), ConeMode::Pc2Star, &st.tol(), 5).unwrap();
    assert_eq!(capped.len(), 5 + 1);
}

#[test]
fn scalar_cone_needs_one_control() {
    let mut spec = unconstrained();
    spec.channels.push(Expr::parse("x").unwrap());
    spec.linear_cost = vec![0.0, 0.0];
    spec.u_lower = vec![-20.0, -20.0];
    spec.u_upper = vec![20.0, 20.0];
    let st = constant_setup(&spec, 11, 20, 1.0);
    let err = build_cone_basis(&st.ctx(), &st.arcs(), ConeMode::Pc2Scalar, &st.tol(), 8).unwrap_err();
    assert!(matches!(err, Error::ScalarOnly(_)));
}

#[test]
fn coercivity_is_positive_and_grid_stable() {
    let mut rhos = Vec::new();
    for (nx, nt) in [(51, 600), (101, 1200)] {
        let st = example_setup(&example::example_spec(), nx, nt);
        let ctx = st.ctx();
        let basis = build_cone_basis(&ctx, &st.arcs(), ConeMode::Pc2Star, &st.tol(), DEFAULT_HAT_CAP).unwrap();
        let c = estimate_coercivity(&ctx, &basis).unwrap();
        assert!(c.rho >= 0.5, "grid {nx}x{nt}: rho {}", c.rho);
        assert!(c.lowest.windows(2).all(|p| p[0] <= p[1]));
        rhos.push(c.rho);
    }
    assert!((rhos[0] - rhos[1]).abs() <= 0.2 * rhos[1], "{rhos:?}");
}

#[test]
fn coercivity_of_one_element_is_a_rayleigh_quotient() {
    let st = example_setup(&example::example_spec(), 21, 120);
    let ctx = st.ctx();
    let basis = build_cone_basis(&ctx, &st.arcs(), ConeMode::Pc2Star, &st.tol(), usize::MAX).unwrap();
    let e = basis.len() / 2;
    let one = basis.restrict(&[e]);
    let c = estimate_coercivity(&ctx, &one).unwrap();
    let w = one.w.index_axis(ndarray::Axis(0), 0).to_owned();
    let h = one.h.row(0).to_owned();
    let zeta = solve_zeta(&st.disc, &st.y, &st.u, &w, Scheme::CrankNicolson);
    let q = crate::quadratic::eval_qhat(&ctx, &GohDirection { zeta, w, h }).total();
    let expect = q / one.gram[[0, 0]];
    assert!((c.rho - expect).abs() <= 1e-8 * expect.abs().max(1.0), "{} vs {expect}", c.rho);
}

#[test]
fn coercivity_detects_negative_curvature_and_shrinks_with_the_basis() {
    let st = example_setup(&example::example_spec(), 21, 120);
    let ctx = st.ctx();
    let basis = build_cone_basis(&ctx, &st.arcs(), ConeMode::Pc2Star, &st.tol(), usize::MAX).unwrap();
    let full = estimate_coercivity(&ctx, &basis).unwrap();
    let half: Vec<usize> = (0..basis.len()).step_by(2).collect();
    let part = estimate_coercivity(&ctx, &basis.restrict(&half)).unwrap();
    assert!(part.rho >= full.rho - 1e-10);

    let neg = st.ctx().with_kappa(ctx.kappa.mapv(|v| -v));
    let c = estimate_coercivity(&neg, &basis).unwrap();
    assert!(c.rho < 0.0, "rho {}", c.rho);
}

#[test]
fn empty_basis_is_an_error() {
    let st = example_setup(&example::example_spec(), 21, 120);
    let basis = build_cone_basis(&st.ctx(), &st.arcs(), ConeMode::Pc2Star, &st.tol(), 8).unwrap();
    assert!(matches!(estimate_coercivity(&st.ctx(), &basis.restrict(&[])), Err(Error::EmptyBasis)));
}

#[test]
fn growth_is_positive_near_the_example() {
    let st = example_setup(&example::example_spec(), 101, 1200);
    let tol = st.tol();
    let opts = GrowthOptions::from_tolerances(100, 0.1, 7, &st.disc, &st.mu_dot, &tol);
    let rep = growth_probe(&st.disc, &st.u, &st.y, &opts, &EvolutionOptions::default()).unwrap();
    assert!(rep.passed);
    assert!(rep.accepted >= 20, "{} accepted", rep.accepted);
    assert!(rep.min_ratio > 0.0, "min {}", rep.min_ratio);
    assert!(rep.negative.is_empty());
    assert_eq!(rep.accepted + rep.infeasible + rep.degenerate, rep.draws);
}

#[test]
fn growth_probe_is_reproducible() {
    let st = example_setup(&example::example_spec(), 21, 120);
    let tol = st.tol();
    let opts = GrowthOptions::from_tolerances(20, 0.1, 42, &st.disc, &st.mu_dot, &tol);
    let a = growth_probe(&st.disc, &st.u, &st.y, &opts, &EvolutionOptions::default()).unwrap();
    let b = growth_probe(&st.disc, &st.u, &st.y, &opts, &EvolutionOptions::default()).unwrap();
    let ratios = |r: &GrowthReport| r.samples.iter().map(|s| (s.index, s.ratio.to_bits())).collect::<Vec<_>>();
    assert_eq!(ratios(&a), ratios(&b));
    let other = GrowthOptions { seed: 43, ..opts };
    let c = growth_probe(&st.disc, &st.u, &st.y, &other, &EvolutionOptions::default()).unwrap();
    assert_ne!(ratios(&a), ratios(&c));
}

#[test]
fn large_strict_perturbations_keep_positive_ratios() {
    // clamping to the wide lower bound makes most large draws lower the
    // state, so only about a third are discarded here
    let st = example_setup(&example::example_spec(), 51, 600);
    let mut opts = GrowthOptions::new(40, 10.0, 3, st.tol().state);
    opts.filter = FeasibilityFilter::Strict;
    let rep = growth_probe(&st.disc, &st.u, &st.y, &opts, &EvolutionOptions::default()).unwrap();
    assert!(rep.discard_rate >= 0.2, "discard rate {}", rep.discard_rate);
    assert!(rep.samples.iter().all(|s| s.cost_increase > 0.0));
}

#[test]
fn growth_radius_must_be_positive() {
    let st = example_setup(&example::example_spec(), 11, 30);
    for r in [0.0, -1.0, f64::NAN] {
        let opts = GrowthOptions::new(5, r, 1, st.tol().state);
        assert!(matches!(growth_probe(&st.disc, &st.u, &st.y, &opts, &EvolutionOptions::default()), Err(Error::InvalidProblem(_))));
    }
}
