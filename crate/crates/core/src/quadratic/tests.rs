use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::example::{self, example_candidate, JUNCTIONS};
use crate::goh::{compute_r, RReading};
use crate::problem::expr::Expr;
use crate::problem::ProblemSpec;
use crate::solvers::solve_costate;

struct Setup {
    disc: Discretization,
    u: TimeSamples,
    mu_dot: TimeSamples,
    y: Field,
    p: Field,
}

impl Setup {
    fn ctx(&self) -> QuadContext<'_> {
        QuadContext::new(&self.disc, &self.y, &self.u, &self.p, &self.mu_dot, Scheme::CrankNicolson)
    }
}

fn setup(spec: &ProblemSpec, nx: usize, nt: usize) -> Setup {
    let disc = Discretization::with_grid(spec, nx, nt, &JUNCTIONS).unwrap();
    let (u0, mu_dot) = example_candidate(&disc.grid);
    let m = disc.m();
    let u = TimeSamples::from_fn(&disc.grid, m, |t, side| {
        let k = disc.grid.node_of(t).unwrap();
        (0..m).map(|i| if i == 0 { u0.at(k, 0, side) } else { 0.3 * (t + i as f64).sin() }).collect()
    });
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
    Setup { disc, u, mu_dot, y, p }
}

fn stress_spec() -> ProblemSpec {
    let mut spec = example::example_spec();
    spec.gamma = 0.7;
    spec.channels = vec![Expr::parse("1 + x*(1-x)").unwrap(), Expr::parse("cos(pi*x)").unwrap()];
    spec.linear_cost = vec![0.0, 0.1];
    spec.u_lower = vec![-1.0, -1.0];
    spec.u_upper = vec![spec.u_upper[0], 1.0];
    spec.source = Expr::parse("x*(1-x)*cos(t)").unwrap();
    spec
}

const GRIDS: [(usize, usize); 3] = [(25, 150), (51, 300), (101, 600)];

fn gaps(spec: &ProblemSpec, seed: u64) -> Vec<QuadReport> {
    GRIDS
        .iter()
        .map(|&(nx, nt)| {
            let st = setup(spec, nx, nt);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = band_limited(&st.disc.grid, st.disc.m(), 5, &mut rng);
            compare_forms(&st.ctx(), &v)
        })
        .collect()
}

#[test]
fn forms_agree_on_example() {
    for seed in 0..4 {
        let r = gaps(&example::example_spec(), seed);
        let g: Vec<f64> = r.iter().map(|r| r.rel_gap).collect();
        assert!(g[0] > g[1] && g[1] > g[2], "seed {seed}: {g:?}");
        assert!(g[2] < 1e-4, "seed {seed}: {g:?}");
        assert!(r[2].q_value.abs() > 1e-3);
    }
}

#[test]
fn forms_agree_with_nonconstant_channels_and_cubic_term() {
    for seed in 0..3 {
        let r = gaps(&stress_spec(), seed);
        let g: Vec<f64> = r.iter().map(|r| r.rel_gap).collect();
        assert!(g[0] > g[1] && g[1] > g[2], "seed {seed}: {g:?}");
        assert!(g[2] < 1e-4, "seed {seed}: {g:?}");
        assert!(r[2].qhat_terms.p_cross.abs() > 1e-2, "cross term should be exercised");
    }
}

#[test]
fn plus_cross_sign_breaks_equality() {
    let st = setup(&stress_spec(), 51, 300);
    let ctx = st.ctx();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = band_limited(&st.disc.grid, 2, 5, &mut rng);
    let rep = compare_forms(&ctx, &v);
    let dir = goh_direction(&ctx, &v);
    let alt = compute_r(&st.disc, &st.y, &ctx.kappa, &ctx.aux.s_dot, &ctx.aux.p_mat, RReading::PlusCrossSign);
    let diff = |side: Side| -> Vec<f64> {
        (0..st.disc.grid.n_times())
            .map(|k| {
                let w = dir.w.row(k);
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += w[i] * (alt.side(side)[[k, i, j]] - ctx.aux.r.side(side)[[k, i, j]]) * w[j];
                    }
                }
                s
            })
            .collect()
    };
    let shift = time_trapz_sided(&st.disc.grid, &diff(Side::Left), &diff(Side::Right));
    let gap_alt = (rep.q_value - rep.qhat_value - shift).abs() / rep.q_value.abs().max(1.0);
    assert!(gap_alt > 100.0 * rep.rel_gap, "{gap_alt:e} vs {:e}", rep.rel_gap);
}

#[test]
fn zero_direction() {
    let st = setup(&example::example_spec(), 21, 60);
    let v = TimeSamples::zeros(st.disc.grid.n_times(), 1);
    let rep = compare_forms(&st.ctx(), &v);
    assert_eq!(rep.q_value, 0.0);
    assert_eq!(rep.qhat_value, 0.0);
}

#[test]
fn hessian_matches_pointwise_evaluation() {
    let st = setup(&stress_spec(), 21, 120);
    let ctx = st.ctx();
    let grid = &st.disc.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nb = 6;
    let ws: Vec<Array2<f64>> = (0..nb).map(|_| goh_w(&st.disc, &band_limited(grid, 2, 3, &mut rng)).0).collect();
    let w = stack_w(&ws);
    let h = Array2::from_shape_fn((nb, 2), |(e, i)| ((e * 2 + i) as f64).sin());
    let hess = qhat_hessian(&ctx, &w, &h);
    assert!((&hess - &hess.t()).iter().all(|v| v.abs() < 1e-10 * hess.iter().fold(1.0f64, |a, b| a.max(b.abs()))));
    let x = Array1::from_shape_fn(nb, |e| 1.0 / (1.0 + e as f64) - 0.3);
    let wc = w.view().into_shape_with_order((nb, grid.n_times() * 2)).unwrap();
    let wx = x.dot(&wc).into_shape_with_order((grid.n_times(), 2)).unwrap();
    let hx = x.dot(&h);
    let zeta = solve_zeta(&st.disc, &st.y, &st.u, &wx, Scheme::CrankNicolson);
    let direct = eval_qhat(&ctx, &GohDirection { zeta, w: wx, h: hx }).total();
    let via = x.dot(&hess.dot(&x));
    assert!((direct - via).abs() <= 1e-9 * direct.abs().max(1.0), "{direct} vs {via}");
}

#[test]
fn negated_kappa_makes_form_indefinite() {
    let st = setup(&example::example_spec(), 51, 300);
    let grid = &st.disc.grid;
    let ctx = st.ctx();
    let neg = ctx.kappa.mapv(|v| -v);
    let ctx = ctx.with_kappa(neg);
    // w a bump on the middle arc, h = 0
    let v = TimeSamples::from_fn(grid, 1, |t, _| vec![if (1.0..1.5).contains(&t) { 1.0 } else if (1.5..2.0).contains(&t) { -1.0 } else { 0.0 }]);
    let dir = goh_direction(&ctx, &v);
    assert!(dir.h[0].abs() < 1e-12);
    assert!(eval_qhat(&ctx, &dir).total() < 0.0);
}

#[test]
fn remainder_is_quadratic() {
    let st = setup(&example::example_spec(), 51, 300);
    let grid = &st.disc.grid;
    let v = windowed(grid, &TimeSamples::from_fn(grid, 1, |t, _| vec![(3.0 * t).sin()]), 2.0, 3.0);
    let probe =
        remainder_probe(&st.disc, &st.u, &st.y, &v, &[0.05, 0.1, 0.2], &EvolutionOptions::default()).unwrap();
    assert!((probe.eta_slope - 1.0).abs() < 0.1, "{probe:?}");
    assert!(probe.delta_slope.abs() < 0.1, "{probe:?}");
    assert!(matches!(
        remainder_probe(&st.disc, &st.u, &st.y, &v, &[0.1, 0.2], &EvolutionOptions::default()),
        Err(Error::TooFewSweepPoints(2))
    ));
}

#[test]
fn remainder_vanishes_for_inert_channel() {
    let mut spec = example::example_spec();
    spec.gamma = 0.0;
    spec.channels = vec![Expr::constant(0.0)];
    let st = setup(&spec, 21, 60);
    let v = TimeSamples::from_fn(&st.disc.grid, 1, |t, _| vec![t.cos()]);
    let probe = remainder_probe(&st.disc, &st.u, &st.y, &v, &[0.1, 0.2, 0.4], &EvolutionOptions::default()).unwrap();
    assert!(probe.points.iter().all(|p| p.eta == 0.0 && p.eta_ratio == 0.0));
}

#[test]
fn band_limited_is_reproducible() {
    let st = setup(&example::example_spec(), 9, 30);
    let a = band_limited(&st.disc.grid, 2, 5, &mut ChaCha8Rng::seed_from_u64(11));
    let b = band_limited(&st.disc.grid, 2, 5, &mut ChaCha8Rng::seed_from_u64(11));
    assert_eq!(a.left(), b.left());
    assert!(a.jump_nodes().is_empty());
}

// v = 1 on (2, 3): z_1 = (4 - t)(t - 2), so Q = int_2^3 z_1^2 + z_1(3)^2 = 8/15 + 1
#[test]
fn third_arc_step_direction_matches_scalar_oracle() {
    // the residual error is the O(dx^2) drift of the discrete first eigenvalue
    let st = setup(&example::example_spec(), 201, 600);
    let grid = &st.disc.grid;
    let v = TimeSamples::from_fn(grid, 1, |t, side| {
        let on = match side {
            Side::Left => t > 2.0,
            Side::Right => t >= 2.0,
        };
        vec![if on { 1.0 } else { 0.0 }]
    });
    let rep = compare_forms(&st.ctx(), &v);
    let exact = 8.0 / 15.0 + 1.0;
    assert!((rep.q_value - exact).abs() < 3e-3 * exact, "{}", rep.q_value);
    assert!((rep.qhat_value - exact).abs() < 3e-3 * exact, "{}", rep.qhat_value);
    assert!((rep.qhat_terms.terminal_square - 1.0).abs() < 3e-3);
    assert!(rep.qhat_terms.terminal_s.abs() < 1e-2);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn forms_are_quadratic(seed in 0u64..1000, alpha in -3.0f64..3.0) {
            let st = setup(&stress_spec(), 13, 40);
            let ctx = st.ctx();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = band_limited(&st.disc.grid, 2, 4, &mut rng);
            let base = compare_forms(&ctx, &v);
            let scaled = compare_forms(&ctx, &v.scaled(alpha));
            let a2 = alpha * alpha;
            prop_assert!((scaled.q_value - a2 * base.q_value).abs() <= 1e-10 * (1.0 + a2 * base.q_value.abs()));
            prop_assert!((scaled.qhat_value - a2 * base.qhat_value).abs() <= 1e-10 * (1.0 + a2 * base.qhat_value.abs()));
            let t = base.qhat_terms;
            let sum = t.kappa_term + t.s_dot_term + t.zeta_cross + t.p_cross + t.terminal_square + t.terminal_cross + t.terminal_s;
            prop_assert!((sum - base.qhat_value).abs() <= 1e-12 * (1.0 + sum.abs()));
        }
    }
}
