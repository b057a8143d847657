use std::f64::consts::{LN_2, PI};

use ndarray::Array2;

use super::*;
use crate::example::{self, example_candidate, example_truth, ode_oracle_fn, JUNCTIONS};
use crate::goh::{compute_b, goh_w};
use crate::problem::expr::{Expr, Side};
use crate::problem::{Discretization, Field, Grid, TimeSamples};
use crate::quadrature::{loglog_slope, space_inner, time_trapz_sided};

fn heat_spec() -> crate::problem::ProblemSpec {
    let mut spec = example::example_spec();
    spec.channels = vec![Expr::parse("0").unwrap()];
    spec.initial_state = Expr::parse("sin(pi*x)").unwrap();
    spec
}

fn zero_control(disc: &Discretization) -> TimeSamples {
    TimeSamples::zeros(disc.grid.n_times(), disc.m())
}

// sum_k sum_i weights; scalar RK4 for z' = a(t) z + g(t)
fn rk4_linear(a: impl Fn(f64, Side) -> f64, g: impl Fn(f64, Side) -> f64, times: &[f64], sub: usize) -> Vec<f64> {
    let mut z = 0.0;
    let mut out = vec![z];
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / sub as f64;
        for j in 0..sub {
            let s0 = w[0] + j as f64 * h;
            let s1 = if j + 1 == sub { w[1] } else { s0 + h };
            let sm = 0.5 * (s0 + s1);
            let f = |s: f64, side: Side, z: f64| a(s, side) * z + g(s, side);
            let k1 = f(s0, Side::Right, z);
            let k2 = f(sm, Side::Right, z + 0.5 * h * k1);
            let k3 = f(sm, Side::Right, z + 0.5 * h * k2);
            let k4 = f(s1, Side::Left, z + h * k3);
            z += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        out.push(z);
    }
    out
}

fn modal(disc: &Discretization, field: &Field, k: usize) -> f64 {
    let r = field.row(k);
    space_inner(disc.grid.dx, r.as_slice().unwrap(), &disc.c[0])
}

#[test]
fn apply_a_sine_mode() {
    let spec = heat_spec();
    let errs: Vec<f64> = [40usize, 81, 163]
        .iter()
        .map(|&nx| {
            let disc = Discretization::new(&spec, Grid::uniform(&spec, nx, 16).unwrap());
            let z: Vec<f64> = disc.grid.x.iter().map(|&x| (PI * x).sin()).collect();
            let y = vec![0.0; z.len()];
            let az = apply_a(&disc, &y, &[0.0], &z);
            assert_eq!(apply_a(&disc, &y, &[0.0], &vec![0.0; z.len()]), vec![0.0; z.len()]);
            az.iter().zip(&z).map(|(a, s)| (a - PI * PI * s).abs()).fold(0.0, f64::max)
        })
        .collect();
    assert!(errs[2] < 1e-3, "{errs:?}");
    for w in errs.windows(2) {
        assert!(w[0] / w[1] > 3.5, "{errs:?}");
    }
}

#[test]
fn apply_a_cancels_first_mode_on_constrained_arc() {
    let spec = example::example_spec();
    let disc = Discretization::new(&spec, Grid::uniform(&spec, 201, 16).unwrap());
    let y = vec![0.0; disc.grid.n_space()];
    let az = apply_a(&disc, &y, &[PI * PI], &disc.c[0]);
    let worst = az.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // pi^2 - lambda_h is about pi^4 dx^2 / 12
    assert!(worst < 5e-4, "{worst:e}");
}

#[test]
fn heat_eigenmode_time_order() {
    // against the semi-discrete solution exp(-lambda_h t) sin(pi x), so only
    // the time error is measured
    let spec = heat_spec();
    for (scheme, min_order) in [(Scheme::CrankNicolson, 1.9), (Scheme::ImplicitEuler, 0.9)] {
        let nts = [60usize, 120, 240];
        let errs: Vec<f64> = nts
            .iter()
            .map(|&nt| {
                let disc = Discretization::new(&spec, Grid::uniform(&spec, 31, nt).unwrap());
                let y = solve_state(&disc, &zero_control(&disc), &EvolutionOptions::with_scheme(scheme)).unwrap();
                let dx = disc.grid.dx;
                let lam = 4.0 / (dx * dx) * (PI * dx / 2.0).sin().powi(2);
                let mut worst = 0.0f64;
                for (k, &t) in disc.grid.t.iter().enumerate() {
                    for (i, &x) in disc.grid.x.iter().enumerate() {
                        worst = worst.max((y[[k, i]] - (-lam * t).exp() * (PI * x).sin()).abs());
                    }
                }
                worst
            })
            .collect();
        let dts: Vec<f64> = nts.iter().map(|&n| 3.0 / n as f64).collect();
        let order = loglog_slope(&dts, &errs);
        assert!(order >= min_order, "{scheme:?}: order {order}, errs {errs:?}");
    }
}

#[test]
fn heat_eigenmode_space_order() {
    let spec = heat_spec();
    let nxs = [10usize, 21, 43];
    let errs: Vec<f64> = nxs
        .iter()
        .map(|&nx| {
            let disc = Discretization::new(&spec, Grid::uniform(&spec, nx, 6000).unwrap());
            let y = solve_state(&disc, &zero_control(&disc), &EvolutionOptions::default()).unwrap();
            let k = disc.grid.node_of(0.3).unwrap();
            disc.grid
                .x
                .iter()
                .enumerate()
                .map(|(i, &x)| (y[[k, i]] - (-PI * PI * 0.3f64).exp() * (PI * x).sin()).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let dxs: Vec<f64> = nxs.iter().map(|&n| 1.0 / (n + 1) as f64).collect();
    let order = loglog_slope(&dxs, &errs);
    assert!(order >= 1.9, "order {order}, errs {errs:?}");
}

#[test]
fn zero_is_a_fixed_point() {
    let mut spec = example::example_spec();
    spec.initial_state = Expr::parse("0").unwrap();
    spec.gamma = 2.0;
    let disc = Discretization::new(&spec, Grid::uniform(&spec, 20, 40).unwrap());
    let u = TimeSamples::from_fn(&disc.grid, 1, |t, _| vec![5.0 * t.sin()]);
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    assert!(y.iter().all(|&v| v == 0.0));
}

#[test]
fn newton_failure_reports_step() {
    let mut spec = example::example_spec();
    spec.gamma = 5.0;
    let disc = Discretization::new(&spec, Grid::uniform(&spec, 20, 10).unwrap());
    let (u, _) = (TimeSamples::zeros(disc.grid.n_times(), 1), ());
    let opts = EvolutionOptions { newton_max_iter: 1, newton_tol: 1e-14, ..Default::default() };
    match solve_state(&disc, &u, &opts) {
        Err(crate::Error::NewtonDivergence { step, residual }) => {
            assert_eq!(step, 0);
            assert!(residual > 0.0);
        }
        other => panic!("expected Newton failure, got {other:?}"),
    }
    let bad = EvolutionOptions { newton_tol: 0.0, ..Default::default() };
    assert!(solve_state(&disc, &u, &bad).is_err());
}

#[test]
fn example_state_matches_single_mode_oracle() {
    let disc = example::example_discretization(101, 600).unwrap();
    let (u, _) = example_candidate(&disc.grid);
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    let oracle = ode_oracle_fn(|t, s| example_truth(t, s).unwrap().u_bar, &disc.grid.t, 10);
    let mut worst = 0.0f64;
    for k in 0..disc.grid.n_times() {
        for (i, &c) in disc.c[0].iter().enumerate() {
            worst = worst.max((y[[k, i]] - oracle[k] * c).abs());
        }
    }
    // relative to max |ybar| = 2 sqrt(2)
    assert!(worst / (2.0 * 2f64.sqrt()) < 2e-3, "{worst:e}");
}

#[test]
fn cost_fixtures() {
    // y = y_d and y(T) = y_dT give zero
    let spec = example::example_spec();
    let disc = example::example_discretization(40, 60).unwrap();
    let mut y = disc.y_d.left.clone();
    let last = disc.grid.n_times() - 1;
    y.row_mut(last).assign(&ndarray::ArrayView1::from(&disc.y_dt[..]));
    let u = zero_control(&disc);
    let c = cost(&disc, &u, &y);
    // y_d(T) = c_1 = y_dT, so the overwrite keeps y = y_d everywhere
    assert!(c.total.abs() < 1e-14, "{c:?}");

    // y = 0, y_d = 1 on (0,1) x (0,1), y_dT = 0: J = 1/2
    let mut spec2 = spec.clone();
    spec2.horizon = 1.0;
    spec2.running_target = Expr::parse("1").unwrap();
    spec2.terminal_target = Expr::parse("0").unwrap();
    let disc = Discretization::new(&spec2, Grid::uniform(&spec2, 20, 10).unwrap());
    let y = Field::zeros((disc.grid.n_times(), disc.grid.n_space()));
    let c = cost(&disc, &zero_control(&disc), &y);
    assert!((c.total - 0.5).abs() < 1e-14, "{c:?}");
}

#[test]
fn example_cost_matches_single_mode_reduction() {
    // J = 1/2 int (ybar_1 - yhat_d)^2 dt; the integrand is e^{2t}/4 on
    // (0, log 2), 1 on (log 2, 1), (t - 2)^2 on (1, 2) and 0 after
    let exact = 0.5 * (3.0 / 8.0 + (1.0 - LN_2) + 1.0 / 3.0);
    let vals: Vec<f64> = [(201usize, 600usize), (401, 1200)]
        .iter()
        .map(|&(nx, nt)| {
            let disc = example::example_discretization(nx, nt).unwrap();
            let (u, _) = example_candidate(&disc.grid);
            let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
            cost(&disc, &u, &y).total
        })
        .collect();
    assert!((vals[0] - vals[1]).abs() < 1e-3, "{vals:?}");
    assert!((vals[1] - exact).abs() < 1e-3, "{vals:?} vs {exact}");
}

fn example_setup(nx: usize, nt: usize) -> (Discretization, TimeSamples, TimeSamples, Field) {
    let disc = example::example_discretization(nx, nt).unwrap();
    let (u, mu_dot) = example_candidate(&disc.grid);
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    (disc, u, mu_dot, y)
}

fn smooth_v(grid: &Grid, seed: u64) -> TimeSamples {
    let s = seed as f64;
    TimeSamples::from_fn(grid, 1, |t, _| {
        vec![(1.3 * t + s).sin() + 0.5 * (2.7 * t - 0.3 * s).cos() + 0.2 * (0.7 * s + 4.1 * t).sin()]
    })
}

#[test]
fn linearized_zero_and_superposition() {
    let (disc, u, _, y) = example_setup(31, 120);
    let zero = TimeSamples::zeros(disc.grid.n_times(), 1);
    let z0 = solve_linearized(&disc, &y, &u, &zero, Scheme::CrankNicolson);
    assert!(z0.iter().all(|&v| v == 0.0));
    let (v1, v2) = (smooth_v(&disc.grid, 1), smooth_v(&disc.grid, 2));
    let z1 = solve_linearized(&disc, &y, &u, &v1, Scheme::CrankNicolson);
    let z2 = solve_linearized(&disc, &y, &u, &v2, Scheme::CrankNicolson);
    let z12 = solve_linearized(&disc, &y, &u, &v1.add(&v2), Scheme::CrankNicolson);
    let worst = (&z12 - &z1 - &z2).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 1e-13, "{worst:e}");
}

#[test]
fn linearized_matches_single_mode_ode() {
    // v = 1 on (2, 3): z_1' + (pi^2 - ubar) z_1 = v ybar_1
    let (disc, u, _, y) = example_setup(201, 600);
    let v = TimeSamples::from_fn(&disc.grid, 1, |t, side| {
        let on = match side {
            Side::Left => t > 2.0,
            Side::Right => t >= 2.0,
        };
        vec![if on { 1.0 } else { 0.0 }]
    });
    let z = solve_linearized(&disc, &y, &u, &v, Scheme::CrankNicolson);
    let oracle = rk4_linear(
        |t, s| example_truth(t, s).unwrap().u_bar - PI * PI,
        |t, s| {
            let on = match s {
                Side::Left => t > 2.0,
                Side::Right => t >= 2.0,
            };
            if on { example_truth(t, s).unwrap().y1_bar } else { 0.0 }
        },
        &disc.grid.t,
        10,
    );
    let worst = (0..disc.grid.n_times()).map(|k| (modal(&disc, &z, k) - oracle[k]).abs()).fold(0.0, f64::max);
    let scale = oracle.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst / scale < 1e-3, "{worst:e} / {scale}");
}

#[test]
fn zeta_vanishes_on_example_and_matches_goh_split() {
    let (disc, u, _, y) = example_setup(101, 600);
    let zero = Array2::zeros((disc.grid.n_times(), 1));
    let zeta0 = solve_zeta(&disc, &y, &u, &zero, Scheme::CrankNicolson);
    assert!(zeta0.iter().all(|&v| v == 0.0));

    let v = smooth_v(&disc.grid, 3);
    let (w, _) = goh_w(&disc, &v);
    let zeta = solve_zeta(&disc, &y, &u, &w, Scheme::CrankNicolson);
    // B1 . w has only the first mode with coefficient (pi^2 - ubar) ybar_1 + ybar_1' = 0
    let zmax = zeta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(zmax < 1e-3, "{zmax:e}");

    let z = solve_linearized(&disc, &y, &u, &v, Scheme::CrankNicolson);
    let b = compute_b(&disc, &y);
    let res = crate::goh::goh_identity_residual(&disc, &y, &z, &zeta, &w);
    let alt = (&z - &zeta - &(&b[0] * &w.column(0).insert_axis(ndarray::Axis(1))))
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    assert!((res - alt).abs() < 1e-14);
    assert!(res < 5e-3, "{res:e}");
}

#[test]
fn costate_reproduces_closed_form() {
    let (disc, u, mu_dot, y) = example_setup(201, 1200);
    let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
    let mut worst_arc1 = 0.0f64;
    let mut worst_rest = 0.0f64;
    for (k, &t) in disc.grid.t.iter().enumerate() {
        let p1 = modal(&disc, &p, k);
        if t <= LN_2 {
            worst_arc1 = worst_arc1.max((p1 - example_truth(t, Side::Left).unwrap().p1).abs());
        } else {
            worst_rest = worst_rest.max(p1.abs());
        }
    }
    assert!(worst_arc1 < 5e-3, "{worst_arc1:e}");
    assert!(worst_rest < 5e-3, "{worst_rest:e}");
    let last = disc.grid.n_times() - 1;
    for x in 0..disc.grid.n_space() {
        assert_eq!(p[[last, x]], if x == 0 || x == disc.grid.n_space() - 1 { 0.0 } else { y[[last, x]] - disc.y_dt[x] });
    }
}

#[test]
fn costate_of_matching_data_vanishes() {
    let (disc, u, _, y) = example_setup(21, 60);
    let mut d2 = disc.clone();
    d2.y_d.left = y.clone();
    d2.y_d.right = Some(y.clone());
    d2.y_dt = y.row(disc.grid.n_times() - 1).to_vec();
    let p = solve_costate(&d2, &y, &u, &TimeSamples::zeros(disc.grid.n_times(), 1), Scheme::CrankNicolson);
    assert!(p.iter().all(|&v| v == 0.0));
}

// right side: int int (ybar - y_d) z + int (ybar(T) - y_dT) z(T) + sum_j int int c_j z mu_dot_j
fn adjoint_rhs(disc: &Discretization, y: &Field, mu_dot: &TimeSamples, z: &Field) -> f64 {
    let grid = &disc.grid;
    let dx = grid.dx;
    let series = |side: Side| -> Vec<f64> {
        let yd = disc.y_d.side(side);
        (0..grid.n_times())
            .map(|k| {
                let d: Vec<f64> = y.row(k).iter().zip(yd.row(k)).map(|(a, b)| a - b).collect();
                let zr = z.row(k);
                let zr = zr.as_slice().unwrap();
                space_inner(dx, &d, zr) + mu_dot.at(k, 0, side) * space_inner(dx, &disc.c[0], zr)
            })
            .collect()
    };
    let last = grid.n_times() - 1;
    let d: Vec<f64> = y.row(last).iter().zip(&disc.y_dt).map(|(a, b)| a - b).collect();
    time_trapz_sided(grid, &series(Side::Left), &series(Side::Right))
        + space_inner(dx, &d, z.row(last).as_slice().unwrap())
}

fn adjoint_lhs(disc: &Discretization, y: &Field, p: &Field, v: &TimeSamples) -> f64 {
    let grid = &disc.grid;
    let series = |side: Side| -> Vec<f64> {
        (0..grid.n_times())
            .map(|k| {
                let f: Vec<f64> = (0..grid.n_space()).map(|x| v.at(k, 0, side) * disc.b[1][x] * y[[k, x]]).collect();
                space_inner(grid.dx, p.row(k).as_slice().unwrap(), &f)
            })
            .collect()
    };
    time_trapz_sided(grid, &series(Side::Left), &series(Side::Right))
}

#[test]
fn adjoint_identity_converges() {
    let gaps: Vec<f64> = [(25usize, 150usize), (51, 300), (101, 600)]
        .iter()
        .map(|&(nx, nt)| {
            let (disc, u, mu_dot, y) = example_setup(nx, nt);
            let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
            let v = smooth_v(&disc.grid, 11);
            let z = solve_linearized(&disc, &y, &u, &v, Scheme::CrankNicolson);
            let (l, r) = (adjoint_lhs(&disc, &y, &p, &v), adjoint_rhs(&disc, &y, &mu_dot, &z));
            (l - r).abs() / r.abs().max(1.0)
        })
        .collect();
    assert!(gaps[2] < 1e-4, "{gaps:?}");
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
}

#[test]
fn transposed_scheme_is_exact() {
    let (disc, u, mu_dot, y) = example_setup(25, 90);
    let grid = &disc.grid;
    let (nt, ns) = (grid.n_times(), grid.n_space());
    // nodal loads of the right side of the adjoint identity
    let mut loads = Field::zeros((nt, ns));
    for k in 0..nt {
        let (wl, wr) = grid.time_weights(k);
        for x in 0..ns {
            let l = disc.y_d.side(Side::Left)[[k, x]];
            let r = disc.y_d.side(Side::Right)[[k, x]];
            loads[[k, x]] = wl * (y[[k, x]] - l + disc.c[0][x] * mu_dot.at(k, 0, Side::Left))
                + wr * (y[[k, x]] - r + disc.c[0][x] * mu_dot.at(k, 0, Side::Right));
        }
    }
    for x in 0..ns {
        loads[[nt - 1, x]] += y[[nt - 1, x]] - disc.y_dt[x];
    }
    for scheme in [Scheme::CrankNicolson, Scheme::ImplicitEuler] {
        let lam = discrete_adjoint(&disc, &y, &u, &loads, scheme);
        let th = scheme.theta();
        for seed in 0..3 {
            let v = smooth_v(grid, seed);
            let z = solve_linearized(&disc, &y, &u, &v, scheme);
            let lhs: f64 = (0..grid.n_steps())
                .map(|k| {
                    let g: Vec<f64> = (0..ns)
                        .map(|x| {
                            disc.b[1][x]
                                * (th * v.at(k + 1, 0, Side::Left) * y[[k + 1, x]]
                                    + (1.0 - th) * v.at(k, 0, Side::Right) * y[[k, x]])
                        })
                        .collect();
                    grid.step(k) * space_inner(grid.dx, lam.row(k).as_slice().unwrap(), &g)
                })
                .sum();
            let rhs = adjoint_rhs(&disc, &y, &mu_dot, &z);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.abs().max(1.0), "{scheme:?}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn costate_agrees_with_transposed_scheme() {
    // lambda_k approximates p at the cell midpoint
    let (disc, u, mu_dot, y) = example_setup(51, 600);
    let grid = &disc.grid;
    let p = solve_costate(&disc, &y, &u, &mu_dot, Scheme::CrankNicolson);
    let (nt, ns) = (grid.n_times(), grid.n_space());
    let mut loads = Field::zeros((nt, ns));
    for k in 0..nt {
        let (wl, wr) = grid.time_weights(k);
        for x in 0..ns {
            loads[[k, x]] = wl * (y[[k, x]] - disc.y_d.left[[k, x]] + disc.c[0][x] * mu_dot.at(k, 0, Side::Left))
                + wr * (y[[k, x]] - disc.y_d.side(Side::Right)[[k, x]] + disc.c[0][x] * mu_dot.at(k, 0, Side::Right));
        }
    }
    for x in 0..ns {
        loads[[nt - 1, x]] += y[[nt - 1, x]] - disc.y_dt[x];
    }
    let lam = discrete_adjoint(&disc, &y, &u, &loads, Scheme::CrankNicolson);
    let mut worst = 0.0f64;
    let mut at = 0;
    for k in 0..grid.n_steps() {
        for x in 0..ns {
            let d = (lam[[k, x]] - 0.5 * (p[[k, x]] + p[[k + 1, x]])).abs();
            if d > worst {
                worst = d;
                at = k;
            }
        }
    }
    assert!(worst < 1e-3, "{worst:e} at t = {}", grid.t[at]);
}

#[test]
fn a_priori_bound_holds() {
    use rand::{Rng, SeedableRng};
    let (disc, u, _, y) = example_setup(31, 150);
    let m1 = estimate_m1(&disc, &y, &u);
    assert!(m1.is_finite() && m1 > 0.0);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (a, f, ph): (f64, f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(0.1..6.0), rng.random_range(0.0..6.0));
        let v = TimeSamples::from_fn(&disc.grid, 1, |t, _| vec![a * (f * t + ph).sin()]);
        let z = solve_linearized(&disc, &y, &u, &v, Scheme::CrankNicolson);
        let znorm = (0..disc.grid.n_times())
            .map(|k| {
                let r = z.row(k);
                let r = r.as_slice().unwrap();
                space_inner(disc.grid.dx, r, r).sqrt()
            })
            .fold(0.0, f64::max);
        let v1 = v.map(f64::abs).integral(&disc.grid, 0);
        assert!(znorm <= m1 * v1, "{znorm} > {m1} * {v1}");
    }
}

#[test]
fn zeta_batch_matches_single_solves() {
    let mut spec = example::example_spec();
    spec.channels[0] = Expr::parse("1 + x*(1-x)").unwrap();
    spec.gamma = 0.5;
    let disc = Discretization::with_grid(&spec, 21, 80, &JUNCTIONS).unwrap();
    let (u, _) = example_candidate(&disc.grid);
    let y = solve_state(&disc, &u, &EvolutionOptions::default()).unwrap();
    let ws: Vec<Array2<f64>> = (0..3).map(|s| goh_w(&disc, &smooth_v(&disc.grid, s)).0).collect();
    let batch = solve_zeta_batch(&disc, &y, &u, &ws, Scheme::CrankNicolson);
    for (w, zb) in ws.iter().zip(&batch) {
        let zs = solve_zeta(&disc, &y, &u, w, Scheme::CrankNicolson);
        assert_eq!(&zs, zb);
    }
    // stepping object
    let pot = Potential::new(&disc, &y, &u);
    let b1 = crate::goh::compute_b1(&disc, &y);
    let stepper = ZetaBatch::new(&disc, &pot, &b1, Scheme::CrankNicolson);
    let mut zeta = Array2::zeros((3, disc.grid.n_space()));
    let wk = |k: usize| Array2::from_shape_fn((3, 1), |(e, _)| ws[e][[k, 0]]);
    for k in 0..disc.grid.n_steps() {
        let f = stepper.factor(k);
        zeta = stepper.advance(k, &f, zeta.view(), wk(k).view(), wk(k + 1).view());
    }
    let last = disc.grid.n_times() - 1;
    for e in 0..3 {
        let d = (&zeta.row(e) - &batch[e].row(last)).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(d < 1e-13, "{d:e}");
    }
}

