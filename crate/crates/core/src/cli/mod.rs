//! `heat-goh` command line: `verify`, `example` and `sweep`.
//!
//! Exit codes: 0 when every enabled check passes, 1 when a check fails, 2
//! for usage and configuration errors, 3 for numerical failures.

pub mod candidate;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod truth;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::example::{candidate_csv, example_candidate, example_discretization};
use crate::optimality::{CandidateSource, ConeMode, DEFAULT_HAT_CAP};
use crate::problem::config::load_problem;
use crate::problem::Discretization;
use crate::solvers::Scheme;
use candidate::Candidate;
use pipeline::{verify, Checks, Settings, Solved, Verification};
use report::{write_outputs, Status, Table};
use sweep::{amplitude_sweep, grid_sweep, AmplitudeSweep, GridSweep, DEFAULT_AMPLITUDES};
use truth::{compare_with_truth, TruthSection};

pub const MIN_NX: usize = 8;
pub const MIN_NT: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "heat-goh", version, about = "Second-order optimality checks for bilinear control of a 1-D semilinear heat equation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a candidate (control and state-constraint multiplier) for a problem.
    Verify {
        /// Problem configuration (JSON).
        #[arg(long)]
        problem: PathBuf,
        /// CSV with columns t, u1..um, mu_dot1..mu_dotq; a repeated time marks a jump.
        #[arg(long)]
        candidate: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the closed-form example and compare with its exact solution.
    Example {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence and remainder studies.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Interior space nodes and time steps.
    #[arg(long, value_name = "NX,NT", default_value = "201,3000", value_parser = parse_grid)]
    pub grid: (usize, usize),
    #[arg(long, value_enum, default_value_t = Scheme::CrankNicolson)]
    pub scheme: Scheme,
    /// `all`, `none`, or a comma-separated subset of first_order, arcs,
    /// quadratic_equivalence, coercivity, growth.
    #[arg(long, value_name = "LIST", default_value = "all")]
    pub checks: Checks,
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_name = "N", default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ConeMode::Pc2Star)]
    pub cone: ConeMode,
    /// Growth-probe draws.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Growth-probe radius in L2.
    #[arg(long, default_value_t = 0.1)]
    pub radius: f64,
    /// Most hat functions per run of free cone nodes.
    #[arg(long, default_value_t = DEFAULT_HAT_CAP)]
    pub hat_cap: usize,
}

impl RunArgs {
    fn settings(&self, source: CandidateSource) -> Settings {
        Settings {
            checks: self.checks,
            seed: self.seed,
            cone: self.cone,
            hat_cap: self.hat_cap,
            growth_samples: self.samples,
            growth_radius: self.radius,
            scheme: self.scheme,
            source,
            ..Settings::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum SweepKind {
    /// State error of the example over refined grids.
    Grid {
        #[arg(long = "grid", value_name = "NX,NT", num_args = 1.., value_parser = parse_grid,
              default_values = ["51,375", "101,750", "201,1500"])]
        grids: Vec<(usize, usize)>,
        #[arg(long, value_enum, default_value_t = Scheme::CrankNicolson)]
        scheme: Scheme,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Remainder of the linearization over decreasing amplitudes.
    Amplitude {
        #[arg(long, num_args = 1.., default_values_t = DEFAULT_AMPLITUDES)]
        amplitudes: Vec<f64>,
        /// Problem configuration; the example when omitted.
        #[arg(long, requires = "candidate")]
        problem: Option<PathBuf>,
        #[arg(long, requires = "problem")]
        candidate: Option<PathBuf>,
        #[arg(long, value_name = "NX,NT", default_value = "101,1200", value_parser = parse_grid)]
        grid: (usize, usize),
        #[arg(long, value_enum, default_value_t = Scheme::CrankNicolson)]
        scheme: Scheme,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        #[arg(long, value_name = "N", default_value_t = 7)]
        seed: u64,
    },
}

/// Parses `NX,NT` with `NX >= 8` and `NT >= 16`.
pub fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected NX,NT, got `{s}`"))?;
    let nx: usize = a.trim().parse().map_err(|_| format!("bad NX `{a}`"))?;
    let nt: usize = b.trim().parse().map_err(|_| format!("bad NT `{b}`"))?;
    if nx < MIN_NX || nt < MIN_NT {
        return Err(format!("grid needs NX >= {MIN_NX} and NT >= {MIN_NT}, got {nx},{nt}"));
    }
    Ok((nx, nt))
}

impl Error {
    /// 3 for failures of the numerics, 2 for everything the user controls.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NewtonDivergence { .. }
            | Error::TooManyArcs { .. }
            | Error::ControllabilityCount { .. }
            | Error::SingularConstraintBlock { .. }
            | Error::EmptyBasis
            | Error::SingularGram
            | Error::AllDrawsInfeasible { .. }
            | Error::ProbeSolve { .. }
            | Error::Shape(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    problem: &'a Path,
    candidate: &'a Path,
    #[serde(flatten)]
    verification: &'a Verification,
}

#[derive(Debug, Serialize)]
struct ExampleReport<'a> {
    command: &'static str,
    status: Status,
    passed: bool,
    #[serde(flatten)]
    verification: &'a Verification,
    truth: &'a TruthSection,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SweepReport<'a> {
    Grid(&'a GridSweep),
    Amplitude(&'a AmplitudeSweep),
}

fn load_candidate(problem: &Path, candidate: &Path, grid: (usize, usize)) -> Result<(Discretization, Candidate)> {
    let text = fs::read_to_string(problem)
        .map_err(|e| Error::ConfigParse(format!("cannot read {}: {e}", problem.display())))?;
    let spec = load_problem(&text)?;
    let file = fs::File::open(candidate)
        .map_err(|e| Error::Candidate(format!("cannot read {}: {e}", candidate.display())))?;
    let cand = Candidate::read(file, spec.m(), spec.q())?;
    let disc = Discretization::with_grid(&spec, grid.0, grid.1, &cand.jump_times())?;
    Ok((disc, cand))
}

fn print_summary(v: &Verification) {
    let mode = if v.grid.coarse {
        format!("coarse mode (tolerances relaxed to {:.3e})", v.tolerances.discretization)
    } else {
        "calibrated".to_string()
    };
    println!("grid {}x{} ({} steps, {}), {mode}", v.grid.nx, v.grid.nt, v.grid.n_steps, v.grid.scheme);
    let line = |name: &str, passed: Option<bool>, worst: Option<f64>, tol: Option<f64>, err: &Option<String>| match (passed, err) {
        (None, _) => println!("  {name:<22} skipped"),
        (Some(_), Some(e)) => println!("  {name:<22} ERROR  {e}"),
        (Some(p), None) => println!(
            "  {name:<22} {}  value {:.4e}  tol {:.4e}",
            if p { "PASS" } else { "FAIL" },
            worst.unwrap_or(f64::NAN),
            tol.unwrap_or(f64::NAN)
        ),
    };
    line("first_order", v.first_order.passed, v.first_order.worst_residual, v.first_order.tolerance, &v.first_order.error);
    line("arcs", v.arcs.passed, v.arcs.worst_residual, v.arcs.tolerance, &v.arcs.error);
    let e = &v.quadratic_equivalence;
    line("quadratic_equivalence", e.passed, e.worst_residual, e.tolerance, &e.error);
    line("coercivity", v.coercivity.passed, v.coercivity.worst_residual, v.coercivity.tolerance, &v.coercivity.error);
    match &v.growth.details {
        Some(g) => println!(
            "  {:<22} {}  min ratio {:.4e}  violations {} of {} accepted",
            "growth",
            if g.passed { "PASS" } else { "FAIL" },
            g.min_ratio,
            g.violations,
            g.accepted
        ),
        None => line("growth", v.growth.passed, v.growth.worst_residual, v.growth.tolerance, &v.growth.error),
    }
}

fn run_verify(problem: &Path, candidate: &Path, run: &RunArgs) -> Result<i32> {
    let (disc, cand) = load_candidate(problem, candidate, run.grid)?;
    let (u, mu_dot) = cand.sample(&disc.grid)?;
    let st = Solved::new(disc, u, mu_dot, run.scheme)?;
    let (v, tables) = verify(&st, &run.settings(CandidateSource::Solver));
    let rep = VerifyReport { command: "verify", problem, candidate, verification: &v };
    write_outputs(&run.out, &rep, &tables)?;
    print_summary(&v);
    println!("status: {}", v.status);
    Ok(v.status.exit_code())
}

fn run_example(run: &RunArgs) -> Result<i32> {
    let disc = example_discretization(run.grid.0, run.grid.1)?;
    let (u, mu_dot) = example_candidate(&disc.grid);
    let csv_text = candidate_csv(&disc.grid);
    let st = Solved::new(disc, u, mu_dot, run.scheme)?;
    let (v, mut tables) = verify(&st, &run.settings(CandidateSource::Analytic));
    let (truth, table) = compare_with_truth(&st, &v.tolerances);
    tables.push(table);
    let mut outcomes: Vec<(Option<bool>, bool)> = v.sections().iter().map(|(_, p, e)| (*p, *e)).collect();
    outcomes.push((Some(truth.passed), false));
    let status = Status::combine(&outcomes);
    let rep = ExampleReport { command: "example", status, passed: status == Status::Pass, verification: &v, truth: &truth };
    write_outputs(&run.out, &rep, &tables)?;
    fs::write(run.out.join("example_truth.csv"), csv_text)?;
    print_summary(&v);
    println!(
        "  {:<22} {}  state {:.3e}  costate {:.3e}  switching {:.3e}",
        "truth",
        if truth.passed { "PASS" } else { "FAIL" },
        truth.state_rel_error,
        truth.costate_bang_arc_error.max(truth.costate_tail_max),
        truth.switching_error
    );
    println!("status: {status}");
    Ok(status.exit_code())
}

fn run_sweep(kind: &SweepKind) -> Result<i32> {
    let (passed, out, json, table): (bool, &Path, String, Table) = match kind {
        SweepKind::Grid { grids, scheme, out } => {
            let (s, t) = grid_sweep(grids, *scheme)?;
            for p in &s.points {
                println!("  {}x{}  state error {:.4e}", p.nx, p.nt, p.state_rel_error);
            }
            println!("slope {:.3} (needs >= {:.2})", s.slope, s.min_slope);
            (s.passed, out, serde_json::to_string_pretty(&SweepReport::Grid(&s))?, t)
        }
        SweepKind::Amplitude { amplitudes, problem, candidate, grid, scheme, out, seed } => {
            let st = match (problem, candidate) {
                (Some(p), Some(c)) => {
                    let (disc, cand) = load_candidate(p, c, *grid)?;
                    let (u, mu) = cand.sample(&disc.grid)?;
                    Solved::new(disc, u, mu, *scheme)?
                }
                _ => {
                    let disc = example_discretization(grid.0, grid.1)?;
                    let (u, mu) = example_candidate(&disc.grid);
                    Solved::new(disc, u, mu, *scheme)?
                }
            };
            let (s, t) = amplitude_sweep(&st, amplitudes, *seed, *scheme)?;
            for p in &s.probe.points {
                println!("  a = {:<8} eta ratio {:.4e}  delta ratio {:.4e}", p.amplitude, p.eta_ratio, p.delta_ratio);
            }
            println!("eta slope {:.3}, delta slope {:.3}", s.probe.eta_slope, s.probe.delta_slope);
            (s.passed, out, serde_json::to_string_pretty(&SweepReport::Amplitude(&s))?, t)
        }
    };
    fs::create_dir_all(out)?;
    fs::write(out.join("report.json"), json + "\n")?;
    table.write(out)?;
    println!("status: {}", if passed { Status::Pass } else { Status::CheckFailed });
    Ok(if passed { 0 } else { 1 })
}

/// Runs a parsed command and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Verify { problem, candidate, run } => run_verify(problem, candidate, run),
        Command::Example { run } => run_example(run),
        Command::Sweep { kind } => run_sweep(kind),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Parses `args` (program name first) and runs.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::example::{candidate_csv, example_discretization};
    use proptest::prelude::*;

    #[test]
    fn grid_argument() {
        assert_eq!(parse_grid("201,3000"), Ok((201, 3000)));
        assert_eq!(parse_grid(" 8 , 16 "), Ok((8, 16)));
        for bad in ["7,16", "8,15", "201", "a,b", "201,-3", ""] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn checks_argument() {
        assert_eq!("all".parse::<Checks>(), Ok(Checks::all()));
        assert_eq!("none".parse::<Checks>(), Ok(Checks::none()));
        let c: Checks = "growth, equivalence".parse().unwrap();
        assert_eq!(c, Checks { growth: true, quadratic_equivalence: true, ..Checks::none() });
        assert!("growth,bogus".parse::<Checks>().is_err());
    }

    proptest! {
        #[test]
        fn checks_display_round_trips(bits in proptest::array::uniform5(any::<bool>())) {
            let c = Checks { first_order: bits[0], arcs: bits[1], quadratic_equivalence: bits[2], coercivity: bits[3], growth: bits[4] };
            prop_assert_eq!(c.to_string().parse::<Checks>(), Ok(c));
        }
    }

    #[test]
    fn status_prefers_errors_then_failures() {
        assert_eq!(Status::combine(&[]), Status::Pass);
        assert_eq!(Status::combine(&[(None, false), (Some(true), false)]), Status::Pass);
        assert_eq!(Status::combine(&[(Some(false), false), (Some(true), false)]), Status::CheckFailed);
        assert_eq!(Status::combine(&[(Some(false), false), (Some(false), true)]), Status::NumericalFailure);
        assert_eq!([Status::Pass, Status::CheckFailed, Status::NumericalFailure].map(Status::exit_code), [0, 1, 3]);
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(Error::TooManyArcs { count: 3, max: 2 }.exit_code(), 3);
        assert_eq!(Error::EmptyBasis.exit_code(), 3);
        assert_eq!(Error::TooFewSweepPoints(1).exit_code(), 2);
    }

    #[test]
    fn bundled_candidate_matches_the_example() {
        let disc = example_discretization(8, 600).unwrap();
        let bundled = include_str!("../../data/example_truth.csv");
        assert_eq!(bundled, candidate_csv(&disc.grid));
    }
}
