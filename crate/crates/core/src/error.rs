use thiserror::Error;

use crate::problem::expr::ExprError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse failure: {0}")]
    ConfigParse(String),
    #[error("invalid expression for {field}: {source}")]
    Expr {
        field: String,
        #[source]
        source: ExprError,
    },
    #[error("degenerate control bounds for control {index}: lower {lower} must be < upper {upper}")]
    DegenerateBounds { index: usize, lower: f64, upper: f64 },
    #[error("boundary compatibility: {field} is {value:e} at x = {x} (must vanish on the boundary)")]
    BoundaryCompatibility { field: String, x: f64, value: f64 },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("Newton failed to converge at time step {step} (residual {residual:e})")]
    NewtonDivergence { step: usize, residual: f64 },
    #[error("finite arc property violated numerically: {count} arcs exceed the limit {max}")]
    TooManyArcs { count: usize, max: usize },
    #[error("controllability count violated on arc {arc}: |C_k| = {active} > |free controls| = {free}")]
    ControllabilityCount { arc: usize, active: usize, free: usize },
    #[error("state-constraint block singular on arc {arc} at t = {t}: smallest singular value {sigma:e} < {alpha:e}")]
    SingularConstraintBlock { arc: usize, t: f64, sigma: f64, alpha: f64 },
    #[error("cone basis mode {0} requires a scalar control")]
    ScalarOnly(&'static str),
    #[error("cone basis is empty")]
    EmptyBasis,
    #[error("Gram matrix singular (degenerate basis)")]
    SingularGram,
    #[error("all {attempts} growth-probe draws were infeasible")]
    AllDrawsInfeasible { attempts: usize },
    #[error("sweep needs >= 3 points, got {0}")]
    TooFewSweepPoints(usize),
    #[error("forward solve failed at amplitude {amplitude}: {source}")]
    ProbeSolve {
        amplitude: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("candidate input: {0}")]
    Candidate(String),
    #[error("time {0} outside [0, T]")]
    TimeOutOfRange(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
