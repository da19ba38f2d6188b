//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("initial temperature profile is empty")]
    EmptyProfile,
    #[error("non-finite value in {context}: {value}")]
    NonFinite { context: &'static str, value: f64 },
    #[error("tabulated profile abscissae must be sorted, strictly increasing and span [0, s0]")]
    BadProfileAbscissae,
    #[error("{name} must be strictly positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("relaxation times do not match requested order {order:?}")]
    RelaxationOrderMismatch { order: crate::model::Order },
    #[error("gain precondition violated: {0}")]
    GainPrecondition(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("non-finite value produced in {context} at t = {t}")]
    NonFinite { context: &'static str, t: f64 },
    #[error("interface left the material domain: s = {s} at t = {t}")]
    InterfaceOutOfDomain { s: f64, t: f64 },
    #[error("temperature fell below melting point: min T - T_m = {deficit} at t = {t}")]
    TemperatureBelowMelt { deficit: f64, t: f64 },
    #[error("explicit scheme CFL violation: alpha*dt*(nx/s)^2 = {value} > 0.5 at t = {t}")]
    CflViolation { value: f64, t: f64 },
    #[error("grid too coarse: nx = {nx} does not support the requested stencil")]
    DegenerateGrid { nx: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("degenerate gains: {0} = 0")]
    DegenerateGains(&'static str),
    #[error("Q is singular and P*B has a component along the null direction")]
    SingularQ,
    #[error("trajectory too short: need at least {need} records, got {got}")]
    TrajectoryTooShort { need: usize, got: usize },
    #[error("trajectory records are not uniformly spaced in time")]
    NonUniformTime,
    #[error("state/gain order mismatch: {0}")]
    OrderMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solver(Box<SolverError>),
}

impl From<SolverError> for AnalysisError {
    fn from(e: SolverError) -> Self {
        AnalysisError::Solver(Box::new(e))
    }
}
