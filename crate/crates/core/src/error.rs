use thiserror::Error;

use crate::solver::SolverTrace;
use crate::transform::DecouplingMap;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: asymmetry {asymmetry:e} exceeds tolerance {tol:e}")]
    NotHermitian { asymmetry: f64, tol: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dense Hermitian eigensolver failed: {0}")]
    SolverFailure(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate index {0}")]
    DuplicateIndex(usize),

    #[error("empty index set")]
    EmptyIndexSet,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no model space passes condition cap {cap:e}")]
    CapTooTight { cap: f64 },

    #[error("projected eigenvector matrix is singular for K={model_space:?} (condition number {condition:e})")]
    SingularProjection { model_space: Vec<usize>, condition: f64 },

    #[error("Sylvester sweep is singular: spectra of the P and Q blocks overlap (gap {gap:e})")]
    SylvesterSingular { gap: f64 },

    #[error("fixed-point solver hit {iterations} iterations, best residual {residual:e}")]
    MaxIterExceeded {
        iterations: usize,
        residual: f64,
        best: Box<DecouplingMap>,
        trace: SolverTrace,
    },

    #[error("fixed-point solver diverged at iteration {iteration}: |s|_F = {norm:e}")]
    Diverged { iteration: usize, norm: f64 },

    #[error("{}", not_decoupled_message(*.residual, *.tol, *.member))]
    NotDecoupled {
        residual: f64,
        tol: f64,
        member: Option<usize>,
    },

    #[error("vector is not an eigenvector: residual {residual:e} exceeds {tol:e}")]
    NotAnEigenvector { residual: f64, tol: f64 },

    #[error("vector lies outside the selected eigenvector span: residual {residual:e} exceeds {tol:e}")]
    NotInSubspace { residual: f64, tol: f64 },

    #[error("zero vector")]
    ZeroVector,

    #[error("members {first} and {second} do not commute: |[A,B]|_F = {norm:e}")]
    NotCommuting { first: usize, second: usize, norm: f64 },

    #[error("invalid partition: {0}")]
    PartitionInvalid(String),

    #[error("block {block}: {source}")]
    InBlock { block: usize, source: Box<Error> },

    #[error("invalid problem spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn not_decoupled_message(residual: f64, tol: f64, member: Option<usize>) -> String {
    match member {
        Some(m) => format!("member {m} is not decoupled: residual {residual:e} exceeds {tol:e}"),
        None => format!("operator is not decoupled: residual {residual:e} exceeds {tol:e}"),
    }
}

impl Error {
    /// Numerical failures map to CLI exit code 2, everything else to 1.
    pub fn is_numerical(&self) -> bool {
        if let Error::InBlock { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NotDecoupled { .. }
                | Error::Diverged { .. }
                | Error::MaxIterExceeded { .. }
                | Error::SylvesterSingular { .. }
                | Error::SolverFailure(_)
        )
    }
}
