use thiserror::Error;

use crate::projection::AdmissibilityReport;

#[derive(Debug, Error)]
pub enum CspError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid instance: {0}")]
    Invalid(String),

    #[error("assignment is incomplete: variable {0} is unassigned")]
    PartialAssignment(usize),

    #[error("assignment has {got} values, instance has {expected} variables")]
    LengthMismatch { expected: usize, got: usize },

    #[error("value {value} out of range for variable {var} (alphabet size {size})")]
    ValueOutOfRange { var: usize, value: u32, size: u32 },
}

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("scheme covers {scheme} variables but the instance has {csp}")]
    VariableMismatch { scheme: usize, csp: usize },

    #[error("variable {var}: {msg}")]
    BadPartition { var: usize, msg: String },

    #[error("outside the local lemma regime: {0}")]
    Regime(String),

    #[error("scheme built by {case} is not admissible ({})", .report.summary())]
    NotAdmissible {
        case: String,
        report: Box<AdmissibilityReport>,
    },

    #[error("resampling did not converge within {attempts} attempts of {steps} steps")]
    ConstructionFailed { attempts: usize, steps: usize },
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state space of {size} assignments exceeds the enumeration guard of {limit}")]
    TooLarge { size: u128, limit: u128 },

    #[error("conditioning event has probability zero")]
    ZeroProbability,

    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Error)]
pub enum CountError {
    #[error("stage {stage}: pinned instance is unsatisfiable")]
    Unsatisfiable { stage: usize },

    #[error("stage {stage}: {errors} of {samples} samples failed, above the {limit:.0}% limit")]
    ErrorRate {
        stage: usize,
        errors: u64,
        samples: u64,
        limit: f64,
    },

    #[error("invalid counting parameters: {0}")]
    Config(String),

    #[error(transparent)]
    Projection(#[from] ProjectionError),

    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Projection(#[from] ProjectionError),

    #[error(transparent)]
    Oracle(#[from] OracleError),
}
