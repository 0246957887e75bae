use thiserror::Error;

use crate::spec::Pos;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: Pos, msg: String },

    #[error("unknown class name {name:?} at {pos}")]
    UnknownName { name: String, pos: Pos },

    #[error("ill-founded class {class}: {reason}")]
    IllFounded { class: String, reason: String },

    #[error("invalid automaton: {0}")]
    InvalidDfa(String),

    #[error("exponential generating function diverges at x = {x}: {detail}")]
    EgfDivergent { x: f64, detail: String },

    #[error("series tail bound is inconclusive at x = {x}")]
    InconclusiveTail { x: f64 },

    #[error("ordinary generating function diverges at x = {x}: {detail}")]
    DivergentOgf { x: f64, detail: String },

    #[error("coefficient growth is inconclusive: {0}")]
    InconclusiveGrowth(String),

    #[error("quadrature did not reach tolerance {tol:e} (error estimate {estimate:e})")]
    ToleranceNotReached { tol: f64, estimate: f64 },

    #[error("size law tail still above 1e-9 after {n_max} coefficients")]
    TailTooHeavy { n_max: usize },

    #[error("object size exceeded the ceiling {ceiling} in {attempts} consecutive attempts")]
    SizeCeilingExceeded { ceiling: usize, attempts: usize },

    #[error("oracle inconsistency: {0}")]
    InconsistentOracle(String),

    #[error("the class has no objects")]
    EmptyClass,

    #[error("the language has no words")]
    EmptyLanguage,

    #[error("linear system is singular at x = {x}")]
    SingularSystem { x: f64 },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("enumeration size {n} exceeds the limit {max}")]
    TooLarge { n: usize, max: usize },

    #[error("law has fewer than two buckets after merging")]
    DegenerateLaw,

    #[error("law sums to {sum}, expected 1")]
    LawNotNormalized { sum: f64 },

    #[error("target mean size {target} is not reachable (supremum {max} within the safety margin)")]
    Unachievable { target: f64, max: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Syntax { .. } => "SyntaxError",
            Error::UnknownName { .. } => "UnknownName",
            Error::IllFounded { .. } => "IllFounded",
            Error::InvalidDfa(_) => "InvalidDfa",
            Error::EgfDivergent { .. } => "EgfDivergent",
            Error::InconclusiveTail { .. } => "InconclusiveTail",
            Error::DivergentOgf { .. } => "DivergentOGF",
            Error::InconclusiveGrowth(_) => "InconclusiveGrowth",
            Error::ToleranceNotReached { .. } => "ToleranceNotReached",
            Error::TailTooHeavy { .. } => "TailTooHeavy",
            Error::SizeCeilingExceeded { .. } => "SizeCeilingExceeded",
            Error::InconsistentOracle(_) => "InconsistentOracle",
            Error::EmptyClass => "EmptyClass",
            Error::EmptyLanguage => "EmptyLanguage",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::Domain(_) => "DomainViolation",
            Error::TooLarge { .. } => "TooLarge",
            Error::DegenerateLaw => "DegenerateLaw",
            Error::LawNotNormalized { .. } => "LawNotNormalized",
            Error::Unachievable { .. } => "Unachievable",
            Error::Json(_) => "Json",
        }
    }
}
