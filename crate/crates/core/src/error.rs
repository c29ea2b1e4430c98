use thiserror::Error;

/// Errors raised across the checker.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("arity mismatch: `{name}` expects {expected} argument(s), got {found}")]
    ArityMismatch {
        name: String,
        expected: usize,
        found: usize,
    },

    #[error("undeclared name `{name}` in {scope}")]
    UndeclaredName { name: String, scope: String },

    #[error("unguarded recursion through `{name}`")]
    UnguardedRecursion { name: String },

    #[error("ill-formed term: {0}")]
    IllFormed(String),

    #[error("open term: free variable `{0}`")]
    OpenTerm(String),

    #[error("value {value} escapes the declared domain")]
    DomainEscape { value: String },

    #[error("context has {holes} hole(s) but {fillers} filler(s) were given")]
    HoleCountMismatch { holes: usize, fillers: usize },

    #[error("filler variable `{0}` would be captured by the context")]
    CaptureViolation(String),

    #[error("exploration budget of {0} states exceeded")]
    BudgetExceeded(usize),

    #[error("carrier mismatch: {0}")]
    CarrierMismatch(String),

    #[error("iteration cap of {0} basis insertions reached")]
    IterationCap(usize),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("mediated channel `{0}` is not restricted at the top of the system")]
    MediationMismatch(String),

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("core side is not finite-state within {0} states")]
    CoreNotFiniteState(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
