use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("policy explosion: class {class} has {count} deterministic policies (cap {cap})")]
    PolicyExplosion { class: usize, count: u128, cap: usize },

    #[error(
        "unichain assumption violated: policy {policy} of class {class} induces a chain with \
         more than one recurrent class (zero eigenvalue multiplicity > 1)"
    )]
    MultipleRecurrentClasses { class: usize, policy: usize },

    #[error("unichain assumption violated: {0}")]
    NotUnichain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("reward evaluation failed for class {class}, state {state}, action {action}: {reason}")]
    RewardEvaluation {
        class: usize,
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("protocol family mismatch: expected {expected}, found {found}")]
    FamilyMismatch { expected: String, found: String },

    #[error("protocol axiom violated ({family}): {detail}")]
    AxiomViolation { family: String, detail: String },

    #[error("state outside the domain: {0}")]
    Domain(String),

    #[error(
        "step size underflow at t = {t:.6e} (h = {h:.3e}); the system is likely stiff, \
         consider the two-timescale decomposition for small epsilon"
    )]
    Stiff { t: f64, h: f64 },

    #[error("degenerate basis: condition number {0:.3e} exceeds 1e12")]
    DegenerateBasis(f64),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(
        "revision rate bound exceeded in class {class}: observed row sum {observed:.6e} > bound {bound:.6e}"
    )]
    RateBoundViolation {
        class: usize,
        observed: f64,
        bound: f64,
    },

    #[error("random game generation failed after {0} attempts")]
    Generation(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("spec parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
