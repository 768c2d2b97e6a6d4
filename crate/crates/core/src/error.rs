use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// Structurally broken input (wrong dimensions, unparseable file).
    #[error("malformed model: {0}")]
    Malformed(String),

    /// The model parsed but violates one of the standing conditions.
    #[error("model validation failed: {0}")]
    Invalid(String),

    #[error("Perron-Frobenius inapplicable: {0}")]
    Reducible(String),

    #[error("not subcritical: lambda = {0} (need lambda < -1e-8)")]
    NotSubcritical(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t}: {detail}")]
    StepUnderflow { t: f64, detail: String },

    #[error("v_t = inf: {0}")]
    Persistent(String),

    #[error("theta-limit did not converge at delta = {delta} (last relative change {last_change:e}); try a smaller delta")]
    ThetaLimit { delta: f64, last_change: f64 },

    #[error("no surviving paths at t = {t} (survival estimate {survival}); use h-transform sampling instead")]
    NoSurvivors { t: f64, survival: f64 },

    #[error(
        "effective sample size {ess:.1} below floor {floor}; use more paths or a shorter horizon"
    )]
    LowEss { ess: f64, floor: f64 },

    #[error("sub-step budget exhausted at t = {t}: {detail}")]
    SubstepBudget { t: f64, detail: String },

    #[error("time {0} is not a recorded time of the ensemble")]
    MissingTime(f64),

    #[error("missing descendant simulation for window ({a}, {b}] at t = {t}")]
    MissingDescendants { a: f64, b: f64, t: f64 },

    #[error("unknown operation `{0}`")]
    UnknownOp(String),

    #[error("stale manifest: {0}")]
    StaleManifest(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<LabError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn context(self, context: impl Into<String>) -> Self {
        LabError::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
