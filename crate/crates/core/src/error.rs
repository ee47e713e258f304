use thiserror::Error;

use crate::scm::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid template:\n{0}")]
    InvalidTemplate(ValidationReport),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("domain must be non-empty and free of duplicates")]
    InvalidDomain,

    #[error("value {value} is outside the domain of `{variable}`")]
    DomainViolation { variable: String, value: i64 },

    #[error("variable `{0}` appears twice in one intervention")]
    DuplicateTarget(String),

    #[error("the reward variable `{0}` cannot be intervened on")]
    RewardIntervened(String),

    #[error("slice {slice} is outside the unrolled horizon of {horizon} slices")]
    SliceOutOfRange { slice: usize, horizon: usize },

    #[error("horizon must contain at least one slice")]
    EmptyHorizon,

    #[error("history has {got} interventions but the trial sits at slice {slice}")]
    HistoryLength { got: usize, slice: usize },

    #[error("observational data must come from an un-intervened model")]
    IntervenedObservational,

    #[error("sample count must be positive")]
    NoSamples,

    #[error("dataset does not match template: {0}")]
    DatasetMismatch(String),

    #[error("fitted model has no mechanisms for slices after 0; observational data needs at least 2 slices")]
    IncompleteEstimate,

    #[error("smoothing pseudo-count must be finite and non-negative, got {0}")]
    InvalidSmoothing(f64),

    #[error("reward must be 0 or 1, got {0}")]
    NonBinaryReward(i64),

    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },

    #[error("a trial needs a horizon of at least one round")]
    ZeroHorizon,

    #[error("policy needs at least one arm")]
    NoArms,

    #[error("bisection tolerance must be positive, got {0}")]
    InvalidTolerance(f64),

    #[error("intervention set {{{0}}} is not a minimal intervention set")]
    NotMis(String),

    #[error("reward variable `{0}` is missing from the causal diagram")]
    MissingReward(String),

    #[error("environment has {env} arms but the policy has {policy}")]
    ArmCountMismatch { env: usize, policy: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
