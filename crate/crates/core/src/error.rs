use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid party index {index} for a {parties}-party state")]
    InvalidParty { index: usize, parties: usize },

    #[error("invalid party subset: {0}")]
    InvalidSubset(String),

    #[error("invalid grouping: {0}")]
    InvalidGrouping(String),

    #[error("annihilated: local operator maps the state to zero")]
    Annihilated,

    #[error("incomplete measurement: {0}")]
    IncompleteMeasurement(String),

    #[error("correction is not unitary: {0}")]
    NonUnitaryCorrection(String),

    #[error("impossible branch {label}: probability {probability:e}")]
    ImpossibleBranch { label: usize, probability: f64 },

    #[error("expected a bipartite state, got {0} parties")]
    NotBipartite(usize),

    #[error("rank undetermined: {0}")]
    RankUndetermined(String),

    #[error("partition/factorization inconsistency: block {block:?} has purity {purity}")]
    FactorizationInconsistency { block: Vec<usize>, purity: f64 },

    #[error("party-count mismatch: {0} vs {1}")]
    PartyCountMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("protocol failure: {0}")]
    ProtocolFailure(String),

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("parse error: {0}")]
    Parse(String),
}
