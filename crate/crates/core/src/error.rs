use crate::graph::{EntityId, Relation};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("triple {head} -{relation}-> {tail} violates the relation's kind constraint")]
    MalformedTriple {
        head: EntityId,
        relation: Relation,
        tail: EntityId,
    },
    #[error("duplicate triple {head} -{relation}-> {tail}")]
    DuplicateTriple {
        head: EntityId,
        relation: Relation,
        tail: EntityId,
    },
    #[error("entity {0} is out of range for the loaded graph")]
    UnknownEntity(EntityId),
    #[error("entity {0} has been removed from the session graph")]
    EntityRemoved(EntityId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no negative tail available for {head} under {relation}")]
    NoNegativeAvailable { head: EntityId, relation: Relation },
    #[error("non-finite parameter detected after an update step")]
    DivergenceDetected,
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("item {0} is not in the candidate set")]
    TargetNotCandidate(u32),
    #[error("target item {0} has no attributes")]
    TargetHasNoAttributes(u32),
    #[error("action {0} has already been asked")]
    ActionAlreadyAsked(usize),
    #[error("action {0} is out of range")]
    InvalidAction(usize),
    #[error("recommended item {0} is not a current candidate")]
    RecommendationOutsideCandidates(u32),
    #[error("every action is masked")]
    AllActionsMasked,
    #[error("dialogue history of length {len} exceeds the turn limit {max}")]
    HistoryTooLong { len: usize, max: usize },
    #[error("fine-grained reward for a relevant question needs item positions")]
    MissingLocation,
    #[error("session log is empty")]
    EmptyLog,
    #[error("no test data")]
    NoTestData,
    #[error("split produced an empty partition: {0}")]
    EmptySplit(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(alloc::string::String),
    #[error("user response failed: {0}")]
    Responder(alloc::string::String),
}
