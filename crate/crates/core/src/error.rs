use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what}: candidate budget of {budget} exhausted")]
    ResourceExhausted { what: &'static str, budget: u64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("ciphertext scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: u32, right: u32 },

    #[error("ciphertext scale exponent {0} exceeds the supported maximum")]
    ScaleOverflow(u32),

    #[error("fixed-point overflow: {0}")]
    CodecOverflow(String),

    #[error("intersection is empty; the obfuscation ratio is undefined")]
    EmptyIntersection,

    #[error("protocol state error: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("group negotiation failed: {0}")]
    GroupMismatch(String),

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("missing sample {0}")]
    MissingSample(String),

    #[error("training diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed message: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Violations of the two-party message ordering contract.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("expected step {expected:?}, received {received:?}")]
    UnexpectedStep { expected: String, received: String },

    #[error("sequence gap: expected {expected}, received {received}")]
    SequenceGap { expected: u64, received: u64 },

    #[error("transition {transition} is not valid in phase {phase}")]
    OutOfOrder {
        transition: &'static str,
        phase: &'static str,
    },

    #[error("peer aborted the protocol: {0}")]
    PeerAborted(String),

    #[error("unexpected payload for step {0}")]
    UnexpectedPayload(String),
}

/// Combines the results of two parties run against each other. When both
/// fail, the error that started it wins over the peer's reaction to it.
pub(crate) fn join_parties<A, B>(first: Result<A>, second: Result<B>) -> Result<(A, B)> {
    let reaction = |e: &Error| matches!(e, Error::Protocol(_) | Error::Transport(_) | Error::Io(_));
    match (first, second) {
        (Ok(a), Ok(b)) => Ok((a, b)),
        (Err(e), Ok(_)) | (Ok(_), Err(e)) => Err(e),
        (Err(a), Err(b)) => Err(if reaction(&a) && !reaction(&b) { b } else { a }),
    }
}
