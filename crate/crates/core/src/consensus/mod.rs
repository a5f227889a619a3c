//! PBFT-style agreement on block digests among a fixed validator set.

mod message;
mod state;

pub use message::{ConsensusMessage, Keyring, MsgKind, ValidatorId};
pub use state::{
    max_faulty, quorum_threshold, ConsensusError, ConsensusState, ConsensusStats, Phase, Step,
    MAX_VALIDATORS,
};
