//! Core of the mobile GUI agent reinforcement-learning harness.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std`: the three-tag response protocol and its parser,
//! verifiable rewards, GRPO advantages/objective/update, the scripted GUI
//! simulator with its fixture suite, rollout grouping, and benchmark metrics.
//! File formats, PNG encoding, transports and the CLI live in the companion
//! `guirl` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod grpo;
pub mod metrics;
pub mod policies;
pub mod prompt;
pub mod protocol;
pub mod reward;
pub mod rollout;
pub mod sim;
pub mod synthetic;
pub mod toy;
pub mod trajectory;

pub use protocol::{parse_turn, serialize_action, Action, ActionKind, AgentTurn, Diagnostic};
pub use reward::{GroundTruthStep, RewardBreakdown};
pub use trajectory::Trajectory;
