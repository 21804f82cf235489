//! The halving protocol for product distributions.
//!
//! Each level works on a ground set `x` that both parties know, with the
//! invariant that the inputs do not intersect outside `x`. A level either
//! declares an answer or agrees on `y ⊆ x` with `|y| ≤ |x|/2`. Once `x` is
//! small, Alice sends `a ∩ x` and Bob answers exactly.
//!
//! Within a level, the rectangle schedule is computed up front by both
//! parties, and each party sends the index of its first "yes" step. The
//! smaller index is where the one-bit-per-step protocol would have
//! stopped, so the outcome is identical while the cost is logarithmic in
//! the schedule length.

mod engine;
mod schedule;
mod transcript;

pub use engine::{
    Alice, Answer, Bob, Level, LevelExit, LevelRecord, Player, Protocol, ProtocolParams,
    RunOutcome, Scripted, SequentialResult, SubOutcome,
};
pub use schedule::{
    build_schedule, is_base_case, t_cap, Schedule, ScheduleStep, StopReason, SAMPLED_RETRIES,
};
pub use transcript::{Message, Side, Transcript};
