//! Executable dispenser behavior: state machine, virtual clock, per-operation
//! delays and the twin runtime that ties them to an instance model.

pub mod clock;
pub mod delay;
mod machine;
mod runtime;
mod schedule;

pub use clock::{default_epoch, VirtualClock, WallPacer, DEFAULT_ACCELERATION};
pub use delay::{ops, synchronize_from_logs, DelayError, DelayProfile, ExecutionRecord, OpDelay};
pub use machine::{BehaviorSpec, EntryAction, Guard, SpecError, State, Transition};
pub use runtime::{
    Availability, BehaviorError, DispenseResult, Event, RuntimeConfig, TransitionOutcome,
    TwinRuntime,
};
pub use schedule::{intake_schedule, IntakeRef};
