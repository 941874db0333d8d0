//! Digital twins of smart medicine dispensers.
//!
//! The crate covers the whole pipeline: a device domain model with
//! constraints ([`model`]), JSON templates and instance generation
//! ([`factory`]), an executable dispenser state machine on a virtual clock
//! ([`behavior`]), the twin REST surface ([`api`]), a reference device
//! emulator ([`emulator`]), a random-testing harness ([`harness`]) and
//! trace-alignment fidelity metrics with exact statistical tests
//! ([`fidelity`]).

pub mod api;
pub mod behavior;
pub mod emulator;
pub mod factory;
pub mod fidelity;
pub mod harness;
pub mod instance;
pub mod model;
mod util;

pub use instance::{DeviceInstance, ObjectNode};
pub use model::{builtin_dispenser_schema, DeviceSchema};
