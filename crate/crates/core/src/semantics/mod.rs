//! Small-step operational semantics with event schedules.

mod machine;
mod state;

pub use machine::{run_bounded, Machine, RunResult};
pub use state::{Cell, Config, Event, Heap, Schedule, Store};
