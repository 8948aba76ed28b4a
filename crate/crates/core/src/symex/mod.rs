//! Symbolic execution producing under-approximate relational judgements.

mod exec;
mod status;
mod trace;

pub use exec::{
    analyze_function, execute, initial_state, Bounds, Callees, Diagnostic, FunctionRun, NoCallees, Options, Outcome,
};
pub use status::{Judgement, PostAssertion, Status};
pub use trace::{backprop, FrameClash, Trace, TraceElem};
