//! Relational assertions, their semantics, and bounded decision procedures.

mod atoms;
mod holds;
mod ops;
pub mod solver;
mod state;

pub use atoms::{PureAtom, RelAssertion, SpatialAtom};
pub(crate) use holds::pure_holds;
pub use holds::{holds_pair, Setting};
pub use ops::{
    biabduce, check_sat, check_state, concretise_low, entails, normalize, provably_equal, sat_insec_unary, sat_rel,
    Biabduction, Engine, SatError, Witness,
};
pub use solver::{Enumeration, Mode, Model, Problem, SatResult};
pub use state::{base_name, SymState, VarGen};
