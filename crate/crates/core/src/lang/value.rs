use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// A machine integer. Interpreted as datum, truth value (nonzero is true)
/// or heap address depending on context.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
pub struct Value(pub u64);

impl Value {
    pub const FALSE: Value = Value(0);
    pub const TRUE: Value = Value(1);

    pub fn from_bool(b: bool) -> Value {
        if b {
            Value::TRUE
        } else {
            Value::FALSE
        }
    }

    pub fn is_true(self) -> bool {
        self.0 != 0
    }

    /// Heap addresses are strictly positive.
    pub fn is_address(self) -> bool {
        self.0 != 0
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bounded value universe: unsigned integers of `bits` width with wraparound.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct ValueDomain {
    bits: u32,
}

impl ValueDomain {
    pub fn new(bits: u32) -> ValueDomain {
        assert!((1..=64).contains(&bits), "value width must be within 1..=64 bits");
        ValueDomain { bits }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn mask(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }

    pub fn wrap(&self, raw: u64) -> Value {
        Value(raw & self.mask())
    }

    /// Number of values, saturating at `u64::MAX` for the 64-bit domain.
    pub fn size(&self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            1u64 << self.bits
        }
    }

    /// All values in ascending order. Only sensible for small widths.
    pub fn values(&self) -> impl Iterator<Item = Value> + Clone {
        (0..=self.mask()).map(Value)
    }

    /// Candidate heap addresses (every nonzero value) in ascending order.
    pub fn addresses(&self) -> impl Iterator<Item = Value> + Clone {
        (1..=self.mask()).map(Value)
    }
}

impl Default for ValueDomain {
    fn default() -> Self {
        ValueDomain::new(4)
    }
}

/// Variable name. Program variables are plain identifiers; logical
/// variables introduced by the analysis start with `$`; variables of an
/// inlined callee frame contain a `.` and are invisible to the caller.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Var {
        Var(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_logical(&self) -> bool {
        self.0.starts_with('$')
    }

    pub fn is_hidden(&self) -> bool {
        !self.is_logical() && self.0.contains('.')
    }

    pub fn is_program(&self) -> bool {
        !self.is_logical() && !self.is_hidden()
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
