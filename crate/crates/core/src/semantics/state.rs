use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{Cmd, Env, SecLevel, Value, Var};

/// Total store: variables without an explicit binding read as 0.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Store(BTreeMap<Var, Value>);

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn get(&self, x: &Var) -> Value {
        self.0.get(x).copied().unwrap_or_default()
    }

    pub fn set(&mut self, x: Var, v: Value) {
        self.0.insert(x, v);
    }

    pub fn with(mut self, x: &str, v: u64) -> Store {
        self.set(Var::new(x), Value(v));
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Value)> {
        self.0.iter()
    }

    /// The store restricted to `vars`, listing every one of them.
    pub fn project<'a>(&self, vars: impl IntoIterator<Item = &'a Var>) -> Vec<Value> {
        vars.into_iter().map(|v| self.get(v)).collect()
    }
}

impl FromIterator<(Var, Value)> for Store {
    fn from_iter<T: IntoIterator<Item = (Var, Value)>>(iter: T) -> Self {
        Store(iter.into_iter().collect())
    }
}

impl Env for Store {
    fn lookup(&self, v: &Var) -> Option<Value> {
        Some(self.get(v))
    }
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.0.iter()).finish()
    }
}

/// Heap cell: an owned value or the invalid marker.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Cell {
    Val(Value),
    Invalid,
}

/// Finite partial map from addresses to cells.
pub type Heap = BTreeMap<Value, Cell>;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Event {
    Tau,
    In(SecLevel, Value),
    Out(SecLevel, Value),
    Alloc(Value),
    /// Address of a successful load or store; recorded in constant-time mode.
    Access(Value),
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Tau => write!(f, "tau"),
            Event::In(l, v) => write!(f, "in({l}, {v})"),
            Event::Out(l, v) => write!(f, "out({l}, {v})"),
            Event::Alloc(v) => write!(f, "alloc({v})"),
            Event::Access(v) => write!(f, "access({v})"),
        }
    }
}

pub type Schedule = Vec<Event>;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Config {
    Run(Cmd, Store, Heap),
    Stop(Store, Heap),
    Abort(Store, Heap),
}

impl Config {
    pub fn store(&self) -> &Store {
        match self {
            Config::Run(_, s, _) | Config::Stop(s, _) | Config::Abort(s, _) => s,
        }
    }

    pub fn heap(&self) -> &Heap {
        match self {
            Config::Run(_, _, h) | Config::Stop(_, h) | Config::Abort(_, h) => h,
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Config::Run(..))
    }
}
