use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{Expr, Var};

use super::atoms::{PureAtom, RelAssertion, SpatialAtom};

/// Normal form `exists X. (x1 == t1 * ...) * pure * spatial`.
///
/// `stack` binds program variables to terms over logical variables. The
/// stack is kept apart from the pure part so assignments never need fresh
/// variables: they only rebind one entry.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SymState {
    pub stack: BTreeMap<Var, Expr>,
    pub exists: BTreeSet<Var>,
    pub pure: Vec<PureAtom>,
    pub spatial: Vec<SpatialAtom>,
}

impl SymState {
    pub fn emp() -> SymState {
        SymState::default()
    }

    pub fn from_parts(pure: Vec<PureAtom>, spatial: Vec<SpatialAtom>) -> SymState {
        SymState {
            pure,
            spatial,
            ..SymState::default()
        }
    }

    /// Conjoin a pure atom, skipping duplicates.
    pub fn add_pure(&mut self, a: PureAtom) {
        if let PureAtom::Expr(Expr::Const(n)) = &a {
            if *n == 1 {
                return;
            }
        }
        if !self.pure.contains(&a) {
            self.pure.push(a);
        }
    }

    pub fn with_pure(mut self, a: PureAtom) -> SymState {
        self.add_pure(a);
        self
    }

    pub fn with_spatial(mut self, a: SpatialAtom) -> SymState {
        self.spatial.push(a);
        self
    }

    /// Separating conjunction; existentials must already be disjoint.
    pub fn star(mut self, other: &SymState) -> SymState {
        for (x, t) in &other.stack {
            match self.stack.get(x) {
                Some(t0) if t0 != t => self.add_pure(PureAtom::Expr(Expr::eq(t0.clone(), t.clone()))),
                Some(_) => {}
                None => {
                    self.stack.insert(x.clone(), t.clone());
                }
            }
        }
        self.exists.extend(other.exists.iter().cloned());
        for p in &other.pure {
            self.add_pure(p.clone());
        }
        self.spatial.extend(other.spatial.iter().cloned());
        self
    }

    /// Term denoted by `e` once program variables are read through the stack.
    pub fn term(&self, e: &Expr) -> Expr {
        e.subst_map(&self.stack)
    }

    pub fn has_insec(&self) -> bool {
        self.pure.iter().any(PureAtom::is_insec)
    }

    pub fn has_relational(&self) -> bool {
        self.pure.iter().any(PureAtom::is_relational)
    }

    /// Every variable mentioned, bound or not.
    pub fn all_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        for (x, t) in &self.stack {
            out.insert(x.clone());
            t.collect_vars(&mut out);
        }
        out.extend(self.exists.iter().cloned());
        for p in &self.pure {
            p.collect_vars(&mut out);
        }
        for s in &self.spatial {
            s.collect_vars(&mut out);
        }
        out
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = self.all_vars();
        for x in &self.exists {
            out.remove(x);
        }
        out
    }

    /// Stack bindings as pure equalities.
    pub fn stack_atoms(&self) -> impl Iterator<Item = PureAtom> + '_ {
        self.stack
            .iter()
            .map(|(x, t)| PureAtom::Expr(Expr::eq(Expr::Var(x.clone()), t.clone())))
    }

    pub fn to_assertion(&self) -> RelAssertion {
        let parts = self
            .stack_atoms()
            .chain(self.pure.iter().cloned())
            .map(RelAssertion::Pure)
            .chain(self.spatial.iter().map(|a| match a {
                SpatialAtom::PointsTo(p, v) => RelAssertion::PointsTo(p.clone(), v.clone()),
                SpatialAtom::Invalid(p) => RelAssertion::Invalid(p.clone()),
            }));
        RelAssertion::exists(self.exists.iter().cloned(), RelAssertion::star_all(parts))
    }

    /// Apply a variable substitution everywhere (stack keys are kept).
    pub fn subst_map(&self, m: &BTreeMap<Var, Expr>) -> SymState {
        SymState {
            stack: self.stack.iter().map(|(x, t)| (x.clone(), t.subst_map(m))).collect(),
            exists: self.exists.clone(),
            pure: self.pure.iter().map(|p| p.subst_map(m)).collect(),
            spatial: self.spatial.iter().map(|s| s.subst_map(m)).collect(),
        }
    }
}

impl fmt::Display for SymState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_assertion())
    }
}

impl fmt::Debug for SymState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Source of globally fresh logical variables.
#[derive(Clone, Debug, Default)]
pub struct VarGen {
    next: usize,
}

impl VarGen {
    pub fn new() -> VarGen {
        VarGen::default()
    }

    /// A generator whose variables cannot collide with any in `vars`.
    pub fn avoiding<'a>(vars: impl IntoIterator<Item = &'a Var>) -> VarGen {
        let next = vars
            .into_iter()
            .filter(|v| v.is_logical())
            .filter_map(|v| v.as_str().rsplit('_').next()?.parse::<usize>().ok())
            .max()
            .unwrap_or(0);
        VarGen { next }
    }

    /// A fresh logical variable named after `hint`.
    pub fn fresh(&mut self, hint: &str) -> Var {
        self.next += 1;
        let base = base_name(hint);
        Var::new(&format!("${base}_{}", self.next))
    }
}

/// `$aqt_12` and `f.aqt` both have base name `aqt`.
pub fn base_name(name: &str) -> &str {
    let name = name.trim_start_matches('$');
    let name = name.rsplit('.').next().unwrap_or(name);
    match name.rfind('_') {
        Some(i) if i > 0 && name[i + 1..].chars().all(|c| c.is_ascii_digit()) && i + 1 < name.len() => &name[..i],
        _ => name,
    }
}
