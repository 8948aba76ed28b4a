use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{Expr, Var};

/// Heap-free relational fact.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PureAtom {
    /// Holds when the expression is true in both states.
    Expr(Expr),
    Implies(Box<PureAtom>, Box<PureAtom>),
    /// The attacker knows the value whenever the level is visible.
    Sec(Expr, Expr),
    /// The level is visible and the value differs between the two states.
    Insec(Expr, Expr),
}

impl PureAtom {
    pub fn is_relational(&self) -> bool {
        match self {
            PureAtom::Expr(_) => false,
            PureAtom::Sec(..) | PureAtom::Insec(..) => true,
            PureAtom::Implies(a, b) => a.is_relational() || b.is_relational(),
        }
    }

    pub fn is_insec(&self) -> bool {
        matches!(self, PureAtom::Insec(..))
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            PureAtom::Expr(e) => e.collect_vars(out),
            PureAtom::Implies(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            PureAtom::Sec(e, l) | PureAtom::Insec(e, l) => {
                e.collect_vars(out);
                l.collect_vars(out);
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> PureAtom {
        match self {
            PureAtom::Expr(e) => PureAtom::Expr(f(e)),
            PureAtom::Implies(a, b) => PureAtom::Implies(Box::new(a.map_exprs(f)), Box::new(b.map_exprs(f))),
            PureAtom::Sec(e, l) => PureAtom::Sec(f(e), f(l)),
            PureAtom::Insec(e, l) => PureAtom::Insec(f(e), f(l)),
        }
    }

    pub fn subst_map(&self, m: &BTreeMap<Var, Expr>) -> PureAtom {
        self.map_exprs(&|e| e.subst_map(m))
    }
}

impl fmt::Display for PureAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PureAtom::Expr(e) => write!(f, "{e}"),
            PureAtom::Implies(a, b) => write!(f, "({a} ==> {b})"),
            PureAtom::Sec(e, l) => write!(f, "{e} :: {l}"),
            PureAtom::Insec(e, l) => write!(f, "{e} :: ~{l}"),
        }
    }
}

impl fmt::Debug for PureAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpatialAtom {
    PointsTo(Expr, Expr),
    Invalid(Expr),
}

impl SpatialAtom {
    pub fn addr(&self) -> &Expr {
        match self {
            SpatialAtom::PointsTo(a, _) | SpatialAtom::Invalid(a) => a,
        }
    }

    pub fn same_polarity(&self, other: &SpatialAtom) -> bool {
        matches!(
            (self, other),
            (SpatialAtom::PointsTo(..), SpatialAtom::PointsTo(..)) | (SpatialAtom::Invalid(_), SpatialAtom::Invalid(_))
        )
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            SpatialAtom::PointsTo(a, v) => {
                a.collect_vars(out);
                v.collect_vars(out);
            }
            SpatialAtom::Invalid(a) => a.collect_vars(out),
        }
    }

    pub fn map_exprs(&self, f: &dyn Fn(&Expr) -> Expr) -> SpatialAtom {
        match self {
            SpatialAtom::PointsTo(a, v) => SpatialAtom::PointsTo(f(a), f(v)),
            SpatialAtom::Invalid(a) => SpatialAtom::Invalid(f(a)),
        }
    }

    pub fn subst_map(&self, m: &BTreeMap<Var, Expr>) -> SpatialAtom {
        self.map_exprs(&|e| e.subst_map(m))
    }
}

impl fmt::Display for SpatialAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialAtom::PointsTo(a, v) => write!(f, "{a} |-> {v}"),
            SpatialAtom::Invalid(a) => write!(f, "{a} |-/->"),
        }
    }
}

impl fmt::Debug for SpatialAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Relational assertion, interpreted over pairs of states.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelAssertion {
    Emp,
    Pure(PureAtom),
    PointsTo(Expr, Expr),
    Invalid(Expr),
    Star(Box<RelAssertion>, Box<RelAssertion>),
    Exists(Var, Box<RelAssertion>),
    Implies(Box<RelAssertion>, Box<RelAssertion>),
    False,
}

impl RelAssertion {
    pub fn star(a: RelAssertion, b: RelAssertion) -> RelAssertion {
        match (a, b) {
            (RelAssertion::Emp, b) => b,
            (a, RelAssertion::Emp) => a,
            (a, b) => RelAssertion::Star(Box::new(a), Box::new(b)),
        }
    }

    /// Star of all parts; `emp` for none.
    pub fn star_all(parts: impl IntoIterator<Item = RelAssertion>) -> RelAssertion {
        let parts: Vec<_> = parts.into_iter().collect();
        parts
            .into_iter()
            .rev()
            .fold(RelAssertion::Emp, |acc, p| RelAssertion::star(p, acc))
    }

    pub fn exists(vars: impl IntoIterator<Item = Var>, body: RelAssertion) -> RelAssertion {
        let vars: Vec<_> = vars.into_iter().collect();
        vars.into_iter()
            .rev()
            .fold(body, |acc, v| RelAssertion::Exists(v, Box::new(acc)))
    }

    pub fn pure_expr(e: Expr) -> RelAssertion {
        RelAssertion::Pure(PureAtom::Expr(e))
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Var>) {
        match self {
            RelAssertion::Emp | RelAssertion::False => {}
            RelAssertion::Pure(p) => p.collect_vars(out),
            RelAssertion::PointsTo(a, v) => {
                a.collect_vars(out);
                v.collect_vars(out);
            }
            RelAssertion::Invalid(a) => a.collect_vars(out),
            RelAssertion::Star(a, b) | RelAssertion::Implies(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            RelAssertion::Exists(x, body) => {
                let mut inner = body.free_vars();
                inner.remove(x);
                out.extend(inner);
            }
        }
    }
}

impl fmt::Display for RelAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelAssertion::Emp => f.write_str("emp"),
            RelAssertion::False => f.write_str("false"),
            RelAssertion::Pure(p) => write!(f, "{p}"),
            RelAssertion::PointsTo(a, v) => write!(f, "{a} |-> {v}"),
            RelAssertion::Invalid(a) => write!(f, "{a} |-/->"),
            RelAssertion::Star(a, b) => write!(f, "{a} * {b}"),
            RelAssertion::Exists(x, body) => write!(f, "exists {x}. {body}"),
            RelAssertion::Implies(a, b) => write!(f, "({a} ==> {b})"),
        }
    }
}

impl fmt::Debug for RelAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}
