//! Direct evaluation of relational assertions on a pair of concrete states.

use crate::lang::{Expr, Lattice, SecLevel, Value, ValueDomain};
use crate::semantics::{Cell, Heap, Store};

use super::atoms::{PureAtom, RelAssertion};

/// Everything needed to interpret assertions: the lattice, the attacker's
/// level and the value domain.
#[derive(Clone, Debug)]
pub struct Setting {
    pub lattice: Lattice,
    pub attacker: SecLevel,
    pub domain: ValueDomain,
}

impl Setting {
    pub fn new(lattice: Lattice, attacker: SecLevel, domain: ValueDomain) -> Setting {
        Setting {
            lattice,
            attacker,
            domain,
        }
    }

    /// Two-point lattice, `low` attacker.
    pub fn two_point(bits: u32) -> Setting {
        let lattice = Lattice::two_point();
        let attacker = lattice.low();
        Setting::new(lattice, attacker, ValueDomain::new(bits))
    }

    pub fn with_domain(&self, domain: ValueDomain) -> Setting {
        Setting {
            domain,
            ..self.clone()
        }
    }

    pub fn visible(&self, level: Value) -> bool {
        self.lattice.leq_values(level, self.attacker.as_value())
    }

    fn eval(&self, e: &Expr, s: &Store) -> Value {
        e.eval(s, &self.domain).unwrap_or_default()
    }
}

pub(crate) fn pure_holds(p: &PureAtom, s: &Store, s2: &Store, set: &Setting) -> bool {
    match p {
        PureAtom::Expr(e) => set.eval(e, s).is_true() && set.eval(e, s2).is_true(),
        PureAtom::Implies(a, b) => !pure_holds(a, s, s2, set) || pure_holds(b, s, s2, set),
        PureAtom::Sec(e, l) => {
            let (l1, l2) = (set.eval(l, s), set.eval(l, s2));
            l1 == l2 && (!set.visible(l1) || set.eval(e, s) == set.eval(e, s2))
        }
        PureAtom::Insec(e, l) => {
            let (l1, l2) = (set.eval(l, s), set.eval(l, s2));
            l1 == l2 && set.visible(l1) && set.eval(e, s) != set.eval(e, s2)
        }
    }
}

fn singleton(h: &Heap, a: Value, c: Cell) -> bool {
    h.len() == 1 && h.get(&a) == Some(&c) && a.is_address()
}

/// All ways to split a heap into two disjoint parts.
fn splits(h: &Heap) -> Vec<(Heap, Heap)> {
    let cells: Vec<_> = h.iter().map(|(a, c)| (*a, *c)).collect();
    let n = cells.len();
    (0u64..(1u64 << n))
        .map(|mask| {
            let mut l = Heap::new();
            let mut r = Heap::new();
            for (i, (a, c)) in cells.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    l.insert(*a, *c);
                } else {
                    r.insert(*a, *c);
                }
            }
            (l, r)
        })
        .collect()
}

/// Whether `(s, h) (s2, h2)` satisfies `p` for the attacker of `set`.
pub fn holds_pair(p: &RelAssertion, (s, h): (&Store, &Heap), (s2, h2): (&Store, &Heap), set: &Setting) -> bool {
    match p {
        RelAssertion::Emp => h.is_empty() && h2.is_empty(),
        RelAssertion::False => false,
        RelAssertion::Pure(a) => h.is_empty() && h2.is_empty() && pure_holds(a, s, s2, set),
        RelAssertion::PointsTo(a, v) => {
            singleton(h, set.eval(a, s), Cell::Val(set.eval(v, s)))
                && singleton(h2, set.eval(a, s2), Cell::Val(set.eval(v, s2)))
        }
        RelAssertion::Invalid(a) => {
            singleton(h, set.eval(a, s), Cell::Invalid) && singleton(h2, set.eval(a, s2), Cell::Invalid)
        }
        RelAssertion::Star(a, b) => {
            let right_splits = splits(h2);
            splits(h).iter().any(|(h1, hr)| {
                right_splits.iter().any(|(h21, h2r)| {
                    holds_pair(a, (s, h1), (s2, h21), set) && holds_pair(b, (s, hr), (s2, h2r), set)
                })
            })
        }
        RelAssertion::Exists(x, body) => set.domain.values().any(|v| {
            let mut sx = s.clone();
            sx.set(x.clone(), v);
            set.domain.values().any(|v2| {
                let mut s2x = s2.clone();
                s2x.set(x.clone(), v2);
                holds_pair(body, (&sx, h), (&s2x, h2), set)
            })
        }),
        RelAssertion::Implies(a, b) => !holds_pair(a, (s, h), (s2, h2), set) || holds_pair(b, (s, h), (s2, h2), set),
    }
}
