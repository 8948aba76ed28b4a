use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::value::Value;

/// An element of the security lattice, identified by its rank in the
/// owning [`Lattice`]. The name is carried for printing.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SecLevel {
    rank: u32,
    name: Arc<str>,
}

impl SecLevel {
    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn as_value(&self) -> Value {
        Value(u64::from(self.rank))
    }
}

impl fmt::Display for SecLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl fmt::Debug for SecLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatticeError {
    #[error("lattice must have at least two levels")]
    TooSmall,
    #[error("duplicate level name `{0}`")]
    Duplicate(String),
    #[error("order is not a partial order with a least and a greatest element")]
    NotBounded,
    #[error("unknown level `{0}`")]
    Unknown(String),
}

/// Finite security lattice. Element 0 is the least element (`low`), the
/// last element is the greatest (`high`).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Lattice {
    names: Vec<Arc<str>>,
    leq: Vec<Vec<bool>>,
}

impl Lattice {
    pub fn two_point() -> Lattice {
        Lattice::chain(&["low", "high"]).expect("two-point lattice is valid")
    }

    /// Totally ordered lattice, least element first.
    pub fn chain(names: &[&str]) -> Result<Lattice, LatticeError> {
        let n = names.len();
        let leq = (0..n).map(|i| (0..n).map(|j| i <= j).collect()).collect();
        Lattice::from_order(names, leq)
    }

    /// General finite partial order given by its `leq` matrix. The first
    /// name must be the least element and the last the greatest.
    pub fn from_order(names: &[&str], leq: Vec<Vec<bool>>) -> Result<Lattice, LatticeError> {
        let n = names.len();
        if n < 2 {
            return Err(LatticeError::TooSmall);
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(LatticeError::Duplicate((*a).to_string()));
            }
        }
        let ok_shape = leq.len() == n && leq.iter().all(|r| r.len() == n);
        if !ok_shape {
            return Err(LatticeError::NotBounded);
        }
        for i in 0..n {
            if !leq[i][i] || !leq[0][i] || !leq[i][n - 1] {
                return Err(LatticeError::NotBounded);
            }
            for j in 0..n {
                if i != j && leq[i][j] && leq[j][i] {
                    return Err(LatticeError::NotBounded);
                }
                for k in 0..n {
                    if leq[i][j] && leq[j][k] && !leq[i][k] {
                        return Err(LatticeError::NotBounded);
                    }
                }
            }
        }
        Ok(Lattice {
            names: names.iter().map(|s| Arc::from(*s)).collect(),
            leq,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn levels(&self) -> impl Iterator<Item = SecLevel> + '_ {
        (0..self.names.len()).map(move |i| self.at(i))
    }

    fn at(&self, i: usize) -> SecLevel {
        SecLevel {
            rank: i as u32,
            name: self.names[i].clone(),
        }
    }

    pub fn low(&self) -> SecLevel {
        self.at(0)
    }

    pub fn high(&self) -> SecLevel {
        self.at(self.names.len() - 1)
    }

    pub fn level(&self, name: &str) -> Result<SecLevel, LatticeError> {
        self.names
            .iter()
            .position(|n| &**n == name)
            .map(|i| self.at(i))
            .ok_or_else(|| LatticeError::Unknown(name.to_string()))
    }

    /// Interpret a runtime value as a level. Values outside the lattice are
    /// read as the greatest element.
    pub fn from_value(&self, v: Value) -> SecLevel {
        let i = usize::try_from(v.0).unwrap_or(usize::MAX);
        self.at(i.min(self.names.len() - 1))
    }

    pub fn leq(&self, a: &SecLevel, b: &SecLevel) -> bool {
        self.leq[a.rank as usize][b.rank as usize]
    }

    pub fn leq_values(&self, a: Value, b: Value) -> bool {
        self.leq(&self.from_value(a), &self.from_value(b))
    }
}

impl Default for Lattice {
    fn default() -> Self {
        Lattice::two_point()
    }
}

/// Partial-order decision on the default two-point lattice.
pub fn lattice_leq(lattice: &Lattice, l1: &SecLevel, l2: &SecLevel) -> bool {
    lattice.leq(l1, l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_order() {
        let l = Lattice::two_point();
        let (lo, hi) = (l.low(), l.high());
        assert!(lattice_leq(&l, &lo, &hi));
        assert!(lattice_leq(&l, &lo, &lo));
        assert!(lattice_leq(&l, &hi, &hi));
        assert!(!lattice_leq(&l, &hi, &lo));
    }

    fn assert_partial_order(l: &Lattice) {
        let all: Vec<_> = l.levels().collect();
        for a in &all {
            assert!(l.leq(a, a));
            assert!(l.leq(&l.low(), a));
            assert!(l.leq(a, &l.high()));
            for b in &all {
                if a != b {
                    assert!(!(l.leq(a, b) && l.leq(b, a)));
                }
                for c in &all {
                    if l.leq(a, b) && l.leq(b, c) {
                        assert!(l.leq(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn partial_order_laws_exhaustive() {
        assert_partial_order(&Lattice::two_point());
        assert_partial_order(&Lattice::chain(&["public", "internal", "secret"]).unwrap());
        // diamond: low < a, b < high with a, b incomparable
        let t = true;
        let f = false;
        let diamond = Lattice::from_order(
            &["low", "a", "b", "high"],
            vec![vec![t, t, t, t], vec![f, t, f, t], vec![f, f, t, t], vec![f, f, f, t]],
        )
        .unwrap();
        assert_partial_order(&diamond);
        let a = diamond.level("a").unwrap();
        let b = diamond.level("b").unwrap();
        assert!(!diamond.leq(&a, &b) && !diamond.leq(&b, &a));
    }

    #[test]
    fn rejects_bad_orders() {
        assert_eq!(Lattice::chain(&["only"]), Err(LatticeError::TooSmall));
        assert_eq!(
            Lattice::chain(&["a", "a"]),
            Err(LatticeError::Duplicate("a".into()))
        );
        let bad = Lattice::from_order(&["x", "y"], vec![vec![true, true], vec![true, true]]);
        assert_eq!(bad, Err(LatticeError::NotBounded));
    }

    #[test]
    fn out_of_range_values_read_as_top() {
        let l = Lattice::two_point();
        assert_eq!(l.from_value(Value(0)), l.low());
        assert_eq!(l.from_value(Value(7)), l.high());
    }
}
