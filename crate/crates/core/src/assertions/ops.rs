//! Decision procedures on symbolic states: satisfiability (relational and
//! unary), low concretisation, entailment and bi-abduction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{BinOp, Expr, Var};
use crate::semantics::{Cell, Heap, Store};

use super::atoms::{PureAtom, RelAssertion, SpatialAtom};
use super::holds::Setting;
use super::solver::{CExpr, Enumeration, Mode, Problem, SatResult};
use super::state::{SymState, VarGen};

/// Which satisfiability encoding the analysis uses.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize, Hash)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    /// Pairs of states, every atom checked relationally.
    Relational,
    /// Single states; attacker-visible values are concretised and
    /// insecurity is decided by two unary queries.
    Unary,
}

impl Engine {
    pub fn mode(self) -> Mode {
        match self {
            Engine::Relational => Mode::Relational,
            Engine::Unary => Mode::Unary,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Engine::Relational => "relational",
            Engine::Unary => "unary",
        }
    }
}

impl std::str::FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relational" => Ok(Engine::Relational),
            "unary" => Ok(Engine::Unary),
            _ => Err(format!("unknown engine `{s}` (expected relational or unary)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SatError {
    #[error("enumeration cap reached; the value domain is too large for this query")]
    CapHit,
    #[error("implication between spatial assertions is not supported")]
    Unsupported,
}

/// A pair of concrete states.
pub type Witness = ((Store, Heap), (Store, Heap));

/// Put an assertion into normal form. Bound variables are renamed apart.
pub fn normalize(p: &RelAssertion) -> Result<Option<SymState>, SatError> {
    let mut gen = VarGen::new();
    let mut st = SymState::emp();
    let used = p.free_vars();
    if collect(p, &mut st, &mut gen, &used, &BTreeMap::new())? {
        Ok(Some(st))
    } else {
        Ok(None)
    }
}

fn pure_of(p: &RelAssertion, ren: &BTreeMap<Var, Expr>) -> Option<PureAtom> {
    match p {
        RelAssertion::Pure(a) => Some(a.subst_map(ren)),
        RelAssertion::Implies(a, b) => Some(PureAtom::Implies(Box::new(pure_of(a, ren)?), Box::new(pure_of(b, ren)?))),
        RelAssertion::False => Some(PureAtom::Expr(Expr::Const(0))),
        _ => None,
    }
}

/// Returns `false` when the assertion is `false`.
fn collect(
    p: &RelAssertion,
    st: &mut SymState,
    gen: &mut VarGen,
    used: &BTreeSet<Var>,
    ren: &BTreeMap<Var, Expr>,
) -> Result<bool, SatError> {
    match p {
        RelAssertion::Emp => Ok(true),
        RelAssertion::False => Ok(false),
        RelAssertion::Pure(a) => {
            st.add_pure(a.subst_map(ren));
            Ok(true)
        }
        RelAssertion::PointsTo(a, v) => {
            st.spatial.push(SpatialAtom::PointsTo(a.subst_map(ren), v.subst_map(ren)));
            Ok(true)
        }
        RelAssertion::Invalid(a) => {
            st.spatial.push(SpatialAtom::Invalid(a.subst_map(ren)));
            Ok(true)
        }
        RelAssertion::Star(a, b) => Ok(collect(a, st, gen, used, ren)? && collect(b, st, gen, used, ren)?),
        RelAssertion::Exists(x, body) => {
            let mut fresh = gen.fresh(x.as_str());
            while used.contains(&fresh) {
                fresh = gen.fresh(x.as_str());
            }
            st.exists.insert(fresh.clone());
            let mut ren2 = ren.clone();
            ren2.insert(x.clone(), Expr::Var(fresh));
            collect(body, st, gen, used, &ren2)
        }
        RelAssertion::Implies(..) => match pure_of(p, ren) {
            Some(a) => {
                st.add_pure(a);
                Ok(true)
            }
            None => Err(SatError::Unsupported),
        },
    }
}

fn witness_of(m: super::solver::Model) -> Witness {
    let [s0, s1] = m.stores;
    let [h0, h1] = m.heaps;
    ((s0, h0), (s1, h1))
}

/// A pair of states satisfying `p`, if one exists in the bounded domain.
pub fn sat_rel(p: &RelAssertion, set: &Setting) -> Result<Option<Witness>, SatError> {
    let Some(st) = normalize(p)? else {
        return Ok(None);
    };
    match Problem::of_state(set, Mode::Relational, &st).solve() {
        SatResult::Sat(m) => Ok(Some(witness_of(m))),
        SatResult::Unsat => Ok(None),
        SatResult::Unknown => Err(SatError::CapHit),
    }
}

/// Satisfiability of a state under the given encoding.
pub fn check_sat(st: &SymState, set: &Setting, mode: Mode) -> SatResult {
    Problem::of_state(set, mode, st).solve()
}

/// Satisfiability as decided by an analysis engine. The unary engine
/// handles at most one `insec` atom by two unary queries and falls back
/// to the relational encoding otherwise.
pub fn check_state(st: &SymState, set: &Setting, engine: Engine) -> SatResult {
    if engine == Engine::Relational {
        return check_sat(st, set, Mode::Relational);
    }
    let insecs: Vec<_> = st.pure.iter().filter(|a| a.is_insec()).collect();
    let other_relational = st.pure.iter().any(|a| a.is_relational() && !a.is_insec());
    match (insecs.as_slice(), other_relational) {
        ([], false) => check_sat(st, set, Mode::Unary),
        ([PureAtom::Insec(e, l)], false) => {
            let mut rest = st.clone();
            rest.pure.retain(|a| !a.is_insec());
            match l.eval_closed(&set.domain) {
                Some(lv) if !set.visible(lv) => SatResult::Unsat,
                Some(_) => insec_unary(&rest, e, set),
                None => check_sat(st, set, Mode::Relational),
            }
        }
        _ => check_sat(st, set, Mode::Relational),
    }
}

/// Two unary models of `st` that disagree on `e`.
fn insec_unary(st: &SymState, e: &Expr, set: &Setting) -> SatResult {
    let base = Problem::of_state(set, Mode::Unary, st);
    let m1 = match base.solve() {
        SatResult::Sat(m) => m,
        other => return other,
    };
    let k = st.term(e).eval(&m1.stores[0], &set.domain).unwrap_or_default();
    let mut differ = base.clone();
    differ.add_pure(&PureAtom::Expr(Expr::ne(st.term(e), Expr::Const(k.0))));
    match differ.solve() {
        SatResult::Sat(m2) => {
            let [s0, _] = m1.stores;
            let [h0, _] = m1.heaps;
            let [s1, _] = m2.stores;
            let [h1, _] = m2.heaps;
            SatResult::Sat(super::solver::Model {
                stores: [s0, s1],
                heaps: [h0, h1],
            })
        }
        other => other,
    }
}

/// Insecurity of a boolean over heap-free single states: both `b` and
/// its negation are satisfiable.
pub fn sat_insec_unary(b: &Expr, set: &Setting) -> bool {
    let st = SymState::emp();
    let pos = st.clone().with_pure(PureAtom::Expr(b.clone().truth()));
    let neg = st.with_pure(PureAtom::Expr(b.clone().truth().negate()));
    check_sat(&pos, set, Mode::Unary).is_sat() && check_sat(&neg, set, Mode::Unary).is_sat()
}

/// Negation of "`e` holds in both states" (just `!e` in unary mode).
fn not_both(e: Expr, mode: Mode) -> PureAtom {
    match mode {
        Mode::Unary => PureAtom::Expr(e.negate()),
        Mode::Relational => PureAtom::Implies(Box::new(PureAtom::Expr(e)), Box::new(PureAtom::Expr(Expr::Const(0)))),
    }
}

/// Whether `a == b` in every model of `st`.
pub fn provably_equal(st: &SymState, a: &Expr, b: &Expr, set: &Setting, mode: Mode) -> bool {
    if a == b {
        return true;
    }
    let mut p = Problem::of_state(set, mode, st);
    p.add_pure(&not_both(Expr::eq(a.clone(), b.clone()), mode));
    p.solve().is_unsat()
}

/// Fix an attacker-known expression to the least constant consistent with
/// the state. `None` when the state is unsatisfiable.
pub fn concretise_low(e: &Expr, st: &SymState, set: &Setting, mode: Mode) -> Option<SymState> {
    let base = Problem::of_state(set, mode, st);
    let m = base.solve().model()?;
    let t = st.term(e);
    let k0 = t.eval(&m.stores[0], &set.domain).unwrap_or_default();
    let mut other = base.clone();
    other.add_pure(&not_both(Expr::eq(t.clone(), Expr::Const(k0.0)), mode));
    if other.solve().is_unsat() {
        return Some(st.clone());
    }
    for k in set.domain.values() {
        let atom = PureAtom::Expr(Expr::eq(t.clone(), Expr::Const(k.0)));
        let mut p = base.clone();
        p.add_pure(&atom);
        if p.solve().is_sat() {
            return Some(st.clone().with_pure(atom));
        }
    }
    None
}

/// Semantic entailment `p |= q` over the bounded domain: every pair of
/// states satisfying `p` satisfies `q` with exactly the same heaps.
pub fn entails(p: &SymState, q: &SymState, set: &Setting) -> Result<bool, SatError> {
    let qfree = q.free_vars();
    // Without relational atoms the two copies are independent, so one suffices.
    let relational = p.pure.iter().chain(&q.pure).any(PureAtom::is_relational);
    let mode = if relational { Mode::Relational } else { Mode::Unary };
    let sides = if relational { 2 } else { 1 };
    let mut prob = Problem::of_state(set, mode, p);
    for v in &qfree {
        prob.declare(v);
    }
    let mut holds = true;
    let mut failed = false;
    let en = prob.for_each_model(&mut |m| {
        let mut qp = Problem::of_state(set, mode, q);
        for v in &qfree {
            for side in 0..sides {
                qp.fix(v, side, m.stores[side].get(v));
            }
        }
        for side in 0..sides {
            if !match_heap(&mut qp, side, &m.heaps[side]) {
                holds = false;
                return false;
            }
        }
        match qp.solve() {
            SatResult::Sat(_) => true,
            SatResult::Unsat => {
                holds = false;
                false
            }
            SatResult::Unknown => {
                failed = true;
                false
            }
        }
    });
    if failed || en == Enumeration::CapHit {
        return Err(SatError::CapHit);
    }
    Ok(holds)
}

/// Constrain the problem's cells on `side` to be exactly `heap`.
fn match_heap(qp: &mut Problem, side: usize, heap: &Heap) -> bool {
    if qp.spatial().len() != heap.len() {
        return false;
    }
    for j in 0..qp.spatial().len() {
        let Some((a, v)) = qp.cell(j, side).cloned() else {
            return false;
        };
        let mut options = CExpr::K(0);
        for (addr, cell) in heap {
            let here = CExpr::bin(BinOp::Eq, a.clone(), CExpr::K(addr.0));
            let opt = match (cell, &v) {
                (Cell::Val(cv), Some(v)) => CExpr::bin(BinOp::And, here, CExpr::bin(BinOp::Eq, v.clone(), CExpr::K(cv.0))),
                (Cell::Invalid, None) => here,
                _ => continue,
            };
            options = CExpr::bin(BinOp::Or, options, opt);
        }
        qp.add_raw(options);
    }
    true
}

/// Result of solving `need * ?frame <= state * ?anti_frame`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Biabduction {
    /// Held atoms not consumed by the footprint.
    pub frame: Vec<SpatialAtom>,
    /// Missing atoms to add to the presumption.
    pub anti_frame: Vec<SpatialAtom>,
    /// The held atom the footprint was matched against.
    pub matched: Option<SpatialAtom>,
    /// Equalities between footprint and matched atom.
    pub equalities: Vec<PureAtom>,
}

/// Match a one-cell footprint against the spatial part of `st`. Returns
/// `None` when the state owns the address with the opposite polarity.
pub fn biabduce(need: &SpatialAtom, st: &SymState, set: &Setting, mode: Mode) -> Option<Biabduction> {
    let addr = st.term(need.addr());
    for (j, held) in st.spatial.iter().enumerate() {
        let haddr = held.addr();
        if !provably_equal(st, &addr, haddr, set, mode) {
            continue;
        }
        if !need.same_polarity(held) {
            return None;
        }
        let mut equalities = Vec::new();
        if &addr != haddr {
            equalities.push(PureAtom::Expr(Expr::eq(addr.clone(), haddr.clone())));
        }
        if let (SpatialAtom::PointsTo(_, nv), SpatialAtom::PointsTo(_, hv)) = (need, held) {
            let nv = st.term(nv);
            if &nv != hv {
                equalities.push(PureAtom::Expr(Expr::eq(nv, hv.clone())));
            }
        }
        let mut frame = st.spatial.clone();
        frame.remove(j);
        return Some(Biabduction {
            frame,
            anti_frame: Vec::new(),
            matched: Some(held.clone()),
            equalities,
        });
    }
    Some(Biabduction {
        frame: st.spatial.clone(),
        anti_frame: vec![need.map_exprs(&|e| st.term(e))],
        matched: None,
        equalities: Vec::new(),
    })
}
