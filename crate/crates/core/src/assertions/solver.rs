//! Bounded finite-domain constraint solver for symbolic states.
//!
//! Every variable gets one slot per side (two in relational mode, one in
//! unary mode). Pure atoms and spatial side conditions compile to integer
//! expressions over slots; a backtracking search with equality propagation
//! finds models.

use std::collections::{BTreeMap, HashMap};

use crate::lang::{BinOp, Expr, UnOp, Value, Var};
use crate::semantics::{Cell, Heap, Store};

use super::atoms::{PureAtom, SpatialAtom};
use super::holds::Setting;
use super::state::SymState;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    /// Pairs of states; all atoms interpreted relationally.
    Relational,
    /// Single states; `sec`/`insec` atoms are ignored (unary projection).
    Unary,
}

impl Mode {
    fn sides(self) -> usize {
        match self {
            Mode::Relational => 2,
            Mode::Unary => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum CExpr {
    K(u64),
    S(usize),
    Un(UnOp, Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    /// 1 when the level value is visible to the attacker.
    Visible(Box<CExpr>),
}

impl CExpr {
    pub(crate) fn bin(op: BinOp, a: CExpr, b: CExpr) -> CExpr {
        CExpr::Bin(op, Box::new(a), Box::new(b))
    }

    fn collect_slots(&self, out: &mut Vec<usize>) {
        match self {
            CExpr::K(_) => {}
            CExpr::S(i) => {
                if !out.contains(i) {
                    out.push(*i)
                }
            }
            CExpr::Un(_, a) | CExpr::Visible(a) => a.collect_slots(out),
            CExpr::Bin(_, a, b) => {
                a.collect_slots(out);
                b.collect_slots(out);
            }
        }
    }

    fn slots(&self) -> Vec<usize> {
        let mut v = Vec::new();
        self.collect_slots(&mut v);
        v
    }
}

/// A model: one store and heap per side (both sides equal in unary mode).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub stores: [Store; 2],
    pub heaps: [Heap; 2],
}

#[derive(Clone, Debug)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    /// The search budget ran out.
    Unknown,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }

    pub fn model(self) -> Option<Model> {
        match self {
            SatResult::Sat(m) => Some(m),
            _ => None,
        }
    }
}

/// Outcome of model enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Enumeration {
    Complete,
    /// The callback asked to stop.
    Stopped,
    /// The search budget ran out before every model was produced.
    CapHit,
}

pub const DEFAULT_NODE_CAP: u64 = 4_000_000;

/// Address and, for a points-to cell, contents.
type CompiledCell = (CExpr, Option<CExpr>);

/// A compiled constraint problem.
#[derive(Clone)]
pub struct Problem<'s> {
    set: &'s Setting,
    mode: Mode,
    slots: Vec<(Var, usize)>,
    index: HashMap<(Var, usize), usize>,
    cons: Vec<CExpr>,
    spatial: Vec<SpatialAtom>,
    /// Compiled `(addr, value)` per spatial atom and side.
    cells: Vec<[Option<CompiledCell>; 2]>,
    /// Set when a constant constraint is false.
    trivially_false: bool,
    pub node_cap: u64,
}

impl<'s> Problem<'s> {
    pub fn new(set: &'s Setting, mode: Mode) -> Problem<'s> {
        Problem {
            set,
            mode,
            slots: Vec::new(),
            index: HashMap::new(),
            cons: Vec::new(),
            spatial: Vec::new(),
            cells: Vec::new(),
            trivially_false: false,
            node_cap: DEFAULT_NODE_CAP,
        }
    }

    /// Problem for a symbolic state: stack equalities, pure atoms and the
    /// disjointness of the spatial part.
    pub fn of_state(set: &'s Setting, mode: Mode, st: &SymState) -> Problem<'s> {
        let mut p = Problem::new(set, mode);
        for v in st.all_vars() {
            p.declare(&v);
        }
        for a in st.stack_atoms() {
            p.add_pure(&a);
        }
        for a in &st.pure {
            p.add_pure(a);
        }
        for s in &st.spatial {
            p.add_spatial(s);
        }
        p
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Make sure `v` has slots, even if no constraint mentions it.
    pub fn declare(&mut self, v: &Var) {
        for side in 0..self.mode.sides() {
            self.slot(v, side);
        }
    }

    fn slot(&mut self, v: &Var, side: usize) -> usize {
        if let Some(i) = self.index.get(&(v.clone(), side)) {
            return *i;
        }
        let i = self.slots.len();
        self.slots.push((v.clone(), side));
        self.index.insert((v.clone(), side), i);
        i
    }

    pub(crate) fn compile(&mut self, e: &Expr, side: usize) -> CExpr {
        let dom = self.set.domain;
        match e {
            Expr::Const(n) => CExpr::K(dom.wrap(*n).0),
            Expr::Level(l) => CExpr::K(dom.wrap(l.as_value().0).0),
            Expr::Var(v) => CExpr::S(self.slot(v, side)),
            Expr::Unary(op, a) => match self.compile(a, side) {
                CExpr::K(k) => CExpr::K(op.apply(Value(k), &dom).0),
                a => CExpr::Un(*op, Box::new(a)),
            },
            Expr::Binary(op, a, b) => {
                let a = self.compile(a, side);
                let b = self.compile(b, side);
                fold(*op, a, b, &dom)
            }
        }
    }

    fn visible(&self, l: CExpr) -> CExpr {
        match l {
            CExpr::K(k) => CExpr::K(u64::from(self.set.visible(Value(k)))),
            l => CExpr::Visible(Box::new(l)),
        }
    }

    /// Truth of a pure atom as a single integer expression.
    pub(crate) fn compile_pure(&mut self, a: &PureAtom) -> CExpr {
        let dom = self.set.domain;
        match (a, self.mode) {
            (PureAtom::Expr(e), Mode::Unary) => truth(self.compile(e, 0)),
            (PureAtom::Expr(e), Mode::Relational) => {
                let l = truth(self.compile(e, 0));
                let r = truth(self.compile(e, 1));
                fold(BinOp::And, l, r, &dom)
            }
            (PureAtom::Implies(a, b), _) => {
                let a = self.compile_pure(a);
                let b = self.compile_pure(b);
                let na = fold_not(a, &dom);
                fold(BinOp::Or, na, b, &dom)
            }
            (PureAtom::Sec(..) | PureAtom::Insec(..), Mode::Unary) => CExpr::K(1),
            (PureAtom::Sec(e, l), Mode::Relational) => {
                let (l0, l1) = (self.compile(l, 0), self.compile(l, 1));
                let (e0, e1) = (self.compile(e, 0), self.compile(e, 1));
                let same_level = fold(BinOp::Eq, l0.clone(), l1, &dom);
                let vis = self.visible(l0);
                let agree = fold(BinOp::Eq, e0, e1, &dom);
                let guarded = fold(BinOp::Or, fold_not(vis, &dom), agree, &dom);
                fold(BinOp::And, same_level, guarded, &dom)
            }
            (PureAtom::Insec(e, l), Mode::Relational) => {
                let (l0, l1) = (self.compile(l, 0), self.compile(l, 1));
                let (e0, e1) = (self.compile(e, 0), self.compile(e, 1));
                let same_level = fold(BinOp::Eq, l0.clone(), l1, &dom);
                let vis = self.visible(l0);
                let differ = fold(BinOp::Ne, e0, e1, &dom);
                fold(BinOp::And, same_level, fold(BinOp::And, vis, differ, &dom), &dom)
            }
        }
    }

    pub fn add_pure(&mut self, a: &PureAtom) {
        let c = self.compile_pure(a);
        self.add_raw(c);
    }

    pub(crate) fn add_raw(&mut self, c: CExpr) {
        match c {
            CExpr::K(0) => self.trivially_false = true,
            CExpr::K(_) => {}
            CExpr::Bin(BinOp::And, a, b) => {
                self.add_raw(*a);
                self.add_raw(*b);
            }
            c => {
                if !self.cons.contains(&c) {
                    self.cons.push(c)
                }
            }
        }
    }

    /// Constrain `v` to `val` on one side.
    pub fn fix(&mut self, v: &Var, side: usize, val: Value) {
        let s = self.slot(v, side);
        self.add_raw(CExpr::bin(BinOp::Eq, CExpr::S(s), CExpr::K(val.0)));
    }

    /// Add a heap cell: its address is nonzero and distinct from every
    /// other cell on the same side.
    pub fn add_spatial(&mut self, s: &SpatialAtom) {
        let dom = self.set.domain;
        let mut cells = [None, None];
        for (side, cell) in cells.iter_mut().enumerate().take(self.mode.sides()) {
            let a = self.compile(s.addr(), side);
            let v = match s {
                SpatialAtom::PointsTo(_, v) => Some(self.compile(v, side)),
                SpatialAtom::Invalid(_) => None,
            };
            self.add_raw(fold(BinOp::Ne, a.clone(), CExpr::K(0), &dom));
            let others: Vec<CExpr> = self.cells.iter().filter_map(|o| o[side].as_ref().map(|(b, _)| b.clone())).collect();
            for b in others {
                let c = fold(BinOp::Ne, a.clone(), b, &dom);
                self.add_raw(c);
            }
            *cell = Some((a, v));
        }
        self.spatial.push(s.clone());
        self.cells.push(cells);
    }

    pub(crate) fn cell(&self, i: usize, side: usize) -> Option<&(CExpr, Option<CExpr>)> {
        self.cells.get(i).and_then(|c| c[side].as_ref())
    }

    pub fn spatial(&self) -> &[SpatialAtom] {
        &self.spatial
    }

    fn build_model(&self, assign: &[u64]) -> Model {
        let sides = self.mode.sides();
        let mut stores = [Store::new(), Store::new()];
        for (i, (v, side)) in self.slots.iter().enumerate() {
            stores[*side].set(v.clone(), Value(assign[i]));
        }
        if sides == 1 {
            stores[1] = stores[0].clone();
        }
        let full = vec![true; assign.len()];
        let mut heaps = [Heap::new(), Heap::new()];
        for cell in &self.cells {
            for side in 0..sides {
                if let Some((a, v)) = &cell[side] {
                    let a = eval(a, assign, &full, self.set).unwrap_or(0);
                    let c = match v {
                        Some(v) => Cell::Val(Value(eval(v, assign, &full, self.set).unwrap_or(0))),
                        None => Cell::Invalid,
                    };
                    heaps[side].insert(Value(a), c);
                }
            }
        }
        if sides == 1 {
            heaps[1] = heaps[0].clone();
        }
        Model { stores, heaps }
    }

    /// Find one model, solving independent groups of slots separately.
    pub fn solve(&self) -> SatResult {
        if self.trivially_false {
            return SatResult::Unsat;
        }
        let n = self.slots.len();
        let cons_slots: Vec<Vec<usize>> = self.cons.iter().map(CExpr::slots).collect();
        let mut uf: Vec<usize> = (0..n).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for s in &cons_slots {
            for w in s.windows(2) {
                let (a, b) = (find(&mut uf, w[0]), find(&mut uf, w[1]));
                if a != b {
                    uf[a] = b;
                }
            }
        }
        let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (ci, s) in cons_slots.iter().enumerate() {
            if let Some(&first) = s.first() {
                let r = find(&mut uf, first);
                groups.entry(r).or_default().1.push(ci);
            }
        }
        for i in 0..n {
            let r = find(&mut uf, i);
            if let Some(g) = groups.get_mut(&r) {
                g.0.push(i);
            }
        }
        let mut assign = vec![0u64; n];
        let mut budget = self.node_cap;
        for (slots, cons) in groups.values() {
            let mut search = Search::new(self, slots, cons, &cons_slots);
            search.budget = budget;
            let mut found = None;
            let res = search.run(&mut |a| {
                found = Some(a.to_vec());
                false
            });
            budget = search.budget;
            match (res, found) {
                (_, Some(a)) => {
                    for &s in slots {
                        assign[s] = a[s];
                    }
                }
                (Enumeration::CapHit, None) => return SatResult::Unknown,
                (_, None) => return SatResult::Unsat,
            }
        }
        SatResult::Sat(self.build_model(&assign))
    }

    /// Enumerate every model (over all declared slots) in lexicographic
    /// order of the search; `f` returns `false` to stop.
    pub fn for_each_model(&self, f: &mut dyn FnMut(&Model) -> bool) -> Enumeration {
        if self.trivially_false {
            return Enumeration::Complete;
        }
        let cons_slots: Vec<Vec<usize>> = self.cons.iter().map(CExpr::slots).collect();
        let all: Vec<usize> = (0..self.slots.len()).collect();
        let cons: Vec<usize> = (0..self.cons.len()).collect();
        let mut search = Search::new(self, &all, &cons, &cons_slots);
        search.budget = self.node_cap;
        search.run(&mut |a| f(&self.build_model(a)))
    }
}

/// `c` normalised to 0 or 1.
fn truth(c: CExpr) -> CExpr {
    match c {
        CExpr::K(k) => CExpr::K(u64::from(k != 0)),
        CExpr::Bin(op, ..) if op.is_boolean() => c,
        CExpr::Un(UnOp::Not, _) | CExpr::Visible(_) => c,
        c => CExpr::bin(BinOp::Ne, c, CExpr::K(0)),
    }
}

fn fold_not(c: CExpr, dom: &crate::lang::ValueDomain) -> CExpr {
    match c {
        CExpr::K(k) => CExpr::K(UnOp::Not.apply(Value(k), dom).0),
        c => CExpr::Un(UnOp::Not, Box::new(c)),
    }
}

fn fold(op: BinOp, a: CExpr, b: CExpr, dom: &crate::lang::ValueDomain) -> CExpr {
    match (op, &a, &b) {
        (_, CExpr::K(x), CExpr::K(y)) => CExpr::K(op.apply(Value(*x), Value(*y), dom).0),
        (BinOp::And, CExpr::K(0), _) | (BinOp::And, _, CExpr::K(0)) => CExpr::K(0),
        (BinOp::And, CExpr::K(_), _) => truth(b),
        (BinOp::And, _, CExpr::K(_)) => truth(a),
        (BinOp::Or, CExpr::K(k), _) | (BinOp::Or, _, CExpr::K(k)) if *k != 0 => CExpr::K(1),
        (BinOp::Or, CExpr::K(_), _) => truth(b),
        (BinOp::Or, _, CExpr::K(_)) => truth(a),
        (BinOp::Eq, _, _) if a == b => CExpr::K(1),
        _ => CExpr::bin(op, a, b),
    }
}

fn eval(e: &CExpr, a: &[u64], set: &[bool], st: &Setting) -> Option<u64> {
    let dom = &st.domain;
    match e {
        CExpr::K(k) => Some(*k),
        CExpr::S(i) => set[*i].then(|| a[*i]),
        CExpr::Un(op, x) => Some(op.apply(Value(eval(x, a, set, st)?), dom).0),
        CExpr::Visible(x) => Some(u64::from(st.visible(Value(eval(x, a, set, st)?)))),
        CExpr::Bin(BinOp::And, x, y) => {
            let l = eval(x, a, set, st);
            if l == Some(0) {
                return Some(0);
            }
            let r = eval(y, a, set, st);
            match (l, r) {
                (_, Some(0)) => Some(0),
                (Some(_), Some(_)) => Some(1),
                _ => None,
            }
        }
        CExpr::Bin(BinOp::Or, x, y) => {
            let l = eval(x, a, set, st);
            if matches!(l, Some(k) if k != 0) {
                return Some(1);
            }
            let r = eval(y, a, set, st);
            match (l, r) {
                (_, Some(k)) if k != 0 => Some(1),
                (Some(_), Some(_)) => Some(0),
                _ => None,
            }
        }
        CExpr::Bin(op, x, y) => {
            let l = eval(x, a, set, st)?;
            let r = eval(y, a, set, st)?;
            Some(op.apply(Value(l), Value(r), dom).0)
        }
    }
}

struct Search<'p, 's> {
    p: &'p Problem<'s>,
    order: Vec<usize>,
    /// Constraints to check once the slot at this position is assigned.
    watch: Vec<Vec<usize>>,
    /// Equalities that determine the slot at this position.
    defs: Vec<Vec<CExpr>>,
    assign: Vec<u64>,
    set: Vec<bool>,
    budget: u64,
}

impl<'p, 's> Search<'p, 's> {
    fn new(p: &'p Problem<'s>, slots: &[usize], cons: &[usize], cons_slots: &[Vec<usize>]) -> Self {
        // candidate definitions: slot == rhs with the slot absent from rhs
        let mut definitions: HashMap<usize, Vec<(CExpr, Vec<usize>)>> = HashMap::new();
        for &ci in cons {
            if let CExpr::Bin(BinOp::Eq, a, b) = &p.cons[ci] {
                for (lhs, rhs) in [(a, b), (b, a)] {
                    if let CExpr::S(i) = **lhs {
                        let deps = rhs.slots();
                        if !deps.contains(&i) {
                            definitions.entry(i).or_default().push(((**rhs).clone(), deps));
                        }
                    }
                }
            }
        }
        // greedy order: defined slots as soon as their inputs are placed,
        // otherwise the free slot most connected to what is placed
        let mut placed: Vec<bool> = vec![false; p.slots.len()];
        let mut order = Vec::with_capacity(slots.len());
        let mut remaining: Vec<usize> = slots.to_vec();
        let neighbours: HashMap<usize, Vec<usize>> = {
            let mut m: HashMap<usize, Vec<usize>> = HashMap::new();
            for &ci in cons {
                for &s in &cons_slots[ci] {
                    m.entry(s).or_default().extend(cons_slots[ci].iter().copied());
                }
            }
            m
        };
        while !remaining.is_empty() {
            let ready = remaining.iter().position(|s| {
                definitions
                    .get(s)
                    .is_some_and(|ds| ds.iter().any(|(_, deps)| deps.iter().all(|d| placed[*d])))
            });
            let pick = ready.unwrap_or_else(|| {
                let score = |s: &usize| {
                    let conn = neighbours
                        .get(s)
                        .map_or(0, |ns| ns.iter().filter(|n| placed[**n]).count());
                    (definitions.contains_key(s), std::cmp::Reverse(conn))
                };
                let mut best = 0;
                for i in 1..remaining.len() {
                    if score(&remaining[i]) < score(&remaining[best]) {
                        best = i;
                    }
                }
                best
            });
            let s = remaining.remove(pick);
            placed[s] = true;
            order.push(s);
        }
        let mut pos = vec![usize::MAX; p.slots.len()];
        for (i, s) in order.iter().enumerate() {
            pos[*s] = i;
        }
        let mut watch = vec![Vec::new(); order.len()];
        for &ci in cons {
            let last = cons_slots[ci].iter().map(|s| pos[*s]).max().unwrap_or(0);
            if last < watch.len() {
                watch[last].push(ci);
            }
        }
        let mut defs = vec![Vec::new(); order.len()];
        for (i, s) in order.iter().enumerate() {
            if let Some(ds) = definitions.get(s) {
                for (rhs, deps) in ds {
                    if deps.iter().all(|d| pos[*d] < i) {
                        defs[i].push(rhs.clone());
                    }
                }
            }
        }
        Search {
            p,
            order,
            watch,
            defs,
            assign: vec![0; p.slots.len()],
            set: vec![false; p.slots.len()],
            budget: 0,
        }
    }

    fn run(&mut self, on_model: &mut dyn FnMut(&[u64]) -> bool) -> Enumeration {
        if self.order.is_empty() {
            // constraints without slots were folded away already
            return if on_model(&self.assign) {
                Enumeration::Complete
            } else {
                Enumeration::Stopped
            };
        }
        self.go(0, on_model)
    }

    fn go(&mut self, i: usize, on_model: &mut dyn FnMut(&[u64]) -> bool) -> Enumeration {
        if i == self.order.len() {
            return if on_model(&self.assign) {
                Enumeration::Complete
            } else {
                Enumeration::Stopped
            };
        }
        let slot = self.order[i];
        let forced = self.defs[i]
            .iter()
            .find_map(|rhs| eval(rhs, &self.assign, &self.set, self.p.set));
        let mask = self.p.set.domain.mask();
        let (lo, hi) = match forced {
            Some(v) => (v, v),
            None => (0, mask),
        };
        let mut v = lo;
        loop {
            if self.budget == 0 {
                self.set[slot] = false;
                return Enumeration::CapHit;
            }
            self.budget -= 1;
            self.assign[slot] = v;
            self.set[slot] = true;
            let ok = self.watch[i]
                .iter()
                .all(|ci| eval(&self.p.cons[*ci], &self.assign, &self.set, self.p.set) != Some(0));
            if ok {
                match self.go(i + 1, on_model) {
                    Enumeration::Complete => {}
                    other => {
                        self.set[slot] = false;
                        return other;
                    }
                }
            }
            if v == hi {
                break;
            }
            v += 1;
        }
        self.set[slot] = false;
        Enumeration::Complete
    }
}
