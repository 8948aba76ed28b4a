use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assertions::{
    biabduce, check_state, concretise_low, provably_equal, Engine, PureAtom, SatResult, Setting, SpatialAtom, SymState, VarGen,
};
use crate::lang::{Cmd, Command, CommandKind, Expr, FunDef, Label, Pos, Var};
use crate::summaries::{apply_summary, Summary};

use super::status::{Judgement, PostAssertion, Status};
use super::trace::{backprop, Trace};

/// Exploration limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    /// Iterations explored per loop entry.
    pub unroll: usize,
    /// Paths allowed through any single program point.
    pub path_cap: usize,
    /// Commands executed per function before giving up.
    pub work_budget: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            unroll: 1,
            path_cap: 256,
            work_budget: 200_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Options {
    pub setting: Setting,
    pub engine: Engine,
    pub bounds: Bounds,
    /// Treat every successful heap access as attacker-observable.
    pub ct: bool,
}

impl Options {
    pub fn new(setting: Setting) -> Options {
        Options {
            setting,
            engine: Engine::Unary,
            bounds: Bounds::default(),
            ct: false,
        }
    }
}

/// Something the exploration had to give up on. Dropping paths only loses
/// results; it never makes a reported one wrong.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    PathCap { pos: Pos },
    WorkBudget,
    SolverUnknown { pos: Pos },
    NoSummary { callee: String, pos: Pos },
    FrameClash { pos: Pos },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::PathCap { pos } => write!(f, "{pos}: path cap reached, further paths dropped"),
            Diagnostic::WorkBudget => f.write_str("work budget exhausted, exploration stopped"),
            Diagnostic::SolverUnknown { pos } => write!(f, "{pos}: solver gave up, path dropped"),
            Diagnostic::NoSummary { callee, pos } => write!(f, "{pos}: no applicable summary for `{callee}`"),
            Diagnostic::FrameClash { pos } => write!(f, "{pos}: abduced frame clashes with a modified variable"),
        }
    }
}

/// A finished path.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub trace: Trace,
    pub post: PostAssertion,
    pub latent: bool,
}

/// Source of callee summaries during execution.
pub trait Callees {
    fn summaries(&mut self, callee: &str) -> Vec<Arc<Summary>>;

    /// Asked when none of the existing summaries applies at a call site.
    /// `args` are the argument terms in `ctx`.
    fn on_miss(&mut self, _callee: &str, _ctx: &SymState, _args: &[Expr]) -> Vec<Arc<Summary>> {
        Vec::new()
    }
}

/// No callee information: every call path is dropped.
pub struct NoCallees;

impl Callees for NoCallees {
    fn summaries(&mut self, _callee: &str) -> Vec<Arc<Summary>> {
        Vec::new()
    }
}

impl Callees for BTreeMap<String, Vec<Arc<Summary>>> {
    fn summaries(&mut self, callee: &str) -> Vec<Arc<Summary>> {
        self.get(callee).cloned().unwrap_or_default()
    }
}

/// Everything found by executing one function body.
#[derive(Clone, Debug)]
pub struct FunctionRun {
    pub function: String,
    pub body: Cmd,
    pub initial: SymState,
    /// Each formal with the logical variable standing for its initial value.
    pub formals: Vec<(Var, Var)>,
    pub outcomes: Vec<Outcome>,
    pub diagnostics: Vec<Diagnostic>,
    pub work: u64,
}

impl FunctionRun {
    pub fn judgement(&self, o: &Outcome) -> Judgement {
        Judgement {
            function: self.function.clone(),
            presumption: o.trace.earliest().map_or_else(|| self.initial.clone(), |e| e.pre.clone()),
            command: self.body.clone(),
            post: o.post.clone(),
            latent: o.latent,
        }
    }

    pub fn judgements(&self) -> Vec<Judgement> {
        self.outcomes.iter().map(|o| self.judgement(o)).collect()
    }
}

/// Entry state of `f`: formals bound to fresh logical variables, locals 0.
pub fn initial_state(f: &FunDef, gen: &mut VarGen) -> (SymState, Vec<(Var, Var)>) {
    let mut st = SymState::emp();
    let mut formals = Vec::new();
    for p in &f.params {
        let v = gen.fresh(p.as_str());
        st.stack.insert(p.clone(), Expr::Var(v.clone()));
        formals.push((p.clone(), v));
    }
    for l in f.locals() {
        st.stack.insert(l, Expr::Const(0));
    }
    (st, formals)
}

pub fn analyze_function(f: &FunDef, opts: &Options, callees: &mut dyn Callees) -> FunctionRun {
    let mut gen = VarGen::new();
    let (init, formals) = initial_state(f, &mut gen);
    execute(f, init, formals, gen, opts, callees)
}

/// Explore `f` from `init`. `gen` must not produce variables already in
/// `init`.
pub fn execute(
    f: &FunDef,
    init: SymState,
    formals: Vec<(Var, Var)>,
    gen: VarGen,
    opts: &Options,
    callees: &mut dyn Callees,
) -> FunctionRun {
    let mut ex = Executor {
        opts,
        gen,
        callees,
        visits: BTreeMap::new(),
        capped: BTreeSet::new(),
        diagnostics: Vec::new(),
    };
    let mut outcomes = Vec::new();
    let mut work = 0u64;
    let mut pending = vec![Path {
        trace: Trace::new(),
        state: init.clone(),
        todo: vec![f.body.clone()],
        loops: Vec::new(),
    }];
    while let Some(mut p) = pending.pop() {
        work += 1;
        if work > opts.bounds.work_budget {
            ex.diagnostics.push(Diagnostic::WorkBudget);
            break;
        }
        let Some(c) = p.todo.pop() else {
            outcomes.push(Outcome {
                trace: p.trace,
                post: PostAssertion::ok(p.state),
                latent: false,
            });
            continue;
        };
        let next = ex.exec(p, &c, &c, None);
        for n in next.into_iter().rev() {
            match n {
                Next::Go(p) => pending.push(p),
                Next::Done(o) => outcomes.push(o),
            }
        }
    }
    FunctionRun {
        function: f.name.clone(),
        body: f.body.clone(),
        initial: init,
        formals,
        outcomes,
        diagnostics: ex.diagnostics,
        work,
    }
}

#[derive(Clone)]
struct Path {
    trace: Trace,
    state: SymState,
    /// Continuation, next command last.
    todo: Vec<Cmd>,
    /// Iterations taken by each enclosing loop, keyed by command identity.
    loops: Vec<(usize, usize)>,
}

enum Next {
    Go(Path),
    Done(Outcome),
}

/// The cell a heap access touches, once located or abduced.
struct Located {
    trace: Trace,
    pre: SymState,
    others: Vec<SpatialAtom>,
    addr: Expr,
    value: Expr,
}

struct Executor<'a> {
    opts: &'a Options,
    gen: VarGen,
    callees: &'a mut dyn Callees,
    visits: BTreeMap<usize, usize>,
    capped: BTreeSet<usize>,
    diagnostics: Vec<Diagnostic>,
}

fn key(c: &Cmd) -> usize {
    Arc::as_ptr(c) as usize
}

/// Evaluate closed compound terms; constants and levels are kept as written.
fn fold(e: Expr, set: &Setting) -> Expr {
    if matches!(e, Expr::Const(_) | Expr::Level(_) | Expr::Var(_)) {
        return e;
    }
    match e.eval_closed(&set.domain) {
        Some(v) => Expr::Const(v.0),
        None => e,
    }
}

impl Executor<'_> {
    fn set(&self) -> &Setting {
        &self.opts.setting
    }

    fn feasible(&mut self, st: &SymState, pos: Pos) -> bool {
        match check_state(st, self.set(), self.opts.engine) {
            SatResult::Sat(_) => true,
            SatResult::Unsat => false,
            SatResult::Unknown => {
                self.diagnostics.push(Diagnostic::SolverUnknown { pos });
                false
            }
        }
    }

    fn term(&self, st: &SymState, e: &Expr) -> Expr {
        fold(st.term(e), self.set())
    }

    fn attacker(&self) -> Expr {
        Expr::Level(self.set().attacker.clone())
    }

    /// Closed level visibility; `None` when the level is symbolic.
    fn visible(&self, level: &Expr) -> Option<bool> {
        level.eval_closed(&self.set().domain).map(|v| self.set().visible(v))
    }

    fn count_visit(&mut self, c: &Cmd) -> bool {
        let n = self.visits.entry(key(c)).or_insert(0);
        *n += 1;
        if *n > self.opts.bounds.path_cap {
            if self.capped.insert(key(c)) {
                self.diagnostics.push(Diagnostic::PathCap { pos: c.pos });
            }
            return false;
        }
        true
    }

    fn exec(&mut self, mut p: Path, c: &Cmd, outer: &Cmd, label: Option<&Label>) -> Vec<Next> {
        use CommandKind::*;
        match &c.kind {
            Seq(a, b) => {
                p.todo.push(b.clone());
                p.todo.push(a.clone());
                return vec![Next::Go(p)];
            }
            Label(l, inner) => return self.exec(p, inner, c, Some(l)),
            Assume(b) => {
                p.trace.push(outer.clone(), p.state.clone());
                return self.assume(p, b, c.pos).map(Next::Go).into_iter().collect();
            }
            _ => {}
        }
        if !self.count_visit(outer) {
            return Vec::new();
        }
        let lab = label
            .cloned()
            .unwrap_or_else(|| crate::lang::Label::new(&format!("@{}", c.pos)));
        match &c.kind {
            Skip => {
                p.trace.push(outer.clone(), p.state.clone());
                vec![Next::Go(p)]
            }
            Assign(x, e) => {
                p.trace.push(outer.clone(), p.state.clone());
                let t = self.term(&p.state, e);
                p.state.stack.insert(x.clone(), t);
                vec![Next::Go(p)]
            }
            Input(x, l) => {
                p.trace.push(outer.clone(), p.state.clone());
                self.input(p, x, l, c.pos).map(Next::Go).into_iter().collect()
            }
            Alloc(x, e) => {
                p.trace.push(outer.clone(), p.state.clone());
                let a = self.gen.fresh(x.as_str());
                let v = self.term(&p.state, e);
                p.state.stack.insert(x.clone(), Expr::Var(a.clone()));
                p.state.spatial.push(SpatialAtom::PointsTo(Expr::Var(a), v));
                if self.feasible(&p.state, c.pos) {
                    vec![Next::Go(p)]
                } else {
                    Vec::new()
                }
            }
            Load(x, e) => {
                let a = self.term(&p.state, e);
                let mut out = Vec::new();
                if let Some(loc) = self.locate(&p, &a, x.as_str(), c.pos) {
                    let mut q = Path {
                        trace: loc.trace,
                        state: loc.pre.clone(),
                        todo: p.todo.clone(),
                        loops: p.loops.clone(),
                    };
                    q.trace.push(outer.clone(), loc.pre);
                    q.state.stack.insert(x.clone(), loc.value);
                    out.extend(self.accessed(q, &loc.addr, &lab, c.pos));
                }
                out.extend(self.invalid_access(&p, &a, outer, &lab));
                out.extend(self.null_access(&p, &a, outer, &lab));
                out
            }
            Store(e, v) => {
                let a = self.term(&p.state, e);
                let val = self.term(&p.state, v);
                let mut out = Vec::new();
                if let Some(loc) = self.locate(&p, &a, "v", c.pos) {
                    let mut q = Path {
                        trace: loc.trace,
                        state: loc.pre.clone(),
                        todo: p.todo.clone(),
                        loops: p.loops.clone(),
                    };
                    q.trace.push(outer.clone(), loc.pre);
                    q.state.spatial = loc.others;
                    q.state.spatial.push(SpatialAtom::PointsTo(loc.addr.clone(), val));
                    out.extend(self.accessed(q, &loc.addr, &lab, c.pos));
                }
                out.extend(self.invalid_access(&p, &a, outer, &lab));
                out.extend(self.null_access(&p, &a, outer, &lab));
                out
            }
            Free(e) => {
                let a = self.term(&p.state, e);
                let mut out = Vec::new();
                if let Some(loc) = self.locate(&p, &a, "v", c.pos) {
                    let mut q = Path {
                        trace: loc.trace,
                        state: loc.pre.clone(),
                        todo: p.todo.clone(),
                        loops: p.loops.clone(),
                    };
                    q.trace.push(outer.clone(), loc.pre);
                    q.state.spatial = loc.others;
                    q.state.spatial.push(SpatialAtom::Invalid(loc.addr));
                    out.push(Next::Go(q));
                }
                out.extend(self.invalid_access(&p, &a, outer, &lab));
                out.extend(self.null_access(&p, &a, outer, &lab));
                out
            }
            Output(l, e) => {
                p.trace.push(outer.clone(), p.state.clone());
                self.output(p, l, e, &lab, c.pos)
            }
            If(b, c1, c2) => {
                let mut out = Vec::new();
                if c1.strip_labels() != c2.strip_labels() {
                    out.extend(self.branch_insec(&p, b, outer, &lab));
                }
                let cond = b.clone().truth();
                for (guard, branch) in [(cond.clone(), c1), (cond.negate(), c2)] {
                    let mut q = p.clone();
                    q.todo.push(branch.clone());
                    q.todo.push(Arc::new(Command::at(CommandKind::Assume(guard), c.pos)));
                    out.push(Next::Go(q));
                }
                out
            }
            While(b, body) => {
                let mut out: Vec<Next> = self.branch_insec(&p, b, outer, &lab).into_iter().collect();
                let cond = b.clone().truth();
                let k = key(outer);
                let done = p.loops.iter().find(|(w, _)| *w == k).map_or(0, |(_, n)| *n);
                if done < self.opts.bounds.unroll {
                    let mut q = p.clone();
                    match q.loops.iter_mut().find(|(w, _)| *w == k) {
                        Some(entry) => entry.1 += 1,
                        None => q.loops.push((k, 1)),
                    }
                    q.todo.push(outer.clone());
                    q.todo.push(body.clone());
                    q.todo.push(Arc::new(Command::at(CommandKind::Assume(cond.clone()), c.pos)));
                    out.push(Next::Go(q));
                }
                let mut exit = p;
                exit.loops.retain(|(w, _)| *w != k);
                exit.todo
                    .push(Arc::new(Command::at(CommandKind::Assume(cond.negate()), c.pos)));
                out.push(Next::Go(exit));
                out
            }
            Call(target, f, args) => self.call(p, target.as_ref(), f, args, outer, c.pos),
            Seq(..) | Label(..) | Assume(_) => unreachable!(),
        }
    }

    fn assume(&mut self, mut p: Path, b: &Expr, pos: Pos) -> Option<Path> {
        let t = self.term(&p.state, b);
        match t.eval_closed(&self.set().domain) {
            Some(v) if v.is_true() => return Some(p),
            Some(_) => return None,
            None => {}
        }
        p.state.add_pure(PureAtom::Expr(t));
        self.feasible(&p.state, pos).then_some(p)
    }

    fn input(&mut self, mut p: Path, x: &Var, l: &Expr, pos: Pos) -> Option<Path> {
        let a = Expr::Var(self.gen.fresh(x.as_str()));
        let lt = self.term(&p.state, l);
        p.state.stack.insert(x.clone(), a.clone());
        match (self.opts.engine, self.visible(&lt)) {
            (_, Some(false)) => Some(p),
            (Engine::Unary, Some(true)) => {
                let st = concretise_low(&a, &p.state, self.set(), self.opts.engine.mode())?;
                p.state = st;
                Some(p)
            }
            _ => {
                p.state.add_pure(PureAtom::Sec(a, lt));
                self.feasible(&p.state, pos).then_some(p)
            }
        }
    }

    /// The attacker learns `e` (at level `l`).
    fn observe(&mut self, st: SymState, e: &Expr, l: &Expr, pos: Pos) -> Option<SymState> {
        match (self.opts.engine, self.visible(l)) {
            (_, Some(false)) => Some(st),
            (Engine::Unary, Some(true)) => concretise_low(e, &st, self.set(), self.opts.engine.mode()),
            _ => {
                let st = st.with_pure(PureAtom::Sec(e.clone(), l.clone()));
                self.feasible(&st, pos).then_some(st)
            }
        }
    }

    fn output(&mut self, p: Path, l: &Expr, e: &Expr, lab: &Label, pos: Pos) -> Vec<Next> {
        let lt = self.term(&p.state, l);
        let t = self.term(&p.state, e);
        let mut out = Vec::new();
        if self.visible(&lt) != Some(false) {
            let bad = p.state.clone().with_pure(PureAtom::Insec(t.clone(), lt.clone()));
            if self.feasible(&bad, pos) {
                out.push(Next::Done(Outcome {
                    trace: p.trace.clone(),
                    post: PostAssertion {
                        status: Status::Insec(lab.clone()),
                        state: bad,
                    },
                    latent: false,
                }));
            }
        }
        let Path {
            trace,
            state,
            todo,
            loops,
        } = p;
        if let Some(state) = self.observe(state, &t, &lt, pos) {
            out.insert(
                0,
                Next::Go(Path {
                    trace,
                    state,
                    todo,
                    loops,
                }),
            );
        }
        out
    }

    /// Constant-time successors of a successful access at `addr`: the
    /// address leaks, or it is the same in both runs.
    fn accessed(&mut self, p: Path, addr: &Expr, lab: &Label, pos: Pos) -> Vec<Next> {
        if !self.opts.ct {
            return vec![Next::Go(p)];
        }
        let mut out = Vec::new();
        let ell = self.attacker();
        let bad = p.state.clone().with_pure(PureAtom::Insec(addr.clone(), ell.clone()));
        let leak = self.feasible(&bad, pos).then(|| {
            Next::Done(Outcome {
                trace: p.trace.clone(),
                post: PostAssertion {
                    status: Status::Insec(lab.clone()),
                    state: bad,
                },
                latent: false,
            })
        });
        let Path {
            trace,
            state,
            todo,
            loops,
        } = p;
        if let Some(state) = self.observe(state, addr, &ell, pos) {
            out.push(Next::Go(Path {
                trace,
                state,
                todo,
                loops,
            }));
        }
        out.extend(leak);
        out
    }

    /// Find the cell at `a`, abducing it into the presumption if it is not
    /// held. `None` when `a` is known to be invalid or the abduced cell is
    /// inconsistent with the state.
    fn locate(&mut self, p: &Path, a: &Expr, hint: &str, pos: Pos) -> Option<Located> {
        let beta = Expr::Var(self.gen.fresh(hint));
        let need = SpatialAtom::PointsTo(a.clone(), beta.clone());
        let mode = self.opts.engine.mode();
        let b = biabduce(&need, &p.state, self.set(), mode)?;
        match b.matched {
            Some(SpatialAtom::PointsTo(q, v)) => {
                let mut pre = p.state.clone();
                if &q != a {
                    pre.add_pure(PureAtom::Expr(Expr::eq(a.clone(), q.clone())));
                }
                Some(Located {
                    trace: p.trace.clone(),
                    pre,
                    others: b.frame,
                    addr: q,
                    value: v,
                })
            }
            Some(SpatialAtom::Invalid(_)) => None,
            None => {
                let trace = match backprop(&b.anti_frame, &p.trace) {
                    Ok(t) => t,
                    Err(_) => {
                        self.diagnostics.push(Diagnostic::FrameClash { pos });
                        return None;
                    }
                };
                let mut pre = p.state.clone();
                pre.spatial.extend(b.anti_frame);
                if !self.feasible(&pre, pos) {
                    return None;
                }
                Some(Located {
                    trace,
                    pre,
                    others: p.state.spatial.clone(),
                    addr: a.clone(),
                    value: beta,
                })
            }
        }
    }

    /// Error successor of an access to `a`. Manifest when `a` is already
    /// known to be invalid, latent when the invalidity had to be assumed.
    fn invalid_access(&mut self, p: &Path, a: &Expr, outer: &Cmd, lab: &Label) -> Option<Next> {
        let need = SpatialAtom::Invalid(a.clone());
        let b = biabduce(&need, &p.state, self.set(), self.opts.engine.mode())?;
        let (mut trace, pre, latent) = if b.matched.is_some() {
            let mut pre = p.state.clone();
            for e in b.equalities {
                pre.add_pure(e);
            }
            (p.trace.clone(), pre, false)
        } else {
            let trace = backprop(&b.anti_frame, &p.trace).ok()?;
            let mut pre = p.state.clone();
            pre.spatial.extend(b.anti_frame);
            if !self.feasible(&pre, outer.pos) {
                return None;
            }
            (trace, pre, true)
        };
        trace.push(outer.clone(), pre.clone());
        Some(Next::Done(Outcome {
            trace,
            post: PostAssertion {
                status: Status::Err(lab.clone()),
                state: pre,
            },
            latent,
        }))
    }

    /// Access through address 0. Reported only when the address is 0 in
    /// every state, otherwise it depends on what the caller passes.
    fn null_access(&mut self, p: &Path, a: &Expr, outer: &Cmd, lab: &Label) -> Option<Next> {
        if a.eval_closed(&self.set().domain).is_some_and(|v| v.is_address()) {
            return None;
        }
        let zero = Expr::Const(0);
        let pre = p.state.clone().with_pure(PureAtom::Expr(Expr::eq(a.clone(), zero.clone())));
        if !self.feasible(&pre, outer.pos) {
            return None;
        }
        let latent = !provably_equal(&p.state, a, &zero, self.set(), self.opts.engine.mode());
        let mut trace = p.trace.clone();
        trace.push(outer.clone(), pre.clone());
        Some(Next::Done(Outcome {
            trace,
            post: PostAssertion {
                status: Status::Err(lab.clone()),
                state: pre,
            },
            latent,
        }))
    }

    /// `insec(b, attacker)` at a branch point, when satisfiable.
    fn branch_insec(&mut self, p: &Path, b: &Expr, outer: &Cmd, lab: &Label) -> Option<Next> {
        let t = self.term(&p.state, &b.clone().truth());
        if t.eval_closed(&self.set().domain).is_some() {
            return None;
        }
        let pre = p.state.clone().with_pure(PureAtom::Insec(t, self.attacker()));
        if !self.feasible(&pre, outer.pos) {
            return None;
        }
        let mut trace = p.trace.clone();
        trace.push(outer.clone(), pre.clone());
        Some(Next::Done(Outcome {
            trace,
            post: PostAssertion {
                status: Status::Insec(lab.clone()),
                state: pre,
            },
            latent: false,
        }))
    }

    fn call(&mut self, p: Path, target: Option<&Var>, f: &str, args: &[Expr], outer: &Cmd, pos: Pos) -> Vec<Next> {
        let terms: Vec<Expr> = args.iter().map(|a| self.term(&p.state, a)).collect();
        let mut sums = self.callees.summaries(f);
        let mut out = self.apply_all(&p, target, &sums, &terms, outer);
        if out.is_empty() {
            sums = self.callees.on_miss(f, &p.state, &terms);
            out = self.apply_all(&p, target, &sums, &terms, outer);
        }
        if out.is_empty() && sums.is_empty() {
            self.diagnostics.push(Diagnostic::NoSummary {
                callee: f.to_string(),
                pos,
            });
        }
        out
    }

    fn apply_all(&mut self, p: &Path, target: Option<&Var>, sums: &[Arc<Summary>], args: &[Expr], outer: &Cmd) -> Vec<Next> {
        let mut out = Vec::new();
        for sm in sums {
            let opts = self.opts;
            let Some(app) = apply_summary(sm, &p.state, args, target, &mut self.gen, &opts.setting, opts.engine) else {
                continue;
            };
            let Ok(mut trace) = backprop(&app.anti_frame, &p.trace) else {
                self.diagnostics.push(Diagnostic::FrameClash { pos: outer.pos });
                continue;
            };
            trace.push(outer.clone(), app.pre);
            if app.status.is_ok() {
                out.push(Next::Go(Path {
                    trace,
                    state: app.post,
                    todo: p.todo.clone(),
                    loops: p.loops.clone(),
                }));
            } else {
                out.push(Next::Done(Outcome {
                    trace,
                    post: PostAssertion {
                        status: app.status,
                        state: app.post,
                    },
                    latent: app.latent,
                }));
            }
        }
        out
    }
}
