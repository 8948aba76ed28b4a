use std::sync::Arc;

use crate::lang::ast::inline_body;
use crate::lang::{Cmd, Command, CommandKind, Expr, Lattice, Program, Value, ValueDomain};

use super::state::{Cell, Config, Event, Heap, Schedule, Store};

/// Interpreter for one program over a bounded value domain.
#[derive(Clone, Copy)]
pub struct Machine<'a> {
    pub program: Option<&'a Program>,
    pub domain: ValueDomain,
    pub lattice: &'a Lattice,
    /// Record the address of every successful load and store.
    pub ct: bool,
}

/// Everything reachable within a step budget.
#[derive(Clone, Debug, Default)]
pub struct RunResult {
    pub reached: Vec<(Schedule, Config)>,
    /// Some run was still able to step when the budget ran out.
    pub cut_off: bool,
}

impl<'a> Machine<'a> {
    pub fn new(domain: ValueDomain, lattice: &'a Lattice) -> Machine<'a> {
        Machine {
            program: None,
            domain,
            lattice,
            ct: false,
        }
    }

    pub fn with_program(mut self, p: &'a Program) -> Self {
        self.program = Some(p);
        self
    }

    pub fn with_ct(mut self, ct: bool) -> Self {
        self.ct = ct;
        self
    }

    fn eval(&self, e: &Expr, s: &Store) -> Value {
        // stores are total, so evaluation cannot fail
        e.eval(s, &self.domain).unwrap_or_default()
    }

    fn access_event(&self, a: Value) -> Event {
        if self.ct {
            Event::Access(a)
        } else {
            Event::Tau
        }
    }

    /// Successors of a configuration, each reached by exactly one event.
    /// Terminal configurations have none.
    pub fn step(&self, k: &Config) -> Vec<(Event, Config)> {
        match k {
            Config::Run(c, s, h) => self.step_cmd(c, s, h),
            _ => Vec::new(),
        }
    }

    fn step_cmd(&self, c: &Cmd, s: &Store, h: &Heap) -> Vec<(Event, Config)> {
        use CommandKind::{Alloc, Assign, Assume, Call, Free, If, Input, Label, Load, Output, Seq, Skip, While};
        let stop = |s: Store, h: Heap| Config::Stop(s, h);
        match &c.kind {
            Skip => vec![(Event::Tau, stop(s.clone(), h.clone()))],
            Assign(x, e) => {
                let mut s2 = s.clone();
                s2.set(x.clone(), self.eval(e, s));
                vec![(Event::Tau, stop(s2, h.clone()))]
            }
            Input(x, l) => {
                let level = self.lattice.from_value(self.eval(l, s));
                self.domain
                    .values()
                    .map(|v| {
                        let mut s2 = s.clone();
                        s2.set(x.clone(), v);
                        (Event::In(level.clone(), v), stop(s2, h.clone()))
                    })
                    .collect()
            }
            Output(l, e) => {
                let level = self.lattice.from_value(self.eval(l, s));
                vec![(Event::Out(level, self.eval(e, s)), stop(s.clone(), h.clone()))]
            }
            Load(x, p) => {
                let a = self.eval(p, s);
                match h.get(&a) {
                    Some(Cell::Val(v)) => {
                        let mut s2 = s.clone();
                        s2.set(x.clone(), *v);
                        vec![(self.access_event(a), stop(s2, h.clone()))]
                    }
                    _ => vec![(Event::Tau, Config::Abort(s.clone(), h.clone()))],
                }
            }
            CommandKind::Store(p, e) => {
                let a = self.eval(p, s);
                match h.get(&a) {
                    Some(Cell::Val(_)) => {
                        let mut h2 = h.clone();
                        h2.insert(a, Cell::Val(self.eval(e, s)));
                        vec![(self.access_event(a), stop(s.clone(), h2))]
                    }
                    _ => vec![(Event::Tau, Config::Abort(s.clone(), h.clone()))],
                }
            }
            Alloc(x, e) => {
                let v = self.eval(e, s);
                self.domain
                    .addresses()
                    .filter(|a| !matches!(h.get(a), Some(Cell::Val(_))))
                    .map(|a| {
                        let mut s2 = s.clone();
                        s2.set(x.clone(), a);
                        let mut h2 = h.clone();
                        h2.insert(a, Cell::Val(v));
                        (Event::Alloc(a), stop(s2, h2))
                    })
                    .collect()
            }
            Free(p) => {
                let a = self.eval(p, s);
                match h.get(&a) {
                    Some(Cell::Val(_)) => {
                        let mut h2 = h.clone();
                        h2.insert(a, Cell::Invalid);
                        vec![(Event::Tau, stop(s.clone(), h2))]
                    }
                    _ => vec![(Event::Tau, Config::Abort(s.clone(), h.clone()))],
                }
            }
            Label(_, inner) => self.step_cmd(inner, s, h),
            Seq(c1, c2) => self
                .step_cmd(c1, s, h)
                .into_iter()
                .map(|(ev, k)| {
                    let k = match k {
                        Config::Abort(s, h) => Config::Abort(s, h),
                        Config::Stop(s, h) => Config::Run(c2.clone(), s, h),
                        Config::Run(c1b, s, h) => Config::Run(Command::seq(c1b, c2.clone()), s, h),
                    };
                    (ev, k)
                })
                .collect(),
            If(b, c1, c2) => {
                let next = if self.eval(b, s).is_true() { c1 } else { c2 };
                vec![(Event::Tau, Config::Run(next.clone(), s.clone(), h.clone()))]
            }
            While(b, body) => {
                let next = if self.eval(b, s).is_true() {
                    Command::seq(body.clone(), c.clone())
                } else {
                    Command::skip()
                };
                vec![(Event::Tau, Config::Run(next, s.clone(), h.clone()))]
            }
            Assume(b) => {
                if self.eval(b, s).is_true() {
                    vec![(Event::Tau, stop(s.clone(), h.clone()))]
                } else {
                    Vec::new()
                }
            }
            Call(target, f, args) => {
                let Some(fd) = self.program.and_then(|p| p.function(f)) else {
                    // calls to unknown functions are stuck
                    return Vec::new();
                };
                let p = self.program.expect("checked above");
                let body = inline_body(p, fd, target.as_ref(), args, c.pos, false);
                vec![(Event::Tau, Config::Run(Arc::new(body), s.clone(), h.clone()))]
            }
        }
    }

    /// All `(schedule, configuration)` pairs reachable from `k` in at most
    /// `budget` steps, including `k` itself with the empty schedule.
    pub fn run_bounded(&self, k: Config, budget: usize) -> RunResult {
        self.run_capped(k, budget, usize::MAX)
    }

    /// Like [`Machine::run_bounded`], but stops after collecting `cap`
    /// configurations, marking the result as cut off.
    pub fn run_capped(&self, k: Config, budget: usize, cap: usize) -> RunResult {
        let mut reached = Vec::new();
        let cut_off = self.explore(k, budget, cap, &mut |sched, k| reached.push((sched.to_vec(), k.clone())));
        RunResult { reached, cut_off }
    }

    /// Depth-first walk over every configuration reachable from `k` in at
    /// most `budget` steps, calling `visit` on each with its schedule.
    /// Visits at most `cap` configurations; returns whether anything was
    /// left unexplored.
    pub fn explore(&self, k: Config, budget: usize, cap: usize, visit: &mut dyn FnMut(&[Event], &Config)) -> bool {
        let mut seen = 0usize;
        let mut cut_off = false;
        let mut sched: Vec<Event> = Vec::new();
        // Each frame holds the pending successors at one depth.
        let mut frames: Vec<Vec<(Event, Config)>> = Vec::new();
        let mut cur = Some(k);
        loop {
            if let Some(k) = cur.take() {
                if seen >= cap {
                    return true;
                }
                seen += 1;
                visit(&sched, &k);
                let mut succ = if sched.len() < budget { self.step(&k) } else { Vec::new() };
                if sched.len() >= budget && !k.is_terminal() && !self.step(&k).is_empty() {
                    cut_off = true;
                }
                succ.reverse();
                frames.push(succ);
            }
            let Some(top) = frames.last_mut() else {
                return cut_off;
            };
            match top.pop() {
                Some((ev, k2)) => {
                    sched.push(ev);
                    cur = Some(k2);
                }
                None => {
                    frames.pop();
                    if frames.is_empty() {
                        return cut_off;
                    }
                    sched.pop();
                }
            }
        }
    }
}

/// Free-function form of [`Machine::run_bounded`] for programs without calls.
pub fn run_bounded(k: Config, budget: usize, domain: ValueDomain, lattice: &Lattice) -> RunResult {
    Machine::new(domain, lattice).run_bounded(k, budget)
}
