//! Brute-force checker for execution witnesses.
//!
//! A judgement `[P] c [status: Q]` is checked by running `c` from every
//! concrete state satisfying the unary projection of `P`, indexing every
//! configuration reached by its store and heap, and then asking, for every
//! pair of final states satisfying `Q`, whether two indexed runs reach them
//! with schedules of equal length that agree on attacker-visible inputs and
//! that exhibit the status.
//!
//! Final states are grouped into classes that behave identically with
//! respect to this question, so the pairwise check runs over classes rather
//! than over individual states.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assertions::{pure_holds, Enumeration, Mode, Problem, PureAtom, Setting, SymState};
use crate::lang::{Cmd, Command, Lattice, Program, SecLevel, Value, Var};
use crate::semantics::{Config, Event, Heap, Machine, Store};
use crate::symex::{Judgement, PostAssertion, Status};

/// Outcome of checking one judgement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Confirmed,
    /// A pair of final states satisfying the result that no pair of runs
    /// from the presumption explains.
    Refuted { counterexample: Counterexample },
    Inconclusive { reason: String },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Confirmed => "confirmed",
            Verdict::Refuted { .. } => "refuted",
            Verdict::Inconclusive { .. } => "inconclusive",
        }
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self, Verdict::Refuted { .. })
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Inconclusive { reason } => write!(f, "inconclusive ({reason})"),
            v => f.write_str(v.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub first: (Store, Heap),
    pub second: (Store, Heap),
}

/// Configurations any single run may collect, however many initial
/// states there are.
const MIN_CONFIGS_PER_RUN: usize = 64;

/// Bounds for the brute-force search.
#[derive(Clone, Debug)]
pub struct OracleConfig {
    pub setting: Setting,
    /// Longest schedule explored from an initial state.
    pub max_steps: usize,
    /// Cap on the number of initial or final states enumerated.
    pub max_states: usize,
    /// Cap on the configurations collected across all runs.
    pub max_configs: usize,
    /// Record accessed addresses as attacker-visible events.
    pub ct: bool,
}

impl OracleConfig {
    pub fn new(setting: Setting) -> OracleConfig {
        OracleConfig {
            setting,
            max_steps: 64,
            max_states: 200_000,
            max_configs: 100_000,
            ct: false,
        }
    }
}

fn visible(l: &SecLevel, ell: &SecLevel, lattice: &Lattice) -> bool {
    lattice.leq(l, ell)
}

fn inputs(s: &[Event], ell: &SecLevel, lattice: &Lattice) -> Vec<Event> {
    s.iter()
        .filter(|e| matches!(e, Event::In(l, _) if visible(l, ell, lattice)))
        .cloned()
        .collect()
}

fn outputs(s: &[Event], ell: &SecLevel, lattice: &Lattice, ct: bool) -> Vec<Event> {
    s.iter()
        .filter(|e| match e {
            Event::Out(l, _) => visible(l, ell, lattice),
            Event::Access(_) => ct,
            _ => false,
        })
        .cloned()
        .collect()
}

/// The schedules show the same inputs on channels visible at `ell`.
pub fn io_equiv_input(s: &[Event], s2: &[Event], ell: &SecLevel, lattice: &Lattice) -> bool {
    inputs(s, ell, lattice) == inputs(s2, ell, lattice)
}

/// The schedules show the same outputs on channels visible at `ell`.
pub fn io_equiv_output(s: &[Event], s2: &[Event], ell: &SecLevel, lattice: &Lattice) -> bool {
    outputs(s, ell, lattice, false) == outputs(s2, ell, lattice, false)
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
enum Kind {
    /// Running, with the interned label-free command.
    Run(usize),
    Stop,
    Abort,
}

/// What matters about one run reaching a final state.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
struct Sig {
    len: usize,
    ins: Vec<Event>,
    outs: Vec<Event>,
    kind: Kind,
    /// Initial values of the variables in the presumption's relational atoms.
    init: Vec<Value>,
}

type Key = (Vec<Value>, Heap);

/// A final configuration reached from one initial state: its key, its
/// signature and the command left to run, if any.
type Reached = (Key, Sig, Option<Command>);

fn store_of(vars: &[Var], vals: &[Value]) -> Store {
    vars.iter().cloned().zip(vals.iter().copied()).collect()
}

fn rel_vars(atoms: &[PureAtom]) -> Vec<Var> {
    let mut vs = BTreeSet::new();
    for a in atoms {
        a.collect_vars(&mut vs);
    }
    vs.into_iter().collect()
}

fn rel_holds(atoms: &[PureAtom], vars: &[Var], a: &[Value], b: &[Value], set: &Setting) -> bool {
    if atoms.is_empty() {
        return true;
    }
    let (s, s2) = (store_of(vars, a), store_of(vars, b));
    atoms
        .iter()
        .all(|p| pure_holds(p, &s, &s2, set))
}

/// Check a judgement produced by the analysis.
pub fn check_judgement(j: &Judgement, program: Option<&Program>, cfg: &OracleConfig) -> Verdict {
    check_witness(&j.presumption, &j.command, &j.post, program, cfg)
}

/// Decide by enumeration whether presumption `pre` and result `post`
/// witness command `c`. Calls are resolved through `program`.
pub fn check_witness(pre: &SymState, c: &Cmd, post: &PostAssertion, program: Option<&Program>, cfg: &OracleConfig) -> Verdict {
    let set = &cfg.setting;
    let mut vset: BTreeSet<Var> = c.vars().into_iter().filter(|v| !v.is_hidden()).collect();
    vset.extend(pre.free_vars());
    let vars: Vec<Var> = vset.into_iter().collect();

    // Initial states.
    let mut pprob = Problem::of_state(set, Mode::Unary, pre);
    for v in &vars {
        pprob.declare(v);
    }
    let mut inits: BTreeSet<(Store, Heap)> = BTreeSet::new();
    let mut too_many = false;
    let en = pprob.for_each_model(&mut |m| {
        inits.insert((m.stores[0].clone(), m.heaps[0].clone()));
        too_many = inits.len() > cfg.max_states;
        !too_many
    });
    if too_many || en == Enumeration::CapHit {
        return Verdict::Inconclusive {
            reason: "too many initial states".into(),
        };
    }

    let prel: Vec<PureAtom> = pre.pure.iter().filter(|a| a.is_relational()).cloned().collect();
    let prel_vars = rel_vars(&prel);
    let ell = set.attacker.clone();
    let lattice = &set.lattice;
    let mut machine = Machine::new(set.domain, lattice).with_ct(cfg.ct);
    if let Some(p) = program {
        machine = machine.with_program(p);
    }
    let want = |k: &Config| {
        matches!(
            (&post.status, k),
            (Status::Ok, Config::Stop(..)) | (Status::Err(_), Config::Abort(..)) | (Status::Insec(_), _)
        )
    };

    let per_run = (cfg.max_configs / inits.len().max(1)).max(MIN_CONFIGS_PER_RUN);
    let collected = AtomicUsize::new(0);
    let runs: Vec<(bool, Vec<Reached>)> = inits
        .par_iter()
        .map(|(s, h)| {
            if collected.load(Ordering::Relaxed) >= cfg.max_configs {
                return (true, Vec::new());
            }
            let init = s.project(&prel_vars);
            let mut out = Vec::new();
            let mut visited = 0usize;
            let cut = machine.explore(
                Config::Run(c.clone(), s.clone(), h.clone()),
                cfg.max_steps,
                per_run,
                &mut |sched, k| {
                    visited += 1;
                    if !want(k) {
                        return;
                    }
                    let (kind, cmd) = match k {
                        Config::Run(cmd, ..) => (Kind::Run(0), Some(cmd.strip_labels())),
                        Config::Stop(..) => (Kind::Stop, None),
                        Config::Abort(..) => (Kind::Abort, None),
                    };
                    let key = (k.store().project(&vars), k.heap().clone());
                    out.push((
                        key,
                        Sig {
                            len: sched.len(),
                            ins: inputs(sched, &ell, lattice),
                            outs: outputs(sched, &ell, lattice, cfg.ct),
                            kind,
                            init: init.clone(),
                        },
                        cmd,
                    ));
                },
            );
            collected.fetch_add(visited, Ordering::Relaxed);
            (cut, out)
        })
        .collect();
    let cut_off = runs.iter().any(|(c, _)| *c);
    let mut index: HashMap<Key, BTreeSet<Sig>> = HashMap::new();
    let mut interned: HashMap<Command, usize> = HashMap::new();
    for (_, rs) in runs {
        for (k, mut s, cmd) in rs {
            if let Some(cmd) = cmd {
                let n = interned.len();
                s.kind = Kind::Run(*interned.entry(cmd).or_insert(n));
            }
            index.entry(k).or_default().insert(s);
        }
    }

    // Final states, with the values each can give the result's relational
    // atoms.
    let q = &post.state;
    let qrel: Vec<PureAtom> = q.pure.iter().filter(|a| a.is_relational()).cloned().collect();
    let qrel_vars = rel_vars(&qrel);
    let mut qprob = Problem::of_state(set, Mode::Unary, q);
    for v in &vars {
        qprob.declare(v);
    }
    let mut finals: HashMap<Key, BTreeMap<Vec<Value>, Store>> = HashMap::new();
    let mut count = 0usize;
    let en = qprob.for_each_model(&mut |m| {
        let key = (m.stores[0].project(&vars), m.heaps[0].clone());
        let r = m.stores[0].project(&qrel_vars);
        finals.entry(key).or_default().entry(r).or_insert_with(|| m.stores[0].clone());
        count += 1;
        count <= cfg.max_states
    });
    if count > cfg.max_states || en == Enumeration::CapHit {
        return Verdict::Inconclusive {
            reason: "too many final states".into(),
        };
    }

    // Group final states by (relational values, run signatures).
    struct Class {
        rels: BTreeMap<Vec<Value>, Store>,
        heap: Heap,
        sigs: Vec<Sig>,
    }
    let empty = BTreeSet::new();
    let mut classes: BTreeMap<(Vec<Vec<Value>>, Vec<Sig>), Class> = BTreeMap::new();
    for ((vals, heap), rels) in finals {
        let sigs: Vec<Sig> = index
            .get(&(vals, heap.clone()))
            .unwrap_or(&empty)
            .iter()
            .cloned()
            .collect();
        let ck = (rels.keys().cloned().collect::<Vec<_>>(), sigs.clone());
        classes.entry(ck).or_insert(Class { rels, heap, sigs });
    }
    let classes: Vec<Class> = classes.into_values().collect();

    let compatible = |a: &Sig, b: &Sig| -> bool {
        if a.len != b.len || a.ins != b.ins {
            return false;
        }
        if !rel_holds(&prel, &prel_vars, &a.init, &b.init, set) {
            return false;
        }
        match &post.status {
            Status::Ok | Status::Err(_) => a.kind == b.kind && a.outs == b.outs,
            Status::Insec(_) => {
                a.outs != b.outs || matches!((&a.kind, &b.kind), (Kind::Run(x), Kind::Run(y)) if x != y)
            }
        }
    };

    let pairs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|i| (0..classes.len()).map(move |j| (i, j)))
        .collect();
    let failure = pairs.par_iter().find_map_first(|&(i, j)| {
        let (a, b) = (&classes[i], &classes[j]);
        let in_q = a.rels.iter().find_map(|(ra, sa)| {
            b.rels
                .iter()
                .find(|(rb, _)| rel_holds(&qrel, &qrel_vars, ra, rb, set))
                .map(|(_, sb)| (sa, sb))
        });
        let (sa, sb) = in_q?;
        let witnessed = a.sigs.iter().any(|x| b.sigs.iter().any(|y| compatible(x, y)));
        (!witnessed).then(|| Counterexample {
            first: (sa.clone(), a.heap.clone()),
            second: (sb.clone(), b.heap.clone()),
        })
    });
    match failure {
        None => Verdict::Confirmed,
        Some(_) if cut_off => Verdict::Inconclusive {
            reason: "step bound reached".into(),
        },
        Some(counterexample) => Verdict::Refuted { counterexample },
    }
}
