use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assertions::{base_name, PureAtom, SymState};
use crate::lang::{Expr, FunDef, Var, RET};
use crate::symex::{FunctionRun, Outcome, Status};

/// A function-level judgement `[pre] f(params) [status: post]`.
///
/// `pre` and `post` mention only the formals (standing for their values
/// at entry) and logical variables, which are instantiated afresh at every
/// call site. When the function returns a value, `post.stack` binds
/// `ret` to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub function: String,
    pub params: Vec<Var>,
    pub attacker: String,
    pub pre: SymState,
    pub status: Status,
    pub post: SymState,
    pub latent: bool,
    /// Index of the explored path this summary came from.
    pub provenance: usize,
}

impl Summary {
    pub fn ret(&self) -> Option<&Expr> {
        self.post.stack.get(&Var::new(RET))
    }

    /// Logical variables, i.e. everything that is not a formal.
    pub fn logical_vars(&self) -> BTreeSet<Var> {
        let mut vs = state_vars(&self.pre);
        vs.extend(state_vars(&self.post));
        vs.retain(|v| !self.params.contains(v));
        vs
    }

    /// Presumption and result with logical variables given readable names.
    pub fn readable(&self) -> (SymState, SymState) {
        let taken: BTreeSet<String> = self.params.iter().map(|p| p.as_str().to_string()).collect();
        let ren = readable_names(self.logical_vars(), taken);
        (self.pre.subst_map(&ren), self.post.subst_map(&ren))
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (pre, post) = self.readable();
        let params: Vec<&str> = self.params.iter().map(|p| p.as_str()).collect();
        write!(f, "[{}] {}({}) [{}: {}]", pre, self.function, params.join(", "), self.status, post)
    }
}

/// Variables in the pure and spatial parts and in stack terms.
fn state_vars(st: &SymState) -> BTreeSet<Var> {
    let mut out = BTreeSet::new();
    for t in st.stack.values() {
        t.collect_vars(&mut out);
    }
    for p in &st.pure {
        p.collect_vars(&mut out);
    }
    for s in &st.spatial {
        s.collect_vars(&mut out);
    }
    out
}

/// Map `$base_n` to `base` where unambiguous, `base_n` otherwise.
pub(crate) fn readable_names(vars: BTreeSet<Var>, mut taken: BTreeSet<String>) -> BTreeMap<Var, Expr> {
    let mut by_base: BTreeMap<String, Vec<Var>> = BTreeMap::new();
    for v in vars {
        by_base.entry(base_name(v.as_str()).to_string()).or_default().push(v);
    }
    let mut out = BTreeMap::new();
    for (base, vs) in by_base {
        let unique = vs.len() == 1;
        for (i, v) in vs.into_iter().enumerate() {
            let mut name = if unique { base.clone() } else { format!("{base}{}", i + 1) };
            let mut n = 1;
            while taken.contains(&name) {
                n += 1;
                name = format!("{base}_{n}");
            }
            taken.insert(name.clone());
            out.insert(v, Expr::var(&name));
        }
    }
    out
}

/// Turn an explored path of `f` into a summary: the initial value of each
/// formal is renamed back to the formal, locals and final formal values
/// are forgotten, and constraints on variables that no longer matter are
/// dropped.
pub fn externalize(run: &FunctionRun, index: usize, f: &FunDef, attacker: &str) -> Summary {
    let o: &Outcome = &run.outcomes[index];
    let j = run.judgement(o);
    let back: BTreeMap<Var, Expr> = run
        .formals
        .iter()
        .map(|(formal, init)| (init.clone(), Expr::Var(formal.clone())))
        .collect();
    let strip = |st: &SymState| SymState {
        stack: BTreeMap::new(),
        exists: BTreeSet::new(),
        pure: st.pure.clone(),
        spatial: st.spatial.clone(),
    }
    .subst_map(&back);
    let pre = strip(&j.presumption);
    let mut post = strip(&o.post.state);
    if o.post.status.is_ok() && f.returns_value() {
        if let Some(t) = o.post.state.stack.get(&Var::new(RET)) {
            post.stack.insert(Var::new(RET), t.subst_map(&back));
        }
    }
    let mut anchored: BTreeSet<Var> = f.params.iter().cloned().collect();
    anchored.extend(state_vars(&pre));
    let mut sm = Summary {
        function: f.name.clone(),
        params: f.params.clone(),
        attacker: attacker.to_string(),
        pre,
        status: o.post.status.clone(),
        post,
        latent: o.latent,
        provenance: index,
    };
    simplify(&mut sm.post, anchored);
    sm
}

/// Drop pure atoms of `post` not connected, through shared variables, to
/// `anchored`, the heap, the return value or an `insec` atom. Such atoms
/// only constrain existential variables and are satisfiable on their own,
/// so dropping them yields an equivalent assertion.
pub(crate) fn simplify(post: &mut SymState, mut anchored: BTreeSet<Var>) {
    for s in &post.spatial {
        s.collect_vars(&mut anchored);
    }
    for t in post.stack.values() {
        t.collect_vars(&mut anchored);
    }
    for p in post.pure.iter().filter(|p| p.is_insec()) {
        p.collect_vars(&mut anchored);
    }
    let vars: Vec<BTreeSet<Var>> = post.pure.iter().map(PureAtom::free_vars).collect();
    let mut keep = vec![false; post.pure.len()];
    loop {
        let mut changed = false;
        for (i, vs) in vars.iter().enumerate() {
            if !keep[i] && vs.iter().any(|v| anchored.contains(v)) {
                keep[i] = true;
                anchored.extend(vs.iter().cloned());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut i = 0;
    post.pure.retain(|_| {
        i += 1;
        keep[i - 1]
    });
}
