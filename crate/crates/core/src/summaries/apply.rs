use std::collections::{BTreeMap, BTreeSet};

use crate::assertions::{
    biabduce, check_state, provably_equal, Engine, PureAtom, SatResult, Setting, SpatialAtom, SymState, VarGen,
};
use crate::lang::{Expr, Var};
use crate::symex::Status;

use super::summary::Summary;

/// A summary instantiated at a call site.
#[derive(Clone, Debug)]
pub struct Applied {
    /// Cells the caller must additionally presume.
    pub anti_frame: Vec<SpatialAtom>,
    /// Caller state at the call, strengthened by the anti-frame and the
    /// summary's pure presumption.
    pub pre: SymState,
    pub post: SymState,
    pub status: Status,
    pub latent: bool,
}

/// Instantiate `sm` with argument terms `args` in `caller`. `None` when
/// the footprint contradicts the caller's heap or the combined state is
/// unsatisfiable.
pub fn apply_summary(
    sm: &Summary,
    caller: &SymState,
    args: &[Expr],
    target: Option<&Var>,
    gen: &mut VarGen,
    set: &Setting,
    engine: Engine,
) -> Option<Applied> {
    if args.len() != sm.params.len() {
        return None;
    }
    let mut inst: BTreeMap<Var, Expr> = sm.params.iter().cloned().zip(args.iter().cloned()).collect();
    for v in sm.logical_vars() {
        inst.insert(v.clone(), Expr::Var(gen.fresh(v.as_str())));
    }
    let pre = sm.pre.subst_map(&inst);
    let post = sm.post.subst_map(&inst);

    let mut cur = caller.clone();
    for p in &pre.pure {
        cur.add_pure(p.clone());
    }
    let mut anti_frame = Vec::new();
    let mut abduced_invalid = false;
    for need in &pre.spatial {
        let b = biabduce(need, &cur, set, engine.mode())?;
        if b.matched.is_some() {
            cur.spatial = b.frame;
            for e in b.equalities {
                cur.add_pure(e);
            }
        } else {
            abduced_invalid |= matches!(need, SpatialAtom::Invalid(_));
            anti_frame.push(need.clone());
        }
    }
    let forced = pre.pure.iter().all(|a| match a {
        PureAtom::Expr(e) => provably_equal(caller, &e.clone().truth(), &Expr::Const(1), set, engine.mode()),
        _ => false,
    });
    let mut at_call = caller.clone();
    for p in &pre.pure {
        at_call.add_pure(p.clone());
    }
    at_call.spatial.extend(anti_frame.iter().cloned());

    let mut result = cur;
    for p in &post.pure {
        result.add_pure(p.clone());
    }
    result.spatial.extend(post.spatial.iter().cloned());
    if sm.status.is_ok() {
        if let Some(x) = target {
            let ret = post.stack.values().next().cloned().unwrap_or(Expr::Const(0));
            result.stack.insert(x.clone(), ret);
        }
    }
    match check_state(&result, set, engine) {
        SatResult::Sat(_) => {}
        _ => return None,
    }
    let latent = matches!(sm.status, Status::Err(_)) && sm.latent && (abduced_invalid || !forced);
    Some(Applied {
        anti_frame,
        pre: at_call,
        post: result,
        status: sm.status.clone(),
        latent,
    })
}

/// The part of `st` relevant to `args`: pure atoms sharing variables with
/// the arguments (transitively), and cells whose address involves such a
/// variable together with whatever their contents mention.
pub fn relevant_slice(st: &SymState, args: &[Expr]) -> SymState {
    let mut reach: BTreeSet<Var> = BTreeSet::new();
    for a in args {
        st.term(a).collect_vars(&mut reach);
    }
    let mut pure_in = vec![false; st.pure.len()];
    let mut cell_in = vec![false; st.spatial.len()];
    loop {
        let mut changed = false;
        for (i, p) in st.pure.iter().enumerate() {
            if !pure_in[i] && p.free_vars().iter().any(|v| reach.contains(v)) {
                pure_in[i] = true;
                p.collect_vars(&mut reach);
                changed = true;
            }
        }
        for (i, s) in st.spatial.iter().enumerate() {
            if !cell_in[i] && s.addr().free_vars().iter().any(|v| reach.contains(v)) {
                cell_in[i] = true;
                s.collect_vars(&mut reach);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    SymState {
        stack: st
            .stack
            .iter()
            .filter(|(x, _)| reach.contains(*x))
            .map(|(x, t)| (x.clone(), t.clone()))
            .collect(),
        exists: st.exists.iter().filter(|v| reach.contains(*v)).cloned().collect(),
        pure: st
            .pure
            .iter()
            .zip(&pure_in)
            .filter(|(_, k)| **k)
            .map(|(p, _)| p.clone())
            .collect(),
        spatial: st
            .spatial
            .iter()
            .zip(&cell_in)
            .filter(|(_, k)| **k)
            .map(|(s, _)| s.clone())
            .collect(),
    }
}
