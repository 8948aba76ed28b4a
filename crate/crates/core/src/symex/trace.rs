use std::collections::BTreeSet;

use thiserror::Error;

use crate::assertions::{SpatialAtom, SymState};
use crate::lang::{Cmd, Var};

/// One executed command with the presumption in force before it ran.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceElem {
    pub cmd: Cmd,
    pub pre: SymState,
}

/// Executed path, stored oldest first. [`Trace::recent_first`] gives the
/// most-recent-first view.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    elems: Vec<TraceElem>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("frame mentions `{var}`, which `{cmd}` modifies")]
pub struct FrameClash {
    pub var: Var,
    pub cmd: String,
}

impl Trace {
    pub fn new() -> Trace {
        Trace::default()
    }

    /// Build from elements given most recent first.
    pub fn from_recent_first(mut elems: Vec<TraceElem>) -> Trace {
        elems.reverse();
        Trace { elems }
    }

    pub fn push(&mut self, cmd: Cmd, pre: SymState) {
        self.elems.push(TraceElem { cmd, pre });
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn recent_first(&self) -> impl Iterator<Item = &TraceElem> {
        self.elems.iter().rev()
    }

    /// The first command executed and its presumption.
    pub fn earliest(&self) -> Option<&TraceElem> {
        self.elems.first()
    }

    pub fn latest(&self) -> Option<&TraceElem> {
        self.elems.last()
    }

    pub fn latest_mut(&mut self) -> Option<&mut TraceElem> {
        self.elems.last_mut()
    }
}

/// Star `frame` into every presumption of the trace (the frame rule applied
/// element by element). Fails when some command modifies a variable the
/// frame mentions.
pub fn backprop(frame: &[SpatialAtom], tr: &Trace) -> Result<Trace, FrameClash> {
    let mut fv = BTreeSet::new();
    for a in frame {
        a.collect_vars(&mut fv);
    }
    let mut out = tr.clone();
    for e in &mut out.elems {
        if let Some(var) = e.cmd.mods().intersection(&fv).next() {
            return Err(FrameClash {
                var: var.clone(),
                cmd: e.cmd.to_string(),
            });
        }
        e.pre.spatial.extend(frame.iter().cloned());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{Command, CommandKind, Expr};

    fn pto() -> SpatialAtom {
        SpatialAtom::PointsTo(Expr::var("p"), Expr::var("v"))
    }

    #[test]
    fn empty_trace() {
        assert_eq!(backprop(&[pto()], &Trace::new()), Ok(Trace::new()));
    }

    #[test]
    fn every_element_gains_the_frame() {
        let mut tr = Trace::new();
        tr.push(Command::skip(), SymState::emp());
        tr.push(
            Command::rc(CommandKind::Assign(Var::new("x"), Expr::int(1))),
            SymState::emp(),
        );
        let out = backprop(&[pto()], &tr).unwrap();
        assert!(out.recent_first().all(|e| e.pre.spatial == vec![pto()]));
    }

    #[test]
    fn clash_is_reported() {
        let mut tr = Trace::new();
        tr.push(
            Command::rc(CommandKind::Assign(Var::new("v"), Expr::int(1))),
            SymState::emp(),
        );
        assert!(backprop(&[pto()], &tr).is_err());
    }
}
