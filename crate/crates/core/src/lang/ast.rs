use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::expr::Expr;
use super::value::Var;

/// Source position (1-based).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(s: &str) -> Label {
        Label(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type Cmd = Arc<Command>;

#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum CommandKind {
    Skip,
    Assign(Var, Expr),
    Load(Var, Expr),
    Store(Expr, Expr),
    Alloc(Var, Expr),
    Free(Expr),
    Label(Label, Cmd),
    Seq(Cmd, Cmd),
    If(Expr, Cmd, Cmd),
    While(Expr, Cmd),
    /// `output(level, value)`
    Output(Expr, Expr),
    /// `x = input(level)`
    Input(Var, Expr),
    /// Introduced by symbolic execution only; never parsed.
    Assume(Expr),
    /// `x = f(args)`; the target is absent for a bare call statement.
    Call(Option<Var>, String, Vec<Expr>),
}

/// A command with the source position it was parsed from. Equality and
/// hashing ignore positions.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Command {
    pub kind: CommandKind,
    pub pos: Pos,
}

impl PartialEq for Command {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Command {}

impl std::hash::Hash for Command {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state)
    }
}

impl Command {
    pub fn new(kind: CommandKind) -> Command {
        Command {
            kind,
            pos: Pos::default(),
        }
    }

    pub fn at(kind: CommandKind, pos: Pos) -> Command {
        Command { kind, pos }
    }

    pub fn rc(kind: CommandKind) -> Cmd {
        Arc::new(Command::new(kind))
    }

    pub fn skip() -> Cmd {
        Command::rc(CommandKind::Skip)
    }

    pub fn seq(a: Cmd, b: Cmd) -> Cmd {
        Command::rc(CommandKind::Seq(a, b))
    }

    /// Right-nested sequence; an empty list is `skip`.
    pub fn seq_all(mut cmds: Vec<Cmd>) -> Cmd {
        let Some(mut acc) = cmds.pop() else {
            return Command::skip();
        };
        while let Some(c) = cmds.pop() {
            let pos = c.pos;
            acc = Arc::new(Command::at(CommandKind::Seq(c, acc), pos));
        }
        acc
    }

    pub fn labelled(l: &str, c: Cmd) -> Cmd {
        let pos = c.pos;
        Arc::new(Command::at(CommandKind::Label(Label::new(l), c), pos))
    }

    /// The command with every label wrapper removed.
    pub fn strip_labels(&self) -> Command {
        use CommandKind::*;
        let kind = match &self.kind {
            Label(_, c) => return c.strip_labels(),
            Seq(a, b) => Seq(Arc::new(a.strip_labels()), Arc::new(b.strip_labels())),
            If(e, a, b) => If(e.clone(), Arc::new(a.strip_labels()), Arc::new(b.strip_labels())),
            While(e, c) => While(e.clone(), Arc::new(c.strip_labels())),
            k => k.clone(),
        };
        Command::at(kind, self.pos)
    }

    /// Variables written by the command.
    pub fn mods(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_mods(&mut out);
        out
    }

    fn collect_mods(&self, out: &mut BTreeSet<Var>) {
        use CommandKind::*;
        match &self.kind {
            Assign(x, _) | Load(x, _) | Alloc(x, _) | Input(x, _) => {
                out.insert(x.clone());
            }
            Call(Some(x), _, _) => {
                out.insert(x.clone());
            }
            Label(_, c) | While(_, c) => c.collect_mods(out),
            Seq(a, b) | If(_, a, b) => {
                a.collect_mods(out);
                b.collect_mods(out);
            }
            Skip | Store(..) | Free(_) | Output(..) | Assume(_) | Call(None, _, _) => {}
        }
    }

    /// Every variable read or written.
    pub fn vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        use CommandKind::*;
        match &self.kind {
            Skip => {}
            Assign(x, e) | Load(x, e) | Alloc(x, e) | Input(x, e) => {
                out.insert(x.clone());
                e.collect_vars(out);
            }
            Store(a, b) | Output(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Free(e) | Assume(e) => e.collect_vars(out),
            Label(_, c) => c.collect_vars(out),
            Seq(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            If(e, a, b) => {
                e.collect_vars(out);
                a.collect_vars(out);
                b.collect_vars(out);
            }
            While(e, c) => {
                e.collect_vars(out);
                c.collect_vars(out);
            }
            Call(x, _, args) => {
                if let Some(x) = x {
                    out.insert(x.clone());
                }
                for a in args {
                    a.collect_vars(out);
                }
            }
        }
    }

    pub fn labels(&self) -> Vec<Label> {
        let mut out = Vec::new();
        self.visit(&mut |c| {
            if let CommandKind::Label(l, _) = &c.kind {
                out.push(l.clone());
            }
        });
        out
    }

    pub fn callees(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |c| {
            if let CommandKind::Call(_, f, _) = &c.kind {
                out.insert(f.clone());
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut dyn FnMut(&Command)) {
        use CommandKind::*;
        f(self);
        match &self.kind {
            Label(_, c) | While(_, c) => c.visit(f),
            Seq(a, b) | If(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            _ => {}
        }
    }

    /// Position of the command a label is attached to.
    pub fn label_positions(&self) -> BTreeMap<Label, Pos> {
        let mut out = BTreeMap::new();
        self.visit(&mut |c| {
            if let CommandKind::Label(l, inner) = &c.kind {
                out.insert(l.clone(), inner.pos);
            }
        });
        out
    }

    /// Rename every variable through `f`; labels are kept.
    pub fn rename_vars(&self, f: &dyn Fn(&Var) -> Var) -> Command {
        use CommandKind::*;
        let e = |x: &Expr| x.subst(&|v| Some(Expr::Var(f(v))));
        let kind = match &self.kind {
            Skip => Skip,
            Assign(x, a) => Assign(f(x), e(a)),
            Load(x, a) => Load(f(x), e(a)),
            Store(a, b) => Store(e(a), e(b)),
            Alloc(x, a) => Alloc(f(x), e(a)),
            Free(a) => Free(e(a)),
            Label(l, c) => Label(l.clone(), Arc::new(c.rename_vars(f))),
            Seq(a, b) => Seq(Arc::new(a.rename_vars(f)), Arc::new(b.rename_vars(f))),
            If(b, x, y) => If(e(b), Arc::new(x.rename_vars(f)), Arc::new(y.rename_vars(f))),
            While(b, c) => While(e(b), Arc::new(c.rename_vars(f))),
            Output(l, a) => Output(e(l), e(a)),
            Input(x, l) => Input(f(x), e(l)),
            Assume(b) => Assume(e(b)),
            Call(x, g, args) => Call(x.as_ref().map(f), g.clone(), args.iter().map(e).collect()),
        };
        Command::at(kind, self.pos)
    }

    /// Number of atomic commands.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |c| {
            if !matches!(c.kind, CommandKind::Seq(..) | CommandKind::Label(..)) {
                n += 1;
            }
        });
        n
    }
}

/// Name of the local holding a function's return value.
pub const RET: &str = "ret";

#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct FunDef {
    pub name: String,
    pub params: Vec<Var>,
    pub body: Cmd,
    pub pos: Pos,
}

impl FunDef {
    /// Variables of the body that are not parameters. They start at 0.
    pub fn locals(&self) -> BTreeSet<Var> {
        let mut vs = self.body.vars();
        for p in &self.params {
            vs.remove(p);
        }
        vs
    }

    pub fn returns_value(&self) -> bool {
        self.body.vars().contains(&Var::new(RET))
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<FunDef>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&FunDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// Functions ordered callees-first.
    pub fn bottom_up_order(&self) -> Vec<&FunDef> {
        let mut done = BTreeSet::new();
        let mut out = Vec::new();
        fn visit<'p>(p: &'p Program, f: &'p FunDef, done: &mut BTreeSet<String>, out: &mut Vec<&'p FunDef>) {
            if !done.insert(f.name.clone()) {
                return;
            }
            for g in f.body.callees() {
                if let Some(gd) = p.function(&g) {
                    visit(p, gd, done, out);
                }
            }
            out.push(f);
        }
        for f in &self.functions {
            visit(self, f, &mut done, &mut out);
        }
        out
    }

    /// Copy of the program where every call is replaced by the callee body
    /// (parameters and locals renamed into the callee's frame namespace).
    pub fn inline_calls(&self, c: &Command) -> Command {
        use CommandKind::*;
        let kind = match &c.kind {
            Call(target, f, args) => match self.function(f) {
                Some(fd) => return inline_body(self, fd, target.as_ref(), args, c.pos, true),
                None => c.kind.clone(),
            },
            Label(l, inner) => Label(l.clone(), Arc::new(self.inline_calls(inner))),
            Seq(a, b) => Seq(Arc::new(self.inline_calls(a)), Arc::new(self.inline_calls(b))),
            If(e, a, b) => If(e.clone(), Arc::new(self.inline_calls(a)), Arc::new(self.inline_calls(b))),
            While(e, b) => While(e.clone(), Arc::new(self.inline_calls(b))),
            k => k.clone(),
        };
        Command::at(kind, c.pos)
    }
}

pub(crate) fn frame_var(f: &str, v: &Var) -> Var {
    Var::new(&format!("{f}.{v}"))
}

/// Body of `f` as a command running in the caller's store: arguments are
/// copied into `f.param`, locals of `f` are reset to 0, and `ret` is copied
/// into the target at the end. Nested calls are inlined as well when
/// `deep` is set.
pub(crate) fn inline_body(
    p: &Program,
    f: &FunDef,
    target: Option<&Var>,
    args: &[Expr],
    pos: Pos,
    deep: bool,
) -> Command {
    let name = f.name.clone();
    let mut cmds: Vec<Cmd> = Vec::new();
    for (param, arg) in f.params.iter().zip(args) {
        cmds.push(Arc::new(Command::at(
            CommandKind::Assign(frame_var(&name, param), arg.clone()),
            pos,
        )));
    }
    for local in f.locals() {
        cmds.push(Arc::new(Command::at(
            CommandKind::Assign(frame_var(&name, &local), Expr::Const(0)),
            pos,
        )));
    }
    let renamed = f.body.rename_vars(&|v| frame_var(&name, v));
    let body = if deep { p.inline_calls(&renamed) } else { renamed };
    cmds.push(Arc::new(body));
    if let Some(t) = target {
        cmds.push(Arc::new(Command::at(
            CommandKind::Assign(t.clone(), Expr::Var(frame_var(&name, &Var::new(RET)))),
            pos,
        )));
    }
    let seq = Command::seq_all(cmds);
    Command::at(seq.kind.clone(), pos)
}
