//! Recursive-descent parser for `.mc` sources.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use super::ast::{Cmd, Command, CommandKind, FunDef, Label, Pos, Program};
use super::expr::{BinOp, Expr, UnOp};
use super::lattice::Lattice;
use super::value::Var;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: Pos, msg: String },
    #[error("{pos}: duplicate label `{label}`")]
    DuplicateLabel { pos: Pos, label: String },
    #[error("{pos}: duplicate function `{name}`")]
    DuplicateFunction { pos: Pos, name: String },
    #[error("{pos}: call to unknown function `{name}`")]
    UnknownFunction { pos: Pos, name: String },
    #[error("{pos}: `{name}` expects {expected} argument(s), got {got}")]
    Arity {
        pos: Pos,
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("{pos}: recursive call cycle through `{name}` is not supported")]
    Recursion { pos: Pos, name: String },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::DuplicateLabel { pos, .. }
            | ParseError::DuplicateFunction { pos, .. }
            | ParseError::UnknownFunction { pos, .. }
            | ParseError::Arity { pos, .. }
            | ParseError::Recursion { pos, .. } => *pos,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 23] = [
    "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "<", ">", "!", "=", "(", ")", "{", "}", "[",
    "]", ";", ",", ":", "~",
];

const KEYWORDS: [&str; 10] = [
    "skip", "if", "else", "while", "fun", "alloc", "free", "input", "output", "true",
];

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let advance = |i: &mut usize, line: &mut u32, col: &mut u32, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, column: col };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            advance(&mut i, &mut line, &mut col, 2);
            loop {
                if i >= chars.len() {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: "unterminated comment".into(),
                    });
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    advance(&mut i, &mut line, &mut col, 2);
                    break;
                }
                advance(&mut i, &mut line, &mut col, 1);
            }
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let text: String = chars[start..i].iter().collect();
            let n = text.parse::<u64>().map_err(|_| ParseError::Syntax {
                pos,
                msg: format!("integer literal `{text}` out of range"),
            })?;
            out.push((Tok::Int(n), pos));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), pos));
        } else {
            let sym = SYMBOLS.iter().find(|s| {
                s.chars()
                    .enumerate()
                    .all(|(k, sc)| chars.get(i + k) == Some(&sc))
            });
            match sym {
                Some(s) => {
                    advance(&mut i, &mut line, &mut col, s.len());
                    out.push((Tok::Sym(s), pos));
                }
                None => {
                    return Err(ParseError::Syntax {
                        pos,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            }
        }
    }
    out.push((Tok::Eof, Pos { line, column: col }));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    lattice: &'a Lattice,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.at + 1).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax {
            pos: self.pos(),
            msg: msg.into(),
        })
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", Self::describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            self.err(format!("expected `{k}`, found {}", Self::describe(self.peek())))
        }
    }

    fn is_reserved(&self, s: &str) -> bool {
        KEYWORDS.contains(&s) || s == "false" || self.lattice.level(s).is_ok()
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !self.is_reserved(&s) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", Self::describe(&t))),
        }
    }

    fn program(&mut self) -> PResult<(Vec<FunDef>, Vec<Cmd>, Pos)> {
        let mut funs = Vec::new();
        let mut top = Vec::new();
        let top_pos = self.pos();
        while *self.peek() != Tok::Eof {
            if self.is_kw("fun") {
                funs.push(self.fundef()?);
            } else {
                top.push(self.stmt()?);
            }
        }
        Ok((funs, top, top_pos))
    }

    fn fundef(&mut self) -> PResult<FunDef> {
        let pos = self.pos();
        self.expect_kw("fun")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.is_sym(")") {
            loop {
                let ppos = self.pos();
                let p = Var::new(&self.ident()?);
                if params.contains(&p) {
                    return Err(ParseError::Syntax {
                        pos: ppos,
                        msg: format!("duplicate parameter `{p}`"),
                    });
                }
                params.push(p);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        let body = self.block()?;
        Ok(FunDef {
            name,
            params,
            body,
            pos,
        })
    }

    fn block(&mut self) -> PResult<Cmd> {
        let pos = self.pos();
        self.expect_sym("{")?;
        let mut cmds = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unterminated block");
            }
            cmds.push(self.stmt()?);
        }
        self.bump();
        if cmds.is_empty() {
            return Ok(Arc::new(Command::at(CommandKind::Skip, pos)));
        }
        Ok(Command::seq_all(cmds))
    }

    fn stmt(&mut self) -> PResult<Cmd> {
        let pos = self.pos();
        let mk = |k| Arc::new(Command::at(k, pos));
        if let (Tok::Ident(l), Tok::Sym(":")) = (self.peek().clone(), self.peek2().clone()) {
            if self.is_reserved(&l) {
                return self.err(format!("`{l}` cannot be used as a label"));
            }
            self.bump();
            self.bump();
            let inner = self.stmt()?;
            return Ok(mk(CommandKind::Label(Label::new(&l), inner)));
        }
        if self.is_kw("if") {
            self.bump();
            self.expect_sym("(")?;
            let b = self.expr()?;
            self.expect_sym(")")?;
            let c1 = self.block()?;
            let c2 = if self.is_kw("else") {
                self.bump();
                if self.is_kw("if") {
                    self.stmt()?
                } else {
                    self.block()?
                }
            } else {
                Arc::new(Command::at(CommandKind::Skip, self.pos()))
            };
            self.eat_sym(";");
            return Ok(mk(CommandKind::If(b, c1, c2)));
        }
        if self.is_kw("while") {
            self.bump();
            self.expect_sym("(")?;
            let b = self.expr()?;
            self.expect_sym(")")?;
            let body = self.block()?;
            self.eat_sym(";");
            return Ok(mk(CommandKind::While(b, body)));
        }
        let kind = self.simple_stmt()?;
        self.expect_sym(";")?;
        Ok(mk(kind))
    }

    fn simple_stmt(&mut self) -> PResult<CommandKind> {
        if self.is_kw("skip") {
            self.bump();
            return Ok(CommandKind::Skip);
        }
        if self.is_kw("free") {
            self.bump();
            self.expect_sym("(")?;
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(CommandKind::Free(e));
        }
        if self.is_kw("output") {
            self.bump();
            self.expect_sym("(")?;
            let l = self.level()?;
            self.expect_sym(",")?;
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(CommandKind::Output(l, e));
        }
        if self.eat_sym("[") {
            let a = self.expr()?;
            self.expect_sym("]")?;
            self.expect_sym("=")?;
            let e = self.expr()?;
            return Ok(CommandKind::Store(a, e));
        }
        let name = self.ident()?;
        if self.is_sym("(") {
            let args = self.args()?;
            return Ok(CommandKind::Call(None, name, args));
        }
        let x = Var::new(&name);
        self.expect_sym("=")?;
        if self.eat_sym("[") {
            let a = self.expr()?;
            self.expect_sym("]")?;
            return Ok(CommandKind::Load(x, a));
        }
        if self.is_kw("alloc") {
            self.bump();
            self.expect_sym("(")?;
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(CommandKind::Alloc(x, e));
        }
        if self.is_kw("input") {
            self.bump();
            self.expect_sym("(")?;
            let l = self.level()?;
            self.expect_sym(")")?;
            return Ok(CommandKind::Input(x, l));
        }
        if let (Tok::Ident(f), Tok::Sym("(")) = (self.peek().clone(), self.peek2().clone()) {
            if !self.is_reserved(&f) {
                self.bump();
                let args = self.args()?;
                return Ok(CommandKind::Call(Some(x), f, args));
            }
        }
        Ok(CommandKind::Assign(x, self.expr()?))
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    /// Security levels in source must be closed expressions.
    fn level(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let e = self.expr()?;
        if let Some(v) = e.free_vars().into_iter().next() {
            return Err(ParseError::Syntax {
                pos,
                msg: format!("security level must be constant, but mentions `{v}`"),
            });
        }
        Ok(e)
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let Tok::Sym(s) = self.peek() else {
            return None;
        };
        Some(match *s {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(p + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("!") {
            return Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)));
        }
        if self.eat_sym("-") {
            return Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "true" => {
                self.bump();
                Ok(Expr::Const(1))
            }
            Tok::Ident(s) if s == "false" => {
                self.bump();
                Ok(Expr::Const(0))
            }
            Tok::Ident(s) => {
                if let Ok(l) = self.lattice.level(&s) {
                    self.bump();
                    return Ok(Expr::Level(l));
                }
                Ok(Expr::Var(Var::new(&self.ident()?)))
            }
            t => self.err(format!("expected expression, found {}", Self::describe(&t))),
        }
    }
}

/// Name given to the function formed by top-level statements.
pub const IMPLICIT_MAIN: &str = "main";

/// Parse with the default two-point lattice.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    parse_program_with(src, &Lattice::two_point())
}

pub fn parse_program_with(src: &str, lattice: &Lattice) -> Result<Program, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        lattice,
    };
    let (mut funs, top, top_pos) = p.program()?;
    if !top.is_empty() {
        if let Some(f) = funs.iter().find(|f| f.name == IMPLICIT_MAIN) {
            return Err(ParseError::DuplicateFunction {
                pos: f.pos,
                name: IMPLICIT_MAIN.into(),
            });
        }
        funs.push(FunDef {
            name: IMPLICIT_MAIN.into(),
            params: Vec::new(),
            body: Command::seq_all(top),
            pos: top_pos,
        });
    }
    let program = Program { functions: funs };
    check(&program)?;
    Ok(assign_labels(program))
}

/// Parse a single expression (levels resolved against `lattice`).
pub fn parse_expr(src: &str, lattice: &Lattice) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        at: 0,
        lattice,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("unexpected {}", Parser::describe(p.peek())));
    }
    Ok(e)
}

fn check(p: &Program) -> Result<(), ParseError> {
    let mut names = BTreeSet::new();
    for f in &p.functions {
        if !names.insert(f.name.as_str()) {
            return Err(ParseError::DuplicateFunction {
                pos: f.pos,
                name: f.name.clone(),
            });
        }
    }
    let mut labels = BTreeSet::new();
    for f in &p.functions {
        let mut err = None;
        f.body.visit(&mut |c| {
            if err.is_some() {
                return;
            }
            match &c.kind {
                CommandKind::Label(l, _) => {
                    if !labels.insert(l.clone()) {
                        err = Some(ParseError::DuplicateLabel {
                            pos: c.pos,
                            label: l.to_string(),
                        });
                    }
                }
                CommandKind::Call(_, g, args) => match p.function(g) {
                    None => {
                        err = Some(ParseError::UnknownFunction {
                            pos: c.pos,
                            name: g.clone(),
                        })
                    }
                    Some(gd) if gd.params.len() != args.len() => {
                        err = Some(ParseError::Arity {
                            pos: c.pos,
                            name: g.clone(),
                            expected: gd.params.len(),
                            got: args.len(),
                        })
                    }
                    _ => {}
                },
                _ => {}
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    // reject call cycles: depth-first search with an explicit colour map
    let mut colour: BTreeMap<&str, u8> = BTreeMap::new();
    fn dfs<'p>(p: &'p Program, f: &'p FunDef, colour: &mut BTreeMap<&'p str, u8>) -> Result<(), ParseError> {
        colour.insert(&f.name, 1);
        for g in f.body.callees() {
            let gd = p.function(&g).expect("callees checked above");
            match colour.get(gd.name.as_str()) {
                Some(1) => {
                    return Err(ParseError::Recursion {
                        pos: gd.pos,
                        name: gd.name.clone(),
                    })
                }
                Some(_) => {}
                None => dfs(p, gd, colour)?,
            }
        }
        colour.insert(&f.name, 2);
        Ok(())
    }
    for f in &p.functions {
        if !colour.contains_key(f.name.as_str()) {
            dfs(p, f, &mut colour)?;
        }
    }
    Ok(())
}

fn needs_label(k: &CommandKind) -> bool {
    matches!(
        k,
        CommandKind::Load(..)
            | CommandKind::Store(..)
            | CommandKind::Free(_)
            | CommandKind::Output(..)
            | CommandKind::If(..)
            | CommandKind::While(..)
    )
}

struct Labeller {
    taken: BTreeSet<String>,
    next: usize,
}

impl Labeller {
    fn fresh(&mut self) -> String {
        loop {
            self.next += 1;
            let l = format!("L{}", self.next);
            if self.taken.insert(l.clone()) {
                return l;
            }
        }
    }

    fn label(&mut self, c: &Cmd, already: bool) -> Cmd {
        use CommandKind::*;
        let kind = match &c.kind {
            Label(l, inner) => Label(l.clone(), self.label(inner, true)),
            Seq(a, b) => {
                let a = self.label(a, false);
                Seq(a, self.label(b, false))
            }
            If(e, a, b) => {
                if !already {
                    let fresh = self.fresh();
                    return Command::labelled(&fresh, self.label(c, true));
                }
                let a = self.label(a, false);
                If(e.clone(), a, self.label(b, false))
            }
            While(e, body) => {
                if !already {
                    let fresh = self.fresh();
                    return Command::labelled(&fresh, self.label(c, true));
                }
                While(e.clone(), self.label(body, false))
            }
            k if needs_label(k) && !already => {
                let fresh = self.fresh();
                return Command::labelled(&fresh, c.clone());
            }
            k => k.clone(),
        };
        Arc::new(Command::at(kind, c.pos))
    }
}

/// Attach `L<n>` labels, in program order, to every load, store, free,
/// output, conditional and loop that has none.
pub fn assign_labels(mut p: Program) -> Program {
    let mut taken = BTreeSet::new();
    for f in &p.functions {
        for l in f.body.labels() {
            taken.insert(l.to_string());
        }
    }
    let mut lab = Labeller { taken, next: 0 };
    for f in &mut p.functions {
        f.body = lab.label(&f.body, false);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(src: &str) -> Cmd {
        parse_program(src).unwrap().functions[0].body.clone()
    }

    #[test]
    fn skip_statement() {
        assert_eq!(body("skip;").kind, CommandKind::Skip);
    }

    #[test]
    fn explicit_label_wraps_load() {
        let c = body("L1: x = [p];");
        let CommandKind::Label(l, inner) = &c.kind else {
            panic!("expected label, got {c:?}")
        };
        assert_eq!(l.as_str(), "L1");
        assert_eq!(inner.kind, CommandKind::Load(Var::new("x"), Expr::var("p")));
    }

    #[test]
    fn if_with_two_branches() {
        let c = body("if (b>a) { x=1; } else { skip; }");
        let CommandKind::Label(_, inner) = &c.kind else {
            panic!("expected auto label")
        };
        let CommandKind::If(b, c1, c2) = &inner.kind else {
            panic!("expected if")
        };
        assert_eq!(b.to_string(), "b > a");
        assert_eq!(c1.kind, CommandKind::Assign(Var::new("x"), Expr::int(1)));
        assert_eq!(c2.kind, CommandKind::Skip);
    }

    #[test]
    fn auto_labels_avoid_user_labels() {
        let c = body("L1: x = [p]; [p] = 1; free(p);");
        assert_eq!(
            c.labels().iter().map(|l| l.to_string()).collect::<Vec<_>>(),
            vec!["L1", "L2", "L3"]
        );
    }

    #[test]
    fn positions_are_recorded() {
        let p = parse_program("fun f() {\n  skip;\n  x = 1;\n}").unwrap();
        let CommandKind::Seq(a, b) = &p.functions[0].body.kind else {
            panic!()
        };
        assert_eq!(a.pos, Pos { line: 2, column: 3 });
        assert_eq!(b.pos, Pos { line: 3, column: 3 });
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_program("x = ;"),
            Err(ParseError::Syntax { pos: Pos { line: 1, column: 5 }, .. })
        ));
        assert!(matches!(
            parse_program("A: skip; A: skip;"),
            Err(ParseError::DuplicateLabel { .. })
        ));
        assert!(matches!(
            parse_program("x = g(1);"),
            Err(ParseError::UnknownFunction { .. })
        ));
        assert!(matches!(
            parse_program("fun f() { g(); } fun g() { f(); }"),
            Err(ParseError::Recursion { .. })
        ));
        assert!(matches!(
            parse_program("fun f(a) { skip; } f(1, 2);"),
            Err(ParseError::Arity { .. })
        ));
        assert!(matches!(
            parse_program("output(x, 1);"),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn calls_and_levels() {
        let p = parse_program("fun g(a) { ret = a + 1; } y = input(high); x = g(y); output(low, x);")
            .unwrap();
        assert_eq!(p.functions.len(), 2);
        let main = p.function("main").unwrap();
        let callees = main.body.callees();
        assert!(callees.contains("g"));
    }

    #[test]
    fn empty_source() {
        assert_eq!(parse_program("  // nothing\n").unwrap().functions.len(), 0);
    }
}
