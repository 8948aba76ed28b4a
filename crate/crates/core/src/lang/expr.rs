use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lattice::SecLevel;
use super::value::{Value, ValueDomain, Var};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    pub fn is_boolean(self) -> bool {
        !matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    pub fn apply(self, a: Value, b: Value, dom: &ValueDomain) -> Value {
        match self {
            BinOp::Add => dom.wrap(a.0.wrapping_add(b.0)),
            BinOp::Sub => dom.wrap(a.0.wrapping_sub(b.0)),
            BinOp::Mul => dom.wrap(a.0.wrapping_mul(b.0)),
            BinOp::Eq => Value::from_bool(a == b),
            BinOp::Ne => Value::from_bool(a != b),
            BinOp::Lt => Value::from_bool(a < b),
            BinOp::Le => Value::from_bool(a <= b),
            BinOp::Gt => Value::from_bool(a > b),
            BinOp::Ge => Value::from_bool(a >= b),
            BinOp::And => Value::from_bool(a.is_true() && b.is_true()),
            BinOp::Or => Value::from_bool(a.is_true() || b.is_true()),
        }
    }
}

impl UnOp {
    pub fn apply(self, a: Value, dom: &ValueDomain) -> Value {
        match self {
            UnOp::Not => Value::from_bool(!a.is_true()),
            UnOp::Neg => dom.wrap(a.0.wrapping_neg()),
        }
    }
}

/// Pure expression. Evaluation reads only the store.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Const(u64),
    Var(Var),
    Level(SecLevel),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(Var),
}

/// Variable lookup used by [`Expr::eval`].
pub trait Env {
    fn lookup(&self, v: &Var) -> Option<Value>;
}

impl Env for BTreeMap<Var, Value> {
    fn lookup(&self, v: &Var) -> Option<Value> {
        self.get(v).copied()
    }
}

impl<F: Fn(&Var) -> Option<Value>> Env for F {
    fn lookup(&self, v: &Var) -> Option<Value> {
        self(v)
    }
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(Var::new(name))
    }

    pub fn int(n: u64) -> Expr {
        Expr::Const(n)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Eq, a, b)
    }

    pub fn ne(a: Expr, b: Expr) -> Expr {
        Expr::bin(BinOp::Ne, a, b)
    }

    pub fn logical_not(a: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(a))
    }

    /// Whether the expression only ever yields 0 or 1.
    pub fn is_boolean(&self) -> bool {
        match self {
            Expr::Const(n) => *n <= 1,
            Expr::Unary(UnOp::Not, _) => true,
            Expr::Binary(op, _, _) => op.is_boolean(),
            _ => false,
        }
    }

    /// `b = true` normalised to a 0/1 expression.
    pub fn truth(self) -> Expr {
        if self.is_boolean() {
            self
        } else {
            Expr::ne(self, Expr::Const(0))
        }
    }

    /// Logical negation, folding double negation.
    pub fn negate(self) -> Expr {
        match self {
            Expr::Unary(UnOp::Not, inner) if inner.is_boolean() => *inner,
            other => Expr::logical_not(other),
        }
    }

    pub fn eval(&self, env: &dyn Env, dom: &ValueDomain) -> Result<Value, EvalError> {
        Ok(match self {
            Expr::Const(n) => dom.wrap(*n),
            Expr::Var(v) => env.lookup(v).ok_or_else(|| EvalError::Unbound(v.clone()))?,
            Expr::Level(l) => dom.wrap(l.as_value().0),
            Expr::Unary(op, a) => op.apply(a.eval(env, dom)?, dom),
            Expr::Binary(op, a, b) => op.apply(a.eval(env, dom)?, b.eval(env, dom)?, dom),
        })
    }

    /// Value of a closed expression.
    pub fn eval_closed(&self, dom: &ValueDomain) -> Option<Value> {
        self.eval(&|_: &Var| None, dom).ok()
    }

    pub fn free_vars(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Const(_) | Expr::Level(_) => {}
        }
    }

    pub fn mentions(&self, v: &Var) -> bool {
        match self {
            Expr::Var(w) => w == v,
            Expr::Unary(_, a) => a.mentions(v),
            Expr::Binary(_, a, b) => a.mentions(v) || b.mentions(v),
            Expr::Const(_) | Expr::Level(_) => false,
        }
    }

    /// Capture-free substitution (expressions have no binders).
    pub fn subst(&self, f: &dyn Fn(&Var) -> Option<Expr>) -> Expr {
        match self {
            Expr::Var(v) => f(v).unwrap_or_else(|| self.clone()),
            Expr::Unary(op, a) => Expr::Unary(*op, Box::new(a.subst(f))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.subst(f)), Box::new(b.subst(f))),
            Expr::Const(_) | Expr::Level(_) => self.clone(),
        }
    }

    pub fn subst_map(&self, map: &BTreeMap<Var, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        self.subst(&|v| map.get(v).cloned())
    }

    pub fn rename(&self, from: &Var, to: &Var) -> Expr {
        self.subst(&|v| (v == from).then(|| Expr::Var(to.clone())))
    }

    /// The variable, if this expression is exactly one.
    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Expr::Var(v) => Some(v),
            _ => None,
        }
    }
}

pub(crate) fn fmt_expr(e: &Expr, parent_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Const(n) => write!(f, "{n}"),
        Expr::Var(v) => write!(f, "{v}"),
        Expr::Level(l) => write!(f, "{l}"),
        Expr::Unary(op, a) => {
            f.write_str(match op {
                UnOp::Not => "!",
                UnOp::Neg => "-",
            })?;
            fmt_expr(a, 7, f)
        }
        Expr::Binary(op, a, b) => {
            let p = op.precedence();
            let paren = p < parent_prec;
            if paren {
                f.write_str("(")?;
            }
            // left-associative: the right operand needs strictly tighter binding
            fmt_expr(a, p, f)?;
            write!(f, " {} ", op.symbol())?;
            fmt_expr(b, p + 1, f)?;
            if paren {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_expr(self, 0, f)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Evaluate `e` in `s`. Comparisons and boolean connectives yield 0 or 1.
pub fn eval_expr(e: &Expr, s: &dyn Env, dom: &ValueDomain) -> Result<Value, EvalError> {
    e.eval(s, dom)
}
