//! The analysed language: values, security levels, expressions, commands
//! and programs.

pub mod ast;
pub mod expr;
pub mod lattice;
pub mod parser;
pub mod pretty;
pub mod value;

pub use ast::{Cmd, Command, CommandKind, FunDef, Label, Pos, Program, RET};
pub use expr::{eval_expr, BinOp, Env, EvalError, Expr, UnOp};
pub use lattice::{lattice_leq, Lattice, LatticeError, SecLevel};
pub use parser::{parse_expr, parse_program, parse_program_with, ParseError};
pub use pretty::{print_command, print_program};
pub use value::{Value, ValueDomain, Var};
