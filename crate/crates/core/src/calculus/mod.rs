//! Value-passing process calculus with locations.

pub mod canon;
pub mod lexer;
pub mod parser;
pub mod semantics;
pub mod syntax;

pub use canon::{canonicalize, CanonicalState, Component, Guard, Thread};
pub use parser::{parse_model, parse_process};
pub use semantics::{plug, strong_barbs, successors, transitions, weak_barbs, Action, Barb, Up};
pub use syntax::{
    AdversarySpec, BinOp, CheckDecl, CmpOp, Cond, Context, Domain, Expr, Model, Param, Proc,
    ProcDef, Value,
};
