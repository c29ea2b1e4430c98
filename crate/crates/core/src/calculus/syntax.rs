//! Abstract syntax of the value-passing calculus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A communicated value: an integer, a named constant, or a tuple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Sym(String),
    Tuple(Vec<Value>),
}

impl Value {
    pub fn unit() -> Self {
        Value::Tuple(Vec::new())
    }

    pub fn sym(s: &str) -> Self {
        Value::Sym(s.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Sym(s) => f.write_str(s),
            Value::Tuple(vs) => {
                f.write_str("(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                if vs.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// The finite value domain D of a model.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    pub ints: Option<(i64, i64)>,
    pub syms: BTreeSet<String>,
}

impl Domain {
    pub fn contains(&self, v: &Value) -> bool {
        match v {
            Value::Int(i) => matches!(self.ints, Some((lo, hi)) if lo <= *i && *i <= hi),
            Value::Sym(s) => self.syms.contains(s),
            Value::Tuple(vs) => vs.iter().all(|v| self.contains(v)),
        }
    }

    /// |D|, counting atoms only.
    pub fn size(&self) -> usize {
        let ints = self.ints.map_or(0, |(lo, hi)| (hi - lo + 1).max(0) as usize);
        ints + self.syms.len()
    }

    pub fn atoms(&self) -> Vec<Value> {
        let mut out = Vec::new();
        if let Some((lo, hi)) = self.ints {
            out.extend((lo..=hi).map(Value::Int));
        }
        out.extend(self.syms.iter().map(|s| Value::Sym(s.clone())));
        out
    }

    pub fn check(&self, v: Value) -> Result<Value> {
        if self.contains(&v) {
            Ok(v)
        } else {
            Err(Error::DomainEscape {
                value: v.to_string(),
            })
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.syms.iter().cloned().collect();
        if let Some((lo, hi)) = self.ints {
            parts.push(format!("{lo}..{hi}"));
        }
        write!(f, "domain {{{}}}", parts.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    /// Subtraction floored at zero.
    Monus,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Tuple(Vec<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(x: &str) -> Self {
        Expr::Var(x.to_string())
    }

    pub fn sym(s: &str) -> Self {
        Expr::Lit(Value::sym(s))
    }

    pub fn int(i: i64) -> Self {
        Expr::Lit(Value::Int(i))
    }

    /// Evaluates a closed expression. Domain membership is checked by callers.
    pub fn eval(&self) -> Result<Value> {
        match self {
            Expr::Lit(v) => Ok(v.clone()),
            Expr::Var(x) => Err(Error::OpenTerm(x.clone())),
            Expr::Tuple(es) => Ok(Value::Tuple(
                es.iter().map(Expr::eval).collect::<Result<_>>()?,
            )),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval()?, b.eval()?);
                match (a, b) {
                    (Value::Int(x), Value::Int(y)) => {
                        let r = match op {
                            BinOp::Add => x.checked_add(y),
                            BinOp::Sub => x.checked_sub(y),
                            BinOp::Monus => Some(x.saturating_sub(y).max(0)),
                        };
                        r.map(Value::Int).ok_or_else(|| Error::DomainEscape {
                            value: format!("{x} {op:?} {y}"),
                        })
                    }
                    (a, b) => Err(Error::IllFormed(format!(
                        "arithmetic on non-integers {a} and {b}"
                    ))),
                }
            }
        }
    }

    pub fn subst(&self, x: &str, v: &Value) -> Expr {
        match self {
            Expr::Var(y) if y == x => Expr::Lit(v.clone()),
            Expr::Lit(_) | Expr::Var(_) => self.clone(),
            Expr::Tuple(es) => Expr::Tuple(es.iter().map(|e| e.subst(x, v)).collect()),
            Expr::Bin(op, a, b) => Expr::Bin(*op, Box::new(a.subst(x, v)), Box::new(b.subst(x, v))),
        }
    }

    pub fn rename_var(&self, from: &str, to: &str) -> Expr {
        match self {
            Expr::Var(y) if y == from => Expr::Var(to.to_string()),
            Expr::Lit(_) | Expr::Var(_) => self.clone(),
            Expr::Tuple(es) => Expr::Tuple(es.iter().map(|e| e.rename_var(from, to)).collect()),
            Expr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(a.rename_var(from, to)),
                Box::new(b.rename_var(from, to)),
            ),
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(x) => {
                out.insert(x.clone());
            }
            Expr::Lit(_) => {}
            Expr::Tuple(es) => es.iter().for_each(|e| e.free_vars(out)),
            Expr::Bin(_, a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
        }
    }

    fn is_atomic(&self) -> bool {
        matches!(self, Expr::Lit(Value::Int(_)) | Expr::Lit(Value::Sym(_)) | Expr::Var(_))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(x) => f.write_str(x),
            Expr::Tuple(es) => {
                f.write_str("(")?;
                for (i, e) in es.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                if es.len() == 1 {
                    f.write_str(",")?;
                }
                f.write_str(")")
            }
            Expr::Bin(BinOp::Monus, a, b) => write!(f, "monus({a}, {b})"),
            Expr::Bin(op, a, b) => {
                let sym = if *op == BinOp::Add { "+" } else { "-" };
                let wrap = |e: &Expr| {
                    if matches!(e, Expr::Bin(o, ..) if *o != BinOp::Monus) {
                        format!("({e})")
                    } else {
                        e.to_string()
                    }
                };
                write!(f, "{} {sym} {}", wrap(a), wrap(b))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Guard of a match `[lhs op rhs] P`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cond {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

impl Cond {
    pub fn eq(lhs: Expr, rhs: Expr) -> Self {
        Cond {
            op: CmpOp::Eq,
            lhs,
            rhs,
        }
    }

    pub fn eval(&self) -> Result<bool> {
        let (a, b) = (self.lhs.eval()?, self.rhs.eval()?);
        match self.op {
            CmpOp::Eq => Ok(a == b),
            CmpOp::Ne => Ok(a != b),
            op => match (a, b) {
                (Value::Int(x), Value::Int(y)) => Ok(match op {
                    CmpOp::Lt => x < y,
                    CmpOp::Le => x <= y,
                    CmpOp::Gt => x > y,
                    _ => x >= y,
                }),
                (a, b) => Err(Error::IllFormed(format!("ordering {a} against {b}"))),
            },
        }
    }

    fn map(&self, f: impl Fn(&Expr) -> Expr) -> Cond {
        Cond {
            op: self.op,
            lhs: f(&self.lhs),
            rhs: f(&self.rhs),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.op.symbol(), self.rhs)
    }
}

/// Process terms. `Hole` only appears inside context terms.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Proc {
    Inert,
    Output(String, Expr, Box<Proc>),
    /// `ch?(x).P`; `None` receives and discards.
    Input(String, Option<String>, Box<Proc>),
    Par(Box<Proc>, Box<Proc>),
    Restrict(String, Box<Proc>),
    Choice(Box<Proc>, Box<Proc>),
    Match(Cond, Box<Proc>),
    Repl(Box<Proc>),
    /// Definition call. The pairs rename the definition's free channels
    /// `(declared, actual)`, so an enclosing `new` captures them.
    Call(String, Vec<Expr>, Vec<(String, String)>),
    Located(String, Box<Proc>),
    Hole(usize),
}

impl Proc {
    pub fn output(ch: &str, e: Expr, k: Proc) -> Proc {
        Proc::Output(ch.to_string(), e, Box::new(k))
    }

    pub fn input(ch: &str, x: Option<&str>, k: Proc) -> Proc {
        Proc::Input(ch.to_string(), x.map(str::to_string), Box::new(k))
    }

    pub fn par(a: Proc, b: Proc) -> Proc {
        Proc::Par(Box::new(a), Box::new(b))
    }

    /// Right-nested parallel composition of all items; `Inert` when empty.
    pub fn par_all(items: impl IntoIterator<Item = Proc>) -> Proc {
        let mut items: Vec<Proc> = items.into_iter().collect();
        let Some(mut acc) = items.pop() else {
            return Proc::Inert;
        };
        while let Some(p) = items.pop() {
            acc = Proc::par(p, acc);
        }
        acc
    }

    pub fn choice(a: Proc, b: Proc) -> Proc {
        Proc::Choice(Box::new(a), Box::new(b))
    }

    pub fn restrict(ch: &str, p: Proc) -> Proc {
        Proc::Restrict(ch.to_string(), Box::new(p))
    }

    pub fn repl(p: Proc) -> Proc {
        Proc::Repl(Box::new(p))
    }

    pub fn located(l: &str, p: Proc) -> Proc {
        Proc::Located(l.to_string(), Box::new(p))
    }

    pub fn call(name: &str, args: Vec<Expr>) -> Proc {
        Proc::Call(name.to_string(), args, Vec::new())
    }

    /// Substitutes a value for free occurrences of variable `x`.
    pub fn subst(&self, x: &str, v: &Value) -> Proc {
        match self {
            Proc::Inert | Proc::Hole(_) => self.clone(),
            Proc::Output(c, e, k) => Proc::Output(c.clone(), e.subst(x, v), Box::new(k.subst(x, v))),
            Proc::Input(c, y, k) => {
                if y.as_deref() == Some(x) {
                    self.clone()
                } else {
                    Proc::Input(c.clone(), y.clone(), Box::new(k.subst(x, v)))
                }
            }
            Proc::Par(a, b) => Proc::par(a.subst(x, v), b.subst(x, v)),
            Proc::Choice(a, b) => Proc::choice(a.subst(x, v), b.subst(x, v)),
            Proc::Restrict(c, p) => Proc::Restrict(c.clone(), Box::new(p.subst(x, v))),
            Proc::Match(c, p) => Proc::Match(c.map(|e| e.subst(x, v)), Box::new(p.subst(x, v))),
            Proc::Repl(p) => Proc::repl(p.subst(x, v)),
            Proc::Call(n, args, ren) => {
                Proc::Call(n.clone(), args.iter().map(|e| e.subst(x, v)).collect(), ren.clone())
            }
            Proc::Located(l, p) => Proc::Located(l.clone(), Box::new(p.subst(x, v))),
        }
    }

    /// Renames free occurrences of channel `from` to `to`.
    pub fn rename_chan(&self, from: &str, to: &str) -> Proc {
        let rn = |c: &String| if c == from { to.to_string() } else { c.clone() };
        match self {
            Proc::Inert | Proc::Hole(_) => self.clone(),
            Proc::Call(n, args, ren) => Proc::Call(
                n.clone(),
                args.clone(),
                ren.iter().map(|(k, v)| (k.clone(), rn(v))).collect(),
            ),
            Proc::Output(c, e, k) => Proc::Output(rn(c), e.clone(), Box::new(k.rename_chan(from, to))),
            Proc::Input(c, y, k) => Proc::Input(rn(c), y.clone(), Box::new(k.rename_chan(from, to))),
            Proc::Par(a, b) => Proc::par(a.rename_chan(from, to), b.rename_chan(from, to)),
            Proc::Choice(a, b) => Proc::choice(a.rename_chan(from, to), b.rename_chan(from, to)),
            Proc::Restrict(c, p) => {
                if c == from {
                    self.clone()
                } else {
                    Proc::Restrict(c.clone(), Box::new(p.rename_chan(from, to)))
                }
            }
            Proc::Match(c, p) => Proc::Match(c.clone(), Box::new(p.rename_chan(from, to))),
            Proc::Repl(p) => Proc::repl(p.rename_chan(from, to)),
            Proc::Located(l, p) => Proc::Located(l.clone(), Box::new(p.rename_chan(from, to))),
        }
    }

    fn rename_var(&self, from: &str, to: &str) -> Proc {
        match self {
            Proc::Inert | Proc::Hole(_) => self.clone(),
            Proc::Output(c, e, k) => Proc::Output(
                c.clone(),
                e.rename_var(from, to),
                Box::new(k.rename_var(from, to)),
            ),
            Proc::Input(c, y, k) => {
                if y.as_deref() == Some(from) {
                    self.clone()
                } else {
                    Proc::Input(c.clone(), y.clone(), Box::new(k.rename_var(from, to)))
                }
            }
            Proc::Par(a, b) => Proc::par(a.rename_var(from, to), b.rename_var(from, to)),
            Proc::Choice(a, b) => Proc::choice(a.rename_var(from, to), b.rename_var(from, to)),
            Proc::Restrict(c, p) => Proc::Restrict(c.clone(), Box::new(p.rename_var(from, to))),
            Proc::Match(c, p) => Proc::Match(c.map(|e| e.rename_var(from, to)), Box::new(p.rename_var(from, to))),
            Proc::Repl(p) => Proc::repl(p.rename_var(from, to)),
            Proc::Call(n, args, ren) => Proc::Call(
                n.clone(),
                args.iter().map(|e| e.rename_var(from, to)).collect(),
                ren.clone(),
            ),
            Proc::Located(l, p) => Proc::Located(l.clone(), Box::new(p.rename_var(from, to))),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut out);
        out
    }

    fn collect_free_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Proc::Inert | Proc::Hole(_) => {}
            Proc::Output(_, e, k) => {
                e.free_vars(out);
                k.collect_free_vars(out);
            }
            Proc::Input(_, y, k) => {
                let mut inner = BTreeSet::new();
                k.collect_free_vars(&mut inner);
                if let Some(y) = y {
                    inner.remove(y);
                }
                out.extend(inner);
            }
            Proc::Par(a, b) | Proc::Choice(a, b) => {
                a.collect_free_vars(out);
                b.collect_free_vars(out);
            }
            Proc::Restrict(_, p) | Proc::Repl(p) | Proc::Located(_, p) => p.collect_free_vars(out),
            Proc::Match(c, p) => {
                c.lhs.free_vars(out);
                c.rhs.free_vars(out);
                p.collect_free_vars(out);
            }
            Proc::Call(_, args, _) => args.iter().for_each(|e| e.free_vars(out)),
        }
    }

    /// Free channel names (not bound by an enclosing `new`).
    pub fn free_chans(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_chans(&mut out);
        out
    }

    fn collect_free_chans(&self, out: &mut BTreeSet<String>) {
        match self {
            Proc::Inert | Proc::Hole(_) => {}
            Proc::Call(_, _, ren) => out.extend(ren.iter().map(|(_, v)| v.clone())),
            Proc::Output(c, _, k) | Proc::Input(c, _, k) => {
                out.insert(c.clone());
                k.collect_free_chans(out);
            }
            Proc::Par(a, b) | Proc::Choice(a, b) => {
                a.collect_free_chans(out);
                b.collect_free_chans(out);
            }
            Proc::Restrict(c, p) => {
                let mut inner = BTreeSet::new();
                p.collect_free_chans(&mut inner);
                inner.remove(c);
                out.extend(inner);
            }
            Proc::Repl(p) | Proc::Located(_, p) | Proc::Match(_, p) => p.collect_free_chans(out),
        }
    }

    /// Hole indices in left-to-right order.
    pub fn holes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |p| {
            if let Proc::Hole(i) = p {
                out.push(*i);
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit(&self, f: &mut impl FnMut(&Proc)) {
        f(self);
        match self {
            Proc::Inert | Proc::Hole(_) | Proc::Call(..) => {}
            Proc::Output(_, _, k) | Proc::Input(_, _, k) => k.visit(f),
            Proc::Par(a, b) | Proc::Choice(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Proc::Restrict(_, p) | Proc::Repl(p) | Proc::Located(_, p) | Proc::Match(_, p) => {
                p.visit(f)
            }
        }
    }

    /// Syntactic normal form: alpha-renamed binders (`%d` for channels,
    /// `$d` for variables, numbered by binder depth), flattened and sorted
    /// `|` and `+`, and `0` units removed.
    pub fn normalize(&self) -> Proc {
        self.normalize_at(0, 0)
    }

    pub(crate) fn normalize_at(&self, chan_depth: usize, var_depth: usize) -> Proc {
        match self {
            Proc::Inert | Proc::Hole(_) | Proc::Call(..) => self.clone(),
            Proc::Output(c, e, k) => Proc::Output(
                c.clone(),
                e.clone(),
                Box::new(k.normalize_at(chan_depth, var_depth)),
            ),
            Proc::Input(c, None, k) => {
                Proc::Input(c.clone(), None, Box::new(k.normalize_at(chan_depth, var_depth)))
            }
            Proc::Input(c, Some(x), k) => {
                let fresh = format!("${var_depth}");
                let body = k.rename_var(x, &fresh);
                Proc::Input(
                    c.clone(),
                    Some(fresh),
                    Box::new(body.normalize_at(chan_depth, var_depth + 1)),
                )
            }
            Proc::Par(..) => {
                let mut items = Vec::new();
                self.flatten_par(&mut items);
                let mut items: Vec<Proc> = items
                    .into_iter()
                    .map(|p| p.normalize_at(chan_depth, var_depth))
                    .filter(|p| *p != Proc::Inert)
                    .collect();
                items.sort();
                Proc::par_all(items)
            }
            Proc::Choice(..) => {
                let mut items = Vec::new();
                self.flatten_choice(&mut items);
                let mut items: Vec<Proc> = items
                    .into_iter()
                    .map(|p| p.normalize_at(chan_depth, var_depth))
                    .filter(|p| *p != Proc::Inert)
                    .collect();
                items.sort();
                items.dedup();
                let mut it = items.into_iter().rev();
                let Some(mut acc) = it.next() else {
                    return Proc::Inert;
                };
                for p in it {
                    acc = Proc::choice(p, acc);
                }
                acc
            }
            Proc::Restrict(c, p) => {
                if !p.free_chans().contains(c) {
                    return p.normalize_at(chan_depth, var_depth);
                }
                let fresh = format!("%{chan_depth}");
                let body = p.rename_chan(c, &fresh).normalize_at(chan_depth + 1, var_depth);
                Proc::Restrict(fresh, Box::new(body))
            }
            Proc::Match(c, p) => {
                let body = p.normalize_at(chan_depth, var_depth);
                match c.eval() {
                    Ok(true) => body,
                    Ok(false) => Proc::Inert,
                    Err(_) => Proc::Match(c.clone(), Box::new(body)),
                }
            }
            Proc::Repl(p) => match p.normalize_at(chan_depth, var_depth) {
                Proc::Inert => Proc::Inert,
                body => Proc::repl(body),
            },
            Proc::Located(l, p) => Proc::Located(l.clone(), Box::new(p.normalize_at(chan_depth, var_depth))),
        }
    }

    fn flatten_par<'a>(&'a self, out: &mut Vec<&'a Proc>) {
        match self {
            Proc::Par(a, b) => {
                a.flatten_par(out);
                b.flatten_par(out);
            }
            p => out.push(p),
        }
    }

    fn flatten_choice<'a>(&'a self, out: &mut Vec<&'a Proc>) {
        match self {
            Proc::Choice(a, b) => {
                a.flatten_choice(out);
                b.flatten_choice(out);
            }
            p => out.push(p),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        // prec 0: top, 1: operand of `+`, 2: prefix position
        match self {
            Proc::Inert => f.write_str("0"),
            Proc::Hole(i) => write!(f, "[]_{i}"),
            Proc::Output(c, e, k) => {
                if *e == Expr::Lit(Value::unit()) {
                    write!(f, "{c}!")?;
                } else if e.is_atomic() || matches!(e, Expr::Tuple(_)) {
                    write!(f, "{c}!{e}")?;
                } else {
                    write!(f, "{c}!({e})")?;
                }
                if **k != Proc::Inert {
                    f.write_str(".")?;
                    k.fmt_prec(f, 2)?;
                }
                Ok(())
            }
            Proc::Input(c, x, k) => {
                match x {
                    Some(x) => write!(f, "{c}?({x})")?,
                    None => write!(f, "{c}?")?,
                }
                if **k != Proc::Inert {
                    f.write_str(".")?;
                    k.fmt_prec(f, 2)?;
                }
                Ok(())
            }
            Proc::Par(a, b) => {
                if prec > 0 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 1)?;
                f.write_str(" | ")?;
                b.fmt_prec(f, 0)?;
                if prec > 0 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Proc::Choice(a, b) => {
                if prec > 1 {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, 2)?;
                f.write_str(" + ")?;
                b.fmt_prec(f, 1)?;
                if prec > 1 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Proc::Restrict(c, p) => {
                write!(f, "new {c}.")?;
                p.fmt_prec(f, 2)
            }
            Proc::Match(c, p) => {
                write!(f, "[{c}] ")?;
                p.fmt_prec(f, 2)
            }
            Proc::Repl(p) => {
                f.write_str("!")?;
                p.fmt_prec(f, 2)
            }
            Proc::Call(n, args, ren) => {
                f.write_str(n)?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_str(")")?;
                }
                let moved: Vec<_> = ren.iter().filter(|(k, v)| k != v).collect();
                if !moved.is_empty() {
                    f.write_str("{")?;
                    for (i, (k, v)) in moved.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{v}/{k}")?;
                    }
                    f.write_str("}")?;
                }
                Ok(())
            }
            Proc::Located(l, p) => {
                write!(f, "loc {l} [")?;
                p.fmt_prec(f, 0)?;
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for Proc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// `def Name(params) = body`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Proc,
}

impl ProcDef {
    pub fn instantiate(&self, args: &[Value]) -> Proc {
        self.params
            .iter()
            .zip(args)
            .fold(self.body.clone(), |p, (x, v)| p.subst(x, v))
    }
}

/// A process term with numbered holes `[]_1 .. []_m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    pub body: Proc,
}

impl Context {
    pub fn new(body: Proc) -> Self {
        Context { body }
    }

    /// The single-hole identity context.
    pub fn identity() -> Self {
        Context { body: Proc::Hole(1) }
    }

    pub fn hole_count(&self) -> usize {
        self.body.holes().len()
    }
}

/// Adversary declaration as written in a model file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdversarySpec {
    Benign,
    StepCounter { n: u32 },
    FailStop { locs: Vec<String>, max: usize },
    ChannelOmission { chs: Vec<String> },
    ChannelReorderOmission { chs: Vec<String> },
}

impl fmt::Display for AdversarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversarySpec::Benign => f.write_str("benign"),
            AdversarySpec::StepCounter { n } => write!(f, "step_counter(n={n})"),
            AdversarySpec::FailStop { locs, max } => {
                write!(f, "fail_stop(locs={{{}}}, max={max})", locs.join(", "))
            }
            AdversarySpec::ChannelOmission { chs } => {
                write!(f, "channel_omission(chs={{{}}})", chs.join(", "))
            }
            AdversarySpec::ChannelReorderOmission { chs } => {
                write!(f, "channel_reorder_omission(chs={{{}}})", chs.join(", "))
            }
        }
    }
}

/// Parameter value in `check` declarations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Param {
    Name(String),
    Int(i64),
    Set(Vec<String>),
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Name(s) => f.write_str(s),
            Param::Int(i) => write!(f, "{i}"),
            Param::Set(xs) => write!(f, "{{{}}}", xs.join(", ")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckDecl {
    pub kind: String,
    pub params: BTreeMap<String, Param>,
}

impl CheckDecl {
    pub fn name_param(&self, key: &str) -> Option<&str> {
        match self.params.get(key) {
            Some(Param::Name(s)) => Some(s),
            _ => None,
        }
    }

    pub fn int_param(&self, key: &str) -> Option<i64> {
        match self.params.get(key) {
            Some(Param::Int(i)) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for CheckDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "check {}", self.kind)?;
        for (k, v) in &self.params {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// A parsed model file.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub domain: Domain,
    /// Declared channels; `true` marks adversary-mediated channels.
    pub channels: BTreeMap<String, bool>,
    pub locations: BTreeSet<String>,
    pub defs: BTreeMap<String, ProcDef>,
    pub systems: BTreeMap<String, Proc>,
    pub contexts: BTreeMap<String, Context>,
    pub adversaries: BTreeMap<String, AdversarySpec>,
    pub checks: Vec<CheckDecl>,
    /// Free channels of each definition, through the calls it makes.
    #[serde(default)]
    pub def_chans: BTreeMap<String, BTreeSet<String>>,
}

impl Model {
    pub fn system(&self, name: &str) -> Result<&Proc> {
        self.systems.get(name).ok_or_else(|| undeclared(name, "systems"))
    }

    pub fn context(&self, name: &str) -> Result<&Context> {
        self.contexts.get(name).ok_or_else(|| undeclared(name, "contexts"))
    }

    pub fn adversary(&self, name: &str) -> Result<&AdversarySpec> {
        self.adversaries
            .get(name)
            .ok_or_else(|| undeclared(name, "adversaries"))
    }

    /// A call whose channel renaming is the identity.
    pub fn call(&self, name: &str, args: Vec<Expr>) -> Proc {
        let ren = self
            .def_chans
            .get(name)
            .map(|cs| cs.iter().map(|c| (c.clone(), c.clone())).collect())
            .unwrap_or_default();
        Proc::Call(name.to_string(), args, ren)
    }

    /// Looks up a closed process by name: a system, or a parameterless def.
    pub fn process(&self, name: &str) -> Result<Proc> {
        if let Some(p) = self.systems.get(name) {
            return Ok(p.clone());
        }
        match self.defs.get(name) {
            Some(d) if d.params.is_empty() => Ok(self.call(name, Vec::new())),
            Some(d) => Err(Error::ArityMismatch {
                name: name.to_string(),
                expected: d.params.len(),
                found: 0,
            }),
            None => Err(undeclared(name, "systems or definitions")),
        }
    }
}

fn undeclared(name: &str, scope: &str) -> Error {
    Error::UndeclaredName {
        name: name.to_string(),
        scope: scope.to_string(),
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.domain)?;
        if !self.channels.is_empty() {
            let chans: Vec<String> = self
                .channels
                .iter()
                .map(|(c, m)| if *m { format!("{c} mediated") } else { c.clone() })
                .collect();
            writeln!(f, "channel {}", chans.join(", "))?;
        }
        if !self.locations.is_empty() {
            let locs: Vec<&str> = self.locations.iter().map(String::as_str).collect();
            writeln!(f, "location {}", locs.join(", "))?;
        }
        for d in self.defs.values() {
            if d.params.is_empty() {
                writeln!(f, "def {} = {}", d.name, d.body)?;
            } else {
                writeln!(f, "def {}({}) = {}", d.name, d.params.join(", "), d.body)?;
            }
        }
        for (n, p) in &self.systems {
            writeln!(f, "system {n} = {p}")?;
        }
        for (n, c) in &self.contexts {
            writeln!(f, "context {n} = {}", c.body)?;
        }
        for (n, a) in &self.adversaries {
            writeln!(f, "adversary {n} = {a}")?;
        }
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}
