//! Recursive-descent parser for model files.
//!
//! Grammar (process level, loosest first):
//!
//! ```text
//! proc    := choice ('|' choice)*
//! choice  := prefix ('+' prefix)*
//! prefix  := '0' | 'new' chans '.' prefix | '!' prefix | '[' ']' '_' N
//!          | '[' expr cmp expr ']' prefix | 'loc' l '[' proc ']' | '(' proc ')'
//!          | ch '!' value? ('.' prefix)? | ch '?' binder? ('.' prefix)?
//!          | Name ('(' expr,* ')')?
//! ```

use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Tok, Token};
use super::syntax::*;
use crate::error::{Error, Result};

const KEYWORDS: &[&str] = &[
    "domain", "channel", "location", "def", "system", "context", "adversary", "check", "new",
    "loc", "monus", "mediated",
];

/// Parses and validates a complete model file.
pub fn parse_model(text: &str) -> Result<Model> {
    let mut p = Parser::new(text)?;
    let raw = p.model()?;
    resolve(raw)
}

/// Parses a single process term against an existing model's declarations.
pub fn parse_process(model: &Model, text: &str) -> Result<Proc> {
    let mut p = Parser::new(text)?;
    let proc = p.proc()?;
    p.expect_eof()?;
    let r = Resolver::new(model);
    let proc = r.proc(&proc, &mut Vec::new(), &mut Vec::new(), "term")?;
    if !proc.holes().is_empty() {
        return Err(Error::IllFormed("hole outside a context".into()));
    }
    Ok(proc)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

struct RawModel {
    model: Model,
    domain_count: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Self> {
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = &self.toks[self.pos];
        Err(Error::Syntax {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok, what: &str) -> Result<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.err(format!("unexpected {}", describe(self.peek())))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(s)
            }
            t => self.err(format!("expected {what}, found {}", describe(&t))),
        }
    }

    fn model(&mut self) -> Result<RawModel> {
        let mut m = Model::default();
        let mut domain_count = 0;
        loop {
            while self.eat(&Tok::Semi) {}
            let kw = match self.peek().clone() {
                Tok::Eof => break,
                Tok::Ident(s) => s,
                t => return self.err(format!("expected a declaration, found {}", describe(&t))),
            };
            self.bump();
            match kw.as_str() {
                "domain" => {
                    domain_count += 1;
                    m.domain = self.domain()?;
                }
                "channel" => loop {
                    let c = self.ident("channel name")?;
                    let mediated = if self.is_kw("mediated") {
                        self.bump();
                        true
                    } else {
                        false
                    };
                    m.channels.insert(c, mediated);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                },
                "location" => loop {
                    let l = self.ident("location name")?;
                    m.locations.insert(l);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                },
                "def" => {
                    let name = self.ident("definition name")?;
                    let mut params = Vec::new();
                    if self.eat(&Tok::LParen) && !self.eat(&Tok::RParen) {
                        loop {
                            params.push(self.ident("parameter")?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(&Tok::Comma, "`,` or `)`")?;
                        }
                    }
                    self.expect(&Tok::Eq, "`=`")?;
                    let body = self.proc()?;
                    if m.defs.contains_key(&name) {
                        return self.err(format!("duplicate definition `{name}`"));
                    }
                    m.defs.insert(name.clone(), ProcDef { name, params, body });
                }
                "system" => {
                    let name = self.ident("system name")?;
                    self.expect(&Tok::Eq, "`=`")?;
                    let body = self.proc()?;
                    m.systems.insert(name, body);
                }
                "context" => {
                    let name = self.ident("context name")?;
                    self.expect(&Tok::Eq, "`=`")?;
                    let body = self.proc()?;
                    m.contexts.insert(name, Context::new(body));
                }
                "adversary" => {
                    let name = self.ident("adversary name")?;
                    self.expect(&Tok::Eq, "`=`")?;
                    let a = self.adversary()?;
                    m.adversaries.insert(name, a);
                }
                "check" => {
                    let kind = self.ident("check kind")?;
                    let mut params = BTreeMap::new();
                    while matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Eq
                    {
                        let Tok::Ident(k) = self.peek().clone() else { unreachable!() };
                        self.bump();
                        self.bump();
                        let v = self.param()?;
                        params.insert(k, v);
                    }
                    m.checks.push(CheckDecl { kind, params });
                }
                other => {
                    self.pos -= 1;
                    return self.err(format!("unknown declaration `{other}`"));
                }
            }
        }
        Ok(RawModel {
            model: m,
            domain_count,
        })
    }

    fn domain(&mut self) -> Result<Domain> {
        let mut d = Domain::default();
        self.expect(&Tok::LBrace, "`{`")?;
        if self.eat(&Tok::RBrace) {
            return Ok(d);
        }
        loop {
            match self.peek().clone() {
                Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                    self.bump();
                    d.syms.insert(s);
                }
                Tok::Int(_) | Tok::Minus => {
                    let lo = self.int()?;
                    let hi = if self.eat(&Tok::DotDot) { self.int()? } else { lo };
                    if hi < lo {
                        return self.err("empty integer range");
                    }
                    d.ints = Some(match d.ints {
                        Some((a, b)) => (a.min(lo), b.max(hi)),
                        None => (lo, hi),
                    });
                }
                t => return self.err(format!("expected a domain element, found {}", describe(&t))),
            }
            if self.eat(&Tok::RBrace) {
                return Ok(d);
            }
            self.expect(&Tok::Comma, "`,` or `}`")?;
        }
    }

    fn int(&mut self) -> Result<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.bump() {
            Tok::Int(n) => Ok(if neg { -n } else { n }),
            t => {
                self.pos -= 1;
                self.err(format!("expected an integer, found {}", describe(&t)))
            }
        }
    }

    fn param(&mut self) -> Result<Param> {
        match self.peek().clone() {
            Tok::Int(_) | Tok::Minus => Ok(Param::Int(self.int()?)),
            Tok::LBrace => {
                self.bump();
                let mut xs = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        xs.push(self.ident("set element")?);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        self.expect(&Tok::Comma, "`,` or `}`")?;
                    }
                }
                Ok(Param::Set(xs))
            }
            Tok::Ident(_) => Ok(Param::Name(self.ident("parameter value")?)),
            t => self.err(format!("expected a parameter value, found {}", describe(&t))),
        }
    }

    fn adversary(&mut self) -> Result<AdversarySpec> {
        let kind = self.ident("adversary kind")?;
        let mut params = BTreeMap::new();
        if self.eat(&Tok::LParen) && !self.eat(&Tok::RParen) {
            loop {
                let k = self.ident("parameter name")?;
                self.expect(&Tok::Eq, "`=`")?;
                params.insert(k, self.param()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma, "`,` or `)`")?;
            }
        }
        let get_set = |k: &str| -> Option<Vec<String>> {
            match params.get(k) {
                Some(Param::Set(xs)) => Some(xs.clone()),
                Some(Param::Name(x)) => Some(vec![x.clone()]),
                _ => None,
            }
        };
        let get_int = |k: &str| -> Option<i64> {
            match params.get(k) {
                Some(Param::Int(n)) => Some(*n),
                _ => None,
            }
        };
        let bad = |msg: String| Err(Error::BadParams(msg));
        match kind.as_str() {
            "benign" => Ok(AdversarySpec::Benign),
            "step_counter" => match get_int("n") {
                Some(n) if n >= 0 => Ok(AdversarySpec::StepCounter { n: n as u32 }),
                _ => bad("step_counter needs n >= 0".into()),
            },
            "fail_stop" => match (get_set("locs"), get_int("max")) {
                (Some(locs), Some(max)) if max >= 0 => Ok(AdversarySpec::FailStop {
                    locs,
                    max: max as usize,
                }),
                _ => bad("fail_stop needs locs={..} and max >= 0".into()),
            },
            "channel_omission" => match get_set("chs") {
                Some(chs) => Ok(AdversarySpec::ChannelOmission { chs }),
                None => bad("channel_omission needs chs={..}".into()),
            },
            "channel_reorder_omission" => match get_set("chs") {
                Some(chs) => Ok(AdversarySpec::ChannelReorderOmission { chs }),
                None => bad("channel_reorder_omission needs chs={..}".into()),
            },
            other => bad(format!("unknown adversary kind `{other}`")),
        }
    }

    pub(crate) fn proc(&mut self) -> Result<Proc> {
        let mut items = vec![self.choice()?];
        while self.eat(&Tok::Bar) {
            items.push(self.choice()?);
        }
        Ok(Proc::par_all(items))
    }

    fn choice(&mut self) -> Result<Proc> {
        let mut items = vec![self.prefix()?];
        while self.eat(&Tok::Plus) {
            items.push(self.prefix()?);
        }
        let mut it = items.into_iter().rev();
        let mut acc = it.next().expect("nonempty");
        for p in it {
            acc = Proc::choice(p, acc);
        }
        Ok(acc)
    }

    fn prefix(&mut self) -> Result<Proc> {
        match self.peek().clone() {
            Tok::Int(0) => {
                self.bump();
                Ok(Proc::Inert)
            }
            Tok::Bang => {
                self.bump();
                Ok(Proc::repl(self.prefix()?))
            }
            Tok::LParen => {
                self.bump();
                let p = self.proc()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(p)
            }
            Tok::LBrack => {
                self.bump();
                if self.eat(&Tok::RBrack) {
                    return self.hole_index().map(Proc::Hole);
                }
                let lhs = self.expr()?;
                let op = match self.bump() {
                    Tok::Eq => CmpOp::Eq,
                    Tok::Ne => CmpOp::Ne,
                    Tok::Lt => CmpOp::Lt,
                    Tok::Le => CmpOp::Le,
                    Tok::Gt => CmpOp::Gt,
                    Tok::Ge => CmpOp::Ge,
                    t => {
                        self.pos -= 1;
                        return self.err(format!("expected a comparison, found {}", describe(&t)));
                    }
                };
                let rhs = self.expr()?;
                self.expect(&Tok::RBrack, "`]`")?;
                let body = self.prefix()?;
                Ok(Proc::Match(Cond { op, lhs, rhs }, Box::new(body)))
            }
            Tok::Ident(s) if s == "new" => {
                self.bump();
                let mut chans = vec![self.ident("channel name")?];
                while self.eat(&Tok::Comma) {
                    chans.push(self.ident("channel name")?);
                }
                self.eat(&Tok::Dot);
                let body = self.prefix()?;
                Ok(chans
                    .iter()
                    .rev()
                    .fold(body, |p, c| Proc::restrict(c, p)))
            }
            Tok::Ident(s) if s == "loc" => {
                self.bump();
                let l = self.ident("location name")?;
                self.expect(&Tok::LBrack, "`[`")?;
                let body = self.proc()?;
                self.expect(&Tok::RBrack, "`]`")?;
                Ok(Proc::located(&l, body))
            }
            Tok::Ident(_) => {
                let name = self.ident("process or channel name")?;
                match self.peek() {
                    Tok::Bang => {
                        self.bump();
                        let value = self.out_value()?;
                        let k = self.continuation()?;
                        Ok(Proc::Output(name, value, Box::new(k)))
                    }
                    Tok::Query => {
                        self.bump();
                        let binder = self.in_binder()?;
                        let k = self.continuation()?;
                        Ok(Proc::Input(name, binder, Box::new(k)))
                    }
                    _ => {
                        let args = if self.eat(&Tok::LParen) {
                            self.expr_list(Tok::RParen)?
                        } else {
                            Vec::new()
                        };
                        Ok(Proc::Call(name, args, Vec::new()))
                    }
                }
            }
            t => self.err(format!("expected a process, found {}", describe(&t))),
        }
    }

    fn hole_index(&mut self) -> Result<usize> {
        match self.bump() {
            Tok::Ident(s) if s.starts_with('_') && s.len() > 1 => s[1..]
                .parse::<usize>()
                .or_else(|_| self.err("malformed hole index")),
            Tok::Underscore => match self.bump() {
                Tok::Int(n) if n > 0 => Ok(n as usize),
                _ => self.err("expected a positive hole index"),
            },
            _ => {
                self.pos -= 1;
                self.err("expected `_N` after `[]`")
            }
        }
    }

    fn continuation(&mut self) -> Result<Proc> {
        if self.eat(&Tok::Dot) {
            self.prefix()
        } else {
            Ok(Proc::Inert)
        }
    }

    fn out_value(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let es = self.expr_list(Tok::RParen)?;
                Ok(match es.len() {
                    0 => Expr::Lit(Value::unit()),
                    1 => es.into_iter().next().expect("one"),
                    _ => Expr::Tuple(es),
                })
            }
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::int(n))
            }
            Tok::Minus => Ok(Expr::int(self.int()?)),
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(Expr::Var(s))
            }
            _ => Ok(Expr::Lit(Value::unit())),
        }
    }

    fn in_binder(&mut self) -> Result<Option<String>> {
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                if self.eat(&Tok::RParen) {
                    return Ok(None);
                }
                let x = self.ident("variable")?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(Some(x))
            }
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(Some(s))
            }
            _ => Ok(None),
        }
    }

    fn expr_list(&mut self, close: Tok) -> Result<Vec<Expr>> {
        let mut es = Vec::new();
        if self.eat(&close) {
            return Ok(es);
        }
        loop {
            es.push(self.expr()?);
            if self.eat(&close) {
                return Ok(es);
            }
            self.expect(&Tok::Comma, "`,`")?;
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(acc),
            };
            self.bump();
            let rhs = self.atom()?;
            acc = Expr::Bin(op, Box::new(acc), Box::new(rhs));
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::int(n))
            }
            Tok::Minus => Ok(Expr::int(self.int()?)),
            Tok::LParen => {
                self.bump();
                let es = self.expr_list(Tok::RParen)?;
                Ok(match es.len() {
                    0 => Expr::Lit(Value::unit()),
                    1 => es.into_iter().next().expect("one"),
                    _ => Expr::Tuple(es),
                })
            }
            Tok::Ident(s) if s == "monus" => {
                self.bump();
                self.expect(&Tok::LParen, "`(`")?;
                let a = self.expr()?;
                self.expect(&Tok::Comma, "`,`")?;
                let b = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(Expr::Bin(BinOp::Monus, Box::new(a), Box::new(b)))
            }
            Tok::Ident(_) => Ok(Expr::Var(self.ident("expression")?)),
            t => self.err(format!("expected an expression, found {}", describe(&t))),
        }
    }
}

#[allow(dead_code)]
fn is_decl_kw(s: &str) -> bool {
    matches!(
        s,
        "domain" | "channel" | "location" | "def" | "system" | "context" | "adversary" | "check"
    )
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

/// Name resolution and well-formedness checks over a raw parse.
/// Least fixpoint of each definition's free channels, following calls.
fn def_channels(defs: &BTreeMap<String, ProcDef>) -> BTreeMap<String, BTreeSet<String>> {
    fn go(p: &Proc, acc: &BTreeMap<String, BTreeSet<String>>, out: &mut BTreeSet<String>) {
        match p {
            Proc::Inert | Proc::Hole(_) => {}
            Proc::Call(n, _, _) => out.extend(acc.get(n).into_iter().flatten().cloned()),
            Proc::Output(c, _, k) | Proc::Input(c, _, k) => {
                out.insert(c.clone());
                go(k, acc, out);
            }
            Proc::Par(a, b) | Proc::Choice(a, b) => {
                go(a, acc, out);
                go(b, acc, out);
            }
            Proc::Restrict(c, b) => {
                let mut inner = BTreeSet::new();
                go(b, acc, &mut inner);
                inner.remove(c);
                out.extend(inner);
            }
            Proc::Match(_, b) | Proc::Repl(b) | Proc::Located(_, b) => go(b, acc, out),
        }
    }
    let mut acc: BTreeMap<String, BTreeSet<String>> =
        defs.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
    loop {
        let mut changed = false;
        for (n, d) in defs {
            let mut out = BTreeSet::new();
            go(&d.body, &acc, &mut out);
            if out != acc[n] {
                acc.insert(n.clone(), out);
                changed = true;
            }
        }
        if !changed {
            return acc;
        }
    }
}

fn resolve(raw: RawModel) -> Result<Model> {
    if raw.domain_count != 1 {
        return Err(Error::IllFormed(format!(
            "expected exactly one domain declaration, found {}",
            raw.domain_count
        )));
    }
    let mut m = raw.model;
    m.def_chans = def_channels(&m.defs);
    for s in &m.domain.syms {
        if m.channels.contains_key(s) || m.defs.contains_key(s) {
            return Err(Error::IllFormed(format!(
                "domain constant `{s}` clashes with a channel or definition"
            )));
        }
    }
    let r = Resolver::new(&m);
    let mut out = m.clone();
    for (name, d) in &m.defs {
        let mut vars = d.params.clone();
        let body = r.proc(&d.body, &mut vars, &mut Vec::new(), &format!("def {name}"))?;
        if !body.holes().is_empty() {
            return Err(Error::IllFormed(format!("hole in definition `{name}`")));
        }
        out.defs.get_mut(name).expect("present").body = body;
    }
    for (name, p) in &m.systems {
        let body = r.proc(p, &mut Vec::new(), &mut Vec::new(), &format!("system {name}"))?;
        if !body.holes().is_empty() {
            return Err(Error::IllFormed(format!("hole in system `{name}`")));
        }
        out.systems.insert(name.clone(), body);
    }
    for (name, c) in &m.contexts {
        let body = r.proc(&c.body, &mut Vec::new(), &mut Vec::new(), &format!("context {name}"))?;
        check_holes(name, &body)?;
        out.contexts.insert(name.clone(), Context::new(body));
    }
    check_guarded(&out)?;
    for (name, a) in &out.adversaries {
        match a {
            AdversarySpec::FailStop { locs, max } => {
                for l in locs {
                    if !out.locations.contains(l) {
                        return Err(Error::UndeclaredName {
                            name: l.clone(),
                            scope: format!("adversary {name}"),
                        });
                    }
                }
                if *max > locs.len() {
                    return Err(Error::BadParams(format!(
                        "adversary {name}: max failures exceed location count"
                    )));
                }
            }
            AdversarySpec::ChannelOmission { chs } | AdversarySpec::ChannelReorderOmission { chs } => {
                for c in chs {
                    if !out.channels.contains_key(c) {
                        return Err(Error::UndeclaredName {
                            name: c.clone(),
                            scope: format!("adversary {name}"),
                        });
                    }
                }
            }
            _ => {}
        }
    }
    for c in &out.checks {
        check_refs(&out, c)?;
    }
    Ok(out)
}

fn check_holes(name: &str, body: &Proc) -> Result<()> {
    let holes = body.holes();
    let set: BTreeSet<usize> = holes.iter().copied().collect();
    if set.len() != holes.len() || set.iter().copied().ne(1..=holes.len()) {
        return Err(Error::IllFormed(format!(
            "context `{name}` holes must be distinct and numbered from 1"
        )));
    }
    let mut bad = false;
    body.visit(&mut |p| {
        if let Proc::Match(c, b) = p {
            if c.eval() == Ok(false) && !b.holes().is_empty() {
                bad = true;
            }
        }
    });
    if bad {
        return Err(Error::IllFormed(format!(
            "context `{name}` has a hole under an unsatisfiable match"
        )));
    }
    Ok(())
}

fn check_refs(m: &Model, c: &CheckDecl) -> Result<()> {
    for (k, v) in &c.params {
        let Param::Name(n) = v else { continue };
        let ok = match k.as_str() {
            "core" | "reference" | "system" | "left" | "right" => {
                m.systems.contains_key(n) || m.defs.get(n).is_some_and(|d| d.params.is_empty())
            }
            "context" | "env" => m.contexts.contains_key(n),
            "adversary" | "left_adversary" | "right_adversary" | "reference_adversary" => m.adversaries.contains_key(n),
            _ => true,
        };
        if !ok {
            return Err(Error::UndeclaredName {
                name: n.clone(),
                scope: format!("check {}", c.kind),
            });
        }
    }
    Ok(())
}

pub(crate) struct Resolver<'a> {
    m: &'a Model,
}

impl<'a> Resolver<'a> {
    pub(crate) fn new(m: &'a Model) -> Self {
        Resolver { m }
    }

    fn chan(&self, c: &str, bound: &[String], scope: &str) -> Result<()> {
        if bound.iter().any(|b| b == c) || self.m.channels.contains_key(c) {
            Ok(())
        } else {
            Err(Error::UndeclaredName {
                name: c.to_string(),
                scope: scope.to_string(),
            })
        }
    }

    fn expr(&self, e: &Expr, vars: &[String], scope: &str) -> Result<Expr> {
        Ok(match e {
            Expr::Var(x) if vars.iter().any(|v| v == x) => e.clone(),
            Expr::Var(x) if self.m.domain.syms.contains(x) => Expr::Lit(Value::Sym(x.clone())),
            Expr::Var(x) => {
                return Err(Error::UndeclaredName {
                    name: x.clone(),
                    scope: scope.to_string(),
                })
            }
            Expr::Lit(_) => e.clone(),
            Expr::Tuple(es) => Expr::Tuple(
                es.iter()
                    .map(|e| self.expr(e, vars, scope))
                    .collect::<Result<_>>()?,
            ),
            Expr::Bin(op, a, b) => Expr::Bin(
                *op,
                Box::new(self.expr(a, vars, scope)?),
                Box::new(self.expr(b, vars, scope)?),
            ),
        })
    }

    /// Resolves names; `under_prefix` tracks whether we are beneath an action.
    pub(crate) fn proc(
        &self,
        p: &Proc,
        vars: &mut Vec<String>,
        chans: &mut Vec<String>,
        scope: &str,
    ) -> Result<Proc> {
        self.walk(p, vars, chans, scope, false, false)
    }

    fn walk(
        &self,
        p: &Proc,
        vars: &mut Vec<String>,
        chans: &mut Vec<String>,
        scope: &str,
        under_prefix: bool,
        in_loc: bool,
    ) -> Result<Proc> {
        Ok(match p {
            Proc::Inert | Proc::Hole(_) => p.clone(),
            Proc::Output(c, e, k) => {
                self.chan(c, chans, scope)?;
                let e = self.expr(e, vars, scope)?;
                let k = self.walk(k, vars, chans, scope, true, in_loc)?;
                Proc::Output(c.clone(), e, Box::new(k))
            }
            Proc::Input(c, x, k) => {
                self.chan(c, chans, scope)?;
                if let Some(x) = x {
                    vars.push(x.clone());
                }
                let k = self.walk(k, vars, chans, scope, true, in_loc);
                if x.is_some() {
                    vars.pop();
                }
                Proc::Input(c.clone(), x.clone(), Box::new(k?))
            }
            Proc::Par(a, b) => Proc::par(
                self.walk(a, vars, chans, scope, under_prefix, in_loc)?,
                self.walk(b, vars, chans, scope, under_prefix, in_loc)?,
            ),
            Proc::Choice(a, b) => Proc::choice(
                self.walk(a, vars, chans, scope, under_prefix, in_loc)?,
                self.walk(b, vars, chans, scope, under_prefix, in_loc)?,
            ),
            Proc::Restrict(c, body) => {
                chans.push(c.clone());
                let body = self.walk(body, vars, chans, scope, under_prefix, in_loc);
                chans.pop();
                Proc::Restrict(c.clone(), Box::new(body?))
            }
            Proc::Match(c, body) => Proc::Match(
                Cond {
                    op: c.op,
                    lhs: self.expr(&c.lhs, vars, scope)?,
                    rhs: self.expr(&c.rhs, vars, scope)?,
                },
                Box::new(self.walk(body, vars, chans, scope, under_prefix, in_loc)?),
            ),
            Proc::Repl(body) => Proc::repl(self.walk(body, vars, chans, scope, under_prefix, in_loc)?),
            Proc::Call(n, args, _) if args.is_empty() && !self.m.defs.contains_key(n) && self.m.systems.contains_key(n) => {
                self.m.systems[n].clone()
            }
            Proc::Call(n, args, _) => {
                let Some(d) = self.m.defs.get(n) else {
                    return Err(Error::UndeclaredName {
                        name: n.clone(),
                        scope: scope.to_string(),
                    });
                };
                if d.params.len() != args.len() {
                    return Err(Error::ArityMismatch {
                        name: n.clone(),
                        expected: d.params.len(),
                        found: args.len(),
                    });
                }
                self.m.call(
                    n,
                    args.iter()
                        .map(|e| self.expr(e, vars, scope))
                        .collect::<Result<_>>()?,
                )
            }
            Proc::Located(l, body) => {
                if !self.m.locations.contains(l) {
                    return Err(Error::UndeclaredName {
                        name: l.clone(),
                        scope: scope.to_string(),
                    });
                }
                if under_prefix {
                    return Err(Error::IllFormed(format!(
                        "location `{l}` under an action prefix in {scope}"
                    )));
                }
                if in_loc {
                    return Err(Error::IllFormed(format!("nested location `{l}` in {scope}")));
                }
                Proc::Located(
                    l.clone(),
                    Box::new(self.walk(body, vars, chans, scope, under_prefix, true)?),
                )
            }
        })
    }
}

/// Rejects definitions whose recursion can unfold forever without an action.
///
/// Calls in summand position of a choice are allowed to cycle (they unfold to
/// a finite guarded sum with memoization); any cycle through a parallel,
/// replicated, or top-level position is unguarded.
fn check_guarded(m: &Model) -> Result<()> {
    // edge (from, to, through_choice_only)
    let mut edges: BTreeMap<&str, Vec<(String, bool)>> = BTreeMap::new();
    for (name, d) in &m.defs {
        let mut out = Vec::new();
        unguarded_calls(&d.body, true, &mut out);
        edges.insert(name.as_str(), out);
    }
    for start in m.defs.keys() {
        // DFS looking for a path back to start containing a non-choice edge
        let mut stack: Vec<(&str, bool)> = vec![(start.as_str(), false)];
        let mut seen: BTreeSet<(&str, bool)> = BTreeSet::new();
        while let Some((node, tainted)) = stack.pop() {
            if !seen.insert((node, tainted)) {
                continue;
            }
            for (to, choice_only) in edges.get(node).into_iter().flatten() {
                let t = tainted || !choice_only;
                if to == start && t {
                    return Err(Error::UnguardedRecursion { name: start.clone() });
                }
                if let Some((k, _)) = edges.get_key_value(to.as_str()) {
                    stack.push((k, t));
                }
            }
        }
    }
    Ok(())
}

fn unguarded_calls(p: &Proc, choice_only: bool, out: &mut Vec<(String, bool)>) {
    match p {
        Proc::Inert | Proc::Hole(_) | Proc::Output(..) | Proc::Input(..) => {}
        Proc::Call(n, _, _) => out.push((n.clone(), choice_only)),
        Proc::Choice(a, b) => {
            unguarded_calls(a, choice_only, out);
            unguarded_calls(b, choice_only, out);
        }
        Proc::Match(_, b) => unguarded_calls(b, choice_only, out),
        Proc::Par(a, b) => {
            unguarded_calls(a, false, out);
            unguarded_calls(b, false, out);
        }
        Proc::Restrict(_, b) | Proc::Repl(b) | Proc::Located(_, b) => unguarded_calls(b, false, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "domain {v, w}\nchannel a, b, d, d1\nlocation l1\n";

    fn parse(body: &str) -> Result<Model> {
        parse_model(&format!("{HEADER}{body}"))
    }

    #[test]
    fn single_prefix_definition() {
        let m = parse("def P = a!v . 0").unwrap();
        assert_eq!(
            m.defs["P"].body,
            Proc::output("a", Expr::sym("v"), Proc::Inert)
        );
    }

    #[test]
    fn malformed_input_is_syntax_error() {
        let err = parse("def P = | 0").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 4, .. }), "{err:?}");
    }

    #[test]
    fn restricted_system_with_calls() {
        let m = parse(
            "def BC(i) = a?(x).d1!x\ndef OTP = a!v\nsystem Sys1 = new a . (BC(1) | OTP)",
        )
        .unwrap();
        assert_eq!(
            m.systems["Sys1"],
            Proc::restrict(
                "a",
                Proc::par(
                    m.call("BC", vec![Expr::int(1)]),
                    m.call("OTP", vec![])
                )
            )
        );
    }

    #[test]
    fn arity_and_undeclared_names() {
        assert!(matches!(
            parse("def P(x) = a!x\nsystem S = P").unwrap_err(),
            Error::ArityMismatch { .. }
        ));
        assert!(matches!(
            parse("system S = zz!v").unwrap_err(),
            Error::UndeclaredName { .. }
        ));
        assert!(matches!(
            parse("system S = a!u").unwrap_err(),
            Error::UndeclaredName { .. }
        ));
    }

    #[test]
    fn unguarded_recursion_rejected() {
        assert!(matches!(
            parse("def P = P | a!v").unwrap_err(),
            Error::UnguardedRecursion { .. }
        ));
        assert!(matches!(
            parse("def P = !P").unwrap_err(),
            Error::UnguardedRecursion { .. }
        ));
        // choice-position recursion unfolds to a guarded sum
        parse("def S(x) = b?.a!x.S(x) + S(w)").unwrap();
        parse("def P = a!v.P").unwrap();
    }

    #[test]
    fn locations_are_top_level_only() {
        assert!(matches!(
            parse("system S = a!v.loc l1 [ 0 ]").unwrap_err(),
            Error::IllFormed(_)
        ));
        assert!(matches!(
            parse("system S = loc l1 [ loc l1 [ 0 ] ]").unwrap_err(),
            Error::IllFormed(_)
        ));
        parse("system S = loc l1 [ !a!v ]").unwrap();
    }

    #[test]
    fn contexts_and_holes() {
        let m = parse("context C = loc l1 [ ![]_1 ] | []_2").unwrap();
        assert_eq!(m.contexts["C"].hole_count(), 2);
        assert!(parse("context C = []_2").is_err());
        assert!(parse("context C = []_1 | []_1").is_err());
        assert!(parse("system S = []_1").is_err());
    }

    #[test]
    fn domain_declared_exactly_once() {
        assert!(parse_model("channel a").is_err());
        assert!(parse_model("domain {v}\ndomain {w}").is_err());
    }

    #[test]
    fn declarations_round_trip_through_display() {
        let m = parse(
            "def S(x) = b?.a!x.S(x) + S(w)\n\
             def R(p, n) = [n > 0] a!(p + 1).R(monus(p, 1), n) + d?(y).d1!(y, y)\n\
             system Sys = new a . (loc l1 [ !a!v ] | a?(x).d1!x | R(0, 0))\n\
             context C = new a . (loc l1 [ ![]_1 ] | []_2)\n\
             adversary A = fail_stop(locs={l1}, max=1)\n\
             check resilience core=Sys context=C adversary=A engine=explicit",
        )
        .unwrap();
        let text = m.to_string();
        let again = parse_model(&text).unwrap();
        assert_eq!(m, again, "{text}");
    }
}
