//! Canonical representatives of closed terms modulo structural congruence.
//!
//! A canonical state is a sorted multiset of components. Top-level
//! restrictions are extruded and their names renumbered `#0, #1, ...`;
//! locations are pushed down onto each component; matches and calls in
//! enabled position are resolved; choices are flattened into guarded sums.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::syntax::{Expr, Model, Proc, Value};
use crate::error::{Error, Result};

/// Unfolding limit for calls in enabled position.
const MAX_UNFOLD: usize = 10_000;
/// Above this many bound names, canonical numbering falls back to a heuristic.
const EXACT_RENAMING_LIMIT: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Guard {
    Out { ch: String, val: Value, cont: Proc },
    In { ch: String, var: Option<String>, cont: Proc },
}

impl Guard {
    pub fn chan(&self) -> &str {
        match self {
            Guard::Out { ch, .. } | Guard::In { ch, .. } => ch,
        }
    }

    fn rename(&self, from: &str, to: &str) -> Guard {
        let rn = |c: &String| if c == from { to.to_string() } else { c.clone() };
        match self {
            Guard::Out { ch, val, cont } => Guard::Out {
                ch: rn(ch),
                val: val.clone(),
                cont: cont.rename_chan(from, to).normalize(),
            },
            Guard::In { ch, var, cont } => Guard::In {
                ch: rn(ch),
                var: var.clone(),
                cont: cont
                    .rename_chan(from, to)
                    .normalize_at(0, usize::from(var.is_some())),
            },
        }
    }

    fn to_proc(&self) -> Proc {
        match self {
            Guard::Out { ch, val, cont } => {
                Proc::Output(ch.clone(), Expr::Lit(val.clone()), Box::new(cont.clone()))
            }
            Guard::In { ch, var, cont } => Proc::Input(ch.clone(), var.clone(), Box::new(cont.clone())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Thread {
    /// A nonempty guarded sum.
    Sum(Vec<Guard>),
    /// A replicated process, kept in syntactic normal form.
    Repl(Proc),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Component {
    pub loc: Option<String>,
    pub thread: Thread,
}

impl Component {
    fn rename(&self, from: &str, to: &str) -> Component {
        let thread = match &self.thread {
            Thread::Sum(gs) => {
                let mut gs: Vec<Guard> = gs.iter().map(|g| g.rename(from, to)).collect();
                gs.sort();
                Thread::Sum(gs)
            }
            Thread::Repl(p) => Thread::Repl(p.rename_chan(from, to).normalize()),
        };
        Component {
            loc: self.loc.clone(),
            thread,
        }
    }

    fn to_proc(&self) -> Proc {
        let body = match &self.thread {
            Thread::Sum(gs) => {
                let mut it = gs.iter().rev().map(Guard::to_proc);
                let mut acc = it.next().unwrap_or(Proc::Inert);
                for p in it {
                    acc = Proc::choice(p, acc);
                }
                acc
            }
            Thread::Repl(p) => Proc::repl(p.clone()),
        };
        match &self.loc {
            Some(l) => Proc::located(l, body),
            None => body,
        }
    }

    fn mentions(&self, ch: &str) -> bool {
        match &self.thread {
            Thread::Sum(gs) => gs.iter().any(|g| {
                g.chan() == ch
                    || match g {
                        Guard::Out { cont, .. } | Guard::In { cont, .. } => cont.free_chans().contains(ch),
                    }
            }),
            Thread::Repl(p) => p.free_chans().contains(ch),
        }
    }
}

/// A closed term in canonical form. Bound channels are named `#0 .. #(bound-1)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalState {
    pub bound: u32,
    pub comps: Vec<Component>,
}

impl CanonicalState {
    pub fn inert() -> Self {
        CanonicalState {
            bound: 0,
            comps: Vec::new(),
        }
    }

    pub fn is_inert(&self) -> bool {
        self.comps.is_empty()
    }

    /// Reassembles a process term (with `#k` names bound at the top).
    pub fn to_proc(&self) -> Proc {
        let body = Proc::par_all(self.comps.iter().map(Component::to_proc));
        (0..self.bound)
            .rev()
            .fold(body, |p, k| Proc::restrict(&format!("#{k}"), p))
    }

    pub fn is_bound(ch: &str) -> bool {
        ch.starts_with('#')
    }

    pub fn mentions(&self, ch: &str) -> bool {
        self.comps.iter().any(|c| c.mentions(ch))
    }
}

impl fmt::Display for CanonicalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_proc())
    }
}

/// Instantiates a definition call, applying its channel renaming.
pub(crate) fn unfold_call(model: &Model, name: &str, args: &[Expr], ren: &[(String, String)]) -> Result<Proc> {
    Builder::new(model, 0).instantiate(name, args, ren)
}

/// Canonicalizes a closed process term.
pub fn canonicalize(model: &Model, p: &Proc) -> Result<CanonicalState> {
    if let Some(x) = p.free_vars().into_iter().next() {
        return Err(Error::OpenTerm(x));
    }
    let mut b = Builder::new(model, 0);
    b.flatten(p, None)?;
    Ok(b.finish())
}

/// Accumulates components; allocates fresh bound names starting at `next`.
pub(crate) struct Builder<'m> {
    model: &'m Model,
    pub(crate) comps: Vec<Component>,
    pub(crate) next: u32,
    unfolds: usize,
}

impl<'m> Builder<'m> {
    pub(crate) fn new(model: &'m Model, next: u32) -> Self {
        Builder {
            model,
            comps: Vec::new(),
            next,
            unfolds: 0,
        }
    }

    pub(crate) fn with_comps(model: &'m Model, comps: Vec<Component>, next: u32) -> Self {
        Builder {
            model,
            comps,
            next,
            unfolds: 0,
        }
    }

    fn fresh(&mut self) -> String {
        let n = format!("#{}", self.next);
        self.next += 1;
        n
    }

    pub(crate) fn flatten(&mut self, p: &Proc, loc: Option<&str>) -> Result<()> {
        match p {
            Proc::Inert => Ok(()),
            Proc::Hole(_) => Err(Error::IllFormed("hole in a process term".into())),
            Proc::Par(a, b) => {
                self.flatten(a, loc)?;
                self.flatten(b, loc)
            }
            Proc::Restrict(c, body) => {
                let n = self.fresh();
                self.flatten(&body.rename_chan(c, &n), loc)
            }
            Proc::Located(l, body) => match loc {
                Some(outer) => Err(Error::IllFormed(format!(
                    "location `{l}` nested inside `{outer}`"
                ))),
                None => {
                    if !self.model.locations.contains(l) {
                        return Err(Error::UndeclaredName {
                            name: l.clone(),
                            scope: "locations".into(),
                        });
                    }
                    self.flatten(body, Some(l))
                }
            },
            Proc::Match(c, body) => {
                if c.eval()? {
                    self.flatten(body, loc)
                } else {
                    Ok(())
                }
            }
            Proc::Repl(body) => {
                let body = self.expand(body, &mut HashSet::new())?.normalize();
                if body != Proc::Inert {
                    let comp = Component {
                        loc: loc.map(str::to_string),
                        thread: Thread::Repl(body),
                    };
                    if !self.comps.contains(&comp) {
                        self.comps.push(comp);
                    }
                }
                Ok(())
            }
            Proc::Call(name, args, ren) => {
                self.unfolds += 1;
                if self.unfolds > MAX_UNFOLD {
                    return Err(Error::UnguardedRecursion { name: name.clone() });
                }
                let body = self.instantiate(name, args, ren)?;
                self.flatten(&body, loc)
            }
            Proc::Output(..) | Proc::Input(..) | Proc::Choice(..) => {
                let mut guards = Vec::new();
                let mut visiting = HashSet::new();
                self.summands(p, &mut guards, &mut visiting)?;
                if !guards.is_empty() {
                    guards.sort();
                    guards.dedup();
                    self.comps.push(Component {
                        loc: loc.map(str::to_string),
                        thread: Thread::Sum(guards),
                    });
                }
                Ok(())
            }
        }
    }

    /// Unfolds calls and resolves matches outside action prefixes, so that
    /// replicated bodies compare up to definition unfolding.
    fn expand(&mut self, p: &Proc, visiting: &mut HashSet<(String, Vec<Value>)>) -> Result<Proc> {
        Ok(match p {
            Proc::Call(name, args, ren) => {
                let vals = args.iter().map(Expr::eval).collect::<Result<Vec<_>>>()?;
                let key = (name.clone(), vals);
                if visiting.contains(&key) {
                    return Ok(p.clone());
                }
                self.unfolds += 1;
                if self.unfolds > MAX_UNFOLD {
                    return Err(Error::UnguardedRecursion { name: name.clone() });
                }
                let body = self.instantiate(name, args, ren)?;
                visiting.insert(key.clone());
                let out = self.expand(&body, visiting);
                visiting.remove(&key);
                out?
            }
            Proc::Match(c, body) => {
                if c.eval()? {
                    self.expand(body, visiting)?
                } else {
                    Proc::Inert
                }
            }
            Proc::Par(a, b) => Proc::par(self.expand(a, visiting)?, self.expand(b, visiting)?),
            Proc::Choice(a, b) => Proc::choice(self.expand(a, visiting)?, self.expand(b, visiting)?),
            Proc::Restrict(c, b) => Proc::Restrict(c.clone(), Box::new(self.expand(b, visiting)?)),
            Proc::Repl(b) => Proc::repl(self.expand(b, visiting)?),
            Proc::Located(l, b) => Proc::Located(l.clone(), Box::new(self.expand(b, visiting)?)),
            Proc::Inert | Proc::Output(..) | Proc::Input(..) | Proc::Hole(_) => p.clone(),
        })
    }

    fn instantiate(&self, name: &str, args: &[Expr], ren: &[(String, String)]) -> Result<Proc> {
        let d = self.model.defs.get(name).ok_or_else(|| Error::UndeclaredName {
            name: name.to_string(),
            scope: "definitions".into(),
        })?;
        if d.params.len() != args.len() {
            return Err(Error::ArityMismatch {
                name: name.to_string(),
                expected: d.params.len(),
                found: args.len(),
            });
        }
        let vals = args
            .iter()
            .map(|e| e.eval().and_then(|v| self.model.domain.check(v)))
            .collect::<Result<Vec<_>>>()?;
        let mut body = d.instantiate(&vals);
        // two phases, so that swapped names do not collide
        for (i, (from, to)) in ren.iter().enumerate() {
            if from != to {
                body = body.rename_chan(from, &format!("#^{i}"));
            }
        }
        for (i, (from, to)) in ren.iter().enumerate() {
            if from != to {
                body = body.rename_chan(&format!("#^{i}"), to);
            }
        }
        Ok(body)
    }

    fn summands(
        &mut self,
        p: &Proc,
        out: &mut Vec<Guard>,
        visiting: &mut HashSet<(String, Vec<Value>)>,
    ) -> Result<()> {
        match p {
            Proc::Inert => Ok(()),
            Proc::Output(ch, e, k) => {
                let val = self.model.domain_or_unit(e.eval()?)?;
                out.push(Guard::Out {
                    ch: ch.clone(),
                    val,
                    cont: k.normalize(),
                });
                Ok(())
            }
            Proc::Input(ch, x, k) => {
                let (var, cont) = match x {
                    Some(x) => {
                        // binder renamed so that alpha-equivalent inputs coincide
                        let n = Proc::Input(ch.clone(), Some(x.clone()), k.clone()).normalize();
                        match n {
                            Proc::Input(_, var, cont) => (var, *cont),
                            _ => unreachable!("normalize preserves input prefixes"),
                        }
                    }
                    None => (None, k.normalize()),
                };
                out.push(Guard::In {
                    ch: ch.clone(),
                    var,
                    cont,
                });
                Ok(())
            }
            Proc::Choice(a, b) => {
                self.summands(a, out, visiting)?;
                self.summands(b, out, visiting)
            }
            Proc::Match(c, body) => {
                if c.eval()? {
                    self.summands(body, out, visiting)
                } else {
                    Ok(())
                }
            }
            Proc::Call(name, args, ren) => {
                let vals = args.iter().map(Expr::eval).collect::<Result<Vec<_>>>()?;
                if !visiting.insert((name.clone(), vals)) {
                    return Ok(());
                }
                self.unfolds += 1;
                if self.unfolds > MAX_UNFOLD {
                    return Err(Error::UnguardedRecursion { name: name.clone() });
                }
                let body = self.instantiate(name, args, ren)?;
                self.summands(&body, out, visiting)
            }
            Proc::Par(..) | Proc::Restrict(..) | Proc::Repl(..) | Proc::Located(..) | Proc::Hole(_) => {
                Err(Error::IllFormed(format!(
                    "choice summand `{p}` is not a guarded process"
                )))
            }
        }
    }

    /// Sorts components and renumbers bound names canonically.
    pub(crate) fn finish(self) -> CanonicalState {
        normal_form(self.comps)
    }
}

impl Model {
    /// Checks a communicated value: unit always passes, atoms must be in D.
    pub fn domain_or_unit(&self, v: Value) -> Result<Value> {
        if v == Value::unit() {
            Ok(v)
        } else {
            self.domain.check(v)
        }
    }
}

fn normal_form(comps: Vec<Component>) -> CanonicalState {
    // drop unused bound names, collect the used ones
    let mut used: BTreeSet<String> = BTreeSet::new();
    for c in &comps {
        collect_bound(c, &mut used);
    }
    let used: Vec<String> = used.into_iter().collect();
    let n = used.len();
    let rename_all = |perm: &[usize]| -> Vec<Component> {
        // two-phase renaming avoids collisions between old and new names
        let mut cs = comps.clone();
        for (i, old) in used.iter().enumerate() {
            let tmp = format!("#~{i}");
            cs = cs.iter().map(|c| c.rename(old, &tmp)).collect();
        }
        for (i, &target) in perm.iter().enumerate() {
            let tmp = format!("#~{i}");
            let new = format!("#{target}");
            cs = cs.iter().map(|c| c.rename(&tmp, &new)).collect();
        }
        dedup_repl(&mut cs);
        cs.sort();
        cs
    };
    let best = if n <= EXACT_RENAMING_LIMIT {
        let mut best: Option<Vec<Component>> = None;
        for perm in permutations(n) {
            let cs = rename_all(&perm);
            if best.as_ref().is_none_or(|b| cs < *b) {
                best = Some(cs);
            }
        }
        best.unwrap_or_default()
    } else {
        // number by first occurrence in the sorted, identity-renamed order
        let ident: Vec<usize> = (0..n).collect();
        let first = rename_all(&ident);
        let mut order: Vec<usize> = Vec::new();
        for c in &first {
            let mut seen = BTreeSet::new();
            collect_bound(c, &mut seen);
            for s in seen {
                let k: usize = s[1..].parse().unwrap_or(0);
                if !order.contains(&k) {
                    order.push(k);
                }
            }
        }
        let mut perm = vec![0; n];
        for (pos, &k) in order.iter().enumerate() {
            perm[k] = pos;
        }
        rename_all(&perm)
    };
    CanonicalState {
        bound: n as u32,
        comps: best,
    }
}

fn dedup_repl(cs: &mut Vec<Component>) {
    let mut seen: BTreeMap<Component, ()> = BTreeMap::new();
    cs.retain(|c| match c.thread {
        Thread::Repl(_) => seen.insert(c.clone(), ()).is_none(),
        Thread::Sum(_) => true,
    });
}

fn collect_bound(c: &Component, out: &mut BTreeSet<String>) {
    let mut add = |ch: &str| {
        if CanonicalState::is_bound(ch) {
            out.insert(ch.to_string());
        }
    };
    match &c.thread {
        Thread::Sum(gs) => {
            for g in gs {
                add(g.chan());
                match g {
                    Guard::Out { cont, .. } | Guard::In { cont, .. } => {
                        cont.free_chans().iter().for_each(|ch| add(ch))
                    }
                }
            }
        }
        Thread::Repl(p) => p.free_chans().iter().for_each(|ch| add(ch)),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let x = left.remove(i);
            prefix.push(x);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..n).collect(), &mut out);
    out
}
