//! Reduction semantics: one-step reducts, strong and weak barbs, plugging.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::canon::{Builder, CanonicalState, Component, Guard, Thread};
use super::syntax::{Context, Model, Proc, Value};
use crate::error::{Error, Result};

/// An observable: an output on an unrestricted channel, or the adversary's `err`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Barb {
    Observable { ch: String, val: Value },
    Err,
}

impl Barb {
    pub fn obs(ch: &str, val: Value) -> Self {
        Barb::Observable {
            ch: ch.to_string(),
            val,
        }
    }
}

impl fmt::Display for Barb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Barb::Observable { ch, val } if *val == Value::unit() => write!(f, "{ch}!"),
            Barb::Observable { ch, val } => write!(f, "{ch}!{val}"),
            Barb::Err => f.write_str("err"),
        }
    }
}

/// Set of locations currently up.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Up {
    All,
    Only(BTreeSet<String>),
}

impl Up {
    pub fn none() -> Self {
        Up::Only(BTreeSet::new())
    }

    pub fn allows(&self, loc: Option<&str>) -> bool {
        match (self, loc) {
            (_, None) | (Up::All, _) => true,
            (Up::Only(s), Some(l)) => s.contains(l),
        }
    }
}

/// A labelled step of the system alone. `Tau` is an internal rendezvous;
/// `Send`/`Recv` fire a single prefix on a mediated channel.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    Tau,
    Send { ch: String, val: Value },
    Recv { ch: String, val: Value },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Base,
    Copy { repl: usize, nth: u8 },
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    source: Source,
    idx: usize,
}

struct Soup<'a> {
    base: &'a [Component],
    /// per enabled replicated component: (base index, first copy, second copy)
    copies: Vec<(usize, Vec<Component>, Vec<Component>)>,
    next: u32,
}

impl<'a> Soup<'a> {
    fn build(model: &Model, s: &'a CanonicalState, up: &Up) -> Result<Self> {
        let mut next = s.bound;
        let mut copies = Vec::new();
        for (i, c) in s.comps.iter().enumerate() {
            let Thread::Repl(body) = &c.thread else { continue };
            if !up.allows(c.loc.as_deref()) {
                continue;
            }
            let mut one = Vec::new();
            for _ in 0..2 {
                let mut b = Builder::new(model, next);
                b.flatten(body, c.loc.as_deref())?;
                next = b.next;
                one.push(b.comps);
            }
            let second = one.pop().expect("two copies");
            let first = one.pop().expect("two copies");
            copies.push((i, first, second));
        }
        Ok(Soup {
            base: &s.comps,
            copies,
            next,
        })
    }

    fn comp(&self, slot: Slot) -> &Component {
        match slot.source {
            Source::Base => &self.base[slot.idx],
            Source::Copy { repl, nth } => {
                let (_, a, b) = &self.copies[repl];
                if nth == 1 {
                    &a[slot.idx]
                } else {
                    &b[slot.idx]
                }
            }
        }
    }

    /// Enabled guarded slots; second copies are listed but only usable alongside the first.
    fn slots(&self, up: &Up) -> Vec<Slot> {
        let mut out = Vec::new();
        for (i, c) in self.base.iter().enumerate() {
            if matches!(c.thread, Thread::Sum(_)) && up.allows(c.loc.as_deref()) {
                out.push(Slot {
                    source: Source::Base,
                    idx: i,
                });
            }
        }
        for (r, (_, a, b)) in self.copies.iter().enumerate() {
            for (nth, comps) in [(1u8, a), (2u8, b)] {
                for (i, c) in comps.iter().enumerate() {
                    if matches!(c.thread, Thread::Sum(_)) {
                        out.push(Slot {
                            source: Source::Copy { repl: r, nth },
                            idx: i,
                        });
                    }
                }
            }
        }
        out
    }

    /// Assembles the reduct after firing `fired` (slot, guard, received value).
    fn reduct(
        &self,
        model: &Model,
        fired: &[(Slot, &Guard, Option<&Value>)],
    ) -> Result<CanonicalState> {
        let used = |src: Source, idx: usize| {
            fired
                .iter()
                .any(|(s, _, _)| s.source == src && s.idx == idx)
        };
        let mut comps: Vec<Component> = self
            .base
            .iter()
            .enumerate()
            .filter(|(i, _)| !used(Source::Base, *i))
            .map(|(_, c)| c.clone())
            .collect();
        for (r, (_, a, b)) in self.copies.iter().enumerate() {
            for (nth, copy) in [(1u8, a), (2u8, b)] {
                let src = Source::Copy { repl: r, nth };
                if fired.iter().any(|(s, _, _)| s.source == src) {
                    comps.extend(
                        copy.iter()
                            .enumerate()
                            .filter(|(i, _)| !used(src, *i))
                            .map(|(_, c)| c.clone()),
                    );
                }
            }
        }
        let mut b = Builder::with_comps(model, comps, self.next);
        for (slot, guard, val) in fired {
            let loc = self.comp(*slot).loc.clone();
            match guard {
                Guard::Out { cont, .. } => b.flatten(cont, loc.as_deref())?,
                Guard::In { var, cont, .. } => {
                    let cont = match (var, val) {
                        (Some(x), Some(v)) => cont.subst(x, v),
                        _ => cont.clone(),
                    };
                    b.flatten(&cont, loc.as_deref())?
                }
            }
        }
        Ok(b.finish())
    }
}

fn guards(c: &Component) -> &[Guard] {
    match &c.thread {
        Thread::Sum(gs) => gs,
        Thread::Repl(_) => &[],
    }
}

/// Whether a combination of slots respects the replication discipline:
/// a second copy of `!P` is only used together with its first copy.
fn copies_ok(slots: &[Slot]) -> bool {
    slots.iter().all(|s| match s.source {
        Source::Copy { repl, nth: 2 } => slots
            .iter()
            .any(|o| o.source == Source::Copy { repl, nth: 1 }),
        _ => true,
    })
}

/// All labelled one-step transitions of the system component.
///
/// Rendezvous on channels in `mediated` is disabled; instead single
/// outputs on them yield `Send`, and inputs yield `Recv` for each value
/// offered by `offered(ch)`.
pub fn transitions(
    model: &Model,
    s: &CanonicalState,
    up: &Up,
    mediated: &BTreeSet<String>,
    offered: &dyn Fn(&str) -> Vec<Value>,
) -> Result<Vec<(Action, CanonicalState)>> {
    let soup = Soup::build(model, s, up)?;
    let slots = soup.slots(up);
    let mut out = Vec::new();
    for (i, &si) in slots.iter().enumerate() {
        for gi in guards(soup.comp(si)) {
            match gi {
                Guard::Out { ch, val, .. } if mediated.contains(ch) => {
                    if copies_ok(&[si]) {
                        let st = soup.reduct(model, &[(si, gi, None)])?;
                        out.push((
                            Action::Send {
                                ch: ch.clone(),
                                val: val.clone(),
                            },
                            st,
                        ));
                    }
                }
                Guard::In { ch, .. } if mediated.contains(ch) => {
                    if copies_ok(&[si]) {
                        for v in offered(ch) {
                            let st = soup.reduct(model, &[(si, gi, Some(&v))])?;
                            out.push((
                                Action::Recv {
                                    ch: ch.clone(),
                                    val: v,
                                },
                                st,
                            ));
                        }
                    }
                }
                Guard::Out { ch, val, .. } => {
                    for (j, &sj) in slots.iter().enumerate() {
                        if i == j || !copies_ok(&[si, sj]) {
                            continue;
                        }
                        for gj in guards(soup.comp(sj)) {
                            if let Guard::In { ch: cj, .. } = gj {
                                if cj == ch {
                                    let st = soup.reduct(model, &[(si, gi, None), (sj, gj, Some(val))])?;
                                    out.push((Action::Tau, st));
                                }
                            }
                        }
                    }
                }
                Guard::In { .. } => {}
            }
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// One-step reducts of `s` with locations outside `up` frozen.
pub fn successors(model: &Model, s: &CanonicalState, up: &Up) -> Result<Vec<CanonicalState>> {
    let none = BTreeSet::new();
    let mut out: Vec<CanonicalState> = transitions(model, s, up, &none, &|_| Vec::new())?
        .into_iter()
        .map(|(_, st)| st)
        .collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// Outputs on unrestricted channels that are enabled right now.
pub fn strong_barbs(model: &Model, s: &CanonicalState, up: &Up) -> Result<BTreeSet<Barb>> {
    let soup = Soup::build(model, s, up)?;
    let mut out = BTreeSet::new();
    for slot in soup.slots(up) {
        for g in guards(soup.comp(slot)) {
            if let Guard::Out { ch, val, .. } = g {
                if !CanonicalState::is_bound(ch) {
                    out.insert(Barb::obs(ch, val.clone()));
                }
            }
        }
    }
    Ok(out)
}

/// Barbs reachable within `depth` silent steps.
///
/// With `saturate`, an unexplored frontier at the bound is an error rather
/// than a silent under-approximation.
pub fn weak_barbs(
    model: &Model,
    s: &CanonicalState,
    up: &Up,
    depth: usize,
    saturate: bool,
) -> Result<BTreeSet<Barb>> {
    let mut seen: HashSet<CanonicalState> = HashSet::new();
    let mut queue = VecDeque::new();
    let mut out = BTreeSet::new();
    seen.insert(s.clone());
    queue.push_back((s.clone(), 0usize));
    while let Some((st, d)) = queue.pop_front() {
        out.extend(strong_barbs(model, &st, up)?);
        let succ = successors(model, &st, up)?;
        if d == depth {
            if saturate && succ.iter().any(|n| !seen.contains(n)) {
                return Err(Error::BudgetExceeded(depth));
            }
            continue;
        }
        for n in succ {
            if seen.insert(n.clone()) {
                queue.push_back((n, d + 1));
            }
        }
    }
    Ok(out)
}

/// Fills hole `i` of `ctx` with `fillers[i - 1]`.
pub fn plug(ctx: &Context, fillers: &[Proc]) -> Result<Proc> {
    let holes = ctx.hole_count();
    if holes != fillers.len() {
        return Err(Error::HoleCountMismatch {
            holes,
            fillers: fillers.len(),
        });
    }
    fn go(p: &Proc, fillers: &[Proc], binders: &mut Vec<String>) -> Result<Proc> {
        Ok(match p {
            Proc::Hole(i) => {
                let f = &fillers[i - 1];
                let fv = f.free_vars();
                if let Some(x) = fv.iter().find(|x| binders.contains(x)) {
                    return Err(Error::CaptureViolation(x.clone()));
                }
                if let Some(x) = fv.into_iter().next() {
                    return Err(Error::OpenTerm(x));
                }
                f.clone()
            }
            Proc::Inert | Proc::Call(..) => p.clone(),
            Proc::Output(c, e, k) => Proc::Output(c.clone(), e.clone(), Box::new(go(k, fillers, binders)?)),
            Proc::Input(c, x, k) => {
                if let Some(x) = x {
                    binders.push(x.clone());
                }
                let k = go(k, fillers, binders);
                if x.is_some() {
                    binders.pop();
                }
                Proc::Input(c.clone(), x.clone(), Box::new(k?))
            }
            Proc::Par(a, b) => Proc::par(go(a, fillers, binders)?, go(b, fillers, binders)?),
            Proc::Choice(a, b) => Proc::choice(go(a, fillers, binders)?, go(b, fillers, binders)?),
            Proc::Restrict(c, b) => Proc::Restrict(c.clone(), Box::new(go(b, fillers, binders)?)),
            Proc::Match(c, b) => Proc::Match(c.clone(), Box::new(go(b, fillers, binders)?)),
            Proc::Repl(b) => Proc::repl(go(b, fillers, binders)?),
            Proc::Located(l, b) => Proc::Located(l.clone(), Box::new(go(b, fillers, binders)?)),
        })
    }
    go(&ctx.body, fillers, &mut Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::canon::canonicalize;
    use crate::calculus::parser::{parse_model, parse_process};
    use crate::calculus::syntax::Expr;

    fn model() -> Model {
        parse_model(
            "domain {v, w, 1..2}\nchannel a, d, d1, d2, o\nlocation l1, l2\n\
             def OTP = a!v\ndef BC(i) = a?(x).d1!x\n\
             def WhiteNoise = new t . (!t! | !t?)\n\
             system Sys1 = new a . (BC(1) | OTP)\n\
             context Crep = loc l1 [ ![]_1 ] | loc l2 [ ![]_2 ]",
        )
        .unwrap()
    }

    fn canon(m: &Model, src: &str) -> CanonicalState {
        canonicalize(m, &parse_process(m, src).unwrap()).unwrap()
    }

    fn barbs(list: &[(&str, &str)]) -> BTreeSet<Barb> {
        list.iter().map(|(c, v)| Barb::obs(c, Value::sym(v))).collect()
    }

    #[test]
    fn single_communication() {
        let m = model();
        let s = canon(&m, "a!v.0 | a?(x).d!x.0");
        assert_eq!(successors(&m, &s, &Up::All).unwrap(), vec![canon(&m, "d!v.0")]);
    }

    #[test]
    fn inert_has_no_successors() {
        let m = model();
        assert!(successors(&m, &CanonicalState::inert(), &Up::All).unwrap().is_empty());
    }

    #[test]
    fn sys1_has_exactly_one_reduct() {
        let m = model();
        let s = canon(&m, "Sys1");
        let succ = successors(&m, &s, &Up::All).unwrap();
        assert_eq!(succ, vec![canon(&m, "new a . (d1!v.0 | 0)")]);
        assert!(successors(&m, &succ[0], &Up::All).unwrap().is_empty());
    }

    #[test]
    fn strong_barbs_and_restriction() {
        let m = model();
        assert_eq!(strong_barbs(&m, &canon(&m, "d!v.0"), &Up::All).unwrap(), barbs(&[("d", "v")]));
        assert!(strong_barbs(&m, &canon(&m, "new d . (d!v.0)"), &Up::All).unwrap().is_empty());
        assert!(strong_barbs(&m, &canon(&m, "loc l1 [a!v]"), &Up::none()).unwrap().is_empty());
    }

    #[test]
    fn weak_barbs_cases() {
        let m = model();
        let sys1 = canon(&m, "Sys1");
        assert_eq!(weak_barbs(&m, &sys1, &Up::All, 1, true).unwrap(), barbs(&[("d1", "v")]));
        let wn = canon(&m, "WhiteNoise");
        assert!(weak_barbs(&m, &wn, &Up::All, 5, true).unwrap().is_empty());
        let s = canon(&m, "a!v.0");
        assert_eq!(weak_barbs(&m, &s, &Up::All, 0, false).unwrap(), barbs(&[("a", "v")]));
    }

    #[test]
    fn whitenoise_is_a_self_loop() {
        let m = model();
        let wn = canon(&m, "WhiteNoise");
        assert_eq!(successors(&m, &wn, &Up::All).unwrap(), vec![wn]);
    }

    #[test]
    fn replication_spawns_one_copy_per_step() {
        let m = model();
        let s = canon(&m, "new a . (loc l1 [ !a!v ] | a?(x).d1!x | a?(y).d2!y)");
        let succ = successors(&m, &s, &Up::All).unwrap();
        assert_eq!(succ.len(), 2);
        let blocked = successors(&m, &s, &Up::none()).unwrap();
        assert!(blocked.is_empty());
    }

    #[test]
    fn plug_cases() {
        let m = model();
        let otp = parse_process(&m, "OTP").unwrap();
        let rep = plug(&m.contexts["Crep"], &[otp.clone(), otp.clone()]).unwrap();
        assert_eq!(canon(&m, "loc l1 [ !a!v ] | loc l2 [ !a!v ]"), canonicalize(&m, &rep).unwrap());
        assert_eq!(plug(&Context::identity(), std::slice::from_ref(&otp)).unwrap(), otp);
        assert!(matches!(
            plug(&Context::identity(), &[]),
            Err(Error::HoleCountMismatch { holes: 1, fillers: 0 })
        ));
        let ctx = Context::new(Proc::input("a", Some("x"), Proc::Hole(1)));
        let open = Proc::output("d", Expr::var("x"), Proc::Inert);
        assert_eq!(plug(&ctx, &[open]), Err(Error::CaptureViolation("x".into())));
    }

    #[test]
    fn domain_escape_on_communication() {
        let m = parse_model("domain {0..1}\nchannel a\ndef P(n) = a!(n + 1)\nsystem S = P(1)").unwrap();
        let err = canonicalize(&m, &m.systems["S"]).unwrap_err();
        assert!(matches!(err, Error::DomainEscape { .. }));
    }
}
