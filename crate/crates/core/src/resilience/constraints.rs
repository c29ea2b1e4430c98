//! Self-similarity checks on a context around its core process.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calculus::canon::unfold_call;
use crate::calculus::{canonicalize, plug, successors, weak_barbs, Barb, Context, Expr, Model, Proc, Up, Value};
use crate::error::{Error, Result};
use crate::ts::{explore, ProcessTs};

/// Result of one condition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail { counterexample: String },
    Inconclusive { reason: String },
}

impl Outcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, Outcome::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Outcome::Fail { .. })
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Pass => f.write_str("pass"),
            Outcome::Fail { counterexample } => write!(f, "fail ({counterexample})"),
            Outcome::Inconclusive { reason } => write!(f, "inconclusive ({reason})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The syntactic sufficient condition held; the semantic checks confirm it.
    Structural,
    BoundedSemantic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// Every move of the core lifts to a move of the plugged context.
    pub moves_lift: Outcome,
    /// The core's weak barbs survive inside the context.
    pub barbs_preserved: Outcome,
    /// The empty context shows no barbs of its own.
    pub no_context_barbs: Outcome,
    /// Moves of the context alone keep every hole enabled.
    pub context_transparent: Outcome,
    pub method: Method,
    pub depth: usize,
}

impl ConstraintReport {
    pub fn conditions(&self) -> [(&'static str, &Outcome); 4] {
        [
            ("moves_lift", &self.moves_lift),
            ("barbs_preserved", &self.barbs_preserved),
            ("no_context_barbs", &self.no_context_barbs),
            ("context_transparent", &self.context_transparent),
        ]
    }

    pub fn all_pass(&self) -> bool {
        self.conditions().iter().all(|(_, o)| o.is_pass())
    }

    pub fn first_failure(&self) -> Option<(&'static str, &Outcome)> {
        self.conditions().into_iter().find(|(_, o)| o.is_fail())
    }
}

/// State budget for each bounded exploration.
const STATE_CAP: usize = 20_000;

/// Checks the four transparency conditions of `c` around `q`, exploring to `depth`.
/// Every hole is filled with `q`.
pub fn check_context_constraints(model: &Model, c: &Context, q: &Proc, depth: usize) -> Result<ConstraintReport> {
    let holes = c.hole_count();
    plug(c, &vec![q.clone(); holes])?;
    let structural = holes_enabled(&c.body, false) && !skeleton_outputs(model, &c.body)?;
    let core = explore(&ProcessTs::new(model, q)?, STATE_CAP, Some(depth))?;
    let capped = core.len() >= STATE_CAP;
    let mut report = ConstraintReport {
        moves_lift: moves_lift(model, c, q, &core)?,
        barbs_preserved: barbs_preserved(model, c, q, &core, depth)?,
        no_context_barbs: no_context_barbs(model, c, depth)?,
        context_transparent: context_transparent(model, c, depth)?,
        method: if structural { Method::Structural } else { Method::BoundedSemantic },
        depth,
    };
    if capped {
        for o in [&mut report.moves_lift, &mut report.barbs_preserved] {
            if o.is_pass() {
                *o = Outcome::Inconclusive {
                    reason: format!("core exceeds {STATE_CAP} states"),
                };
            }
        }
    }
    Ok(report)
}

/// Holes sit at top level: not under a prefix, a choice, or a match.
fn holes_enabled(p: &Proc, guarded: bool) -> bool {
    match p {
        Proc::Hole(_) => !guarded,
        Proc::Inert | Proc::Call(..) => true,
        Proc::Output(_, _, k) | Proc::Input(_, _, k) => holes_enabled(k, true),
        Proc::Choice(a, b) => holes_enabled(a, true) && holes_enabled(b, true),
        Proc::Match(_, k) => holes_enabled(k, true),
        Proc::Par(a, b) => holes_enabled(a, guarded) && holes_enabled(b, guarded),
        Proc::Restrict(_, k) | Proc::Repl(k) | Proc::Located(_, k) => holes_enabled(k, guarded),
    }
}

/// Whether the context skeleton contains an output on a free channel.
fn skeleton_outputs(model: &Model, p: &Proc) -> Result<bool> {
    fn go(model: &Model, p: &Proc, bound: &mut Vec<String>, calls: &mut BTreeSet<String>) -> Result<bool> {
        Ok(match p {
            Proc::Hole(_) | Proc::Inert => false,
            Proc::Output(ch, _, k) => !bound.contains(ch) || go(model, k, bound, calls)?,
            Proc::Input(_, _, k) | Proc::Match(_, k) | Proc::Repl(k) | Proc::Located(_, k) => {
                go(model, k, bound, calls)?
            }
            Proc::Par(a, b) | Proc::Choice(a, b) => go(model, a, bound, calls)? || go(model, b, bound, calls)?,
            Proc::Restrict(ch, k) => {
                bound.push(ch.clone());
                let r = go(model, k, bound, calls);
                bound.pop();
                r?
            }
            Proc::Call(name, args, ren) => {
                // renamings are per call site, so key on the actual channels too
                let key = format!("{name}{ren:?}");
                if !calls.insert(key) {
                    return Ok(false);
                }
                let args: Vec<Expr> = args.clone();
                let body = unfold_call(model, name, &args, ren)?;
                go(model, &body, bound, calls)?
            }
        })
    }
    go(model, p, &mut Vec::new(), &mut BTreeSet::new())
}

fn hole_replicated(p: &Proc, i: usize, under: bool) -> Option<bool> {
    match p {
        Proc::Hole(j) if *j == i => Some(under),
        Proc::Hole(_) | Proc::Inert | Proc::Call(..) => None,
        Proc::Output(_, _, k) | Proc::Input(_, _, k) | Proc::Match(_, k) | Proc::Restrict(_, k) | Proc::Located(_, k) => {
            hole_replicated(k, i, under)
        }
        Proc::Repl(k) => hole_replicated(k, i, true),
        Proc::Par(a, b) | Proc::Choice(a, b) => hole_replicated(a, i, under).or_else(|| hole_replicated(b, i, under)),
    }
}

/// Replaces holes by `fill(i)`. Replicated holes of index `step` become
/// `body[step ↦ next] | !body`, the shape after one copy has moved.
fn fill_holes(p: &Proc, fill: &dyn Fn(usize) -> Proc, step: Option<(usize, &Proc)>) -> Proc {
    let rec = |k: &Proc| Box::new(fill_holes(k, fill, step));
    match p {
        Proc::Hole(i) => match step {
            Some((j, next)) if j == *i => next.clone(),
            _ => fill(*i),
        },
        Proc::Inert | Proc::Call(..) => p.clone(),
        Proc::Output(c, e, k) => Proc::Output(c.clone(), e.clone(), rec(k)),
        Proc::Input(c, x, k) => Proc::Input(c.clone(), x.clone(), rec(k)),
        Proc::Par(a, b) => Proc::Par(rec(a), rec(b)),
        Proc::Choice(a, b) => Proc::Choice(rec(a), rec(b)),
        Proc::Restrict(c, k) => Proc::Restrict(c.clone(), rec(k)),
        Proc::Match(cond, k) => Proc::Match(cond.clone(), rec(k)),
        Proc::Located(l, k) => Proc::Located(l.clone(), rec(k)),
        Proc::Repl(k) => match step {
            Some((j, _)) if k.holes().contains(&j) => Proc::par(
                fill_holes(k, fill, step),
                Proc::Repl(Box::new(fill_holes(k, fill, None))),
            ),
            _ => Proc::Repl(rec(k)),
        },
    }
}

fn moves_lift(model: &Model, c: &Context, q: &Proc, core: &crate::ts::StateGraph<crate::calculus::CanonicalState>) -> Result<Outcome> {
    let qfill = |_: usize| q.clone();
    for i in c.body.holes() {
        let replicated = hole_replicated(&c.body, i, false).unwrap_or(false);
        for (s_idx, s) in core.states.iter().enumerate() {
            if core.frontier.contains(&s_idx) || (replicated && s_idx != 0) {
                continue;
            }
            let sp = s.to_proc();
            let before = fill_holes(&c.body, &qfill, Some((i, &sp)));
            let before = if replicated { fill_holes(&c.body, &qfill, None) } else { before };
            let before = canonicalize(model, &before)?;
            let moves = successors(model, &before, &Up::All)?;
            for &n in &core.succ[s_idx] {
                let np = core.states[n].to_proc();
                let after = canonicalize(model, &fill_holes(&c.body, &qfill, Some((i, &np))))?;
                if !moves.contains(&after) {
                    return Ok(Outcome::Fail {
                        counterexample: format!("core move {s} → {} is not enabled in hole {i}", core.states[n]),
                    });
                }
            }
        }
    }
    Ok(Outcome::Pass)
}

fn observable(bs: BTreeSet<Barb>) -> BTreeSet<Barb> {
    bs.into_iter().filter(|b| matches!(b, Barb::Observable { .. })).collect()
}

fn barbs_preserved(
    model: &Model,
    c: &Context,
    q: &Proc,
    core: &crate::ts::StateGraph<crate::calculus::CanonicalState>,
    depth: usize,
) -> Result<Outcome> {
    let qfill = |_: usize| q.clone();
    for (s_idx, s) in core.states.iter().enumerate() {
        let sp = s.to_proc();
        let fill = |i: usize| {
            if s_idx == 0 || hole_replicated(&c.body, i, false) == Some(true) {
                q.clone()
            } else {
                sp.clone()
            }
        };
        let plugged = if s_idx == 0 { fill_holes(&c.body, &qfill, None) } else { fill_holes(&c.body, &fill, None) };
        let inner = observable(weak_barbs(model, s, &Up::All, depth, false)?);
        let outer = observable(weak_barbs(model, &canonicalize(model, &plugged)?, &Up::All, depth, false)?);
        if let Some(b) = inner.difference(&outer).next() {
            return Ok(Outcome::Fail {
                counterexample: format!("barb {b} of {s} is lost in the context"),
            });
        }
    }
    Ok(Outcome::Pass)
}

fn no_context_barbs(model: &Model, c: &Context, depth: usize) -> Result<Outcome> {
    let empty = fill_holes(&c.body, &|_| Proc::Inert, None);
    let s = canonicalize(model, &empty)?;
    Ok(match observable(weak_barbs(model, &s, &Up::All, depth, false)?).into_iter().next() {
        Some(b) => Outcome::Fail {
            counterexample: format!("the empty context shows barb {b}"),
        },
        None => Outcome::Pass,
    })
}

fn probe(i: usize) -> String {
    format!("hole_probe_{i}")
}

/// Each hole holds a fresh output; every state reached by context moves
/// alone must still offer all of them.
fn context_transparent(model: &Model, c: &Context, depth: usize) -> Result<Outcome> {
    for i in c.body.holes() {
        if model.channels.contains_key(&probe(i)) {
            return Err(Error::BadParams(format!("channel name {} is reserved", probe(i))));
        }
    }
    let probes = fill_holes(&c.body, &|i| Proc::output(&probe(i), Expr::Lit(Value::unit()), Proc::Inert), None);
    let g = explore(&ProcessTs::new(model, &probes)?, STATE_CAP, Some(depth))?;
    for (idx, bs) in g.barbs.iter().enumerate() {
        for i in c.body.holes() {
            if !bs.contains(&Barb::obs(&probe(i), Value::unit())) {
                return Ok(Outcome::Fail {
                    counterexample: format!("hole {i} is disabled in {}", g.states[idx]),
                });
            }
        }
    }
    if g.len() >= STATE_CAP {
        return Ok(Outcome::Inconclusive {
            reason: format!("context exceeds {STATE_CAP} states"),
        });
    }
    Ok(Outcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parse_model;

    fn model() -> Model {
        parse_model(
            "domain {v, w}\nchannel a, b, o, m\nlocation l1, l2\n\
             def OTP = a!v\n\
             def Noise = new z . (z! | !z?.z!)\n\
             context Crep = loc l1 [ ![]_1 ] | loc l2 [ ![]_2 ]\n\
             context Guarded = b!w.[]_1\n\
             context Loud = []_1 | o!w\n\
             context Quiet = Noise | []_1\n",
        )
        .unwrap()
    }

    #[test]
    fn replication_context_passes() {
        let m = model();
        let r = check_context_constraints(&m, m.context("Crep").unwrap(), &m.process("OTP").unwrap(), 6).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.method, Method::Structural);
    }

    #[test]
    fn guarded_hole_blocks_moves() {
        let m = parse_model(
            "domain {v, w}\nchannel a, b, o\ndef Q = new t . (t! | t?.a!v)\ncontext Guarded = b!w.[]_1\n",
        )
        .unwrap();
        let r = check_context_constraints(&m, m.context("Guarded").unwrap(), &m.process("Q").unwrap(), 6).unwrap();
        assert!(r.moves_lift.is_fail());
        assert_eq!(r.method, Method::BoundedSemantic);
    }

    #[test]
    fn loud_context_shows_its_barb() {
        let m = model();
        let r = check_context_constraints(&m, m.context("Loud").unwrap(), &m.process("OTP").unwrap(), 6).unwrap();
        match &r.no_context_barbs {
            Outcome::Fail { counterexample } => assert!(counterexample.contains("o!w")),
            o => panic!("{o}"),
        }
    }

    #[test]
    fn noise_context_is_transparent() {
        let m = model();
        let r = check_context_constraints(&m, m.context("Quiet").unwrap(), &m.process("OTP").unwrap(), 6).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }
}
