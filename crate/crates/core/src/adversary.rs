//! Adversaries and the coupled transition system `p ∘ A`.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::calculus::canon::unfold_call;
use crate::calculus::{
    canonicalize, strong_barbs, transitions, Action, AdversarySpec, Barb, CanonicalState, Model, Proc, Up, Value,
};
use crate::error::{Error, Result};
use crate::order::{Elem, QuasiOrder};
use crate::ts::TransitionSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discipline {
    LossyFifo,
    LossyBag,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AdvState {
    /// Adversaries without internal state (benign, channel faults).
    Idle,
    /// Observed system steps, saturating at `n + 1`.
    Count(u32),
    /// Failed locations.
    Down(BTreeSet<String>),
}

impl fmt::Display for AdvState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdvState::Idle => f.write_str("A"),
            AdvState::Count(i) => write!(f, "A({i})"),
            AdvState::Down(d) => {
                let d: Vec<&str> = d.iter().map(String::as_str).collect();
                write!(f, "A(down={{{}}})", d.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CoupledState {
    pub sys: CanonicalState,
    pub adv: AdvState,
    /// One buffer per mediated channel; bags are kept sorted.
    pub buffers: BTreeMap<String, Vec<Value>>,
}

impl fmt::Display for CoupledState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ∘ {}", self.sys, self.adv)?;
        for (ch, buf) in &self.buffers {
            let vs: Vec<String> = buf.iter().map(Value::to_string).collect();
            write!(f, " {ch}:[{}]", vs.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Move {
    System,
    Send { ch: String, val: Value },
    Recv { ch: String, val: Value },
    Fail(String),
    Drop { ch: String, val: Value },
}

impl Move {
    pub fn by_adversary(&self) -> bool {
        matches!(self, Move::Fail(_) | Move::Drop { .. })
    }
}

pub struct CoupledSystem<'m> {
    pub model: &'m Model,
    pub spec: AdversarySpec,
    pub mediated: BTreeMap<String, Discipline>,
    pub initial: CoupledState,
    /// Sends into a full buffer are pruned (bounded exploration).
    pub buffer_cap: Option<usize>,
    pruned: Cell<usize>,
    mediated_names: BTreeSet<String>,
}

/// Couples a closed process with an adversary. Mediated channels must be
/// restricted at the top of the process; their rendezvous becomes buffered.
pub fn couple<'m>(model: &'m Model, p: &Proc, spec: &AdversarySpec) -> Result<CoupledSystem<'m>> {
    let (mediated, initial_adv) = match spec {
        AdversarySpec::Benign => (BTreeMap::new(), AdvState::Idle),
        AdversarySpec::StepCounter { .. } => (BTreeMap::new(), AdvState::Count(0)),
        AdversarySpec::FailStop { locs, max } => {
            if *max > locs.len() {
                return Err(Error::BadParams("max failures exceed location count".into()));
            }
            for l in locs {
                if !model.locations.contains(l) {
                    return Err(Error::BadParams(format!("undeclared location `{l}`")));
                }
            }
            (BTreeMap::new(), AdvState::Down(BTreeSet::new()))
        }
        AdversarySpec::ChannelOmission { chs } => (
            chs.iter().map(|c| (c.clone(), Discipline::LossyFifo)).collect(),
            AdvState::Idle,
        ),
        AdversarySpec::ChannelReorderOmission { chs } => (
            chs.iter().map(|c| (c.clone(), Discipline::LossyBag)).collect(),
            AdvState::Idle,
        ),
    };
    let names: BTreeSet<String> = mediated.keys().cloned().collect();
    let body = peel(model, p, &names)?;
    let sys = canonicalize(model, &body)?;
    Ok(CoupledSystem {
        model,
        spec: spec.clone(),
        initial: CoupledState {
            sys,
            adv: initial_adv,
            buffers: names.iter().map(|c| (c.clone(), Vec::new())).collect(),
        },
        mediated,
        buffer_cap: None,
        pruned: Cell::new(0),
        mediated_names: names,
    })
}

/// Strips the top-level restrictions of mediated channels.
fn peel(model: &Model, p: &Proc, chs: &BTreeSet<String>) -> Result<Proc> {
    let mut found = BTreeSet::new();
    let mut kept: Vec<String> = Vec::new();
    let mut cur = p.clone();
    let mut unfolds = 0;
    while found.len() < chs.len() {
        match cur {
            Proc::Restrict(c, body) => {
                if chs.contains(&c) && !found.contains(&c) {
                    found.insert(c);
                } else {
                    kept.push(c);
                }
                cur = *body;
            }
            Proc::Call(ref n, ref args, ref ren) if unfolds < 64 => {
                unfolds += 1;
                cur = unfold_call(model, n, args, ren)?;
            }
            _ => break,
        }
    }
    if let Some(c) = chs.iter().find(|c| !found.contains(*c)) {
        return Err(Error::MediationMismatch(format!(
            "mediated channel `{c}` is not restricted at the top of the system"
        )));
    }
    Ok(kept.into_iter().rev().fold(cur, |b, c| Proc::Restrict(c, Box::new(b))))
}

impl<'m> CoupledSystem<'m> {
    pub fn with_buffer_cap(mut self, cap: usize) -> Self {
        self.buffer_cap = Some(cap);
        self
    }

    /// Sends dropped so far because a buffer was full.
    pub fn pruned(&self) -> usize {
        self.pruned.get()
    }

    pub fn up(&self, adv: &AdvState) -> Up {
        match adv {
            AdvState::Down(d) => Up::Only(self.model.locations.difference(d).cloned().collect()),
            _ => Up::All,
        }
    }

    fn offered(&self, st: &CoupledState, ch: &str) -> Vec<Value> {
        let buf = &st.buffers[ch];
        match self.mediated[ch] {
            Discipline::LossyFifo => buf.first().cloned().into_iter().collect(),
            Discipline::LossyBag => {
                let mut vs = buf.clone();
                vs.dedup();
                vs
            }
        }
    }

    fn system_moves(&self, st: &CoupledState) -> Result<Vec<(Action, CanonicalState)>> {
        let up = self.up(&st.adv);
        transitions(self.model, &st.sys, &up, &self.mediated_names, &|ch| self.offered(st, ch))
    }

    pub fn labelled_successors(&self, st: &CoupledState) -> Result<Vec<(Move, CoupledState)>> {
        let mut out = Vec::new();
        for (act, sys) in self.system_moves(st)? {
            let mut next = CoupledState {
                sys,
                adv: st.adv.clone(),
                buffers: st.buffers.clone(),
            };
            let mv = match act {
                Action::Tau => {
                    if let (AdversarySpec::StepCounter { n }, AdvState::Count(i)) = (&self.spec, &st.adv) {
                        next.adv = AdvState::Count((*i + 1).min(n + 1));
                    }
                    Move::System
                }
                Action::Send { ch, val } => {
                    let buf = next.buffers.get_mut(&ch).expect("mediated buffer");
                    if self.buffer_cap.is_some_and(|c| buf.len() >= c) {
                        self.pruned.set(self.pruned.get() + 1);
                        continue;
                    }
                    match self.mediated[&ch] {
                        Discipline::LossyFifo => buf.push(val.clone()),
                        Discipline::LossyBag => {
                            let pos = buf.partition_point(|x| *x <= val);
                            buf.insert(pos, val.clone());
                        }
                    }
                    Move::Send { ch, val }
                }
                Action::Recv { ch, val } => {
                    let buf = next.buffers.get_mut(&ch).expect("mediated buffer");
                    let pos = buf.iter().position(|x| *x == val).expect("offered value is buffered");
                    buf.remove(pos);
                    Move::Recv { ch, val }
                }
            };
            out.push((mv, next));
        }
        if let (AdversarySpec::FailStop { locs, max }, AdvState::Down(down)) = (&self.spec, &st.adv) {
            if down.len() < *max {
                for l in locs.iter().filter(|l| !down.contains(*l)) {
                    let mut d = down.clone();
                    d.insert(l.clone());
                    out.push((
                        Move::Fail(l.clone()),
                        CoupledState {
                            sys: st.sys.clone(),
                            adv: AdvState::Down(d),
                            buffers: st.buffers.clone(),
                        },
                    ));
                }
            }
        }
        for (ch, buf) in &st.buffers {
            for i in 0..buf.len() {
                if i > 0 && buf[i] == buf[i - 1] {
                    continue;
                }
                let mut next = st.clone();
                let val = next.buffers.get_mut(ch).expect("present").remove(i);
                out.push((Move::Drop { ch: ch.clone(), val }, next));
            }
        }
        Ok(out)
    }

    pub fn coupled_successors(&self, st: &CoupledState) -> Result<Vec<CoupledState>> {
        let mut out: Vec<CoupledState> = self
            .labelled_successors(st)?
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn coupled_barbs(&self, st: &CoupledState) -> Result<BTreeSet<Barb>> {
        let up = self.up(&st.adv);
        let mut out: BTreeSet<Barb> = strong_barbs(self.model, &st.sys, &up)?
            .into_iter()
            .filter(|b| match b {
                Barb::Observable { ch, .. } => !self.mediated.contains_key(ch),
                Barb::Err => true,
            })
            .collect();
        if self.err_predicate(st, &out)? {
            out.insert(Barb::Err);
        }
        Ok(out)
    }

    /// Step counter: the system shows its result with no moves left, within `n` steps.
    fn err_predicate(&self, st: &CoupledState, barbs: &BTreeSet<Barb>) -> Result<bool> {
        match (&self.spec, &st.adv) {
            (AdversarySpec::StepCounter { n }, AdvState::Count(i)) => {
                Ok(*i <= *n && !barbs.is_empty() && self.system_moves(st)?.is_empty())
            }
            _ => Ok(false),
        }
    }

    /// Alphabet for buffer contents: domain atoms, then unit.
    fn letter(&self, v: &Value) -> Result<u32> {
        let atoms = self.model.domain.atoms();
        if let Some(i) = atoms.iter().position(|a| a == v) {
            return Ok(i as u32);
        }
        if *v == Value::unit() {
            return Ok(atoms.len() as u32);
        }
        Err(Error::CarrierMismatch(format!("buffered value {v} outside the domain")))
    }

    /// Order on the adversary state and buffers: equality on step counts,
    /// failed-set inclusion, subword on FIFO buffers, multiset inclusion on bags.
    pub fn adversary_order(&self) -> QuasiOrder {
        let alphabet = self.model.domain.atoms().len() as u32 + 1;
        let adv = match &self.spec {
            AdversarySpec::StepCounter { n } => QuasiOrder::EqualityOn(n + 2),
            AdversarySpec::FailStop { locs, .. } => QuasiOrder::DicksonVec(locs.len()),
            _ => QuasiOrder::EqualityOn(1),
        };
        let mut parts = vec![adv];
        for d in self.mediated.values() {
            parts.push(match d {
                Discipline::LossyFifo => QuasiOrder::Subword(alphabet),
                Discipline::LossyBag => QuasiOrder::BagEmbed(alphabet),
            });
        }
        QuasiOrder::Product(parts)
    }

    pub fn adversary_elem(&self, st: &CoupledState) -> Result<Elem> {
        let adv = match (&self.spec, &st.adv) {
            (AdversarySpec::FailStop { locs, .. }, AdvState::Down(d)) => {
                Elem::Vec(locs.iter().map(|l| d.contains(l) as u64).collect())
            }
            (_, AdvState::Count(i)) => Elem::Atom(*i),
            _ => Elem::Atom(0),
        };
        let mut parts = vec![adv];
        for (ch, d) in &self.mediated {
            let letters = st.buffers[ch]
                .iter()
                .map(|v| self.letter(v))
                .collect::<Result<Vec<_>>>()?;
            parts.push(match d {
                Discipline::LossyFifo => Elem::Word(letters),
                Discipline::LossyBag => Elem::bag(letters),
            });
        }
        Ok(Elem::Tuple(parts))
    }
}

impl TransitionSystem for CoupledSystem<'_> {
    type State = CoupledState;

    fn initial(&self) -> Result<CoupledState> {
        Ok(self.initial.clone())
    }

    fn successors(&self, s: &CoupledState) -> Result<Vec<CoupledState>> {
        self.coupled_successors(s)
    }

    fn barbs(&self, s: &CoupledState) -> Result<BTreeSet<Barb>> {
        self.coupled_barbs(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{parse_model, parse_process};
    use crate::ts::explore;

    fn model() -> Model {
        parse_model(
            "domain {v, w, m, 1..2}\nchannel a, d1, d2, o\nchannel c mediated\nlocation l1, l2\n\
             def OTP = a!v\ndef BC(i) = a?(x).d1!x\n\
             def Server = !a!v\n\
             system Sys2 = new a . (BC(1) | loc l1 [ Server ])\n\
             system Pipe = new c . (c!v | c!w | c?(x).o!x)\n\
             system C3 = new t1, t2, t3 . (t1! | t1?.t2! | t2?.t3! | t3?.o!m)\n",
        )
        .unwrap()
    }

    #[test]
    fn benign_coupling_matches_the_process() {
        let m = model();
        let p = m.process("Sys2").unwrap();
        let cs = couple(&m, &p, &AdversarySpec::Benign).unwrap();
        let s = canonicalize(&m, &p).unwrap();
        assert_eq!(cs.initial.sys, s);
        let succ = cs.coupled_successors(&cs.initial).unwrap();
        let plain = crate::calculus::successors(&m, &s, &Up::All).unwrap();
        assert_eq!(succ.iter().map(|c| c.sys.clone()).collect::<Vec<_>>(), plain);
        assert_eq!(cs.coupled_barbs(&cs.initial).unwrap(), strong_barbs(&m, &s, &Up::All).unwrap());
    }

    #[test]
    fn step_counter_counts_and_flags_err() {
        let m = model();
        let p = m.process("C3").unwrap();
        let cs = couple(&m, &p, &AdversarySpec::StepCounter { n: 3 }).unwrap();
        let g = explore(&cs, 1000, None).unwrap();
        let terminal: Vec<usize> = (0..g.len()).filter(|&i| g.succ[i].is_empty()).collect();
        assert_eq!(terminal.len(), 1);
        let t = terminal[0];
        assert_eq!(g.states[t].adv, AdvState::Count(3));
        assert!(g.barbs[t].contains(&Barb::Err));
        let cs2 = couple(&m, &p, &AdversarySpec::StepCounter { n: 2 }).unwrap();
        let g2 = explore(&cs2, 1000, None).unwrap();
        assert!(g2.barbs.iter().all(|b| !b.contains(&Barb::Err)));
        assert!(g2.states.iter().any(|s| s.adv == AdvState::Count(3)));
    }

    #[test]
    fn inert_under_step_counter_has_no_moves() {
        let m = model();
        let cs = couple(&m, &Proc::Inert, &AdversarySpec::StepCounter { n: 2 }).unwrap();
        assert!(cs.coupled_successors(&cs.initial).unwrap().is_empty());
    }

    #[test]
    fn fail_stop_moves_and_gating() {
        let m = model();
        let p = parse_process(&m, "loc l1 [ o!v ] | loc l2 [ o!w ]").unwrap();
        let spec = AdversarySpec::FailStop {
            locs: vec!["l1".into(), "l2".into()],
            max: 1,
        };
        let cs = couple(&m, &p, &spec).unwrap();
        let moves = cs.labelled_successors(&cs.initial).unwrap();
        let fails: Vec<_> = moves.iter().filter(|(mv, _)| mv.by_adversary()).collect();
        assert_eq!(fails.len(), 2);
        let after = &fails[0].1;
        assert_eq!(cs.coupled_barbs(after).unwrap().len(), 1);
        assert!(cs.coupled_successors(after).unwrap().is_empty());
    }

    #[test]
    fn single_location_fail_stop_is_two_states() {
        let m = model();
        let p = parse_process(&m, "loc l1 [ 0 ]").unwrap();
        let spec = AdversarySpec::FailStop {
            locs: vec!["l1".into()],
            max: 1,
        };
        let g = explore(&couple(&m, &p, &spec).unwrap(), 100, None).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.succ, vec![vec![1], vec![]]);
    }

    #[test]
    fn buffers_and_drops() {
        let m = model();
        let p = m.process("Pipe").unwrap();
        let bag = couple(&m, &p, &AdversarySpec::ChannelReorderOmission { chs: vec!["c".into()] }).unwrap();
        let mut st = bag.initial.clone();
        st.buffers.insert("c".into(), vec![Value::sym("v"), Value::sym("w")]);
        let drops = bag
            .labelled_successors(&st)
            .unwrap()
            .into_iter()
            .filter(|(mv, _)| matches!(mv, Move::Drop { .. }))
            .count();
        assert_eq!(drops, 2);
        // reordering lets `w` overtake `v`
        let g = explore(&bag, 1000, None).unwrap();
        assert!(g.barbs.iter().any(|b| b.contains(&Barb::obs("o", Value::sym("w")))));
        let fifo = couple(&m, &p, &AdversarySpec::ChannelOmission { chs: vec!["c".into()] }).unwrap();
        let g = explore(&fifo, 1000, None).unwrap();
        assert!(g.barbs.iter().any(|b| b.contains(&Barb::obs("o", Value::sym("v")))));
        assert!(g.barbs.iter().all(|b| b.iter().all(|x| !matches!(x, Barb::Observable { ch, .. } if ch == "c"))));
    }

    #[test]
    fn unrestricted_mediated_channel_is_rejected() {
        let m = model();
        let p = parse_process(&m, "c!v").unwrap();
        let err = couple(&m, &p, &AdversarySpec::ChannelOmission { chs: vec!["c".into()] }).err();
        assert!(matches!(err, Some(Error::MediationMismatch(_))));
    }
}
