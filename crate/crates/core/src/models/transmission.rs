//! Request/response transmission over lossy, possibly reordering channels,
//! as a dedicated counter machine.
//!
//! Requests on `b` are unit tokens, so their buffer is a count. Responses on
//! `c` are kept in send order; each carries the set of values the server sent
//! after it. Delivery on `d` passes through a state showing `d!x`. A delivery
//! is stale when no message with the delivered value was sent after the
//! previously delivered message; stale deliveries raise a persistent `err`.

use std::cell::Cell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::adversary::Discipline;
use crate::calculus::{parse_model, Barb, Model, Value};
use crate::error::{Error, Result};
use crate::order::{Elem, QuasiOrder};
use crate::ts::TransitionSystem;
use crate::wsts::Wsts;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Client {
    /// Sends one request, waits for one response, delivers it.
    Simple,
    /// Keeps requesting while waiting; delivers every response.
    Persistent,
    /// Counts requests per round and discards responses that may be stale.
    Counting,
}

/// How counters enter the WSTS order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterOrder {
    /// `p` and `n_i` compared by equality, the request count by `≤`.
    Equality,
    /// `p`, `n_i` and the request count compared pointwise.
    Dickson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ctl {
    Idle,
    Sent,
    Deliver(u8),
}

/// Everything except the two buffers.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Local {
    pub ctl: Ctl,
    /// `Some(u)` while the server owes a response carrying `u`.
    pub server: Option<u8>,
    /// Values sent after the last delivered message (bitset).
    pub fresh: u8,
    pub err: bool,
    pub p: u8,
    pub n: Vec<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub val: u8,
    /// Values the server sent after this message (bitset).
    pub after: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TxState {
    pub local: Local,
    pub b: u8,
    pub c: Vec<Letter>,
}

fn value_name(i: u8) -> String {
    format!("v{}", i + 1)
}

impl fmt::Display for TxState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.local;
        let ctl = match l.ctl {
            Ctl::Idle => "idle".to_string(),
            Ctl::Sent => "sent".to_string(),
            Ctl::Deliver(x) => format!("deliver {}", value_name(x)),
        };
        write!(f, "client {ctl} p={} n={:?}", l.p, l.n)?;
        match l.server {
            Some(u) => write!(f, " server owes {}", value_name(u))?,
            None => write!(f, " server idle")?,
        }
        write!(f, " b={} c=[", self.b)?;
        for (i, m) in self.c.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", value_name(m.val))?;
        }
        f.write_str("]")?;
        if l.err {
            f.write_str(" err")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    SendB,
    TakeB,
    SendC(u8),
    Recv(Letter),
    Tau,
}

pub struct Transmission {
    pub client: Client,
    pub discipline: Discipline,
    pub k: u8,
    /// Bound on `p`, the request count, and the response buffer length.
    pub p_max: u8,
    /// Without the monitor, stale deliveries go unflagged.
    pub monitor: bool,
    pub counter_order: CounterOrder,
    pruned: Cell<usize>,
    floors: Cell<usize>,
    locals: Vec<Local>,
    local_ids: HashMap<Local, u32>,
    /// Local part without `p`, `n` (for the pointwise order).
    ctl_ids: HashMap<(Ctl, Option<u8>, u8, bool), u32>,
    ctl_parts: Vec<(Ctl, Option<u8>, u8, bool)>,
    pre_index: Vec<Vec<(u32, Op)>>,
    order: QuasiOrder,
}

impl Transmission {
    pub fn new(client: Client, discipline: Discipline, k: u8, p_max: u8) -> Result<Self> {
        if !(2..=4).contains(&k) || p_max == 0 || p_max > 6 {
            return Err(Error::BadParams("need 2 <= k <= 4 and 1 <= p_max <= 6".into()));
        }
        let mut t = Transmission {
            client,
            discipline,
            k,
            p_max,
            monitor: true,
            counter_order: CounterOrder::Equality,
            pruned: Cell::new(0),
            floors: Cell::new(0),
            locals: Vec::new(),
            local_ids: HashMap::new(),
            ctl_ids: HashMap::new(),
            ctl_parts: Vec::new(),
            pre_index: Vec::new(),
            order: QuasiOrder::Product(Vec::new()),
        };
        t.build_tables();
        t.set_order(CounterOrder::Equality);
        Ok(t)
    }

    pub fn without_monitor(mut self) -> Self {
        self.monitor = false;
        self
    }

    pub fn with_counter_order(mut self, o: CounterOrder) -> Self {
        self.set_order(o);
        self
    }

    fn set_order(&mut self, o: CounterOrder) {
        self.counter_order = o;
        let letters = self.k as u32 * (1u32 << self.k);
        self.order = match o {
            CounterOrder::Equality => QuasiOrder::Product(vec![
                QuasiOrder::EqualityOn(self.locals.len() as u32),
                QuasiOrder::DicksonVec(1),
                QuasiOrder::Subword(letters),
            ]),
            CounterOrder::Dickson => QuasiOrder::Product(vec![
                QuasiOrder::EqualityOn(self.ctl_parts.len() as u32),
                QuasiOrder::DicksonVec(self.k as usize + 2),
                QuasiOrder::Subword(letters),
            ]),
        };
    }

    /// Transitions dropped at the truncation bounds so far.
    pub fn pruned(&self) -> usize {
        self.pruned.get()
    }

    /// Decrements floored at zero so far.
    pub fn floor_events(&self) -> usize {
        self.floors.get()
    }

    fn all_values(&self) -> u8 {
        ((1u16 << self.k) - 1) as u8
    }

    pub fn initial_state(&self) -> TxState {
        TxState {
            local: Local {
                ctl: Ctl::Idle,
                server: None,
                fresh: self.all_values(),
                err: false,
                p: 0,
                n: vec![0; self.k as usize],
            },
            b: 0,
            c: Vec::new(),
        }
    }

    fn counting(&self) -> bool {
        self.client == Client::Counting
    }

    fn build_tables(&mut self) {
        let k = self.k;
        let mut ctls = vec![Ctl::Idle, Ctl::Sent];
        ctls.extend((0..k).map(Ctl::Deliver));
        let mut servers = vec![None];
        servers.extend((0..k).map(Some));
        let counters: Vec<(u8, Vec<u8>)> = if self.counting() {
            let mut out = Vec::new();
            let mut n = vec![0u8; k as usize];
            loop {
                for p in 0..=self.p_max {
                    out.push((p, n.clone()));
                }
                let mut i = 0;
                loop {
                    if i == n.len() {
                        break;
                    }
                    if n[i] < self.p_max {
                        n[i] += 1;
                        break;
                    }
                    n[i] = 0;
                    i += 1;
                }
                if i == n.len() {
                    break;
                }
            }
            out
        } else {
            vec![(0, vec![0; k as usize])]
        };
        for &ctl in &ctls {
            for &server in &servers {
                for fresh in 0..=self.all_values() {
                    for err in [false, true] {
                        let id = self.ctl_parts.len() as u32;
                        self.ctl_parts.push((ctl, server, fresh, err));
                        self.ctl_ids.insert((ctl, server, fresh, err), id);
                        for (p, n) in &counters {
                            let l = Local {
                                ctl,
                                server,
                                fresh,
                                err,
                                p: *p,
                                n: n.clone(),
                            };
                            self.local_ids.insert(l.clone(), self.locals.len() as u32);
                            self.locals.push(l);
                        }
                    }
                }
            }
        }
        let mut pre: Vec<Vec<(u32, Op)>> = vec![Vec::new(); self.locals.len()];
        let letters = self.letters();
        for (i, l) in self.locals.iter().enumerate() {
            let i = i as u32;
            let mut push = |post: &Local, op: Op| {
                if let Some(&j) = self.local_ids.get(post) {
                    pre[j as usize].push((i, op));
                }
            };
            if let Some(post) = self.send_b_local(l) {
                push(&post, Op::SendB);
            }
            for post in self.take_b_local(l) {
                push(&post, Op::TakeB);
            }
            if let Some((u, post)) = self.send_c_local(l) {
                push(&post, Op::SendC(u));
            }
            for &m in &letters {
                if let Some((post, _)) = self.recv_local(l, m) {
                    push(&post, Op::Recv(m));
                }
            }
            if let Some((post, _)) = self.tau_local(l) {
                push(&post, Op::Tau);
            }
        }
        self.pre_index = pre;
    }

    fn letters(&self) -> Vec<Letter> {
        (0..self.k)
            .flat_map(|val| (0..=self.all_values()).map(move |after| Letter { val, after }))
            .collect()
    }

    fn letter_code(&self, m: Letter) -> u32 {
        m.val as u32 * (1u32 << self.k) + m.after as u32
    }

    fn letter_of(&self, code: u32) -> Letter {
        Letter {
            val: (code >> self.k) as u8,
            after: (code & ((1 << self.k) - 1)) as u8,
        }
    }

    fn send_b_local(&self, l: &Local) -> Option<Local> {
        match self.client {
            Client::Simple => (l.ctl == Ctl::Idle).then(|| Local { ctl: Ctl::Sent, ..l.clone() }),
            Client::Persistent => Some(l.clone()),
            Client::Counting => (l.ctl == Ctl::Idle && l.p < self.p_max).then(|| Local { p: l.p + 1, ..l.clone() }),
        }
    }

    fn take_b_local(&self, l: &Local) -> Vec<Local> {
        if l.server.is_some() {
            return Vec::new();
        }
        (0..self.k).map(|u| Local { server: Some(u), ..l.clone() }).collect()
    }

    fn send_c_local(&self, l: &Local) -> Option<(u8, Local)> {
        let u = l.server?;
        Some((
            u,
            Local {
                server: None,
                fresh: l.fresh | (1 << u),
                ..l.clone()
            },
        ))
    }

    /// Receiving `m`; the flag reports a floored decrement.
    fn recv_local(&self, l: &Local, m: Letter) -> Option<(Local, bool)> {
        let waiting = match self.client {
            Client::Simple => Ctl::Sent,
            _ => Ctl::Idle,
        };
        if l.ctl != waiting {
            return None;
        }
        let x = m.val as usize;
        if self.counting() && l.n[x] > 0 {
            let mut n = l.n.clone();
            n[x] -= 1;
            return Some((
                Local {
                    p: l.p.saturating_sub(1),
                    n,
                    ..l.clone()
                },
                l.p == 0,
            ));
        }
        let stale = l.fresh & (1 << m.val) == 0;
        Some((
            Local {
                ctl: Ctl::Deliver(m.val),
                err: l.err || (self.monitor && stale),
                fresh: m.after,
                ..l.clone()
            },
            false,
        ))
    }

    /// The delivery step, with the round reset for the counting client.
    fn tau_local(&self, l: &Local) -> Option<(Local, bool)> {
        let Ctl::Deliver(_) = l.ctl else { return None };
        if !self.counting() {
            return Some((Local { ctl: Ctl::Idle, ..l.clone() }, false));
        }
        let reset = l.p.saturating_sub(1);
        Some((
            Local {
                ctl: Ctl::Idle,
                p: 0,
                n: vec![reset; self.k as usize],
                ..l.clone()
            },
            l.p == 0,
        ))
    }

    fn push_response(c: &[Letter], u: u8) -> Vec<Letter> {
        let mut out: Vec<Letter> = c
            .iter()
            .map(|m| Letter {
                val: m.val,
                after: m.after | (1 << u),
            })
            .collect();
        out.push(Letter { val: u, after: 0 });
        out
    }

    fn floor(&self, hit: bool) {
        if hit {
            self.floors.set(self.floors.get() + 1);
        }
    }

    fn prune(&self) {
        self.pruned.set(self.pruned.get() + 1);
    }

    /// Successors with the acting party: `true` for adversary drops.
    pub fn moves(&self, s: &TxState) -> Vec<(bool, TxState)> {
        let cap = self.p_max;
        let l = &s.local;
        let mut out = Vec::new();
        if let Some(post) = self.send_b_local(l) {
            if s.b < cap {
                out.push((false, TxState { local: post, b: s.b + 1, c: s.c.clone() }));
            } else {
                self.prune();
            }
        }
        if s.b > 0 {
            for post in self.take_b_local(l) {
                out.push((false, TxState { local: post, b: s.b - 1, c: s.c.clone() }));
            }
        }
        if let Some((u, post)) = self.send_c_local(l) {
            if s.c.len() < cap as usize {
                out.push((false, TxState { local: post, b: s.b, c: Self::push_response(&s.c, u) }));
            } else {
                self.prune();
            }
        }
        // equal values are interchangeable, so a reordering receive takes
        // the earliest-sent copy
        let positions: Vec<usize> = match self.discipline {
            Discipline::LossyFifo => (0..s.c.len().min(1)).collect(),
            Discipline::LossyBag => (0..self.k).filter_map(|x| s.c.iter().position(|m| m.val == x)).collect(),
        };
        for i in positions {
            if let Some((post, hit)) = self.recv_local(l, s.c[i]) {
                self.floor(hit);
                let mut c = s.c.clone();
                c.remove(i);
                out.push((false, TxState { local: post, b: s.b, c }));
            }
        }
        if let Some((post, hit)) = self.tau_local(l) {
            self.floor(hit);
            out.push((false, TxState { local: post, b: s.b, c: s.c.clone() }));
        }
        if s.b > 0 {
            out.push((true, TxState { local: l.clone(), b: s.b - 1, c: s.c.clone() }));
        }
        for i in 0..s.c.len() {
            let mut c = s.c.clone();
            c.remove(i);
            out.push((true, TxState { local: l.clone(), b: s.b, c }));
        }
        out.sort();
        out.dedup();
        out
    }

    pub fn state_barbs(&self, s: &TxState) -> BTreeSet<Barb> {
        let mut out = BTreeSet::new();
        if let Ctl::Deliver(x) = s.local.ctl {
            out.insert(Barb::obs("d", Value::sym(&value_name(x))));
        }
        if s.local.err {
            out.insert(Barb::Err);
        }
        out
    }

    pub fn encode(&self, s: &TxState) -> Elem {
        let word = Elem::Word(s.c.iter().map(|&m| self.letter_code(m)).collect());
        match self.counter_order {
            CounterOrder::Equality => Elem::Tuple(vec![
                Elem::Atom(self.local_ids[&s.local]),
                Elem::Vec(vec![s.b as u64]),
                word,
            ]),
            CounterOrder::Dickson => {
                let l = &s.local;
                let mut v = vec![l.p as u64];
                v.extend(l.n.iter().map(|&x| x as u64));
                v.push(s.b as u64);
                Elem::Tuple(vec![Elem::Atom(self.ctl_ids[&(l.ctl, l.server, l.fresh, l.err)]), Elem::Vec(v), word])
            }
        }
    }

    pub fn decode(&self, e: &Elem) -> Result<TxState> {
        let bad = || Error::CarrierMismatch(format!("{e} is not a transmission state"));
        let [Elem::Atom(id), Elem::Vec(v), Elem::Word(w)] = e.tuple() else {
            return Err(bad());
        };
        let c = w.iter().map(|&x| self.letter_of(x)).collect();
        match self.counter_order {
            CounterOrder::Equality => {
                let local = self.locals.get(*id as usize).ok_or_else(bad)?.clone();
                let b = *v.first().ok_or_else(bad)?;
                Ok(TxState { local, b: u8::try_from(b).map_err(|_| bad())?, c })
            }
            CounterOrder::Dickson => {
                let &(ctl, server, fresh, err) = self.ctl_parts.get(*id as usize).ok_or_else(bad)?;
                let k = self.k as usize;
                if v.len() != k + 2 {
                    return Err(bad());
                }
                let small = |x: u64| u8::try_from(x).map_err(|_| bad());
                Ok(TxState {
                    local: Local {
                        ctl,
                        server,
                        fresh,
                        err,
                        p: small(v[0])?,
                        n: v[1..=k].iter().map(|&x| small(x)).collect::<Result<_>>()?,
                    },
                    b: small(v[k + 1])?,
                    c,
                })
            }
        }
    }

    /// Minimal-basis element for a local state with empty buffers.
    pub fn bottom_of(&self, local: &Local) -> Elem {
        self.encode(&TxState {
            local: local.clone(),
            b: 0,
            c: Vec::new(),
        })
    }

    /// Locals satisfying a predicate.
    pub fn locals_where(&self, f: impl Fn(&Local) -> bool) -> Vec<Local> {
        self.locals.iter().filter(|l| f(l)).cloned().collect()
    }

    /// The client waits for a response, the server owes nothing, both
    /// buffers are empty. For the simple client this is a deadlock.
    pub fn waiting_locals(&self) -> Vec<Local> {
        let waiting = match self.client {
            Client::Simple => Ctl::Sent,
            _ => Ctl::Idle,
        };
        self.locals_where(|l| l.ctl == waiting && l.server.is_none())
    }

    fn word_inserts(&self, w: &[Letter], m: Letter) -> Vec<Vec<Letter>> {
        (0..=w.len())
            .map(|j| {
                let mut x = w.to_vec();
                x.insert(j, m);
                x
            })
            .collect()
    }

    /// Minimal words `x` with `w ⊑ push_response(x, u)`.
    fn unsend(&self, w: &[Letter], u: u8) -> Vec<Vec<Letter>> {
        let mut rests = vec![w.to_vec()];
        if let Some(last) = w.last() {
            if *last == (Letter { val: u, after: 0 }) {
                rests.push(w[..w.len() - 1].to_vec());
            }
        }
        let bit = 1u8 << u;
        let mut out = Vec::new();
        for rest in rests {
            if rest.iter().any(|m| m.after & bit == 0) {
                continue;
            }
            let mut acc: Vec<Vec<Letter>> = vec![Vec::new()];
            for m in &rest {
                let mut next = Vec::new();
                for pre in &acc {
                    for after in [m.after, m.after & !bit] {
                        let mut x = pre.clone();
                        x.push(Letter { val: m.val, after });
                        next.push(x);
                    }
                }
                acc = next;
            }
            out.extend(acc);
        }
        out
    }
}

impl TransitionSystem for Transmission {
    type State = TxState;

    fn initial(&self) -> Result<TxState> {
        Ok(self.initial_state())
    }

    fn successors(&self, s: &TxState) -> Result<Vec<TxState>> {
        let mut out: Vec<TxState> = self.moves(s).into_iter().map(|(_, t)| t).collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn barbs(&self, s: &TxState) -> Result<BTreeSet<Barb>> {
        Ok(self.state_barbs(s))
    }
}

impl Wsts for Transmission {
    fn order(&self) -> &QuasiOrder {
        &self.order
    }

    fn initial(&self) -> Elem {
        self.encode(&self.initial_state())
    }

    fn succ(&self, s: &Elem) -> Result<Vec<Elem>> {
        let st = self.decode(s)?;
        let mut out: Vec<Elem> = self.moves(&st).iter().map(|(_, t)| self.encode(t)).collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Undoes each rule minimally. Only the equality packaging has one.
    fn pred_basis(&self, s: &Elem) -> Result<Vec<Elem>> {
        if self.counter_order != CounterOrder::Equality {
            return Err(Error::PreconditionViolated(
                "predecessor bases are implemented for the equality packaging".into(),
            ));
        }
        let m = self.decode(s)?;
        let cap = self.p_max;
        let capw = cap as usize;
        let id = self.local_ids[&m.local];
        let mut out = Vec::new();
        let mut emit = |local: &Local, b: u8, c: Vec<Letter>| {
            if b <= cap && c.len() <= capw {
                out.push(self.encode(&TxState { local: local.clone(), b, c }));
            }
        };
        // drops
        emit(&m.local, m.b + 1, m.c.clone());
        for l in self.letters() {
            for w in self.word_inserts(&m.c, l) {
                emit(&m.local, m.b, w);
            }
        }
        for &(pre, op) in &self.pre_index[id as usize] {
            let local = &self.locals[pre as usize];
            match op {
                Op::SendB => emit(local, m.b.saturating_sub(1), m.c.clone()),
                Op::TakeB => emit(local, m.b + 1, m.c.clone()),
                Op::Tau => emit(local, m.b, m.c.clone()),
                Op::Recv(l) => match self.discipline {
                    Discipline::LossyFifo => {
                        let mut w = vec![l];
                        w.extend(m.c.iter().copied());
                        emit(local, m.b, w);
                    }
                    Discipline::LossyBag => {
                        let first = m.c.iter().position(|x| x.val == l.val).unwrap_or(m.c.len());
                        for w in self.word_inserts(&m.c[..first], l) {
                            let mut w = w;
                            w.extend_from_slice(&m.c[first..]);
                            emit(local, m.b, w);
                        }
                    }
                },
                Op::SendC(u) => {
                    for w in self.unsend(&m.c, u) {
                        if w.len() < capw {
                            emit(local, m.b, w);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Model text with the protocol's processes, for inspection and export.
pub fn transmission_model_text(k: u8, p_max: u8) -> Result<String> {
    if !(2..=4).contains(&k) || p_max == 0 {
        return Err(Error::BadParams("need 2 <= k <= 4 and p_max >= 1".into()));
    }
    let vals: Vec<String> = (0..k).map(value_name).collect();
    let ns: Vec<String> = (1..=k).map(|i| format!("n{i}")).collect();
    let mut t = String::new();
    t.push_str(&format!("domain {{{}, 0..{}}}\n", vals.join(", "), p_max));
    t.push_str("channel d\nchannel b mediated\nchannel c mediated\n");
    let responses: Vec<String> = vals.iter().map(|v| format!("c!{v}.Sr")).collect();
    t.push_str(&format!("def Sr = b?.({})\n", responses.join(" + ")));
    t.push_str("def Rs = b!.c?(x).d!x.Rs\n");
    t.push_str("def Ro = !b! | c?(x).d!x.Ro\n");
    let params = format!("p, {}", ns.join(", "));
    let mut cases = Vec::new();
    for (i, v) in vals.iter().enumerate() {
        let dec: Vec<String> = ns
            .iter()
            .enumerate()
            .map(|(j, n)| if i == j { format!("{n} - 1") } else { n.clone() })
            .collect();
        let reset = vec!["monus(p, 1)".to_string(); k as usize].join(", ");
        cases.push(format!(
            "[x = {v}] ([{n} > 0] Rro(monus(p, 1), {dec}) + [{n} = 0] d!x.Rro(0, {reset}))",
            n = ns[i],
            dec = dec.join(", ")
        ));
    }
    t.push_str(&format!(
        "def Rro({params}) = [p < {p_max}] b!.Rro(p + 1, {}) + c?(x).({})\n",
        ns.join(", "),
        cases.join(" + ")
    ));
    let zeros = vec!["0"; k as usize + 1].join(", ");
    t.push_str("system TxRs = new b, c . (Sr | Rs)\n");
    t.push_str("system TxRo = new b, c . (Sr | Ro)\n");
    t.push_str(&format!("system TxRro = new b, c . (Sr | Rro({zeros}))\n"));
    t.push_str("adversary Ao = channel_omission(chs={b, c})\n");
    t.push_str("adversary Aro = channel_reorder_omission(chs={b, c})\n");
    t.push_str(&format!(
        "check transmission left_client=counting left_channel=bag right_client=persistent right_channel=fifo k={k} p_max={p_max}\n"
    ));
    t.push_str(&format!(
        "check transmission left_client=persistent left_channel=bag right_client=persistent right_channel=fifo k={k} p_max={p_max} expect=fail\n"
    ));
    t.push_str(&format!("check in_order client=persistent channel=fifo k={k} p_max={p_max}\n"));
    Ok(t)
}

pub fn transmission_model(k: u8, p_max: u8) -> Result<(Model, Transmission, Transmission)> {
    let model = parse_model(&transmission_model_text(k, p_max)?)?;
    let counting = Transmission::new(Client::Counting, Discipline::LossyBag, k, p_max)?;
    let reference = Transmission::new(Client::Persistent, Discipline::LossyFifo, k, p_max)?;
    Ok((model, counting, reference))
}

/// Message identities along a run, tracked from buffer contents alone so
/// that delivery order can be checked without the monitor.
#[derive(Clone, Debug, Default)]
pub struct DeliveryLog {
    ids: Vec<usize>,
    sent: Vec<u8>,
    delivered: Vec<usize>,
}

impl DeliveryLog {
    pub fn step(&mut self, from: &TxState, to: &TxState) {
        let (old, new) = (&from.c, &to.c);
        if new.len() == old.len() + 1 {
            self.ids.push(self.sent.len());
            self.sent.push(new.last().expect("pushed").val);
        } else if new.len() + 1 == old.len() {
            let i = (0..old.len())
                .find(|&i| old[..i] == new[..i] && old[i + 1..] == new[i..])
                .expect("one removal");
            let id = self.ids.remove(i);
            let delivering = |s: &TxState| matches!(s.local.ctl, Ctl::Deliver(_));
            if delivering(to) && !delivering(from) {
                self.delivered.push(id);
            }
        }
    }

    pub fn in_order(&self) -> bool {
        self.delivered.windows(2).all(|w| w[0] < w[1])
    }

    pub fn describe(&self) -> String {
        let sent: Vec<String> = self.sent.iter().map(|&v| value_name(v)).collect();
        let got: Vec<String> = self
            .delivered
            .iter()
            .map(|&i| format!("{}#{}", value_name(self.sent[i]), i + 1))
            .collect();
        format!("sent {} delivered {}", sent.join(","), got.join(","))
    }
}

/// Replays a state trace and reports deliveries out of send order.
pub fn trace_delivery_order(trace: &[TxState]) -> std::result::Result<String, String> {
    let mut log = DeliveryLog::default();
    for w in trace.windows(2) {
        log.step(&w[0], &w[1]);
    }
    if log.in_order() {
        Ok(log.describe())
    } else {
        Err(log.describe())
    }
}

/// Bounded enumeration of runs: every delivered sequence must embed, in
/// order, into the sent sequence. Returns the number of runs checked, or
/// the first violating one.
pub fn check_in_order(t: &Transmission, depth: usize) -> std::result::Result<usize, Vec<String>> {
    let init = t.initial_state();
    let mut count = 0;
    let mut stack = vec![(vec![init], DeliveryLog::default())];
    while let Some((run, log)) = stack.pop() {
        count += 1;
        if !log.in_order() {
            let mut out: Vec<String> = run.iter().map(ToString::to_string).collect();
            out.push(log.describe());
            return Err(out);
        }
        if run.len() > depth {
            continue;
        }
        let last = run.last().expect("nonempty");
        for (_, next) in t.moves(last) {
            let mut log = log.clone();
            log.step(last, &next);
            let mut run = run.clone();
            run.push(next);
            stack.push((run, log));
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::minimize;
    use crate::ts::explore;

    #[test]
    fn model_text_parses() {
        let (m, _, _) = transmission_model(2, 3).unwrap();
        assert!(m.defs.contains_key("Rro"));
        assert_eq!(m.defs["Rro"].params.len(), 3);
        assert_eq!(m.checks.len(), 3);
    }

    #[test]
    fn simple_client_deadlocks_under_loss() {
        let t = Transmission::new(Client::Simple, Discipline::LossyFifo, 2, 2).unwrap();
        let g = explore(&t, 100_000, None).unwrap();
        assert!(g.complete());
        assert!((0..g.len()).any(|i| g.succ[i].is_empty()));
    }

    #[test]
    fn fifo_never_stale_bag_can_be() {
        let fifo = Transmission::new(Client::Persistent, Discipline::LossyFifo, 2, 2).unwrap();
        let g = explore(&fifo, 200_000, None).unwrap();
        assert!(g.complete());
        assert!(g.states.iter().all(|s| !s.local.err));
        let bag = Transmission::new(Client::Persistent, Discipline::LossyBag, 2, 2).unwrap();
        let g = explore(&bag, 200_000, None).unwrap();
        assert!(g.states.iter().any(|s| s.local.err));
    }

    #[test]
    fn delivery_order_on_short_runs() {
        let fifo = Transmission::new(Client::Persistent, Discipline::LossyFifo, 2, 2).unwrap();
        assert!(check_in_order(&fifo, 9).is_ok());
        let bag = Transmission::new(Client::Persistent, Discipline::LossyBag, 2, 2).unwrap();
        assert!(check_in_order(&bag, 9).is_err());
    }

    #[test]
    fn round_reset_shape() {
        let t = Transmission::new(Client::Counting, Discipline::LossyBag, 2, 2).unwrap();
        let g = explore(&t, 500_000, None).unwrap();
        for (i, s) in g.states.iter().enumerate() {
            if let Ctl::Deliver(_) = s.local.ctl {
                for &j in &g.succ[i] {
                    let n = &g.states[j];
                    if n.local.ctl == Ctl::Idle && n.c == s.c && n.b == s.b {
                        assert_eq!(n.local.p, 0);
                        assert!(n.local.n.windows(2).all(|w| w[0] == w[1]));
                    }
                }
            }
        }
    }

    #[test]
    fn pred_basis_is_sound_and_complete_on_reachable_states() {
        for (client, disc) in [
            (Client::Persistent, Discipline::LossyFifo),
            (Client::Counting, Discipline::LossyBag),
        ] {
            let t = Transmission::new(client, disc, 2, 2).unwrap();
            let g = explore(&t, 500_000, None).unwrap();
            let ord = Wsts::order(&t).clone();
            for target in g.states.iter().step_by(97).take(25) {
                let m = t.encode(target);
                let basis = minimize(&ord, t.pred_basis(&m).unwrap()).unwrap();
                for x in basis.elems() {
                    let ok = t.succ(x).unwrap().iter().any(|y| ord.leq_unchecked(&m, y));
                    assert!(ok, "{x} has no successor above {m}");
                }
                for (i, s) in g.states.iter().enumerate() {
                    let hits = g.succ[i].iter().any(|&j| ord.leq_unchecked(&m, &t.encode(&g.states[j])));
                    if hits {
                        let e = t.encode(s);
                        assert!(basis.elems().iter().any(|b| ord.leq_unchecked(b, &e)), "{s} missing for {target}");
                    }
                }
            }
        }
    }
}
