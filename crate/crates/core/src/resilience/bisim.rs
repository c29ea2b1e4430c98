//! Explicit-state weak barbed bisimulation by partition refinement.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::calculus::Barb;
use crate::error::{Error, Result};
use crate::ts::{explore, explore_from, sccs, StateGraph, TransitionSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// A reachable state pair whose weak barbs differ, with the traces leading there.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub barb: Barb,
    pub present_on: Side,
    pub left_trace: Vec<String>,
    pub right_trace: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BisimResult {
    pub equivalent: bool,
    pub evidence: Option<Evidence>,
    pub left_states: usize,
    pub right_states: usize,
    pub blocks: usize,
    pub rounds: usize,
}

/// A finished comparison, keeping the explored graphs for replay.
pub struct BisimRun<A, B> {
    pub result: BisimResult,
    pub left: StateGraph<A>,
    pub right: StateGraph<B>,
    left_path: Vec<usize>,
    right_path: Vec<usize>,
}

/// Weak barb sets (barbs reachable by any number of steps) for every node.
pub fn weak_barb_sets(succ: &[Vec<usize>], barbs: &[BTreeSet<Barb>]) -> Vec<BTreeSet<Barb>> {
    let (comp, comps) = sccs(succ);
    let mut per_comp: Vec<BTreeSet<Barb>> = Vec::with_capacity(comps.len());
    for members in &comps {
        let mut acc = BTreeSet::new();
        for &v in members {
            acc.extend(barbs[v].iter().cloned());
            for &w in &succ[v] {
                if comp[w] != comp[v] {
                    acc.extend(per_comp[comp[w]].iter().cloned());
                }
            }
        }
        per_comp.push(acc);
    }
    comp.iter().map(|&c| per_comp[c].clone()).collect()
}

struct Refinement {
    /// `history[r][v]` is the block of node `v` after round `r`.
    history: Vec<Vec<u32>>,
    wb: Vec<BTreeSet<Barb>>,
}

fn refine(succ: &[Vec<usize>], barbs: &[BTreeSet<Barb>]) -> Refinement {
    let wb = weak_barb_sets(succ, barbs);
    let mut ids: HashMap<&BTreeSet<Barb>, u32> = HashMap::new();
    let first: Vec<u32> = wb
        .iter()
        .map(|b| {
            let n = ids.len() as u32;
            *ids.entry(b).or_insert(n)
        })
        .collect();
    let (comp, comps) = sccs(succ);
    let mut history = vec![first];
    loop {
        let block = history.last().expect("nonempty");
        let count = block.iter().collect::<BTreeSet<_>>().len();
        // blocks reachable (reflexively) from each component
        let mut sig: Vec<Vec<u32>> = Vec::with_capacity(comps.len());
        for members in &comps {
            let mut acc: BTreeSet<u32> = BTreeSet::new();
            for &v in members {
                acc.insert(block[v]);
                for &w in &succ[v] {
                    if comp[w] != comp[v] {
                        acc.extend(sig[comp[w]].iter().copied());
                    }
                }
            }
            sig.push(acc.into_iter().collect());
        }
        let mut ids: HashMap<(u32, &[u32]), u32> = HashMap::new();
        let next: Vec<u32> = (0..succ.len())
            .map(|v| {
                let n = ids.len() as u32;
                *ids.entry((block[v], sig[comp[v]].as_slice())).or_insert(n)
            })
            .collect();
        let stable = ids.len() == count;
        history.push(next);
        if stable {
            return Refinement { history, wb };
        }
    }
}

impl Refinement {
    fn final_block(&self, v: usize) -> u32 {
        self.history.last().expect("nonempty")[v]
    }

    /// First round at which `a` and `b` fall in different blocks.
    fn split_round(&self, a: usize, b: usize) -> Option<usize> {
        self.history.iter().position(|h| h[a] != h[b])
    }
}

/// Shortest path from `from` to the nearest node satisfying `goal`.
fn bfs_until(succ: &[Vec<usize>], from: usize, goal: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
    let mut parent: HashMap<usize, usize> = HashMap::from([(from, from)]);
    let mut queue = VecDeque::from([from]);
    let mut hit = None;
    while let Some(x) = queue.pop_front() {
        if goal(x) {
            hit = Some(x);
            break;
        }
        for &y in &succ[x] {
            if let std::collections::hash_map::Entry::Vacant(e) = parent.entry(y) {
                e.insert(x);
                queue.push_back(y);
            }
        }
    }
    let mut out = vec![hit?];
    while *out.last().expect("nonempty") != from {
        out.push(parent[out.last().expect("nonempty")]);
    }
    out.reverse();
    Some(out)
}

fn bfs_path(succ: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    bfs_until(succ, from, |v| v == to).expect("target is reachable")
}

fn closure(succ: &[Vec<usize>], v: usize) -> Vec<usize> {
    let mut seen = BTreeSet::from([v]);
    let mut stack = vec![v];
    while let Some(x) = stack.pop() {
        for &y in &succ[x] {
            if seen.insert(y) {
                stack.push(y);
            }
        }
    }
    seen.into_iter().collect()
}

/// Plays the distinguishing game down to a pair with different weak barbs.
/// Returns the pair of paths (in union-graph indices) and the barb.
fn distinguish(
    succ: &[Vec<usize>],
    barbs: &[BTreeSet<Barb>],
    rf: &Refinement,
    l0: usize,
    r0: usize,
) -> (Vec<usize>, Vec<usize>, Barb, Side) {
    let (mut lp, mut rp) = (vec![l0], vec![r0]);
    loop {
        let (l, r) = (*lp.last().expect("nonempty"), *rp.last().expect("nonempty"));
        let round = rf.split_round(l, r).expect("pair is separated");
        if round == 0 {
            let diff = rf.wb[l].symmetric_difference(&rf.wb[r]).next().expect("barbs differ").clone();
            let side = if rf.wb[l].contains(&diff) { Side::Left } else { Side::Right };
            // run on to the nearest state showing the barb
            let (from, path) = if side == Side::Left { (l, &mut lp) } else { (r, &mut rp) };
            let shown = bfs_until(succ, from, |v| barbs[v].contains(&diff)).expect("weak barb is shown somewhere");
            path.extend(shown.into_iter().skip(1));
            return (lp, rp, diff, side);
        }
        let prev = &rf.history[round - 1];
        let (cl, cr) = (closure(succ, l), closure(succ, r));
        let bl: BTreeSet<u32> = cl.iter().map(|&v| prev[v]).collect();
        let br: BTreeSet<u32> = cr.iter().map(|&v| prev[v]).collect();
        // the attacker moves on the side that reaches a block the other cannot
        let (attacker_left, block) = match bl.difference(&br).next() {
            Some(&b) => (true, b),
            None => (false, *br.difference(&bl).next().expect("signatures differ")),
        };
        let (from, other, other_reach) = if attacker_left { (l, r, &cr) } else { (r, l, &cl) };
        let a_path = bfs_until(succ, from, |v| prev[v] == block).expect("block is reachable");
        let target = *a_path.last().expect("nonempty");
        // the defender answers with the state that stays related longest
        let answer = *other_reach
            .iter()
            .max_by_key(|&&v| rf.split_round(target, v).unwrap_or(usize::MAX))
            .expect("closure is nonempty");
        let d_path = bfs_path(succ, other, answer);
        let (ext_l, ext_r) = if attacker_left { (a_path, d_path) } else { (d_path, a_path) };
        lp.extend(ext_l.into_iter().skip(1));
        rp.extend(ext_r.into_iter().skip(1));
    }
}

/// Left path, right path, the differing barb and the side showing it.
type Distinction = (Vec<usize>, Vec<usize>, Barb, Side);

/// Compares two barbed graphs given as successor lists and strong barbs.
fn compare(
    left: (&[Vec<usize>], &[BTreeSet<Barb>]),
    right: (&[Vec<usize>], &[BTreeSet<Barb>]),
) -> (bool, Option<Distinction>, usize, usize) {
    let nl = left.0.len();
    let mut succ: Vec<Vec<usize>> = left.0.to_vec();
    succ.extend(right.0.iter().map(|s| s.iter().map(|&v| v + nl).collect()));
    let mut barbs: Vec<BTreeSet<Barb>> = left.1.to_vec();
    barbs.extend(right.1.iter().cloned());
    let rf = refine(&succ, &barbs);
    let blocks = rf.history.last().expect("nonempty").iter().collect::<BTreeSet<_>>().len();
    let rounds = rf.history.len();
    if rf.final_block(0) == rf.final_block(nl) {
        return (true, None, blocks, rounds);
    }
    let (lp, rp, barb, side) = distinguish(&succ, &barbs, &rf, 0, nl);
    let rp = rp.into_iter().map(|v| v - nl).collect();
    (false, Some((lp, rp, barb, side)), blocks, rounds)
}

/// Decides weak barbed bisimilarity of the initial states of `a` and `b`.
/// Both reachable state spaces must fit within `cap`.
pub fn explicit_weak_barbed_bisim<A: TransitionSystem, B: TransitionSystem>(
    a: &A,
    b: &B,
    cap: usize,
) -> Result<BisimRun<A::State, B::State>> {
    let left = explore(a, cap, None)?;
    let right = explore(b, cap, None)?;
    if !left.complete() || !right.complete() {
        return Err(Error::Inconclusive(format!("state space exceeds cap {cap}")));
    }
    Ok(bisim_graphs(left, right))
}

/// Bisimilarity of two fully explored graphs.
pub fn bisim_graphs<SA, SB>(left: StateGraph<SA>, right: StateGraph<SB>) -> BisimRun<SA, SB>
where
    SA: Clone + Eq + std::hash::Hash + std::fmt::Display,
    SB: Clone + Eq + std::hash::Hash + std::fmt::Display,
{
    let (equivalent, ev, blocks, rounds) = compare((&left.succ, &left.barbs), (&right.succ, &right.barbs));
    let (mut left_path, mut right_path) = (Vec::new(), Vec::new());
    let evidence = ev.map(|(lp, rp, barb, side)| {
        left_path = lp;
        right_path = rp;
        Evidence {
            barb,
            present_on: side,
            left_trace: left_path.iter().map(|&v| left.states[v].to_string()).collect(),
            right_trace: right_path.iter().map(|&v| right.states[v].to_string()).collect(),
        }
    });
    BisimRun {
        result: BisimResult {
            equivalent,
            evidence,
            left_states: left.len(),
            right_states: right.len(),
            blocks,
            rounds,
        },
        left,
        right,
        left_path,
        right_path,
    }
}

impl<SA, SB> BisimRun<SA, SB>
where
    SA: Clone + Eq + std::hash::Hash,
    SB: Clone + Eq + std::hash::Hash,
{
    /// Node indices of the left witness trace, empty when equivalent.
    pub fn left_path(&self) -> &[usize] {
        &self.left_path
    }

    pub fn right_path(&self) -> &[usize] {
        &self.right_path
    }

    /// Re-executes the evidence against the semantics: both traces follow
    /// real steps from the initial states, and the barb is weakly present
    /// at the end of exactly one of them.
    pub fn replay<A, B>(&self, a: &A, b: &B, cap: usize) -> Result<bool>
    where
        A: TransitionSystem<State = SA>,
        B: TransitionSystem<State = SB>,
    {
        let Some(ev) = &self.result.evidence else {
            return Ok(true);
        };
        let lt: Vec<SA> = self.left_path.iter().map(|&v| self.left.states[v].clone()).collect();
        let rt: Vec<SB> = self.right_path.iter().map(|&v| self.right.states[v].clone()).collect();
        let (Some(lend), Some(rend)) = (trace_ok(a, &lt)?, trace_ok(b, &rt)?) else {
            return Ok(false);
        };
        let lw = weak_from(a, &lend, cap)?;
        let rw = weak_from(b, &rend, cap)?;
        let on_left = lw.contains(&ev.barb);
        let on_right = rw.contains(&ev.barb);
        Ok(on_left != on_right && on_left == (ev.present_on == Side::Left))
    }
}

fn trace_ok<T: TransitionSystem>(t: &T, trace: &[T::State]) -> Result<Option<T::State>> {
    if trace.first() != Some(&t.initial()?) {
        return Ok(None);
    }
    for w in trace.windows(2) {
        if !t.successors(&w[0])?.contains(&w[1]) {
            return Ok(None);
        }
    }
    Ok(trace.last().cloned())
}

/// Weak barbs of a state, computed afresh.
pub fn weak_from<T: TransitionSystem>(t: &T, s: &T::State, cap: usize) -> Result<BTreeSet<Barb>> {
    let g = explore_from(t, s, cap, None)?;
    if !g.complete() {
        return Err(Error::Inconclusive(format!("state space exceeds cap {cap}")));
    }
    Ok(g.barbs.into_iter().flatten().collect())
}
