//! Well-structured transition systems: covering by backward saturation,
//! subcovering by forward minimal-basis exploration, and an empirical check
//! of weak upward simulation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::{basis_from_antichain, bucket_key, insert, member_up, minimize, Basis, Elem, QuasiOrder};

pub const DEFAULT_ITER_CAP: usize = 1_000_000;

/// Safety valve on basis insertions and explored states; `RESILCHK_ITER_CAP` overrides.
pub fn iter_cap() -> usize {
    std::env::var("RESILCHK_ITER_CAP")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_ITER_CAP)
}

pub trait Wsts {
    fn order(&self) -> &QuasiOrder;
    fn initial(&self) -> Elem;
    fn succ(&self, s: &Elem) -> Result<Vec<Elem>>;
    /// A finite basis of `↑Pred(↑s)`.
    fn pred_basis(&self, s: &Elem) -> Result<Vec<Elem>>;
    fn downward_reflexive(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub iterations: usize,
    pub insertions: usize,
    pub expanded: usize,
    pub basis_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub witness: Option<Vec<Elem>>,
    pub stats: Stats,
}

/// The chain `K_0 ⊆ K_1 ⊆ ...` of backward saturation. Every element ever
/// added is kept with its round, so `↑K_i` is the closure of those added by
/// round `i`.
#[derive(Clone, Debug)]
pub struct Chain {
    added: Vec<(Elem, usize)>,
    fixpoint: Basis,
    rounds: usize,
    pub stats: Stats,
}

impl Chain {
    pub fn fixpoint(&self) -> &Basis {
        &self.fixpoint
    }

    /// Number of levels, counting `K_0`.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Smallest level whose closure contains `x`.
    pub fn level(&self, ord: &QuasiOrder, x: &Elem) -> Option<usize> {
        let key = bucket_key(ord, x);
        let lo = self.added.partition_point(|(m, _)| bucket_key(ord, m) < key);
        self.added[lo..]
            .iter()
            .take_while(|(m, _)| key.is_none() || bucket_key(ord, m) == key)
            .filter(|(m, _)| ord.leq_unchecked(m, x))
            .map(|&(_, r)| r)
            .min()
    }

    /// The bases `K_0, K_1, ...`.
    pub fn levels(&self, ord: &QuasiOrder) -> Result<Vec<Basis>> {
        (0..self.rounds)
            .map(|i| minimize(ord, self.added.iter().filter(|(_, r)| *r <= i).map(|(m, _)| m.clone())))
            .collect()
    }
}

/// Antichain split into buckets of mutually comparable candidates.
struct Buckets<'o> {
    ord: &'o QuasiOrder,
    map: HashMap<Option<u32>, Vec<Elem>>,
}

impl<'o> Buckets<'o> {
    fn new(ord: &'o QuasiOrder) -> Self {
        Buckets { ord, map: HashMap::new() }
    }

    fn contains(&self, x: &Elem) -> bool {
        self.map
            .get(&bucket_key(self.ord, x))
            .is_some_and(|b| b.iter().any(|m| m == x))
    }

    fn insert(&mut self, x: Elem) -> bool {
        let b = self.map.entry(bucket_key(self.ord, &x)).or_default();
        if b.iter().any(|m| self.ord.leq_unchecked(m, &x)) {
            return false;
        }
        b.retain(|m| !self.ord.leq_unchecked(&x, m));
        b.push(x);
        true
    }

    fn into_basis(self) -> Basis {
        basis_from_antichain(self.map.into_values().flatten().collect())
    }
}

pub fn pred_star_basis<W: Wsts + ?Sized>(w: &W, target: &Basis) -> Result<Chain> {
    let ord = w.order();
    let cap = iter_cap();
    let mut stats = Stats::default();
    let mut k = Buckets::new(ord);
    let mut added = Vec::new();
    for m in target.elems() {
        if k.insert(m.clone()) {
            added.push((m.clone(), 0));
        }
    }
    let mut frontier: Vec<Elem> = added.iter().map(|(m, _)| m.clone()).collect();
    let mut round = 0;
    while !frontier.is_empty() {
        stats.iterations += 1;
        let mut fresh = Vec::new();
        for m in &frontier {
            stats.expanded += 1;
            for p in w.pred_basis(m)? {
                if k.insert(p.clone()) {
                    stats.insertions += 1;
                    if stats.insertions > cap {
                        return Err(Error::IterationCap(cap));
                    }
                    fresh.push(p);
                }
            }
        }
        // only elements still minimal need expanding
        frontier = fresh.into_iter().filter(|p| k.contains(p)).collect();
        if !frontier.is_empty() {
            round += 1;
            added.extend(frontier.iter().map(|p| (p.clone(), round)));
        }
    }
    let fixpoint = k.into_basis();
    stats.basis_size = fixpoint.len();
    added.sort_by(|(a, _), (b, _)| bucket_key(ord, a).cmp(&bucket_key(ord, b)).then(a.cmp(b)));
    Ok(Chain {
        added,
        fixpoint,
        rounds: round + 1,
        stats,
    })
}

/// Can `s` reach some state above `t`?
pub fn covering<W: Wsts + ?Sized>(w: &W, s: &Elem, t: &Elem) -> Result<Verdict> {
    let ord = w.order();
    let target = crate::order::minimize(ord, [t.clone()])?;
    covering_set(w, s, &target)
}

/// Can `s` reach the upward closure of `target`?
pub fn covering_set<W: Wsts + ?Sized>(w: &W, s: &Elem, target: &Basis) -> Result<Verdict> {
    let ord = w.order();
    let chain = pred_star_basis(w, target)?;
    let mut stats = chain.stats.clone();
    if !member_up(ord, chain.fixpoint(), s) {
        return Ok(Verdict {
            holds: false,
            witness: None,
            stats,
        });
    }
    let witness = guided_search(w, s, &chain, target, &mut stats)?;
    Ok(Verdict {
        holds: true,
        witness,
        stats,
    })
}

/// Best-first forward search, preferring states at lower chain levels.
fn guided_search<W: Wsts + ?Sized>(
    w: &W,
    s: &Elem,
    chain: &Chain,
    target: &Basis,
    stats: &mut Stats,
) -> Result<Option<Vec<Elem>>> {
    let ord = w.order();
    let cap = iter_cap();
    let level = |x: &Elem| chain.level(ord, x).unwrap_or(usize::MAX);
    let mut parent: HashMap<Elem, Option<Elem>> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let mut tick = 0usize;
    parent.insert(s.clone(), None);
    heap.push(Reverse((level(s), 0usize, tick, s.clone())));
    while let Some(Reverse((_, depth, _, x))) = heap.pop() {
        if member_up(ord, target, &x) {
            return Ok(Some(path(&parent, x)));
        }
        stats.expanded += 1;
        if parent.len() > cap {
            return Ok(None);
        }
        for y in w.succ(&x)? {
            if !parent.contains_key(&y) {
                parent.insert(y.clone(), Some(x.clone()));
                tick += 1;
                heap.push(Reverse((level(&y), depth + 1, tick, y)));
            }
        }
    }
    Ok(None)
}

fn path(parent: &HashMap<Elem, Option<Elem>>, end: Elem) -> Vec<Elem> {
    let mut out = vec![end];
    while let Some(Some(p)) = parent.get(out.last().expect("nonempty")) {
        out.push(p.clone());
    }
    out.reverse();
    out
}

/// Minimal reachable states from `s`, with the parent map used for witnesses.
pub fn succ_star_basis<W: Wsts + ?Sized>(w: &W, s: &Elem) -> Result<(Basis, Stats)> {
    let (b, _, stats) = forward_basis(w, s)?;
    Ok((b, stats))
}

type Parents = HashMap<Elem, Option<Elem>>;

fn forward_basis<W: Wsts + ?Sized>(w: &W, s: &Elem) -> Result<(Basis, Parents, Stats)> {
    if !w.downward_reflexive() {
        return Err(Error::PreconditionViolated(
            "instance lacks downward reflexive simulation".into(),
        ));
    }
    let ord = w.order();
    let cap = iter_cap();
    let mut stats = Stats::default();
    let mut b = Basis::empty();
    let mut parent: Parents = HashMap::new();
    insert(ord, &mut b, s.clone());
    parent.insert(s.clone(), None);
    let mut queue = VecDeque::from([s.clone()]);
    while let Some(x) = queue.pop_front() {
        stats.expanded += 1;
        for y in w.succ(&x)? {
            if parent.contains_key(&y) {
                continue;
            }
            if insert(ord, &mut b, y.clone()) {
                stats.insertions += 1;
                if stats.insertions > cap {
                    return Err(Error::IterationCap(cap));
                }
                parent.insert(y.clone(), Some(x.clone()));
                queue.push_back(y);
            }
        }
        stats.iterations += 1;
    }
    stats.basis_size = b.len();
    Ok((b, parent, stats))
}

/// Can `s` reach some state below `t`?
pub fn subcovering<W: Wsts + ?Sized>(w: &W, s: &Elem, t: &Elem) -> Result<Verdict> {
    let ord = w.order();
    let (b, parent, stats) = forward_basis(w, s)?;
    let hit = b.elems().iter().find(|m| ord.leq_unchecked(m, t)).cloned();
    Ok(Verdict {
        holds: hit.is_some(),
        witness: hit.map(|m| path(&parent, m)),
        stats,
    })
}

/// Checks that consecutive states of `trace` are related by `succ`.
pub fn replay<W: Wsts + ?Sized>(w: &W, trace: &[Elem]) -> Result<bool> {
    for pair in trace.windows(2) {
        if !w.succ(&pair[0])?.contains(&pair[1]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Breadth-first reachable states, at most `cap` of them; the flag reports saturation.
pub fn reachable<W: Wsts + ?Sized>(w: &W, cap: usize) -> Result<(Vec<Elem>, bool)> {
    let init = w.initial();
    let mut seen: HashSet<Elem> = HashSet::from([init.clone()]);
    let mut order = vec![init.clone()];
    let mut queue = VecDeque::from([init]);
    while let Some(x) = queue.pop_front() {
        for y in w.succ(&x)? {
            if seen.contains(&y) {
                continue;
            }
            if seen.len() >= cap {
                return Ok((order, false));
            }
            seen.insert(y.clone());
            order.push(y.clone());
            queue.push_back(y);
        }
    }
    Ok((order, true))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimCounterexample {
    pub s: Elem,
    pub s_next: Elem,
    pub t: Elem,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimReport {
    pub samples: usize,
    pub counterexamples: Vec<SimCounterexample>,
    pub validated: bool,
}

/// Samples `s → s'` and `s ⪯ t` among reachable states and searches
/// `t →* t'` with `s' ⪯ t'` within `depth` steps.
pub fn check_upward_simulation<W: Wsts + ?Sized, R: Rng>(
    w: &W,
    samples: usize,
    depth: usize,
    pool_cap: usize,
    rng: &mut R,
) -> Result<SimReport> {
    let ord = w.order();
    let (pool, _) = reachable(w, pool_cap)?;
    let mut buckets: HashMap<Option<u32>, Vec<usize>> = HashMap::new();
    for (j, x) in pool.iter().enumerate() {
        buckets.entry(bucket_key(ord, x)).or_default().push(j);
    }
    let mut above: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut succ_cache: HashMap<usize, Vec<Elem>> = HashMap::new();
    let mut bad: Vec<SimCounterexample> = Vec::new();
    let mut seen_bad: HashSet<(Elem, Elem, Elem)> = HashSet::new();
    let mut taken = 0;
    for _ in 0..samples {
        let i = rng.gen_range(0..pool.len());
        let s = &pool[i];
        let succ = match succ_cache.get(&i) {
            Some(v) => v.clone(),
            None => {
                let v = w.succ(s)?;
                succ_cache.insert(i, v.clone());
                v
            }
        };
        let Some(s_next) = succ.choose(rng) else { continue };
        let ups = above.entry(i).or_insert_with(|| {
            buckets[&bucket_key(ord, s)]
                .iter()
                .copied()
                .filter(|&j| ord.leq_unchecked(s, &pool[j]))
                .collect()
        });
        let j = *ups.choose(rng).expect("s is above itself");
        let t = &pool[j];
        taken += 1;
        if !reaches_above(w, t, s_next, depth)? {
            let key = (s.clone(), s_next.clone(), t.clone());
            if seen_bad.insert(key) && bad.len() < 16 {
                bad.push(SimCounterexample {
                    s: s.clone(),
                    s_next: s_next.clone(),
                    t: t.clone(),
                });
            }
        }
    }
    Ok(SimReport {
        samples: taken,
        validated: bad.is_empty(),
        counterexamples: bad,
    })
}

fn reaches_above<W: Wsts + ?Sized>(w: &W, t: &Elem, goal: &Elem, depth: usize) -> Result<bool> {
    let ord = w.order();
    let mut seen = HashSet::from([t.clone()]);
    let mut frontier = vec![t.clone()];
    for _ in 0..=depth {
        if frontier.iter().any(|x| ord.leq_unchecked(goal, x)) {
            return Ok(true);
        }
        let mut next = Vec::new();
        for x in &frontier {
            for y in w.succ(x)? {
                if seen.insert(y.clone()) {
                    next.push(y);
                }
            }
        }
        frontier = next;
    }
    Ok(false)
}
