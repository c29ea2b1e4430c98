//! Barbed transition systems and explicit state-graph exploration.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::hash::Hash;

use crate::calculus::{canonicalize, strong_barbs, successors, Barb, CanonicalState, Model, Proc, Up};
use crate::error::Result;

pub trait TransitionSystem {
    type State: Clone + Eq + Hash + Ord + fmt::Debug + fmt::Display;

    fn initial(&self) -> Result<Self::State>;
    fn successors(&self, s: &Self::State) -> Result<Vec<Self::State>>;
    fn barbs(&self, s: &Self::State) -> Result<BTreeSet<Barb>>;
}

/// Reachable fragment of a transition system. Node 0 is the initial state.
#[derive(Clone, Debug)]
pub struct StateGraph<S> {
    pub states: Vec<S>,
    pub index: HashMap<S, usize>,
    pub succ: Vec<Vec<usize>>,
    pub barbs: Vec<BTreeSet<Barb>>,
    /// Nodes whose successors were not expanded (cap or depth reached).
    pub frontier: Vec<usize>,
    pub depth: Vec<usize>,
}

impl<S: Clone + Eq + Hash> StateGraph<S> {
    pub fn complete(&self) -> bool {
        self.frontier.is_empty()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Shortest path of node indices from the initial state to `target`.
    pub fn path_to(&self, target: usize) -> Vec<usize> {
        let mut parent = vec![usize::MAX; self.len()];
        let mut queue = VecDeque::from([0usize]);
        parent[0] = 0;
        while let Some(x) = queue.pop_front() {
            if x == target {
                break;
            }
            for &y in &self.succ[x] {
                if parent[y] == usize::MAX {
                    parent[y] = x;
                    queue.push_back(y);
                }
            }
        }
        let mut out = vec![target];
        while *out.last().expect("nonempty") != 0 {
            let p = parent[*out.last().expect("nonempty")];
            if p == usize::MAX {
                return Vec::new();
            }
            out.push(p);
        }
        out.reverse();
        out
    }

    /// Nodes reachable from `i` (including `i`).
    pub fn closure(&self, i: usize) -> Vec<usize> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![i];
        let mut out = Vec::new();
        seen[i] = true;
        while let Some(x) = stack.pop() {
            out.push(x);
            for &y in &self.succ[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        out
    }
}

/// Breadth-first exploration up to `cap` states and optionally `max_depth` steps.
pub fn explore<T: TransitionSystem>(
    t: &T,
    cap: usize,
    max_depth: Option<usize>,
) -> Result<StateGraph<T::State>> {
    let init = t.initial()?;
    let mut g = StateGraph {
        states: vec![init.clone()],
        index: HashMap::from([(init.clone(), 0)]),
        succ: vec![Vec::new()],
        barbs: vec![t.barbs(&init)?],
        frontier: Vec::new(),
        depth: vec![0],
    };
    let mut queue = VecDeque::from([0usize]);
    let mut full = false;
    while let Some(i) = queue.pop_front() {
        if full || max_depth.is_some_and(|d| g.depth[i] >= d) {
            g.frontier.push(i);
            continue;
        }
        let mut out = Vec::new();
        let mut truncated = false;
        for s in t.successors(&g.states[i].clone())? {
            let j = match g.index.get(&s) {
                Some(&j) => j,
                None => {
                    if g.states.len() >= cap {
                        truncated = true;
                        full = true;
                        continue;
                    }
                    let j = g.states.len();
                    g.barbs.push(t.barbs(&s)?);
                    g.states.push(s.clone());
                    g.index.insert(s, j);
                    g.succ.push(Vec::new());
                    g.depth.push(g.depth[i] + 1);
                    queue.push_back(j);
                    j
                }
            };
            out.push(j);
        }
        out.sort_unstable();
        out.dedup();
        g.succ[i] = out;
        if truncated {
            g.frontier.push(i);
        }
    }
    g.frontier.sort_unstable();
    Ok(g)
}

/// Breadth-first exploration from an arbitrary state.
pub fn explore_from<T: TransitionSystem>(
    t: &T,
    start: &T::State,
    cap: usize,
    max_depth: Option<usize>,
) -> Result<StateGraph<T::State>> {
    struct From<'a, T: TransitionSystem>(&'a T, &'a T::State);
    impl<T: TransitionSystem> TransitionSystem for From<'_, T> {
        type State = T::State;
        fn initial(&self) -> Result<T::State> {
            Ok(self.1.clone())
        }
        fn successors(&self, s: &T::State) -> Result<Vec<T::State>> {
            self.0.successors(s)
        }
        fn barbs(&self, s: &T::State) -> Result<BTreeSet<Barb>> {
            self.0.barbs(s)
        }
    }
    explore(&From(t, start), cap, max_depth)
}

/// Strongly connected components in reverse topological order
/// (every edge leaves a component for an earlier one, or stays inside).
pub fn sccs(succ: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let n = succ.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        // explicit call stack of (node, next edge)
        let mut call = vec![(root, 0usize)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut e)) = call.last_mut() {
            if *e < succ[v].len() {
                let w = succ[v][*e];
                *e += 1;
                if index[w] == usize::MAX {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(u, _)) = call.last() {
                    low[u] = low[u].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut c = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack");
                        on_stack[w] = false;
                        comp[w] = comps.len();
                        c.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comps.push(c);
                }
            }
        }
    }
    (comp, comps)
}

/// A closed process under a fixed location up-set.
pub struct ProcessTs<'m> {
    pub model: &'m Model,
    pub init: CanonicalState,
    pub up: Up,
}

impl<'m> ProcessTs<'m> {
    pub fn new(model: &'m Model, p: &Proc) -> Result<Self> {
        Ok(ProcessTs {
            model,
            init: canonicalize(model, p)?,
            up: Up::All,
        })
    }
}

impl TransitionSystem for ProcessTs<'_> {
    type State = CanonicalState;

    fn initial(&self) -> Result<CanonicalState> {
        Ok(self.init.clone())
    }

    fn successors(&self, s: &CanonicalState) -> Result<Vec<CanonicalState>> {
        successors(self.model, s, &self.up)
    }

    fn barbs(&self, s: &CanonicalState) -> Result<BTreeSet<Barb>> {
        strong_barbs(self.model, s, &self.up)
    }
}
