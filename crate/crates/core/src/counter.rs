//! Finite-control counter systems: the reference WSTS instances used to
//! cross-check the deciders against brute-force reachability.

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::{Elem, QuasiOrder};
use crate::wsts::Wsts;

/// `from → to`, consuming `take` and then adding `add`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub from: u32,
    pub to: u32,
    pub take: Vec<u64>,
    pub add: Vec<u64>,
    /// Guarded rules require `x ≥ take`; unguarded ones subtract with monus.
    pub guarded: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CounterSystem {
    pub controls: u32,
    pub dim: usize,
    pub rules: Vec<Rule>,
    /// Counters saturate at this value; `None` leaves them unbounded.
    pub cap: Option<u64>,
    pub init: (u32, Vec<u64>),
    pub downward: bool,
    #[serde(skip, default = "placeholder_order")]
    order: QuasiOrder,
}

fn placeholder_order() -> QuasiOrder {
    QuasiOrder::Product(Vec::new())
}

pub fn state(q: u32, xs: &[u64]) -> Elem {
    Elem::Tuple(vec![Elem::Atom(q), Elem::Vec(xs.to_vec())])
}

fn unpack(e: &Elem) -> Result<(u32, &[u64])> {
    match e {
        Elem::Tuple(t) => match t.as_slice() {
            [Elem::Atom(q), Elem::Vec(xs)] => Ok((*q, xs)),
            _ => Err(Error::CarrierMismatch(format!("{e} is not a counter state"))),
        },
        _ => Err(Error::CarrierMismatch(format!("{e} is not a counter state"))),
    }
}

impl CounterSystem {
    pub fn new(controls: u32, dim: usize, rules: Vec<Rule>, cap: Option<u64>, init: (u32, Vec<u64>)) -> Result<Self> {
        for r in &rules {
            if r.from >= controls || r.to >= controls || r.take.len() != dim || r.add.len() != dim {
                return Err(Error::BadParams(format!("malformed rule {r:?}")));
            }
        }
        if init.0 >= controls || init.1.len() != dim {
            return Err(Error::BadParams("malformed initial state".into()));
        }
        let downward = rules.iter().all(|r| !r.guarded || is_drop(r));
        Ok(CounterSystem {
            controls,
            dim,
            rules,
            cap,
            init,
            downward,
            order: QuasiOrder::Product(vec![QuasiOrder::EqualityOn(controls), QuasiOrder::DicksonVec(dim)]),
        })
    }

    /// Single-counter increment loop at control 0.
    pub fn increment_loop(cap: Option<u64>) -> Self {
        let r = Rule {
            from: 0,
            to: 0,
            take: vec![0],
            add: vec![1],
            guarded: true,
        };
        CounterSystem::new(1, 1, vec![r], cap, (0, vec![0])).expect("well-formed")
    }

    fn fire(&self, r: &Rule, xs: &[u64]) -> Option<Vec<u64>> {
        if r.guarded && xs.iter().zip(&r.take).any(|(x, t)| x < t) {
            return None;
        }
        let ys = xs
            .iter()
            .zip(r.take.iter().zip(&r.add))
            .map(|(x, (t, a))| {
                let y = x.saturating_sub(*t) + a;
                self.cap.map_or(y, |c| y.min(c))
            })
            .collect();
        Some(ys)
    }

    /// Random instance: at most `max_controls` control points, `max_dim` counters,
    /// values saturating at `cap`. With `downward`, rules are unguarded (monus)
    /// and every counter can be dropped by one at every control point.
    pub fn random<R: Rng>(rng: &mut R, max_controls: u32, max_dim: usize, cap: u64, downward: bool) -> Self {
        let controls = rng.gen_range(1..=max_controls);
        let dim = rng.gen_range(1..=max_dim);
        let n_rules = rng.gen_range(1..=(2 * controls as usize + 2));
        let mut rules = Vec::new();
        for _ in 0..n_rules {
            rules.push(Rule {
                from: rng.gen_range(0..controls),
                to: rng.gen_range(0..controls),
                take: (0..dim).map(|_| rng.gen_range(0..=2)).collect(),
                add: (0..dim).map(|_| rng.gen_range(0..=2)).collect(),
                guarded: !downward,
            });
        }
        if downward {
            for q in 0..controls {
                for j in 0..dim {
                    let mut take = vec![0; dim];
                    take[j] = 1;
                    rules.push(Rule {
                        from: q,
                        to: q,
                        take,
                        add: vec![0; dim],
                        guarded: true,
                    });
                }
            }
        }
        let init = (0, (0..dim).map(|_| rng.gen_range(0..=2)).collect());
        CounterSystem::new(controls, dim, rules, Some(cap), init).expect("well-formed")
    }

    /// Random state in the carrier (bounded by `cap`, or 8 when unbounded).
    pub fn random_state<R: Rng>(&self, rng: &mut R) -> Elem {
        let hi = self.cap.unwrap_or(8);
        let xs: Vec<u64> = (0..self.dim).map(|_| rng.gen_range(0..=hi)).collect();
        state(rng.gen_range(0..self.controls), &xs)
    }

    /// Explicit reachable set; exact when `cap` is set.
    pub fn explore(&self, from: &Elem, limit: usize) -> Result<(HashSet<Elem>, bool)> {
        let mut seen = HashSet::from([from.clone()]);
        let mut queue = VecDeque::from([from.clone()]);
        while let Some(x) = queue.pop_front() {
            for y in self.succ(&x)? {
                if seen.contains(&y) {
                    continue;
                }
                if seen.len() >= limit {
                    return Ok((seen, false));
                }
                seen.insert(y.clone());
                queue.push_back(y);
            }
        }
        Ok((seen, true))
    }

    /// Brute-force covering: some reachable state above `t`.
    pub fn oracle_covering(&self, s: &Elem, t: &Elem, limit: usize) -> Result<Option<bool>> {
        let (seen, done) = self.explore(s, limit)?;
        let hit = seen.iter().any(|x| self.order.leq_unchecked(t, x));
        Ok(if hit || done { Some(hit) } else { None })
    }

    /// Brute-force subcovering: some reachable state below `t`.
    pub fn oracle_subcovering(&self, s: &Elem, t: &Elem, limit: usize) -> Result<Option<bool>> {
        let (seen, done) = self.explore(s, limit)?;
        let hit = seen.iter().any(|x| self.order.leq_unchecked(x, t));
        Ok(if hit || done { Some(hit) } else { None })
    }

    /// Brute-force predecessors of `↑m` among states bounded by `bound`.
    pub fn oracle_pred(&self, m: &Elem, bound: u64) -> Result<Vec<Elem>> {
        let mut out = Vec::new();
        let mut xs = vec![0u64; self.dim];
        loop {
            for q in 0..self.controls {
                let x = state(q, &xs);
                if self.succ(&x)?.iter().any(|y| self.order.leq_unchecked(m, y)) {
                    out.push(x);
                }
            }
            let mut i = 0;
            loop {
                if i == self.dim {
                    return Ok(out);
                }
                if xs[i] < bound {
                    xs[i] += 1;
                    break;
                }
                xs[i] = 0;
                i += 1;
            }
        }
    }
}

fn is_drop(r: &Rule) -> bool {
    r.from == r.to && r.add.iter().all(|&a| a == 0) && r.take.iter().sum::<u64>() == 1
}

impl Wsts for CounterSystem {
    fn order(&self) -> &QuasiOrder {
        &self.order
    }

    fn initial(&self) -> Elem {
        state(self.init.0, &self.init.1)
    }

    fn succ(&self, s: &Elem) -> Result<Vec<Elem>> {
        let (q, xs) = unpack(s)?;
        let mut out: Vec<Elem> = self
            .rules
            .iter()
            .filter(|r| r.from == q)
            .filter_map(|r| self.fire(r, xs).map(|ys| state(r.to, &ys)))
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn pred_basis(&self, s: &Elem) -> Result<Vec<Elem>> {
        let (q, ms) = unpack(s)?;
        let mut out = Vec::new();
        'rules: for r in self.rules.iter().filter(|r| r.to == q) {
            let mut xs = Vec::with_capacity(self.dim);
            for ((m, t), a) in ms.iter().zip(&r.take).zip(&r.add) {
                // post ≥ m iff monus(x, t) + a ≥ m (saturation never bites: m ≤ cap)
                let need = if *m <= *a { 0 } else { m - a + t };
                let x = if r.guarded { need.max(*t) } else { need };
                if self.cap.is_some_and(|c| x > c) {
                    continue 'rules;
                }
                xs.push(x);
            }
            out.push(state(r.from, &xs));
        }
        Ok(out)
    }

    fn downward_reflexive(&self) -> bool {
        self.downward
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::minimize;
    use crate::wsts::{covering, pred_star_basis, replay, subcovering, succ_star_basis};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn increment_loop_backward_basis() {
        let w = CounterSystem::increment_loop(Some(10));
        let target = minimize(w.order(), [state(0, &[5])]).unwrap();
        let chain = pred_star_basis(&w, &target).unwrap();
        assert_eq!(chain.fixpoint().elems(), &[state(0, &[0])]);
    }

    #[test]
    fn increment_loop_covering_witness() {
        let w = CounterSystem::increment_loop(Some(10));
        let v = covering(&w, &state(0, &[0]), &state(0, &[5])).unwrap();
        assert!(v.holds);
        let tr = v.witness.unwrap();
        assert_eq!(tr.len(), 6);
        assert!(replay(&w, &tr).unwrap());
    }

    #[test]
    fn covering_is_reflexive() {
        let w = CounterSystem::increment_loop(None);
        let s = state(0, &[3]);
        let v = covering(&w, &s, &s).unwrap();
        assert!(v.holds);
        assert_eq!(v.witness.unwrap(), vec![s]);
    }

    #[test]
    fn no_predecessors_means_fixpoint_at_start() {
        let r = Rule {
            from: 0,
            to: 0,
            take: vec![1],
            add: vec![0],
            guarded: true,
        };
        let w = CounterSystem::new(2, 1, vec![r], Some(8), (0, vec![0])).unwrap();
        let target = minimize(w.order(), [state(1, &[2])]).unwrap();
        let chain = pred_star_basis(&w, &target).unwrap();
        assert_eq!(chain.rounds(), 1);
        assert_eq!(chain.fixpoint(), &target);
    }

    #[test]
    fn increment_only_cannot_subcover_below() {
        let mut w = CounterSystem::increment_loop(Some(10));
        assert!(subcovering(&w, &state(0, &[3]), &state(0, &[2])).is_err());
        w.downward = true; // increments are downward-simulating
        let v = subcovering(&w, &state(0, &[3]), &state(0, &[2])).unwrap();
        assert!(!v.holds);
        let (b, _) = succ_star_basis(&w, &state(0, &[3])).unwrap();
        assert_eq!(b.elems(), &[state(0, &[3])]);
    }

    #[test]
    fn pred_basis_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for downward in [false, true] {
            for _ in 0..40 {
                let w = CounterSystem::random(&mut rng, 3, 2, 6, downward);
                let m = w.random_state(&mut rng);
                let brute = minimize(w.order(), w.oracle_pred(&m, 6).unwrap()).unwrap();
                let sym = minimize(w.order(), w.pred_basis(&m).unwrap()).unwrap();
                assert_eq!(brute, sym, "{w:?} at {m}");
            }
        }
    }
}
