//! Resilience verdicts: explicit bisimulation against a reference, or
//! covering and subcovering obligations on a WSTS packaging.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{couple, CoupledState, CoupledSystem};
use crate::calculus::{plug, AdversarySpec, Barb, CheckDecl, Context, Model, Proc};
use crate::error::{Error, Result};
use crate::order::{minimize, Basis, Elem, QuasiOrder};
use crate::ts::{explore, StateGraph};
use crate::wsts::{check_upward_simulation, covering_set, succ_star_basis, SimCounterexample, Stats, Verdict, Wsts};

use super::bisim::{bisim_graphs, weak_barb_sets, Evidence};
use super::constraints::{check_context_constraints, ConstraintReport, Outcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Explicit,
    Wsts,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Engine::Explicit),
            "wsts" => Ok(Engine::Wsts),
            _ => Err(Error::BadParams(format!("unknown engine `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    /// Explicit state budget per side.
    pub cap: usize,
    /// Exploration depth for the context constraints.
    pub depth: usize,
    /// Mediated buffers longer than this are pruned.
    pub buffer_cap: Option<usize>,
    /// Samples for the upward-simulation check of the WSTS packaging.
    pub samples: usize,
    pub seed: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            cap: 200_000,
            depth: 12,
            buffer_cap: Some(3),
            samples: 2_000,
            seed: 0,
        }
    }
}

/// A resilience question: does `env[c[q]] ∘ adversary` behave like the
/// reference (default `env[q]`) under the benign adversary?
#[derive(Clone, Debug)]
pub struct Query {
    pub core: Proc,
    pub context: Context,
    /// Surroundings shared by both sides, such as clients and restrictions.
    pub env: Option<Context>,
    pub reference: Option<Proc>,
    pub adversary: AdversarySpec,
    /// Adversary for the reference side; benign unless given.
    pub reference_adversary: Option<AdversarySpec>,
    pub engine: Engine,
}

impl Query {
    pub fn new(core: Proc, context: Context, adversary: AdversarySpec, engine: Engine) -> Self {
        Query {
            core,
            context,
            env: None,
            reference: None,
            adversary,
            reference_adversary: None,
            engine,
        }
    }

    /// Builds a query from a `check resilience` declaration.
    pub fn from_check(model: &Model, c: &CheckDecl) -> Result<Self> {
        let need = |k: &str| {
            c.name_param(k)
                .ok_or_else(|| Error::BadParams(format!("check {} needs {k}=NAME", c.kind)))
        };
        let engine = match c.name_param("engine") {
            Some(e) => e.parse()?,
            None => Engine::Explicit,
        };
        let mut q = Query::new(
            model.process(need("core")?)?,
            model.context(need("context")?)?.clone(),
            model.adversary(need("adversary")?)?.clone(),
            engine,
        );
        if let Some(e) = c.name_param("env") {
            q.env = Some(model.context(e)?.clone());
        }
        if let Some(r) = c.name_param("reference") {
            q.reference = Some(model.process(r)?);
        }
        if let Some(a) = c.name_param("reference_adversary") {
            q.reference_adversary = Some(model.adversary(a)?.clone());
        }
        Ok(q)
    }

    /// The wrapped system and its reference, as closed terms.
    pub fn terms(&self) -> Result<(Proc, Proc)> {
        let holes = self.context.hole_count();
        let inner = plug(&self.context, &vec![self.core.clone(); holes])?;
        let wrap = |p: Proc| match &self.env {
            Some(e) => plug(e, &[p]),
            None => Ok(p),
        };
        let sys = wrap(inner)?;
        let reference = match &self.reference {
            Some(r) => r.clone(),
            None => wrap(self.core.clone())?,
        };
        Ok((sys, reference))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Resilient,
    NotResilient,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResilienceEvidence {
    /// A context condition failed.
    Constraint { condition: String, counterexample: String },
    /// A weak barb present on one side only.
    Distinguished(Evidence),
    /// A trace of the coupled system reaching `err`.
    ErrReachable { trace: Vec<String> },
    /// A core state no reachable coupled state matches, or the converse.
    Unmatched { state: String, barbs: Vec<String>, trace: Vec<String> },
    /// The packaging order is not an upward simulation here.
    NotUpward { counterexamples: Vec<SimCounterexample> },
    Bound { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub status: Status,
    pub engine: Engine,
    pub constraints: ConstraintReport,
    pub evidence: Option<ResilienceEvidence>,
    pub system_states: usize,
    pub reference_states: usize,
    pub pruned: usize,
    pub stats: Stats,
}

/// `err` is not coverable from the initial state.
pub fn err_unreachable<W: Wsts + ?Sized>(w: &W, err_basis: &Basis) -> Result<Verdict> {
    let v = covering_set(w, &w.initial(), err_basis)?;
    Ok(Verdict {
        holds: !v.holds,
        witness: v.witness,
        stats: v.stats,
    })
}

/// A fully explored coupled system ordered by system-term equality times
/// the adversary order. Predecessors are taken among explored states.
pub struct ExplicitWsts {
    pub graph: StateGraph<CoupledState>,
    elems: Vec<Elem>,
    index: HashMap<Elem, usize>,
    order: QuasiOrder,
    discrete: bool,
}

impl ExplicitWsts {
    pub fn new(cs: &CoupledSystem<'_>, cap: usize) -> Result<Self> {
        let graph = explore(cs, cap, None)?;
        if !graph.complete() {
            return Err(Error::Inconclusive(format!("coupled system exceeds {cap} states")));
        }
        let mut sys_ids: HashMap<&crate::calculus::CanonicalState, u32> = HashMap::new();
        let mut elems = Vec::with_capacity(graph.len());
        for st in &graph.states {
            let n = sys_ids.len() as u32;
            let id = *sys_ids.entry(&st.sys).or_insert(n);
            elems.push(Elem::Tuple(vec![Elem::Atom(id), cs.adversary_elem(st)?]));
        }
        let adv = cs.adversary_order();
        let discrete = match &adv {
            QuasiOrder::Product(parts) => parts.iter().all(|p| matches!(p, QuasiOrder::EqualityOn(_))),
            _ => false,
        };
        let order = QuasiOrder::Product(vec![QuasiOrder::EqualityOn(sys_ids.len().max(1) as u32), adv]);
        let index = elems.iter().cloned().enumerate().map(|(i, e)| (e, i)).collect();
        Ok(ExplicitWsts {
            graph,
            elems,
            index,
            order,
            discrete,
        })
    }

    pub fn elem(&self, i: usize) -> &Elem {
        &self.elems[i]
    }

    pub fn node(&self, e: &Elem) -> Result<usize> {
        self.index
            .get(e)
            .copied()
            .ok_or_else(|| Error::CarrierMismatch(format!("{e} is not an explored state")))
    }

    pub fn basis_of(&self, nodes: impl IntoIterator<Item = usize>) -> Result<Basis> {
        minimize(&self.order, nodes.into_iter().map(|i| self.elems[i].clone()))
    }

    pub fn trace_strings(&self, trace: &[Elem]) -> Result<Vec<String>> {
        trace
            .iter()
            .map(|e| Ok(self.graph.states[self.node(e)?].to_string()))
            .collect()
    }
}

impl Wsts for ExplicitWsts {
    fn order(&self) -> &QuasiOrder {
        &self.order
    }

    fn initial(&self) -> Elem {
        self.elems[0].clone()
    }

    fn succ(&self, s: &Elem) -> Result<Vec<Elem>> {
        let i = self.node(s)?;
        Ok(self.graph.succ[i].iter().map(|&j| self.elems[j].clone()).collect())
    }

    fn pred_basis(&self, s: &Elem) -> Result<Vec<Elem>> {
        Ok((0..self.graph.len())
            .filter(|&i| self.graph.succ[i].iter().any(|&j| self.order.leq_unchecked(s, &self.elems[j])))
            .map(|i| self.elems[i].clone())
            .collect())
    }

    /// Equality orders simulate trivially.
    fn downward_reflexive(&self) -> bool {
        self.discrete
    }
}

fn strip_err(bs: &BTreeSet<Barb>) -> BTreeSet<Barb> {
    bs.iter().filter(|b| **b != Barb::Err).cloned().collect()
}

fn names(bs: &BTreeSet<Barb>) -> Vec<String> {
    bs.iter().map(Barb::to_string).collect()
}

/// Runs the constraint checks and the chosen engine.
pub fn check_resilience(model: &Model, query: &Query, bounds: &Bounds) -> Result<ResilienceReport> {
    let constraints = check_context_constraints(model, &query.context, &query.core, bounds.depth)?;
    let (sys, reference) = query.terms()?;
    let mut cs = couple(model, &sys, &query.adversary)?;
    if let Some(c) = bounds.buffer_cap {
        cs = cs.with_buffer_cap(c);
    }
    let ref_adv = query.reference_adversary.clone().unwrap_or(AdversarySpec::Benign);
    let mut rs = couple(model, &reference, &ref_adv)?;
    if let Some(c) = bounds.buffer_cap {
        rs = rs.with_buffer_cap(c);
    }
    let mut report = match query.engine {
        Engine::Explicit => explicit_engine(&cs, &rs, bounds, constraints.clone())?,
        Engine::Wsts => wsts_engine(&cs, &rs, bounds, constraints.clone())?,
    };
    report.pruned = cs.pruned() + rs.pruned();
    // a failed condition decides the verdict; an unsettled one blocks a pass
    if let Some((name, Outcome::Fail { counterexample })) = constraints.first_failure() {
        report.status = Status::NotResilient;
        report.evidence.get_or_insert(ResilienceEvidence::Constraint {
            condition: name.to_string(),
            counterexample: counterexample.clone(),
        });
    } else if !constraints.all_pass() && report.status == Status::Resilient {
        report.status = Status::Inconclusive;
    }
    Ok(report)
}

fn base_report(engine: Engine, constraints: ConstraintReport) -> ResilienceReport {
    ResilienceReport {
        status: Status::Inconclusive,
        engine,
        constraints,
        evidence: None,
        system_states: 0,
        reference_states: 0,
        pruned: 0,
        stats: Stats::default(),
    }
}

fn explicit_engine(
    cs: &CoupledSystem<'_>,
    rs: &CoupledSystem<'_>,
    bounds: &Bounds,
    constraints: ConstraintReport,
) -> Result<ResilienceReport> {
    let mut report = base_report(Engine::Explicit, constraints);
    let left = explore(cs, bounds.cap, None)?;
    let right = explore(rs, bounds.cap, None)?;
    report.system_states = left.len();
    report.reference_states = right.len();
    if !left.complete() || !right.complete() {
        report.evidence = Some(ResilienceEvidence::Bound {
            reason: format!("state space exceeds cap {}", bounds.cap),
        });
        return Ok(report);
    }
    let run = bisim_graphs(left, right);
    if run.result.equivalent {
        report.status = Status::Resilient;
    } else {
        report.status = Status::NotResilient;
        report.evidence = run.result.evidence.map(ResilienceEvidence::Distinguished);
    }
    Ok(report)
}

fn wsts_engine(
    cs: &CoupledSystem<'_>,
    rs: &CoupledSystem<'_>,
    bounds: &Bounds,
    constraints: ConstraintReport,
) -> Result<ResilienceReport> {
    let mut report = base_report(Engine::Wsts, constraints);
    let core = explore(rs, bounds.cap, None)?;
    if !core.complete() {
        return Err(Error::CoreNotFiniteState(bounds.cap));
    }
    report.reference_states = core.len();
    let w = match ExplicitWsts::new(cs, bounds.cap) {
        Ok(w) => w,
        Err(Error::Inconclusive(reason)) => {
            report.evidence = Some(ResilienceEvidence::Bound { reason });
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.system_states = w.graph.len();
    let mut rng = ChaCha8Rng::seed_from_u64(bounds.seed);
    let sim = check_upward_simulation(&w, bounds.samples, 4, bounds.cap, &mut rng)?;
    if !sim.validated {
        report.evidence = Some(ResilienceEvidence::NotUpward {
            counterexamples: sim.counterexamples,
        });
        return Ok(report);
    }
    let mut stats = Stats::default();
    let mut absorb = |s: &Stats| {
        stats.iterations += s.iterations;
        stats.insertions += s.insertions;
        stats.expanded += s.expanded;
        stats.basis_size = stats.basis_size.max(s.basis_size);
    };

    // err is never coverable
    let err_nodes = (0..w.graph.len()).filter(|&i| w.graph.barbs[i].contains(&Barb::Err));
    let err = err_unreachable(&w, &w.basis_of(err_nodes)?)?;
    absorb(&err.stats);
    if !err.holds {
        report.status = Status::NotResilient;
        let trace = w.trace_strings(&err.witness.unwrap_or_default())?;
        report.evidence = Some(ResilienceEvidence::ErrReachable { trace });
        report.stats = stats;
        return Ok(report);
    }

    let sys_wb: Vec<BTreeSet<Barb>> = weak_barb_sets(&w.graph.succ, &w.graph.barbs).iter().map(strip_err).collect();
    let core_wb: Vec<BTreeSet<Barb>> = weak_barb_sets(&core.succ, &core.barbs).iter().map(strip_err).collect();

    // every core behaviour is coverable by a coupled state with the same weak barbs
    let distinct: BTreeSet<&BTreeSet<Barb>> = core_wb.iter().collect();
    for wb in distinct {
        let targets: Vec<usize> = (0..w.graph.len()).filter(|&i| sys_wb[i] == *wb).collect();
        let t = core_wb.iter().position(|x| x == wb).expect("present");
        let unmatched = || ResilienceEvidence::Unmatched {
            state: core.states[t].to_string(),
            barbs: names(wb),
            trace: core.path_to(t).iter().map(|&i| core.states[i].to_string()).collect(),
        };
        if targets.is_empty() {
            report.status = Status::NotResilient;
            report.evidence = Some(unmatched());
            report.stats = stats;
            return Ok(report);
        }
        let v = covering_set(&w, &w.initial(), &w.basis_of(targets)?)?;
        absorb(&v.stats);
        let end_ok = match v.witness.as_ref().and_then(|tr| tr.last()) {
            Some(e) => sys_wb[w.node(e)?] == *wb,
            None => false,
        };
        if !v.holds || !end_ok {
            report.status = Status::NotResilient;
            report.evidence = Some(unmatched());
            report.stats = stats;
            return Ok(report);
        }
    }

    // every minimal reachable coupled state matches some core state
    let minimal: Vec<Elem> = if w.downward_reflexive() {
        let (b, s) = succ_star_basis(&w, &w.initial())?;
        absorb(&s);
        b.into_elems()
    } else {
        w.basis_of(0..w.graph.len())?.into_elems()
    };
    for m in minimal {
        let i = w.node(&m)?;
        if !core_wb.contains(&sys_wb[i]) {
            report.status = Status::NotResilient;
            report.evidence = Some(ResilienceEvidence::Unmatched {
                state: w.graph.states[i].to_string(),
                barbs: names(&sys_wb[i]),
                trace: w.graph.path_to(i).iter().map(|&j| w.graph.states[j].to_string()).collect(),
            });
            report.stats = stats;
            return Ok(report);
        }
    }
    report.status = Status::Resilient;
    report.stats = stats;
    Ok(report)
}
