//! Runs check declarations, whether read from a model file or built from
//! command-line flags.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde_json::{json, Value};

use resilchk::adversary::{couple, Discipline};
use resilchk::calculus::{canonicalize, weak_barbs, AdversarySpec, Barb, CheckDecl, Model, Param, Up};
use resilchk::error::{Error, Result};
use resilchk::models::{check_in_order, trace_delivery_order, Client, Transmission, TxState};
use resilchk::order::minimize;
use resilchk::resilience::bisim::bisim_graphs;
use resilchk::resilience::{
    check_resilience, err_unreachable, explicit_weak_barbed_bisim, Bounds, ExplicitWsts, Query, Status,
};
use resilchk::ts::explore;
use resilchk::wsts::{covering_set, replay, Stats, Wsts};

use crate::report::{Report, Verdict};

#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    pub cap: usize,
    pub timings: bool,
}

/// Result of a check before the declared expectation is applied.
struct Finding {
    holds: bool,
    /// The engine could not decide; `evidence` says why.
    undecided: bool,
    engine: Option<&'static str>,
    evidence: Option<Value>,
    stats: BTreeMap<String, u64>,
}

impl Finding {
    fn new(holds: bool) -> Self {
        Finding {
            holds,
            undecided: false,
            engine: None,
            evidence: None,
            stats: BTreeMap::new(),
        }
    }

    fn stat(mut self, k: &str, v: usize) -> Self {
        self.stats.insert(k.to_string(), v as u64);
        self
    }

    fn wsts_stats(self, s: &Stats) -> Self {
        self.stat("iterations", s.iterations)
            .stat("insertions", s.insertions)
            .stat("basis_size", s.basis_size)
    }
}

fn is_inconclusive(e: &Error) -> bool {
    matches!(
        e,
        Error::Inconclusive(_) | Error::BudgetExceeded(_) | Error::IterationCap(_) | Error::CoreNotFiniteState(_)
    )
}

/// A readable name for a declaration, like `bisim left=Sys2 right=Sys3`.
pub fn describe(c: &CheckDecl) -> String {
    let mut s = c.kind.clone();
    for (k, v) in &c.params {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}

/// Runs one check. Budget exhaustion yields an inconclusive report; any
/// other error is returned.
pub fn run(m: &Model, c: &CheckDecl, cfg: &Settings) -> Result<Report> {
    let expect_fail = matches!(c.params.get("expect"), Some(Param::Name(e)) if e == "fail");
    let t0 = Instant::now();
    let found = match c.kind.as_str() {
        "barbs" => barbs(m, c),
        "bisim" => bisim(m, c, cfg),
        "err_unreachable" => err_check(m, c, cfg),
        "resilience" => resilience(m, c, cfg),
        "cover" => cover(m, c, cfg),
        "transmission" => transmission(c, cfg),
        "in_order" => in_order(c),
        other => Err(Error::BadParams(format!("unknown check kind `{other}`"))),
    };
    let mut report = match found {
        Ok(f) => Report {
            check: describe(c),
            verdict: match (f.undecided, f.holds != expect_fail) {
                (true, _) => Verdict::Inconclusive,
                (false, true) => Verdict::Pass,
                (false, false) => Verdict::Fail,
            },
            holds: (!f.undecided).then_some(f.holds),
            expected: !expect_fail,
            engine: f.engine.map(str::to_string),
            evidence: f.evidence,
            stats: f.stats,
        },
        Err(e) if is_inconclusive(&e) => Report {
            check: describe(c),
            verdict: Verdict::Inconclusive,
            holds: None,
            expected: !expect_fail,
            engine: None,
            evidence: Some(json!({ "reason": e.to_string() })),
            stats: BTreeMap::new(),
        },
        Err(e) => return Err(e),
    };
    if cfg.timings {
        report.stats.insert("millis".into(), t0.elapsed().as_millis() as u64);
    }
    Ok(report)
}

fn name<'a>(c: &'a CheckDecl, key: &str) -> Result<&'a str> {
    c.name_param(key)
        .ok_or_else(|| Error::BadParams(format!("check {} needs {key}=NAME", c.kind)))
}

fn int(c: &CheckDecl, key: &str, default: Option<i64>) -> Result<i64> {
    match (c.params.get(key), default) {
        (Some(Param::Int(n)), _) => Ok(*n),
        (None, Some(d)) => Ok(d),
        _ => Err(Error::BadParams(format!("check {} needs {key}=N", c.kind))),
    }
}

fn adversary(m: &Model, c: &CheckDecl, key: &str) -> Result<AdversarySpec> {
    match c.name_param(key) {
        Some(a) => Ok(m.adversary(a)?.clone()),
        None => Ok(AdversarySpec::Benign),
    }
}

fn barb_list(bs: &BTreeSet<Barb>) -> Value {
    json!(bs.iter().map(ToString::to_string).collect::<Vec<_>>())
}

fn barbs(m: &Model, c: &CheckDecl) -> Result<Finding> {
    let p = m.process(name(c, "system")?)?;
    let depth = int(c, "depth", Some(64))?.max(0) as usize;
    let s = canonicalize(m, &p)?;
    let wb = weak_barbs(m, &s, &Up::All, depth, true)?;
    let mut f = Finding::new(true).stat("barbs", wb.len());
    f.evidence = Some(json!({ "weak_barbs": barb_list(&wb) }));
    Ok(f)
}

fn bisim(m: &Model, c: &CheckDecl, cfg: &Settings) -> Result<Finding> {
    if let Some(e) = c.name_param("engine") {
        if e != "explicit" {
            return Err(Error::BadParams(format!("bisim supports engine=explicit, not `{e}`")));
        }
    }
    let cap = int(c, "cap", Some(cfg.cap as i64))?.max(1) as usize;
    let (l, r) = (m.process(name(c, "left")?)?, m.process(name(c, "right")?)?);
    let a = couple(m, &l, &adversary(m, c, "left_adversary")?)?;
    let b = couple(m, &r, &adversary(m, c, "right_adversary")?)?;
    let run = explicit_weak_barbed_bisim(&a, &b, cap)?;
    let res = &run.result;
    let mut f = Finding::new(res.equivalent)
        .stat("left_states", res.left_states)
        .stat("right_states", res.right_states)
        .stat("blocks", res.blocks)
        .stat("rounds", res.rounds);
    f.engine = Some("explicit");
    if let Some(ev) = &res.evidence {
        let replayed = run.replay(&a, &b, cap)?;
        f.evidence = Some(json!({ "distinguished": ev, "replayed": replayed }));
    }
    Ok(f)
}

fn err_check(m: &Model, c: &CheckDecl, cfg: &Settings) -> Result<Finding> {
    let p = m.process(name(c, "system")?)?;
    let cs = couple(m, &p, &adversary(m, c, "adversary")?)?;
    let w = ExplicitWsts::new(&cs, cfg.cap)?;
    let errs = (0..w.graph.len()).filter(|&i| w.graph.barbs[i].contains(&Barb::Err));
    let basis = w.basis_of(errs)?;
    let v = err_unreachable(&w, &basis)?;
    let mut f = Finding::new(v.holds).stat("states", w.graph.len()).wsts_stats(&v.stats);
    f.engine = Some("wsts");
    if let Some(tr) = &v.witness {
        f.evidence = Some(json!({ "trace": w.trace_strings(tr)?, "replayed": replay(&w, tr)? }));
    }
    Ok(f)
}

fn resilience(m: &Model, c: &CheckDecl, cfg: &Settings) -> Result<Finding> {
    let q = Query::from_check(m, c)?;
    let bounds = Bounds {
        cap: cfg.cap,
        seed: cfg.seed,
        ..Bounds::default()
    };
    let r = check_resilience(m, &q, &bounds)?;
    let mut f = Finding::new(r.status == Status::Resilient)
        .stat("system_states", r.system_states)
        .stat("reference_states", r.reference_states)
        .stat("pruned", r.pruned)
        .wsts_stats(&r.stats);
    f.engine = Some(match q.engine {
        resilchk::resilience::Engine::Explicit => "explicit",
        resilchk::resilience::Engine::Wsts => "wsts",
    });
    f.undecided = r.status == Status::Inconclusive;
    f.evidence = Some(json!({ "status": r.status, "constraints": r.constraints, "detail": r.evidence }));
    Ok(f)
}

fn client(c: &CheckDecl, key: &str) -> Result<Client> {
    match name(c, key)? {
        "simple" => Ok(Client::Simple),
        "persistent" => Ok(Client::Persistent),
        "counting" => Ok(Client::Counting),
        other => Err(Error::BadParams(format!("unknown client `{other}`"))),
    }
}

fn channel(c: &CheckDecl, key: &str) -> Result<Discipline> {
    match name(c, key)? {
        "fifo" => Ok(Discipline::LossyFifo),
        "bag" => Ok(Discipline::LossyBag),
        other => Err(Error::BadParams(format!("unknown channel kind `{other}`"))),
    }
}

fn machine(c: &CheckDecl, client_key: &str, channel_key: &str) -> Result<Transmission> {
    let small = |k: &str, d: Option<i64>| -> Result<u8> {
        u8::try_from(int(c, k, d)?).map_err(|_| Error::BadParams(format!("{k} out of range")))
    };
    Transmission::new(client(c, client_key)?, channel(c, channel_key)?, small("k", Some(2))?, small("p_max", Some(3))?)
}

fn transmission(c: &CheckDecl, cfg: &Settings) -> Result<Finding> {
    let left = machine(c, "left_client", "left_channel")?;
    let right = machine(c, "right_client", "right_channel")?;
    let (gl, gr) = (explore(&left, cfg.cap, None)?, explore(&right, cfg.cap, None)?);
    if !gl.complete() || !gr.complete() {
        return Err(Error::BudgetExceeded(cfg.cap));
    }
    let run = bisim_graphs(gl, gr);
    let res = &run.result;
    let mut f = Finding::new(res.equivalent)
        .stat("left_states", res.left_states)
        .stat("right_states", res.right_states)
        .stat("left_pruned", left.pruned())
        .stat("left_floored", left.floor_events())
        .stat("right_pruned", right.pruned());
    f.engine = Some("explicit");
    if let Some(ev) = &res.evidence {
        let states: Vec<TxState> = run.left_path().iter().map(|&i| run.left.states[i].clone()).collect();
        let order = match trace_delivery_order(&states) {
            Ok(d) => json!({ "in_order": true, "deliveries": d }),
            Err(d) => json!({ "in_order": false, "deliveries": d }),
        };
        let replayed = run.replay(&left, &right, cfg.cap)?;
        f.evidence = Some(json!({ "distinguished": ev, "replayed": replayed, "left_delivery_order": order }));
    }
    Ok(f)
}

fn in_order(c: &CheckDecl) -> Result<Finding> {
    let t = machine(c, "client", "channel")?;
    let depth = int(c, "depth", Some(9))?.max(0) as usize;
    Ok(match check_in_order(&t, depth) {
        Ok(runs) => Finding::new(true).stat("runs", runs),
        Err(trace) => {
            let mut f = Finding::new(false);
            f.evidence = Some(json!({ "trace": trace }));
            f
        }
    })
}

/// Coverability of a target: states showing a barb in a coupled system,
/// or `err`/`waiting` in the transmission machine.
fn cover(m: &Model, c: &CheckDecl, cfg: &Settings) -> Result<Finding> {
    let target = name(c, "target")?;
    let instance = name(c, "instance")?;
    if instance == "transmission" {
        let t = machine(c, "client", "channel")?;
        let locals = match target {
            "err" => t.locals_where(|l| l.err),
            "waiting" => t.waiting_locals(),
            other => return Err(Error::BadParams(format!("transmission targets are err and waiting, not `{other}`"))),
        };
        let ord = Wsts::order(&t).clone();
        let basis = minimize(&ord, locals.iter().map(|l| t.bottom_of(l)))?;
        let v = covering_set(&t, &Wsts::initial(&t), &basis)?;
        let mut f = Finding::new(v.holds).wsts_stats(&v.stats);
        f.engine = Some("wsts");
        if let Some(tr) = &v.witness {
            let states: Result<Vec<String>> = tr.iter().map(|e| Ok(t.decode(e)?.to_string())).collect();
            f.evidence = Some(json!({ "trace": states?, "replayed": replay(&t, tr)? }));
        }
        return Ok(f);
    }
    let p = m.process(instance)?;
    let cs = couple(m, &p, &adversary(m, c, "adversary")?)?;
    let w = ExplicitWsts::new(&cs, cfg.cap)?;
    let hits = (0..w.graph.len()).filter(|&i| {
        w.graph.barbs[i]
            .iter()
            .any(|b| if target == "err" { *b == Barb::Err } else { b.to_string() == target })
    });
    let basis = w.basis_of(hits)?;
    let v = covering_set(&w, &w.initial(), &basis)?;
    let mut f = Finding::new(v.holds).stat("states", w.graph.len()).wsts_stats(&v.stats);
    f.engine = Some("wsts");
    if let Some(tr) = &v.witness {
        f.evidence = Some(json!({ "trace": w.trace_strings(tr)?, "replayed": replay(&w, tr)? }));
    }
    Ok(f)
}
