//! Oracle agreement suites: the coverability deciders against explicit
//! search on random counter systems, and the transmission packaging
//! against its explored graph.

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use resilchk::adversary::Discipline;
use resilchk::counter::{state, CounterSystem};
use resilchk::error::Result;
use resilchk::models::{Client, Transmission};
use resilchk::order::minimize;
use resilchk::ts::explore;
use resilchk::wsts::{check_upward_simulation, covering, covering_set, replay, subcovering, Wsts};

use crate::report::{Report, Verdict};

fn report(check: &str, ok: bool, stats: &[(&str, usize)], evidence: Option<serde_json::Value>) -> Report {
    Report {
        check: check.to_string(),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        holds: Some(ok),
        expected: true,
        engine: Some("wsts".into()),
        evidence,
        stats: stats.iter().map(|(k, v)| (k.to_string(), *v as u64)).collect::<BTreeMap<_, _>>(),
    }
}

pub fn run(seed: u64, systems: usize, samples: usize) -> Result<Vec<Report>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let (mut agree, mut total, mut bad_replays, mut undecided) = (0, 0, 0, 0);
    let (mut sub_agree, mut sub_total) = (0, 0);
    let mut disagreements = Vec::new();
    for i in 0..systems {
        let downward = i % 2 == 1;
        let w = CounterSystem::random(&mut rng, 5, 3, 8, downward);
        let s = state(w.init.0, &w.init.1);
        let t = w.random_state(&mut rng);
        let v = covering(&w, &s, &t)?;
        match w.oracle_covering(&s, &t, 1_000_000)? {
            Some(o) => {
                total += 1;
                if v.holds == o {
                    agree += 1;
                } else {
                    disagreements.push(format!("system {i}: covering {} vs oracle {o}", v.holds));
                }
            }
            None => undecided += 1,
        }
        if let Some(tr) = &v.witness {
            bad_replays += !replay(&w, tr)? as usize;
        }
        if downward {
            let v = subcovering(&w, &s, &t)?;
            if let Some(o) = w.oracle_subcovering(&s, &t, 1_000_000)? {
                sub_total += 1;
                if v.holds == o {
                    sub_agree += 1;
                } else {
                    disagreements.push(format!("system {i}: subcovering {} vs oracle {o}", v.holds));
                }
            }
        }
    }
    let evidence = (!disagreements.is_empty()).then(|| json!({ "disagreements": disagreements }));
    out.push(report(
        "selftest covering",
        agree == total && sub_agree == sub_total && bad_replays == 0,
        &[
            ("systems", systems),
            ("covering_agree", agree),
            ("covering_total", total),
            ("subcovering_agree", sub_agree),
            ("subcovering_total", sub_total),
            ("undecided", undecided),
            ("bad_replays", bad_replays),
        ],
        evidence,
    ));

    let mut mismatches = Vec::new();
    let mut queries = 0;
    for client in [Client::Simple, Client::Persistent, Client::Counting] {
        for d in [Discipline::LossyFifo, Discipline::LossyBag] {
            let t = Transmission::new(client, d, 2, 2)?;
            let g = explore(&t, 1_000_000, None)?;
            let ord = Wsts::order(&t).clone();
            let basis = minimize(&ord, t.locals_where(|l| l.err).iter().map(|l| t.bottom_of(l)))?;
            let v = covering_set(&t, &Wsts::initial(&t), &basis)?;
            queries += 1;
            if v.holds != g.states.iter().any(|s| s.local.err) {
                mismatches.push(format!("{client:?}/{d:?}"));
            }
        }
    }
    let t = Transmission::new(Client::Counting, Discipline::LossyBag, 2, 2)?;
    let sim = check_upward_simulation(&t, samples, 8, 1_000_000, &mut rng)?;
    let ok = mismatches.is_empty() && sim.validated;
    let evidence = (!ok).then(|| json!({ "mismatches": mismatches, "upward_counterexamples": sim.counterexamples.len() }));
    out.push(report(
        "selftest transmission",
        ok,
        &[
            ("queries", queries),
            ("mismatches", mismatches.len()),
            ("samples", sim.samples),
            ("counterexamples", sim.counterexamples.len()),
        ],
        evidence,
    ));
    Ok(out)
}
