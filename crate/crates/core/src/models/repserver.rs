//! A file provider, its clients, and replication against location failure.

use crate::calculus::{parse_model, Model};
use crate::error::{Error, Result};

pub fn replicated_server_text(clients: usize, replicas: usize, max_failures: usize) -> Result<String> {
    if clients == 0 || replicas == 0 || max_failures > replicas {
        return Err(Error::BadParams(format!(
            "need clients >= 1, replicas >= 1, max_failures <= replicas; got {clients}, {replicas}, {max_failures}"
        )));
    }
    let ds: Vec<String> = (1..=clients).map(|i| format!("d{i}")).collect();
    let ls: Vec<String> = (1..=replicas).map(|i| format!("l{i}")).collect();
    let bcs: Vec<String> = (1..=clients).map(|i| format!("BC{i}")).collect();
    let mut t = String::from("domain {v}\n");
    t.push_str(&format!("channel a, {}\n", ds.join(", ")));
    t.push_str(&format!("location {}\n", ls.join(", ")));
    t.push_str("def OTP = a!v\n");
    for i in 1..=clients {
        t.push_str(&format!("def BC{i} = a?(x).d{i}!x\n"));
    }
    t.push_str("def Server = loc l1 [ !OTP ]\n");
    let reps: Vec<String> = ls.iter().map(|l| format!("loc {l} [ !OTP ]")).collect();
    t.push_str(&format!("def RepServer = {}\n", reps.join(" | ")));
    t.push_str("system Sys1 = new a . (BC1 | OTP)\n");
    t.push_str(&format!("system Sys2 = new a . ({} | Server)\n", bcs.join(" | ")));
    t.push_str(&format!("system Sys3 = new a . ({} | RepServer)\n", bcs.join(" | ")));
    let holes: Vec<String> = ls.iter().enumerate().map(|(i, l)| format!("loc {l} [ ![]_{} ]", i + 1)).collect();
    t.push_str(&format!("context Crep = {}\n", holes.join(" | ")));
    t.push_str(&format!("context Clients = new a . ({} | []_1)\n", bcs.join(" | ")));
    t.push_str("context Id = []_1\n");
    t.push_str(&format!("adversary FS = fail_stop(locs={{{}}}, max={max_failures})\n", ls.join(", ")));
    t.push_str("adversary One = benign\n");
    let expect = if replicas > max_failures { "" } else { " expect=fail" };
    t.push_str("check barbs system=Sys1\n");
    if max_failures > 0 {
        t.push_str("check bisim left=Sys2 left_adversary=FS right=Sys2 right_adversary=One expect=fail\n");
    }
    t.push_str(&format!("check bisim left=Sys3 left_adversary=FS right=Sys2 right_adversary=One{expect}\n"));
    t.push_str(&format!(
        "check resilience core=OTP context=Crep env=Clients reference=Sys2 adversary=FS engine=explicit{expect}\n"
    ));
    Ok(t)
}

pub fn replicated_server_model(clients: usize, replicas: usize, max_failures: usize) -> Result<Model> {
    parse_model(&replicated_server_text(clients, replicas, max_failures)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::couple;
    use crate::adversary::AdvState;
    use crate::calculus::{canonicalize, weak_barbs, Barb, Up, Value};
    use crate::resilience::{check_resilience, explicit_weak_barbed_bisim, Bounds, Query, Status};
    use crate::ts::explore;
    use std::collections::BTreeSet;

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(replicated_server_model(0, 1, 0), Err(Error::BadParams(_))));
        assert!(matches!(replicated_server_model(1, 1, 2), Err(Error::BadParams(_))));
    }

    #[test]
    fn single_client_sees_one_barb() {
        let m = replicated_server_model(1, 1, 0).unwrap();
        let s = canonicalize(&m, m.system("Sys1").unwrap()).unwrap();
        let wb = weak_barbs(&m, &s, &Up::All, 64, true).unwrap();
        assert_eq!(wb, BTreeSet::from([Barb::obs("d1", Value::sym("v"))]));
    }

    #[test]
    fn replication_masks_failures_up_to_the_replica_count() {
        for (k, expect) in [(1, Status::Resilient), (2, Status::NotResilient)] {
            let m = replicated_server_model(2, 2, k).unwrap();
            let q = Query::from_check(&m, m.checks.iter().find(|c| c.kind == "resilience").unwrap()).unwrap();
            let r = check_resilience(&m, &q, &Bounds::default()).unwrap();
            assert_eq!(r.status, expect, "max_failures={k}");
        }
    }

    #[test]
    fn failing_the_single_server_is_observable() {
        let m = replicated_server_model(2, 2, 1).unwrap();
        let sys2 = m.system("Sys2").unwrap();
        let a = couple(&m, sys2, m.adversary("FS").unwrap()).unwrap();
        let b = couple(&m, sys2, m.adversary("One").unwrap()).unwrap();
        let run = explicit_weak_barbed_bisim(&a, &b, 100_000).unwrap();
        assert!(!run.result.equivalent);
        assert!(run.replay(&a, &b, 100_000).unwrap());
        let g = explore(&a, 100_000, Some(8)).unwrap();
        assert!(g.states.iter().enumerate().any(|(i, s)| matches!(&s.adv, AdvState::Down(d) if d.contains("l1")) && g.barbs[i].is_empty()));
    }
}
