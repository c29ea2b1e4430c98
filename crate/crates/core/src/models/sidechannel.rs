//! A fast and a slow deterministic program, told apart by counting steps.

use crate::calculus::{parse_model, plug, Context, Model};
use crate::error::{Error, Result};

fn chain(name: &str, steps: u32, m: &str) -> String {
    let ts: Vec<String> = (1..=steps).map(|i| format!("t{i}")).collect();
    let mut parts = vec!["t1!".to_string()];
    for i in 1..steps {
        parts.push(format!("t{i}?.t{}!", i + 1));
    }
    parts.push(format!("t{steps}?.out!{m}"));
    format!("def {name} = new {} . ({})\n", ts.join(", "), parts.join(" | "))
}

/// Model text: `c` takes `n` silent steps before `out!m`, `c1` takes `n1`.
pub fn sidechannel_text(n: u32, n1: u32, m: &str) -> Result<String> {
    if n == 0 || n >= n1 {
        return Err(Error::BadParams(format!("need 0 < n < n1, got n={n}, n1={n1}")));
    }
    let mut t = format!("domain {{{m}}}\nchannel out\n");
    t.push_str(&chain("c", n, m));
    t.push_str(&chain("c1", n1, m));
    t.push_str("def WhiteNoise = new z . (z! | !z?.z!)\n");
    t.push_str("context Fair = WhiteNoise | []_1\n");
    t.push_str("context Fair2 = WhiteNoise | (WhiteNoise | []_1)\n");
    t.push_str("context Id = []_1\n");
    t.push_str(&format!("adversary A = step_counter(n={n})\n"));
    t.push_str("adversary One = benign\n");
    t.push_str("check err_unreachable system=c adversary=A expect=fail\n");
    t.push_str("check err_unreachable system=c1 adversary=A\n");
    t.push_str("check bisim left=c right=c1 left_adversary=A right_adversary=A expect=fail\n");
    t.push_str("check resilience core=c context=Fair adversary=A engine=explicit\n");
    t.push_str("check resilience core=c context=Fair adversary=A engine=wsts\n");
    t.push_str("check resilience core=c context=Fair2 adversary=A engine=explicit\n");
    Ok(t)
}

pub fn sidechannel_model(n: u32, n1: u32, m: &str) -> Result<Model> {
    parse_model(&sidechannel_text(n, n1, m)?)
}

/// Plugs `inner` into the single hole of `outer`.
pub fn compose(outer: &Context, inner: &Context) -> Result<Context> {
    Ok(Context::new(plug(outer, std::slice::from_ref(&inner.body))?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::couple;
    use crate::resilience::{check_resilience, Bounds, Engine, Query, Status};
    use crate::ts::explore;
    use crate::calculus::Barb;

    fn err_reachable(m: &Model, name: &str) -> bool {
        let sys = couple(m, &m.process(name).unwrap(), m.adversary("A").unwrap()).unwrap();
        let g = explore(&sys, 100_000, None).unwrap();
        assert!(g.complete());
        g.barbs.iter().any(|b| b.contains(&Barb::Err))
    }

    #[test]
    fn rejects_bad_step_counts() {
        assert!(matches!(sidechannel_model(1, 1, "m"), Err(Error::BadParams(_))));
        assert!(matches!(sidechannel_model(0, 2, "m"), Err(Error::BadParams(_))));
    }

    #[test]
    fn counter_tells_fast_from_slow() {
        let m = sidechannel_model(3, 5, "m").unwrap();
        assert!(err_reachable(&m, "c"));
        assert!(!err_reachable(&m, "c1"));
    }

    #[test]
    fn noise_context_hides_the_step_count() {
        let m = sidechannel_model(3, 5, "m").unwrap();
        for (ctx, engine) in [("Fair", Engine::Explicit), ("Fair", Engine::Wsts), ("Fair2", Engine::Explicit)] {
            let q = Query::new(
                m.process("c").unwrap(),
                m.context(ctx).unwrap().clone(),
                m.adversary("A").unwrap().clone(),
                engine,
            );
            let r = check_resilience(&m, &q, &Bounds::default()).unwrap();
            assert_eq!(r.status, Status::Resilient, "{ctx} {engine:?}: {:?}", r.evidence);
        }
    }

    #[test]
    fn compose_nests_contexts() {
        let m = sidechannel_model(3, 5, "m").unwrap();
        let twice = compose(m.context("Fair").unwrap(), m.context("Fair").unwrap()).unwrap();
        assert_eq!(twice.body.normalize(), m.context("Fair2").unwrap().body.normalize());
    }
}
