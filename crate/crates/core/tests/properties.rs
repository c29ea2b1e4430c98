use std::collections::BTreeSet;

use proptest::prelude::*;

use resilchk::adversary::{couple, AdvState};
use resilchk::calculus::{
    canonicalize, parse_model, parse_process, strong_barbs, weak_barbs, AdversarySpec, Model, Proc, Up,
};
use resilchk::models::{replicated_server_model, sidechannel_model};
use resilchk::order::{member_up, minimize, Elem, QuasiOrder};
use resilchk::resilience::{check_resilience, explicit_weak_barbed_bisim, Bounds, Engine, Query};
use resilchk::ts::explore;

const HEADER: &str = "domain {v, w}\nchannel a, b, c\nlocation l1, l2\n";

fn model() -> Model {
    parse_model(HEADER).unwrap()
}

/// Finite processes as source text: no replication, no recursion.
fn body() -> impl Strategy<Value = String> {
    let ch = prop::sample::select(vec!["a", "b", "c"]);
    let val = prop::sample::select(vec!["v", "w"]);
    let leaf = prop_oneof![
        Just("0".to_string()),
        (ch.clone(), val.clone()).prop_map(|(c, v)| format!("{c}!{v}")),
        ch.clone().prop_map(|c| format!("{c}?")),
    ];
    leaf.prop_recursive(4, 24, 3, move |inner| {
        prop_oneof![
            (ch.clone(), val.clone(), inner.clone()).prop_map(|(c, v, p)| format!("{c}!{v}.({p})")),
            (ch.clone(), inner.clone()).prop_map(|(c, p)| format!("{c}?(x).({p})")),
            (inner.clone(), inner.clone()).prop_map(|(p, q)| format!("({p} | {q})")),
            (ch.clone(), val.clone(), inner.clone(), ch.clone(), inner.clone())
                .prop_map(|(c, v, p, d, q)| format!("({c}!{v}.({p}) + {d}?.({q}))")),
            (ch.clone(), inner).prop_map(|(c, p)| format!("new {c} . ({p})")),
        ]
    })
}

/// Located components in parallel; locations only appear at top level.
fn process() -> impl Strategy<Value = String> {
    let part = (prop::sample::select(vec!["", "l1", "l2"]), body())
        .prop_map(|(l, p)| if l.is_empty() { p } else { format!("loc {l} [ {p} ]") });
    prop::collection::vec(part, 1..4).prop_map(|ps| ps.join(" | "))
}

fn proc_of(m: &Model, text: &str) -> Proc {
    parse_process(m, text).unwrap()
}

fn order() -> impl Strategy<Value = QuasiOrder> {
    let leaf = prop_oneof![
        (1u32..4).prop_map(QuasiOrder::EqualityOn),
        (1usize..4).prop_map(QuasiOrder::DicksonVec),
        (1u32..4).prop_map(QuasiOrder::BagEmbed),
        (1u32..4).prop_map(QuasiOrder::Subword),
    ];
    leaf.prop_recursive(2, 8, 3, |inner| prop::collection::vec(inner, 1..4).prop_map(QuasiOrder::Product))
}

fn elem(o: &QuasiOrder) -> BoxedStrategy<Elem> {
    match o {
        QuasiOrder::EqualityOn(n) => (0..*n).prop_map(Elem::Atom).boxed(),
        QuasiOrder::DicksonVec(d) => prop::collection::vec(0u64..4, *d).prop_map(Elem::Vec).boxed(),
        QuasiOrder::BagEmbed(a) => prop::collection::vec(0..*a, 0..5).prop_map(Elem::bag).boxed(),
        QuasiOrder::Subword(a) => prop::collection::vec(0..*a, 0..5).prop_map(Elem::Word).boxed(),
        QuasiOrder::Product(fs) => {
            let parts: Vec<BoxedStrategy<Elem>> = fs.iter().map(elem).collect();
            parts.prop_map(Elem::Tuple).boxed()
        }
    }
}

fn order_with_elems(n: usize) -> impl Strategy<Value = (QuasiOrder, Vec<Elem>)> {
    order().prop_flat_map(move |o| {
        let e = elem(&o);
        (Just(o), prop::collection::vec(e, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn parallel_is_commutative_associative_with_unit(p in process(), q in process(), r in process()) {
        let m = model();
        let c = |t: String| canonicalize(&m, &proc_of(&m, &t)).unwrap();
        prop_assert_eq!(c(format!("({p}) | ({q})")), c(format!("({q}) | ({p})")));
        prop_assert_eq!(c(format!("(({p}) | ({q})) | ({r})")), c(format!("({p}) | (({q}) | ({r}))")));
        prop_assert_eq!(c(format!("({p}) | 0")), c(p.clone()));
    }

    #[test]
    fn printed_processes_parse_back(p in process()) {
        let m = model();
        let once = proc_of(&m, &p);
        let again = proc_of(&m, &once.to_string());
        prop_assert_eq!(canonicalize(&m, &once).unwrap(), canonicalize(&m, &again).unwrap());
    }

    #[test]
    fn more_live_locations_show_more_barbs(p in process()) {
        let m = model();
        let s = canonicalize(&m, &proc_of(&m, &p)).unwrap();
        let none = strong_barbs(&m, &s, &Up::none()).unwrap();
        let one = strong_barbs(&m, &s, &Up::Only(BTreeSet::from(["l1".to_string()]))).unwrap();
        let all = strong_barbs(&m, &s, &Up::All).unwrap();
        prop_assert!(none.is_subset(&one));
        prop_assert!(one.is_subset(&all));
    }

    #[test]
    fn weak_barbs_at_depth_zero_are_strong(p in process()) {
        let m = model();
        let s = canonicalize(&m, &proc_of(&m, &p)).unwrap();
        prop_assert_eq!(weak_barbs(&m, &s, &Up::All, 0, false).unwrap(), strong_barbs(&m, &s, &Up::All).unwrap());
        let deep = weak_barbs(&m, &s, &Up::All, 64, false).unwrap();
        prop_assert!(strong_barbs(&m, &s, &Up::All).unwrap().is_subset(&deep));
    }

    #[test]
    fn bisimilarity_is_reflexive_and_symmetric(p in process(), q in process()) {
        let m = model();
        let (pp, qq) = (proc_of(&m, &p), proc_of(&m, &q));
        let a = couple(&m, &pp, &AdversarySpec::Benign).unwrap();
        let b = couple(&m, &qq, &AdversarySpec::Benign).unwrap();
        prop_assert!(explicit_weak_barbed_bisim(&a, &a, 100_000).unwrap().result.equivalent);
        let ab = explicit_weak_barbed_bisim(&a, &b, 100_000).unwrap();
        let ba = explicit_weak_barbed_bisim(&b, &a, 100_000).unwrap();
        prop_assert_eq!(ab.result.equivalent, ba.result.equivalent);
        if !ab.result.equivalent {
            prop_assert!(ab.replay(&a, &b, 100_000).unwrap());
        }
    }

    #[test]
    fn order_laws((o, xs) in order_with_elems(4)) {
        let le = |x: &Elem, y: &Elem| o.leq(x, y).unwrap();
        prop_assert!(le(&xs[0], &xs[0]));
        if le(&xs[0], &xs[1]) && le(&xs[1], &xs[2]) {
            prop_assert!(le(&xs[0], &xs[2]));
        }
        let basis = minimize(&o, xs[..3].to_vec()).unwrap();
        prop_assert_eq!(minimize(&o, basis.elems().to_vec()).unwrap(), basis.clone());
        prop_assert_eq!(member_up(&o, &basis, &xs[3]), xs[..3].iter().any(|x| le(x, &xs[3])));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn engines_agree_on_sidechannel_family(n in 1u32..4, gap in 1u32..3) {
        let m = sidechannel_model(n, n + gap, "m").unwrap();
        for ctx in ["Fair", "Fair2", "Id"] {
            let run = |engine| {
                let q = Query::new(
                    m.process("c").unwrap(),
                    m.context(ctx).unwrap().clone(),
                    m.adversary("A").unwrap().clone(),
                    engine,
                );
                check_resilience(&m, &q, &Bounds::default()).unwrap().status
            };
            prop_assert_eq!(run(Engine::Explicit), run(Engine::Wsts), "context {}", ctx);
        }
    }

    #[test]
    fn crashed_locations_stay_down(replicas in 1usize..4, extra in 0usize..2) {
        let k = replicas.saturating_sub(extra);
        let m = replicated_server_model(2, replicas, k).unwrap();
        let cs = couple(&m, m.system("Sys3").unwrap(), m.adversary("FS").unwrap()).unwrap();
        let g = explore(&cs, 200_000, Some(10)).unwrap();
        let down = |i: usize| match &g.states[i].adv {
            AdvState::Down(d) => d.clone(),
            other => panic!("fail-stop adversary in state {other:?}"),
        };
        for (i, next) in g.succ.iter().enumerate() {
            let here = down(i);
            prop_assert!(here.len() <= k);
            for &j in next {
                prop_assert!(here.is_subset(&down(j)));
                let (up_here, up_there) = (cs.up(&g.states[i].adv), cs.up(&g.states[j].adv));
                if let (Up::Only(a), Up::Only(b)) = (up_here, up_there) {
                    prop_assert!(b.is_subset(&a));
                }
            }
        }
    }
}
