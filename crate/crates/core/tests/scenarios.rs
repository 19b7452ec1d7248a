use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::Value;
use weaktrace::network::NetworkBuilder;
use weaktrace::scenarios::{
    custom, fig1_nested, nested_network, run, sec3_probe, sec5_phase_on, sec5_transversal_on, shipped, ScenarioReport,
    Status, CANONICAL_T,
};
use weaktrace::statespace::Amplitude;
use weaktrace::tsvf::{Postselection, Preselection};

const SCHEMA: &str = include_str!("../../../schema/tsvf-report-1.schema.json");

fn validator() -> jsonschema::JSONSchema {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    jsonschema::JSONSchema::compile(&schema).unwrap()
}

fn assert_valid(v: &jsonschema::JSONSchema, json: &str) {
    let doc: Value = serde_json::from_str(json).unwrap();
    let msgs: Vec<String> = match v.validate(&doc) {
        Ok(()) => return,
        Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    panic!("schema violations: {msgs:#?}");
}

fn verdicts(r: &ScenarioReport) -> BTreeMap<(String, String), String> {
    r.stages
        .iter()
        .flat_map(|s| {
            s.arms.iter().map(move |a| {
                let v = a.presence.as_ref().map(|p| p.verdict.to_string()).unwrap_or_default();
                ((s.stage.clone(), a.arm.clone()), v)
            })
        })
        .collect()
}

#[test]
fn every_shipped_report_obeys_the_sum_rule() {
    for s in shipped().unwrap() {
        let r = run(&s).unwrap();
        for st in &r.stages {
            let base: Amplitude = st.arms.iter().filter_map(|a| a.weak_value).sum();
            assert!((base - 1.0).norm() < 1e-10, "{} {}: {base}", r.scenario, st.stage);
            if st.arms.iter().any(|a| a.instrumented_weak_value.is_some()) {
                let inst: Amplitude = st.arms.iter().filter_map(|a| a.instrumented_weak_value).sum();
                assert!((inst - 1.0).norm() < 1e-10, "{} {} instrumented: {inst}", r.scenario, st.stage);
            }
        }
    }
}

#[test]
fn every_shipped_report_passes_its_annotations_and_schema() {
    let v = validator();
    for s in shipped().unwrap() {
        let r = run(&s).unwrap();
        for a in &r.annotations {
            assert!(a.pass, "{}: {} measured {} expected {}", r.scenario, a.name, a.measured, a.expected);
        }
        assert_valid(&v, &r.to_json());
    }
}

#[test]
fn null_postselection_report_is_schema_valid() {
    let n = nested_network(CANONICAL_T).unwrap().block_arm("A").unwrap();
    let pre = Preselection::source(&n, "S").unwrap();
    let post = Postselection::detector(&n, "D").unwrap();
    let r = run(&custom(n, pre, post).unwrap()).unwrap();
    assert_eq!(r.status, Status::NullPostselection);
    assert_valid(&validator(), &r.to_json());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for (a, b) in shipped().unwrap().iter().zip(shipped().unwrap()) {
        let (x, y) = (run(a).unwrap(), run(&b).unwrap());
        assert_eq!(x.to_json(), y.to_json());
        assert_eq!(x.to_text(), y.to_text());
        assert_eq!(x.to_csv(), y.to_csv());
    }
}

#[test]
fn phase_outside_the_inner_loop_keeps_intensities() {
    let base = run(&fig1_nested(CANONICAL_T).unwrap()).unwrap();
    for arm in ["A", "B", "F", "G", "g"] {
        let r = run(&sec5_phase_on(arm, 0.01).unwrap()).unwrap();
        for d in ["D", "D'"] {
            let (x, y) = (r.detector(d).unwrap(), base.detector(d).unwrap());
            assert!((x - y).abs() <= 1e-12, "{arm} {d}: {x} vs {y}");
        }
        assert!(r.all_passed(), "{arm}");
        assert_eq!(r.notes.iter().any(|n| n.contains("blind spot")), arm == "A", "{arm}");
    }
    let shifted = run(&sec5_transversal_on("A", 0.01, 1.0).unwrap()).unwrap();
    assert!(shifted.probe("sA").unwrap().pointer_mean.unwrap().abs() > 1e-3);
}

#[test]
fn sec3_orders() {
    let r = run(&sec3_probe(1e-2, Some(1e-2)).unwrap()).unwrap();
    assert!((r.probe("pC").unwrap().order.unwrap() - 1.0).abs() <= 0.05);
    assert!((r.probe("pF").unwrap().order.unwrap() - 2.0).abs() <= 0.05);
    let lone = run(&fig1_nested(CANONICAL_T).unwrap()).unwrap();
    for arm in ["B", "F"] {
        let a = lone.annotation(&format!("trace on {arm} alone is zero")).unwrap();
        assert!(a.pass && a.measured.is_infinite(), "{arm}");
    }
}

#[test]
fn user_networks_get_a_sum_rule_check() {
    let n = NetworkBuilder::new()
        .source("S", "a")
        .splitter("BS1", 0.6, 0.8, ["a", "v"], ["x", "y"])
        .phase("P", 0.4, "y", "y2")
        .splitter("BS2", 0.8, 0.6, ["x", "y2"], ["d1", "d2"])
        .detector("D1", "d1")
        .detector("D2", "d2")
        .build()
        .unwrap();
    let pre = Preselection::source(&n, "S").unwrap();
    let post = Postselection::detector(&n, "D2").unwrap();
    let r = run(&custom(n, pre, post).unwrap()).unwrap();
    assert!(r.all_passed());
    assert_valid(&validator(), &r.to_json());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fig1_presence_structure_is_stable(t in 0.3..0.9f64) {
        let reference = verdicts(&run(&fig1_nested(CANONICAL_T).unwrap()).unwrap());
        let r = run(&fig1_nested(t).unwrap()).unwrap();
        prop_assert_eq!(verdicts(&r), reference);
        prop_assert!(r.all_passed());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inner_weak_values_grow_with_r_over_t(t1 in 0.3..0.9f64, gap in 0.01..0.2f64) {
        let t2 = (t1 + gap).min(0.95);
        let c = |t: f64| run(&fig1_nested(t).unwrap()).unwrap().weak_value("L3", "C").unwrap();
        let (c1, c2) = (c(t1), c(t2));
        prop_assert!(c1.norm() > c2.norm(), "{} at {}, {} at {}", c1, t1, c2, t2);
        prop_assert!(c1.re < 0.0 && c2.re < 0.0);
    }
}
