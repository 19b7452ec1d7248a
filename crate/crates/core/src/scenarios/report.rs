//! Scenario reports and their JSON, CSV and text renderings.
//!
//! Every number is printed with 17 significant digits (`{:.16e}`); the JSON
//! and text forms share one formatter, so they carry identical numeric
//! strings. Non-finite values are written as `inf`, `-inf` or `nan` (quoted
//! in JSON).

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use super::ParamValue;
use crate::statespace::Amplitude;
use crate::tsvf::PresenceEntry;

pub const SCHEMA_ID: &str = "tsvf-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NullPostselection,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::NullPostselection => "null post-selection",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmRow {
    pub arm: String,
    pub forward: Amplitude,
    pub backward: Amplitude,
    pub weak_value: Option<Amplitude>,
    /// Weak value of the probed network, pointers conditioned on the readout.
    pub instrumented_weak_value: Option<Amplitude>,
    pub presence: Option<PresenceEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRow {
    pub stage: String,
    pub arms: Vec<ArmRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub id: String,
    pub arm: String,
    pub kind: String,
    pub strength: f64,
    pub trace_magnitude: Option<f64>,
    pub order: Option<f64>,
    pub residual: Option<f64>,
    pub pointer_mean: Option<f64>,
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostselectionReport {
    pub label: String,
    pub probability: f64,
    /// `⟨Φ|Ψ⟩` of the probe-free network.
    pub overlap: Amplitude,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSignalReport {
    /// `|⟨11|pointer⟩|` after post-selection.
    pub signal: f64,
    pub probability: f64,
    /// `signal / (ε₁ε₂)`.
    pub per_strength: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationResult {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub scenario: String,
    pub title: String,
    pub parameters: Vec<(String, ParamValue)>,
    pub convention: String,
    pub readout: String,
    pub status: Status,
    pub notes: Vec<String>,
    pub stages: Vec<StageRow>,
    pub probes: Vec<ProbeReport>,
    pub postselection: PostselectionReport,
    pub joint_signal: Option<JointSignalReport>,
    pub detectors: Vec<(String, f64)>,
    pub annotations: Vec<AnnotationResult>,
}

/// One point of an ε-sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub arm: String,
    pub probe: String,
    pub trace_magnitude: f64,
    pub order: Option<f64>,
}

pub fn format_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), format_number)
}

impl ScenarioReport {
    fn row(&self, stage: &str, arm: &str) -> Option<&ArmRow> {
        self.stages
            .iter()
            .find(|s| s.stage == stage)?
            .arms
            .iter()
            .find(|a| a.arm == arm)
    }

    pub fn weak_value(&self, stage: &str, arm: &str) -> Option<Amplitude> {
        self.row(stage, arm)?.weak_value
    }

    pub fn instrumented_weak_value(&self, stage: &str, arm: &str) -> Option<Amplitude> {
        self.row(stage, arm)?.instrumented_weak_value
    }

    pub fn presence(&self, stage: &str, arm: &str) -> Option<&PresenceEntry> {
        self.row(stage, arm)?.presence.as_ref()
    }

    pub fn probe(&self, id: &str) -> Option<&ProbeReport> {
        self.probes.iter().find(|p| p.id == id)
    }

    pub fn annotation(&self, name: &str) -> Option<&AnnotationResult> {
        self.annotations.iter().find(|a| a.name == name)
    }

    pub fn detector(&self, name: &str) -> Option<f64> {
        self.detectors.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn all_passed(&self) -> bool {
        self.annotations.iter().all(|a| a.pass)
    }

    fn instrumented(&self) -> bool {
        self.stages
            .iter()
            .any(|s| s.arms.iter().any(|a| a.instrumented_weak_value.is_some()))
    }

    /// The tsvf-report/1 document, pretty-printed.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Doc::new(self)).expect("report serializes");
        s.push('\n');
        s
    }

    /// Long-format CSV: `section,stage,key,field,value`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut put = |section: &str, stage: &str, key: &str, field: &str, value: String| {
            w.write_record([section, stage, key, field, value.as_str()])
                .expect("writing to memory");
        };
        put("section", "stage", "key", "field", "value".into());
        put("meta", "", "scenario", "value", self.scenario.clone());
        put("meta", "", "title", "value", self.title.clone());
        for (k, v) in &self.parameters {
            put("parameter", "", k, "value", param_text(v));
        }
        put("meta", "", "convention", "value", self.convention.clone());
        put("meta", "", "readout", "value", self.readout.clone());
        put("meta", "", "status", "value", self.status.as_str().into());
        for n in &self.notes {
            put("meta", "", "note", "value", n.clone());
        }
        for st in &self.stages {
            for a in &st.arms {
                let s = st.stage.as_str();
                put("stage", s, &a.arm, "forward_re", format_number(a.forward.re));
                put("stage", s, &a.arm, "forward_im", format_number(a.forward.im));
                put("stage", s, &a.arm, "backward_re", format_number(a.backward.re));
                put("stage", s, &a.arm, "backward_im", format_number(a.backward.im));
                if let Some(w) = a.weak_value {
                    put("weak_value", s, &a.arm, "re", format_number(w.re));
                    put("weak_value", s, &a.arm, "im", format_number(w.im));
                }
                if let Some(w) = a.instrumented_weak_value {
                    put("instrumented_weak_value", s, &a.arm, "re", format_number(w.re));
                    put("instrumented_weak_value", s, &a.arm, "im", format_number(w.im));
                }
                if let Some(p) = &a.presence {
                    put("presence", s, &a.arm, "verdict", p.verdict.to_string());
                    put("presence", s, &a.arm, "forward_rel", format_number(p.forward_rel));
                    put("presence", s, &a.arm, "backward_rel", format_number(p.backward_rel));
                    put("presence", s, &a.arm, "block_effect", opt(p.block_effect));
                }
            }
        }
        for p in &self.probes {
            put("probe", "", &p.id, "arm", p.arm.clone());
            put("probe", "", &p.id, "kind", p.kind.clone());
            put("probe", "", &p.id, "strength", format_number(p.strength));
            put("probe", "", &p.id, "trace_magnitude", opt(p.trace_magnitude));
            put("probe", "", &p.id, "order", opt(p.order));
            put("probe", "", &p.id, "residual", opt(p.residual));
            put("probe", "", &p.id, "pointer_mean", opt(p.pointer_mean));
            put("probe", "", &p.id, "classification", p.classification.clone());
        }
        let ps = &self.postselection;
        put("postselection", "", &ps.label, "probability", format_number(ps.probability));
        put("postselection", "", &ps.label, "overlap_re", format_number(ps.overlap.re));
        put("postselection", "", &ps.label, "overlap_im", format_number(ps.overlap.im));
        if let Some(j) = &self.joint_signal {
            put("joint_signal", "", "joint", "signal", format_number(j.signal));
            put("joint_signal", "", "joint", "probability", format_number(j.probability));
            put("joint_signal", "", "joint", "per_strength", format_number(j.per_strength));
            put("joint_signal", "", "joint", "note", j.note.clone());
        }
        for (d, i) in &self.detectors {
            put("detector", "", d, "intensity", format_number(*i));
        }
        for a in &self.annotations {
            put("annotation", "", &a.name, "pass", a.pass.to_string());
            put("annotation", "", &a.name, "measured", format_number(a.measured));
            put("annotation", "", &a.name, "expected", a.expected.clone());
        }
        String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
    }

    /// Stage by arm: forward and backward amplitudes, weak values, presence.
    pub fn stage_table(&self) -> String {
        let inst = self.instrumented();
        let mut head = vec![
            "stage", "arm", "forward.re", "forward.im", "backward.re", "backward.im", "weak.re", "weak.im",
        ];
        if inst {
            head.extend(["inst.re", "inst.im"]);
        }
        head.extend(["presence", "forward_rel", "backward_rel", "block_effect"]);
        let mut rows = Vec::new();
        for st in &self.stages {
            for a in &st.arms {
                let mut r = vec![
                    st.stage.clone(),
                    a.arm.clone(),
                    format_number(a.forward.re),
                    format_number(a.forward.im),
                    format_number(a.backward.re),
                    format_number(a.backward.im),
                    opt(a.weak_value.map(|w| w.re)),
                    opt(a.weak_value.map(|w| w.im)),
                ];
                if inst {
                    r.push(opt(a.instrumented_weak_value.map(|w| w.re)));
                    r.push(opt(a.instrumented_weak_value.map(|w| w.im)));
                }
                match &a.presence {
                    Some(p) => r.extend([
                        p.verdict.to_string(),
                        format_number(p.forward_rel),
                        format_number(p.backward_rel),
                        opt(p.block_effect),
                    ]),
                    None => r.extend(["-".into(), "-".into(), "-".into(), "-".into()]),
                }
                rows.push(r);
            }
        }
        table(&head, &rows)
    }

    /// Every section as aligned text tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut meta = vec![
            vec!["schema".to_string(), SCHEMA_ID.to_string()],
            vec!["scenario".into(), self.scenario.clone()],
            vec!["title".into(), self.title.clone()],
        ];
        for (k, v) in &self.parameters {
            meta.push(vec![format!("parameter {k}"), param_text(v)]);
        }
        meta.push(vec!["convention".into(), self.convention.clone()]);
        meta.push(vec!["readout".into(), self.readout.clone()]);
        meta.push(vec!["status".into(), self.status.as_str().into()]);
        for n in &self.notes {
            meta.push(vec!["note".into(), n.clone()]);
        }
        out += &table(&["meta", "value"], &meta);
        out += "\n";
        out += &self.stage_table();
        if !self.probes.is_empty() {
            out += "\n";
            let rows: Vec<Vec<String>> = self
                .probes
                .iter()
                .map(|p| {
                    vec![
                        p.id.clone(),
                        p.arm.clone(),
                        p.kind.clone(),
                        format_number(p.strength),
                        opt(p.trace_magnitude),
                        opt(p.order),
                        opt(p.residual),
                        opt(p.pointer_mean),
                        p.classification.clone(),
                    ]
                })
                .collect();
            out += &table(
                &["probe", "arm", "kind", "strength", "trace_magnitude", "order", "residual", "pointer_mean", "classification"],
                &rows,
            );
        }
        out += "\n";
        let ps = &self.postselection;
        out += &table(
            &["postselection", "probability", "overlap.re", "overlap.im"],
            &[vec![
                ps.label.clone(),
                format_number(ps.probability),
                format_number(ps.overlap.re),
                format_number(ps.overlap.im),
            ]],
        );
        if let Some(j) = &self.joint_signal {
            out += "\n";
            out += &table(
                &["joint signal", "probability", "per_strength", "note"],
                &[vec![
                    format_number(j.signal),
                    format_number(j.probability),
                    format_number(j.per_strength),
                    j.note.clone(),
                ]],
            );
        }
        out += "\n";
        let rows: Vec<Vec<String>> = self
            .detectors
            .iter()
            .map(|(d, i)| vec![d.clone(), format_number(*i)])
            .collect();
        out += &table(&["detector", "intensity"], &rows);
        out += "\n";
        let rows: Vec<Vec<String>> = self
            .annotations
            .iter()
            .map(|a| {
                vec![
                    if a.pass { "pass" } else { "FAIL" }.to_string(),
                    a.name.clone(),
                    format_number(a.measured),
                    a.expected.clone(),
                ]
            })
            .collect();
        out += &table(&["result", "annotation", "measured", "expected"], &rows);
        out
    }
}

/// `eps,arm,trace_magnitude,order`, one row per sample.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["eps", "arm", "trace_magnitude", "order"])
        .expect("writing to memory");
    for r in rows {
        w.write_record([
            format_number(r.eps),
            r.arm.clone(),
            format_number(r.trace_magnitude),
            format_number(r.order.unwrap_or(f64::NAN)),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
}

fn param_text(v: &ParamValue) -> String {
    match v {
        ParamValue::Number(x) => format_number(*x),
        ParamValue::Flag(b) => b.to_string(),
        ParamValue::Text(s) => s.clone(),
    }
}

fn table<S: AsRef<str>>(head: &[&str], rows: &[Vec<S>]) -> String {
    let mut width: Vec<usize> = head.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            width[i] = width[i].max(c.as_ref().chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i + 1 == cells.len() {
                s += c;
            } else {
                s += &format!("{c:<w$}  ", w = width[i]);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(head.to_vec());
    out += &line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect());
    for r in rows {
        out += &line(r.iter().map(AsRef::as_ref).collect());
    }
    out
}

struct Num(f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            RawValue::from_string(format_number(self.0))
                .map_err(serde::ser::Error::custom)?
                .serialize(s)
        } else {
            s.serialize_str(&format_number(self.0))
        }
    }
}

struct Map<T>(Vec<(String, T)>);

impl<T: Serialize> Serialize for Map<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

struct Param<'a>(&'a ParamValue);

impl Serialize for Param<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            ParamValue::Number(x) => Num(*x).serialize(s),
            ParamValue::Flag(b) => s.serialize_bool(*b),
            ParamValue::Text(t) => s.serialize_str(t),
        }
    }
}

#[derive(Serialize)]
struct Cx {
    re: Num,
    im: Num,
}

fn cx(a: Amplitude) -> Cx {
    Cx {
        re: Num(a.re),
        im: Num(a.im),
    }
}

#[derive(Serialize)]
struct Convention {
    id: String,
    text: &'static str,
}

#[derive(Serialize)]
struct Meta<'a> {
    scenario: &'a str,
    title: &'a str,
    parameters: Map<Param<'a>>,
    convention: Convention,
    readout: &'a str,
    status: &'static str,
    notes: &'a [String],
}

#[derive(Serialize)]
struct Amps {
    forward: Cx,
    backward: Cx,
}

#[derive(Serialize)]
struct PresenceDoc {
    verdict: &'static str,
    forward_rel: Num,
    backward_rel: Num,
    block_effect: Option<Num>,
}

#[derive(Serialize)]
struct ProbeDoc<'a> {
    arm: &'a str,
    kind: &'a str,
    strength: Num,
    trace_magnitude: Option<Num>,
    order: Option<Num>,
    residual: Option<Num>,
    pointer_mean: Option<Num>,
    classification: &'a str,
}

#[derive(Serialize)]
struct PostDoc<'a> {
    detector: &'a str,
    probability: Num,
    overlap: Cx,
}

#[derive(Serialize)]
struct JointDoc<'a> {
    signal: Num,
    probability: Num,
    per_strength: Num,
    note: &'a str,
}

#[derive(Serialize)]
struct AnnotationDoc<'a> {
    pass: bool,
    measured: Num,
    expected: &'a str,
}

#[derive(Serialize)]
struct Doc<'a> {
    schema: &'static str,
    meta: Meta<'a>,
    stages: Map<Map<Amps>>,
    weak_values: Map<Map<Cx>>,
    instrumented_weak_values: Option<Map<Map<Cx>>>,
    presence: Map<Map<PresenceDoc>>,
    probes: Map<ProbeDoc<'a>>,
    postselection: PostDoc<'a>,
    joint_signal: Option<JointDoc<'a>>,
    detectors: Map<Num>,
    annotations: Map<AnnotationDoc<'a>>,
}

impl<'a> Doc<'a> {
    fn new(r: &'a ScenarioReport) -> Self {
        let per_stage = |f: &dyn Fn(&ArmRow) -> Option<Amplitude>| -> Map<Map<Cx>> {
            Map(r
                .stages
                .iter()
                .filter(|s| s.arms.iter().any(|a| f(a).is_some()))
                .map(|s| {
                    let arms = s
                        .arms
                        .iter()
                        .filter_map(|a| f(a).map(|w| (a.arm.clone(), cx(w))))
                        .collect();
                    (s.stage.clone(), Map(arms))
                })
                .collect())
        };
        Doc {
            schema: SCHEMA_ID,
            meta: Meta {
                scenario: &r.scenario,
                title: &r.title,
                parameters: Map(r.parameters.iter().map(|(k, v)| (k.clone(), Param(v))).collect()),
                convention: Convention {
                    id: r.convention.clone(),
                    text: super::CONVENTION_TEXT,
                },
                readout: &r.readout,
                status: r.status.as_str(),
                notes: &r.notes,
            },
            stages: Map(r
                .stages
                .iter()
                .map(|s| {
                    let arms = s
                        .arms
                        .iter()
                        .map(|a| {
                            (
                                a.arm.clone(),
                                Amps {
                                    forward: cx(a.forward),
                                    backward: cx(a.backward),
                                },
                            )
                        })
                        .collect();
                    (s.stage.clone(), Map(arms))
                })
                .collect()),
            weak_values: per_stage(&|a| a.weak_value),
            instrumented_weak_values: r.instrumented().then(|| per_stage(&|a| a.instrumented_weak_value)),
            presence: Map(r
                .stages
                .iter()
                .filter(|s| s.arms.iter().any(|a| a.presence.is_some()))
                .map(|s| {
                    let arms = s
                        .arms
                        .iter()
                        .filter_map(|a| {
                            a.presence.as_ref().map(|p| {
                                (
                                    a.arm.clone(),
                                    PresenceDoc {
                                        verdict: p.verdict.as_str(),
                                        forward_rel: Num(p.forward_rel),
                                        backward_rel: Num(p.backward_rel),
                                        block_effect: p.block_effect.map(Num),
                                    },
                                )
                            })
                        })
                        .collect();
                    (s.stage.clone(), Map(arms))
                })
                .collect()),
            probes: Map(r
                .probes
                .iter()
                .map(|p| {
                    (
                        p.id.clone(),
                        ProbeDoc {
                            arm: &p.arm,
                            kind: &p.kind,
                            strength: Num(p.strength),
                            trace_magnitude: p.trace_magnitude.map(Num),
                            order: p.order.map(Num),
                            residual: p.residual.map(Num),
                            pointer_mean: p.pointer_mean.map(Num),
                            classification: &p.classification,
                        },
                    )
                })
                .collect()),
            postselection: PostDoc {
                detector: &r.postselection.label,
                probability: Num(r.postselection.probability),
                overlap: cx(r.postselection.overlap),
            },
            joint_signal: r.joint_signal.as_ref().map(|j| JointDoc {
                signal: Num(j.signal),
                probability: Num(j.probability),
                per_strength: Num(j.per_strength),
                note: &j.note,
            }),
            detectors: Map(r.detectors.iter().map(|(d, i)| (d.clone(), Num(*i))).collect()),
            annotations: Map(r
                .annotations
                .iter()
                .map(|a| {
                    (
                        a.name.clone(),
                        AnnotationDoc {
                            pass: a.pass,
                            measured: Num(a.measured),
                            expected: &a.expected,
                        },
                    )
                })
                .collect()),
        }
    }
}
