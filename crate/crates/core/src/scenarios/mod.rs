//! Ready-made experiments on the nested interferometer and a runner that
//! turns a scenario into a [`ScenarioReport`].
//!
//! The nested network: an outer splitter sends the photon into arm `A` or
//! arm `B`; `B` feeds a balanced inner interferometer (`C`, `E`) tuned so
//! that nothing leaves it toward `F`, the other output `G` going to a dump;
//! a final balanced splitter recombines `A` and `F` into detectors `D` and
//! `D'`. Stages `L1`..`L5` are the cross-sections between the splitters.

mod report;

use std::f64::consts::FRAC_1_SQRT_2 as H;

pub use report::{
    AnnotationResult, ArmRow, JointSignalReport, PostselectionReport, ProbeReport, ScenarioReport, StageRow,
    Status, SweepRow, SCHEMA_ID, format_number, sweep_csv,
};

use crate::error::{Error, Result};
use crate::network::{compile, ElementKind, Network, NetworkBuilder};
use crate::statespace::Amplitude;
use crate::tsvf::{presence_map, Postselection, Preselection, Presence, TwoStateVector, NULL_POSTSELECTION, PRESENCE_ETA};
use crate::weakmeas::{
    detector_intensities, estimate_order, evolve_joint, forward_joint, joint_flip_signal, order_from_samples,
    outcome_probability, pointer_mean, postselect, trace_magnitude, Experiment, InstrumentedNetwork,
    JointTwoStateVector, Pointer, PointerKind, ProbeCoupling, Readout, TraceEstimate, DEFAULT_GRID,
};

pub const CANONICAL_T: f64 = H;

pub const CONVENTION_ID: &str = "bs-symmetric-i/1";
pub const CONVENTION_TEXT: &str =
    "beam splitter: out1 = t*in1 + i*r*in2, out2 = i*r*in1 + t*in2; phase shifter: exp(+i*phi)";

pub const WEAK_VALUE_TOL: f64 = 1e-10;
pub const INTENSITY_TOL: f64 = 1e-12;
pub const ORDER_TOL: f64 = 0.05;
pub const BILINEAR_TOL: f64 = 0.01;
/// Allowed range of `|(P_arm)_w| / ε` for a first-order instrumented value.
pub const FIRST_ORDER_BRACKET: (f64, f64) = (0.1, 10.0);
/// An external probe leaks at least this multiple of ε² into the dark port.
pub const LEAK_FLOOR: f64 = 1e-3;
pub const MEAN_TOL: f64 = 1e-12;

pub const STAGES: [&str; 5] = ["L1", "L2", "L3", "L4", "L5"];

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Number(f64),
    Flag(bool),
    Text(String),
}

/// A structural expectation checked by [`run`].
#[derive(Debug, Clone, PartialEq)]
pub enum Check {
    /// Weak values sum to one at every stage.
    SumRule,
    Presence { stage: String, arm: String, verdict: Presence },
    WeakValue { stage: String, arm: String, value: Amplitude },
    /// Equal magnitudes above 0.01, opposite real parts.
    OppositeSigns { stage: String, first: String, second: String },
    /// Order of the trace left on a qubit probe placed alone on `arm` of the
    /// probe-free network.
    LoneProbeOrder { arm: String, order: f64 },
    ProbeOrder { id: String, order: f64 },
    /// `|(P_arm)_w| / ε` of the instrumented network stays in
    /// [`FIRST_ORDER_BRACKET`] across the grid.
    InstrumentedFirstOrder { stage: String, arm: String },
    /// Order in ε of the probability found on `arm` at `stage`.
    LeakageOrder { stage: String, arm: String, order: f64 },
    /// Probability on `arm` exceeds `LEAK_FLOOR·ε²` across the grid.
    NoRestoration { stage: String, arm: String },
    /// Joint flip signal over ε₁ε₂ is constant over the grid squared.
    JointBilinear,
    /// Detector intensities against a baseline: equal, or clearly changed.
    Intensities { baseline: Vec<(String, f64)>, unchanged: bool },
    PointerMean { id: String, target: f64, tol: f64 },
    PointerMeanNonzero { id: String },
    /// Amplitude on `arm` at `stage` is exactly zero.
    DarkPort { stage: String, arm: String },
    /// Difference of pointer means with and without a second shifter.
    Witness { id: String, restored: Box<InstrumentedNetwork>, detuned: Box<InstrumentedNetwork> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub name: String,
    pub check: Check,
}

impl Annotation {
    pub fn new(name: impl Into<String>, check: Check) -> Self {
        Annotation {
            name: name.into(),
            check,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub title: String,
    pub parameters: Vec<(String, ParamValue)>,
    pub network: InstrumentedNetwork,
    pub pre: Preselection,
    pub post: Postselection,
    pub readout: Readout,
    /// Strengths used for order estimates and other sweeps.
    pub grid: Vec<f64>,
    pub annotations: Vec<Annotation>,
    pub notes: Vec<String>,
}

impl Scenario {
    /// Reject annotations naming unknown stages, arms or pointers, and
    /// duplicate annotation names.
    pub fn validate(&self) -> Result<()> {
        let n = self.network.network();
        crate::weakmeas::check_grid(&self.grid)?;
        let stage = |s: &str| n.cut(s).map(|_| ());
        let arm = |a: &str| {
            if n.has_arm(a) {
                Ok(())
            } else {
                Err(Error::UnknownArm(a.to_string()))
            }
        };
        let pointer = |id: &str| self.network.coupling(id).map(|_| ());
        for (i, a) in self.annotations.iter().enumerate() {
            if self.annotations[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidParameter(format!("duplicate annotation `{}`", a.name)));
            }
            match &a.check {
                Check::SumRule | Check::JointBilinear | Check::Intensities { .. } => {}
                Check::Presence { stage: s, arm: x, .. }
                | Check::WeakValue { stage: s, arm: x, .. }
                | Check::InstrumentedFirstOrder { stage: s, arm: x }
                | Check::LeakageOrder { stage: s, arm: x, .. }
                | Check::NoRestoration { stage: s, arm: x }
                | Check::DarkPort { stage: s, arm: x } => {
                    stage(s)?;
                    arm(x)?;
                }
                Check::OppositeSigns { stage: s, first, second } => {
                    stage(s)?;
                    arm(first)?;
                    arm(second)?;
                }
                Check::LoneProbeOrder { arm: x, .. } => arm(x)?,
                Check::ProbeOrder { id, .. }
                | Check::PointerMean { id, .. }
                | Check::PointerMeanNonzero { id }
                | Check::Witness { id, .. } => pointer(id)?,
            }
        }
        Ok(())
    }

    fn param(mut self, name: &str, v: ParamValue) -> Self {
        self.parameters.push((name.to_string(), v));
        self
    }

    fn annotate(mut self, name: impl Into<String>, check: Check) -> Self {
        self.annotations.push(Annotation::new(name, check));
        self
    }

    fn note(mut self, text: &str) -> Self {
        self.notes.push(text.to_string());
        self
    }

    fn probe(mut self, arm: &str, pointer: Pointer) -> Result<Self> {
        self.network = self.network.with_probe(ProbeCoupling::new(arm, pointer))?;
        Ok(self)
    }
}

fn number(v: f64) -> ParamValue {
    ParamValue::Number(v)
}

/// The nested interferometer with outer transmission `t_outer`. Fails if the
/// inner interferometer does not come out dark toward `F`.
pub fn nested_network(t_outer: f64) -> Result<Network> {
    if !(t_outer > 0.0 && t_outer < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "outer transmission must lie in (0, 1), got {t_outer}"
        )));
    }
    let r_outer = (1.0 - t_outer * t_outer).sqrt();
    let n = NetworkBuilder::new()
        .source("S", "a0")
        .splitter("BS1", t_outer, r_outer, ["a0", "vac1"], ["A", "B"])
        .splitter("BS2", H, H, ["B", "vac2"], ["C", "E"])
        .splitter("BS3", H, H, ["C", "E"], ["F", "G"])
        .splitter("BS4", H, H, ["A", "F"], ["D", "D'"])
        .detector("D", "D")
        .detector("D'", "D'")
        .mirror("Mdump", "G", "g")
        .detector("dump", "g")
        .stage("L1", &["a0"])
        .stage("L2", &["A", "B"])
        .stage("L3", &["A", "C", "E"])
        .stage("L4", &["A", "F", "G"])
        .stage("L5", &["D", "D'", "g"])
        .build()?;
    let plan = compile(&n)?;
    let f = crate::tsvf::forward_state(&plan, &Preselection::source(&n, "S")?, "L4")?;
    let leak = f.amp("F").map_or(0.0, |a| a.norm());
    if leak > 1e-12 {
        return Err(Error::validation(
            "BS3",
            format!("inner interferometer is not dark toward F (|F| = {leak:e})"),
        ));
    }
    Ok(n)
}

fn base(name: &str, title: &str, network: Network) -> Result<Scenario> {
    let pre = Preselection::source(&network, "S")?;
    let post = Postselection::detector(&network, "D")?;
    Ok(Scenario {
        name: name.to_string(),
        title: title.to_string(),
        parameters: Vec::new(),
        network: network.into(),
        pre,
        post,
        readout: Readout::default(),
        grid: DEFAULT_GRID.to_vec(),
        annotations: vec![Annotation::new("sum rule", Check::SumRule)],
        notes: Vec::new(),
    })
}

fn presence(stage: &str, arm: &str, verdict: Presence) -> (String, Check) {
    (
        format!("{arm} {verdict} at {stage}"),
        Check::Presence {
            stage: stage.into(),
            arm: arm.into(),
            verdict,
        },
    )
}

fn strength_range(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v <= 0.1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 0.1], got {v}")))
    }
}

/// The nested interferometer, pre-selected at the source and post-selected
/// on `D`.
pub fn fig1_nested(t_outer: f64) -> Result<Scenario> {
    let mut s = base("fig1", "nested interferometer, inner loop dark toward F", nested_network(t_outer)?)?
        .param("t_outer", number(t_outer));
    for (stage, arm, v) in [
        ("L3", "A", Presence::Present),
        ("L3", "C", Presence::Present),
        ("L3", "E", Presence::Present),
        ("L2", "B", Presence::Secondary),
        ("L4", "F", Presence::Secondary),
        ("L4", "G", Presence::Absent),
        ("L5", "D", Presence::Present),
    ] {
        let (name, check) = presence(stage, arm, v);
        s = s.annotate(name, check);
    }
    let zero = Amplitude::new(0.0, 0.0);
    let one = Amplitude::new(1.0, 0.0);
    Ok(s.annotate("(P_B)_w = 0 at L2", Check::WeakValue { stage: "L2".into(), arm: "B".into(), value: zero })
        .annotate("(P_F)_w = 0 at L4", Check::WeakValue { stage: "L4".into(), arm: "F".into(), value: zero })
        .annotate("(P_A)_w = 1 at L3", Check::WeakValue { stage: "L3".into(), arm: "A".into(), value: one })
        .annotate(
            "(P_C)_w and (P_E)_w opposite at L3",
            Check::OppositeSigns { stage: "L3".into(), first: "C".into(), second: "E".into() },
        )
        .annotate("trace on B alone is zero", Check::LoneProbeOrder { arm: "B".into(), order: f64::INFINITY })
        .annotate("trace on F alone is zero", Check::LoneProbeOrder { arm: "F".into(), order: f64::INFINITY })
        .annotate("trace on C alone is first order", Check::LoneProbeOrder { arm: "C".into(), order: 1.0 }))
}

/// A qubit probe of strength `eps_inner` on `C`, optionally a second one on
/// `F`.
pub fn sec3_probe(eps_inner: f64, probe_f: Option<f64>) -> Result<Scenario> {
    strength_range("eps_inner", eps_inner)?;
    let mut s = base("sec3", "weak probe inside the inner interferometer", nested_network(CANONICAL_T)?)?
        .param("eps_inner", number(eps_inner))
        .probe("C", Pointer::qubit("pC", eps_inner))?;
    if let Some(eps_f) = probe_f {
        strength_range("probe_f", eps_f)?;
        s = s.param("probe_f", number(eps_f)).probe("F", Pointer::qubit("pF", eps_f))?;
    }
    s = s
        .annotate("trace on C is first order", Check::ProbeOrder { id: "pC".into(), order: 1.0 })
        .annotate(
            "instrumented (P_F)_w is first order at L4",
            Check::InstrumentedFirstOrder { stage: "L4".into(), arm: "F".into() },
        )
        .annotate(
            "instrumented (P_B)_w is first order at L2",
            Check::InstrumentedFirstOrder { stage: "L2".into(), arm: "B".into() },
        )
        .annotate(
            "leakage into F is second order",
            Check::LeakageOrder { stage: "L4".into(), arm: "F".into(), order: 2.0 },
        );
    if probe_f.is_none() {
        s = s.annotate(
            "external probe cannot restore the dark port",
            Check::NoRestoration { stage: "L4".into(), arm: "F".into() },
        );
    } else {
        s = s.annotate(
            "trace on F negligible (second order)",
            Check::ProbeOrder { id: "pF".into(), order: 2.0 },
        );
    }
    Ok(s)
}

/// Qubit probes `ε₁` on `C` and `ε₂` on the leakage arm `F`.
pub fn sec4_double(eps1: f64, eps2: f64) -> Result<Scenario> {
    strength_range("eps1", eps1)?;
    strength_range("eps2", eps2)?;
    Ok(base(
        "sec4",
        "double probe on the nested interferometer: probe 1 on C, probe 2 on the leakage arm F",
        nested_network(CANONICAL_T)?,
    )?
    .param("eps1", number(eps1))
    .param("eps2", number(eps2))
    .probe("C", Pointer::qubit("p1", eps1))?
    .probe("F", Pointer::qubit("p2", eps2))?
    .annotate("joint flip signal bilinear in eps1, eps2", Check::JointBilinear)
    .annotate("trace on C is first order", Check::ProbeOrder { id: "p1".into(), order: 1.0 })
    .annotate("trace on F is second order", Check::ProbeOrder { id: "p2".into(), order: 2.0 })
    .note("the double-inner-interferometer layout is replaced by the nested network with probe 2 on the leakage arm; only probe-1 leakage reaches probe 2")
    .note("joint signal is second order and neglected under the weak-trace criterion"))
}

fn baseline_intensities() -> Result<Vec<(String, f64)>> {
    let n = nested_network(CANONICAL_T)?;
    detector_intensities(&n.clone().into(), &Preselection::source(&n, "S")?)
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && delta.abs() <= 0.1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("phase must satisfy |delta| <= 0.1, got {delta}")))
    }
}

fn with_phase(n: &Network, arm: &str, delta: f64) -> Result<Network> {
    n.insert_inline(arm, &format!("PS_{arm}"), ElementKind::PhaseShifter { phi: delta }, &format!("{arm}'"))
}

/// A phase shifter `δ` on `C`; with `restore`, a second one on `E`.
pub fn sec5_phase(delta: f64, restore: bool) -> Result<Scenario> {
    check_delta(delta)?;
    let mut n = with_phase(&nested_network(CANONICAL_T)?, "C", delta)?;
    if restore {
        n = with_phase(&n, "E", delta)?;
    }
    let unchanged = restore || delta == 0.0;
    let name = if unchanged {
        "intensities at D and D' match baseline"
    } else {
        "intensities at D and D' differ from baseline"
    };
    Ok(base("sec5-phase", "phase shifter in the inner interferometer", n)?
        .param("delta", number(delta))
        .param("restore", ParamValue::Flag(restore))
        .annotate(name, Check::Intensities { baseline: baseline_intensities()?, unchanged }))
}

/// A single phase shifter `δ` on any arm of the nested network.
pub fn sec5_phase_on(arm: &str, delta: f64) -> Result<Scenario> {
    check_delta(delta)?;
    let n = with_phase(&nested_network(CANONICAL_T)?, arm, delta)?;
    let unchanged = !matches!(arm, "C" | "E") || delta == 0.0;
    let name = if unchanged {
        "intensities at D and D' match baseline"
    } else {
        "intensities at D and D' differ from baseline"
    };
    let mut s = base("sec5-phase", "phase shifter on a single arm", n)?
        .param("delta", number(delta))
        .param("arm", ParamValue::Text(arm.to_string()))
        .annotate(name, Check::Intensities { baseline: baseline_intensities()?, unchanged });
    if arm == "A" {
        s = s.note("blind spot: a phase shift in A leaves the D and D' intensities unchanged although the particle is present in A; the transverse shift does register it");
    }
    Ok(s)
}

fn check_shift(delta: f64, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(delta > 0.0 && delta <= sigma / 10.0) {
        return Err(Error::InvalidParameter(format!(
            "shift must satisfy 0 < delta <= sigma/10, got delta = {delta}, sigma = {sigma}"
        )));
    }
    Ok(())
}

fn shifted(arms: &[&str], delta: f64, sigma: f64) -> Result<InstrumentedNetwork> {
    let mut n: InstrumentedNetwork = nested_network(CANONICAL_T)?.into();
    for arm in arms {
        n = n.with_probe(ProbeCoupling::new(arm, Pointer::self_shift(&format!("s{arm}"), delta, sigma)))?;
    }
    Ok(n)
}

/// The beam itself shifted transversally by `δ` on `C`; with `restore`, on
/// `E` as well.
pub fn sec5_transversal(delta: f64, sigma: f64, restore: bool) -> Result<Scenario> {
    check_shift(delta, sigma)?;
    let restored = shifted(&["C", "E"], delta, sigma)?;
    let detuned = shifted(&["C"], delta, sigma)?;
    let mut s = base("sec5-shift", "transverse shift of the beam in the inner interferometer", nested_network(CANONICAL_T)?)?
        .param("delta", number(delta))
        .param("sigma", number(sigma))
        .param("restore", ParamValue::Flag(restore));
    s.network = if restore { restored.clone() } else { detuned.clone() };
    s = if restore {
        s.annotate("pointer mean at D is zero", Check::PointerMean { id: "sC".into(), target: 0.0, tol: MEAN_TOL })
            .annotate("dark port restored at L4", Check::DarkPort { stage: "L4".into(), arm: "F".into() })
    } else {
        s.annotate("pointer mean at D is shifted", Check::PointerMeanNonzero { id: "sC".into() })
    };
    Ok(s.annotate(
        "shifter in E witnessed by the change in the reading",
        Check::Witness { id: "sC".into(), restored: Box::new(restored), detuned: Box::new(detuned) },
    )
    .note("the second shifter is seen through the change it makes to the leakage, not through a leakage of its own"))
}

/// A transverse shift `δ` on a single arm, checked against the first-order
/// law `mean ≈ δ·Re(P_arm)_w`.
pub fn sec5_transversal_on(arm: &str, delta: f64, sigma: f64) -> Result<Scenario> {
    check_shift(delta, sigma)?;
    let network = nested_network(CANONICAL_T)?;
    let stage = network
        .cuts()
        .iter()
        .find(|c| c.arms.iter().any(|a| a == arm))
        .ok_or_else(|| Error::UnknownArm(arm.to_string()))?
        .name
        .clone();
    let mut s = base("sec5-shift", "transverse shift of the beam on a single arm", network)?
        .param("delta", number(delta))
        .param("sigma", number(sigma))
        .param("arm", ParamValue::Text(arm.to_string()));
    let w = crate::tsvf::path_weak_values(&compile(s.network.network())?, &s.pre, &s.post, &stage)?
        .into_iter()
        .find(|(a, _)| a == arm)
        .map(|(_, w)| w)
        .expect("arm is in the cut");
    let id = format!("s{arm}");
    s.network = shifted(&[arm], delta, sigma)?;
    s = s.annotate(
        format!("pointer mean follows delta Re(P_{arm})_w"),
        Check::PointerMean { id: id.clone(), target: delta * w.re, tol: delta * delta / sigma },
    );
    if w.re.abs() > WEAK_VALUE_TOL {
        s = s.annotate("pointer mean at D is shifted", Check::PointerMeanNonzero { id });
    }
    Ok(s)
}

/// A user network with the given selections. Only the sum rule is checked.
pub fn custom(network: Network, pre: Preselection, post: Postselection) -> Result<Scenario> {
    let s = Scenario {
        name: "custom".into(),
        title: "user network".into(),
        parameters: Vec::new(),
        network: network.into(),
        pre,
        post,
        readout: Readout::default(),
        grid: DEFAULT_GRID.to_vec(),
        annotations: vec![Annotation::new("sum rule", Check::SumRule)],
        notes: Vec::new(),
    };
    s.validate()?;
    Ok(s)
}

/// Every shipped scenario at its default parameters.
pub fn shipped() -> Result<Vec<Scenario>> {
    Ok(vec![
        fig1_nested(CANONICAL_T)?,
        fig1_nested(0.4)?,
        fig1_nested(0.9)?,
        sec3_probe(1e-2, None)?,
        sec3_probe(1e-2, Some(1e-2))?,
        sec4_double(1e-2, 1e-2)?,
        sec5_phase(0.01, false)?,
        sec5_phase(0.01, true)?,
        sec5_phase_on("A", 0.01)?,
        sec5_transversal(0.01, 1.0, false)?,
        sec5_transversal(0.01, 1.0, true)?,
        sec5_transversal_on("A", 0.01, 1.0)?,
    ])
}

fn order_matches(order: Option<f64>, target: f64) -> bool {
    match order {
        Some(o) if target.is_infinite() => o == target,
        Some(o) => (o - target).abs() <= ORDER_TOL,
        None => false,
    }
}

fn order_value(order: Option<f64>) -> f64 {
    order.unwrap_or(f64::NAN)
}

/// Traces of every probe at each grid strength, all probes set to ε.
fn probe_estimates(s: &Scenario, grid: &[f64]) -> Result<Vec<TraceEstimate>> {
    crate::weakmeas::check_grid(grid)?;
    let couplings = s.network.couplings();
    let mut samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); couplings.len()];
    for &eps in grid {
        let inst = s.network.with_uniform_strength(eps)?;
        let (ps, _) = postselect(&evolve_joint(&inst, &s.pre)?, &s.post)?;
        for (k, c) in couplings.iter().enumerate() {
            samples[k].push((eps, trace_magnitude(&ps, &c.pointer.id)?));
        }
    }
    Ok(couplings
        .iter()
        .zip(samples)
        .map(|(c, v)| order_from_samples(&c.arm, v))
        .collect())
}

/// One row per (ε, probe), sorted by ε then arm.
pub fn sweep(s: &Scenario, grid: &[f64]) -> Result<Vec<SweepRow>> {
    if s.network.couplings().is_empty() {
        return Err(Error::ProbeCount(0));
    }
    let estimates = probe_estimates(s, grid)?;
    let mut rows = Vec::new();
    for (c, est) in s.network.couplings().iter().zip(&estimates) {
        for &(eps, m) in &est.samples {
            rows.push(SweepRow {
                eps,
                arm: c.arm.clone(),
                probe: c.pointer.id.clone(),
                trace_magnitude: m,
                order: est.order,
            });
        }
    }
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps).then_with(|| a.arm.cmp(&b.arm)).then_with(|| a.probe.cmp(&b.probe)));
    Ok(rows)
}

fn classify(order: Option<f64>) -> &'static str {
    match order {
        None => "undetermined",
        Some(o) if o.is_infinite() => "none",
        Some(o) if o >= 1.5 => "second order, negligible",
        Some(_) => "first order",
    }
}

/// Evaluate a scenario. A null post-selection yields a report with that
/// status rather than an error.
pub fn run(s: &Scenario) -> Result<ScenarioReport> {
    s.validate()?;
    let inst = &s.network;
    let n = inst.network();
    let plan = compile(n)?;
    let tsvs = TwoStateVector::all(&plan, &s.pre, &s.post)?;
    let js = evolve_joint(inst, &s.pre)?;
    let probability = outcome_probability(&js, &s.post);
    let overlap = tsvs.last().expect("plans have a cut").overlap;
    let null = overlap.norm() < NULL_POSTSELECTION || probability < crate::weakmeas::NULL_PROBABILITY;

    let instrumented = if null || inst.couplings().is_empty() {
        None
    } else {
        match JointTwoStateVector::all(inst, &s.pre, &s.post, s.readout)
            .and_then(|v| v.iter().map(JointTwoStateVector::path_weak_values).collect::<Result<Vec<_>>>())
        {
            Ok(v) => Some(v),
            Err(Error::NullPostselection(_)) => None,
            Err(e) => return Err(e),
        }
    };
    let null = null || (!inst.couplings().is_empty() && instrumented.is_none());

    let mut stages = Vec::with_capacity(tsvs.len());
    for (k, t) in tsvs.iter().enumerate() {
        let weak = if null { None } else { Some(t.path_weak_values()?) };
        let presence = if null {
            None
        } else {
            Some(presence_map(n, &s.pre, &s.post, &t.stage, PRESENCE_ETA)?)
        };
        let arms = t
            .basis()
            .names()
            .enumerate()
            .map(|(i, arm)| ArmRow {
                arm: arm.to_string(),
                forward: t.forward.amps()[i],
                backward: t.backward.amps()[i],
                weak_value: weak.as_ref().map(|w| w[i].1),
                instrumented_weak_value: instrumented.as_ref().map(|w| w[k][i].1),
                presence: presence.as_ref().and_then(|p| p.entry(arm).cloned()),
            })
            .collect();
        stages.push(StageRow {
            stage: t.stage.clone(),
            arms,
        });
    }

    let pointer = if null { None } else { Some(postselect(&js, &s.post)?.0) };
    let estimates = if null || inst.couplings().is_empty() {
        Vec::new()
    } else {
        probe_estimates(s, &s.grid)?
    };
    let mut probes = Vec::new();
    for (k, c) in inst.couplings().iter().enumerate() {
        let estimate = estimates.get(k);
        let order = estimate.and_then(|e| e.order);
        probes.push(ProbeReport {
            id: c.pointer.id.clone(),
            arm: c.arm.clone(),
            kind: c.pointer.kind_name().to_string(),
            strength: c.pointer.strength(),
            trace_magnitude: match &pointer {
                Some(ps) => Some(trace_magnitude(ps, &c.pointer.id)?),
                None => None,
            },
            order,
            residual: estimate.map(|e| e.fit_residual),
            pointer_mean: match (&pointer, c.pointer.kind) {
                (Some(ps), PointerKind::Gaussian { .. } | PointerKind::SelfShift { .. }) => {
                    Some(pointer_mean(ps, &c.pointer.id)?)
                }
                _ => None,
            },
            classification: if estimate.is_some() { classify(order) } else { "undetermined" }.to_string(),
        });
    }

    let qubits = inst
        .couplings()
        .iter()
        .filter(|c| matches!(c.pointer.kind, PointerKind::Qubit { .. }))
        .count();
    let joint_signal = if !null && qubits == 2 && inst.couplings().len() == 2 {
        let signal = joint_flip_signal(inst, &s.pre, &s.post)?;
        let strengths: f64 = inst.couplings().iter().map(|c| c.pointer.strength()).product();
        Some(JointSignalReport {
            signal,
            probability: signal * signal,
            per_strength: signal / strengths,
            note: "second order, neglected under the weak-trace criterion".into(),
        })
    } else {
        None
    };

    let mut report = ScenarioReport {
        scenario: s.name.clone(),
        title: s.title.clone(),
        parameters: s.parameters.clone(),
        convention: CONVENTION_ID.to_string(),
        readout: s.readout.as_str().to_string(),
        status: if null { Status::NullPostselection } else { Status::Ok },
        notes: s.notes.clone(),
        stages,
        probes,
        postselection: PostselectionReport {
            label: s.post.label().to_string(),
            probability,
            overlap,
        },
        joint_signal,
        detectors: detector_intensities(inst, &s.pre)?,
        annotations: Vec::new(),
    };
    let results = s
        .annotations
        .iter()
        .map(|a| {
            let (pass, measured, expected) = if null {
                (false, f64::NAN, "null post-selection".to_string())
            } else {
                evaluate(s, &report, &a.check)?
            };
            Ok(AnnotationResult {
                name: a.name.clone(),
                pass,
                measured,
                expected,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    report.annotations = results;
    Ok(report)
}

fn weak_value(report: &ScenarioReport, stage: &str, arm: &str) -> Result<Amplitude> {
    report
        .weak_value(stage, arm)
        .ok_or_else(|| Error::UnknownArm(format!("{arm} at {stage}")))
}

fn evaluate(s: &Scenario, report: &ScenarioReport, check: &Check) -> Result<(bool, f64, String)> {
    let one = Amplitude::new(1.0, 0.0);
    Ok(match check {
        Check::SumRule => {
            let mut worst = 0.0f64;
            for st in &report.stages {
                let base: Amplitude = st.arms.iter().filter_map(|a| a.weak_value).sum();
                worst = worst.max((base - one).norm());
                if st.arms.iter().any(|a| a.instrumented_weak_value.is_some()) {
                    let inst: Amplitude = st.arms.iter().filter_map(|a| a.instrumented_weak_value).sum();
                    worst = worst.max((inst - one).norm());
                }
            }
            (worst < WEAK_VALUE_TOL, worst, format!("|sum - 1| < {WEAK_VALUE_TOL:e}"))
        }
        Check::Presence { stage, arm, verdict } => {
            let e = report
                .presence(stage, arm)
                .ok_or_else(|| Error::UnknownArm(format!("{arm} at {stage}")))?;
            let measured = e.block_effect.unwrap_or(e.forward_rel.min(e.backward_rel));
            (e.verdict == *verdict, measured, verdict.to_string())
        }
        Check::WeakValue { stage, arm, value } => {
            let d = (weak_value(report, stage, arm)? - value).norm();
            (d < WEAK_VALUE_TOL, d, format!("|w - ({}, {})| < {WEAK_VALUE_TOL:e}", value.re, value.im))
        }
        Check::OppositeSigns { stage, first, second } => {
            let (a, b) = (weak_value(report, stage, first)?, weak_value(report, stage, second)?);
            let pass = a.re * b.re < 0.0 && (a.norm() - b.norm()).abs() < WEAK_VALUE_TOL && a.norm() > 0.01;
            (pass, a.norm(), "equal magnitudes above 0.01, opposite signs".into())
        }
        Check::LoneProbeOrder { arm, order } => {
            let base = s.network.network().clone();
            let est = estimate_order(
                |eps| {
                    Ok(Experiment {
                        network: crate::weakmeas::attach_probe(base.clone(), ProbeCoupling::new(arm, Pointer::qubit("lone", eps)))?,
                        pre: s.pre.clone(),
                        post: s.post.clone(),
                    })
                },
                arm,
                &s.grid,
            )?;
            (order_matches(est.order, *order), order_value(est.order), order_label(*order))
        }
        Check::ProbeOrder { id, order } => {
            let p = report
                .probe(id)
                .ok_or_else(|| Error::UnknownPointer(id.clone()))?;
            (order_matches(p.order, *order), order_value(p.order), order_label(*order))
        }
        Check::InstrumentedFirstOrder { stage, arm } => {
            let (lo, hi) = FIRST_ORDER_BRACKET;
            let mut worst = f64::NAN;
            let mut pass = true;
            for &eps in &s.grid {
                let inst = s.network.with_uniform_strength(eps)?;
                let t = JointTwoStateVector::at(&inst, &s.pre, &s.post, s.readout, stage)?;
                let w = t
                    .path_weak_values()?
                    .into_iter()
                    .find(|(a, _)| a == arm)
                    .map_or(0.0, |(_, w)| w.norm());
                let ratio = w / eps;
                pass &= (lo..=hi).contains(&ratio);
                if worst.is_nan() || ratio.ln().abs() > worst.ln().abs() {
                    worst = ratio;
                }
            }
            (pass, worst, format!("|w|/eps in [{lo}, {hi}]"))
        }
        Check::LeakageOrder { stage, arm, order } => {
            let mut samples = Vec::new();
            for &eps in &s.grid {
                let inst = s.network.with_uniform_strength(eps)?;
                samples.push((eps, forward_joint(&inst, &s.pre, stage)?.arm_probability(arm)));
            }
            let est = order_from_samples(arm, samples);
            (order_matches(est.order, *order), order_value(est.order), order_label(*order))
        }
        Check::NoRestoration { stage, arm } => {
            let mut worst = f64::INFINITY;
            for &eps in &s.grid {
                let inst = s.network.with_uniform_strength(eps)?;
                let p = forward_joint(&inst, &s.pre, stage)?.arm_probability(arm);
                worst = worst.min(p / (eps * eps));
            }
            (worst > LEAK_FLOOR, worst, format!("probability / eps^2 > {LEAK_FLOOR:e}"))
        }
        Check::JointBilinear => {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &e1 in &s.grid {
                for &e2 in &s.grid {
                    let inst = s.network.with_strengths(&[e1, e2])?;
                    let k = joint_flip_signal(&inst, &s.pre, &s.post)? / (e1 * e2);
                    lo = lo.min(k);
                    hi = hi.max(k);
                }
            }
            let spread = hi / lo - 1.0;
            (spread < BILINEAR_TOL, spread, format!("max/min - 1 < {BILINEAR_TOL}"))
        }
        Check::Intensities { baseline, unchanged } => {
            let mut worst = 0.0f64;
            for (name, i) in &report.detectors {
                if let Some((_, b)) = baseline.iter().find(|(n, _)| n == name) {
                    worst = worst.max((i - b).abs());
                }
            }
            if *unchanged {
                (worst < INTENSITY_TOL, worst, format!("max |I - I_baseline| < {INTENSITY_TOL:e}"))
            } else {
                (worst > 1e-6, worst, "max |I - I_baseline| > 1e-6".into())
            }
        }
        Check::PointerMean { id, target, tol } => {
            let m = report
                .probe(id)
                .and_then(|p| p.pointer_mean)
                .ok_or_else(|| Error::UnknownPointer(id.clone()))?;
            ((m - target).abs() <= *tol, m, format!("{target:e} within {tol:e}"))
        }
        Check::PointerMeanNonzero { id } => {
            let m = report
                .probe(id)
                .and_then(|p| p.pointer_mean)
                .ok_or_else(|| Error::UnknownPointer(id.clone()))?;
            (m.abs() > MEAN_TOL, m, format!("|mean| > {MEAN_TOL:e}"))
        }
        Check::DarkPort { stage, arm } => {
            let a = forward_joint(&s.network, &s.pre, stage)?.arm_probability(arm).sqrt();
            (a == 0.0, a, "exactly 0".into())
        }
        Check::Witness { id, restored, detuned } => {
            let mean = |n: &InstrumentedNetwork| -> Result<f64> {
                let (ps, _) = postselect(&evolve_joint(n, &s.pre)?, &s.post)?;
                pointer_mean(&ps, id)
            };
            let d = mean(restored)? - mean(detuned)?;
            (d.abs() > MEAN_TOL, d, format!("|restored - detuned| > {MEAN_TOL:e}"))
        }
    })
}

fn order_label(order: f64) -> String {
    if order.is_infinite() {
        "order inf (exact zero)".into()
    } else {
        format!("order {order} +/- {ORDER_TOL}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_pass(r: &ScenarioReport) {
        for a in &r.annotations {
            assert!(a.pass, "{}: {} ({})", a.name, a.measured, a.expected);
        }
        assert_eq!(r.status, Status::Ok);
    }

    #[test]
    fn canonical_fig1_matches_the_reference_network() {
        let s = fig1_nested(CANONICAL_T).unwrap();
        let (got, want) = (s.network.network(), crate::network::tests::fig1());
        assert_eq!(got.elements().len(), want.elements().len());
        for (a, b) in got.elements().iter().zip(want.elements()) {
            assert_eq!((&a.name, &a.in_arms, &a.out_arms), (&b.name, &b.in_arms, &b.out_arms));
            match (&a.kind, &b.kind) {
                (ElementKind::BeamSplitter { t, r }, ElementKind::BeamSplitter { t: t2, r: r2 }) => {
                    assert!((t - t2).abs() < 1e-15 && (r - r2).abs() < 1e-15);
                }
                (x, y) => assert_eq!(x, y),
            }
        }
        assert_eq!(got.stages(), want.stages());
    }

    #[test]
    fn fig1_annotations_pass_across_outer_transmissions() {
        for t in [0.3, 0.4, CANONICAL_T, 0.9] {
            all_pass(&run(&fig1_nested(t).unwrap()).unwrap());
        }
    }

    #[test]
    fn bad_outer_transmission() {
        assert!(fig1_nested(0.0).is_err());
        assert!(fig1_nested(1.0).is_err());
    }

    #[test]
    fn sec3_annotations_pass() {
        all_pass(&run(&sec3_probe(1e-3, None).unwrap()).unwrap());
        let r = run(&sec3_probe(1e-2, Some(1e-2)).unwrap()).unwrap();
        all_pass(&r);
        assert_eq!(r.probe("pF").unwrap().classification, "second order, negligible");
        assert_eq!(r.probe("pC").unwrap().classification, "first order");
    }

    #[test]
    fn sec4_annotations_pass() {
        let r = run(&sec4_double(1e-2, 1e-2).unwrap()).unwrap();
        all_pass(&r);
        assert!(r.joint_signal.is_some());
        assert!(sec4_double(0.0, 1e-2).is_err());
    }

    #[test]
    fn sec5_phase_restores_and_detunes() {
        all_pass(&run(&sec5_phase(0.01, true).unwrap()).unwrap());
        all_pass(&run(&sec5_phase(0.01, false).unwrap()).unwrap());
        let base = run(&sec5_phase(0.0, false).unwrap()).unwrap();
        all_pass(&base);
        let d = base.detectors.iter().find(|(n, _)| n == "D").unwrap().1;
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn phase_elsewhere_changes_nothing() {
        for arm in ["A", "B", "F", "G"] {
            let r = run(&sec5_phase_on(arm, 0.05).unwrap()).unwrap();
            all_pass(&r);
            assert_eq!(r.notes.iter().any(|n| n.starts_with("blind spot")), arm == "A");
        }
    }

    #[test]
    fn transversal_scenarios_pass() {
        all_pass(&run(&sec5_transversal(0.01, 1.0, true).unwrap()).unwrap());
        all_pass(&run(&sec5_transversal(0.01, 1.0, false).unwrap()).unwrap());
        for arm in ["A", "C", "E"] {
            all_pass(&run(&sec5_transversal_on(arm, 0.01, 1.0).unwrap()).unwrap());
        }
        assert!(sec5_transversal(0.2, 1.0, false).is_err());
    }

    #[test]
    fn null_postselection_is_a_status() {
        let n = nested_network(CANONICAL_T).unwrap().block_arm("A").unwrap();
        let pre = Preselection::source(&n, "S").unwrap();
        let post = Postselection::detector(&n, "D").unwrap();
        // nothing reaches D once A is blocked
        let r = run(&custom(n, pre, post).unwrap()).unwrap();
        assert_eq!(r.status, Status::NullPostselection);
        assert!(r.annotations.iter().all(|a| !a.pass));
    }

    #[test]
    fn reports_are_deterministic() {
        let a = run(&sec3_probe(1e-2, Some(1e-2)).unwrap()).unwrap().to_json();
        let b = run(&sec3_probe(1e-2, Some(1e-2)).unwrap()).unwrap().to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_rows_are_sorted() {
        let rows = sweep(&sec3_probe(1e-2, Some(1e-2)).unwrap(), &DEFAULT_GRID).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].eps, 1e-4);
        assert_eq!(rows[0].arm, "C");
        assert_eq!(rows[1].arm, "F");
        let f = rows.iter().find(|r| r.arm == "F").unwrap();
        assert!((f.order.unwrap() - 2.0).abs() < ORDER_TOL);
    }

    #[test]
    fn annotations_must_reference_the_network() {
        let mut s = fig1_nested(CANONICAL_T).unwrap();
        s.annotations.push(Annotation::new(
            "bogus",
            Check::WeakValue { stage: "L3".into(), arm: "Z".into(), value: Amplitude::new(0.0, 0.0) },
        ));
        assert_eq!(s.validate(), Err(Error::UnknownArm("Z".into())));
    }
}
