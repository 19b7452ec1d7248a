//! Forward and backward evolving states, weak values, and where the particle
//! was.
//!
//! The backward state is kept as an ordinary ket, `U†|post⟩` pulled back to
//! the stage, so a weak value is `⟨backward|O|forward⟩ / ⟨backward|forward⟩`.

use std::fmt;

use crate::error::{Error, Result};
use crate::network::{compile, Network, StagePlan};
use crate::statespace::{apply, inner_product, projector, Amplitude, Basis, Operator, PureState, TOLERANCE};

/// Below this `|⟨Φ|Ψ⟩|` the pre/post pair is treated as never co-occurring.
pub const NULL_POSTSELECTION: f64 = 1e-10;

/// Relative amplitude cutoff for the overlap criterion.
pub const PRESENCE_ETA: f64 = 1e-6;

fn check_normalized(pairs: &[(String, Amplitude)]) -> Result<()> {
    let norm: f64 = pairs.iter().map(|(_, a)| a.norm_sqr()).sum();
    if (norm - 1.0).abs() > TOLERANCE {
        return Err(Error::InvalidParameter(format!(
            "selection state must be normalized (norm^2 = {norm})"
        )));
    }
    for (i, (a, _)) in pairs.iter().enumerate() {
        if pairs[..i].iter().any(|(b, _)| a == b) {
            return Err(Error::InvalidParameter(format!("arm `{a}` listed twice")));
        }
    }
    Ok(())
}

fn embed(pairs: &[(String, Amplitude)], basis: &Basis) -> Result<PureState> {
    PureState::from_pairs(basis.clone(), pairs.iter().map(|(a, v)| (a.as_str(), *v)))
}

/// The initial state `|Ψ⟩`, given as amplitudes on source-cut arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Preselection {
    amps: Vec<(String, Amplitude)>,
}

impl Preselection {
    pub fn new(amps: Vec<(String, Amplitude)>) -> Result<Self> {
        check_normalized(&amps)?;
        Ok(Preselection { amps })
    }

    /// A single photon entering on `arm`.
    pub fn arm(arm: &str) -> Self {
        Preselection {
            amps: vec![(arm.to_string(), Amplitude::new(1.0, 0.0))],
        }
    }

    /// A single photon emitted by source element `name`.
    pub fn source(network: &Network, name: &str) -> Result<Self> {
        Ok(Self::arm(network.source_arm(name)?))
    }

    pub fn amps(&self) -> &[(String, Amplitude)] {
        &self.amps
    }

    pub fn with_global_phase(&self, phi: f64) -> Self {
        let f = Amplitude::from_polar(1.0, phi);
        Preselection {
            amps: self.amps.iter().map(|(a, v)| (a.clone(), v * f)).collect(),
        }
    }

    pub fn state_on(&self, basis: &Basis) -> Result<PureState> {
        embed(&self.amps, basis)
    }
}

/// The final state `⟨Φ|`, given as amplitudes on detector-cut arms.
#[derive(Debug, Clone, PartialEq)]
pub struct Postselection {
    label: String,
    amps: Vec<(String, Amplitude)>,
}

impl Postselection {
    pub fn new(label: &str, amps: Vec<(String, Amplitude)>) -> Result<Self> {
        check_normalized(&amps)?;
        Ok(Postselection {
            label: label.to_string(),
            amps,
        })
    }

    /// Post-selection on a click of detector `name`.
    pub fn detector(network: &Network, name: &str) -> Result<Self> {
        let arm = network.detector_arm(name)?;
        Ok(Postselection {
            label: name.to_string(),
            amps: vec![(arm.to_string(), Amplitude::new(1.0, 0.0))],
        })
    }

    /// Detector name, or a free-form label for a general outcome state.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn amps(&self) -> &[(String, Amplitude)] {
        &self.amps
    }

    pub fn with_global_phase(&self, phi: f64) -> Self {
        let f = Amplitude::from_polar(1.0, phi);
        Postselection {
            label: self.label.clone(),
            amps: self.amps.iter().map(|(a, v)| (a.clone(), v * f)).collect(),
        }
    }

    pub fn state_on(&self, basis: &Basis) -> Result<PureState> {
        embed(&self.amps, basis)
    }
}

/// `⟨Φ| |Ψ⟩` at one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStateVector {
    pub stage: String,
    pub forward: PureState,
    pub backward: PureState,
    pub overlap: Amplitude,
}

impl TwoStateVector {
    pub fn at(plan: &StagePlan, pre: &Preselection, post: &Postselection, stage: &str) -> Result<Self> {
        let k = plan.stage_index(stage)?;
        let forward = plan.propagate(&pre.state_on(&plan.source_cut().basis)?, k)?;
        let backward = plan.pull_back(&post.state_on(&plan.detector_cut().basis)?, k)?;
        let overlap = inner_product(&backward, &forward)?;
        Ok(TwoStateVector {
            stage: stage.to_string(),
            forward,
            backward,
            overlap,
        })
    }

    /// Two-state vectors at every cut, in plan order.
    pub fn all(plan: &StagePlan, pre: &Preselection, post: &Postselection) -> Result<Vec<Self>> {
        let n = plan.cuts().len();
        let mut forwards = Vec::with_capacity(n);
        let mut f = pre.state_on(&plan.source_cut().basis)?;
        forwards.push(f.clone());
        for op in plan.ops() {
            f = apply(op, &f)?;
            forwards.push(f.clone());
        }
        let mut backwards = vec![post.state_on(&plan.detector_cut().basis)?];
        for op in plan.ops().iter().rev() {
            let b = apply(&op.adjoint(), backwards.last().expect("non-empty"))?;
            backwards.push(b);
        }
        backwards.reverse();
        plan.cuts()
            .iter()
            .zip(forwards.into_iter().zip(backwards))
            .map(|(cut, (forward, backward))| {
                let overlap = inner_product(&backward, &forward)?;
                Ok(TwoStateVector {
                    stage: cut.name.clone(),
                    forward,
                    backward,
                    overlap,
                })
            })
            .collect()
    }

    pub fn basis(&self) -> &Basis {
        self.forward.basis()
    }

    pub fn check_postselection(&self, threshold: f64) -> Result<()> {
        let m = self.overlap.norm();
        if m < threshold {
            return Err(Error::NullPostselection(m));
        }
        Ok(())
    }

    /// `⟨Φ|O|Ψ⟩ / ⟨Φ|Ψ⟩` for an observable on this stage's basis.
    pub fn weak_value(&self, op: &Operator) -> Result<Amplitude> {
        self.check_postselection(NULL_POSTSELECTION)?;
        if !op.is_square() || op.cols() != self.basis() {
            return Err(Error::IncompatibleBases);
        }
        Ok(inner_product(&self.backward, &apply(op, &self.forward)?)? / self.overlap)
    }

    /// Weak value of the projector onto each arm of the cut, in basis order.
    pub fn path_weak_values(&self) -> Result<Vec<(String, Amplitude)>> {
        self.check_postselection(NULL_POSTSELECTION)?;
        Ok(self
            .forward
            .iter()
            .zip(self.backward.amps())
            .map(|((arm, f), b)| (arm.to_string(), b.conj() * f / self.overlap))
            .collect())
    }

    pub fn path_weak_value(&self, arm: &str) -> Result<Amplitude> {
        self.weak_value(&projector(&[arm], self.basis())?)
    }
}

pub fn forward_state(plan: &StagePlan, pre: &Preselection, stage: &str) -> Result<PureState> {
    let k = plan.stage_index(stage)?;
    plan.propagate(&pre.state_on(&plan.source_cut().basis)?, k)
}

pub fn backward_state(plan: &StagePlan, post: &Postselection, stage: &str) -> Result<PureState> {
    let k = plan.stage_index(stage)?;
    plan.pull_back(&post.state_on(&plan.detector_cut().basis)?, k)
}

pub fn weak_value(
    plan: &StagePlan,
    pre: &Preselection,
    post: &Postselection,
    op: &Operator,
    stage: &str,
) -> Result<Amplitude> {
    TwoStateVector::at(plan, pre, post, stage)?.weak_value(op)
}

pub fn path_weak_values(
    plan: &StagePlan,
    pre: &Preselection,
    post: &Postselection,
    stage: &str,
) -> Result<Vec<(String, Amplitude)>> {
    TwoStateVector::at(plan, pre, post, stage)?.path_weak_values()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Presence {
    Present,
    Secondary,
    Absent,
}

impl Presence {
    pub fn as_str(&self) -> &'static str {
        match self {
            Presence::Present => "present",
            Presence::Secondary => "secondary",
            Presence::Absent => "absent",
        }
    }
}

impl fmt::Display for Presence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresenceEntry {
    pub arm: String,
    pub verdict: Presence,
    /// `|forward amplitude|` relative to the largest at the cut.
    pub forward_rel: f64,
    pub backward_rel: f64,
    /// Largest change of a present-arm weak value when this arm is blocked.
    /// `None` when the arm was not probed (present arms, detector arms).
    /// Infinite when blocking makes the post-selection null.
    pub block_effect: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresenceVerdict {
    pub stage: String,
    pub eta: f64,
    pub entries: Vec<PresenceEntry>,
}

impl PresenceVerdict {
    pub fn get(&self, arm: &str) -> Option<Presence> {
        self.entries.iter().find(|e| e.arm == arm).map(|e| e.verdict)
    }

    pub fn entry(&self, arm: &str) -> Option<&PresenceEntry> {
        self.entries.iter().find(|e| e.arm == arm)
    }
}

fn relative(amps: &[Amplitude]) -> Vec<f64> {
    let max = amps.iter().map(|a| a.norm()).fold(0.0, f64::max);
    amps.iter()
        .map(|a| if max > 0.0 { a.norm() / max } else { 0.0 })
        .collect()
}

/// Arms, per stage, where forward and backward waves overlap.
fn overlapping_arms(tsvs: &[TwoStateVector], eta: f64) -> Vec<(String, Vec<usize>)> {
    tsvs.iter()
        .map(|t| {
            let f = relative(t.forward.amps());
            let b = relative(t.backward.amps());
            let idx = (0..f.len()).filter(|&i| f[i] > eta && b[i] > eta).collect();
            (t.stage.clone(), idx)
        })
        .collect()
}

/// Weak values of every present (stage, arm) pair.
fn present_weak_values(
    network: &Network,
    pre: &Preselection,
    post: &Postselection,
    eta: f64,
) -> Result<Vec<(String, String, Amplitude)>> {
    let plan = compile(network)?;
    let tsvs = TwoStateVector::all(&plan, pre, post)?;
    let mut out = Vec::new();
    for (t, (_, idx)) in tsvs.iter().zip(overlapping_arms(&tsvs, eta)) {
        let wv = t.path_weak_values()?;
        for i in idx {
            out.push((t.stage.clone(), wv[i].0.clone(), wv[i].1));
        }
    }
    Ok(out)
}

/// Classify every arm at `stage`.
///
/// An arm is `present` when both the forward and the backward amplitude
/// exceed `eta` relative to the largest amplitude of each at the cut. Other
/// arms are `secondary` when blocking them moves some present-arm weak value
/// (at any stage) by more than `eta`, and `absent` otherwise. Detector arms
/// cannot be blocked and are never `secondary`.
pub fn presence_map(
    network: &Network,
    pre: &Preselection,
    post: &Postselection,
    stage: &str,
    eta: f64,
) -> Result<PresenceVerdict> {
    if eta.is_nan() || eta <= 0.0 {
        return Err(Error::InvalidParameter(format!("presence tolerance must be positive, got {eta}")));
    }
    let plan = compile(network)?;
    let tsv = TwoStateVector::at(&plan, pre, post, stage)?;
    tsv.check_postselection(NULL_POSTSELECTION)?;
    let reference = present_weak_values(network, pre, post, eta)?;

    let f = relative(tsv.forward.amps());
    let b = relative(tsv.backward.amps());
    let mut entries = Vec::with_capacity(f.len());
    for (i, arm) in tsv.basis().names().enumerate() {
        let (verdict, block_effect) = if f[i] > eta && b[i] > eta {
            (Presence::Present, None)
        } else {
            let effect = block_effect(network, arm, pre, post, &reference)?;
            let v = if effect > eta {
                Presence::Secondary
            } else {
                Presence::Absent
            };
            (v, Some(effect))
        };
        entries.push(PresenceEntry {
            arm: arm.to_string(),
            verdict,
            forward_rel: f[i],
            backward_rel: b[i],
            block_effect,
        });
    }
    Ok(PresenceVerdict {
        stage: stage.to_string(),
        eta,
        entries,
    })
}

fn block_effect(
    network: &Network,
    arm: &str,
    pre: &Preselection,
    post: &Postselection,
    reference: &[(String, String, Amplitude)],
) -> Result<f64> {
    let blocked = if network.is_detector_arm(arm) {
        network.absorb_detector_arm(arm)?
    } else {
        network.block_arm(arm)?
    };
    let plan = compile(&blocked)?;
    let tsvs = TwoStateVector::all(&plan, pre, post)?;
    let mut worst = 0.0f64;
    for (stage, a, w) in reference {
        let t = tsvs
            .iter()
            .find(|t| &t.stage == stage)
            .ok_or_else(|| Error::UnknownStage(stage.clone()))?;
        match t.path_weak_value(a) {
            Ok(v) => worst = worst.max((v - w).norm()),
            Err(Error::NullPostselection(_) | Error::UnknownArm(_)) => return Ok(f64::INFINITY),
            Err(e) => return Err(e),
        }
    }
    Ok(worst)
}
