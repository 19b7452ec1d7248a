//! Weak-measurement probes and exact joint evolution of particle and pointers.
//!
//! A probe couples a pointer register to one arm. A qubit pointer is rotated
//! `|0⟩ → cos ε|0⟩ + sin ε|1⟩` when the particle passes; a Gaussian pointer
//! has its center moved by δ. All `SelfShift` probes act on one shared
//! register, the transverse profile of the particle itself, which is also
//! moved by `TransversalShifter` elements.
//!
//! Gaussian registers are tracked by their centers only and inner products
//! use the closed-form overlap, so a joint state is a sparse superposition of
//! (arm, pointer configuration) terms that are not necessarily orthogonal.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};
use crate::network::{Element, ElementKind, Network};
use crate::statespace::{
    gaussian_overlap_excess, gaussian_position_moment, overlap_unchecked, Amplitude, I, ONE, ZERO,
};
use crate::tsvf::{Postselection, Preselection, NULL_POSTSELECTION};

/// Bound on the standard error of the fitted log-log slope.
pub const ORDER_RESIDUAL_BOUND: f64 = 0.02;

pub const DEFAULT_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Magnitudes below this count as an exact zero trace.
pub const ZERO_TRACE: f64 = 1e-14;

/// Post-selection probabilities below this are treated as never happening.
pub const NULL_PROBABILITY: f64 = 1e-20;

/// Width of the transverse register when the network shifts the beam but no
/// `SelfShift` probe fixes σ.
pub const DEFAULT_TRANSVERSE_SIGMA: f64 = 1.0;

/// Name of the shared register of the particle's own transverse profile.
pub const TRANSVERSE: &str = "transverse";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointerKind {
    Qubit { epsilon: f64 },
    Gaussian { delta: f64, sigma: f64 },
    SelfShift { delta: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pointer {
    pub id: String,
    pub kind: PointerKind,
}

impl Pointer {
    pub fn qubit(id: &str, epsilon: f64) -> Self {
        Pointer {
            id: id.to_string(),
            kind: PointerKind::Qubit { epsilon },
        }
    }

    pub fn gaussian(id: &str, delta: f64, sigma: f64) -> Self {
        Pointer {
            id: id.to_string(),
            kind: PointerKind::Gaussian { delta, sigma },
        }
    }

    pub fn self_shift(id: &str, delta: f64, sigma: f64) -> Self {
        Pointer {
            id: id.to_string(),
            kind: PointerKind::SelfShift { delta, sigma },
        }
    }

    /// ε for qubits, δ otherwise.
    pub fn strength(&self) -> f64 {
        match self.kind {
            PointerKind::Qubit { epsilon } => epsilon,
            PointerKind::Gaussian { delta, .. } | PointerKind::SelfShift { delta, .. } => delta,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            PointerKind::Qubit { .. } => "qubit",
            PointerKind::Gaussian { .. } => "gaussian",
            PointerKind::SelfShift { .. } => "self-shift",
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("pointer `{}`: {m}", self.id)));
        if self.id.is_empty() {
            return Err(Error::InvalidParameter("pointer without an id".into()));
        }
        match self.kind {
            PointerKind::Qubit { epsilon } => {
                if !(0.0..std::f64::consts::FRAC_PI_2).contains(&epsilon) {
                    return bad(format!("qubit strength must lie in [0, π/2), got {epsilon}"));
                }
            }
            PointerKind::Gaussian { delta, sigma } | PointerKind::SelfShift { delta, sigma } => {
                if !delta.is_finite() {
                    return bad(format!("shift must be finite, got {delta}"));
                }
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeCoupling {
    pub arm: String,
    pub pointer: Pointer,
}

impl ProbeCoupling {
    pub fn new(arm: &str, pointer: Pointer) -> Self {
        ProbeCoupling {
            arm: arm.to_string(),
            pointer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegisterKind {
    Qubit,
    Gaussian { sigma: f64 },
}

/// One pointer degree of freedom. Qubit and external Gaussian pointers own a
/// register each; every `SelfShift` probe shares the transverse one.
#[derive(Debug, Clone, PartialEq)]
pub struct Register {
    pub name: String,
    pub kind: RegisterKind,
    pub pointers: Vec<String>,
}

/// Value of one register in a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Level(u8),
    Center(OrderedFloat<f64>),
}

/// Register values, in register order.
pub type Config = Vec<Slot>;

fn initial_config(regs: &[Register]) -> Config {
    regs.iter()
        .map(|r| match r.kind {
            RegisterKind::Qubit => Slot::Level(0),
            RegisterKind::Gaussian { .. } => Slot::Center(OrderedFloat(0.0)),
        })
        .collect()
}

fn slot_overlap(kind: RegisterKind, a: Slot, b: Slot) -> f64 {
    match (kind, a, b) {
        (RegisterKind::Qubit, Slot::Level(x), Slot::Level(y)) => f64::from(u8::from(x == y)),
        (RegisterKind::Gaussian { sigma }, Slot::Center(x), Slot::Center(y)) => overlap_unchecked(x.0, y.0, sigma),
        _ => unreachable!("slot kind matches its register"),
    }
}

/// `⟨a|b⟩` for two pointer configurations, skipping register `skip`.
fn gram(regs: &[Register], a: &[Slot], b: &[Slot], skip: Option<usize>) -> f64 {
    let mut g = 1.0;
    for (i, r) in regs.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        g *= slot_overlap(r.kind, a[i], b[i]);
        if g == 0.0 {
            break;
        }
    }
    g
}

fn add(map: &mut BTreeMap<(String, Config), Amplitude>, arm: &str, cfg: Config, v: Amplitude) {
    *map.entry((arm.to_string(), cfg)).or_insert(ZERO) += v;
}

fn prune<K: Ord>(map: &mut BTreeMap<K, Amplitude>) {
    map.retain(|_, v| *v != ZERO);
}

/// A network with probes attached to some of its arms.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentedNetwork {
    network: Network,
    couplings: Vec<ProbeCoupling>,
    transverse_sigma: Option<f64>,
    registers: Vec<Register>,
    slots: Vec<usize>,
    transverse: Option<usize>,
}

impl From<Network> for InstrumentedNetwork {
    fn from(network: Network) -> Self {
        let mut n = InstrumentedNetwork {
            network,
            couplings: Vec::new(),
            transverse_sigma: None,
            registers: Vec::new(),
            slots: Vec::new(),
            transverse: None,
        };
        n.layout();
        n
    }
}

impl InstrumentedNetwork {
    pub fn new(network: Network) -> Self {
        network.into()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn couplings(&self) -> &[ProbeCoupling] {
        &self.couplings
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn coupling(&self, id: &str) -> Result<&ProbeCoupling> {
        self.couplings
            .iter()
            .find(|c| c.pointer.id == id)
            .ok_or_else(|| Error::UnknownPointer(id.to_string()))
    }

    /// The first probe attached to `arm`, if any.
    pub fn probe_on(&self, arm: &str) -> Option<&ProbeCoupling> {
        self.couplings.iter().find(|c| c.arm == arm)
    }

    /// Width of the transverse register, fixed by `SelfShift` probes or set
    /// explicitly.
    pub fn transverse_sigma(&self) -> Option<f64> {
        self.transverse_sigma
    }

    pub fn with_transverse_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        if let Some(s) = self.transverse_sigma {
            if s != sigma {
                return Err(Error::InvalidParameter(format!(
                    "transverse sigma already fixed at {s}, got {sigma}"
                )));
            }
        }
        self.transverse_sigma = Some(sigma);
        self.layout();
        Ok(self)
    }

    pub fn with_probe(mut self, c: ProbeCoupling) -> Result<Self> {
        c.pointer.validate()?;
        if !self.network.has_arm(&c.arm) {
            return Err(Error::UnknownArm(c.arm.clone()));
        }
        if self.couplings.iter().any(|x| x.pointer.id == c.pointer.id) {
            return Err(Error::DuplicatePointer(c.pointer.id.clone()));
        }
        if let PointerKind::SelfShift { sigma, .. } = c.pointer.kind {
            match self.transverse_sigma {
                Some(s) if s != sigma => {
                    return Err(Error::InvalidParameter(format!(
                        "pointer `{}`: transverse sigma already fixed at {s}, got {sigma}",
                        c.pointer.id
                    )))
                }
                _ => self.transverse_sigma = Some(sigma),
            }
        }
        self.couplings.push(c);
        self.layout();
        Ok(self)
    }

    /// The same probes with every strength (ε or δ) set to `strength`.
    pub fn with_uniform_strength(&self, strength: f64) -> Result<Self> {
        self.with_strengths(&vec![strength; self.couplings.len()])
    }

    /// The same probes with new strengths, in attachment order.
    pub fn with_strengths(&self, strengths: &[f64]) -> Result<Self> {
        if strengths.len() != self.couplings.len() {
            return Err(Error::ProbeCount(strengths.len()));
        }
        let mut n = InstrumentedNetwork::new(self.network.clone());
        if let Some(s) = self.transverse_sigma {
            n = n.with_transverse_sigma(s)?;
        }
        for (c, &v) in self.couplings.iter().zip(strengths) {
            let kind = match c.pointer.kind {
                PointerKind::Qubit { .. } => PointerKind::Qubit { epsilon: v },
                PointerKind::Gaussian { sigma, .. } => PointerKind::Gaussian { delta: v, sigma },
                PointerKind::SelfShift { sigma, .. } => PointerKind::SelfShift { delta: v, sigma },
            };
            let pointer = Pointer {
                id: c.pointer.id.clone(),
                kind,
            };
            n = n.with_probe(ProbeCoupling::new(&c.arm, pointer))?;
        }
        Ok(n)
    }

    fn layout(&mut self) {
        let mut registers: Vec<Register> = Vec::new();
        let mut slots = Vec::with_capacity(self.couplings.len());
        let mut transverse = None;
        for c in &self.couplings {
            let id = c.pointer.id.clone();
            match c.pointer.kind {
                PointerKind::Qubit { .. } | PointerKind::Gaussian { .. } => {
                    let kind = match c.pointer.kind {
                        PointerKind::Gaussian { sigma, .. } => RegisterKind::Gaussian { sigma },
                        _ => RegisterKind::Qubit,
                    };
                    slots.push(registers.len());
                    registers.push(Register {
                        name: id.clone(),
                        kind,
                        pointers: vec![id],
                    });
                }
                PointerKind::SelfShift { sigma, .. } => {
                    let r = *transverse.get_or_insert_with(|| {
                        registers.push(Register {
                            name: TRANSVERSE.to_string(),
                            kind: RegisterKind::Gaussian { sigma },
                            pointers: Vec::new(),
                        });
                        registers.len() - 1
                    });
                    registers[r].pointers.push(id);
                    slots.push(r);
                }
            }
        }
        let shifts = self
            .network
            .elements()
            .iter()
            .any(|e| matches!(e.kind, ElementKind::TransversalShifter { .. }));
        if transverse.is_none() && shifts {
            transverse = Some(registers.len());
            registers.push(Register {
                name: TRANSVERSE.to_string(),
                kind: RegisterKind::Gaussian {
                    sigma: self.transverse_sigma.unwrap_or(DEFAULT_TRANSVERSE_SIGMA),
                },
                pointers: Vec::new(),
            });
        }
        self.registers = registers;
        self.slots = slots;
        self.transverse = transverse;
    }

    fn step(&self, map: &BTreeMap<(String, Config), Amplitude>, e: &Element, adjoint: bool) -> BTreeMap<(String, Config), Amplitude> {
        let (transfer, delta): (Vec<(usize, usize, Amplitude)>, f64) = match e.kind {
            ElementKind::BeamSplitter { t, r } => {
                let (t, ir) = (Amplitude::new(t, 0.0), I * r);
                (vec![(0, 0, t), (0, 1, ir), (1, 0, ir), (1, 1, t)], 0.0)
            }
            ElementKind::PhaseShifter { phi } => (vec![(0, 0, Amplitude::from_polar(1.0, phi))], 0.0),
            ElementKind::TransversalShifter { delta } => (vec![(0, 0, ONE)], delta),
            ElementKind::Mirror => (vec![(0, 0, ONE)], 0.0),
            ElementKind::Block => {
                let mut out = map.clone();
                if !adjoint {
                    out.retain(|(arm, _), _| *arm != e.in_arms[0]);
                }
                return out;
            }
            ElementKind::Source | ElementKind::Detector => return map.clone(),
        };
        let shifted = |cfg: &Config, d: f64| -> Config {
            let mut cfg = cfg.clone();
            if d != 0.0 {
                let r = self.transverse.expect("shifting networks carry a transverse register");
                if let Slot::Center(c) = cfg[r] {
                    cfg[r] = Slot::Center(OrderedFloat(c.0 + d));
                }
            }
            cfg
        };
        let (from, to) = if adjoint {
            (&e.out_arms, &e.in_arms)
        } else {
            (&e.in_arms, &e.out_arms)
        };
        let mut out = BTreeMap::new();
        for ((arm, cfg), a) in map {
            let Some(k) = from.iter().position(|x| x == arm) else {
                add(&mut out, arm, cfg.clone(), *a);
                continue;
            };
            for &(i, j, c) in &transfer {
                if adjoint && j == k {
                    add(&mut out, &to[i], shifted(cfg, -delta), c.conj() * a);
                } else if !adjoint && i == k {
                    add(&mut out, &to[j], shifted(cfg, delta), c * a);
                }
            }
        }
        prune(&mut out);
        out
    }

    fn couple(&self, map: &BTreeMap<(String, Config), Amplitude>, k: usize, adjoint: bool) -> BTreeMap<(String, Config), Amplitude> {
        let c = &self.couplings[k];
        let r = self.slots[k];
        let mut out = BTreeMap::new();
        for ((arm, cfg), a) in map {
            if *arm != c.arm {
                add(&mut out, arm, cfg.clone(), *a);
                continue;
            }
            match (c.pointer.kind, cfg[r]) {
                (PointerKind::Qubit { epsilon }, Slot::Level(l)) => {
                    let (cs, sn) = (epsilon.cos(), epsilon.sin());
                    // columns of the rotation, or of its transpose
                    let sn = if adjoint { -sn } else { sn };
                    let column = if l == 0 { [(0, cs), (1, sn)] } else { [(0, -sn), (1, cs)] };
                    for (level, v) in column {
                        let mut next = cfg.clone();
                        next[r] = Slot::Level(level);
                        add(&mut out, arm, next, a * v);
                    }
                }
                (
                    PointerKind::Gaussian { delta, .. } | PointerKind::SelfShift { delta, .. },
                    Slot::Center(x),
                ) => {
                    let mut next = cfg.clone();
                    let d = if adjoint { -delta } else { delta };
                    next[r] = Slot::Center(OrderedFloat(x.0 + d));
                    add(&mut out, arm, next, *a);
                }
                _ => unreachable!("slot kind matches its pointer"),
            }
        }
        prune(&mut out);
        out
    }

    fn probes_after(&self, e: &Element) -> impl DoubleEndedIterator<Item = usize> + '_ {
        let outs = e.out_arms.clone();
        (0..self.couplings.len()).filter(move |&k| outs.contains(&self.couplings[k].arm))
    }

    fn joint(&self, amps: BTreeMap<(String, Config), Amplitude>) -> JointState {
        JointState {
            registers: self.registers.clone(),
            amps,
        }
    }
}

/// Attach a probe to an arm. Pointer ids must be fresh.
pub fn attach_probe(n: impl Into<InstrumentedNetwork>, c: ProbeCoupling) -> Result<InstrumentedNetwork> {
    n.into().with_probe(c)
}

/// Joint amplitudes over (arm, pointer configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    registers: Vec<Register>,
    amps: BTreeMap<(String, Config), Amplitude>,
}

impl JointState {
    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Slot], Amplitude)> {
        self.amps.iter().map(|((a, c), v)| (a.as_str(), c.as_slice(), *v))
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    /// Arms carrying a nonzero term, sorted.
    pub fn arms(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.amps.keys().map(|(a, _)| a.as_str()).collect();
        v.dedup();
        v
    }

    pub fn amplitude(&self, arm: &str, cfg: &[Slot]) -> Amplitude {
        self.amps.get(&(arm.to_string(), cfg.to_vec())).copied().unwrap_or(ZERO)
    }

    /// Squared norm of the component on `arm`.
    pub fn arm_probability(&self, arm: &str) -> f64 {
        self.arm_inner(self, arm).re
    }

    pub fn norm_sqr(&self) -> f64 {
        self.arms().iter().map(|a| self.arm_probability(a)).sum()
    }

    fn arm_terms<'a>(&'a self, arm: &'a str) -> impl Iterator<Item = (&'a Config, Amplitude)> + 'a {
        self.amps
            .range((arm.to_string(), Vec::new())..)
            .take_while(move |((a, _), _)| a == arm)
            .map(|((_, c), v)| (c, *v))
    }

    /// `⟨self|P_arm|other⟩`.
    fn arm_inner(&self, other: &JointState, arm: &str) -> Amplitude {
        let mut s = ZERO;
        for (ca, a) in self.arm_terms(arm) {
            for (cb, b) in other.arm_terms(arm) {
                let g = gram(&self.registers, ca, cb, None);
                if g != 0.0 {
                    s += a.conj() * b * g;
                }
            }
        }
        s
    }

    pub fn inner(&self, other: &JointState) -> Amplitude {
        let mut arms = self.arms();
        arms.retain(|a| other.amps.keys().any(|(b, _)| b == a));
        arms.iter().map(|a| self.arm_inner(other, a)).sum()
    }
}

/// Pointer-register state left after post-selecting the particle.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerState {
    registers: Vec<Register>,
    amps: BTreeMap<Config, Amplitude>,
}

impl PointerState {
    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[Slot], Amplitude)> {
        self.amps.iter().map(|(c, v)| (c.as_slice(), *v))
    }

    pub fn amplitude(&self, cfg: &[Slot]) -> Amplitude {
        self.amps.get(cfg).copied().unwrap_or(ZERO)
    }

    /// Amplitude on a product of qubit levels. Every register must be a qubit.
    pub fn qubit_amplitude(&self, levels: &[u8]) -> Result<Amplitude> {
        if levels.len() != self.registers.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} levels, got {}",
                self.registers.len(),
                levels.len()
            )));
        }
        if let Some(r) = self.registers.iter().find(|r| r.kind != RegisterKind::Qubit) {
            return Err(Error::WrongPointerKind {
                id: r.name.clone(),
                message: "not a qubit register".into(),
            });
        }
        let cfg: Config = levels.iter().map(|&l| Slot::Level(l)).collect();
        Ok(self.amplitude(&cfg))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner(self).re
    }

    pub fn inner(&self, other: &PointerState) -> Amplitude {
        let mut s = ZERO;
        for (ca, a) in &self.amps {
            for (cb, b) in &other.amps {
                let g = gram(&self.registers, ca, cb, None);
                if g != 0.0 {
                    s += a.conj() * b * g;
                }
            }
        }
        s
    }

    fn normalized(mut self) -> Result<(PointerState, f64)> {
        let p = self.norm_sqr();
        if p.is_nan() || p < NULL_PROBABILITY {
            return Err(Error::NullPostselection(p.max(0.0).sqrt()));
        }
        let k = 1.0 / p.sqrt();
        for v in self.amps.values_mut() {
            *v *= k;
        }
        Ok((self, p))
    }

    fn register_named(&self, id: &str) -> Result<usize> {
        self.registers
            .iter()
            .position(|r| r.pointers.iter().any(|p| p == id))
            .ok_or_else(|| Error::UnknownPointer(id.to_string()))
    }

    /// `Σ conj(c_k) c_l ⟨k|l⟩_others · f(k_r, l_r)` over all term pairs.
    fn register_form(&self, r: usize, f: impl Fn(Slot, Slot) -> f64) -> Amplitude {
        let mut s = ZERO;
        for (ca, a) in &self.amps {
            for (cb, b) in &self.amps {
                let v = f(ca[r], cb[r]);
                if v == 0.0 {
                    continue;
                }
                let g = gram(&self.registers, ca, cb, Some(r));
                s += a.conj() * b * (g * v);
            }
        }
        s
    }
}

/// Forward joint state at `stage`: the preselected particle, with pointers in
/// their initial states, evolved through every element before the cut.
pub fn forward_joint(inst: &InstrumentedNetwork, pre: &Preselection, stage: &str) -> Result<JointState> {
    let n = &inst.network;
    let cut = n.cut(stage)?;
    let source = &n.cuts()[0].arms;
    let init = initial_config(&inst.registers);
    let mut map = BTreeMap::new();
    for (arm, a) in pre.amps() {
        if !source.contains(arm) {
            return Err(Error::UnknownArm(arm.clone()));
        }
        add(&mut map, arm, init.clone(), *a);
    }
    prune(&mut map);
    for (k, c) in inst.couplings.iter().enumerate() {
        if n.is_vacuum_arm(&c.arm) {
            map = inst.couple(&map, k, false);
        }
    }
    for &i in n.topological_order() {
        if !cut.before.contains(&i) {
            continue;
        }
        let e = &n.elements()[i];
        map = inst.step(&map, e, false);
        for k in inst.probes_after(e) {
            map = inst.couple(&map, k, false);
        }
    }
    map.retain(|(arm, _), _| cut.arms.contains(arm));
    Ok(inst.joint(map))
}

/// Exact joint state at the detector cut. Amplitude sent into blocks is gone.
pub fn evolve_joint(inst: &InstrumentedNetwork, pre: &Preselection) -> Result<JointState> {
    let last = &inst.network.cuts().last().expect("networks have a cut").name;
    forward_joint(inst, pre, last)
}

/// Pointer state used to condition instrumented weak values. Gaussian
/// registers are always read out at their initial center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Readout {
    /// Every qubit found in `|0⟩`.
    Initial,
    /// Every qubit found in `(|0⟩ + |1⟩)/√2`.
    #[default]
    Plus,
    /// Every qubit found in `(|0⟩ + i|1⟩)/√2`.
    PlusI,
}

impl Readout {
    pub fn as_str(self) -> &'static str {
        match self {
            Readout::Initial => "initial",
            Readout::Plus => "plus",
            Readout::PlusI => "plus-i",
        }
    }

    fn terms(self, regs: &[Register]) -> Vec<(Config, Amplitude)> {
        let mut terms = vec![(Config::new(), ONE)];
        for r in regs {
            let options: Vec<(Slot, Amplitude)> = match (r.kind, self) {
                (RegisterKind::Gaussian { .. }, _) => vec![(Slot::Center(OrderedFloat(0.0)), ONE)],
                (RegisterKind::Qubit, Readout::Initial) => vec![(Slot::Level(0), ONE)],
                (RegisterKind::Qubit, Readout::Plus) => vec![
                    (Slot::Level(0), Amplitude::new(FRAC_1_SQRT_2, 0.0)),
                    (Slot::Level(1), Amplitude::new(FRAC_1_SQRT_2, 0.0)),
                ],
                (RegisterKind::Qubit, Readout::PlusI) => vec![
                    (Slot::Level(0), Amplitude::new(FRAC_1_SQRT_2, 0.0)),
                    (Slot::Level(1), Amplitude::new(0.0, FRAC_1_SQRT_2)),
                ],
            };
            terms = terms
                .into_iter()
                .flat_map(|(cfg, a)| {
                    options.iter().map(move |(s, b)| {
                        let mut c = cfg.clone();
                        c.push(*s);
                        (c, a * b)
                    })
                })
                .collect();
        }
        terms
    }
}

/// Backward joint state at `stage`: the post-selected outcome together with
/// the pointer readout, pulled back through every element after the cut.
pub fn backward_joint(
    inst: &InstrumentedNetwork,
    post: &Postselection,
    readout: Readout,
    stage: &str,
) -> Result<JointState> {
    let n = &inst.network;
    let cut = n.cut(stage)?;
    let last = &n.cuts().last().expect("networks have a cut").arms;
    let terms = readout.terms(&inst.registers);
    let mut map = BTreeMap::new();
    for (arm, a) in post.amps() {
        if !last.contains(arm) {
            return Err(Error::UnknownArm(arm.clone()));
        }
        for (cfg, r) in &terms {
            add(&mut map, arm, cfg.clone(), a * r);
        }
    }
    prune(&mut map);
    for &i in n.topological_order().iter().rev() {
        let e = &n.elements()[i];
        if e.kind.is_terminal() || cut.before.contains(&i) {
            continue;
        }
        for k in inst.probes_after(e).rev() {
            map = inst.couple(&map, k, true);
        }
        map = inst.step(&map, e, true);
    }
    Ok(inst.joint(map))
}

/// Two-state vector of the instrumented network at one stage, with the
/// pointers conditioned on a readout.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTwoStateVector {
    pub stage: String,
    pub arms: Vec<String>,
    pub forward: JointState,
    pub backward: JointState,
    pub overlap: Amplitude,
}

impl JointTwoStateVector {
    pub fn at(
        inst: &InstrumentedNetwork,
        pre: &Preselection,
        post: &Postselection,
        readout: Readout,
        stage: &str,
    ) -> Result<Self> {
        let forward = forward_joint(inst, pre, stage)?;
        let backward = backward_joint(inst, post, readout, stage)?;
        let overlap = backward.inner(&forward);
        Ok(JointTwoStateVector {
            stage: stage.to_string(),
            arms: inst.network.cut(stage)?.arms.clone(),
            forward,
            backward,
            overlap,
        })
    }

    /// Every cut of the underlying network, in order.
    pub fn all(
        inst: &InstrumentedNetwork,
        pre: &Preselection,
        post: &Postselection,
        readout: Readout,
    ) -> Result<Vec<Self>> {
        inst.network
            .cuts()
            .iter()
            .map(|c| Self::at(inst, pre, post, readout, &c.name))
            .collect()
    }

    /// Weak value of each arm projector of the cut, in basis order.
    pub fn path_weak_values(&self) -> Result<Vec<(String, Amplitude)>> {
        let m = self.overlap.norm();
        if m < NULL_POSTSELECTION {
            return Err(Error::NullPostselection(m));
        }
        Ok(self
            .arms
            .iter()
            .map(|a| (a.clone(), self.backward.arm_inner(&self.forward, a) / self.overlap))
            .collect())
    }
}

fn project(js: &JointState, post: &Postselection) -> PointerState {
    let mut amps: BTreeMap<Config, Amplitude> = BTreeMap::new();
    for (arm, p) in post.amps() {
        for (cfg, v) in js.arm_terms(arm) {
            *amps.entry(cfg.clone()).or_insert(ZERO) += p.conj() * v;
        }
    }
    prune(&mut amps);
    PointerState {
        registers: js.registers.clone(),
        amps,
    }
}

/// Probability of the post-selected outcome, zero allowed.
pub fn outcome_probability(js: &JointState, post: &Postselection) -> f64 {
    project(js, post).norm_sqr()
}

/// Project the particle onto the post-selected outcome. Returns the
/// normalized pointer state and the probability of the outcome.
pub fn postselect(js: &JointState, post: &Postselection) -> Result<(PointerState, f64)> {
    project(js, post).normalized()
}

/// Distinguishability `sqrt(1 − F)` of the register holding pointer `id`
/// from its initial state, `F` being the fidelity of the reduced state.
pub fn trace_magnitude(ps: &PointerState, id: &str) -> Result<f64> {
    let r = ps.register_named(id)?;
    // 1 − F summed term by term, so a tiny trace is not lost to cancellation
    let deficit = match ps.registers[r].kind {
        RegisterKind::Qubit => ps.register_form(r, |a, b| {
            f64::from(u8::from(a == Slot::Level(1) && b == Slot::Level(1)))
        }),
        RegisterKind::Gaussian { sigma } => ps.register_form(r, |a, b| match (a, b) {
            (Slot::Center(x), Slot::Center(y)) => gaussian_overlap_excess(x.0, y.0, sigma),
            _ => unreachable!("gaussian slots"),
        }),
    };
    let norm = ps.norm_sqr();
    Ok((deficit.re / norm).clamp(0.0, 1.0).sqrt())
}

/// Expected coordinate of a Gaussian or transverse pointer.
pub fn pointer_mean(ps: &PointerState, id: &str) -> Result<f64> {
    let r = ps.register_named(id)?;
    let RegisterKind::Gaussian { sigma } = ps.registers[r].kind else {
        return Err(Error::WrongPointerKind {
            id: id.to_string(),
            message: "pointer mean needs a gaussian pointer".into(),
        });
    };
    let moment = ps.register_form(r, |a, b| match (a, b) {
        (Slot::Center(x), Slot::Center(y)) => gaussian_position_moment(x.0, y.0, sigma),
        _ => unreachable!("gaussian slots"),
    });
    Ok(moment.re / ps.norm_sqr())
}

/// Magnitude of the post-selected pointer amplitude on `|1⟩ ⊗ |1⟩` for a
/// network carrying exactly two qubit probes.
pub fn joint_flip_signal(inst: &InstrumentedNetwork, pre: &Preselection, post: &Postselection) -> Result<f64> {
    if inst.couplings.len() != 2 {
        return Err(Error::ProbeCount(inst.couplings.len()));
    }
    if let Some(c) = inst
        .couplings
        .iter()
        .find(|c| !matches!(c.pointer.kind, PointerKind::Qubit { .. }))
    {
        return Err(Error::WrongPointerKind {
            id: c.pointer.id.clone(),
            message: "joint flip signal needs qubit pointers".into(),
        });
    }
    let (ps, _) = postselect(&evolve_joint(inst, pre)?, post)?;
    Ok(ps.qubit_amplitude(&[1, 1])?.norm())
}

/// Squared norm reaching each detector, in element order.
pub fn detector_intensities(inst: &InstrumentedNetwork, pre: &Preselection) -> Result<Vec<(String, f64)>> {
    let js = evolve_joint(inst, pre)?;
    Ok(inst
        .network
        .detectors()
        .map(|d| (d.name.clone(), js.arm_probability(&d.in_arms[0])))
        .collect())
}

/// An instrumented network with its selections, as produced for one point of
/// a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub network: InstrumentedNetwork,
    pub pre: Preselection,
    pub post: Postselection,
}

impl Experiment {
    pub fn pointer_state(&self) -> Result<(PointerState, f64)> {
        postselect(&evolve_joint(&self.network, &self.pre)?, &self.post)
    }

    /// Trace magnitude of the probe on `arm`.
    pub fn trace(&self, arm: &str) -> Result<f64> {
        let probe = self
            .network
            .probe_on(arm)
            .ok_or_else(|| Error::UnknownPointer(format!("no probe on arm `{arm}`")))?;
        trace_magnitude(&self.pointer_state()?.0, &probe.pointer.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEstimate {
    pub arm: String,
    /// `(ε, magnitude)` in decreasing ε.
    pub samples: Vec<(f64, f64)>,
    /// Magnitude at the largest ε.
    pub magnitude: f64,
    /// Fitted slope; `None` when the fit residual is too large, infinite
    /// when every magnitude is an exact zero.
    pub order: Option<f64>,
    pub slope: f64,
    pub fit_residual: f64,
}

/// Least-squares slope of `ln(magnitude)` against `ln(ε)` and its standard
/// error.
pub fn fit_order(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let pts: Vec<(f64, f64)> = samples.iter().map(|(e, m)| (e.ln(), m.ln())).collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let residual = if n > 2.0 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, residual)
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 3 values, got {}",
            grid.len()
        )));
    }
    if let Some(e) = grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::InvalidParameter(format!("grid values must be positive, got {e}")));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// Fit the order in ε of the trace left on the probe at `arm`, building one
/// experiment per grid point.
pub fn estimate_order<F>(build: F, arm: &str, grid: &[f64]) -> Result<TraceEstimate>
where
    F: Fn(f64) -> Result<Experiment>,
{
    check_grid(grid)?;
    let samples = grid
        .iter()
        .map(|&eps| Ok((eps, build(eps)?.trace(arm)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(order_from_samples(arm, samples))
}

pub fn order_from_samples(arm: &str, mut samples: Vec<(f64, f64)>) -> TraceEstimate {
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let zeros = samples.iter().filter(|s| s.1 < ZERO_TRACE).count();
    let (slope, fit_residual, order) = if zeros == samples.len() {
        (f64::INFINITY, 0.0, Some(f64::INFINITY))
    } else if zeros > 0 {
        (f64::NAN, f64::INFINITY, None)
    } else {
        let (s, r) = fit_order(&samples);
        (s, r, (r < ORDER_RESIDUAL_BOUND).then_some(s))
    };
    TraceEstimate {
        arm: arm.to_string(),
        magnitude: samples[0].1,
        samples,
        order,
        slope,
        fit_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::tests::fig1;
    use crate::network::{compile, NetworkBuilder};
    use crate::tsvf::{forward_state, TwoStateVector};

    fn c(re: f64, im: f64) -> Amplitude {
        Amplitude::new(re, im)
    }

    fn selections(n: &Network) -> (Preselection, Postselection) {
        (
            Preselection::source(n, "S").unwrap(),
            Postselection::detector(n, "D").unwrap(),
        )
    }

    fn with(arm: &str, p: Pointer) -> InstrumentedNetwork {
        attach_probe(fig1(), ProbeCoupling::new(arm, p)).unwrap()
    }

    fn pointer_state(inst: &InstrumentedNetwork) -> PointerState {
        let (pre, post) = selections(inst.network());
        postselect(&evolve_joint(inst, &pre).unwrap(), &post).unwrap().0
    }

    #[test]
    fn zero_strength_probe_changes_nothing() {
        let n = fig1();
        let (pre, _) = selections(&n);
        let plan = compile(&n).unwrap();
        let plain = forward_state(&plan, &pre, "L5").unwrap();
        let js = evolve_joint(&with("C", Pointer::qubit("p", 0.0)), &pre).unwrap();
        for (arm, a) in plain.iter() {
            assert!((js.amplitude(arm, &[Slot::Level(0)]) - a).norm() < 1e-15, "{arm}");
        }
        assert!((js.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn no_probes_reduces_to_forward_state() {
        let n = fig1();
        let (pre, _) = selections(&n);
        let plan = compile(&n).unwrap();
        let inst = InstrumentedNetwork::new(n);
        for cut in plan.cuts() {
            let f = forward_state(&plan, &pre, &cut.name).unwrap();
            let js = forward_joint(&inst, &pre, &cut.name).unwrap();
            for (arm, a) in f.iter() {
                assert!((js.amplitude(arm, &[]) - a).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn probe_on_c_leaks_into_f() {
        let n = fig1();
        let (pre, _) = selections(&n);
        for eps in [1e-1, 1e-2] {
            let js = forward_joint(&with("C", Pointer::qubit("p", eps)), &pre, "L4").unwrap();
            let f = js.arm_probability("F");
            // |F|² = (1 − cos ε)/4
            assert!((f.sqrt() - (eps / 2.0).sin() * FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn duplicate_pointer_and_unknown_arm() {
        let inst = with("C", Pointer::qubit("p", 0.1));
        assert_eq!(
            inst.clone().with_probe(ProbeCoupling::new("E", Pointer::qubit("p", 0.1))).unwrap_err(),
            Error::DuplicatePointer("p".into())
        );
        assert_eq!(
            inst.with_probe(ProbeCoupling::new("Q", Pointer::qubit("q", 0.1))).unwrap_err(),
            Error::UnknownArm("Q".into())
        );
        assert!(attach_probe(fig1(), ProbeCoupling::new("C", Pointer::qubit("p", 2.0))).is_err());
        assert!(attach_probe(fig1(), ProbeCoupling::new("C", Pointer::gaussian("p", 0.1, 0.0))).is_err());
    }

    #[test]
    fn postselection_probability_without_probes() {
        let n = fig1();
        let (pre, post) = selections(&n);
        let (ps, p) = postselect(&evolve_joint(&InstrumentedNetwork::new(n), &pre).unwrap(), &post).unwrap();
        assert!((p - 0.25).abs() < 1e-15);
        assert!((ps.norm_sqr() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn flipped_amplitude_follows_weak_value() {
        let ps = pointer_state(&with("C", Pointer::qubit("p", 0.01)));
        let one = ps.qubit_amplitude(&[1]).unwrap().norm();
        assert!((one - 0.005).abs() < 0.05 * 0.005, "{one}");
        let m = trace_magnitude(&ps, "p").unwrap();
        assert!((m - 0.005).abs() < 0.05 * 0.005, "{m}");
        assert!((m - one).abs() < 1e-6);
    }

    #[test]
    fn unperturbed_pointer_has_no_trace() {
        let ps = pointer_state(&with("C", Pointer::qubit("p", 0.0)));
        assert_eq!(ps.qubit_amplitude(&[0]).unwrap(), c(1.0, 0.0));
        assert_eq!(trace_magnitude(&ps, "p").unwrap(), 0.0);
    }

    #[test]
    fn fully_flipped_pointer_has_unit_trace() {
        let n = NetworkBuilder::new().source("S", "a").detector("D", "a").build().unwrap();
        let eps = std::f64::consts::FRAC_PI_2 - 1e-12;
        let inst = attach_probe(n.clone(), ProbeCoupling::new("a", Pointer::qubit("p", eps))).unwrap();
        let (ps, _) = postselect(
            &evolve_joint(&inst, &Preselection::arm("a")).unwrap(),
            &Postselection::detector(&n, "D").unwrap(),
        )
        .unwrap();
        assert!((trace_magnitude(&ps, "p").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn restoring_self_shift_closes_the_dark_port() {
        let inst = with("C", Pointer::self_shift("c", 0.01, 1.0))
            .with_probe(ProbeCoupling::new("E", Pointer::self_shift("e", 0.01, 1.0)))
            .unwrap();
        let (pre, _) = selections(inst.network());
        let js = forward_joint(&inst, &pre, "L4").unwrap();
        assert!(!js.arms().contains(&"F"));
        assert_eq!(js.arm_probability("F"), 0.0);
        let ps = pointer_state(&inst);
        assert!(pointer_mean(&ps, "c").unwrap().abs() < 1e-12);
        assert_eq!(inst.registers().len(), 1);
    }

    #[test]
    fn self_shift_on_c_follows_weak_value() {
        // mean ≈ δ·Re(P_C)_w = −δ/2, with an error falling faster than δ
        let err = |d: f64| {
            let ps = pointer_state(&with("C", Pointer::self_shift("c", d, 1.0)));
            (pointer_mean(&ps, "c").unwrap() + d / 2.0).abs()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 < 1e-4 * 0.02);
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn mean_of_unshifted_pointer_is_zero() {
        let ps = pointer_state(&with("C", Pointer::gaussian("g", 0.0, 1.0)));
        assert_eq!(pointer_mean(&ps, "g").unwrap(), 0.0);
        let q = pointer_state(&with("C", Pointer::qubit("q", 0.1)));
        assert!(matches!(pointer_mean(&q, "q"), Err(Error::WrongPointerKind { .. })));
        assert!(matches!(trace_magnitude(&q, "x"), Err(Error::UnknownPointer(_))));
    }

    #[test]
    fn external_gaussian_on_c_matches_qubit_law() {
        let d = 1e-3;
        let ps = pointer_state(&with("C", Pointer::gaussian("g", d, 1.0)));
        assert!((pointer_mean(&ps, "g").unwrap() + d / 2.0).abs() < 1e-8);
        assert!(trace_magnitude(&ps, "g").unwrap() > 0.0);
    }

    #[test]
    fn joint_flip_signal_is_bilinear() {
        let (pre, post) = selections(&fig1());
        let s = |e1: f64, e2: f64| {
            let inst = with("C", Pointer::qubit("c", e1))
                .with_probe(ProbeCoupling::new("F", Pointer::qubit("f", e2)))
                .unwrap();
            joint_flip_signal(&inst, &pre, &post).unwrap()
        };
        assert_eq!(s(0.0, 1e-2), 0.0);
        let r = s(1e-2, 1e-2) / s(1e-3, 1e-2);
        assert!((r - 10.0).abs() < 0.1, "{r}");
        let k1 = s(1e-2, 1e-2) / 1e-4;
        let k2 = s(1e-3, 1e-3) / 1e-6;
        assert!((k1 / k2 - 1.0).abs() < 0.01);
    }

    #[test]
    fn joint_flip_on_a_single_path() {
        let n = NetworkBuilder::new()
            .source("S", "a")
            .mirror("M", "a", "b")
            .detector("D", "b")
            .build()
            .unwrap();
        let inst = attach_probe(n.clone(), ProbeCoupling::new("a", Pointer::qubit("p", 1e-3)))
            .unwrap()
            .with_probe(ProbeCoupling::new("b", Pointer::qubit("q", 2e-3)))
            .unwrap();
        let s = joint_flip_signal(&inst, &Preselection::arm("a"), &Postselection::detector(&n, "D").unwrap()).unwrap();
        assert!((s - 1e-3_f64.sin() * 2e-3_f64.sin()).abs() < 1e-15);
        let one = attach_probe(n.clone(), ProbeCoupling::new("a", Pointer::qubit("p", 1e-3))).unwrap();
        assert_eq!(
            joint_flip_signal(&one, &Preselection::arm("a"), &Postselection::detector(&n, "D").unwrap()),
            Err(Error::ProbeCount(1))
        );
    }

    #[test]
    fn order_fit_on_exact_power_laws() {
        let samples: Vec<(f64, f64)> = DEFAULT_GRID.iter().map(|&e| (e, 3.0 * e * e)).collect();
        let est = order_from_samples("x", samples);
        assert!((est.order.unwrap() - 2.0).abs() < 1e-12);
        let zeros = order_from_samples("x", DEFAULT_GRID.iter().map(|&e| (e, 0.0)).collect());
        assert_eq!(zeros.order, Some(f64::INFINITY));
        let noisy = order_from_samples("x", vec![(1e-2, 1e-2), (1e-3, 1e-1), (1e-4, 1e-4)]);
        assert_eq!(noisy.order, None);
    }

    #[test]
    fn grid_must_be_positive_and_decreasing() {
        assert!(check_grid(&DEFAULT_GRID).is_ok());
        assert!(check_grid(&[1e-2, 0.0, -1e-4]).is_err());
        assert!(check_grid(&[1e-4, 1e-3, 1e-2]).is_err());
        assert!(check_grid(&[1e-2, 1e-3]).is_err());
    }

    fn fig1_experiment(arm: &'static str) -> impl Fn(f64) -> Result<Experiment> {
        move |eps| {
            let network = attach_probe(fig1(), ProbeCoupling::new(arm, Pointer::qubit("p", eps)))?;
            let (pre, post) = selections(network.network());
            Ok(Experiment { network, pre, post })
        }
    }

    #[test]
    fn trace_orders_on_fig1() {
        let c = estimate_order(fig1_experiment("C"), "C", &DEFAULT_GRID).unwrap();
        assert!((c.order.unwrap() - 1.0).abs() < 0.05);
        for arm in ["B", "F"] {
            let e = estimate_order(fig1_experiment(arm), arm, &DEFAULT_GRID).unwrap();
            assert_eq!(e.order, Some(f64::INFINITY), "{arm}");
        }
        let f = estimate_order(
            |eps| {
                let network = attach_probe(fig1(), ProbeCoupling::new("C", Pointer::qubit("c", eps)))?
                    .with_probe(ProbeCoupling::new("F", Pointer::qubit("f", eps)))?;
                let (pre, post) = selections(network.network());
                Ok(Experiment { network, pre, post })
            },
            "F",
            &DEFAULT_GRID,
        )
        .unwrap();
        assert!((f.order.unwrap() - 2.0).abs() < 0.05, "{f:?}");
    }

    #[test]
    fn plus_i_readout_acts_as_a_phase() {
        let eps = 0.05;
        let inst = with("C", Pointer::qubit("p", eps));
        let (pre, post) = selections(inst.network());
        let shifted = fig1().insert_inline("C", "P", ElementKind::PhaseShifter { phi: -eps }, "C2").unwrap();
        let plan = compile(&shifted).unwrap();
        for (cut, joint) in shifted
            .cuts()
            .iter()
            .zip(JointTwoStateVector::all(&inst, &pre, &post, Readout::PlusI).unwrap())
        {
            let tsv = TwoStateVector::at(&plan, &pre, &post, &cut.name).unwrap();
            for (arm, w) in joint.path_weak_values().unwrap() {
                let name = if arm == "C" && tsv.basis().contains("C2") { "C2" } else { arm.as_str() };
                let expect = tsv.path_weak_value(name).unwrap();
                assert!((w - expect).norm() < 1e-12, "{} {arm}: {w} vs {expect}", cut.name);
            }
        }
    }

    #[test]
    fn initial_readout_perturbs_weak_values_at_second_order() {
        let n = fig1();
        let (pre, post) = selections(&n);
        let plain = TwoStateVector::all(&compile(&n).unwrap(), &pre, &post).unwrap();
        let dev = |eps: f64| {
            let inst = with("C", Pointer::qubit("p", eps));
            let mut worst = 0.0f64;
            for (j, t) in JointTwoStateVector::all(&inst, &pre, &post, Readout::Initial)
                .unwrap()
                .iter()
                .zip(&plain)
            {
                for ((_, w), (_, v)) in j.path_weak_values().unwrap().iter().zip(t.path_weak_values().unwrap()) {
                    worst = worst.max((w - v).norm());
                }
            }
            worst
        };
        let (d1, d2) = (dev(0.02), dev(0.01));
        assert!(d1 < 0.02 * 0.02);
        assert!(d1 / d2 > 3.5);
    }

    #[test]
    fn instrumented_f_weak_value_is_first_order() {
        for eps in DEFAULT_GRID {
            let inst = with("C", Pointer::qubit("p", eps));
            let (pre, post) = selections(inst.network());
            let tsv = JointTwoStateVector::at(&inst, &pre, &post, Readout::Plus, "L4").unwrap();
            let w = tsv.path_weak_values().unwrap();
            let f = w.iter().find(|(a, _)| a == "F").unwrap().1;
            let ratio = f.norm() / eps;
            assert!((0.1..10.0).contains(&ratio), "{ratio}");
            let sum: Amplitude = w.iter().map(|(_, v)| v).sum();
            assert!((sum - c(1.0, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn transversal_shifter_element_moves_the_beam() {
        let n = NetworkBuilder::new()
            .source("S", "a")
            .shift("T", 0.01, "a", "b")
            .detector("D", "b")
            .build()
            .unwrap();
        let inst = InstrumentedNetwork::new(n.clone()).with_transverse_sigma(0.5).unwrap();
        assert_eq!(inst.registers()[0].name, TRANSVERSE);
        let js = evolve_joint(&inst, &Preselection::arm("a")).unwrap();
        assert_eq!(js.amplitude("b", &[Slot::Center(OrderedFloat(0.01))]), c(1.0, 0.0));
    }

    #[test]
    fn blocks_absorb_amplitude() {
        let n = fig1().block_arm("B").unwrap();
        let inst = attach_probe(n, ProbeCoupling::new("A", Pointer::qubit("p", 0.3))).unwrap();
        let (pre, _) = selections(inst.network());
        let js = evolve_joint(&inst, &pre).unwrap();
        assert!((js.norm_sqr() - 0.5).abs() < 1e-15);
    }
}
