//! Interferometers as directed acyclic networks of optical elements.
//!
//! Arms are the edges: every arm has at most one producing element and at
//! most one consuming element. An arm that is consumed but never produced is
//! an unused input port and carries vacuum (zero amplitude). Produced arms
//! must be consumed, by another element or by a terminal (`Detector`,
//! `Block`).
//!
//! A *cut* is a topological cross-section: a downward-closed set of
//! non-terminal elements ("before" the cut). The arms crossing it are the
//! basis at that stage. Terminals are never before a cut, so an arm into a
//! `Block` stays live until the final detector cut, where it is dropped.
//! That drop is the absorption.

mod compile;
mod spec;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::statespace::Basis;

pub use compile::{compile, unitary_of, CompiledCut, StagePlan};
pub use spec::{parse_network, to_spec_text};

/// Tolerance on `t² + r² = 1` for beam splitters built in code.
pub const SPLITTER_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    Source,
    BeamSplitter { t: f64, r: f64 },
    PhaseShifter { phi: f64 },
    TransversalShifter { delta: f64 },
    Mirror,
    Block,
    Detector,
}

impl ElementKind {
    pub fn is_terminal(&self) -> bool {
        matches!(self, ElementKind::Block | ElementKind::Detector)
    }

    fn keyword(&self) -> &'static str {
        match self {
            ElementKind::Source => "source",
            ElementKind::BeamSplitter { .. } => "bs",
            ElementKind::PhaseShifter { .. } => "ps",
            ElementKind::TransversalShifter { .. } => "shift",
            ElementKind::Mirror => "mirror",
            ElementKind::Block => "block",
            ElementKind::Detector => "det",
        }
    }

    fn arity(&self) -> (usize, usize) {
        match self {
            ElementKind::Source => (0, 1),
            ElementKind::BeamSplitter { .. } => (2, 2),
            ElementKind::PhaseShifter { .. }
            | ElementKind::TransversalShifter { .. }
            | ElementKind::Mirror => (1, 1),
            ElementKind::Block | ElementKind::Detector => (1, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    pub in_arms: Vec<String>,
    pub out_arms: Vec<String>,
}

impl Element {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        kind: ElementKind,
        in_arms: impl IntoIterator<Item = S>,
        out_arms: impl IntoIterator<Item = S>,
    ) -> Self {
        Element {
            name: name.into(),
            kind,
            in_arms: in_arms.into_iter().map(Into::into).collect(),
            out_arms: out_arms.into_iter().map(Into::into).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let (n_in, n_out) = self.kind.arity();
        if self.in_arms.len() != n_in || self.out_arms.len() != n_out {
            return Err(Error::validation(
                &self.name,
                format!(
                    "`{}` takes {n_in} input and {n_out} output arm(s), got {} and {}",
                    self.kind.keyword(),
                    self.in_arms.len(),
                    self.out_arms.len()
                ),
            ));
        }
        let all: Vec<&String> = self.in_arms.iter().chain(&self.out_arms).collect();
        for (i, a) in all.iter().enumerate() {
            if a.is_empty() {
                return Err(Error::validation(&self.name, "empty arm label"));
            }
            if all[..i].contains(a) {
                return Err(Error::validation(&self.name, format!("arm `{a}` used twice")));
            }
        }
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(&self.name, format!("{what} must be finite")))
            }
        };
        match self.kind {
            ElementKind::BeamSplitter { t, r } => {
                finite(t, "t")?;
                finite(r, "r")?;
                if t < 0.0 || r < 0.0 {
                    return Err(Error::validation(&self.name, "beam splitter needs t >= 0 and r >= 0"));
                }
                let s = t * t + r * r;
                if (s - 1.0).abs() > SPLITTER_TOLERANCE {
                    return Err(Error::validation(
                        &self.name,
                        format!("beam splitter not unitary (t^2 + r^2 = {s})"),
                    ));
                }
            }
            ElementKind::PhaseShifter { phi } => finite(phi, "phi")?,
            ElementKind::TransversalShifter { delta } => finite(delta, "delta")?,
            _ => {}
        }
        Ok(())
    }
}

/// A named cross-section, as declared by the user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageCut {
    pub name: String,
    pub arms: Vec<String>,
}

impl StageCut {
    pub fn new<S: Into<String>>(name: impl Into<String>, arms: impl IntoIterator<Item = S>) -> Self {
        StageCut {
            name: name.into(),
            arms: arms.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct ArmLinks {
    producer: Option<usize>,
    consumer: Option<usize>,
}

/// A cut after resolution: its full basis (declared arms first, then any
/// other live arms in lexicographic order) and the elements before it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedCut {
    pub name: String,
    pub arms: Vec<String>,
    pub before: BTreeSet<usize>,
}

impl ResolvedCut {
    pub fn basis(&self) -> Basis {
        Basis::arms(&self.arms).expect("cut arms are distinct")
    }
}

/// A validated interferometer.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    elements: Vec<Element>,
    stages: Vec<StageCut>,
    arms: BTreeMap<String, ArmLinks>,
    topo: Vec<usize>,
    cuts: Vec<ResolvedCut>,
}

impl Network {
    /// Validate elements and declared stage cuts. Rejects cycles, dangling
    /// arms, bad arities and non-unitary splitters.
    pub fn new(elements: Vec<Element>, stages: Vec<StageCut>) -> Result<Network> {
        let mut names = BTreeSet::new();
        for e in &elements {
            if e.name.is_empty() {
                return Err(Error::validation("", "element without a name"));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::validation(&e.name, "duplicate element name"));
            }
            e.validate()?;
        }
        if !elements.iter().any(|e| e.kind == ElementKind::Source) {
            return Err(Error::NoSource);
        }

        let mut arms: BTreeMap<String, ArmLinks> = BTreeMap::new();
        for (i, e) in elements.iter().enumerate() {
            for a in &e.out_arms {
                let link = arms.entry(a.clone()).or_default();
                if let Some(p) = link.producer {
                    return Err(Error::validation(
                        &e.name,
                        format!("arm `{a}` is already produced by `{}`", elements[p].name),
                    ));
                }
                link.producer = Some(i);
            }
            for a in &e.in_arms {
                let link = arms.entry(a.clone()).or_default();
                if let Some(c) = link.consumer {
                    return Err(Error::validation(
                        &e.name,
                        format!("arm `{a}` is already consumed by `{}`", elements[c].name),
                    ));
                }
                link.consumer = Some(i);
            }
        }
        for (a, link) in &arms {
            if let (Some(p), None) = (link.producer, link.consumer) {
                return Err(Error::validation(
                    &elements[p].name,
                    format!("arm `{a}` is dangling (nothing consumes it)"),
                ));
            }
        }

        let topo = topological_order(&elements, &arms)?;
        let mut net = Network {
            elements,
            stages,
            arms,
            topo,
            cuts: Vec::new(),
        };
        net.cuts = net.resolve_cuts()?;
        Ok(net)
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Declared stage cuts (possibly none).
    pub fn stages(&self) -> &[StageCut] {
        &self.stages
    }

    /// All arm labels, sorted.
    pub fn arms(&self) -> impl Iterator<Item = &str> {
        self.arms.keys().map(String::as_str)
    }

    pub fn has_arm(&self, arm: &str) -> bool {
        self.arms.contains_key(arm)
    }

    /// Element indices in topological order, ties broken by element name.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn cuts(&self) -> &[ResolvedCut] {
        &self.cuts
    }

    pub fn cut(&self, name: &str) -> Result<&ResolvedCut> {
        self.cuts
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownStage(name.to_string()))
    }

    pub fn producer(&self, arm: &str) -> Option<&Element> {
        self.arms.get(arm)?.producer.map(|i| &self.elements[i])
    }

    pub fn consumer(&self, arm: &str) -> Option<&Element> {
        self.arms.get(arm)?.consumer.map(|i| &self.elements[i])
    }

    pub(crate) fn producer_index(&self, arm: &str) -> Option<usize> {
        self.arms.get(arm)?.producer
    }

    /// True for arms nothing produces (unused splitter inputs).
    pub fn is_vacuum_arm(&self, arm: &str) -> bool {
        self.arms.get(arm).is_some_and(|l| l.producer.is_none())
    }

    pub fn detectors(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.kind == ElementKind::Detector)
    }

    pub fn sources(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| e.kind == ElementKind::Source)
    }

    /// The arm feeding detector `name`.
    pub fn detector_arm(&self, name: &str) -> Result<&str> {
        match self.element(name) {
            Some(e) if e.kind == ElementKind::Detector => Ok(&e.in_arms[0]),
            Some(_) => Err(Error::validation(name, "not a detector")),
            None => Err(Error::UnknownElement(name.to_string())),
        }
    }

    /// The arm leaving source `name`.
    pub fn source_arm(&self, name: &str) -> Result<&str> {
        match self.element(name) {
            Some(e) if e.kind == ElementKind::Source => Ok(&e.out_arms[0]),
            Some(_) => Err(Error::validation(name, "not a source")),
            None => Err(Error::UnknownElement(name.to_string())),
        }
    }

    pub fn is_detector_arm(&self, arm: &str) -> bool {
        self.consumer(arm).is_some_and(|e| e.kind == ElementKind::Detector)
    }

    /// A copy with an opaque `Block` absorbing everything on `arm`. The
    /// element that used to consume `arm` now sees a fresh vacuum input.
    pub fn block_arm(&self, arm: &str) -> Result<Network> {
        let link = self
            .arms
            .get(arm)
            .ok_or_else(|| Error::UnknownArm(arm.to_string()))?;
        let consumer = link.consumer.ok_or_else(|| Error::UnknownArm(arm.to_string()))?;
        match self.elements[consumer].kind {
            ElementKind::Detector => {
                return Err(Error::validation(
                    &self.elements[consumer].name,
                    format!("cannot block detector arm `{arm}`"),
                ))
            }
            ElementKind::Block => {
                return Err(Error::validation(
                    &self.elements[consumer].name,
                    format!("arm `{arm}` is already blocked"),
                ))
            }
            _ => {}
        }
        let remnant = self.fresh_arm(&format!("{arm}~vac"));
        let block_name = self.fresh_element(&format!("block:{arm}"));
        let mut elements = self.elements.clone();
        for a in elements[consumer].in_arms.iter_mut() {
            if a == arm {
                *a = remnant.clone();
            }
        }
        elements.push(Element::new(block_name, ElementKind::Block, [arm], []));
        Network::new(elements, self.pinned_stages())
    }

    /// Declared stages, or the auto-layered cuts written out so that an
    /// edited copy keeps the same stage names.
    fn pinned_stages(&self) -> Vec<StageCut> {
        if self.stages.is_empty() {
            self.cuts
                .iter()
                .map(|c| StageCut::new(c.name.clone(), c.arms.iter().cloned()))
                .collect()
        } else {
            self.stages.clone()
        }
    }

    /// A copy where the detector on `arm` is replaced by an absorber of the
    /// same name.
    pub(crate) fn absorb_detector_arm(&self, arm: &str) -> Result<Network> {
        let consumer = self
            .arms
            .get(arm)
            .and_then(|l| l.consumer)
            .ok_or_else(|| Error::UnknownArm(arm.to_string()))?;
        let mut elements = self.elements.clone();
        if elements[consumer].kind != ElementKind::Detector {
            return Err(Error::validation(&elements[consumer].name, "not a detector"));
        }
        elements[consumer].kind = ElementKind::Block;
        // an absorbed arm is not live at the final cut
        let stages = self
            .pinned_stages()
            .iter()
            .map(|s| StageCut::new(s.name.clone(), s.arms.iter().filter(|a| *a != arm).cloned()))
            .collect();
        Network::new(elements, stages)
    }

    /// A copy with a one-in/one-out element spliced into `arm`. The new
    /// element consumes `arm` and emits `new_arm`, which takes over the old
    /// consumer's input.
    pub fn insert_inline(
        &self,
        arm: &str,
        name: &str,
        kind: ElementKind,
        new_arm: &str,
    ) -> Result<Network> {
        if kind.arity() != (1, 1) {
            return Err(Error::validation(name, "only one-in/one-out elements can be spliced"));
        }
        let link = self
            .arms
            .get(arm)
            .ok_or_else(|| Error::UnknownArm(arm.to_string()))?;
        if self.arms.contains_key(new_arm) {
            return Err(Error::validation(name, format!("arm `{new_arm}` already exists")));
        }
        let mut elements = self.elements.clone();
        if let Some(c) = link.consumer {
            for a in elements[c].in_arms.iter_mut() {
                if a == arm {
                    *a = new_arm.to_string();
                }
            }
        }
        elements.push(Element::new(name, kind, [arm], [new_arm]));
        Network::new(elements, self.stages.clone())
    }

    /// Same network with the declared stage cuts replaced.
    pub fn with_stages(&self, stages: Vec<StageCut>) -> Result<Network> {
        Network::new(self.elements.clone(), stages)
    }

    fn fresh_arm(&self, base: &str) -> String {
        let mut name = base.to_string();
        while self.arms.contains_key(&name) {
            name.push('\'');
        }
        name
    }

    fn fresh_element(&self, base: &str) -> String {
        let mut name = base.to_string();
        while self.element(&name).is_some() {
            name.push('\'');
        }
        name
    }

    fn nonterminal(&self) -> BTreeSet<usize> {
        (0..self.elements.len())
            .filter(|&i| !self.elements[i].kind.is_terminal())
            .collect()
    }

    fn sources_set(&self) -> BTreeSet<usize> {
        (0..self.elements.len())
            .filter(|&i| self.elements[i].kind == ElementKind::Source)
            .collect()
    }

    fn add_ancestors(&self, arm: &str, into: &mut BTreeSet<usize>) {
        let mut stack: Vec<usize> = self.producer_index(arm).into_iter().collect();
        while let Some(i) = stack.pop() {
            if into.insert(i) {
                for a in &self.elements[i].in_arms {
                    stack.extend(self.producer_index(a));
                }
            }
        }
    }

    /// Arms crossing the cut defined by `before`, sorted.
    fn live_arms(&self, before: &BTreeSet<usize>) -> Vec<String> {
        let is_final = *before == self.nonterminal();
        self.arms
            .iter()
            .filter(|(_, l)| l.producer.is_none_or(|p| before.contains(&p)))
            .filter(|(_, l)| match l.consumer {
                Some(c) if before.contains(&c) => false,
                Some(c) if is_final => self.elements[c].kind == ElementKind::Detector,
                Some(_) => true,
                None => false,
            })
            .map(|(a, _)| a.clone())
            .collect()
    }

    fn resolve_cuts(&self) -> Result<Vec<ResolvedCut>> {
        let sources = self.sources_set();
        let nonterminal = self.nonterminal();

        if self.stages.is_empty() {
            let mut depth = vec![0usize; self.elements.len()];
            for &i in &self.topo {
                let e = &self.elements[i];
                if e.kind.is_terminal() || e.kind == ElementKind::Source {
                    continue;
                }
                depth[i] = 1 + e
                    .in_arms
                    .iter()
                    .filter_map(|a| self.producer_index(a))
                    .map(|p| depth[p])
                    .max()
                    .unwrap_or(0);
            }
            let max = nonterminal.iter().map(|&i| depth[i]).max().unwrap_or(0);
            return Ok((0..=max)
                .map(|k| {
                    let before: BTreeSet<usize> =
                        nonterminal.iter().copied().filter(|&i| depth[i] <= k).collect();
                    ResolvedCut {
                        name: format!("L{}", k + 1),
                        arms: self.live_arms(&before),
                        before,
                    }
                })
                .collect());
        }

        let mut cuts = Vec::new();
        let mut before = sources.clone();
        let mut seen = BTreeSet::new();
        for stage in &self.stages {
            let err = |message: String| Error::InvalidStage {
                stage: stage.name.clone(),
                message,
            };
            if !seen.insert(stage.name.as_str()) {
                return Err(err("duplicate stage name".into()));
            }
            if stage.arms.is_empty() {
                return Err(err("no arms listed".into()));
            }
            for (i, a) in stage.arms.iter().enumerate() {
                if stage.arms[..i].contains(a) {
                    return Err(err(format!("arm `{a}` listed twice")));
                }
                if !self.arms.contains_key(a) {
                    return Err(err(format!("unknown arm `{a}`")));
                }
                self.add_ancestors(a, &mut before);
            }
            let live = self.live_arms(&before);
            for a in &stage.arms {
                if !live.contains(a) {
                    return Err(err(format!("arm `{a}` is not live at this cut")));
                }
            }
            let mut arms = stage.arms.clone();
            arms.extend(live.into_iter().filter(|a| !stage.arms.contains(a)));
            cuts.push(ResolvedCut {
                name: stage.name.clone(),
                arms,
                before: before.clone(),
            });
        }

        if cuts[0].before != sources {
            let name = unique_name("source", &seen);
            cuts.insert(
                0,
                ResolvedCut {
                    name,
                    arms: self.live_arms(&sources),
                    before: sources,
                },
            );
        }
        if cuts.last().expect("at least one cut").before != nonterminal {
            let name = unique_name("detectors", &seen);
            cuts.push(ResolvedCut {
                name,
                arms: self.live_arms(&nonterminal),
                before: nonterminal,
            });
        }
        Ok(cuts)
    }
}

fn unique_name(base: &str, taken: &BTreeSet<&str>) -> String {
    let mut name = base.to_string();
    while taken.contains(name.as_str()) {
        name.push('_');
    }
    name
}

fn topological_order(elements: &[Element], arms: &BTreeMap<String, ArmLinks>) -> Result<Vec<usize>> {
    let mut indegree: Vec<usize> = elements
        .iter()
        .map(|e| {
            e.in_arms
                .iter()
                .filter(|a| arms[a.as_str()].producer.is_some())
                .count()
        })
        .collect();
    let mut ready: BTreeSet<(&str, usize)> = elements
        .iter()
        .enumerate()
        .filter(|(i, _)| indegree[*i] == 0)
        .map(|(i, e)| (e.name.as_str(), i))
        .collect();
    let mut order = Vec::with_capacity(elements.len());
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for a in &elements[i].out_arms {
            if let Some(c) = arms[a.as_str()].consumer {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert((elements[c].name.as_str(), c));
                }
            }
        }
    }
    if order.len() != elements.len() {
        let stuck = (0..elements.len())
            .filter(|i| !order.contains(i))
            .map(|i| elements[i].name.as_str())
            .min()
            .unwrap_or_default();
        return Err(Error::Cycle(stuck.to_string()));
    }
    Ok(order)
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&to_spec_text(self))
    }
}

/// Fluent construction of a [`Network`] in code.
#[derive(Debug, Clone, Default)]
pub struct NetworkBuilder {
    elements: Vec<Element>,
    stages: Vec<StageCut>,
}

impl NetworkBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn element(mut self, e: Element) -> Self {
        self.elements.push(e);
        self
    }

    pub fn source(self, name: &str, out: &str) -> Self {
        self.element(Element::new(name, ElementKind::Source, [], [out]))
    }

    pub fn splitter(self, name: &str, t: f64, r: f64, ins: [&str; 2], outs: [&str; 2]) -> Self {
        self.element(Element::new(name, ElementKind::BeamSplitter { t, r }, ins, outs))
    }

    pub fn phase(self, name: &str, phi: f64, input: &str, output: &str) -> Self {
        self.element(Element::new(name, ElementKind::PhaseShifter { phi }, [input], [output]))
    }

    pub fn shift(self, name: &str, delta: f64, input: &str, output: &str) -> Self {
        self.element(Element::new(
            name,
            ElementKind::TransversalShifter { delta },
            [input],
            [output],
        ))
    }

    pub fn mirror(self, name: &str, input: &str, output: &str) -> Self {
        self.element(Element::new(name, ElementKind::Mirror, [input], [output]))
    }

    pub fn block(self, name: &str, input: &str) -> Self {
        self.element(Element::new(name, ElementKind::Block, [input], []))
    }

    pub fn detector(self, name: &str, input: &str) -> Self {
        self.element(Element::new(name, ElementKind::Detector, [input], []))
    }

    pub fn stage(mut self, name: &str, arms: &[&str]) -> Self {
        self.stages.push(StageCut::new(name, arms.iter().copied()));
        self
    }

    pub fn build(self) -> Result<Network> {
        Network::new(self.elements, self.stages)
    }
}
