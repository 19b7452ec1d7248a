use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::statespace::{apply, Amplitude, Basis, BasisLabel, Operator, PureState, I, ONE};

use super::{Element, ElementKind, Network};

/// Operator of a single element acting on `basis`.
///
/// The column basis is `basis`; the row basis is `basis` with each input arm
/// relabeled to the matching output arm (a `Block` row is removed). A beam
/// splitter maps `(in1, in2)` to
///
/// ```text
/// out1 = t·in1 + i·r·in2
/// out2 = i·r·in1 + t·in2
/// ```
///
/// and a phase shifter multiplies by `e^{iφ}`. Every other arm passes through.
pub fn unitary_of(e: &Element, basis: &Basis) -> Result<Operator> {
    let ins: Vec<usize> = e
        .in_arms
        .iter()
        .map(|a| basis.index_of(a).ok_or_else(|| Error::UnknownArm(a.clone())))
        .collect::<Result<_>>()?;

    let mut labels: Vec<Option<BasisLabel>> = basis.labels().iter().cloned().map(Some).collect();
    match e.kind {
        ElementKind::Block => labels[ins[0]] = None,
        _ => {
            for (i, out) in ins.iter().zip(&e.out_arms) {
                labels[*i] = Some(BasisLabel::arm(out.clone()));
            }
        }
    }
    // row index for each column index, after dropping removed labels
    let mut row_of = vec![None; labels.len()];
    let mut kept = Vec::new();
    for (c, l) in labels.into_iter().enumerate() {
        if let Some(l) = l {
            row_of[c] = Some(kept.len());
            kept.push(l);
        }
    }
    let rows = Basis::new(kept)?;

    let mut entries: BTreeMap<(usize, usize), Amplitude> = BTreeMap::new();
    for (c, r) in row_of.iter().enumerate() {
        if let Some(r) = r {
            entries.insert((*r, c), ONE);
        }
    }
    match e.kind {
        ElementKind::BeamSplitter { t, r } => {
            let (i1, i2) = (ins[0], ins[1]);
            let (o1, o2) = (row_of[i1].expect("kept"), row_of[i2].expect("kept"));
            let t = Amplitude::new(t, 0.0);
            let ir = I * r;
            entries.insert((o1, i1), t);
            entries.insert((o1, i2), ir);
            entries.insert((o2, i1), ir);
            entries.insert((o2, i2), t);
        }
        ElementKind::PhaseShifter { phi } => {
            let i = ins[0];
            entries.insert((row_of[i].expect("kept"), i), Amplitude::from_polar(1.0, phi));
        }
        _ => {}
    }
    Operator::new(rows, basis.clone(), entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledCut {
    pub name: String,
    pub basis: Basis,
}

/// Stage operators between consecutive cuts, source cut first.
/// `ops()[k]` maps `cuts()[k]` onto `cuts()[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePlan {
    cuts: Vec<CompiledCut>,
    ops: Vec<Operator>,
}

/// Compile a network into its stage operators. Within a stage, elements are
/// applied in topological order with ties broken by element name.
pub fn compile(n: &Network) -> Result<StagePlan> {
    let resolved = n.cuts();
    let cuts: Vec<CompiledCut> = resolved
        .iter()
        .map(|c| CompiledCut {
            name: c.name.clone(),
            basis: c.basis(),
        })
        .collect();
    let mut ops = Vec::with_capacity(cuts.len().saturating_sub(1));
    for k in 0..cuts.len().saturating_sub(1) {
        let (from, to) = (&resolved[k], &resolved[k + 1]);
        let mut acc = Operator::identity(cuts[k].basis.clone());
        for &i in n.topological_order() {
            if to.before.contains(&i) && !from.before.contains(&i) {
                let u = unitary_of(&n.elements()[i], acc.rows())?;
                acc = u.mul(&acc)?;
            }
        }
        // anything not in the next cut is amplitude absorbed by a block
        for name in acc.rows().names() {
            if !cuts[k + 1].basis.contains(name) && !n.consumer(name).is_some_and(|e| e.kind == ElementKind::Block) {
                return Err(Error::InvalidStage {
                    stage: to.name.clone(),
                    message: format!("arm `{name}` escapes the cut"),
                });
            }
        }
        ops.push(acc.select_rows(&cuts[k + 1].basis)?);
    }
    Ok(StagePlan { cuts, ops })
}

impl StagePlan {
    pub fn cuts(&self) -> &[CompiledCut] {
        &self.cuts
    }

    pub fn ops(&self) -> &[Operator] {
        &self.ops
    }

    pub fn stage_index(&self, name: &str) -> Result<usize> {
        self.cuts
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownStage(name.to_string()))
    }

    pub fn basis(&self, stage: &str) -> Result<&Basis> {
        Ok(&self.cuts[self.stage_index(stage)?].basis)
    }

    pub fn source_cut(&self) -> &CompiledCut {
        &self.cuts[0]
    }

    pub fn detector_cut(&self) -> &CompiledCut {
        self.cuts.last().expect("plans have at least one cut")
    }

    /// Product of all stage operators: source cut to detector cut.
    pub fn composed(&self) -> Result<Operator> {
        let mut acc = Operator::identity(self.source_cut().basis.clone());
        for op in &self.ops {
            acc = op.mul(&acc)?;
        }
        Ok(acc)
    }

    /// Push `state` (on the source cut) forward to cut `upto`.
    pub fn propagate(&self, state: &PureState, upto: usize) -> Result<PureState> {
        let mut s = state.clone();
        for op in &self.ops[..upto] {
            s = apply(op, &s)?;
        }
        Ok(s)
    }

    /// Pull `state` (on the detector cut) back to cut `downto` with adjoints.
    pub fn pull_back(&self, state: &PureState, downto: usize) -> Result<PureState> {
        let mut s = state.clone();
        for op in self.ops[downto..].iter().rev() {
            s = apply(&op.adjoint(), &s)?;
        }
        Ok(s)
    }

    /// The time-reversed plan: cuts in reverse order, each stage replaced by
    /// its adjoint.
    pub fn reversed(&self) -> StagePlan {
        StagePlan {
            cuts: self.cuts.iter().rev().cloned().collect(),
            ops: self.ops.iter().rev().map(Operator::adjoint).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::fig1;
    use super::super::NetworkBuilder;
    use super::*;
    use crate::statespace::TOLERANCE;
    use std::f64::consts::FRAC_1_SQRT_2 as H;

    fn c(re: f64, im: f64) -> Amplitude {
        Amplitude::new(re, im)
    }

    #[test]
    fn zero_phase_is_identity() {
        let b = Basis::arms(&["x", "z"]).unwrap();
        let e = Element::new("P", ElementKind::PhaseShifter { phi: 0.0 }, ["x"], ["y"]);
        let u = unitary_of(&e, &b).unwrap();
        assert_eq!(u.rows().names().collect::<Vec<_>>(), ["y", "z"]);
        assert_eq!(u.get("y", "x"), Some(c(1.0, 0.0)));
        assert_eq!(u.get("z", "z"), Some(c(1.0, 0.0)));
        assert_eq!(u.get("y", "z"), Some(c(0.0, 0.0)));
    }

    #[test]
    fn transparent_splitter_is_identity_on_its_arms() {
        let b = Basis::arms(&["a", "b"]).unwrap();
        let e = Element::new("T", ElementKind::BeamSplitter { t: 1.0, r: 0.0 }, ["a", "b"], ["c", "d"]);
        let u = unitary_of(&e, &b).unwrap();
        assert_eq!(u.get("c", "a"), Some(c(1.0, 0.0)));
        assert_eq!(u.get("d", "b"), Some(c(1.0, 0.0)));
        assert_eq!(u.get("c", "b"), Some(c(0.0, 0.0)));
        assert_eq!(u.get("d", "a"), Some(c(0.0, 0.0)));
    }

    #[test]
    fn balanced_splitter_entries() {
        let b = Basis::arms(&["a", "b"]).unwrap();
        let e = Element::new("B", ElementKind::BeamSplitter { t: H, r: H }, ["a", "b"], ["c", "d"]);
        let d = unitary_of(&e, &b).unwrap().to_dense();
        assert_eq!(d, vec![vec![c(H, 0.0), c(0.0, H)], vec![c(0.0, H), c(H, 0.0)]]);
    }

    #[test]
    fn element_arm_must_be_in_basis() {
        let b = Basis::arms(&["a"]).unwrap();
        let e = Element::new("M", ElementKind::Mirror, ["q"], ["r"]);
        assert_eq!(unitary_of(&e, &b).unwrap_err(), Error::UnknownArm("q".into()));
    }

    #[test]
    fn fig1_compiles_to_four_unitary_stages() {
        let plan = compile(&fig1()).unwrap();
        assert_eq!(plan.cuts().len(), 5);
        assert_eq!(plan.ops().len(), 4);
        for op in plan.ops() {
            assert!(op.is_unitary(TOLERANCE), "stage not unitary: {op:?}");
        }
        assert!(plan.composed().unwrap().is_unitary(TOLERANCE));
    }

    #[test]
    fn block_zeroes_the_column_of_its_arm() {
        let plan = compile(&fig1().block_arm("F").unwrap()).unwrap();
        let last = plan.ops().last().unwrap();
        let f = last.cols().index_of("F").unwrap();
        assert!((0..last.rows().len()).all(|r| last.entry(r, f) == c(0.0, 0.0)));
        let composed = plan.composed().unwrap();
        assert!(!composed.is_unitary(1e-6));
    }

    #[test]
    fn compile_is_deterministic() {
        let a = compile(&fig1()).unwrap();
        let b = compile(&fig1()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_arm_plan_has_no_stages() {
        let n = NetworkBuilder::new().source("S", "a").detector("D", "a").build().unwrap();
        let plan = compile(&n).unwrap();
        assert_eq!(plan.ops().len(), 0);
        assert_eq!(plan.cuts().len(), 1);
    }
}
