//! Complex amplitude vectors over small labeled bases, sparse operators on
//! them, and the closed-form Gaussian pointer overlaps.
//!
//! Bases are tiny (a few dozen labels at most), so everything here favors
//! exactness and deterministic ordering over speed. Operators are stored
//! sparsely in a `BTreeMap` keyed by `(row, col)` so iteration order, and
//! therefore every floating-point sum, is reproducible.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Amplitude = Complex64;

/// Default tolerance for normalization, unitarity and equality checks.
pub const TOLERANCE: f64 = 1e-12;

pub(crate) const ZERO: Amplitude = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Amplitude = Complex64::new(1.0, 0.0);
pub(crate) const I: Amplitude = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelKind {
    Arm,
    PointerLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel {
    pub kind: LabelKind,
    pub name: String,
}

impl BasisLabel {
    pub fn arm(name: impl Into<String>) -> Self {
        BasisLabel {
            kind: LabelKind::Arm,
            name: name.into(),
        }
    }

    pub fn pointer_level(name: impl Into<String>) -> Self {
        BasisLabel {
            kind: LabelKind::PointerLevel,
            name: name.into(),
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// An ordered list of distinct labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Basis {
    labels: Vec<BasisLabel>,
}

impl Basis {
    pub fn new(labels: Vec<BasisLabel>) -> Result<Self> {
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate basis label `{}`",
                    l.name
                )));
            }
        }
        Ok(Basis { labels })
    }

    /// Basis of arm labels, in the given order.
    pub fn arms<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names.iter().map(|n| BasisLabel::arm(n.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[BasisLabel] {
        &self.labels
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownArm(name.to_string()))
    }
}

/// A vector of amplitudes, one per basis label.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    basis: Basis,
    amps: Vec<Amplitude>,
}

impl PureState {
    pub fn new(basis: Basis, amps: Vec<Amplitude>) -> Result<Self> {
        if basis.len() != amps.len() {
            return Err(Error::IncompatibleBases);
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidParameter("non-finite amplitude".into()));
        }
        Ok(PureState { basis, amps })
    }

    pub fn zeros(basis: Basis) -> Self {
        let amps = vec![ZERO; basis.len()];
        PureState { basis, amps }
    }

    /// The basis vector for `name`.
    pub fn basis_state(basis: Basis, name: &str) -> Result<Self> {
        let idx = basis.require(name)?;
        let mut s = Self::zeros(basis);
        s.amps[idx] = ONE;
        Ok(s)
    }

    /// Build a state from `(label, amplitude)` pairs; unlisted labels get zero.
    pub fn from_pairs<'a, I>(basis: Basis, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, Amplitude)>,
    {
        let mut s = Self::zeros(basis);
        for (name, a) in pairs {
            let idx = s.basis.require(name)?;
            s.amps[idx] += a;
        }
        PureState::new(s.basis, s.amps)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn amps(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn amp(&self, name: &str) -> Option<Amplitude> {
        self.basis.index_of(name).map(|i| self.amps[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Amplitude)> {
        self.basis.names().zip(self.amps.iter().copied())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm_sqr() - 1.0).abs() <= tol
    }

    pub fn scaled(&self, factor: Amplitude) -> PureState {
        PureState {
            basis: self.basis.clone(),
            amps: self.amps.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn normalized(&self) -> Result<PureState> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidParameter("cannot normalize the zero vector".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn conj(&self) -> PureState {
        PureState {
            basis: self.basis.clone(),
            amps: self.amps.iter().map(|a| a.conj()).collect(),
        }
    }

    pub fn approx_eq(&self, other: &PureState, tol: f64) -> bool {
        self.basis == other.basis
            && self
                .amps
                .iter()
                .zip(&other.amps)
                .all(|(a, b)| (a - b).norm() <= tol)
    }
}

/// `Σᵢ conj(aᵢ)·bᵢ`.
pub fn inner_product(a: &PureState, b: &PureState) -> Result<Amplitude> {
    if a.basis != b.basis {
        return Err(Error::IncompatibleBases);
    }
    Ok(a.amps
        .iter()
        .zip(&b.amps)
        .fold(ZERO, |acc, (x, y)| acc + x.conj() * y))
}

/// A sparse linear map from the `cols` basis to the `rows` basis.
///
/// Observables are square with `rows == cols`. Stage transfer operators map
/// between the arm sets of two consecutive cuts, so their row and column
/// labels differ.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    rows: Basis,
    cols: Basis,
    entries: BTreeMap<(usize, usize), Amplitude>,
}

impl Operator {
    pub fn new(rows: Basis, cols: Basis, entries: BTreeMap<(usize, usize), Amplitude>) -> Result<Self> {
        for (&(r, c), a) in &entries {
            if r >= rows.len() || c >= cols.len() {
                return Err(Error::InvalidParameter(format!(
                    "entry ({r}, {c}) outside a {}x{} operator",
                    rows.len(),
                    cols.len()
                )));
            }
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(Error::InvalidParameter("non-finite operator entry".into()));
            }
        }
        let entries = entries.into_iter().filter(|(_, a)| *a != ZERO).collect();
        Ok(Operator { rows, cols, entries })
    }

    pub fn zero(rows: Basis, cols: Basis) -> Self {
        Operator {
            rows,
            cols,
            entries: BTreeMap::new(),
        }
    }

    pub fn identity(basis: Basis) -> Self {
        let entries = (0..basis.len()).map(|i| ((i, i), ONE)).collect();
        Operator {
            rows: basis.clone(),
            cols: basis,
            entries,
        }
    }

    /// Build from a dense row-major matrix.
    pub fn from_dense(rows: Basis, cols: Basis, dense: &[Vec<Amplitude>]) -> Result<Self> {
        if dense.len() != rows.len() || dense.iter().any(|r| r.len() != cols.len()) {
            return Err(Error::IncompatibleBases);
        }
        let mut entries = BTreeMap::new();
        for (r, row) in dense.iter().enumerate() {
            for (c, a) in row.iter().enumerate() {
                entries.insert((r, c), *a);
            }
        }
        Operator::new(rows, cols, entries)
    }

    pub fn rows(&self) -> &Basis {
        &self.rows
    }

    pub fn cols(&self) -> &Basis {
        &self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), Amplitude)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn entry(&self, row: usize, col: usize) -> Amplitude {
        self.entries.get(&(row, col)).copied().unwrap_or(ZERO)
    }

    /// Entry by labels: the amplitude sent from `col` into `row`.
    pub fn get(&self, row: &str, col: &str) -> Option<Amplitude> {
        Some(self.entry(self.rows.index_of(row)?, self.cols.index_of(col)?))
    }

    pub fn to_dense(&self) -> Vec<Vec<Amplitude>> {
        let mut d = vec![vec![ZERO; self.cols.len()]; self.rows.len()];
        for (&(r, c), a) in &self.entries {
            d[r][c] = *a;
        }
        d
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            rows: self.cols.clone(),
            cols: self.rows.clone(),
            entries: self.entries.iter().map(|(&(r, c), a)| ((c, r), a.conj())).collect(),
        }
    }

    /// Matrix product `self · rhs`.
    pub fn mul(&self, rhs: &Operator) -> Result<Operator> {
        if self.cols != rhs.rows {
            return Err(Error::IncompatibleBases);
        }
        let mut by_row: BTreeMap<usize, Vec<(usize, Amplitude)>> = BTreeMap::new();
        for (&(k, c), a) in &rhs.entries {
            by_row.entry(k).or_default().push((c, *a));
        }
        let mut out: BTreeMap<(usize, usize), Amplitude> = BTreeMap::new();
        for (&(r, k), a) in &self.entries {
            if let Some(row) = by_row.get(&k) {
                for &(c, b) in row {
                    *out.entry((r, c)).or_insert(ZERO) += a * b;
                }
            }
        }
        Operator::new(self.rows.clone(), rhs.cols.clone(), out)
    }

    pub fn scaled(&self, factor: Amplitude) -> Operator {
        Operator {
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            entries: self
                .entries
                .iter()
                .map(|(k, a)| (*k, a * factor))
                .filter(|(_, a)| *a != ZERO)
                .collect(),
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::IncompatibleBases);
        }
        let mut out = self.entries.clone();
        for (k, a) in &other.entries {
            *out.entry(*k).or_insert(ZERO) += a;
        }
        Operator::new(self.rows.clone(), self.cols.clone(), out)
    }

    /// Permute or drop rows so that the row basis becomes `target`. Labels
    /// missing from `target` are discarded; every label of `target` must be
    /// a current row label.
    pub fn select_rows(&self, target: &Basis) -> Result<Operator> {
        let map: Vec<usize> = target
            .names()
            .map(|n| self.rows.require(n))
            .collect::<Result<_>>()?;
        let mut inverse = BTreeMap::new();
        for (new, old) in map.iter().enumerate() {
            inverse.insert(*old, new);
        }
        let entries = self
            .entries
            .iter()
            .filter_map(|(&(r, c), a)| inverse.get(&r).map(|&nr| ((nr, c), *a)))
            .collect();
        Ok(Operator {
            rows: target.clone(),
            cols: self.cols.clone(),
            entries,
        })
    }

    /// Largest entrywise deviation of `U†U` from the identity on the column
    /// basis; `None` when the dimensions differ.
    pub fn unitarity_defect(&self) -> Option<f64> {
        if self.rows.len() != self.cols.len() {
            return None;
        }
        let gram = self.adjoint().mul(self).ok()?;
        let n = self.cols.len();
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let target = if r == c { ONE } else { ZERO };
                worst = worst.max((gram.entry(r, c) - target).norm());
            }
        }
        Some(worst)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect().is_some_and(|d| d <= tol)
    }

    pub fn approx_eq(&self, other: &Operator, tol: f64) -> bool {
        if self.rows != other.rows || self.cols != other.cols {
            return false;
        }
        let keys: std::collections::BTreeSet<_> =
            self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .all(|&(r, c)| (self.entry(r, c) - other.entry(r, c)).norm() <= tol)
    }
}

/// Matrix-vector product.
pub fn apply(op: &Operator, s: &PureState) -> Result<PureState> {
    if op.cols != s.basis {
        return Err(Error::IncompatibleBases);
    }
    let mut amps = vec![ZERO; op.rows.len()];
    for (&(r, c), a) in &op.entries {
        amps[r] += a * s.amps[c];
    }
    Ok(PureState {
        basis: op.rows.clone(),
        amps,
    })
}

/// Diagonal 0/1 operator keeping the amplitudes on `arms`.
pub fn projector<S: AsRef<str>>(arms: &[S], basis: &Basis) -> Result<Operator> {
    let mut entries = BTreeMap::new();
    for a in arms {
        let i = basis.require(a.as_ref())?;
        entries.insert((i, i), ONE);
    }
    Ok(Operator {
        rows: basis.clone(),
        cols: basis.clone(),
        entries,
    })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "pointer width must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// Overlap `exp(−(d1−d2)²/8σ²)` of two real Gaussians of width σ
/// (⟨x²⟩ = σ²) centered at `d1` and `d2`.
pub fn gaussian_overlap(d1: f64, d2: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(overlap_unchecked(d1, d2, sigma))
}

pub(crate) fn overlap_unchecked(d1: f64, d2: f64, sigma: f64) -> f64 {
    let d = d1 - d2;
    (-d * d / (8.0 * sigma * sigma)).exp()
}

/// Cross moment `⟨G(d1)| x |G(d2)⟩`: the product of two such Gaussians is a
/// Gaussian centered at the midpoint, scaled by their overlap.
pub(crate) fn gaussian_position_moment(d1: f64, d2: f64, sigma: f64) -> f64 {
    0.5 * (d1 + d2) * overlap_unchecked(d1, d2, sigma)
}

/// `⟨G(d1)|G(d2)⟩ − ⟨G(d1)|G(0)⟩⟨G(0)|G(d2)⟩`, evaluated without the
/// cancellation of the naive difference.
pub(crate) fn gaussian_overlap_excess(d1: f64, d2: f64, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    (-(d1 * d1 + d2 * d2) / (8.0 * s2)).exp() * (d1 * d2 / (4.0 * s2)).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn basis(names: &[&str]) -> Basis {
        Basis::arms(names).unwrap()
    }

    fn c(re: f64, im: f64) -> Amplitude {
        Complex64::new(re, im)
    }

    #[test]
    fn self_inner_product_of_normalized_state_is_one() {
        let b = basis(&["A", "C", "E"]);
        let v = PureState::new(b, vec![c(0.5, 0.5), c(0.0, -0.5), c(0.5, 0.0)]).unwrap();
        let ip = inner_product(&v, &v).unwrap();
        assert!((ip - ONE).norm() < 1e-15);
    }

    #[test]
    fn distinct_basis_states_are_orthogonal() {
        let b = basis(&["A", "C"]);
        let a = PureState::basis_state(b.clone(), "A").unwrap();
        let cc = PureState::basis_state(b, "C").unwrap();
        assert_eq!(inner_product(&a, &cc).unwrap(), ZERO);
    }

    #[test]
    fn mismatched_bases_are_rejected() {
        let a = PureState::zeros(basis(&["A", "B"]));
        let b = PureState::zeros(basis(&["B", "A"]));
        assert_eq!(inner_product(&a, &b), Err(Error::IncompatibleBases));
        let op = Operator::identity(basis(&["A"]));
        assert_eq!(apply(&op, &a), Err(Error::IncompatibleBases));
    }

    #[test]
    fn identity_leaves_state_alone() {
        let b = basis(&["A", "B"]);
        let v = PureState::new(b.clone(), vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert_eq!(apply(&Operator::identity(b), &v).unwrap(), v);
    }

    #[test]
    fn balanced_splitter_matrix_on_first_port() {
        let b = basis(&["x", "y"]);
        let h = FRAC_1_SQRT_2;
        let bs = Operator::from_dense(
            b.clone(),
            b.clone(),
            &[vec![c(h, 0.0), c(0.0, h)], vec![c(0.0, h), c(h, 0.0)]],
        )
        .unwrap();
        let out = apply(&bs, &PureState::basis_state(b, "x").unwrap()).unwrap();
        assert!((out.amps()[0] - c(h, 0.0)).norm() < 1e-15);
        assert!((out.amps()[1] - c(0.0, h)).norm() < 1e-15);
        assert!(bs.is_unitary(TOLERANCE));
    }

    #[test]
    fn projector_annihilates_orthogonal_support() {
        let b = basis(&["A", "C", "E"]);
        let p = projector(&["C"], &b).unwrap();
        let a = PureState::basis_state(b, "A").unwrap();
        assert_eq!(apply(&p, &a).unwrap().norm_sqr(), 0.0);
    }

    #[test]
    fn projector_is_idempotent_and_complete() {
        let b = basis(&["A", "C", "E"]);
        let p = projector(&["C"], &b).unwrap();
        assert!(p.mul(&p).unwrap().approx_eq(&p, 0.0));
        let all = projector(&["A", "C", "E"], &b).unwrap();
        assert!(all.approx_eq(&Operator::identity(b.clone()), 0.0));
        let rest = projector(&["A", "E"], &b).unwrap();
        assert!(p.add(&rest).unwrap().approx_eq(&Operator::identity(b), 0.0));
    }

    #[test]
    fn projector_rejects_unknown_label() {
        let b = basis(&["A"]);
        assert_eq!(
            projector(&["Z"], &b).unwrap_err(),
            Error::UnknownArm("Z".into())
        );
    }

    #[test]
    fn gaussian_overlap_closed_form_values() {
        assert_eq!(gaussian_overlap(0.3, 0.3, 0.1).unwrap(), 1.0);
        let s = 0.25;
        let one = gaussian_overlap(0.0, s, s).unwrap();
        assert!((one - (-0.125f64).exp()).abs() < 1e-15);
        assert!((one - 0.8824969).abs() < 1e-7);
        let ten = gaussian_overlap(0.0, 10.0 * s, s).unwrap();
        assert!((ten - (-12.5f64).exp()).abs() < 1e-18);
        assert!((ten - 3.73e-6).abs() < 1e-8);
    }

    #[test]
    fn gaussian_overlap_rejects_bad_width() {
        assert!(gaussian_overlap(0.0, 1.0, 0.0).is_err());
        assert!(gaussian_overlap(0.0, 1.0, -1.0).is_err());
        assert!(gaussian_overlap(0.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn overlap_excess_matches_naive_difference_at_large_shift() {
        let (d1, d2, s) = (0.4, -0.7, 0.5);
        let naive = overlap_unchecked(d1, d2, s)
            - overlap_unchecked(d1, 0.0, s) * overlap_unchecked(0.0, d2, s);
        assert!((gaussian_overlap_excess(d1, d2, s) - naive).abs() < 1e-15);
    }

    #[test]
    fn select_rows_reorders_and_drops() {
        let cols = basis(&["a", "b"]);
        let rows = basis(&["x", "y", "z"]);
        let op = Operator::from_dense(
            rows,
            cols,
            &[
                vec![c(1.0, 0.0), ZERO],
                vec![ZERO, c(2.0, 0.0)],
                vec![c(3.0, 0.0), ZERO],
            ],
        )
        .unwrap();
        let sel = op.select_rows(&basis(&["z", "x"])).unwrap();
        assert_eq!(sel.get("z", "a"), Some(c(3.0, 0.0)));
        assert_eq!(sel.get("x", "a"), Some(c(1.0, 0.0)));
        assert_eq!(sel.get("x", "b"), Some(ZERO));
    }
}
