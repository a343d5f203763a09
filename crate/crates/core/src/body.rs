//! Body shapes and the multiplicative ratio perturbations applied to them.
//!
//! A [`BodyShape`] holds one family of part dimensions (lengths or
//! thicknesses). A [`PerturbationVector`] is a signed ratio per part, bounded
//! in max norm by the attack strength. Applying it gives `(1 + δᵢ)·bᵢ`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BodyError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape has no parts")]
    Empty,
    #[error("part {index} has non-positive or non-finite dimension {value}")]
    NonPositive { index: usize, value: f64 },
    #[error("perturbed part {index} has degenerate dimension {value}")]
    DegenerateShape { index: usize, value: f64 },
    #[error("mirror pair ({0}, {1}) is out of range")]
    MirrorPairOutOfRange(usize, usize),
    #[error("part {0} appears in more than one mirror pair slot")]
    MirrorPairOverlap(usize),
    #[error("|delta[{index}]| = {value} exceeds epsilon {epsilon}")]
    OutsideBall {
        index: usize,
        value: f64,
        epsilon: f64,
    },
    #[error("delta[{index}] = {value} is nonzero on a non-attackable part")]
    MaskedNonZero { index: usize, value: f64 },
    #[error("epsilon {0} must be finite and in [0, 1)")]
    InvalidEpsilon(f64),
    #[error("{what} disagree between length and thickness shapes")]
    InconsistentBody { what: &'static str },
    #[error("shape kind {found} where {expected} was expected")]
    WrongKind {
        expected: DimensionKind,
        found: DimensionKind,
    },
}

/// Which dimension family a shape vector describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionKind {
    Length,
    Thickness,
}

impl fmt::Display for DimensionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimensionKind::Length => f.write_str("length"),
            DimensionKind::Thickness => f.write_str("thickness"),
        }
    }
}

/// What a search perturbs: one family, or both families jointly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Length,
    Thickness,
    Both,
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackKind::Length => f.write_str("length"),
            AttackKind::Thickness => f.write_str("thickness"),
            AttackKind::Both => f.write_str("both"),
        }
    }
}

impl std::str::FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "length" => Ok(AttackKind::Length),
            "thickness" => Ok(AttackKind::Thickness),
            "both" => Ok(AttackKind::Both),
            other => Err(format!("unknown attack kind `{other}`")),
        }
    }
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawBodyShape<T> {
    kind: DimensionKind,
    part_names: Vec<String>,
    values: Vec<T>,
    #[serde(default)]
    mirror_pairs: Vec<(usize, usize)>,
    #[serde(default)]
    attackable: Option<Vec<bool>>,
}

impl<T: Scalar> TryFrom<RawBodyShape<T>> for BodyShape<T> {
    type Error = BodyError;

    fn try_from(raw: RawBodyShape<T>) -> Result<Self, Self::Error> {
        let attackable = raw
            .attackable
            .unwrap_or_else(|| vec![true; raw.values.len()]);
        BodyShape::new(
            raw.kind,
            raw.part_names,
            raw.values,
            raw.mirror_pairs,
            attackable,
        )
    }
}

/// Positive part dimensions of one family, with mirror pairs and an
/// attackability mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawBodyShape<T>")]
pub struct BodyShape<T> {
    kind: DimensionKind,
    part_names: Vec<String>,
    values: Vec<T>,
    mirror_pairs: Vec<(usize, usize)>,
    attackable: Vec<bool>,
}

impl<T: Scalar> BodyShape<T> {
    pub fn new(
        kind: DimensionKind,
        part_names: Vec<String>,
        values: Vec<T>,
        mirror_pairs: Vec<(usize, usize)>,
        attackable: Vec<bool>,
    ) -> Result<Self, BodyError> {
        let n = values.len();
        if n == 0 {
            return Err(BodyError::Empty);
        }
        for len in [part_names.len(), attackable.len()] {
            if len != n {
                return Err(BodyError::DimensionMismatch {
                    expected: n,
                    found: len,
                });
            }
        }
        for (index, v) in values.iter().enumerate() {
            if !(v.is_finite() && *v > T::zero()) {
                return Err(BodyError::NonPositive {
                    index,
                    value: v.to_f64_lossy(),
                });
            }
        }
        let mut seen = vec![false; n];
        for &(l, r) in &mirror_pairs {
            if l >= n || r >= n {
                return Err(BodyError::MirrorPairOutOfRange(l, r));
            }
            for i in [l, r] {
                if seen[i] {
                    return Err(BodyError::MirrorPairOverlap(i));
                }
                seen[i] = true;
            }
        }
        Ok(Self {
            kind,
            part_names,
            values,
            mirror_pairs,
            attackable,
        })
    }

    pub fn kind(&self) -> DimensionKind {
        self.kind
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn part_names(&self) -> &[String] {
        &self.part_names
    }

    pub fn mirror_pairs(&self) -> &[(usize, usize)] {
        &self.mirror_pairs
    }

    pub fn attackable(&self) -> &[bool] {
        &self.attackable
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Indices that belong to no mirror pair (torso, head, ...).
    pub fn unpaired(&self) -> Vec<usize> {
        let mut paired = vec![false; self.dim()];
        for &(l, r) in &self.mirror_pairs {
            paired[l] = true;
            paired[r] = true;
        }
        (0..self.dim()).filter(|&i| !paired[i]).collect()
    }

    /// Copy of this shape with all dimensions replaced. Used for presets that
    /// share topology between the length and thickness families.
    pub fn with_values(&self, kind: DimensionKind, values: Vec<T>) -> Result<Self, BodyError> {
        Self::new(
            kind,
            self.part_names.clone(),
            values,
            self.mirror_pairs.clone(),
            self.attackable.clone(),
        )
    }
}

/// Signed ratio vector inside the max-norm ball of radius `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PerturbationVector<T> {
    deltas: Vec<T>,
    epsilon: T,
}

impl<T: Scalar> PerturbationVector<T> {
    /// Checked constructor: every component must lie in `[-ε, ε]` and be zero
    /// where `mask` is false.
    pub fn new(deltas: Vec<T>, epsilon: T, mask: &[bool]) -> Result<Self, BodyError> {
        if mask.len() != deltas.len() {
            return Err(BodyError::DimensionMismatch {
                expected: mask.len(),
                found: deltas.len(),
            });
        }
        if !(epsilon.is_finite() && epsilon >= T::zero()) {
            return Err(BodyError::InvalidEpsilon(epsilon.to_f64_lossy()));
        }
        for (index, (&d, &m)) in deltas.iter().zip(mask).enumerate() {
            if !d.is_finite() || d.abs() > epsilon {
                return Err(BodyError::OutsideBall {
                    index,
                    value: d.to_f64_lossy(),
                    epsilon: epsilon.to_f64_lossy(),
                });
            }
            if !m && d != T::zero() {
                return Err(BodyError::MaskedNonZero {
                    index,
                    value: d.to_f64_lossy(),
                });
            }
        }
        Ok(Self { deltas, epsilon })
    }

    pub fn zeros(dim: usize, epsilon: T) -> Self {
        Self {
            deltas: vec![T::zero(); dim],
            epsilon,
        }
    }

    /// Projects a raw vector onto the feasible set: componentwise clip to
    /// `[-ε, ε]`, masked components forced to zero, NaN mapped to zero.
    ///
    /// The clip returns the bound values themselves, so the result satisfies
    /// `|δᵢ| ≤ ε` exactly.
    pub fn clamp(raw: &[T], epsilon: T, mask: &[bool]) -> Self {
        assert_eq!(raw.len(), mask.len(), "clamp: mask dimension mismatch");
        let deltas = raw
            .iter()
            .zip(mask)
            .map(|(&x, &m)| clip(x, epsilon, m))
            .collect();
        Self { deltas, epsilon }
    }

    /// Draws each attackable component from `U([-ε, ε])`.
    pub fn sample_initial<R: Rng + ?Sized>(
        dim: usize,
        epsilon: T,
        mask: &[bool],
        rng: &mut R,
    ) -> Self {
        assert_eq!(dim, mask.len(), "sample_initial: mask dimension mismatch");
        let two = T::of(2.0);
        let deltas = mask
            .iter()
            .map(|&m| {
                // Draw even for masked entries so the stream position does not
                // depend on the mask.
                let u = T::unit_uniform(rng);
                if m {
                    clip(-epsilon + two * epsilon * u, epsilon, true)
                } else {
                    T::zero()
                }
            })
            .collect();
        Self { deltas, epsilon }
    }

    pub fn deltas(&self) -> &[T] {
        &self.deltas
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.deltas.len()
    }

    pub fn max_norm(&self) -> T {
        self.deltas
            .iter()
            .fold(T::zero(), |acc, d| acc.max(d.abs()))
    }

    pub fn into_deltas(self) -> Vec<T> {
        self.deltas
    }
}

#[inline]
fn clip<T: Scalar>(x: T, epsilon: T, attackable: bool) -> T {
    if !attackable || x.is_nan() {
        T::zero()
    } else if x > epsilon {
        epsilon
    } else if x < -epsilon {
        -epsilon
    } else {
        x
    }
}

/// A clean shape together with the perturbation applied to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AdversarialShape<T> {
    base: BodyShape<T>,
    delta: PerturbationVector<T>,
    values: Vec<T>,
}

impl<T: Scalar> AdversarialShape<T> {
    pub fn base(&self) -> &BodyShape<T> {
        &self.base
    }

    pub fn delta(&self) -> &PerturbationVector<T> {
        &self.delta
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Unperturbed shape wrapped with a zero delta.
    pub fn clean(shape: &BodyShape<T>) -> Self {
        Self {
            base: shape.clone(),
            delta: PerturbationVector::zeros(shape.dim(), T::zero()),
            values: shape.values.clone(),
        }
    }

    /// `values / base - 1`, the ratio actually realized.
    pub fn recover_delta(&self) -> Vec<T> {
        self.values
            .iter()
            .zip(&self.base.values)
            .map(|(&v, &b)| v / b - T::one())
            .collect()
    }
}

/// `values[i] = (1 + δᵢ)·bᵢ`.
pub fn apply_perturbation<T: Scalar>(
    shape: &BodyShape<T>,
    delta: &PerturbationVector<T>,
) -> Result<AdversarialShape<T>, BodyError> {
    if delta.dim() != shape.dim() {
        return Err(BodyError::DimensionMismatch {
            expected: shape.dim(),
            found: delta.dim(),
        });
    }
    let mut values = Vec::with_capacity(shape.dim());
    for (index, ((&b, &d), &m)) in shape
        .values
        .iter()
        .zip(&delta.deltas)
        .zip(&shape.attackable)
        .enumerate()
    {
        if !m && d != T::zero() {
            return Err(BodyError::MaskedNonZero {
                index,
                value: d.to_f64_lossy(),
            });
        }
        let v = (T::one() + d) * b;
        if !(v.is_finite() && v > T::zero()) {
            return Err(BodyError::DegenerateShape {
                index,
                value: v.to_f64_lossy(),
            });
        }
        values.push(v);
    }
    Ok(AdversarialShape {
        base: shape.clone(),
        delta: delta.clone(),
        values,
    })
}

/// One table row: part name and signed percent, `None` for parts that
/// cannot be attacked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentRow {
    pub part: String,
    pub percent: Option<f64>,
}

/// Signed percent per part, rounded to two decimals.
pub fn perturbation_report<T: Scalar>(
    shape: &BodyShape<T>,
    delta: &PerturbationVector<T>,
) -> Result<Vec<PercentRow>, BodyError> {
    if delta.dim() != shape.dim() {
        return Err(BodyError::DimensionMismatch {
            expected: shape.dim(),
            found: delta.dim(),
        });
    }
    Ok(shape
        .part_names
        .iter()
        .zip(&shape.attackable)
        .zip(&delta.deltas)
        .map(|((name, &m), &d)| PercentRow {
            part: name.clone(),
            percent: m.then(|| round_percent(d.to_f64_lossy())),
        })
        .collect())
}

fn round_percent(ratio: f64) -> f64 {
    let p = (ratio * 100.0 * 100.0).round() / 100.0;
    // Avoid "-0.00".
    if p == 0.0 {
        0.0
    } else {
        p
    }
}

/// Table cell text: `+4.82`, `-4.74`, `+0.00`, or `-`.
pub fn format_percent(percent: Option<f64>) -> String {
    match percent {
        Some(p) => format!("{p:+.2}"),
        None => "-".to_string(),
    }
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RawRobotBody<T> {
    name: String,
    length: BodyShape<T>,
    thickness: BodyShape<T>,
}

impl<T: Scalar> TryFrom<RawRobotBody<T>> for RobotBody<T> {
    type Error = BodyError;

    fn try_from(raw: RawRobotBody<T>) -> Result<Self, Self::Error> {
        RobotBody::new(raw.name, raw.length, raw.thickness)
    }
}

/// Length and thickness shapes of one robot. Both families share part
/// names and mirror pairs; attackability may differ.
///
/// This is also the on-disk morphology file format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RawRobotBody<T>")]
pub struct RobotBody<T> {
    pub name: String,
    length: BodyShape<T>,
    thickness: BodyShape<T>,
}

impl<T: Scalar> RobotBody<T> {
    pub fn new(
        name: impl Into<String>,
        length: BodyShape<T>,
        thickness: BodyShape<T>,
    ) -> Result<Self, BodyError> {
        if length.kind != DimensionKind::Length {
            return Err(BodyError::WrongKind {
                expected: DimensionKind::Length,
                found: length.kind,
            });
        }
        if thickness.kind != DimensionKind::Thickness {
            return Err(BodyError::WrongKind {
                expected: DimensionKind::Thickness,
                found: thickness.kind,
            });
        }
        if length.part_names != thickness.part_names {
            return Err(BodyError::InconsistentBody { what: "part names" });
        }
        if length.mirror_pairs != thickness.mirror_pairs {
            return Err(BodyError::InconsistentBody {
                what: "mirror pairs",
            });
        }
        Ok(Self {
            name: name.into(),
            length,
            thickness,
        })
    }

    pub fn length(&self) -> &BodyShape<T> {
        &self.length
    }

    pub fn thickness(&self) -> &BodyShape<T> {
        &self.thickness
    }

    pub fn parts(&self) -> usize {
        self.length.dim()
    }

    pub fn shape(&self, kind: DimensionKind) -> &BodyShape<T> {
        match kind {
            DimensionKind::Length => &self.length,
            DimensionKind::Thickness => &self.thickness,
        }
    }

    /// Dimension of the search vector for `kind`. `Both` concatenates
    /// lengths then thicknesses.
    pub fn search_dim(&self, kind: AttackKind) -> usize {
        match kind {
            AttackKind::Length | AttackKind::Thickness => self.parts(),
            AttackKind::Both => 2 * self.parts(),
        }
    }

    pub fn attack_mask(&self, kind: AttackKind) -> Vec<bool> {
        match kind {
            AttackKind::Length => self.length.attackable.clone(),
            AttackKind::Thickness => self.thickness.attackable.clone(),
            AttackKind::Both => self
                .length
                .attackable
                .iter()
                .chain(&self.thickness.attackable)
                .copied()
                .collect(),
        }
    }

    /// Splits a flat search vector into per-family perturbations.
    pub fn split(
        &self,
        kind: AttackKind,
        flat: &PerturbationVector<T>,
    ) -> Result<(PerturbationVector<T>, PerturbationVector<T>), BodyError> {
        let n = self.parts();
        let expected = self.search_dim(kind);
        if flat.dim() != expected {
            return Err(BodyError::DimensionMismatch {
                expected,
                found: flat.dim(),
            });
        }
        let eps = flat.epsilon;
        let zero = || PerturbationVector::zeros(n, eps);
        let part = |s: &[T]| PerturbationVector {
            deltas: s.to_vec(),
            epsilon: eps,
        };
        Ok(match kind {
            AttackKind::Length => (part(&flat.deltas), zero()),
            AttackKind::Thickness => (zero(), part(&flat.deltas)),
            AttackKind::Both => (part(&flat.deltas[..n]), part(&flat.deltas[n..])),
        })
    }

    pub fn perturb(
        &self,
        kind: AttackKind,
        flat: &PerturbationVector<T>,
    ) -> Result<PerturbedBody<T>, BodyError> {
        let (dl, dt) = self.split(kind, flat)?;
        Ok(PerturbedBody {
            lengths: apply_perturbation(&self.length, &dl)?,
            thicknesses: apply_perturbation(&self.thickness, &dt)?,
        })
    }

    pub fn clean(&self) -> PerturbedBody<T> {
        PerturbedBody {
            lengths: AdversarialShape::clean(&self.length),
            thicknesses: AdversarialShape::clean(&self.thickness),
        }
    }
}

/// The morphology an environment is reset with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PerturbedBody<T> {
    pub lengths: AdversarialShape<T>,
    pub thicknesses: AdversarialShape<T>,
}
