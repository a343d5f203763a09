//! Per-step reward forms for the three walker families.
//!
//! Each takes the forward velocity and the torque / impact vectors. The
//! `*_from_norms` variants take squared norms directly, which is all the toy
//! dynamics produce.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardForm {
    /// `v - 1e-3 |u|² + 1`
    Walker2d,
    /// `v - 0.5 |u|² - 0.5e-3 |f|² + 1`
    Ant,
    /// `5 v - 0.1 |u|² - 0.5e-6 |f|² + 4`
    Humanoid,
}

impl RewardForm {
    pub fn evaluate<T: Scalar>(self, v_fwd: T, torque_sq: T, impact_sq: T) -> T {
        match self {
            RewardForm::Walker2d => walker2d_from_norms(v_fwd, torque_sq),
            RewardForm::Ant => ant_from_norms(v_fwd, torque_sq, impact_sq),
            RewardForm::Humanoid => humanoid_from_norms(v_fwd, torque_sq, impact_sq),
        }
    }
}

pub fn squared_norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum()
}

#[inline]
pub fn walker2d_from_norms<T: Scalar>(v_fwd: T, torque_sq: T) -> T {
    v_fwd - T::of(1e-3) * torque_sq + T::one()
}

#[inline]
pub fn ant_from_norms<T: Scalar>(v_fwd: T, torque_sq: T, impact_sq: T) -> T {
    v_fwd - T::of(0.5) * torque_sq - T::of(0.5e-3) * impact_sq + T::one()
}

#[inline]
pub fn humanoid_from_norms<T: Scalar>(v_fwd: T, torque_sq: T, impact_sq: T) -> T {
    T::of(5.0) * v_fwd - T::of(0.1) * torque_sq - T::of(0.5e-6) * impact_sq + T::of(4.0)
}

pub fn reward_walker2d<T: Scalar>(v_fwd: T, torque: &[T]) -> T {
    walker2d_from_norms(v_fwd, squared_norm(torque))
}

pub fn reward_ant<T: Scalar>(v_fwd: T, torque: &[T], impact: &[T]) -> T {
    ant_from_norms(v_fwd, squared_norm(torque), squared_norm(impact))
}

pub fn reward_humanoid<T: Scalar>(v_fwd: T, torque: &[T], impact: &[T]) -> T {
    humanoid_from_norms(v_fwd, squared_norm(torque), squared_norm(impact))
}
