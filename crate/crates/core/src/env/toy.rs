//! Closed-form toy walkers.
//!
//! Per episode the morphology fixes three quantities:
//!
//! * asymmetry `A = Σ_pairs |lᵢ - lⱼ| / (lᵢ + lⱼ)` over the length mirror pairs,
//! * mass ratio `m/m₀` with `m = ρ Σ lengthᵢ·thicknessᵢ`,
//! * forward speed `v = v0·exp(-k_a·A)·(m₀/m)^k_m`.
//!
//! Each step the tilt evolves as `θ' = λθ + c_tilt·A + σ·η` with `η` the
//! policy's standard-normal draw. Torque is `|u|² = (m/m₀)²`, impact is
//! `|f|² = (m/m₀)²·(1 + |θ'|/θ_max)`, and the walker falls once
//! `|θ'| ≥ θ_max`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reward::RewardForm;
use super::{
    run_episode_with, EnvError, Environment, EpisodeOutcome, EpisodeRng, Policy, Transition,
};
use crate::body::{BodyShape, DimensionKind, PerturbedBody, RobotBody};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GaitConstants<T> {
    /// Base forward speed per step.
    pub v0: T,
    /// Asymmetry penalty rate.
    pub k_a: T,
    /// Mass penalty exponent.
    pub k_m: T,
    /// Tilt decay, in `[0, 1)`.
    pub lambda: T,
    /// Asymmetry-to-tilt coupling.
    pub c_tilt: T,
    /// Fall threshold.
    pub theta_max: T,
    /// Tilt noise scale. Zero makes episodes deterministic.
    pub sigma: T,
    /// Density for the mass law.
    pub rho: T,
}

impl<T: Scalar> Default for GaitConstants<T> {
    fn default() -> Self {
        Self {
            v0: T::of(1.0),
            k_a: T::of(20.0),
            k_m: T::of(1.0),
            lambda: T::of(0.9),
            c_tilt: T::of(2.0),
            theta_max: T::of(1.0),
            sigma: T::of(0.05),
            rho: T::of(1.0),
        }
    }
}

impl<T: Scalar> GaitConstants<T> {
    pub fn validate(&self) -> Result<(), EnvError> {
        let positive = [
            ("v0", self.v0),
            ("k_a", self.k_a),
            ("k_m", self.k_m),
            ("c_tilt", self.c_tilt),
            ("theta_max", self.theta_max),
            ("rho", self.rho),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(EnvError::InvalidSpec(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.lambda >= T::zero() && self.lambda < T::one()) {
            return Err(EnvError::InvalidSpec(format!(
                "lambda must lie in [0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= T::zero()) {
            return Err(EnvError::InvalidSpec(format!(
                "sigma must be non-negative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: T) -> Self {
        self.sigma = sigma;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ToyWalkerSpec<T> {
    pub body: RobotBody<T>,
    #[serde(default)]
    pub gait: GaitConstants<T>,
    pub reward: RewardForm,
}

impl<T: Scalar> ToyWalkerSpec<T> {
    pub fn biped() -> Self {
        Self {
            body: toy_biped_body(),
            gait: GaitConstants::default(),
            reward: RewardForm::Walker2d,
        }
    }

    pub fn quadruped() -> Self {
        Self {
            body: toy_quadruped_body(),
            gait: GaitConstants::default(),
            reward: RewardForm::Ant,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyState<T> {
    pub t: usize,
    pub theta: T,
    pub fallen: bool,
    pub asymmetry: T,
    pub mass_ratio: T,
    pub v_fwd: T,
}

/// Action of the open-loop toy policy: one standard-normal tilt disturbance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToyAction<T> {
    pub noise: T,
}

/// Built-in open-loop policy. It contributes only the random stream.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoisePolicy;

impl<T: Scalar> Policy<ToyState<T>, ToyAction<T>> for NoisePolicy {
    fn act(&self, _state: &ToyState<T>, rng: &mut EpisodeRng) -> ToyAction<T> {
        ToyAction {
            noise: T::standard_normal(rng),
        }
    }
}

/// One row of a debug trace dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub v_fwd: f64,
    pub theta: f64,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct ToyWalker<T> {
    spec: ToyWalkerSpec<T>,
    clean_mass: T,
}

impl<T: Scalar> ToyWalker<T> {
    pub fn new(spec: ToyWalkerSpec<T>) -> Result<Self, EnvError> {
        spec.gait.validate()?;
        let body = &spec.body;
        let clean_mass = mass(
            spec.gait.rho,
            body.length().values(),
            body.thickness().values(),
        );
        Ok(Self { spec, clean_mass })
    }

    pub fn spec(&self) -> &ToyWalkerSpec<T> {
        &self.spec
    }

    pub fn body(&self) -> &RobotBody<T> {
        &self.spec.body
    }

    /// `Σ |lᵢ - lⱼ| / (lᵢ + lⱼ)` over the mirror pairs.
    pub fn asymmetry(&self, lengths: &[T]) -> T {
        self.spec
            .body
            .length()
            .mirror_pairs()
            .iter()
            .map(|&(i, j)| (lengths[i] - lengths[j]).abs() / (lengths[i] + lengths[j]))
            .sum()
    }

    /// Draws the policy noise from `rng` and advances one step.
    pub fn toy_step<R: Rng + ?Sized>(
        &self,
        state: &ToyState<T>,
        rng: &mut R,
    ) -> Result<Transition<ToyState<T>, T>, EnvError> {
        let action = ToyAction {
            noise: T::standard_normal(rng),
        };
        self.step(state, &action)
    }

    /// Runs one episode under [`NoisePolicy`] and records every step.
    pub fn trace_episode(
        &self,
        body: &PerturbedBody<T>,
        horizon: usize,
        seed: u64,
    ) -> Result<(EpisodeOutcome<T>, Vec<TraceRow>), EnvError> {
        let mut rows = Vec::new();
        let out = run_episode_with(self, &NoisePolicy, body, horizon, seed, |t, s, r| {
            rows.push(TraceRow {
                t,
                v_fwd: s.v_fwd.to_f64_lossy(),
                theta: s.theta.to_f64_lossy(),
                reward: r.to_f64_lossy(),
            })
        })?;
        Ok((out, rows))
    }
}

fn mass<T: Scalar>(rho: T, lengths: &[T], thicknesses: &[T]) -> T {
    rho * lengths
        .iter()
        .zip(thicknesses)
        .map(|(&l, &t)| l * t)
        .sum::<T>()
}

impl<T: Scalar> Environment<T> for ToyWalker<T> {
    type State = ToyState<T>;
    type Action = ToyAction<T>;

    fn reset(&self, body: &PerturbedBody<T>, _seed: u64) -> Result<ToyState<T>, EnvError> {
        let parts = self.spec.body.parts();
        for found in [body.lengths.values().len(), body.thicknesses.values().len()] {
            if found != parts {
                return Err(EnvError::MorphologyMismatch {
                    expected: parts,
                    found,
                });
            }
        }
        let g = &self.spec.gait;
        let lengths = body.lengths.values();
        let asymmetry = self.asymmetry(lengths);
        let mass_ratio = mass(g.rho, lengths, body.thicknesses.values()) / self.clean_mass;
        let v_fwd = g.v0 * (-g.k_a * asymmetry).exp() * mass_ratio.recip().powf(g.k_m);
        if !(asymmetry.is_finite() && mass_ratio.is_finite() && v_fwd.is_finite()) {
            return Err(EnvError::SimulationDiverged { step: 0 });
        }
        Ok(ToyState {
            t: 0,
            theta: T::zero(),
            fallen: false,
            asymmetry,
            mass_ratio,
            v_fwd,
        })
    }

    fn step(
        &self,
        state: &ToyState<T>,
        action: &ToyAction<T>,
    ) -> Result<Transition<ToyState<T>, T>, EnvError> {
        if state.fallen {
            return Ok(Transition {
                state: state.clone(),
                reward: T::zero(),
                terminated: true,
            });
        }
        let g = &self.spec.gait;
        let theta = g.lambda * state.theta + g.c_tilt * state.asymmetry + g.sigma * action.noise;
        let ratio_sq = state.mass_ratio * state.mass_ratio;
        let torque_sq = ratio_sq;
        let impact_sq = ratio_sq * (T::one() + theta.abs() / g.theta_max);
        let reward = self.spec.reward.evaluate(state.v_fwd, torque_sq, impact_sq);
        if !(theta.is_finite() && reward.is_finite()) {
            return Err(EnvError::SimulationDiverged { step: state.t });
        }
        let fallen = theta.abs() >= g.theta_max;
        Ok(Transition {
            state: ToyState {
                t: state.t + 1,
                theta,
                fallen,
                ..state.clone()
            },
            reward,
            terminated: fallen,
        })
    }
}

fn shape<T: Scalar>(
    kind: DimensionKind,
    names: &[&str],
    values: &[f64],
    pairs: &[(usize, usize)],
    attackable: Vec<bool>,
) -> BodyShape<T> {
    BodyShape::new(
        kind,
        names.iter().map(|s| s.to_string()).collect(),
        values.iter().map(|&v| T::of(v)).collect(),
        pairs.to_vec(),
        attackable,
    )
    .expect("preset shapes are valid")
}

const BIPED_PARTS: [&str; 7] = [
    "torso",
    "right thigh",
    "right leg",
    "right foot",
    "left thigh",
    "left leg",
    "left foot",
];
// (left, right)
const BIPED_PAIRS: [(usize, usize); 3] = [(4, 1), (5, 2), (6, 3)];

/// Seven-part planar biped: torso plus thigh, leg and foot on each side.
pub fn toy_biped_body<T: Scalar>() -> RobotBody<T> {
    let lengths = [0.4, 0.45, 0.5, 0.2, 0.45, 0.5, 0.2];
    let thicknesses = [0.05, 0.05, 0.04, 0.06, 0.05, 0.04, 0.06];
    RobotBody::new(
        "toy-biped",
        shape(
            DimensionKind::Length,
            &BIPED_PARTS,
            &lengths,
            &BIPED_PAIRS,
            vec![true; 7],
        ),
        shape(
            DimensionKind::Thickness,
            &BIPED_PARTS,
            &thicknesses,
            &BIPED_PAIRS,
            vec![true; 7],
        ),
    )
    .expect("preset body is valid")
}

const QUADRUPED_PARTS: [&str; 13] = [
    "torso",
    "left front thigh",
    "left front leg",
    "left front foot",
    "right front thigh",
    "right front leg",
    "right front foot",
    "left back thigh",
    "left back leg",
    "left back foot",
    "right back thigh",
    "right back leg",
    "right back foot",
];
// Each pair joins a part on the left-front/right-back diagonal with its
// counterpart on the right-front/left-back diagonal.
const QUADRUPED_PAIRS: [(usize, usize); 6] = [(1, 4), (2, 5), (3, 6), (7, 10), (8, 11), (9, 12)];

/// Thirteen-part quadruped. The torso is a sphere, so its length is fixed.
pub fn toy_quadruped_body<T: Scalar>() -> RobotBody<T> {
    let leg = [0.2828, 0.2828, 0.5657];
    let mut lengths = vec![0.25];
    let mut thicknesses = vec![0.25];
    for _ in 0..4 {
        lengths.extend_from_slice(&leg);
        thicknesses.extend_from_slice(&[0.08, 0.08, 0.08]);
    }
    let mut length_mask = vec![true; 13];
    length_mask[0] = false;
    RobotBody::new(
        "toy-quadruped",
        shape(
            DimensionKind::Length,
            &QUADRUPED_PARTS,
            &lengths,
            &QUADRUPED_PAIRS,
            length_mask,
        ),
        shape(
            DimensionKind::Thickness,
            &QUADRUPED_PARTS,
            &thicknesses,
            &QUADRUPED_PAIRS,
            vec![true; 13],
        ),
    )
    .expect("preset body is valid")
}

pub fn toy_biped<T: Scalar>() -> ToyWalker<T> {
    ToyWalker::new(ToyWalkerSpec::biped()).expect("preset spec is valid")
}

pub fn toy_quadruped<T: Scalar>() -> ToyWalker<T> {
    ToyWalker::new(ToyWalkerSpec::quadruped()).expect("preset spec is valid")
}
