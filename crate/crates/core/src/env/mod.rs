//! Environment and policy contracts, plus episode rollout.
//!
//! An environment is reset with a perturbed morphology and a seed, then
//! stepped with actions chosen by a policy. All randomness in an episode
//! flows through one [`EpisodeRng`] seeded from the episode seed, so equal
//! `(morphology, seed, horizon)` always give the same outcome.

mod reward;
mod toy;

pub use reward::{
    ant_from_norms, humanoid_from_norms, reward_ant, reward_humanoid, reward_walker2d,
    squared_norm, walker2d_from_norms, RewardForm,
};
pub use toy::{
    toy_biped, toy_biped_body, toy_quadruped, toy_quadruped_body, GaitConstants, NoisePolicy,
    ToyAction, ToyState, ToyWalker, ToyWalkerSpec, TraceRow,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::{BodyError, PerturbedBody};
use crate::scalar::Scalar;

pub type EpisodeRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("morphology has {found} parts, environment expects {expected}")]
    MorphologyMismatch { expected: usize, found: usize },
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Body(#[from] BodyError),
}

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S, T> {
    pub state: S,
    pub reward: T,
    pub terminated: bool,
}

pub trait Environment<T: Scalar> {
    type State;
    type Action;

    fn reset(&self, body: &PerturbedBody<T>, seed: u64) -> Result<Self::State, EnvError>;

    fn step(
        &self,
        state: &Self::State,
        action: &Self::Action,
    ) -> Result<Transition<Self::State, T>, EnvError>;
}

pub trait Policy<S, A> {
    fn act(&self, state: &S, rng: &mut EpisodeRng) -> A;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    Fell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EpisodeOutcome<T> {
    pub cumulative_reward: T,
    pub steps_taken: usize,
    pub termination: Termination,
}

/// Rolls out one episode of at most `horizon` steps and sums the rewards.
pub fn run_episode<T, E, P>(
    env: &E,
    policy: &P,
    body: &PerturbedBody<T>,
    horizon: usize,
    seed: u64,
) -> Result<EpisodeOutcome<T>, EnvError>
where
    T: Scalar,
    E: Environment<T>,
    P: Policy<E::State, E::Action>,
{
    run_episode_with(env, policy, body, horizon, seed, |_, _, _| {})
}

/// Like [`run_episode`], calling `observe(t, &state_after, reward)` after
/// every step.
pub fn run_episode_with<T, E, P, O>(
    env: &E,
    policy: &P,
    body: &PerturbedBody<T>,
    horizon: usize,
    seed: u64,
    mut observe: O,
) -> Result<EpisodeOutcome<T>, EnvError>
where
    T: Scalar,
    E: Environment<T>,
    P: Policy<E::State, E::Action>,
    O: FnMut(usize, &E::State, T),
{
    if horizon == 0 {
        return Err(EnvError::InvalidHorizon);
    }
    let mut rng = EpisodeRng::seed_from_u64(seed);
    let mut state = env.reset(body, seed)?;
    let mut total = T::zero();
    for t in 0..horizon {
        let action = policy.act(&state, &mut rng);
        let tr = env.step(&state, &action)?;
        total = total + tr.reward;
        observe(t, &tr.state, tr.reward);
        if tr.terminated {
            return Ok(EpisodeOutcome {
                cumulative_reward: total,
                steps_taken: t + 1,
                termination: Termination::Fell,
            });
        }
        state = tr.state;
    }
    Ok(EpisodeOutcome {
        cumulative_reward: total,
        steps_taken: horizon,
        termination: Termination::HorizonReached,
    })
}
