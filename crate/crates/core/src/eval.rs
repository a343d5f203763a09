//! Monte-Carlo fitness estimation.
//!
//! A fitness estimate is the mean cumulative reward over `M` episodes whose
//! seeds come from one *seed block*. The grand average repeats that over
//! `runs` disjoint blocks and averages the run means.
//!
//! Episodes may run concurrently, but every result is gathered into its index
//! slot and summed in index order, so estimates are bit-reproducible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::{AttackKind, BodyError, PerturbationVector, PerturbedBody, RobotBody};
use crate::desearch::Fitness;
use crate::env::{run_episode, EnvError, Environment, EpisodeOutcome, Policy};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("episode count must be at least 1")]
    NoEpisodes,
    #[error("run count must be at least 1")]
    NoRuns,
    #[error("episode {episode} of seed block {block} returned a non-finite reward")]
    NonFinite { block: u32, episode: u32 },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Body(#[from] BodyError),
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function. A bijection on `u64`.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Episode seed for `(master, run, episode)`.
///
/// `splitmix64(splitmix64(master) ^ (run << 32 | episode))`. For a fixed
/// master seed this is injective over all `(run, episode)` pairs, since both
/// the packing and SplitMix64 are bijections. The mapping is part of the
/// output format: changing it changes every reported number.
pub fn derive_seed(master: u64, run: u32, episode: u32) -> u64 {
    let key = (u64::from(run) << 32) | u64::from(episode);
    splitmix64(splitmix64(master) ^ key)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FitnessEstimate<T> {
    pub mean: T,
    pub per_episode: Vec<T>,
    pub episodes: usize,
    pub seed_block: u32,
}

impl<T: Scalar> FitnessEstimate<T> {
    /// Builds an estimate from per-episode returns, summing in index order.
    pub fn from_returns(per_episode: Vec<T>, seed_block: u32) -> Self {
        let episodes = per_episode.len();
        let mean = ordered_mean(&per_episode);
        Self {
            mean,
            per_episode,
            episodes,
            seed_block,
        }
    }
}

fn ordered_mean<T: Scalar>(xs: &[T]) -> T {
    let mut sum = T::zero();
    for &x in xs {
        sum = sum + x;
    }
    sum / T::of(xs.len() as f64)
}

/// Mean cumulative reward over `episodes` rollouts seeded from
/// `derive_seed(master_seed, seed_block, 0..episodes)`.
pub fn average_cumulative_reward<T, E, P>(
    env: &E,
    policy: &P,
    body: &PerturbedBody<T>,
    episodes: usize,
    horizon: usize,
    master_seed: u64,
    seed_block: u32,
) -> Result<FitnessEstimate<T>, EvalError>
where
    T: Scalar,
    E: Environment<T> + Sync,
    P: Policy<E::State, E::Action> + Sync,
{
    if episodes == 0 {
        return Err(EvalError::NoEpisodes);
    }
    let outcomes: Vec<Result<EpisodeOutcome<T>, EnvError>> = (0..episodes as u32)
        .into_par_iter()
        .map(|m| {
            let seed = derive_seed(master_seed, seed_block, m);
            run_episode(env, policy, body, horizon, seed)
        })
        .collect();
    let mut returns = Vec::with_capacity(episodes);
    for (m, out) in outcomes.into_iter().enumerate() {
        let g = out?.cumulative_reward;
        if !g.is_finite() {
            return Err(EvalError::NonFinite {
                block: seed_block,
                episode: m as u32,
            });
        }
        returns.push(g);
    }
    Ok(FitnessEstimate::from_returns(returns, seed_block))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GrandAverage<T> {
    pub mean: T,
    pub run_means: Vec<T>,
}

/// Average of `runs` independent fitness estimates on seed blocks
/// `0..runs`.
pub fn grand_average<T, E, P>(
    env: &E,
    policy: &P,
    body: &PerturbedBody<T>,
    runs: usize,
    episodes: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<GrandAverage<T>, EvalError>
where
    T: Scalar,
    E: Environment<T> + Sync,
    P: Policy<E::State, E::Action> + Sync,
{
    if runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let estimates: Vec<Result<FitnessEstimate<T>, EvalError>> = (0..runs as u32)
        .into_par_iter()
        .map(|i| average_cumulative_reward(env, policy, body, episodes, horizon, master_seed, i))
        .collect();
    let run_means = estimates
        .into_iter()
        .map(|e| e.map(|e| e.mean))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GrandAverage {
        mean: ordered_mean(&run_means),
        run_means,
    })
}

/// DE fitness backed by Monte-Carlo rollouts: maps a flat search vector onto
/// the robot's morphology and returns the `M`-episode mean reward.
pub struct RolloutFitness<'a, T, E, P> {
    pub env: &'a E,
    pub policy: &'a P,
    pub body: &'a RobotBody<T>,
    pub kind: AttackKind,
    pub epsilon: T,
    pub episodes: usize,
    pub horizon: usize,
    pub master_seed: u64,
}

impl<T, E, P> RolloutFitness<'_, T, E, P>
where
    T: Scalar,
    E: Environment<T> + Sync,
    P: Policy<E::State, E::Action> + Sync,
{
    pub fn estimate(&self, delta: &[T], seed_block: u32) -> Result<FitnessEstimate<T>, EvalError> {
        let mask = self.body.attack_mask(self.kind);
        let pv = PerturbationVector::new(delta.to_vec(), self.epsilon, &mask)?;
        let morph = self.body.perturb(self.kind, &pv)?;
        average_cumulative_reward(
            self.env,
            self.policy,
            &morph,
            self.episodes,
            self.horizon,
            self.master_seed,
            seed_block,
        )
    }
}

impl<T, E, P> Fitness<T> for RolloutFitness<'_, T, E, P>
where
    T: Scalar,
    E: Environment<T> + Sync,
    P: Policy<E::State, E::Action> + Sync,
{
    type Error = EvalError;

    fn evaluate(&self, delta: &[T], seed_block: u32) -> Result<T, EvalError> {
        self.estimate(delta, seed_block).map(|e| e.mean)
    }
}
