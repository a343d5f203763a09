//! Adversarial body-shape search for legged walkers.
//!
//! Finds bounded per-part length/thickness ratio perturbations that minimize
//! a walking controller's expected cumulative reward, using DE/best/1/bin
//! differential evolution over Monte-Carlo rollouts.
//!
//! * [`body`]: body shapes, perturbation vectors, clipping and report rows.
//! * [`env`]: environment/policy contracts, reward forms and toy walkers.
//! * [`eval`]: seeded Monte-Carlo fitness and grand averages.
//! * [`desearch`]: the differential-evolution loop.
//! * [`harness`]: experiment configs, the epsilon sweep and report files.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, which is what the harness uses.

pub mod body;
pub mod desearch;
pub mod env;
pub mod eval;
pub mod harness;
mod scalar;

pub use scalar::Scalar;

pub type BodyShape = body::BodyShape<f64>;
pub type PerturbationVector = body::PerturbationVector<f64>;
pub type AdversarialShape = body::AdversarialShape<f64>;
pub type RobotBody = body::RobotBody<f64>;
pub type PerturbedBody = body::PerturbedBody<f64>;
pub type ToyWalker = env::ToyWalker<f64>;
pub type ToyWalkerSpec = env::ToyWalkerSpec<f64>;
pub type GaitConstants = env::GaitConstants<f64>;
pub type EpisodeOutcome = env::EpisodeOutcome<f64>;
pub type FitnessEstimate = eval::FitnessEstimate<f64>;
pub type GrandAverage = eval::GrandAverage<f64>;
pub type DeConfig = desearch::DeConfig<f64>;
pub type SearchResult = desearch::SearchResult<f64>;

pub type BodyShapeF32 = body::BodyShape<f32>;
pub type PerturbationVectorF32 = body::PerturbationVector<f32>;
pub type ToyWalkerF32 = env::ToyWalker<f32>;
pub type DeConfigF32 = desearch::DeConfig<f32>;
pub type SearchResultF32 = desearch::SearchResult<f32>;

pub use body::{AttackKind, DimensionKind};
pub use desearch::Benchmark;
pub use env::{RewardForm, Termination};
