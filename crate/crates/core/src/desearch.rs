//! DE/best/1/bin differential evolution over the max-norm ball.
//!
//! The population lives in `[-ε, ε]^dim`. Each generation builds one trial per
//! individual from the current best plus a scaled difference of two other
//! members, mixes it with the target by binomial crossover, clips it back into
//! the ball, and keeps it if its fitness is no worse than the target's.
//! Fitness is minimized.
//!
//! Before generation 1 every initial individual is evaluated once and the
//! minimizer seeds the best individual. The best vector used for mutation is
//! frozen at the start of each generation, so the `NP` trial/target
//! evaluations of a generation are independent and run in parallel; selection
//! is then applied in index order.
//!
//! Both the trial and the target are re-evaluated every generation, each on a
//! fresh seed block. Blocks `0..NP` belong to the bootstrap; generation `g`
//! uses `NP + 2·((g-1)·NP + i)` for target `i` and the next block for its trial.

use std::convert::Infallible;
use std::fmt::Debug;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::body::PerturbationVector;
use crate::scalar::Scalar;

/// Objective minimized by [`search`].
///
/// `seed_block` identifies the random numbers a stochastic fitness should use
/// for this call; deterministic objectives ignore it.
pub trait Fitness<T>: Sync {
    type Error: std::error::Error + Send + Sync + 'static;

    fn evaluate(&self, delta: &[T], seed_block: u32) -> Result<T, Self::Error>;
}

/// Adapts an infallible, deterministic objective.
pub struct Objective<F>(pub F);

impl<T, F> Fitness<T> for Objective<F>
where
    F: Fn(&[T]) -> T + Sync,
{
    type Error = Infallible;

    fn evaluate(&self, delta: &[T], _seed_block: u32) -> Result<T, Infallible> {
        Ok((self.0)(delta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Sphere,
    Rastrigin,
}

impl Benchmark {
    pub fn value<T: Scalar>(self, x: &[T]) -> T {
        match self {
            Benchmark::Sphere => x.iter().map(|&v| v * v).sum(),
            Benchmark::Rastrigin => {
                let ten = T::of(10.0);
                let two_pi = T::of(std::f64::consts::TAU);
                let n = T::of(x.len() as f64);
                ten * n
                    + x.iter()
                        .map(|&v| v * v - ten * (two_pi * v).cos())
                        .sum::<T>()
            }
        }
    }
}

impl<T: Scalar> Fitness<T> for Benchmark {
    type Error = Infallible;

    fn evaluate(&self, delta: &[T], _seed_block: u32) -> Result<T, Infallible> {
        Ok(self.value(delta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DeConfig<T> {
    /// Population size `NP`.
    #[serde(alias = "np")]
    pub population: usize,
    /// Mutation scale `F`.
    #[serde(alias = "f")]
    pub mutation_scale: T,
    /// Crossover constant `CR`.
    #[serde(alias = "cr")]
    pub crossover_rate: T,
    pub generations: usize,
    pub epsilon: T,
    pub dim: usize,
    pub master_seed: u64,
}

impl<T: Scalar> DeConfig<T> {
    /// `F = 0.5`, `CR = 0.7`, 100 generations.
    pub fn new(population: usize, dim: usize, epsilon: T, master_seed: u64) -> Self {
        Self {
            population,
            mutation_scale: T::of(0.5),
            crossover_rate: T::of(0.7),
            generations: 100,
            epsilon,
            dim,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.population < 4 {
            return Err(format!(
                "population must be at least 4, got {}",
                self.population
            ));
        }
        if self.dim == 0 {
            return Err("dimension must be at least 1".into());
        }
        if !(self.mutation_scale.is_finite() && self.mutation_scale > T::zero()) {
            return Err(format!("F must be positive, got {}", self.mutation_scale));
        }
        if !(self.crossover_rate >= T::zero() && self.crossover_rate <= T::one()) {
            return Err(format!(
                "CR must lie in [0, 1], got {}",
                self.crossover_rate
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= T::zero()) {
            return Err(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SearchResult<T> {
    pub delta_best: PerturbationVector<T>,
    pub g_min: T,
    /// `G_min` after the bootstrap (index 0) and after each generation.
    pub best_trace: Vec<T>,
    /// Number of fitness evaluations performed.
    pub evaluations: usize,
    pub population_final: Vec<PerturbationVector<T>>,
}

#[derive(Debug, Error)]
pub enum SearchError<T: Debug, E: std::error::Error + 'static> {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("fitness evaluation failed in generation {generation}: {source}")]
    Fitness {
        generation: usize,
        #[source]
        source: E,
        /// `G_min` values recorded before the failure.
        partial_trace: Vec<T>,
    },
}

/// `best + F·(r1 - r2)`, before clipping.
pub fn mutate<T: Scalar>(best: &[T], r1: &[T], r2: &[T], scale: T) -> Vec<T> {
    best.iter()
        .zip(r1.iter().zip(r2))
        .map(|(&b, (&a, &c))| b + scale * (a - c))
        .collect()
}

/// Binomial crossover with explicit random inputs: gene `j` comes from the
/// mutant iff `draws[j] ≤ CR` or `j == forced`.
pub fn crossover_with<T: Scalar>(
    target: &[T],
    mutant: &[T],
    crossover_rate: T,
    forced: usize,
    draws: &[T],
) -> Vec<T> {
    debug_assert_eq!(target.len(), mutant.len());
    debug_assert_eq!(target.len(), draws.len());
    target
        .iter()
        .zip(mutant)
        .zip(draws)
        .enumerate()
        .map(|(j, ((&t, &m), &r))| {
            if r <= crossover_rate || j == forced {
                m
            } else {
                t
            }
        })
        .collect()
}

/// Binomial crossover. Draws the forced index first, then one uniform per
/// gene.
pub fn crossover<T: Scalar, R: Rng + ?Sized>(
    target: &[T],
    mutant: &[T],
    crossover_rate: T,
    rng: &mut R,
) -> Vec<T> {
    assert_eq!(target.len(), mutant.len(), "crossover: dimension mismatch");
    let forced = rng.random_range(0..target.len());
    let draws: Vec<T> = (0..target.len()).map(|_| T::unit_uniform(rng)).collect();
    crossover_with(target, mutant, crossover_rate, forced, &draws)
}

/// Two distinct indices from `0..np`, both different from `exclude`.
pub fn pick_donors<R: Rng + ?Sized>(rng: &mut R, np: usize, exclude: usize) -> (usize, usize) {
    let picked = index::sample(rng, np - 1, 2);
    let lift = |k: usize| if k < exclude { k } else { k + 1 };
    (lift(picked.index(0)), lift(picked.index(1)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Trial replaces the target.
    pub accepted: bool,
    /// Trial becomes the new best.
    pub improves_best: bool,
}

/// Greedy selection: the trial survives on `≤`, and replaces the best only
/// on strict improvement over `g_min`.
pub fn select<T: Scalar>(trial: T, target: T, g_min: T) -> Selection {
    let accepted = trial <= target;
    Selection {
        accepted,
        improves_best: accepted && trial < g_min,
    }
}

fn first_error<T, E>(results: Vec<Result<T, E>>) -> Result<Vec<T>, E> {
    results.into_iter().collect()
}

/// Runs the full search. `mask` marks which coordinates may move.
pub fn search<T, F>(
    fitness: &F,
    config: &DeConfig<T>,
    mask: &[bool],
) -> Result<SearchResult<T>, SearchError<T, F::Error>>
where
    T: Scalar,
    F: Fitness<T>,
{
    config.validate().map_err(SearchError::InvalidConfig)?;
    if mask.len() != config.dim {
        return Err(SearchError::InvalidConfig(format!(
            "mask has {} entries, dimension is {}",
            mask.len(),
            config.dim
        )));
    }
    let np = config.population;
    let eps = config.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);

    let mut population: Vec<PerturbationVector<T>> = (0..np)
        .map(|_| PerturbationVector::sample_initial(config.dim, eps, mask, &mut rng))
        .collect();

    let initial = first_error(
        population
            .par_iter()
            .enumerate()
            .map(|(i, p)| fitness.evaluate(p.deltas(), i as u32))
            .collect(),
    )
    .map_err(|source| SearchError::Fitness {
        generation: 0,
        source,
        partial_trace: Vec::new(),
    })?;
    let mut evaluations = np;

    let mut best_index = 0;
    for (i, &g) in initial.iter().enumerate() {
        if g < initial[best_index] {
            best_index = i;
        }
    }
    let mut g_min = initial[best_index];
    let mut delta_best = population[best_index].clone();
    let mut best_trace = Vec::with_capacity(config.generations + 1);
    best_trace.push(g_min);

    let mut next_block = np as u32;
    for generation in 1..=config.generations {
        let best = delta_best.clone();
        let trials: Vec<PerturbationVector<T>> = (0..np)
            .map(|i| {
                let (r1, r2) = pick_donors(&mut rng, np, i);
                let mutant = mutate(
                    best.deltas(),
                    population[r1].deltas(),
                    population[r2].deltas(),
                    config.mutation_scale,
                );
                let trial = crossover(
                    population[i].deltas(),
                    &mutant,
                    config.crossover_rate,
                    &mut rng,
                );
                PerturbationVector::clamp(&trial, eps, mask)
            })
            .collect();

        let base = next_block;
        let scores = first_error(
            (0..np)
                .into_par_iter()
                .map(|i| {
                    let target_block = base + 2 * i as u32;
                    let target = fitness.evaluate(population[i].deltas(), target_block)?;
                    let trial = fitness.evaluate(trials[i].deltas(), target_block + 1)?;
                    Ok((trial, target))
                })
                .collect(),
        )
        .map_err(|source| SearchError::Fitness {
            generation,
            source,
            partial_trace: best_trace.clone(),
        })?;
        next_block += 2 * np as u32;
        evaluations += 2 * np;

        for (i, (trial_trial, (trial_fit, target_fit))) in
            trials.into_iter().zip(scores).enumerate()
        {
            let sel = select(trial_fit, target_fit, g_min);
            if sel.improves_best {
                g_min = trial_fit;
                delta_best = trial_trial.clone();
            }
            if sel.accepted {
                population[i] = trial_trial;
            }
        }
        best_trace.push(g_min);
        log::debug!("generation {generation}: G_min = {g_min}");
    }

    Ok(SearchResult {
        delta_best,
        g_min,
        best_trace,
        evaluations,
        population_final: population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Mutex;

    #[test]
    fn mutate_examples() {
        let m: Vec<f64> = mutate(&[0.02, -0.01], &[0.01, 0.03], &[0.00, 0.01], 0.5);
        assert!((m[0] - 0.025).abs() < 1e-15);
        assert!(m[1].abs() < 1e-15);
        assert_eq!(
            mutate(&[0.1, 0.2], &[0.3, 0.4], &[0.0, 0.0], 0.0),
            vec![0.1, 0.2]
        );
        assert_eq!(
            mutate(&[0.1, 0.2], &[0.3, 0.4], &[0.3, 0.4], 0.5),
            vec![0.1, 0.2]
        );
    }

    #[test]
    fn crossover_extremes() {
        let target = [1.0, 2.0, 3.0, 4.0];
        let mutant = [-1.0, -2.0, -3.0, -4.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(crossover(&target, &mutant, 1.0, &mut rng), mutant.to_vec());
            let t = crossover(&target, &mutant, 0.0, &mut rng);
            assert_eq!(t.iter().zip(&target).filter(|(a, b)| a != b).count(), 1);
        }
        assert_eq!(
            crossover_with(&target, &mutant, 0.0, 2, &[0.5; 4]),
            vec![1.0, 2.0, -3.0, 4.0]
        );
    }

    #[test]
    fn crossover_rate_matches_expected_fraction() {
        // P(gene from mutant) = CR + (1 - CR)/dim.
        let dim = 7;
        let cr = 0.7;
        let trials = 100_000;
        let target = vec![0.0; dim];
        let mutant = vec![1.0; dim];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut from_mutant = 0usize;
        for _ in 0..trials {
            from_mutant += crossover(&target, &mutant, cr, &mut rng)
                .iter()
                .filter(|&&v| v == 1.0)
                .count();
        }
        let n = (trials * dim) as f64;
        let p = cr + (1.0 - cr) / dim as f64;
        let observed = from_mutant as f64 / n;
        let se = (p * (1.0 - p) / n).sqrt();
        assert!(
            (observed - p).abs() < 3.0 * se,
            "observed {observed}, expected {p}"
        );
    }

    #[test]
    fn donors_are_distinct_and_exclude_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for np in 4..10 {
            for i in 0..np {
                for _ in 0..50 {
                    let (a, b) = pick_donors(&mut rng, np, i);
                    assert!(a != b && a != i && b != i && a < np && b < np);
                }
            }
        }
    }

    #[test]
    fn selection_examples() {
        assert!(select(5.0, 7.0, 1.0).accepted);
        assert!(!select(8.0, 7.0, 1.0).accepted);
        assert!(select(7.0, 7.0, 1.0).accepted);
        assert_eq!(
            select(7.0, 8.0, 9.0),
            Selection {
                accepted: true,
                improves_best: true
            }
        );
        assert!(!select(9.0, 9.5, 9.0).improves_best);
    }

    #[test]
    fn benchmark_values() {
        assert_eq!(Benchmark::Sphere.value(&[0.0f64; 3]), 0.0);
        assert_eq!(Benchmark::Sphere.value(&[1.0, 2.0]), 5.0);
        assert!(Benchmark::Rastrigin.value(&[0.0f64; 4]).abs() < 1e-12);
        // Nearest local minimum to the origin sits just below 1.
        let near = Benchmark::Rastrigin.value(&[0.995f64, 0.0]);
        assert!(near > 0.9 && near < 1.1);
    }

    #[test]
    fn config_validation() {
        let mut c = DeConfig::new(3, 2, 0.1, 0);
        assert!(c.validate().is_err());
        c.population = 4;
        assert!(c.validate().is_ok());
        c.crossover_rate = 1.5;
        assert!(c.validate().is_err());
        let c = DeConfig::new(10, 2, 0.1, 0);
        let err = search(&Benchmark::Sphere, &c, &[true; 3]).unwrap_err();
        assert!(matches!(err, SearchError::InvalidConfig(_)));
    }

    #[test]
    fn zero_generations_returns_bootstrap() {
        let mut c = DeConfig::new(6, 3, 0.5, 11);
        c.generations = 0;
        let r = search(&Benchmark::Sphere, &c, &[true; 3]).unwrap();
        assert_eq!(r.evaluations, 6);
        assert_eq!(r.best_trace, vec![r.g_min]);
        let min = r
            .population_final
            .iter()
            .map(|p| Benchmark::Sphere.value(p.deltas()))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.g_min, min);
        assert_eq!(Benchmark::Sphere.value(r.delta_best.deltas()), min);
    }

    #[test]
    fn sphere_converges() {
        let c = DeConfig::new(14, 7, 0.5, 3);
        let r = search(&Benchmark::Sphere, &c, &[true; 7]).unwrap();
        assert!(r.delta_best.max_norm() < 1e-2);
        assert_eq!(r.best_trace.len(), 101);
        assert_eq!(r.evaluations, 14 + 100 * 28);
    }

    #[test]
    fn works_in_single_precision() {
        let c = DeConfig::<f32>::new(14, 5, 0.5, 8);
        let r = search(&Benchmark::Sphere, &c, &[true; 5]).unwrap();
        assert!(r.delta_best.max_norm() < 1e-2);
    }

    #[derive(Debug, Error)]
    #[error("boom")]
    struct Boom;

    struct FailsAfter(Mutex<usize>);

    impl Fitness<f64> for FailsAfter {
        type Error = Boom;
        fn evaluate(&self, d: &[f64], _: u32) -> Result<f64, Boom> {
            let mut n = self.0.lock().unwrap();
            *n += 1;
            if *n > 14 + 28 * 3 {
                Err(Boom)
            } else {
                Ok(Benchmark::Sphere.value(d))
            }
        }
    }

    #[test]
    fn failure_keeps_partial_trace() {
        let c = DeConfig::new(14, 3, 0.5, 0);
        let err = search(&FailsAfter(Mutex::new(0)), &c, &[true; 3]).unwrap_err();
        match err {
            SearchError::Fitness {
                generation,
                partial_trace,
                ..
            } => {
                assert_eq!(generation, 4);
                assert_eq!(partial_trace.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    /// Records every vector handed to the objective.
    struct Recording<'a> {
        seen: Mutex<Vec<Vec<f64>>>,
        inner: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    }

    impl Fitness<f64> for Recording<'_> {
        type Error = Infallible;
        fn evaluate(&self, d: &[f64], _: u32) -> Result<f64, Infallible> {
            self.seen.lock().unwrap().push(d.to_vec());
            Ok((self.inner)(d))
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn search_invariants(
            seed in any::<u64>(),
            dim in 1usize..6,
            np in 4usize..10,
            eps in 0.01f64..1.0,
            mask_bits in any::<u8>(),
        ) {
            let mask: Vec<bool> = (0..dim).map(|i| (mask_bits >> i) & 1 == 1).collect();
            // Shifted sphere: optimum outside the ball on some coordinates.
            let objective = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (v - 0.3 * i as f64).powi(2)).sum::<f64>();
            let rec = Recording { seen: Mutex::new(Vec::new()), inner: &objective };
            let mut c = DeConfig::new(np, dim, eps, seed);
            c.generations = 15;
            let r = search(&rec, &c, &mask).unwrap();

            let seen = rec.seen.into_inner().unwrap();
            prop_assert_eq!(seen.len(), r.evaluations);
            let mut min_seen = f64::INFINITY;
            for v in &seen {
                prop_assert_eq!(v.len(), dim);
                for (x, m) in v.iter().zip(&mask) {
                    prop_assert!(x.abs() <= eps);
                    if !m { prop_assert_eq!(*x, 0.0); }
                }
                min_seen = min_seen.min(objective(v));
            }
            prop_assert!(r.best_trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert_eq!(r.g_min, min_seen);
            prop_assert_eq!(r.population_final.len(), np);
            prop_assert!(r.delta_best.max_norm() <= eps);

            let again = search(&Objective(objective), &c, &mask).unwrap();
            prop_assert_eq!(again, r);
        }

        #[test]
        fn forced_index_always_crosses(
            target in prop::collection::vec(-1.0f64..1.0, 1..9),
            seed in any::<u64>(),
            cr in 0.0f64..1.0,
        ) {
            let mutant: Vec<f64> = target.iter().map(|t| t + 1.0).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let trial = crossover(&target, &mutant, cr, &mut rng);
            prop_assert!(trial.iter().zip(&target).any(|(a, b)| a != b));
        }
    }
}
