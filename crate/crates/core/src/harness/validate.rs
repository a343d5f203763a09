use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::desearch::{search, Benchmark};
use crate::DeConfig;

/// What a single seed must achieve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `‖δ_best‖∞ < tol`, for objectives minimised at the origin.
    MaxNormBelow(f64),
    /// `G_min ≤ bound`.
    ValueAtMost(f64),
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::MaxNormBelow(t) => write!(f, "max-norm < {t:e}"),
            Criterion::ValueAtMost(b) => write!(f, "value <= {b}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub name: String,
    pub benchmark: Benchmark,
    pub dim: usize,
    pub population: usize,
    pub epsilon: f64,
    pub mutation_scale: f64,
    pub crossover_rate: f64,
    pub generations: usize,
    /// Master seeds `0..seeds`.
    pub seeds: u64,
    pub criterion: Criterion,
    pub required: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub g_min: f64,
    pub max_norm: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub spec: SuiteSpec,
    pub seeds: Vec<SeedOutcome>,
    pub passes: usize,
    pub passed: bool,
}

impl fmt::Display for SuiteOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} seeds with {} (need {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.spec.name,
            self.passes,
            self.seeds.len(),
            self.spec.criterion,
            self.spec.required
        )
    }
}

fn suite(
    name: &str,
    benchmark: Benchmark,
    dim: usize,
    population: usize,
    epsilon: f64,
    criterion: Criterion,
    required: usize,
) -> SuiteSpec {
    SuiteSpec {
        name: name.to_string(),
        benchmark,
        dim,
        population,
        epsilon,
        mutation_scale: 0.5,
        crossover_rate: 0.7,
        generations: 100,
        seeds: 100,
        criterion,
        required,
    }
}

pub fn default_suites() -> Vec<SuiteSpec> {
    vec![
        suite(
            "sphere-7",
            Benchmark::Sphere,
            7,
            14,
            0.5,
            Criterion::MaxNormBelow(1e-2),
            95,
        ),
        suite(
            "rastrigin-2",
            Benchmark::Rastrigin,
            2,
            14,
            5.12,
            Criterion::ValueAtMost(1.0),
            80,
        ),
        suite(
            "sphere-1",
            Benchmark::Sphere,
            1,
            4,
            0.5,
            Criterion::MaxNormBelow(1e-2),
            100,
        ),
    ]
}

fn run_seed(spec: &SuiteSpec, seed: u64) -> SeedOutcome {
    let config = DeConfig {
        population: spec.population,
        mutation_scale: spec.mutation_scale,
        crossover_rate: spec.crossover_rate,
        generations: spec.generations,
        epsilon: spec.epsilon,
        dim: spec.dim,
        master_seed: seed,
    };
    let mask = vec![true; spec.dim];
    match search(&spec.benchmark, &config, &mask) {
        Ok(r) => {
            let max_norm = r.delta_best.max_norm();
            let passed = match spec.criterion {
                Criterion::MaxNormBelow(t) => max_norm < t,
                Criterion::ValueAtMost(b) => r.g_min <= b,
            };
            SeedOutcome {
                seed,
                g_min: r.g_min,
                max_norm,
                passed,
            }
        }
        Err(e) => {
            log::error!("{} seed {seed}: {e}", spec.name);
            SeedOutcome {
                seed,
                g_min: f64::NAN,
                max_norm: f64::NAN,
                passed: false,
            }
        }
    }
}

pub fn run_suite(spec: &SuiteSpec) -> SuiteOutcome {
    let seeds: Vec<SeedOutcome> = (0..spec.seeds)
        .into_par_iter()
        .map(|s| run_seed(spec, s))
        .collect();
    let passes = seeds.iter().filter(|s| s.passed).count();
    SuiteOutcome {
        spec: spec.clone(),
        passed: passes >= spec.required,
        passes,
        seeds,
    }
}

pub fn validate_de() -> Vec<SuiteOutcome> {
    default_suites().iter().map(run_suite).collect()
}
