use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DeltaFile, ExperimentConfig, HarnessError};
use crate::body::AttackKind;
use crate::desearch::search;
use crate::env::NoisePolicy;
use crate::eval::{derive_seed, grand_average, RolloutFitness};
use crate::{PerturbationVector, RobotBody, SearchResult, ToyWalker};

/// One `(epsilon, kind)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub epsilon: f64,
    pub kind: AttackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_seed: Option<u64>,
    /// Absent for the clean baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchResult>,
    pub grand_mean: Option<f64>,
    #[serde(default)]
    pub run_means: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellReport {
    pub fn is_clean(&self) -> bool {
        self.epsilon == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Seconds since the Unix epoch. The only field that differs between
    /// reruns of the same config.
    pub generated_at: u64,
    pub config: ExperimentConfig,
    pub robot: RobotBody,
    pub cells: Vec<CellReport>,
}

impl SweepReport {
    pub fn all_ok(&self) -> bool {
        self.cells.iter().all(|c| c.error.is_none())
    }

    pub fn cell(&self, epsilon: f64, kind: AttackKind) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.kind == kind)
    }
}

fn kind_stream(kind: AttackKind) -> u32 {
    match kind {
        AttackKind::Length => 1,
        AttackKind::Thickness => 2,
        AttackKind::Both => 3,
    }
}

/// Search seed for a cell, keyed by kind and by epsilon in millionths.
pub fn search_seed(master: u64, kind: AttackKind, epsilon: f64) -> u64 {
    derive_seed(master, kind_stream(kind), (epsilon * 1e6).round() as u32)
}

/// Master seed for grand-average evaluation, shared by all cells.
pub fn evaluation_seed(master: u64) -> u64 {
    derive_seed(master, 0, 0)
}

fn clean_cell(config: &ExperimentConfig, walker: &ToyWalker, kind: AttackKind) -> CellReport {
    let body = walker.body().clean();
    let ga = grand_average(
        walker,
        &NoisePolicy,
        &body,
        config.eval.runs,
        config.eval.episodes,
        config.eval.horizon,
        evaluation_seed(config.master_seed),
    );
    let mut cell = CellReport {
        epsilon: 0.0,
        kind,
        search_seed: None,
        search: None,
        grand_mean: None,
        run_means: Vec::new(),
        error: None,
    };
    match ga {
        Ok(ga) => {
            cell.grand_mean = Some(ga.mean);
            cell.run_means = ga.run_means;
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Runs one attacked cell: DE search, then the grand average of `δ_best`.
/// Failures are recorded in the cell rather than returned.
pub fn run_cell(
    config: &ExperimentConfig,
    walker: &ToyWalker,
    epsilon: f64,
    kind: AttackKind,
) -> CellReport {
    if epsilon == 0.0 {
        return clean_cell(config, walker, kind);
    }
    let seed = search_seed(config.master_seed, kind, epsilon);
    let mut cell = CellReport {
        epsilon,
        kind,
        search_seed: Some(seed),
        search: None,
        grand_mean: None,
        run_means: Vec::new(),
        error: None,
    };
    if let Err(e) = attack(config, walker, &mut cell) {
        log::warn!("cell eps={epsilon} kind={kind} failed: {e}");
        cell.error = Some(e.to_string());
    }
    cell
}

fn attack(
    config: &ExperimentConfig,
    walker: &ToyWalker,
    cell: &mut CellReport,
) -> Result<(), HarnessError> {
    let body = walker.body();
    let seed = cell.search_seed.unwrap_or_default();
    let fitness = RolloutFitness {
        env: walker,
        policy: &NoisePolicy,
        body,
        kind: cell.kind,
        epsilon: cell.epsilon,
        episodes: config.eval.episodes,
        horizon: config.eval.horizon,
        master_seed: seed,
    };
    let de = config.de_config(body.search_dim(cell.kind), cell.epsilon, seed)?;
    log::info!(
        "searching eps={} kind={} (NP={}, {} generations)",
        cell.epsilon,
        cell.kind,
        de.population,
        de.generations
    );
    let result = search(&fitness, &de, &body.attack_mask(cell.kind)).map_err(|e| {
        HarnessError::Search(match &e {
            crate::desearch::SearchError::Fitness { partial_trace, .. } => {
                format!("{e} (after {} recorded generations)", partial_trace.len())
            }
            _ => e.to_string(),
        })
    })?;
    let morph = body.perturb(cell.kind, &result.delta_best)?;
    cell.search = Some(result);
    let ga = grand_average(
        walker,
        &NoisePolicy,
        &morph,
        config.eval.runs,
        config.eval.episodes,
        config.eval.horizon,
        evaluation_seed(config.master_seed),
    )?;
    log::info!(
        "eps={} kind={}: grand mean {}",
        cell.epsilon,
        cell.kind,
        ga.mean
    );
    cell.grand_mean = Some(ga.mean);
    cell.run_means = ga.run_means;
    Ok(())
}

/// The full protocol: for every epsilon and kind, search (skipped at
/// `ε = 0`) and grand-average. The clean baseline is computed once.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    config.validate()?;
    let walker = config.walker()?;
    let grid: Vec<(f64, AttackKind)> = config
        .epsilons
        .iter()
        .flat_map(|&e| config.kinds.iter().map(move |&k| (e, k)))
        .collect();

    let clean = config
        .epsilons
        .contains(&0.0)
        .then(|| clean_cell(config, &walker, config.kinds[0]));

    let attacked = |&(e, k): &(f64, AttackKind)| {
        if e == 0.0 {
            let mut c = clean.clone().expect("clean baseline computed");
            c.kind = k;
            c
        } else {
            run_cell(config, &walker, e, k)
        }
    };
    let cells: Vec<CellReport> = if config.parallel {
        grid.par_iter().map(attacked).collect()
    } else {
        grid.iter().map(attacked).collect()
    };

    let generated_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(SweepReport {
        generated_at,
        config: config.clone(),
        robot: walker.body().clone(),
        cells,
    })
}

/// Grand average of a stored perturbation under the config's evaluation
/// settings.
pub fn evaluate_delta(
    config: &ExperimentConfig,
    delta: &DeltaFile,
) -> Result<CellReport, HarnessError> {
    let walker = config.walker()?;
    let body = walker.body();
    let mask = body.attack_mask(delta.kind);
    let pv = PerturbationVector::new(delta.delta_best.clone(), delta.epsilon, &mask)?;
    let morph = body.perturb(delta.kind, &pv)?;
    let ga = grand_average(
        &walker,
        &NoisePolicy,
        &morph,
        config.eval.runs,
        config.eval.episodes,
        config.eval.horizon,
        evaluation_seed(config.master_seed),
    )?;
    Ok(CellReport {
        epsilon: delta.epsilon,
        kind: delta.kind,
        search_seed: None,
        search: None,
        grand_mean: Some(ga.mean),
        run_means: ga.run_means,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        serde_json::from_str(
            r#"{"kinds":["length"],"epsilons":[0.0],"eval":{"episodes":3,"horizon":50,"runs":2}}"#,
        )
        .unwrap()
    }

    #[test]
    fn clean_only_sweep_never_searches() {
        let r = run_sweep(&small()).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert!(r.cells[0].search.is_none());
        assert!(r.cells[0].search_seed.is_none());
        assert!(r.all_ok());
        // Clean biped at T=50: 50 · (1 - 1e-3 + 1)
        assert!((r.cells[0].grand_mean.unwrap() - 50.0 * 1.999).abs() < 1e-9);
    }

    #[test]
    fn clean_row_is_shared_across_kinds() {
        let mut c = small();
        c.kinds = vec![AttackKind::Length, AttackKind::Thickness];
        let r = run_sweep(&c).unwrap();
        assert_eq!(r.cells.len(), 2);
        assert_eq!(r.cells[0].grand_mean, r.cells[1].grand_mean);
        assert_eq!(r.cells[1].kind, AttackKind::Thickness);
    }

    #[test]
    fn search_seed_is_keyed_by_value() {
        assert_eq!(
            search_seed(3, AttackKind::Length, 0.05),
            search_seed(3, AttackKind::Length, 0.05)
        );
        assert_ne!(
            search_seed(3, AttackKind::Length, 0.05),
            search_seed(3, AttackKind::Thickness, 0.05)
        );
        assert_ne!(
            search_seed(3, AttackKind::Length, 0.05),
            search_seed(3, AttackKind::Length, 0.01)
        );
    }

    #[test]
    fn attacked_cell_records_search() {
        let mut c = small();
        c.epsilons = vec![0.05];
        c.de.generations = 3;
        let r = run_sweep(&c).unwrap();
        let cell = &r.cells[0];
        let s = cell.search.as_ref().unwrap();
        assert_eq!(s.best_trace.len(), 4);
        assert!(s.delta_best.max_norm() <= 0.05);
        assert_eq!(cell.run_means.len(), 2);
    }

    #[test]
    fn evaluate_checks_the_delta() {
        let c = small();
        let ok = DeltaFile {
            kind: AttackKind::Length,
            epsilon: 0.05,
            delta_best: vec![0.0; 7],
        };
        let cell = evaluate_delta(&c, &ok).unwrap();
        assert!((cell.grand_mean.unwrap() - 50.0 * 1.999).abs() < 1e-9);
        let bad = DeltaFile {
            delta_best: vec![0.0; 6],
            ..ok
        };
        assert!(evaluate_delta(&c, &bad).is_err());
    }
}
