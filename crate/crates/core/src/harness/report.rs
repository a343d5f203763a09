use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CellReport, HarnessError, SweepReport};
use crate::body::{format_percent, perturbation_report, AttackKind, PercentRow};
use crate::env::TraceRow;
use crate::{DeConfig, RobotBody};

pub const REWARDS_HEADER: &str = "epsilon,kind,grand_mean";
pub const PERTURBATIONS_HEADER: &str = "part,length_pct,thickness_pct";
pub const TRACE_HEADER: &str = "t,v_fwd,theta,reward";
pub const BEST_TRACE_HEADER: &str = "generation,G_min";
pub const RUN_MEANS_HEADER: &str = "run,mean";

/// A stored perturbation, as read by `evaluate`. The per-cell
/// `search_*.json` files are valid delta files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaFile {
    pub kind: AttackKind,
    pub epsilon: f64,
    pub delta_best: Vec<f64>,
}

#[derive(Serialize)]
struct SearchFile<'a> {
    kind: AttackKind,
    epsilon: f64,
    delta_best: &'a [f64],
    g_min: f64,
    best_trace: &'a [f64],
    evaluations: usize,
    search_seed: Option<u64>,
    de: &'a DeConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrandAverageRecord {
    pub epsilon: f64,
    pub kind: AttackKind,
    pub grand_mean: Option<f64>,
    pub run_means_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One row of the perturbation table. Empty cells mean the family was not
/// searched, `-` means the part is not attackable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub part: String,
    pub length_pct: String,
    pub thickness_pct: String,
}

/// Writes via a temporary file in the target directory and renames it in.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let io = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.flush().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn csv_bytes<I, R>(path: &Path, header: &str, rows: I) -> Result<Vec<u8>, HarnessError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header.split(',')).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.into_inner().map_err(|e| err(e.into_error().into()))
}

fn write_csv<I, R>(path: &Path, header: &str, rows: I) -> Result<(), HarnessError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    write_atomic(path, &csv_bytes(path, header, rows)?)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Shortest round-trip text that always keeps a decimal point.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn cell_tag(epsilon: f64, kind: AttackKind) -> String {
    format!("eps{epsilon:?}_{kind}")
}

fn column(rows: Option<Vec<PercentRow>>, n: usize) -> Vec<String> {
    match rows {
        Some(rows) => rows
            .into_iter()
            .map(|r| format_percent(r.percent))
            .collect(),
        None => vec![String::new(); n],
    }
}

/// Signed percent table for the cells at one epsilon. A single-family cell
/// fills its own column; a `both` cell fills whichever column is still
/// empty.
pub fn perturbation_table(
    robot: &RobotBody,
    cells: &[CellReport],
    epsilon: f64,
) -> Result<Vec<TableRow>, HarnessError> {
    let n = robot.parts();
    let mut length: Option<Vec<PercentRow>> = None;
    let mut thickness: Option<Vec<PercentRow>> = None;
    let at_eps = |k: AttackKind| {
        cells
            .iter()
            .find(|c| c.epsilon == epsilon && c.kind == k)
            .and_then(|c| c.search.as_ref())
    };
    if let Some(s) = at_eps(AttackKind::Length) {
        length = Some(perturbation_report(robot.length(), &s.delta_best)?);
    }
    if let Some(s) = at_eps(AttackKind::Thickness) {
        thickness = Some(perturbation_report(robot.thickness(), &s.delta_best)?);
    }
    if let Some(s) = at_eps(AttackKind::Both) {
        let (dl, dt) = robot.split(AttackKind::Both, &s.delta_best)?;
        if length.is_none() {
            length = Some(perturbation_report(robot.length(), &dl)?);
        }
        if thickness.is_none() {
            thickness = Some(perturbation_report(robot.thickness(), &dt)?);
        }
    }
    let names = robot.length().part_names();
    Ok(names
        .iter()
        .zip(column(length, n))
        .zip(column(thickness, n))
        .map(|((part, l), t)| TableRow {
            part: part.clone(),
            length_pct: l,
            thickness_pct: t,
        })
        .collect())
}

fn write_table(path: &Path, rows: &[TableRow]) -> Result<(), HarnessError> {
    write_csv(
        path,
        PERTURBATIONS_HEADER,
        rows.iter().map(|r| {
            [
                r.part.clone(),
                r.length_pct.clone(),
                r.thickness_pct.clone(),
            ]
        }),
    )
}

fn report_epsilon(report: &SweepReport) -> Option<f64> {
    if let Some(e) = report.config.report_epsilon {
        return Some(e);
    }
    let eps = &report.config.epsilons;
    if eps.contains(&0.05) {
        return Some(0.05);
    }
    eps.iter().copied().filter(|&e| e > 0.0).reduce(f64::max)
}

fn write_run_means(path: &Path, means: &[f64]) -> Result<(), HarnessError> {
    write_csv(
        path,
        RUN_MEANS_HEADER,
        means
            .iter()
            .enumerate()
            .map(|(i, m)| [i.to_string(), num(*m)]),
    )
}

/// Writes every report file for a finished sweep into `out` and returns the
/// paths written.
pub fn emit_reports(report: &SweepReport, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut written = Vec::new();
    let mut put = |p: PathBuf| {
        written.push(p.clone());
        p
    };

    write_csv(
        &put(out.join("rewards.csv")),
        REWARDS_HEADER,
        report
            .cells
            .iter()
            .map(|c| [num(c.epsilon), c.kind.to_string(), opt(c.grand_mean)]),
    )?;

    let mut records = Vec::new();
    for c in &report.cells {
        let tag = cell_tag(c.epsilon, c.kind);
        let run_means_file = if c.run_means.is_empty() {
            None
        } else {
            let rel = format!("run_means/{tag}.csv");
            write_run_means(&put(out.join(&rel)), &c.run_means)?;
            Some(rel)
        };
        records.push(GrandAverageRecord {
            epsilon: c.epsilon,
            kind: c.kind,
            grand_mean: c.grand_mean,
            run_means_file,
            error: c.error.clone(),
        });

        if let Some(s) = &c.search {
            write_csv(
                &put(out.join(format!("best_trace_{tag}.csv"))),
                BEST_TRACE_HEADER,
                s.best_trace
                    .iter()
                    .enumerate()
                    .map(|(g, v)| [g.to_string(), num(*v)]),
            )?;
            let de = report.config.de_config(
                s.delta_best.dim(),
                c.epsilon,
                c.search_seed.unwrap_or_default(),
            )?;
            write_json(
                &put(out.join(format!("search_{tag}.json"))),
                &SearchFile {
                    kind: c.kind,
                    epsilon: c.epsilon,
                    delta_best: s.delta_best.deltas(),
                    g_min: s.g_min,
                    best_trace: &s.best_trace,
                    evaluations: s.evaluations,
                    search_seed: c.search_seed,
                    de: &de,
                },
            )?;
        }
    }
    write_json(&put(out.join("grand_averages.json")), &records)?;

    let mut seen = Vec::new();
    for &e in report.config.epsilons.iter().filter(|&&e| e > 0.0) {
        if seen.contains(&e) {
            continue;
        }
        seen.push(e);
        let rows = perturbation_table(&report.robot, &report.cells, e)?;
        write_table(&put(out.join(format!("perturbations_eps{e:?}.csv"))), &rows)?;
    }
    if let Some(e) = report_epsilon(report) {
        let rows = perturbation_table(&report.robot, &report.cells, e)?;
        write_table(&put(out.join("perturbations.csv")), &rows)?;
    }

    write_json(&put(out.join("result.json")), report)?;
    Ok(written)
}

pub fn load_report(path: &Path) -> Result<SweepReport, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_delta(path: &Path) -> Result<DeltaFile, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `evaluation.json` and the per-run means for a single evaluated
/// perturbation.
pub fn emit_evaluation(cell: &CellReport, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let tag = cell_tag(cell.epsilon, cell.kind);
    let rel = format!("run_means/{tag}.csv");
    write_run_means(&out.join(&rel), &cell.run_means)?;
    let rec = GrandAverageRecord {
        epsilon: cell.epsilon,
        kind: cell.kind,
        grand_mean: cell.grand_mean,
        run_means_file: Some(rel.clone()),
        error: cell.error.clone(),
    };
    let json = out.join("evaluation.json");
    write_json(&json, &rec)?;
    Ok(vec![json, out.join(rel)])
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<(), HarnessError> {
    write_csv(
        path,
        TRACE_HEADER,
        rows.iter()
            .map(|r| [r.t.to_string(), num(r.v_fwd), num(r.theta), num(r.reward)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::toy_biped_body;
    use crate::{PerturbationVector, SearchResult};

    fn cell(eps: f64, kind: AttackKind, deltas: Vec<f64>) -> CellReport {
        let mask = vec![true; deltas.len()];
        let pv = PerturbationVector::new(deltas, eps, &mask).unwrap();
        CellReport {
            epsilon: eps,
            kind,
            search_seed: Some(1),
            search: Some(SearchResult {
                delta_best: pv,
                g_min: 4.0,
                best_trace: vec![5.0, 4.0],
                evaluations: 10,
                population_final: Vec::new(),
            }),
            grand_mean: Some(4.0),
            run_means: vec![4.0],
            error: None,
        }
    }

    #[test]
    fn table_shows_signs_and_blank_columns() {
        let body = toy_biped_body();
        let c = cell(
            0.05,
            AttackKind::Length,
            vec![0.0, 0.0482, 0.0, 0.0, -0.0474, 0.0, 0.0],
        );
        let rows = perturbation_table(&body, &[c], 0.05).unwrap();
        assert_eq!(rows.len(), 7);
        assert_eq!(rows[1].length_pct, "+4.82");
        assert_eq!(rows[4].length_pct, "-4.74");
        assert_eq!(rows[0].length_pct, "+0.00");
        assert_eq!(rows[1].thickness_pct, "");
    }

    #[test]
    fn both_cell_fills_both_columns() {
        let body = toy_biped_body();
        let mut d = vec![0.0; 14];
        d[0] = 0.01;
        d[7] = -0.02;
        let rows = perturbation_table(&body, &[cell(0.05, AttackKind::Both, d)], 0.05).unwrap();
        assert_eq!(rows[0].length_pct, "+1.00");
        assert_eq!(rows[0].thickness_pct, "-2.00");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path().join("a")).unwrap().count(), 1);
    }

    #[test]
    fn search_file_reads_as_delta() {
        let dir = tempfile::tempdir().unwrap();
        let report = SweepReport {
            generated_at: 0,
            config: serde_json::from_str(r#"{"kinds":["length"],"epsilons":[0.05]}"#).unwrap(),
            robot: toy_biped_body(),
            cells: vec![cell(0.05, AttackKind::Length, vec![0.01; 7])],
        };
        let files = emit_reports(&report, dir.path()).unwrap();
        assert!(files.iter().any(|f| f.ends_with("perturbations.csv")));
        let d = load_delta(&dir.path().join("search_eps0.05_length.json")).unwrap();
        assert_eq!(d.delta_best, vec![0.01; 7]);
        assert_eq!(d.kind, AttackKind::Length);
        let back = load_report(&dir.path().join("result.json")).unwrap();
        assert_eq!(back, report);
    }
}
