//! File formats: unit counts, workload CSV with a JSON sidecar, decomposition
//! and strategy directories.
//!
//! Matrices are written as headerless CSV, one matrix row per line, with
//! shortest round-trip float formatting so that a write/read cycle is exact.
//!
//! Sidecar schemas:
//!
//! * workload `<name>.meta.json`: [`WorkloadSpec`] (`kind`, `m`, `n`, `p`, `s`, `seed`)
//! * decomposition `meta.json`: [`DecompositionMeta`]
//! * strategy `meta.json`: [`StrategyMeta`]

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::matrix_mechanism::StrategyMatrix;
use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::workload::{DatabaseVector, WorkloadMatrix, WorkloadSpec};

/// What to do with a negative count.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NegativeCounts {
    /// Fail with an input error naming the line.
    #[default]
    Reject,
    /// Log a warning and replace the value by zero.
    Warn,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads unit counts: one non-negative number per line, or a single-column CSV.
///
/// Blank lines are skipped. A non-numeric first line is taken as a CSV header.
pub fn load_counts<T: Real>(path: &Path, negatives: NegativeCounts) -> Result<DatabaseVector<T>> {
    let text = read_to_string(path)?;
    let mut counts = Vec::new();
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() > 1 && fields[1..].iter().any(|f| !f.is_empty()) {
            return Err(parse_error(
                path,
                line_no,
                format!("expected a single column, found {} fields", fields.len()),
            ));
        }
        let field = fields[0].trim_matches('"');
        let value: f64 = match field.parse() {
            Ok(v) => v,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => {
                return Err(parse_error(path, line_no, format!("`{field}` is not a number")));
            }
        };
        first = false;
        if !value.is_finite() {
            return Err(parse_error(path, line_no, format!("count `{field}` is not finite")));
        }
        let value = if value < 0.0 {
            match negatives {
                NegativeCounts::Reject => {
                    return Err(parse_error(path, line_no, format!("negative count {value}")));
                }
                NegativeCounts::Warn => {
                    log::warn!("{}:{line_no}: negative count {value} replaced by 0", path.display());
                    0.0
                }
            }
        } else {
            value
        };
        counts.push(T::lit(value));
    }
    if counts.is_empty() {
        return Err(Error::Input(format!("{}: no counts found", path.display())));
    }
    DatabaseVector::new(counts)
}

/// Writes one count per line.
pub fn save_counts<T: Real>(path: &Path, data: &DatabaseVector<T>) -> Result<()> {
    let mut out = String::with_capacity(data.len() * 8);
    for x in data.counts().iter() {
        out.push_str(&format!("{}\n", x.as_f64()));
    }
    write_string(path, &out)
}

pub fn write_matrix_csv<T: Real>(path: &Path, matrix: &DMatrix<T>) -> Result<()> {
    let mut out = String::new();
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|j| format!("{}", matrix[(i, j)].as_f64()))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_string(path, &out)
}

/// Reads a headerless numeric CSV. Every row must have the same length.
pub fn read_matrix_csv<T: Real>(path: &Path) -> Result<DMatrix<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut entries = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_error(path, idx + 1, e.to_string()))?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_error(
                    path,
                    idx + 1,
                    format!("row has {} fields, expected {c}", record.len()),
                ));
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, idx + 1, format!("`{field}` is not a number")))?;
            entries.push(T::lit(v));
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Input(format!("{}: empty matrix file", path.display())))?;
    Ok(DMatrix::from_row_slice(rows, cols, &entries))
}

/// Sidecar path of a workload CSV: `w.csv` → `w.meta.json`.
pub fn workload_meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the workload CSV and, when given, its generator spec as the sidecar.
pub fn save_workload<T: Real>(
    csv_path: &Path,
    workload: &WorkloadMatrix<T>,
    spec: Option<&WorkloadSpec>,
) -> Result<()> {
    write_matrix_csv(csv_path, workload.matrix())?;
    if let Some(spec) = spec {
        let meta = workload_meta_path(csv_path);
        write_string(&meta, &serde_json::to_string_pretty(spec)?)?;
    }
    Ok(())
}

/// Reads a workload CSV and its sidecar spec if one exists.
pub fn load_workload<T: Real>(csv_path: &Path) -> Result<(WorkloadMatrix<T>, Option<WorkloadSpec>)> {
    let workload = WorkloadMatrix::new(read_matrix_csv(csv_path)?)?;
    let meta = workload_meta_path(csv_path);
    let spec = if meta.exists() {
        let spec: WorkloadSpec = serde_json::from_str(&read_to_string(&meta)?)?;
        if spec.m != workload.m() || spec.n != workload.n() {
            return Err(Error::Input(format!(
                "{} describes a {}x{} workload but the CSV is {}x{}",
                meta.display(),
                spec.m,
                spec.n,
                workload.m(),
                workload.n()
            )));
        }
        Some(spec)
    } else {
        None
    };
    Ok((workload, spec))
}

/// `meta.json` of a decomposition directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionMeta {
    pub r: usize,
    pub gamma: f64,
    pub residual: f64,
    pub objective: f64,
    pub l_sensitivity: f64,
    pub iterations: usize,
    pub alternations: usize,
    pub final_beta: f64,
    pub converged: bool,
}

impl DecompositionMeta {
    pub fn of<T: Real>(d: &Decomposition<T>) -> Self {
        DecompositionMeta {
            r: d.r(),
            gamma: d.gamma.as_f64(),
            residual: d.residual.as_f64(),
            objective: d.objective.as_f64(),
            l_sensitivity: d.l_sensitivity.as_f64(),
            iterations: d.stats.outer_iterations,
            alternations: d.stats.alternations,
            final_beta: d.stats.final_beta,
            converged: d.stats.converged,
        }
    }
}

/// Writes `B.csv`, `L.csv` and `meta.json` into `dir`, creating it if needed.
pub fn save_decomposition<T: Real>(dir: &Path, d: &Decomposition<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_csv(&dir.join("B.csv"), &d.b)?;
    write_matrix_csv(&dir.join("L.csv"), &d.l)?;
    let meta = serde_json::to_string_pretty(&DecompositionMeta::of(d))?;
    write_string(&dir.join("meta.json"), &meta)
}

/// Reads a decomposition directory and re-derives residual, objective and
/// sensitivity against `workload`. Solver statistics come from `meta.json`.
pub fn load_decomposition<T: Real>(
    dir: &Path,
    workload: &WorkloadMatrix<T>,
) -> Result<Decomposition<T>> {
    let b = read_matrix_csv(&dir.join("B.csv"))?;
    let l = read_matrix_csv(&dir.join("L.csv"))?;
    let meta: DecompositionMeta = serde_json::from_str(&read_to_string(&dir.join("meta.json"))?)?;
    if meta.r != b.ncols() {
        return Err(Error::Input(format!(
            "meta.json declares r = {} but B.csv has {} columns",
            meta.r,
            b.ncols()
        )));
    }
    let mut d = Decomposition::from_factors(workload, b, l, T::lit(meta.gamma))?;
    d.stats.outer_iterations = meta.iterations;
    d.stats.alternations = meta.alternations;
    d.stats.final_beta = meta.final_beta;
    d.stats.converged = meta.converged;
    Ok(d)
}

/// `meta.json` of a strategy directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyMeta {
    pub sensitivity: f64,
    pub iterations: usize,
    pub objective: Option<f64>,
    pub converged: bool,
}

/// Writes `A.csv` and `meta.json` into `dir`, creating it if needed.
pub fn save_strategy<T: Real>(dir: &Path, s: &StrategyMatrix<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix_csv(&dir.join("A.csv"), &s.a)?;
    let meta = StrategyMeta {
        sensitivity: s.sensitivity.as_f64(),
        iterations: s.iterations,
        objective: s.objective.map(Real::as_f64),
        converged: s.converged,
    };
    write_string(&dir.join("meta.json"), &serde_json::to_string_pretty(&meta)?)
}

pub fn load_strategy<T: Real>(dir: &Path) -> Result<StrategyMatrix<T>> {
    let a = read_matrix_csv(&dir.join("A.csv"))?;
    let meta: StrategyMeta = serde_json::from_str(&read_to_string(&dir.join("meta.json"))?)?;
    let mut s = StrategyMatrix::new(a)?;
    s.iterations = meta.iterations;
    s.objective = meta.objective.map(T::lit);
    s.converged = meta.converged;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{decompose, SolverConfig};
    use crate::workload::WorkloadKind;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn counts_plain_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.txt", "1\n2\n3\n");
        let d: DatabaseVector<f64> = load_counts(&p, NegativeCounts::Reject).unwrap();
        assert_eq!(d.counts().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn counts_csv_with_header_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.csv", "count\n\n4.5,\n0\n\n");
        let d: DatabaseVector<f64> = load_counts(&p, NegativeCounts::Reject).unwrap();
        assert_eq!(d.counts().as_slice(), &[4.5, 0.0]);
    }

    #[test]
    fn counts_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(dir.path(), "e.txt", "");
        assert!(load_counts::<f64>(&empty, NegativeCounts::Reject).is_err());

        let bad = write(dir.path(), "b.txt", "1\n2\nx\n");
        match load_counts::<f64>(&bad, NegativeCounts::Reject) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let wide = write(dir.path(), "w.csv", "1,2\n");
        assert!(matches!(
            load_counts::<f64>(&wide, NegativeCounts::Reject),
            Err(Error::Parse { line: 1, .. })
        ));
        let missing = dir.path().join("missing.txt");
        assert!(matches!(
            load_counts::<f64>(&missing, NegativeCounts::Reject),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn negative_count_policy() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "n.txt", "1\n-2\n3\n");
        assert!(matches!(
            load_counts::<f64>(&p, NegativeCounts::Reject),
            Err(Error::Parse { line: 2, .. })
        ));
        let d: DatabaseVector<f64> = load_counts(&p, NegativeCounts::Warn).unwrap();
        assert_eq!(d.counts().as_slice(), &[1.0, 0.0, 3.0]);
    }

    #[test]
    fn large_count_file() {
        let dir = tempfile::tempdir().unwrap();
        let text: String = (0..65_536).map(|i| format!("{}\n", i % 97)).collect();
        let p = write(dir.path(), "big.txt", &text);
        let d: DatabaseVector<f64> = load_counts(&p, NegativeCounts::Reject).unwrap();
        assert_eq!(d.len(), 65_536);
    }

    #[test]
    fn counts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = DatabaseVector::new(vec![0.1_f64, 1e-300, 12345.678, 0.0]).unwrap();
        let p = dir.path().join("c.txt");
        save_counts(&p, &d).unwrap();
        assert_eq!(load_counts::<f64>(&p, NegativeCounts::Reject).unwrap(), d);
    }

    #[test]
    fn workload_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let spec = WorkloadSpec::new(WorkloadKind::WRelated, 7, 9, 11).with_s(3);
        let w: WorkloadMatrix<f64> = spec.generate().unwrap();
        let p = dir.path().join("w.csv");
        save_workload(&p, &w, Some(&spec)).unwrap();
        assert!(dir.path().join("w.meta.json").exists());
        let (back, meta) = load_workload::<f64>(&p).unwrap();
        assert_eq!(back.matrix(), w.matrix());
        assert_eq!(meta, Some(spec));

        let q = dir.path().join("plain.csv");
        save_workload(&q, &w, None).unwrap();
        assert_eq!(load_workload::<f64>(&q).unwrap().1, None);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "r.csv", "1,2\n3\n");
        assert!(matches!(
            read_matrix_csv::<f64>(&p),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn decomposition_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w: WorkloadMatrix<f64> = WorkloadSpec::new(WorkloadKind::WRange, 6, 8, 3)
            .generate()
            .unwrap();
        let d = decompose(&w, &SolverConfig::default()).unwrap();
        let out = dir.path().join("dec");
        save_decomposition(&out, &d).unwrap();
        let back = load_decomposition(&out, &w).unwrap();
        assert_eq!(back.b, d.b);
        assert_eq!(back.l, d.l);
        assert_eq!(back.objective, d.objective);
        assert_eq!(back.residual, d.residual);
        assert_eq!(back.stats.converged, d.stats.converged);
        let meta: DecompositionMeta =
            serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta, DecompositionMeta::of(&d));
    }

    #[test]
    fn strategy_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let a = DMatrix::from_row_slice(3, 2, &[1.0_f64, 0.5, 0.0, 2.0, 1.0, 1.0]);
        let s = StrategyMatrix::new(a).unwrap();
        save_strategy(dir.path(), &s).unwrap();
        let back = load_strategy::<f64>(dir.path()).unwrap();
        assert_eq!(back.a, s.a);
        assert_eq!(back.sensitivity, s.sensitivity);
    }
}
