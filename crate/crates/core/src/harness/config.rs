//! Experiment configuration and its JSON schema.
//!
//! ```json
//! {
//!   "data": {"type": "synthetic", "dataset": "search_log", "seed": 0},
//!   "workload": {"type": "generate", "kind": "WRange", "p": 0.02},
//!   "mechanisms": ["LRM", "NOD", "NOR", "MM", "WM", "HM"],
//!   "epsilons": [1.0, 0.1, 0.01],
//!   "trials": 20,
//!   "grid": {"gamma": [0.01], "r_multiplier": [1.2], "n": [1024], "m": [256], "s_fraction": [0.5]},
//!   "master_seed": 0,
//!   "solver": { ... },
//!   "mm": { ... },
//!   "cell_timeout_secs": 600,
//!   "threads": null,
//!   "record_timings": false
//! }
//! ```
//!
//! Every field is optional; omitted fields take the defaults shown. A data
//! source may also be `{"type": "file", "path": "counts.txt", "negatives": "reject"}`
//! and a workload `{"type": "file", "path": "w.csv"}`, in which case the grid's
//! `n`, `m` and `s_fraction` are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{HM_ID, MM_ID, WM_ID};
use crate::decomposition::SolverConfig;
use crate::error::{Error, Result};
use crate::baselines::MmConfig;
use crate::io::NegativeCounts;
use crate::lrm::LRM_ID;
use crate::mechanisms::{NOD_ID, NOR_ID};
use crate::workload::{WorkloadKind, DEFAULT_FLIP_PROBABILITY};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "DP_LOWRANK_THREADS";

pub const DEFAULT_CELL_TIMEOUT_SECS: f64 = 600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MechanismId {
    LRM,
    NOD,
    NOR,
    MM,
    WM,
    HM,
}

impl MechanismId {
    pub const ALL: [MechanismId; 6] = [
        MechanismId::LRM,
        MechanismId::NOD,
        MechanismId::NOR,
        MechanismId::MM,
        MechanismId::WM,
        MechanismId::HM,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MechanismId::LRM => LRM_ID,
            MechanismId::NOD => NOD_ID,
            MechanismId::NOR => NOR_ID,
            MechanismId::MM => MM_ID,
            MechanismId::WM => WM_ID,
            MechanismId::HM => HM_ID,
        }
    }
}

impl std::fmt::Display for MechanismId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MechanismId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismId::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown mechanism `{s}`")))
    }
}

/// Synthetic stand-ins for the three evaluation datasets, matched on size only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticDataset {
    SearchLog,
    NetTrace,
    SocialNetwork,
}

impl SyntheticDataset {
    pub fn len(self) -> usize {
        match self {
            SyntheticDataset::SearchLog => 65_536,
            SyntheticDataset::NetTrace => 32_768,
            SyntheticDataset::SocialNetwork => 11_342,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SyntheticDataset::SearchLog => "synthetic_search_log",
            SyntheticDataset::NetTrace => "synthetic_net_trace",
            SyntheticDataset::SocialNetwork => "synthetic_social_network",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    File {
        path: PathBuf,
        #[serde(default)]
        negatives: NegativeCounts,
    },
    Synthetic {
        dataset: SyntheticDataset,
        #[serde(default)]
        seed: u64,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            dataset: SyntheticDataset::SearchLog,
            seed: 0,
        }
    }
}

impl DataSource {
    pub fn label(&self) -> String {
        match self {
            DataSource::File { path, .. } => path.display().to_string(),
            DataSource::Synthetic { dataset, .. } => dataset.label().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum WorkloadSource {
    Generate {
        kind: WorkloadKind,
        #[serde(default = "default_p")]
        p: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_p() -> f64 {
    DEFAULT_FLIP_PROBABILITY
}

impl Default for WorkloadSource {
    fn default() -> Self {
        WorkloadSource::Generate {
            kind: WorkloadKind::WRange,
            p: DEFAULT_FLIP_PROBABILITY,
        }
    }
}

/// Parameter values swept by the experiment; the cells are their cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterGrid {
    /// Residual tolerance of the decomposition (absolute).
    pub gamma: Vec<f64>,
    /// Inner dimension as a multiple of the workload rank.
    pub r_multiplier: Vec<f64>,
    /// Domain sizes the data is coarsened to.
    pub n: Vec<usize>,
    /// Queries per batch.
    pub m: Vec<usize>,
    /// Base-query count of WRelated as a fraction of `min(m, n)`.
    pub s_fraction: Vec<f64>,
}

impl Default for ParameterGrid {
    fn default() -> Self {
        ParameterGrid {
            gamma: vec![0.01],
            r_multiplier: vec![1.2],
            n: vec![1024],
            m: vec![256],
            s_fraction: vec![0.5],
        }
    }
}

/// `max(1, round(fraction·min(m, n)))`.
pub fn base_query_count(fraction: f64, m: usize, n: usize) -> usize {
    ((fraction * m.min(n) as f64).round() as usize).max(1)
}

/// `max(1, round(multiplier·rank))`.
pub fn inner_dimension_for(multiplier: f64, rank: usize) -> usize {
    ((multiplier * rank as f64).round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub workload: WorkloadSource,
    pub mechanisms: Vec<MechanismId>,
    pub epsilons: Vec<f64>,
    pub trials: usize,
    pub grid: ParameterGrid,
    pub master_seed: u64,
    /// Solver settings for LRM; `r` and `gamma` are overridden per cell.
    pub solver: SolverConfig,
    pub mm: MmConfig,
    pub cell_timeout_secs: f64,
    /// Worker count; `None` reads [`THREADS_ENV`], then falls back to the rayon default.
    pub threads: Option<usize>,
    /// When false, every time column is written as 0 so reports are byte-reproducible.
    pub record_timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::default(),
            workload: WorkloadSource::default(),
            mechanisms: MechanismId::ALL.to_vec(),
            epsilons: vec![1.0, 0.1, 0.01],
            trials: 20,
            grid: ParameterGrid::default(),
            master_seed: 0,
            solver: SolverConfig::default(),
            mm: MmConfig::default(),
            cell_timeout_secs: DEFAULT_CELL_TIMEOUT_SECS,
            threads: None,
            record_timings: false,
        }
    }
}

fn nonempty<T>(name: &str, values: &[T]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config(format!("{name} must list at least one value")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("invalid experiment config: {e}")))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        nonempty("mechanisms", &self.mechanisms)?;
        nonempty("epsilons", &self.epsilons)?;
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilon must be positive and finite, got {e}")));
        }
        let g = &self.grid;
        nonempty("grid.gamma", &g.gamma)?;
        nonempty("grid.r_multiplier", &g.r_multiplier)?;
        if let Some(x) = g.gamma.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("gamma must be >= 0, got {x}")));
        }
        if let Some(x) = g.r_multiplier.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::Config(format!("r_multiplier must be positive, got {x}")));
        }
        if let WorkloadSource::Generate { kind, p } = &self.workload {
            nonempty("grid.n", &g.n)?;
            nonempty("grid.m", &g.m)?;
            if g.n.contains(&0) || g.m.contains(&0) {
                return Err(Error::Config("grid n and m must be positive".into()));
            }
            if *kind == WorkloadKind::WRelated {
                nonempty("grid.s_fraction", &g.s_fraction)?;
                if let Some(x) = g.s_fraction.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                    return Err(Error::Config(format!("s_fraction must lie in (0, 1], got {x}")));
                }
            }
            if *kind == WorkloadKind::WDiscrete && !(*p > 0.0 && *p < 1.0) {
                return Err(Error::Config(format!("p must lie in (0, 1), got {p}")));
            }
        }
        if !(self.cell_timeout_secs > 0.0) {
            return Err(Error::Config("cell_timeout_secs must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.solver.validate()?;
        self.mm.validate()?;
        Ok(())
    }

    /// Worker count: explicit setting, else [`THREADS_ENV`], else `None` for the rayon default.
    pub fn resolved_threads(&self) -> Result<Option<usize>> {
        if self.threads.is_some() {
            return Ok(self.threads);
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => {
                let t: usize = v.trim().parse().map_err(|_| {
                    Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))
                })?;
                if t == 0 {
                    return Err(Error::Config(format!("{THREADS_ENV} must be at least 1")));
                }
                Ok(Some(t))
            }
            Err(_) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_gives_defaults() {
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.epsilons, vec![1.0, 0.1, 0.01]);
        assert_eq!(cfg.trials, 20);
        assert_eq!(cfg.grid.n, vec![1024]);
        assert_eq!(cfg.grid.m, vec![256]);
        cfg.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.data = DataSource::File {
            path: "counts.txt".into(),
            negatives: NegativeCounts::Warn,
        };
        cfg.workload = WorkloadSource::Generate {
            kind: WorkloadKind::WRelated,
            p: 0.02,
        };
        cfg.mechanisms = vec![MechanismId::LRM, MechanismId::HM];
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), cfg);
    }

    #[test]
    fn parses_documented_example() {
        let text = r#"{
            "data": {"type": "synthetic", "dataset": "net_trace", "seed": 4},
            "workload": {"type": "generate", "kind": "WRelated"},
            "mechanisms": ["LRM", "NOD"],
            "epsilons": [0.1],
            "trials": 3,
            "grid": {"n": [64], "m": [16], "s_fraction": [0.25]}
        }"#;
        let cfg = ExperimentConfig::from_json_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.grid.gamma, vec![0.01]);
        assert_eq!(cfg.mechanisms, vec![MechanismId::LRM, MechanismId::NOD]);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            r#"{"trials": 0}"#,
            r#"{"epsilons": [0.0]}"#,
            r#"{"epsilons": []}"#,
            r#"{"mechanisms": []}"#,
            r#"{"grid": {"gamma": [-1.0]}}"#,
            r#"{"grid": {"r_multiplier": [0.0]}}"#,
            r#"{"grid": {"n": [0]}}"#,
            r#"{"workload": {"type": "generate", "kind": "WRelated"}, "grid": {"s_fraction": [1.5]}}"#,
            r#"{"cell_timeout_secs": 0}"#,
        ];
        for text in bad {
            let cfg = ExperimentConfig::from_json_str(text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
        assert!(ExperimentConfig::from_json_str(r#"{"trails": 3}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"mechanisms": ["XYZ"]}"#).is_err());
    }

    #[test]
    fn mechanism_names() {
        for m in MechanismId::ALL {
            assert_eq!(m.as_str().parse::<MechanismId>().unwrap(), m);
        }
        assert_eq!("lrm".parse::<MechanismId>().unwrap(), MechanismId::LRM);
    }

    #[test]
    fn grid_helpers() {
        assert_eq!(base_query_count(0.1, 64, 256), 6);
        assert_eq!(base_query_count(0.5, 256, 1024), 128);
        assert_eq!(base_query_count(0.001, 4, 4), 1);
        assert_eq!(inner_dimension_for(1.2, 10), 12);
        assert_eq!(inner_dimension_for(0.8, 1), 1);
    }
}
