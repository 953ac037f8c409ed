//! Experiment runner: builds every grid cell, answers it `trials` times with
//! each selected mechanism and reports the average squared error.
//!
//! Work is split in two stages that both run on the worker pool. The first
//! builds one workload per `(n, m, s)` and the mechanism state that depends
//! only on the workload (matrix-mechanism strategy, hierarchical plan). The
//! second runs one unit per `(n, m, s, γ, r-multiplier)`: it decomposes the
//! workload for LRM and then answers every `(ε, mechanism)` pair.
//!
//! The decomposition does not depend on ε, so it is computed once and reused
//! for every privacy budget. Noise seeds are derived from the master seed,
//! the cell index, the mechanism and the trial index.

pub mod config;
pub mod report;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_distr::{Distribution, Pareto};
use rayon::prelude::*;

pub use config::{
    base_query_count, inner_dimension_for, DataSource, ExperimentConfig, MechanismId,
    ParameterGrid, SyntheticDataset, WorkloadSource, THREADS_ENV,
};
pub use report::{
    emit_report, reports_from_csv, reports_from_json, reports_to_csv, reports_to_json,
    sort_reports, CellStatus, ErrorReport, ReportFormat,
};

use crate::baselines::{
    mm_answer, mm_solve_strategy, wavelet_answer, HierarchicalPlan, StrategyMatrix,
};
use crate::decomposition::{decompose, Decomposition};
use crate::error::{Error, Result};
use crate::io::NegativeCounts;
use crate::lrm::{expected_error_lrm, lrm_answer};
use crate::mechanisms::{
    expected_error_nod, expected_error_nor, noise_on_data, noise_on_results, NoisyAnswer,
    PrivacyParams,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::workload::{coarsen, DatabaseVector, WorkloadMatrix, WorkloadSpec};

const WORKLOAD_STREAM: u64 = 1;
const TRIAL_STREAM: u64 = 2;

/// Tail index of the synthetic count distribution.
const SYNTHETIC_TAIL: f64 = 1.5;

/// Reads a count file, one value per line or single-column CSV.
pub fn load_counts(path: &std::path::Path, negatives: NegativeCounts) -> Result<DatabaseVector<f64>> {
    crate::io::load_counts(path, negatives)
}

/// Heavy-tailed synthetic counts: `⌊X⌋` with `X` Pareto(1, 1.5), so most
/// buckets hold one or two records and a few hold thousands.
pub fn synthetic_counts(len: usize, seed: u64) -> Vec<f64> {
    let dist = Pareto::new(1.0, SYNTHETIC_TAIL).expect("valid Pareto parameters");
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| dist.sample(&mut rng).floor()).collect()
}

/// Raw (uncoarsened) counts of a data source.
pub fn load_data_source(source: &DataSource) -> Result<Vec<f64>> {
    match source {
        DataSource::File { path, negatives } => {
            Ok(load_counts(path, *negatives)?.counts().iter().copied().collect())
        }
        DataSource::Synthetic { dataset, seed } => Ok(synthetic_counts(dataset.len(), *seed)),
    }
}

/// One workload of the grid with the state shared by all its cells.
struct Group {
    n: usize,
    m: usize,
    s: Option<usize>,
    label: String,
    /// Errors building the workload or coarsening the data fail every cell of the group.
    state: std::result::Result<Arc<GroupState>, String>,
}

struct GroupState {
    workload: WorkloadMatrix<f64>,
    data: DatabaseVector<f64>,
    exact: nalgebra::DVector<f64>,
    rank: usize,
    strategy: Option<Timed<std::result::Result<StrategyMatrix<f64>, String>>>,
    plan: Option<Timed<HierarchicalPlan>>,
}

struct Timed<V> {
    value: V,
    seconds: f64,
}

fn timed<V>(f: impl FnOnce() -> V) -> Timed<V> {
    let start = Instant::now();
    let value = f();
    Timed {
        value,
        seconds: start.elapsed().as_secs_f64(),
    }
}

struct GroupPlan {
    n: usize,
    m: usize,
    s: Option<usize>,
    spec: Option<WorkloadSpec>,
}

fn plan_groups(cfg: &ExperimentConfig, file_workload: Option<&WorkloadMatrix<f64>>) -> Vec<GroupPlan> {
    match (&cfg.workload, file_workload) {
        (WorkloadSource::File { .. }, Some(w)) => vec![GroupPlan {
            n: w.n(),
            m: w.m(),
            s: None,
            spec: None,
        }],
        (WorkloadSource::Generate { kind, p }, _) => {
            let mut plans = Vec::new();
            for &n in &cfg.grid.n {
                for &m in &cfg.grid.m {
                    let fractions: Vec<Option<f64>> = if *kind == crate::workload::WorkloadKind::WRelated {
                        cfg.grid.s_fraction.iter().copied().map(Some).collect()
                    } else {
                        vec![None]
                    };
                    for frac in fractions {
                        let s = frac.map(|f| base_query_count(f, m, n));
                        let seed = derive_seed(
                            cfg.master_seed,
                            &[WORKLOAD_STREAM, n as u64, m as u64, s.unwrap_or(0) as u64],
                        );
                        let mut spec = WorkloadSpec::new(*kind, m, n, seed).with_p(*p);
                        spec.s = s;
                        plans.push(GroupPlan {
                            n,
                            m,
                            s,
                            spec: Some(spec),
                        });
                    }
                }
            }
            plans
        }
        (WorkloadSource::File { .. }, None) => Vec::new(),
    }
}

fn build_group(
    cfg: &ExperimentConfig,
    plan: &GroupPlan,
    file_workload: Option<&WorkloadMatrix<f64>>,
    raw: &[f64],
) -> Group {
    let label = match &plan.spec {
        Some(spec) => spec.kind.to_string(),
        None => match &cfg.workload {
            WorkloadSource::File { path } => path.display().to_string(),
            WorkloadSource::Generate { kind, .. } => kind.to_string(),
        },
    };
    let state = (|| -> Result<GroupState> {
        let workload = match (&plan.spec, file_workload) {
            (Some(spec), _) => spec.generate::<f64>()?,
            (None, Some(w)) => w.clone(),
            (None, None) => return Err(Error::Config("no workload".into())),
        };
        let data = coarsen(raw, plan.n)?;
        let exact = workload.answer(&data)?;
        let rank = if cfg.mechanisms.contains(&MechanismId::LRM) {
            workload.rank()
        } else {
            0
        };
        let strategy = cfg.mechanisms.contains(&MechanismId::MM).then(|| {
            let mut mm = cfg.mm.clone();
            mm.time_limit = Some(cell_timeout(cfg));
            timed(|| mm_solve_strategy(&workload, &mm).map_err(|e| e.to_string()))
        });
        let plan = cfg
            .mechanisms
            .contains(&MechanismId::HM)
            .then(|| timed(|| HierarchicalPlan::new(&workload)));
        Ok(GroupState {
            workload,
            data,
            exact,
            rank,
            strategy,
            plan,
        })
    })();
    Group {
        n: plan.n,
        m: plan.m,
        s: plan.s,
        label,
        state: state.map(Arc::new).map_err(|e| e.to_string()),
    }
}

fn cell_timeout(cfg: &ExperimentConfig) -> Duration {
    Duration::from_secs_f64(cfg.cell_timeout_secs)
}

/// One `(group, γ, r-multiplier)` unit; its cells are the listed ε values.
struct Unit {
    group: usize,
    gamma: f64,
    r_multiplier: f64,
    /// Grid index of the first ε cell.
    first_cell: usize,
}

/// Runs every cell of the grid. Cell failures are recorded in their rows;
/// only an invalid configuration or unreadable inputs return an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ErrorReport>> {
    cfg.validate()?;
    let raw = load_data_source(&cfg.data)?;
    let file_workload = match &cfg.workload {
        WorkloadSource::File { path } => Some(crate::io::load_workload::<f64>(path)?.0),
        WorkloadSource::Generate { .. } => None,
    };
    let plans = plan_groups(cfg, file_workload.as_ref());

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.resolved_threads()? {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;

    let per_unit = cfg.epsilons.len();
    let mut units = Vec::new();
    let mut next_cell = 0;
    for g in 0..plans.len() {
        for &gamma in &cfg.grid.gamma {
            for &r_multiplier in &cfg.grid.r_multiplier {
                units.push(Unit {
                    group: g,
                    gamma,
                    r_multiplier,
                    first_cell: next_cell,
                });
                next_cell += per_unit;
            }
        }
    }

    let mut reports: Vec<ErrorReport> = pool.install(|| {
        let groups: Vec<Group> = plans
            .par_iter()
            .map(|plan| build_group(cfg, plan, file_workload.as_ref(), &raw))
            .collect();
        units
            .par_iter()
            .flat_map_iter(|unit| run_unit(cfg, &groups[unit.group], unit))
            .collect()
    });
    sort_reports(&mut reports);
    Ok(reports)
}

struct RowBase<'a> {
    cfg: &'a ExperimentConfig,
    group: &'a Group,
    unit: &'a Unit,
}

impl RowBase<'_> {
    fn row(&self, cell: usize, epsilon: f64, mechanism: MechanismId) -> ErrorReport {
        ErrorReport {
            cell,
            data: self.cfg.data.label(),
            workload: self.group.label.clone(),
            n: self.group.n,
            m: self.group.m,
            s: self.group.s,
            gamma: self.unit.gamma,
            r_multiplier: self.unit.r_multiplier,
            r: None,
            epsilon,
            trials: self.cfg.trials,
            mechanism,
            total_sq_error: None,
            per_query_sq_error: None,
            expected_sq_error: None,
            decompose_time: 0.0,
            answer_time: 0.0,
            converged: true,
            status: CellStatus::Ok,
            message: String::new(),
        }
    }

    fn seconds(&self, s: f64) -> f64 {
        if self.cfg.record_timings {
            s
        } else {
            0.0
        }
    }
}

fn fail(mut row: ErrorReport, status: CellStatus, message: impl Into<String>) -> ErrorReport {
    row.status = status;
    row.message = message.into();
    row.total_sq_error = None;
    row.per_query_sq_error = None;
    row
}

/// Precomputed state of one mechanism for a unit.
enum Prepared<'a> {
    Lrm(&'a Decomposition<f64>),
    Nod,
    Nor,
    Mm(&'a StrategyMatrix<f64>),
    Wm,
    Hm(&'a HierarchicalPlan),
}

fn run_unit(cfg: &ExperimentConfig, group: &Group, unit: &Unit) -> Vec<ErrorReport> {
    let base = RowBase { cfg, group, unit };
    let cells: Vec<(usize, f64)> = cfg
        .epsilons
        .iter()
        .enumerate()
        .map(|(i, &e)| (unit.first_cell + i, e))
        .collect();
    let state = match &group.state {
        Ok(state) => state.clone(),
        Err(message) => {
            let mut out = Vec::new();
            for &(cell, eps) in &cells {
                for &mech in &cfg.mechanisms {
                    out.push(fail(base.row(cell, eps, mech), CellStatus::Failed, message.clone()));
                }
            }
            return out;
        }
    };

    let decomposition = cfg.mechanisms.contains(&MechanismId::LRM).then(|| {
        let r = inner_dimension_for(unit.r_multiplier, state.rank);
        let mut solver = cfg.solver.clone().with_r(r).with_gamma(unit.gamma);
        solver.time_limit = Some(cell_timeout(cfg));
        (r, timed(|| decompose(&state.workload, &solver)))
    });

    let mut out = Vec::with_capacity(cells.len() * cfg.mechanisms.len());
    for &(cell, epsilon) in &cells {
        let params = match PrivacyParams::new(epsilon) {
            Ok(p) => p,
            Err(e) => {
                for &mech in &cfg.mechanisms {
                    out.push(fail(base.row(cell, epsilon, mech), CellStatus::Failed, e.to_string()));
                }
                continue;
            }
        };
        let mut mechanisms = cfg.mechanisms.clone();
        mechanisms.sort();
        mechanisms.dedup();
        for mech in mechanisms {
            let mut row = base.row(cell, epsilon, mech);
            let prepared = match mech {
                MechanismId::LRM => {
                    let (r, t) = decomposition.as_ref().expect("LRM decomposition computed");
                    row.r = Some(*r);
                    row.decompose_time = base.seconds(t.seconds);
                    match &t.value {
                        Ok(d) => {
                            row.converged = d.converged();
                            if d.stats.timed_out {
                                out.push(fail(row, CellStatus::Timeout, "decomposition timed out"));
                                continue;
                            }
                            let bias = (state.workload.matrix() - d.product()) * state.data.counts();
                            row.expected_sq_error =
                                Some(expected_error_lrm(d, &params) + bias.norm_squared());
                            Prepared::Lrm(d)
                        }
                        Err(e) => {
                            out.push(fail(row, CellStatus::Failed, e.to_string()));
                            continue;
                        }
                    }
                }
                MechanismId::NOD => {
                    row.expected_sq_error = Some(expected_error_nod(&state.workload, &params));
                    Prepared::Nod
                }
                MechanismId::NOR => {
                    row.expected_sq_error = Some(expected_error_nor(&state.workload, &params));
                    Prepared::Nor
                }
                MechanismId::MM => {
                    let t = state.strategy.as_ref().expect("MM strategy computed");
                    row.decompose_time = base.seconds(t.seconds);
                    match &t.value {
                        Ok(s) => {
                            row.converged = s.converged;
                            if s.timed_out {
                                out.push(fail(row, CellStatus::Timeout, "strategy search timed out"));
                                continue;
                            }
                            row.expected_sq_error = s.expected_error(&state.workload, &params).ok();
                            Prepared::Mm(s)
                        }
                        Err(e) => {
                            out.push(fail(row, CellStatus::Failed, e.clone()));
                            continue;
                        }
                    }
                }
                MechanismId::WM => Prepared::Wm,
                MechanismId::HM => {
                    let t = state.plan.as_ref().expect("hierarchical plan computed");
                    row.decompose_time = base.seconds(t.seconds);
                    row.expected_sq_error =
                        Some(t.value.expected_error_per_query(&params).iter().sum());
                    Prepared::Hm(&t.value)
                }
            };
            out.push(run_trials(cfg, &base, &state, row, &prepared, &params));
        }
    }
    out
}

fn answer_once(
    state: &GroupState,
    prepared: &Prepared<'_>,
    params: &PrivacyParams<f64>,
    seed: u64,
) -> Result<NoisyAnswer<f64>> {
    let (w, d) = (&state.workload, &state.data);
    match prepared {
        Prepared::Lrm(dec) => lrm_answer(dec, d, params, seed),
        Prepared::Nod => noise_on_data(w, d, params, seed),
        Prepared::Nor => noise_on_results(w, d, params, seed),
        Prepared::Mm(s) => mm_answer(s, w, d, params, seed),
        Prepared::Wm => wavelet_answer(w, d, params, seed),
        Prepared::Hm(plan) => Ok(plan.answer(d, params, seed)),
    }
}

fn run_trials(
    cfg: &ExperimentConfig,
    base: &RowBase<'_>,
    state: &GroupState,
    mut row: ErrorReport,
    prepared: &Prepared<'_>,
    params: &PrivacyParams<f64>,
) -> ErrorReport {
    let started = Instant::now();
    let deadline = cell_timeout(cfg);
    let mut total = 0.0;
    for trial in 0..cfg.trials {
        if started.elapsed() > deadline {
            return fail(row, CellStatus::Timeout, format!("timed out after {trial} trials"));
        }
        let seed = derive_seed(
            cfg.master_seed,
            &[TRIAL_STREAM, row.cell as u64, row.mechanism as u64, trial as u64],
        );
        match answer_once(state, prepared, params, seed) {
            Ok(ans) => total += ans.squared_error(&state.exact),
            Err(e) => return fail(row, CellStatus::Failed, e.to_string()),
        }
    }
    row.answer_time = base.seconds(started.elapsed().as_secs_f64());
    let mean = total / cfg.trials as f64;
    row.total_sq_error = Some(mean);
    row.per_query_sq_error = Some(mean / row.m as f64);
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::WorkloadKind;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synthetic {
                dataset: SyntheticDataset::SocialNetwork,
                seed: 1,
            },
            workload: WorkloadSource::Generate {
                kind: WorkloadKind::WRange,
                p: 0.02,
            },
            mechanisms: MechanismId::ALL.to_vec(),
            epsilons: vec![1.0, 0.1],
            trials: 3,
            grid: ParameterGrid {
                gamma: vec![0.01],
                r_multiplier: vec![1.2],
                n: vec![16],
                m: vec![8],
                s_fraction: vec![0.5],
            },
            master_seed: 9,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn synthetic_counts_are_heavy_tailed_and_reproducible() {
        let a = synthetic_counts(11_342, 3);
        assert_eq!(a, synthetic_counts(11_342, 3));
        assert_ne!(a, synthetic_counts(11_342, 4));
        assert!(a.iter().all(|&x| x >= 1.0 && x.fract() == 0.0));
        let max = a.iter().cloned().fold(0.0, f64::max);
        let ones = a.iter().filter(|&&x| x == 1.0).count();
        assert!(max > 100.0);
        // P(X < 2) = 1 − 2^{-1.5} ≈ 0.646
        let frac = ones as f64 / a.len() as f64;
        assert!((frac - 0.646).abs() < 0.02, "{frac}");
    }

    #[test]
    fn every_cell_and_mechanism_reported_in_order() {
        let cfg = small_config();
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 2 * 6);
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.cell, i / 6);
            assert_eq!(r.mechanism, MechanismId::ALL[i % 6]);
            assert_eq!(r.status, CellStatus::Ok, "{r:?}");
            assert!(r.total_sq_error.unwrap() >= 0.0);
            assert_eq!(r.decompose_time, 0.0);
            assert_eq!(r.answer_time, 0.0);
        }
        assert_eq!(reports[0].r, Some(inner_dimension_for(1.2, 8)));
    }

    #[test]
    fn reports_are_reproducible_and_seed_dependent() {
        let cfg = small_config();
        let a = reports_to_csv(&run_experiment(&cfg).unwrap()).unwrap();
        let b = reports_to_csv(&run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.master_seed += 1;
        assert_ne!(a, reports_to_csv(&run_experiment(&other).unwrap()).unwrap());
    }

    #[test]
    fn thread_count_does_not_change_reports() {
        let mut cfg = small_config();
        cfg.grid.n = vec![16, 32];
        cfg.grid.gamma = vec![0.01, 0.1];
        cfg.threads = Some(1);
        let one = reports_to_csv(&run_experiment(&cfg).unwrap()).unwrap();
        cfg.threads = Some(3);
        assert_eq!(one, reports_to_csv(&run_experiment(&cfg).unwrap()).unwrap());
    }

    #[test]
    fn timings_recorded_on_request() {
        let mut cfg = small_config();
        cfg.record_timings = true;
        cfg.mechanisms = vec![MechanismId::LRM];
        let reports = run_experiment(&cfg).unwrap();
        assert!(reports.iter().all(|r| r.decompose_time > 0.0 && r.answer_time > 0.0));
    }

    #[test]
    fn nod_matches_analytic_error() {
        let mut cfg = small_config();
        cfg.mechanisms = vec![MechanismId::NOD];
        cfg.epsilons = vec![0.5];
        cfg.trials = 20_000;
        let r = &run_experiment(&cfg).unwrap()[0];
        let (got, want) = (r.total_sq_error.unwrap(), r.expected_sq_error.unwrap());
        assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    }

    #[test]
    fn failing_group_is_recorded_and_others_continue() {
        let mut cfg = small_config();
        // 11,342 counts cannot be coarsened into 20,000 groups
        cfg.grid.n = vec![16, 20_000];
        cfg.grid.m = vec![4];
        cfg.mechanisms = vec![MechanismId::NOD, MechanismId::NOR];
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 2 * 2 * 2);
        let (bad, good): (Vec<_>, Vec<_>) = reports.iter().partition(|r| r.n == 20_000);
        assert!(bad.iter().all(|r| r.status == CellStatus::Failed && r.total_sq_error.is_none()));
        assert!(bad[0].message.contains("coarsen"));
        assert!(good.iter().all(|r| r.status == CellStatus::Ok));
    }

    #[test]
    fn wrelated_cells_use_base_query_fraction() {
        let mut cfg = small_config();
        cfg.workload = WorkloadSource::Generate {
            kind: WorkloadKind::WRelated,
            p: 0.02,
        };
        cfg.grid.s_fraction = vec![0.25, 0.5];
        cfg.mechanisms = vec![MechanismId::NOD];
        cfg.epsilons = vec![1.0];
        let reports = run_experiment(&cfg).unwrap();
        let s: Vec<_> = reports.iter().map(|r| r.s).collect();
        assert_eq!(s, vec![Some(2), Some(4)]);
    }

    #[test]
    fn file_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let counts: String = (0..40).map(|i| format!("{}\n", i % 5)).collect();
        let counts_path = dir.path().join("counts.txt");
        std::fs::write(&counts_path, counts).unwrap();
        let w = WorkloadSpec::new(WorkloadKind::WRange, 5, 10, 2)
            .generate::<f64>()
            .unwrap();
        let w_path = dir.path().join("w.csv");
        crate::io::save_workload(&w_path, &w, None).unwrap();

        let mut cfg = small_config();
        cfg.data = DataSource::File {
            path: counts_path,
            negatives: NegativeCounts::Reject,
        };
        cfg.workload = WorkloadSource::File { path: w_path };
        cfg.epsilons = vec![1.0];
        let reports = run_experiment(&cfg).unwrap();
        assert_eq!(reports.len(), 6);
        assert!(reports.iter().all(|r| r.n == 10 && r.m == 5 && r.status == CellStatus::Ok));
    }

    #[test]
    fn invalid_config_is_an_error() {
        let mut cfg = small_config();
        cfg.trials = 0;
        assert!(run_experiment(&cfg).is_err());
        let mut cfg = small_config();
        cfg.data = DataSource::File {
            path: "/nonexistent/counts.txt".into(),
            negatives: NegativeCounts::Reject,
        };
        assert!(matches!(run_experiment(&cfg), Err(Error::Io { .. })));
    }
}
