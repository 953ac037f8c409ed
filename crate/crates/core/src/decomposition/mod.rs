//! Workload decomposition `W ≈ B·L`.
//!
//! Minimizes `tr(BᵀB)` subject to `‖W − BL‖_F ≤ γ` and every column of `L`
//! having L1 norm at most one. The solver is an inexact augmented Lagrangian
//! method: each outer iteration approximately minimizes
//!
//! ```text
//! J(B, L) = ½ tr(BᵀB) + ⟨π, W − BL⟩ + β/2 ‖W − BL‖²_F
//! ```
//!
//! by alternating a closed-form `B` update with an accelerated projected
//! gradient solve for `L`, then updates the multiplier `π` and, every
//! `beta_double_every` iterations, doubles the penalty `β`.

pub mod nesterov;
pub mod projection;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Real;
use crate::workload::{max_column_l1, WorkloadMatrix};

pub use nesterov::{g_value, grad_g, solve_l, LSolve, NesterovState};
pub use projection::{project_columns_l1, project_l1_ball_in_place};

/// Slack allowed on the unit column-L1 bound of `L`.
pub const SENSITIVITY_SLACK: f64 = 1e-6;

/// Relative size of the exact-equality target used when `gamma == 0`.
pub const EXACT_GAMMA_RELATIVE: f64 = 1e-8;

/// Default inner dimension: `round(1.2 · rank(W))`, at least one.
pub fn default_inner_dimension(rank: usize) -> usize {
    ((1.2 * rank as f64).round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Inner dimension; `None` means [`default_inner_dimension`] of the workload rank.
    pub r: Option<usize>,
    /// Residual tolerance γ on `‖W − BL‖_F`. Zero requests the exact constraint.
    pub gamma: f64,
    pub beta0: f64,
    pub beta_max: f64,
    pub beta_double_every: usize,
    pub outer_max: usize,
    /// Cap on B/L alternations per subproblem.
    pub inner_max: usize,
    /// Subproblem is solved once the relative change of `J` drops below this.
    pub inner_rel_tol: f64,
    /// Cap on accelerated gradient iterations per `L` solve.
    pub nesterov_max: usize,
    /// Residual at which the solver stops; defaults to the effective γ.
    pub residual_tol: Option<f64>,
    pub seed: u64,
    /// Record `tr(BᵀB)`, β and the residual after every outer iteration.
    pub record_trace: bool,
    /// Wall-clock budget; the best iterate so far is returned when exceeded.
    pub time_limit: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            r: None,
            gamma: 0.01,
            beta0: 1.0,
            beta_max: (1u64 << 20) as f64,
            beta_double_every: 10,
            outer_max: 400,
            inner_max: 100,
            inner_rel_tol: 1e-6,
            nesterov_max: 10,
            residual_tol: None,
            seed: 0,
            record_trace: false,
            time_limit: None,
        }
    }
}

impl SolverConfig {
    pub fn with_r(mut self, r: usize) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == Some(0) {
            return Err(Error::Config("inner dimension r must be at least 1".into()));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.beta0 > 0.0) {
            return Err(Error::Config(format!("beta0 must be > 0, got {}", self.beta0)));
        }
        if !(self.beta_max >= self.beta0) {
            return Err(Error::Config("beta_max must be at least beta0".into()));
        }
        if self.beta_double_every == 0 || self.outer_max == 0 || self.inner_max == 0 {
            return Err(Error::Config("iteration counts must be positive".into()));
        }
        if self.nesterov_max == 0 {
            return Err(Error::Config("nesterov_max must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the inner dimension for a workload of the given rank.
    pub fn inner_dimension(&self, rank: usize) -> usize {
        self.r.unwrap_or_else(|| default_inner_dimension(rank))
    }
}

/// Augmented Lagrangian state.
#[derive(Clone, Debug)]
pub struct AlmState<T: Real> {
    /// Multiplier π, `m × n`.
    pub pi: DMatrix<T>,
    pub beta: T,
    /// Outer iteration counter, starting at 1.
    pub k: usize,
    /// Latest residual `‖W − BL‖_F`.
    pub tau: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub k: usize,
    pub beta: f64,
    pub objective: f64,
    pub residual: f64,
    /// Inner directions whose `B` column is not numerically zero.
    pub active: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub outer_iterations: usize,
    pub alternations: usize,
    pub nesterov_iterations: usize,
    /// `L` solves that stopped at the iteration cap.
    pub nesterov_capped: usize,
    /// Collapsed inner directions that were reseeded.
    pub revived: usize,
    pub final_beta: f64,
    pub converged: bool,
    pub timed_out: bool,
    pub trace: Vec<TracePoint>,
}

/// A factorization `W ≈ B·L` with its quality measures.
#[derive(Clone, Debug)]
pub struct Decomposition<T: Real> {
    /// `m × r`.
    pub b: DMatrix<T>,
    /// `r × n`.
    pub l: DMatrix<T>,
    pub gamma: T,
    /// `‖W − BL‖_F`.
    pub residual: T,
    /// `tr(BᵀB)`, equal to the query scale Φ(B, L).
    pub objective: T,
    /// Δ(B, L): the largest column L1 norm of `L`.
    pub l_sensitivity: T,
    pub stats: SolverStats,
}

impl<T: Real> Decomposition<T> {
    /// Wraps given factors, computing residual, objective and sensitivity against `workload`.
    pub fn from_factors(
        workload: &WorkloadMatrix<T>,
        b: DMatrix<T>,
        l: DMatrix<T>,
        gamma: T,
    ) -> Result<Self> {
        if b.nrows() != workload.m() || l.ncols() != workload.n() || b.ncols() != l.nrows() {
            return Err(Error::Input(format!(
                "factors {}x{} and {}x{} do not match a {}x{} workload",
                b.nrows(),
                b.ncols(),
                l.nrows(),
                l.ncols(),
                workload.m(),
                workload.n()
            )));
        }
        if b.iter().chain(l.iter()).any(|x| !x.is_finite_value()) {
            return Err(Error::Input("factor entries must be finite".into()));
        }
        let residual = (workload.matrix() - &b * &l).norm();
        Ok(Self::assemble(b, l, gamma, residual, SolverStats::default()))
    }

    fn assemble(b: DMatrix<T>, l: DMatrix<T>, gamma: T, residual: T, stats: SolverStats) -> Self {
        let objective = b.norm_squared();
        let l_sensitivity = max_column_l1(&l);
        Decomposition {
            b,
            l,
            gamma,
            residual,
            objective,
            l_sensitivity,
            stats,
        }
    }

    pub fn r(&self) -> usize {
        self.b.ncols()
    }

    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn n(&self) -> usize {
        self.l.ncols()
    }

    /// Φ(B, L) = Σ Bᵢⱼ².
    pub fn scale(&self) -> T {
        self.objective
    }

    /// Φ(B, L)·Δ(B, L)², the quantity the expected error is proportional to.
    pub fn error_product(&self) -> T {
        self.objective * self.l_sensitivity * self.l_sensitivity
    }

    pub fn product(&self) -> DMatrix<T> {
        &self.b * &self.l
    }

    pub fn is_feasible(&self) -> bool {
        self.l_sensitivity <= T::one() + T::lit(SENSITIVITY_SLACK)
    }

    pub fn converged(&self) -> bool {
        self.stats.converged
    }
}

/// Rescales to `(αB, L/α)`; the product and Φ·Δ² are unchanged.
pub fn scale_decomposition<T: Real>(d: &Decomposition<T>, alpha: T) -> Result<Decomposition<T>> {
    if !(alpha > T::zero()) || !alpha.is_finite_value() {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(Decomposition {
        b: &d.b * alpha,
        l: &d.l / alpha,
        gamma: d.gamma,
        residual: d.residual,
        objective: d.objective * alpha * alpha,
        l_sensitivity: d.l_sensitivity / alpha,
        stats: d.stats.clone(),
    })
}

/// Closed-form minimizer of `J` in `B`: `B = (βWLᵀ + πLᵀ)(βLLᵀ + I)⁻¹`.
pub fn update_b<T: Real>(
    w: &DMatrix<T>,
    l: &DMatrix<T>,
    pi: &DMatrix<T>,
    beta: T,
) -> DMatrix<T> {
    let r = l.nrows();
    let lt = l.transpose();
    let gram = (l * &lt) * beta + DMatrix::identity(r, r);
    let rhs = (w * beta + pi) * &lt;
    // gram is symmetric positive definite, so Cholesky always succeeds
    let chol = gram.cholesky().expect("βLLᵀ + I is positive definite");
    chol.solve(&rhs.transpose()).transpose()
}

/// Subproblem objective `J(B, L)`.
pub fn lagrangian<T: Real>(
    w: &DMatrix<T>,
    b: &DMatrix<T>,
    l: &DMatrix<T>,
    pi: &DMatrix<T>,
    beta: T,
) -> T {
    let resid = w - b * l;
    T::lit(0.5) * b.norm_squared() + pi.dot(&resid) + T::lit(0.5) * beta * resid.norm_squared()
}

/// Top-`k` SVD factors `(√k·U_kΣ_k, V_k/√k)` padded with zeros to width `r`.
fn svd_factors<T: Real>(
    workload: &WorkloadMatrix<T>,
    k: usize,
    r: usize,
) -> (DMatrix<T>, DMatrix<T>) {
    let (m, n) = (workload.m(), workload.n());
    let mut b = DMatrix::zeros(m, r);
    let mut l = DMatrix::zeros(r, n);
    if k == 0 {
        return (b, l);
    }
    let svd = workload.svd();
    let root = T::lit(k as f64).sqrt();
    for idx in 0..k {
        let lambda = svd.spectrum.singular_values[idx];
        b.set_column(idx, &(svd.u.column(idx) * (lambda * root)));
        l.set_row(idx, &(svd.v_t.row(idx) / root));
    }
    (b, l)
}

/// Feasible exact decomposition built from the SVD: `B = √ρ·UΣ`, `L = V/√ρ`
/// with `ρ = rank(W)`, zero-padded to inner dimension `r`.
///
/// Every column of `V` has unit L2 norm, hence L1 norm at most `√ρ`, so `L`
/// satisfies the sensitivity bound, and `tr(BᵀB) = ρ·Σλ_k²`.
pub fn svd_init<T: Real>(workload: &WorkloadMatrix<T>, r: usize) -> Result<Decomposition<T>> {
    let rank = workload.rank();
    if r < rank {
        return Err(Error::Config(format!(
            "inner dimension {r} is below rank(W) = {rank}; the SVD construction is infeasible"
        )));
    }
    let (b, l) = svd_factors(workload, rank, r);
    Decomposition::from_factors(workload, b, l, T::zero())
}

/// Starting point of the solver.
///
/// Uses the top `min(r, rank)` SVD triplets. Padding rows of `L` beyond the
/// rank are seeded with small random entries (their `B` columns are zero, so
/// the product is unchanged); without them the padded directions would have
/// identically zero gradient and never activate.
fn initial_point<T: Real>(
    workload: &WorkloadMatrix<T>,
    rank: usize,
    r: usize,
    seed: u64,
) -> (DMatrix<T>, DMatrix<T>) {
    let k = rank.min(r);
    let (mut b, mut l) = svd_factors(workload, k, r);
    if r > k && k > 0 {
        const PAD_SHARE: f64 = 0.1;
        let keep = T::lit(1.0 - PAD_SHARE);
        let mut rng = rng_from_seed(seed);
        for j in 0..l.ncols() {
            let mut pad: Vec<f64> = (k..r).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l1: f64 = pad.iter().map(|x: &f64| x.abs()).sum();
            if l1 > 0.0 {
                pad.iter_mut().for_each(|x| *x *= PAD_SHARE / l1);
            }
            for i in 0..k {
                l[(i, j)] *= keep;
            }
            for (i, v) in (k..r).zip(pad) {
                l[(i, j)] = T::lit(v);
            }
        }
        for i in 0..b.nrows() {
            for c in 0..k {
                b[(i, c)] /= keep;
            }
        }
    }
    (b, l)
}

fn active_directions<T: Real>(b: &DMatrix<T>) -> usize {
    let cut = T::lit(1e-8) * b.norm().max(T::one());
    b.column_iter().filter(|c| c.norm() > cut).count()
}

/// Share of each `L` column handed to a revived direction.
const REVIVE_SHARE: f64 = 0.1;

/// A `B` column below this fraction of `‖B‖_F` counts as collapsed.
const DEAD_RELATIVE: f64 = 1e-4;

/// Reseeds inner directions whose `B` column has collapsed.
///
/// The L1 projection shrinks rows of `L` that carry little weight, and once a
/// row and its `B` column are both near zero the gradients of `J` with respect
/// to either block nearly vanish, so alternation stays there even when
/// `W − BL` is far from zero. Each dead row of `L` is set along a leading right singular vector of
/// `π + β(W − BL)`, the descent direction of `J` in the product `BL`; the
/// live rows give up `REVIVE_SHARE` of their L1 mass to keep `L` feasible.
/// Returns the number of revived directions.
fn revive_dead_directions<T: Real>(
    w: &DMatrix<T>,
    b: &DMatrix<T>,
    l: &mut DMatrix<T>,
    pi: &DMatrix<T>,
    beta: T,
) -> usize {
    let dead_cut = T::lit(DEAD_RELATIVE) * b.norm().max(T::lit(f64::MIN_POSITIVE));
    let dead: Vec<usize> = (0..b.ncols())
        .filter(|&i| b.column(i).norm() <= dead_cut)
        .collect();
    if dead.is_empty() {
        return 0;
    }
    let pull = pi + (w - b * &*l) * beta;
    let svd = crate::linalg::thin_svd(&pull);
    let mut order: Vec<usize> = (0..svd.sigma.len()).collect();
    order.sort_by(|&a, &c| svd.sigma[c].partial_cmp(&svd.sigma[a]).unwrap_or(std::cmp::Ordering::Equal));
    let keep = T::lit(1.0 - REVIVE_SHARE);
    let share = T::lit(REVIVE_SHARE) / T::lit(dead.len() as f64);
    *l *= keep;
    for (&row, &idx) in dead.iter().zip(order.iter()) {
        let v = svd.v_t.row(idx);
        let peak = v.amax();
        if peak > T::zero() {
            l.set_row(row, &(v * (share / peak)));
        }
    }
    dead.len()
}

/// Solves the relaxed decomposition program for `workload`.
///
/// Returns the first iterate with residual at most the tolerance, or the last
/// iterate flagged not converged when β reaches `beta_max`, the outer
/// iteration cap or the time limit is hit first.
pub fn decompose<T: Real>(workload: &WorkloadMatrix<T>, cfg: &SolverConfig) -> Result<Decomposition<T>> {
    cfg.validate()?;
    let started = Instant::now();
    let w = workload.matrix();
    let (m, n) = (workload.m(), workload.n());
    let w_norm = workload.frobenius_norm();
    let rank = workload.rank();
    let r = cfg.inner_dimension(rank);

    let gamma_eff = if cfg.gamma == 0.0 {
        w_norm * T::lit(EXACT_GAMMA_RELATIVE)
    } else {
        T::lit(cfg.gamma)
    };
    let tol = cfg.residual_tol.map_or(gamma_eff, T::lit);

    if rank == 0 {
        let stats = SolverStats {
            converged: true,
            final_beta: cfg.beta0,
            ..SolverStats::default()
        };
        let residual = w_norm;
        return Ok(Decomposition::assemble(
            DMatrix::zeros(m, r),
            DMatrix::zeros(r, n),
            gamma_eff,
            residual,
            stats,
        ));
    }

    let (mut b, mut l) = initial_point(workload, rank, r, cfg.seed);
    let mut alm = AlmState {
        pi: DMatrix::zeros(m, n),
        beta: T::lit(cfg.beta0),
        k: 1,
        tau: (w - &b * &l).norm(),
    };
    let mut nstate = NesterovState::<T>::new(r, n);
    let mut stats = SolverStats::default();
    let rel_tol = T::lit(cfg.inner_rel_tol);
    let beta_max = T::lit(cfg.beta_max);
    let tiny = T::lit(1e-300_f64.max(f64::from(f32::MIN_POSITIVE)));

    loop {
        if alm.tau > tol {
            stats.revived += revive_dead_directions(w, &b, &mut l, &alm.pi, alm.beta);
        }
        let mut j_prev = lagrangian(w, &b, &l, &alm.pi, alm.beta);
        for _ in 0..cfg.inner_max {
            stats.alternations += 1;
            b = update_b(w, &l, &alm.pi, alm.beta);
            // let ω relax between solves; backtracking raises it again as needed
            nstate.omega = (nstate.omega * T::lit(0.5)).max(T::lit(1e-12));
            let solved = solve_l(&b, w, &alm.pi, alm.beta, &l, &mut nstate, cfg.nesterov_max);
            stats.nesterov_iterations += solved.iterations;
            stats.nesterov_capped += usize::from(!solved.converged);
            l = solved.l;
            let j = lagrangian(w, &b, &l, &alm.pi, alm.beta);
            let change = (j_prev - j).abs();
            j_prev = j;
            if change <= rel_tol * j.abs().max(tiny) {
                break;
            }
        }

        let resid = w - &b * &l;
        alm.tau = resid.norm();
        stats.outer_iterations = alm.k;
        stats.final_beta = alm.beta.as_f64();
        if cfg.record_trace {
            stats.trace.push(TracePoint {
                k: alm.k,
                beta: alm.beta.as_f64(),
                objective: b.norm_squared().as_f64(),
                residual: alm.tau.as_f64(),
                active: active_directions(&b),
            });
        }

        if alm.tau <= tol {
            stats.converged = true;
            break;
        }
        if alm.beta >= beta_max || alm.k >= cfg.outer_max {
            break;
        }
        if cfg.time_limit.is_some_and(|limit| started.elapsed() >= limit) {
            stats.timed_out = true;
            break;
        }
        if alm.k % cfg.beta_double_every == 0 {
            alm.beta *= T::lit(2.0);
        }
        alm.pi += resid * alm.beta;
        alm.k += 1;
    }

    log::debug!(
        "decompose {m}x{n} r={r}: k={} beta={} residual={} objective={} converged={}",
        stats.outer_iterations,
        stats.final_beta,
        alm.tau,
        b.norm_squared(),
        stats.converged
    );
    let tau = alm.tau;
    Ok(Decomposition::assemble(b, l, gamma_eff, tau, stats))
}
