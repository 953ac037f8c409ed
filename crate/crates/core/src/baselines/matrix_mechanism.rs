//! Matrix mechanism with a strategy found by smoothing the max-diagonal
//! objective and running a non-monotone spectral projected gradient over the
//! positive definite cone.
//!
//! For a strategy `A` with `M = AᵀA`, the expected error of answering `W`
//! through `A` is proportional to `max(diag M)·tr(WᵀW M⁻¹)`. The max is
//! replaced by the log-sum-exp smoothing `f_μ`.

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, thin_svd};
use crate::mechanisms::{NoisyAnswer, PrivacyParams};
use crate::rng::{laplace_vector, rng_from_seed};
use crate::scalar::Real;
use crate::workload::{max_column_l1, rank_tolerance, DatabaseVector, WorkloadMatrix};

pub const MM_ID: &str = "MM";

fn check_smoothing<T: Real>(v: &DVector<T>, mu: T) -> Result<T> {
    if v.is_empty() {
        return Err(Error::Input("smoothed max of an empty vector".into()));
    }
    if !(mu > T::zero()) || !mu.is_finite_value() {
        return Err(Error::Parameter(format!("smoothing mu must be positive, got {mu}")));
    }
    if v.iter().any(|x| !x.is_finite_value()) {
        return Err(Error::Input("smoothed max of a non-finite vector".into()));
    }
    Ok(v.max())
}

/// `f_μ(v) = max(v) + μ·log Σ exp((vᵢ − max v)/μ)`.
pub fn smoothed_max<T: Real>(v: &DVector<T>, mu: T) -> Result<T> {
    let top = check_smoothing(v, mu)?;
    let sum = v.iter().fold(T::zero(), |acc, &x| acc + ((x - top) / mu).exp());
    Ok(top + mu * sum.ln())
}

/// Softmax weights `∂f_μ/∂vᵢ = (Σⱼ exp((vⱼ − vᵢ)/μ))⁻¹`.
pub fn smoothed_max_grad<T: Real>(v: &DVector<T>, mu: T) -> Result<DVector<T>> {
    let top = check_smoothing(v, mu)?;
    let weights = v.map(|x| ((x - top) / mu).exp());
    let total = weights.sum();
    Ok(weights / total)
}

/// Value `f_μ(diag M)·tr(WᵀW·M⁻¹)` and its gradient
/// `diag(∇f_μ)·tr(WᵀW·M⁻¹) − f_μ(diag M)·M⁻¹WᵀWM⁻¹`.
pub fn mm_objective_grad<T: Real>(
    m: &DMatrix<T>,
    workload: &WorkloadMatrix<T>,
    mu: T,
) -> Result<(T, DMatrix<T>)> {
    let gram = workload.matrix().transpose() * workload.matrix();
    objective_grad(m, &gram, mu, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

fn objective_grad<T: Real>(
    m: &DMatrix<T>,
    gram: &DMatrix<T>,
    mu: T,
    with_grad: bool,
) -> Result<(T, Option<DMatrix<T>>)> {
    if m.nrows() != m.ncols() || m.nrows() != gram.nrows() {
        return Err(Error::Input(format!(
            "expected a {0}x{0} matrix, got {1}x{2}",
            gram.nrows(),
            m.nrows(),
            m.ncols()
        )));
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("matrix is not positive definite".into()))?;
    let m_inv_g = chol.solve(gram);
    let trace = m_inv_g.trace();
    let diag = m.diagonal();
    let fmax = smoothed_max(&diag, mu)?;
    let value = fmax * trace;
    if !with_grad {
        return Ok((value, None));
    }
    // M⁻¹GM⁻¹ = M⁻¹(M⁻¹G)ᵀ since both M and G are symmetric
    let sandwich = chol.solve(&m_inv_g.transpose());
    let mut grad = sandwich * (-fmax);
    let soft = smoothed_max_grad(&diag, mu)?;
    for i in 0..m.nrows() {
        grad[(i, i)] += soft[i] * trace;
    }
    let grad = (&grad + grad.transpose()) * T::lit(0.5);
    Ok((value, Some(grad)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmConfig {
    /// Target gap between `f_μ` and the true max; `None` uses
    /// `1e-3·max(diag M₀)`. Kept fixed for the whole run.
    pub smoothing_tolerance: Option<f64>,
    pub max_iters: usize,
    /// Non-monotone line search compares against the max of this many past values.
    pub window: usize,
    /// Sufficient-decrease constant of the line search.
    pub armijo: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Stop when the projected gradient step is below this, relative to `‖M‖_F`.
    pub tol: f64,
    /// Eigenvalue floor of the cone projection, relative to `tr(M₀)/n`.
    pub eig_floor_relative: f64,
    /// Wall-clock budget; the current iterate is returned when exceeded.
    pub time_limit: Option<Duration>,
}

impl Default for MmConfig {
    fn default() -> Self {
        MmConfig {
            smoothing_tolerance: None,
            max_iters: 300,
            window: 10,
            armijo: 1e-4,
            step_min: 1e-12,
            step_max: 1e12,
            tol: 1e-8,
            eig_floor_relative: 1e-8,
            time_limit: None,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.smoothing_tolerance {
            if !(t > 0.0) {
                return Err(Error::Config(format!("smoothing tolerance must be positive, got {t}")));
            }
        }
        if self.window == 0 || self.max_iters == 0 {
            return Err(Error::Config("window and max_iters must be positive".into()));
        }
        if !(self.eig_floor_relative > 0.0) {
            return Err(Error::Config("eig_floor_relative must be positive".into()));
        }
        if !(self.step_min > 0.0 && self.step_max >= self.step_min) {
            return Err(Error::Config("invalid step bounds".into()));
        }
        Ok(())
    }

    /// `μ = tolerance / log n`; for `n = 1` the max is exact and `μ = tolerance`.
    pub fn mu_for(tolerance: f64, n: usize) -> f64 {
        if n > 1 {
            tolerance / (n as f64).ln()
        } else {
            tolerance
        }
    }
}

/// Strategy queries `A` (`r × n`, full column rank) with its pseudo-inverse.
#[derive(Clone, Debug)]
pub struct StrategyMatrix<T: Real> {
    pub a: DMatrix<T>,
    pub a_pinv: DMatrix<T>,
    /// Largest column L1 norm of `A`.
    pub sensitivity: T,
    pub iterations: usize,
    /// Final smoothed objective, when produced by the solver.
    pub objective: Option<T>,
    pub converged: bool,
    pub timed_out: bool,
    /// The solver's final `M`, of which `AᵀA` is the square-root reconstruction.
    pub optimized_gram: Option<DMatrix<T>>,
}

impl<T: Real> StrategyMatrix<T> {
    pub fn new(a: DMatrix<T>) -> Result<Self> {
        let (r, n) = (a.nrows(), a.ncols());
        if r < n {
            return Err(Error::Precondition(format!(
                "strategy with {r} rows cannot have full column rank over {n} columns"
            )));
        }
        if a.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::Input("strategy entries must be finite".into()));
        }
        let svd = thin_svd(&a);
        let top = svd.sigma.max();
        let cut = top * rank_tolerance::<T>(r.max(n));
        if !(top > T::zero()) || svd.sigma.iter().any(|&s| s <= cut) {
            return Err(Error::Precondition("strategy matrix is rank deficient".into()));
        }
        let inv_sigma = svd.sigma.map(|s| T::one() / s);
        let a_pinv = svd.v_t.transpose() * DMatrix::from_diagonal(&inv_sigma) * svd.u.transpose();
        let sensitivity = max_column_l1(&a);
        Ok(StrategyMatrix {
            a,
            a_pinv,
            sensitivity,
            iterations: 0,
            objective: None,
            converged: true,
            timed_out: false,
            optimized_gram: None,
        })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// `M = AᵀA`.
    pub fn gram(&self) -> DMatrix<T> {
        self.a.transpose() * &self.a
    }

    /// `2·(Δ_A·Δᵤ/ε)²·‖W·A†‖²_F`.
    pub fn expected_error(&self, workload: &WorkloadMatrix<T>, params: &PrivacyParams<T>) -> Result<T> {
        self.check_workload(workload)?;
        let map = workload.matrix() * &self.a_pinv;
        Ok(params.unit_variance() * self.sensitivity * self.sensitivity * map.norm_squared())
    }

    fn check_workload(&self, workload: &WorkloadMatrix<T>) -> Result<()> {
        if workload.n() != self.n() {
            return Err(Error::Input(format!(
                "strategy covers {} unit counts but the workload has {}",
                self.n(),
                workload.n()
            )));
        }
        Ok(())
    }
}

fn project_pd<T: Real>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let (values, vectors) = symmetric_eigen(m);
    let clipped = values.map(|v| v.max(floor));
    let out = &vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose();
    (&out + out.transpose()) * T::lit(0.5)
}

/// Minimizes `f_μ(diag M)·tr(WᵀW M⁻¹)` over `M ⪰ eig_floor·I` and returns
/// `A = M^{1/2} = Σ √λᵢ vᵢvᵢᵀ`.
///
/// Starts from `M₀ = diag(WᵀW) + eig_floor·I`. Each iteration projects a
/// Barzilai–Borwein step onto the cone by eigenvalue clipping and backtracks
/// along the projected direction until the value drops below the maximum of
/// the last `window` values by the Armijo margin.
pub fn mm_solve_strategy<T: Real>(
    workload: &WorkloadMatrix<T>,
    cfg: &MmConfig,
) -> Result<StrategyMatrix<T>> {
    cfg.validate()?;
    let n = workload.n();
    let gram = workload.matrix().transpose() * workload.matrix();
    let base = DMatrix::from_diagonal(&gram.diagonal());
    let trace0 = base.trace().max(T::lit(f64::MIN_POSITIVE));
    let floor = T::lit(cfg.eig_floor_relative) * trace0 / T::lit(n as f64);
    let mut m = &base + DMatrix::identity(n, n) * floor;

    let tolerance = cfg
        .smoothing_tolerance
        .unwrap_or_else(|| 1e-3 * m.diagonal().max().as_f64());
    let mu = T::lit(MmConfig::mu_for(tolerance, n));

    let (mut value, grad) = objective_grad(&m, &gram, mu, true)?;
    let mut grad = grad.expect("gradient requested");
    let mut history: VecDeque<T> = VecDeque::with_capacity(cfg.window);
    history.push_back(value);
    let mut step = T::one() / grad.amax().max(T::lit(f64::MIN_POSITIVE));
    let (step_min, step_max) = (T::lit(cfg.step_min), T::lit(cfg.step_max));
    let tol = T::lit(cfg.tol);
    let mut converged = false;
    let mut timed_out = false;
    let mut iterations = 0;
    let started = Instant::now();

    for it in 1..=cfg.max_iters {
        if cfg.time_limit.is_some_and(|limit| started.elapsed() >= limit) {
            timed_out = true;
            break;
        }
        iterations = it;
        let target = project_pd(&(&m - &grad * step), floor);
        let dir = &target - &m;
        if dir.norm() <= tol * m.norm() {
            converged = true;
            break;
        }
        let slope = grad.dot(&dir);
        let reference = history.iter().copied().fold(value, |a, b| a.max(b));
        let mut lambda = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &m + &dir * lambda;
            if let Ok((v, _)) = objective_grad(&trial, &gram, mu, false) {
                if v <= reference + T::lit(cfg.armijo) * lambda * slope {
                    accepted = Some((trial, v));
                    break;
                }
            }
            lambda *= T::lit(0.5);
        }
        let Some((next, next_value)) = accepted else {
            break;
        };
        let (_, g) = objective_grad(&next, &gram, mu, true)?;
        let next_grad = g.expect("gradient requested");
        let s = &next - &m;
        let y = &next_grad - &grad;
        let sy = s.dot(&y);
        step = if sy > T::zero() {
            (s.norm_squared() / sy).max(step_min).min(step_max)
        } else {
            step_max
        };
        m = next;
        grad = next_grad;
        value = next_value;
        if history.len() == cfg.window {
            history.pop_front();
        }
        history.push_back(value);
    }
    log::debug!("mm strategy n={n}: {iterations} iterations, objective {value}, converged {converged}");

    let (values, vectors) = symmetric_eigen(&m);
    let roots = values.map(|v| v.max(T::zero()).sqrt());
    let a = &vectors * DMatrix::from_diagonal(&roots) * vectors.transpose();
    let a = (&a + a.transpose()) * T::lit(0.5);
    let mut strategy = StrategyMatrix::new(a)?;
    strategy.iterations = iterations;
    strategy.objective = Some(value);
    strategy.converged = converged;
    strategy.timed_out = timed_out;
    strategy.optimized_gram = Some(m);
    Ok(strategy)
}

/// `W·A†·(A·D + η)` with `η ~ Lap(Δ_A·Δᵤ/ε)ʳ`; equal to `W·D + W·A†·η`.
pub fn mm_answer<T: Real>(
    strategy: &StrategyMatrix<T>,
    workload: &WorkloadMatrix<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
    seed: u64,
) -> Result<NoisyAnswer<T>> {
    strategy.check_workload(workload)?;
    workload.check_data(data)?;
    let mut rng = rng_from_seed(seed);
    let eta = laplace_vector(strategy.a.nrows(), params.scale_for(strategy.sensitivity), &mut rng)?;
    let noisy = &strategy.a * data.counts() + eta;
    let values = workload.matrix() * (&strategy.a_pinv * noisy);
    Ok(NoisyAnswer::new(values, MM_ID, seed))
}
