//! The low-rank mechanism `B·(L·D + η)` and its analytic error calculators.
//!
//! Error conventions: every expected error is a total squared error summed
//! over the `m` answers. Laplace draws of scale `b` have variance `2b²`, so
//! the mechanism's expected error is `2·Φ·Δ²·Δᵤ²/ε²`. The spectral upper
//! bound is reported both verbatim (`rank·Σλ²/ε²`) and with the Laplace
//! factor applied, which is the form comparable to expected errors.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::mechanisms::{NoisyAnswer, PrivacyParams};
use crate::rng::{laplace_vector, rng_from_seed};
use crate::scalar::Real;
use crate::workload::{DatabaseVector, SpectrumSummary, WorkloadMatrix};

pub const LRM_ID: &str = "LRM";

/// Largest rank for which the approximation-ratio bound is outside its proven regime.
pub const APPROX_RATIO_MIN_RANK: usize = 5;

fn check_decomposition<T: Real>(d: &Decomposition<T>, data: &DatabaseVector<T>) -> Result<()> {
    if !d.is_feasible() {
        return Err(Error::Precondition(format!(
            "decomposition sensitivity {} exceeds 1; answering would violate the privacy budget",
            d.l_sensitivity
        )));
    }
    if d.n() != data.len() {
        return Err(Error::Input(format!(
            "decomposition has {} columns but the database has {} unit counts",
            d.n(),
            data.len()
        )));
    }
    Ok(())
}

/// Answers the workload through the decomposition: `B·(L·D + η)` with
/// `η ~ Lap(Δ(B,L)·Δᵤ/ε)ʳ`.
pub fn lrm_answer<T: Real>(
    d: &Decomposition<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
    seed: u64,
) -> Result<NoisyAnswer<T>> {
    check_decomposition(d, data)?;
    let mut rng = rng_from_seed(seed);
    let eta = laplace_vector(d.r(), params.scale_for(d.l_sensitivity), &mut rng)?;
    let values = &d.b * (&d.l * data.counts() + eta);
    Ok(NoisyAnswer::new(values, LRM_ID, seed))
}

/// `2·Φ(B,L)·Δ(B,L)²·Δᵤ²/ε²`.
pub fn expected_error_lrm<T: Real>(d: &Decomposition<T>, params: &PrivacyParams<T>) -> T {
    params.unit_variance() * d.error_product()
}

/// Expected squared error of each answer: `2·Δ(B,L)²·Δᵤ²/ε² · Σⱼ Bᵢⱼ²`.
pub fn expected_error_lrm_per_query<T: Real>(
    d: &Decomposition<T>,
    params: &PrivacyParams<T>,
) -> Vec<T> {
    let factor = params.unit_variance() * d.l_sensitivity * d.l_sensitivity;
    d.b.row_iter().map(|row| factor * row.norm_squared()).collect()
}

fn eps_sq<T: Real>(params: &PrivacyParams<T>) -> T {
    let b = params.unit_sensitivity / params.epsilon;
    b * b
}

/// Spectral upper bound `rank·Σλ²·Δᵤ²/ε²`, without the Laplace factor 2.
pub fn error_upper_bound<T: Real>(spectrum: &SpectrumSummary<T>, params: &PrivacyParams<T>) -> T {
    let rank = spectrum.rank;
    let sum_sq = spectrum
        .leading()
        .iter()
        .fold(T::zero(), |acc, &l| acc + l * l);
    T::lit(rank as f64) * sum_sq * eps_sq(params)
}

/// Lower bound `((2^ρ/ρ!)·Πλ)^{2/ρ}·ρ³·Δᵤ²/ε²` over all ε-DP mechanisms, up to a
/// constant factor; evaluated in log space.
pub fn error_lower_bound<T: Real>(spectrum: &SpectrumSummary<T>, params: &PrivacyParams<T>) -> T {
    let rho = spectrum.rank;
    if rho == 0 {
        return T::zero();
    }
    let log_fact: f64 = (2..=rho).map(|k| (k as f64).ln()).sum();
    let log_prod: f64 = spectrum.leading().iter().map(|l| l.as_f64().ln()).sum();
    let log_inner = rho as f64 * std::f64::consts::LN_2 - log_fact + log_prod;
    let r = rho as f64;
    let value = (2.0 / r * log_inner).exp() * r * r * r;
    T::lit(value) * eps_sq(params)
}

/// Ratio bound `(C/4)²·ρ` between the spectral upper and lower bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRatio {
    pub value: f64,
    pub rank: usize,
    pub condition_ratio: f64,
    /// The bound is proven only for rank above [`APPROX_RATIO_MIN_RANK`].
    pub in_proven_regime: bool,
}

pub fn approx_ratio_report<T: Real>(spectrum: &SpectrumSummary<T>) -> ApproxRatio {
    let c = spectrum.condition_ratio.as_f64();
    let rank = spectrum.rank;
    ApproxRatio {
        value: (c / 4.0).powi(2) * rank as f64,
        rank,
        condition_ratio: c,
        in_proven_regime: rank > APPROX_RATIO_MIN_RANK,
    }
}

/// Data-dependent bound for a relaxed decomposition:
/// `2·tr(BᵀB)·Δᵤ²/ε² + ‖W − BL‖²_F·Σxᵢ²`.
pub fn relaxed_error_bound<T: Real>(
    d: &Decomposition<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
) -> T {
    params.unit_variance() * d.objective + d.residual * d.residual * data.squared_norm()
}

/// The same bound with the tolerance `γ` in place of the achieved residual.
pub fn relaxed_error_bound_gamma<T: Real>(
    d: &Decomposition<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
) -> T {
    params.unit_variance() * d.objective + d.gamma * d.gamma * data.squared_norm()
}

/// Expected error of a decomposition alongside the spectral bounds of its workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis<T: Real> {
    pub epsilon: T,
    /// `2ΦΔ²Δᵤ²/ε²`.
    pub expected_error: T,
    pub expected_error_per_query: Vec<T>,
    /// `rank·Σλ²·Δᵤ²/ε²`, verbatim (no Laplace factor).
    pub upper_bound: T,
    /// `2·upper_bound`, comparable to `expected_error`.
    pub upper_bound_laplace: T,
    /// Order-of-magnitude only: the hidden constant is taken as 1.
    pub lower_bound_value: T,
    pub approx_ratio: ApproxRatio,
    /// True when the decomposition is inexact and the data term of the relaxed bound applies.
    pub relaxation_penalty: bool,
    pub residual: T,
    pub rank: usize,
    pub r: usize,
}

impl<T: Real> ErrorAnalysis<T> {
    pub fn new(
        workload: &WorkloadMatrix<T>,
        d: &Decomposition<T>,
        params: &PrivacyParams<T>,
    ) -> Self {
        let spectrum = workload.spectrum();
        Self::with_spectrum(&spectrum, d, params)
    }

    pub fn with_spectrum(
        spectrum: &SpectrumSummary<T>,
        d: &Decomposition<T>,
        params: &PrivacyParams<T>,
    ) -> Self {
        let upper_bound = error_upper_bound(spectrum, params);
        ErrorAnalysis {
            epsilon: params.epsilon,
            expected_error: expected_error_lrm(d, params),
            expected_error_per_query: expected_error_lrm_per_query(d, params),
            upper_bound,
            upper_bound_laplace: T::lit(2.0) * upper_bound,
            lower_bound_value: error_lower_bound(spectrum, params),
            approx_ratio: approx_ratio_report(spectrum),
            relaxation_penalty: d.residual > T::zero(),
            residual: d.residual,
            rank: spectrum.rank,
            r: d.r(),
        }
    }
}

/// Exact answers of the decomposition, `B·L·D`.
pub fn structural_answer<T: Real>(d: &Decomposition<T>, data: &DatabaseVector<T>) -> DVector<T> {
    &d.b * (&d.l * data.counts())
}
