//! Haar wavelet mechanism.
//!
//! Counts are zero-padded to a power of two `n` and transformed into one base
//! coefficient (the mean, weight `n`) and one detail coefficient per internal
//! node of the dyadic tree, `(S_left − S_right)/s` for a node covering `s`
//! counts (weight `s`). A unit change of one count moves the weighted
//! coefficients by a total of `1 + log₂ n`, so drawing each coefficient's noise
//! from `Lap((1 + log₂ n)·Δᵤ/(ε·weight))` gives ε-differential privacy.

use nalgebra::DVector;

use super::padded_len;
use crate::error::Result;
use crate::mechanisms::{NoisyAnswer, PrivacyParams};
use crate::rng::{laplace_f64, rng_from_seed, NOISELESS_SCALE};
use crate::scalar::Real;
use crate::workload::{DatabaseVector, WorkloadMatrix};

pub const WM_ID: &str = "WM";

/// Haar decomposition over `n = 2^h` counts.
///
/// Coefficient layout: index 0 holds the base coefficient; node `k ≥ 1` of the
/// implicit heap (children `2k`, `2k + 1`) holds its detail coefficient.
#[derive(Clone, Debug)]
pub struct HaarTransform {
    n: usize,
}

impl HaarTransform {
    pub fn new(n: usize) -> Self {
        HaarTransform { n: padded_len(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn height(&self) -> u32 {
        self.n.trailing_zeros()
    }

    /// Weighted sensitivity `1 + log₂ n`.
    pub fn generalized_sensitivity(&self) -> f64 {
        1.0 + f64::from(self.height())
    }

    /// Number of counts under heap node `k`.
    fn span(&self, k: usize) -> usize {
        let depth = usize::BITS - 1 - k.leading_zeros();
        self.n >> depth
    }

    /// Weight of coefficient `k`.
    pub fn weight(&self, k: usize) -> f64 {
        if k == 0 {
            self.n as f64
        } else {
            self.span(k) as f64
        }
    }

    pub fn forward(&self, counts: &[f64]) -> Vec<f64> {
        let n = self.n;
        // node sums over the heap; leaves at n..2n
        let mut sums = vec![0.0; 2 * n];
        sums[n..n + counts.len()].copy_from_slice(counts);
        for k in (1..n).rev() {
            sums[k] = sums[2 * k] + sums[2 * k + 1];
        }
        let mut coeffs = vec![0.0; n];
        coeffs[0] = sums[1] / n as f64;
        for k in 1..n {
            coeffs[k] = (sums[2 * k] - sums[2 * k + 1]) / self.span(k) as f64;
        }
        coeffs
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut sums = vec![0.0; 2 * n];
        sums[1] = coeffs[0] * n as f64;
        for k in 1..n {
            let s = self.span(k) as f64;
            sums[2 * k] = (sums[k] + s * coeffs[k]) / 2.0;
            sums[2 * k + 1] = (sums[k] - s * coeffs[k]) / 2.0;
        }
        sums[n..].to_vec()
    }
}

/// Noisy counts reconstructed from perturbed Haar coefficients, then `W·D̃`.
pub fn wavelet_answer<T: Real>(
    workload: &WorkloadMatrix<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
    seed: u64,
) -> Result<NoisyAnswer<T>> {
    workload.check_data(data)?;
    let n = workload.n();
    let haar = HaarTransform::new(n);
    let counts: Vec<f64> = data.counts().iter().map(|x| x.as_f64()).collect();
    let mut coeffs = haar.forward(&counts);
    let base_scale = haar.generalized_sensitivity() * params.scale_for(T::one()).as_f64();
    if base_scale >= NOISELESS_SCALE {
        let mut rng = rng_from_seed(seed);
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c += laplace_f64(base_scale / haar.weight(k), &mut rng);
        }
    }
    let noisy = haar.inverse(&coeffs);
    let noisy = DVector::from_iterator(n, noisy.into_iter().take(n).map(T::lit));
    Ok(NoisyAnswer::new(workload.matrix() * noisy, WM_ID, seed))
}
