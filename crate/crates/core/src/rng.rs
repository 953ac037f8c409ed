//! Seeded randomness: generator construction, seed derivation and Laplace draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Generator used for every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

/// Scales below this are treated as the noiseless limit.
pub const NOISELESS_SCALE: f64 = 1e-12;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent substream seed from a master seed and a path of indices.
///
/// Distinct paths of equal length give distinct seeds with overwhelming
/// probability; the mixing is a chained splitmix64.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Draws one sample from the zero-mean Laplace distribution with the given scale.
///
/// Inverse-CDF transform of a single uniform draw on the open interval (0, 1).
pub fn laplace_sample<T: Real, R: Rng + ?Sized>(scale: T, rng: &mut R) -> Result<T> {
    let b = scale.as_f64();
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Parameter(format!(
            "Laplace scale must be positive and finite, got {b}"
        )));
    }
    Ok(T::lit(laplace_f64(b, rng)))
}

pub(crate) fn laplace_f64<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    if u < 0.5 {
        scale * (2.0 * u).ln()
    } else {
        -scale * (2.0 * (1.0 - u)).ln()
    }
}

/// Vector of independent Laplace draws, or zeros in the noiseless limit.
pub(crate) fn laplace_vector<T: Real, R: Rng + ?Sized>(
    len: usize,
    scale: T,
    rng: &mut R,
) -> Result<nalgebra::DVector<T>> {
    let b = scale.as_f64();
    if b < 0.0 || !b.is_finite() {
        return Err(Error::Parameter(format!(
            "Laplace scale must be non-negative and finite, got {b}"
        )));
    }
    if b < NOISELESS_SCALE {
        return Ok(nalgebra::DVector::zeros(len));
    }
    Ok(nalgebra::DVector::from_fn(len, |_, _| {
        T::lit(laplace_f64(b, rng))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for cell in 0..20u64 {
            for trial in 0..50u64 {
                assert!(seen.insert(derive_seed(7, &[cell, trial])));
            }
        }
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[0]), derive_seed(8, &[0]));
    }

    #[test]
    fn rejects_non_positive_scale() {
        let mut rng = rng_from_seed(1);
        assert!(laplace_sample(0.0_f64, &mut rng).is_err());
        assert!(laplace_sample(-1.0_f64, &mut rng).is_err());
        assert!(laplace_sample(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn laplace_moments() {
        let mut rng = rng_from_seed(42);
        let scale = 2.5_f64;
        let n = 1_000_000;
        let mut xs: Vec<f64> = (0..n)
            .map(|_| laplace_sample(scale, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01 * scale, "mean {mean}");
        let expected_var = 2.0 * scale * scale;
        assert!((var / expected_var - 1.0).abs() < 0.02, "var {var}");

        // median of |X| for Laplace(b): P(|X| <= t) = 1 - exp(-t/b) = 1/2
        for x in xs.iter_mut() {
            *x = x.abs();
        }
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = xs[n / 2];
        let expected = scale * std::f64::consts::LN_2;
        assert!((median / expected - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn noiseless_limit_gives_zeros() {
        let mut rng = rng_from_seed(3);
        let v = laplace_vector(5, 1e-13_f64, &mut rng).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }
}
