//! Laplace baselines: noise on the unit counts and noise on the query results.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::rng::{laplace_vector, rng_from_seed};
use crate::scalar::Real;
use crate::workload::{DatabaseVector, WorkloadMatrix};

pub use crate::rng::laplace_sample;

/// Privacy budget and per-record sensitivity of the unit counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyParams<T: Real> {
    pub epsilon: T,
    /// L1 change of the unit-count vector between neighbor databases.
    pub unit_sensitivity: T,
}

impl<T: Real> PrivacyParams<T> {
    /// Counting-query setting: a neighbor changes one unit count by one.
    pub fn new(epsilon: T) -> Result<Self> {
        Self::with_unit_sensitivity(epsilon, T::one())
    }

    pub fn with_unit_sensitivity(epsilon: T, unit_sensitivity: T) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(unit_sensitivity > T::zero()) || !unit_sensitivity.is_finite_value() {
            return Err(Error::Parameter(format!(
                "unit sensitivity must be positive, got {unit_sensitivity}"
            )));
        }
        Ok(PrivacyParams {
            epsilon,
            unit_sensitivity,
        })
    }

    /// Laplace scale for a query batch of the given L1 sensitivity.
    pub fn scale_for(&self, sensitivity: T) -> T {
        sensitivity * self.unit_sensitivity / self.epsilon
    }

    /// `2Δ²/ε²`, the variance of one Laplace draw calibrated to unit sensitivity.
    pub fn unit_variance(&self) -> T {
        let b = self.unit_sensitivity / self.epsilon;
        T::lit(2.0) * b * b
    }
}

/// Randomized answers to a query batch.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyAnswer<T: Real> {
    pub values: DVector<T>,
    pub mechanism_id: String,
    pub seed: u64,
}

impl<T: Real> NoisyAnswer<T> {
    pub fn new(values: DVector<T>, mechanism_id: impl Into<String>, seed: u64) -> Self {
        NoisyAnswer {
            values,
            mechanism_id: mechanism_id.into(),
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `‖answer − exact‖₂²`.
    pub fn squared_error(&self, exact: &DVector<T>) -> T {
        (&self.values - exact).norm_squared()
    }

    /// One CSV record: `mechanism_id,seed,v1,...,vm`.
    pub fn to_csv_row(&self) -> String {
        let mut row = format!("{},{}", self.mechanism_id, self.seed);
        for v in self.values.iter() {
            row.push(',');
            row.push_str(&v.to_string());
        }
        row
    }
}

pub const NOD_ID: &str = "NOD";
pub const NOR_ID: &str = "NOR";

/// `W·(D + η)` with `η ~ Lap(Δ/ε)ⁿ`.
pub fn noise_on_data<T: Real>(
    workload: &WorkloadMatrix<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
    seed: u64,
) -> Result<NoisyAnswer<T>> {
    workload.check_data(data)?;
    let mut rng = rng_from_seed(seed);
    let eta = laplace_vector(workload.n(), params.scale_for(T::one()), &mut rng)?;
    let values = workload.matrix() * (data.counts() + eta);
    Ok(NoisyAnswer::new(values, NOD_ID, seed))
}

/// `W·D + η` with `η ~ Lap(Δ'/ε)ᵐ`, `Δ' = sensitivity(W)·Δ`.
pub fn noise_on_results<T: Real>(
    workload: &WorkloadMatrix<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
    seed: u64,
) -> Result<NoisyAnswer<T>> {
    let exact = workload.answer(data)?;
    let mut rng = rng_from_seed(seed);
    let eta = laplace_vector(
        workload.m(),
        params.scale_for(workload.sensitivity()),
        &mut rng,
    )?;
    Ok(NoisyAnswer::new(exact + eta, NOR_ID, seed))
}

/// Expected squared error of each answer under noise on data: `(2Δ²/ε²)·Σⱼ Wᵢⱼ²`.
pub fn expected_error_nod_per_query<T: Real>(
    workload: &WorkloadMatrix<T>,
    params: &PrivacyParams<T>,
) -> Vec<T> {
    let v = params.unit_variance();
    workload
        .matrix()
        .row_iter()
        .map(|r| v * r.norm_squared())
        .collect()
}

/// Total expected squared error of noise on data: `(2Δ²/ε²)·Σᵢⱼ Wᵢⱼ²`.
pub fn expected_error_nod<T: Real>(workload: &WorkloadMatrix<T>, params: &PrivacyParams<T>) -> T {
    params.unit_variance() * workload.matrix().norm_squared()
}

/// Total expected squared error of noise on results: `2m·(sensitivity(W)·Δ)²/ε²`.
pub fn expected_error_nor<T: Real>(workload: &WorkloadMatrix<T>, params: &PrivacyParams<T>) -> T {
    let s = workload.sensitivity();
    T::lit(workload.m() as f64) * params.unit_variance() * s * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intro_a() -> WorkloadMatrix<f64> {
        WorkloadMatrix::from_rows(&[
            vec![1.0, 1.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap()
    }

    fn intro_b() -> WorkloadMatrix<f64> {
        WorkloadMatrix::from_rows(&[
            vec![0.0, 2.0, 1.0, 1.0],
            vec![0.0, 1.0, 0.0, 2.0],
            vec![1.0, 0.0, 2.0, 2.0],
        ])
        .unwrap()
    }

    fn data4() -> DatabaseVector<f64> {
        DatabaseVector::new(vec![82.7, 19.0, 67.0, 5.9]).unwrap()
    }

    /// Per-answer empirical mean squared error over `trials` seeds.
    fn empirical<F>(w: &WorkloadMatrix<f64>, trials: u64, answer: F) -> (Vec<f64>, Vec<f64>)
    where
        F: Fn(u64) -> NoisyAnswer<f64>,
    {
        let exact = w.answer(&data4()).unwrap();
        let m = w.m();
        let mut sq = vec![0.0; m];
        let mut mean = vec![0.0; m];
        for t in 0..trials {
            let a = answer(t);
            for i in 0..m {
                let d = a.values[i] - exact[i];
                sq[i] += d * d;
                mean[i] += a.values[i];
            }
        }
        let k = trials as f64;
        (
            sq.into_iter().map(|x| x / k).collect(),
            mean.into_iter().map(|x| x / k).collect(),
        )
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0).is_err());
        assert!(PrivacyParams::new(-1.0).is_err());
        assert!(PrivacyParams::with_unit_sensitivity(1.0, 0.0).is_err());
        assert!(PrivacyParams::new(0.5).is_ok());
    }

    #[test]
    fn intro_nod_formula() {
        let p = PrivacyParams::new(0.5).unwrap();
        let e2 = 0.25;
        assert_relative_eq!(expected_error_nod(&intro_b(), &p), 40.0 / e2, max_relative = 1e-12);
        let per = expected_error_nod_per_query(&intro_b(), &p);
        for (got, want) in per.iter().zip([12.0, 10.0, 18.0]) {
            assert_relative_eq!(*got, want / e2, max_relative = 1e-12);
        }
    }

    #[test]
    fn nor_formula() {
        let p = PrivacyParams::new(1.0).unwrap();
        assert_relative_eq!(expected_error_nor(&intro_a(), &p), 24.0, max_relative = 1e-12);
        let pair = WorkloadMatrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]])
            .unwrap();
        assert_relative_eq!(expected_error_nor(&pair, &p), 4.0, max_relative = 1e-12);
        let zero = WorkloadMatrix::new(nalgebra::DMatrix::<f64>::zeros(3, 4)).unwrap();
        assert_eq!(expected_error_nor(&zero, &p), 0.0);
        assert_eq!(expected_error_nod(&zero, &p), 0.0);
        let id = WorkloadMatrix::<f64>::identity(5).unwrap();
        let p = PrivacyParams::with_unit_sensitivity(0.5, 2.0).unwrap();
        assert_relative_eq!(expected_error_nod(&id, &p), 2.0 * 5.0 * 4.0 / 0.25, max_relative = 1e-12);
    }

    #[test]
    fn nor_can_lose_to_nod_when_m_is_large() {
        // m >= n: m·maxⱼΣᵢWᵢⱼ² >= ΣᵢⱼWᵢⱼ², so the NOR formula is never below NOD's for 0/1 rows
        let w = WorkloadMatrix::<f64>::identity(4).unwrap();
        let p = PrivacyParams::new(1.0).unwrap();
        assert!(expected_error_nor(&w, &p) >= expected_error_nod(&w, &p));
        let wide = WorkloadMatrix::from_rows(&[vec![1.0; 16]]).unwrap();
        assert!(expected_error_nor(&wide, &p) < expected_error_nod(&wide, &p));
    }

    #[test]
    fn noiseless_limit_is_exact() {
        let p = PrivacyParams::new(1e15).unwrap();
        let exact = intro_b().answer(&data4()).unwrap();
        let a = noise_on_data(&intro_b(), &data4(), &p, 9).unwrap();
        assert_eq!(a.values, exact);
        let a = noise_on_results(&intro_b(), &data4(), &p, 9).unwrap();
        assert_eq!(a.values, exact);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let p = PrivacyParams::new(1.0).unwrap();
        let d = DatabaseVector::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(noise_on_data(&intro_b(), &d, &p, 0), Err(Error::Input(_))));
        assert!(matches!(noise_on_results(&intro_b(), &d, &p, 0), Err(Error::Input(_))));
    }

    #[test]
    fn nod_empirical_variances_match_intro() {
        let w = intro_b();
        let p = PrivacyParams::new(1.0).unwrap();
        let (sq, mean) = empirical(&w, 200_000, |s| noise_on_data(&w, &data4(), &p, s).unwrap());
        for (got, want) in sq.iter().zip([12.0, 10.0, 18.0]) {
            assert!((got / want - 1.0).abs() < 0.03, "{got} vs {want}");
        }
        let total: f64 = sq.iter().sum();
        assert!((total / expected_error_nod(&w, &p) - 1.0).abs() < 0.02);
        let exact = w.answer(&data4()).unwrap();
        for i in 0..3 {
            assert!((mean[i] - exact[i]).abs() < 0.05, "bias {}", mean[i] - exact[i]);
        }
    }

    #[test]
    fn nor_empirical_variances_match_intro() {
        let w = intro_a();
        let p = PrivacyParams::new(1.0).unwrap();
        let (sq, mean) =
            empirical(&w, 200_000, |s| noise_on_results(&w, &data4(), &p, s).unwrap());
        for got in &sq {
            assert!((got / 8.0 - 1.0).abs() < 0.03, "{got}");
        }
        let total: f64 = sq.iter().sum();
        assert!((total / expected_error_nor(&w, &p) - 1.0).abs() < 0.02);
        let exact = w.answer(&data4()).unwrap();
        for i in 0..3 {
            assert!((mean[i] - exact[i]).abs() < 0.05);
        }
    }

    #[test]
    fn zero_row_answer_varies_around_zero() {
        let w = WorkloadMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(w.sensitivity(), 1.0);
        let d = DatabaseVector::new(vec![3.0, 4.0]).unwrap();
        let p = PrivacyParams::new(1.0).unwrap();
        let mean: f64 = (0..20_000)
            .map(|s| noise_on_results(&w, &d, &p, s).unwrap().values[1])
            .sum::<f64>()
            / 20_000.0;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn csv_row_layout() {
        let a = NoisyAnswer::new(DVector::from_vec(vec![1.5, -2.0]), "NOD", 17);
        assert_eq!(a.to_csv_row(), "NOD,17,1.5,-2");
    }
}
