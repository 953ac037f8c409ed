//! Workload matrices, their spectra, synthetic workload generators and
//! count-vector ingestion.
//!
//! A workload is an `m × n` matrix whose row `i` holds the coefficients of
//! linear query `q_i` over the `n` unit counts of the database.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Real;

/// Relative threshold below which a singular value does not count toward rank.
pub const RANK_RELATIVE_THRESHOLD: f64 = 1e-10;

/// Rank threshold relative to the largest singular value.
///
/// For `f64` this is [`RANK_RELATIVE_THRESHOLD`]; for `f32` the roundoff floor
/// of an SVD of this size dominates and is used instead.
pub fn rank_tolerance<T: Real>(max_dim: usize) -> T {
    let floor = T::unit_roundoff() * T::lit(4.0 * max_dim.max(1) as f64);
    T::lit(RANK_RELATIVE_THRESHOLD).max(floor)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadMatrix<T: Real> {
    matrix: DMatrix<T>,
    name: Option<String>,
}

impl<T: Real> WorkloadMatrix<T> {
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Input(format!(
                "workload must be at least 1x1, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if let Some(bad) = matrix.iter().position(|x| !x.is_finite_value()) {
            let (i, j) = (bad % matrix.nrows(), bad / matrix.nrows());
            return Err(Error::Input(format!(
                "workload entry ({i}, {j}) is not finite"
            )));
        }
        Ok(WorkloadMatrix { matrix, name: None })
    }

    /// Builds an `m × n` workload from entries in row-major order.
    pub fn from_row_slice(m: usize, n: usize, entries: &[T]) -> Result<Self> {
        if entries.len() != m * n {
            return Err(Error::Input(format!(
                "expected {} entries for a {m}x{n} workload, got {}",
                m * n,
                entries.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(m, n, entries))
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input("workload rows have unequal lengths".into()));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(m, n, &flat)
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Number of queries.
    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    /// Domain size.
    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn frobenius_norm(&self) -> T {
        self.matrix.norm()
    }

    /// L1 sensitivity of the query batch: the largest column absolute sum.
    pub fn sensitivity(&self) -> T {
        max_column_l1(&self.matrix)
    }

    /// Multiplies by `alpha`.
    pub fn scaled(&self, alpha: T) -> Result<Self> {
        Self::new(&self.matrix * alpha)
    }

    /// Exact query answers `W·D`.
    pub fn answer(&self, data: &DatabaseVector<T>) -> Result<DVector<T>> {
        self.check_data(data)?;
        Ok(&self.matrix * data.counts())
    }

    pub(crate) fn check_data(&self, data: &DatabaseVector<T>) -> Result<()> {
        if data.len() != self.n() {
            return Err(Error::Input(format!(
                "database has {} unit counts but the workload has {} columns",
                data.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Thin SVD `W = U·diag(Σ)·V` with `s = min(m, n)` and Σ non-increasing.
    pub fn svd(&self) -> Svd<T> {
        let (m, n) = (self.m(), self.n());
        let decomposed = crate::linalg::thin_svd(&self.matrix);
        let (u, v_t, sigma) = (decomposed.u, decomposed.v_t, decomposed.sigma);

        let s = sigma.len();
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| {
            sigma[b]
                .partial_cmp(&sigma[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut u_sorted = DMatrix::zeros(m, s);
        let mut v_sorted = DMatrix::zeros(s, n);
        let mut values = Vec::with_capacity(s);
        for (k, &idx) in order.iter().enumerate() {
            u_sorted.set_column(k, &u.column(idx));
            v_sorted.set_row(k, &v_t.row(idx));
            values.push(sigma[idx].max(T::zero()));
        }
        let spectrum = SpectrumSummary::with_tolerance(values, rank_tolerance::<T>(m.max(n)));
        Svd {
            u: u_sorted,
            v_t: v_sorted,
            spectrum,
        }
    }

    pub fn spectrum(&self) -> SpectrumSummary<T> {
        self.svd().spectrum
    }

    pub fn rank(&self) -> usize {
        self.spectrum().rank
    }
}

pub(crate) fn max_column_l1<T: Real>(matrix: &DMatrix<T>) -> T {
    matrix
        .column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, x| acc + x.abs()))
        .fold(T::zero(), |acc, x| acc.max(x))
}

/// Thin singular value decomposition of a workload.
#[derive(Clone, Debug)]
pub struct Svd<T: Real> {
    /// `m × s`, orthonormal columns.
    pub u: DMatrix<T>,
    /// `s × n`, orthonormal rows.
    pub v_t: DMatrix<T>,
    pub spectrum: SpectrumSummary<T>,
}

impl<T: Real> Svd<T> {
    pub fn singular_values(&self) -> &[T] {
        &self.spectrum.singular_values
    }

    pub fn reconstruct(&self) -> DMatrix<T> {
        let sigma = DVector::from_column_slice(&self.spectrum.singular_values);
        let mut us = self.u.clone();
        for (k, mut col) in us.column_iter_mut().enumerate() {
            col *= sigma[k];
        }
        us * &self.v_t
    }
}

/// Singular values with their numerical rank and condition ratio.
///
/// Singular values of `W` play the role the literature sometimes calls the
/// "eigenvalues" of the workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary<T: Real> {
    /// Non-increasing, non-negative.
    pub singular_values: Vec<T>,
    pub rank: usize,
    /// `λ₁ / λ_rank`; `1` for a zero spectrum.
    pub condition_ratio: T,
}

impl<T: Real> SpectrumSummary<T> {
    /// Builds a summary from arbitrary singular values using the default rank threshold.
    pub fn from_singular_values(values: impl IntoIterator<Item = T>) -> Result<Self> {
        let values: Vec<T> = values.into_iter().collect();
        if values.iter().any(|v| !v.is_finite_value() || *v < T::zero()) {
            return Err(Error::Input(
                "singular values must be finite and non-negative".into(),
            ));
        }
        let tol = rank_tolerance::<T>(values.len());
        Ok(Self::with_tolerance(values, tol))
    }

    fn with_tolerance(mut values: Vec<T>, relative_tol: T) -> Self {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        let top = values.first().copied().unwrap_or_else(T::zero);
        let rank = if top > T::zero() {
            let cutoff = top * relative_tol;
            values.iter().take_while(|&&v| v > cutoff).count()
        } else {
            0
        };
        let condition_ratio = if rank >= 1 {
            top / values[rank - 1]
        } else {
            T::one()
        };
        SpectrumSummary {
            singular_values: values,
            rank,
            condition_ratio,
        }
    }

    /// Count of singular values above `relative · λ₁`.
    pub fn rank_at(&self, relative: T) -> usize {
        let top = match self.singular_values.first() {
            Some(&t) if t > T::zero() => t,
            _ => return 0,
        };
        self.singular_values
            .iter()
            .take_while(|&&v| v > top * relative)
            .count()
    }

    /// The singular values counted toward the rank.
    pub fn leading(&self) -> &[T] {
        &self.singular_values[..self.rank]
    }
}

/// The `n` unit counts of a database.
#[derive(Clone, Debug, PartialEq)]
pub struct DatabaseVector<T: Real> {
    counts: DVector<T>,
}

impl<T: Real> DatabaseVector<T> {
    pub fn new(counts: Vec<T>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(counts))
    }

    pub fn from_vector(counts: DVector<T>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Input("database vector is empty".into()));
        }
        if let Some(i) = counts.iter().position(|x| !x.is_finite_value()) {
            return Err(Error::Input(format!("unit count {i} is not finite")));
        }
        Ok(DatabaseVector { counts })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_vector(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &DVector<T> {
        &self.counts
    }

    pub fn sum(&self) -> T {
        self.counts.sum()
    }

    /// `Σ xᵢ²`.
    pub fn squared_norm(&self) -> T {
        self.counts.norm_squared()
    }

    /// Zero-pads to length `n` (no-op when already that long).
    pub fn padded(&self, n: usize) -> Self {
        if n <= self.len() {
            return self.clone();
        }
        let mut v = DVector::zeros(n);
        v.rows_mut(0, self.len()).copy_from(&self.counts);
        DatabaseVector { counts: v }
    }
}

/// Merges consecutive raw counts into `n` groups and sums each group.
///
/// Group sizes differ by at most one; the `len % n` larger groups come first.
pub fn coarsen<T: Real>(raw: &[T], n: usize) -> Result<DatabaseVector<T>> {
    if n == 0 {
        return Err(Error::Input("target domain size must be positive".into()));
    }
    if raw.len() < n {
        return Err(Error::Input(format!(
            "cannot coarsen {} counts into {n} groups",
            raw.len()
        )));
    }
    let base = raw.len() / n;
    let extra = raw.len() % n;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for g in 0..n {
        let size = base + usize::from(g < extra);
        let sum = raw[start..start + size]
            .iter()
            .fold(T::zero(), |acc, &x| acc + x);
        out.push(sum);
        start += size;
    }
    DatabaseVector::new(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WorkloadKind {
    /// Dense ±1 entries, `+1` with probability `p`.
    WDiscrete,
    /// Random contiguous range queries.
    WRange,
    /// Product of two Gaussian factors through `s` base queries.
    WRelated,
}

impl std::fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WorkloadKind::WDiscrete => "WDiscrete",
            WorkloadKind::WRange => "WRange",
            WorkloadKind::WRelated => "WRelated",
        })
    }
}

impl std::str::FromStr for WorkloadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wdiscrete" | "discrete" => Ok(WorkloadKind::WDiscrete),
            "wrange" | "range" => Ok(WorkloadKind::WRange),
            "wrelated" | "related" => Ok(WorkloadKind::WRelated),
            other => Err(Error::Config(format!("unknown workload kind `{other}`"))),
        }
    }
}

pub const DEFAULT_FLIP_PROBABILITY: f64 = 0.02;

/// Parameters of a synthetic workload. Also the JSON sidecar written next to
/// a serialized workload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub m: usize,
    pub n: usize,
    /// Probability of a `+1` entry (WDiscrete only).
    #[serde(default = "default_p")]
    pub p: f64,
    /// Number of base queries (WRelated only).
    #[serde(default)]
    pub s: Option<usize>,
    pub seed: u64,
}

fn default_p() -> f64 {
    DEFAULT_FLIP_PROBABILITY
}

impl WorkloadSpec {
    pub fn new(kind: WorkloadKind, m: usize, n: usize, seed: u64) -> Self {
        WorkloadSpec {
            kind,
            m,
            n,
            p: DEFAULT_FLIP_PROBABILITY,
            s: None,
            seed,
        }
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_s(mut self, s: usize) -> Self {
        self.s = Some(s);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config(format!(
                "workload dimensions must be positive, got {}x{}",
                self.m, self.n
            )));
        }
        match self.kind {
            WorkloadKind::WDiscrete => {
                if !(self.p > 0.0 && self.p < 1.0) {
                    return Err(Error::Config(format!(
                        "flip probability must lie in (0, 1), got {}",
                        self.p
                    )));
                }
            }
            WorkloadKind::WRange => {}
            WorkloadKind::WRelated => {
                let s = self.s.ok_or_else(|| {
                    Error::Config("WRelated needs the base-query count s".into())
                })?;
                if s == 0 || s > self.m.min(self.n) {
                    return Err(Error::Config(format!(
                        "base-query count s = {s} must lie in [1, {}]",
                        self.m.min(self.n)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn generate<T: Real>(&self) -> Result<WorkloadMatrix<T>> {
        match self.kind {
            WorkloadKind::WDiscrete => gen_wdiscrete(self),
            WorkloadKind::WRange => gen_wrange(self),
            WorkloadKind::WRelated => gen_wrelated(self),
        }
    }
}

fn expect_kind(spec: &WorkloadSpec, kind: WorkloadKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "generator for {kind} called with a {} spec",
            spec.kind
        )));
    }
    spec.validate()
}

pub fn gen_wdiscrete<T: Real>(spec: &WorkloadSpec) -> Result<WorkloadMatrix<T>> {
    expect_kind(spec, WorkloadKind::WDiscrete)?;
    let mut rng = rng_from_seed(spec.seed);
    let entries: Vec<T> = (0..spec.m * spec.n)
        .map(|_| {
            if rng.random_bool(spec.p) {
                T::one()
            } else {
                -T::one()
            }
        })
        .collect();
    Ok(WorkloadMatrix::from_row_slice(spec.m, spec.n, &entries)?.with_name("WDiscrete"))
}

pub fn gen_wrange<T: Real>(spec: &WorkloadSpec) -> Result<WorkloadMatrix<T>> {
    expect_kind(spec, WorkloadKind::WRange)?;
    let mut rng = rng_from_seed(spec.seed);
    let mut w = DMatrix::zeros(spec.m, spec.n);
    for i in 0..spec.m {
        let a = rng.random_range(0..spec.n);
        let b = rng.random_range(a..spec.n);
        for j in a..=b {
            w[(i, j)] = T::one();
        }
    }
    Ok(WorkloadMatrix::new(w)?.with_name("WRange"))
}

pub fn gen_wrelated<T: Real>(spec: &WorkloadSpec) -> Result<WorkloadMatrix<T>> {
    expect_kind(spec, WorkloadKind::WRelated)?;
    let s = spec.s.expect("validated");
    let mut rng = rng_from_seed(spec.seed);
    let mut normal = || T::lit(rng.sample::<f64, _>(StandardNormal));
    let base = DMatrix::from_row_slice(s, spec.n, &(0..s * spec.n).map(|_| normal()).collect::<Vec<_>>());
    let correlation =
        DMatrix::from_row_slice(spec.m, s, &(0..spec.m * s).map(|_| normal()).collect::<Vec<_>>());
    Ok(WorkloadMatrix::new(correlation * base)?.with_name("WRelated"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

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

    /// Rank by Gaussian elimination with partial pivoting, independent of the SVD.
    fn rank_by_elimination(w: &DMatrix<f64>, rel_tol: f64) -> usize {
        let mut a = w.clone();
        let (m, n) = a.shape();
        let scale = a.amax().max(1e-300);
        let mut rank = 0;
        for col in 0..n {
            if rank == m {
                break;
            }
            let (pivot, val) = (rank..m)
                .map(|i| (i, a[(i, col)].abs()))
                .fold((rank, 0.0), |best, c| if c.1 > best.1 { c } else { best });
            if val <= rel_tol * scale {
                continue;
            }
            a.swap_rows(rank, pivot);
            for i in rank + 1..m {
                let f = a[(i, col)] / a[(rank, col)];
                for j in col..n {
                    let v = a[(rank, j)];
                    a[(i, j)] -= f * v;
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn sensitivity_of_intro_examples() {
        assert_eq!(intro_a().sensitivity(), 2.0);
        assert_eq!(intro_b().sensitivity(), 5.0);
        assert_eq!(WorkloadMatrix::<f64>::identity(7).unwrap().sensitivity(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(WorkloadMatrix::<f64>::from_rows(&[vec![1.0, f64::NAN]]).is_err());
        assert!(WorkloadMatrix::<f64>::from_rows(&[]).is_err());
        assert!(WorkloadMatrix::<f64>::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn svd_identity_and_outer_product() {
        let svd = WorkloadMatrix::<f64>::identity(3).unwrap().svd();
        assert_eq!(svd.spectrum.rank, 3);
        for &v in svd.singular_values() {
            assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        }

        let a = DVector::from_vec(vec![0.6, 0.8, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0]);
        let w = WorkloadMatrix::new(&a * b.transpose()).unwrap();
        let svd = w.svd();
        assert_eq!(svd.spectrum.rank, 1);
        assert_relative_eq!(svd.singular_values()[0], 1.0, epsilon = 1e-12);
        assert!(svd.singular_values()[1..].iter().all(|&v| v < 1e-14));
        assert_relative_eq!(svd.spectrum.condition_ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_rank_of_wrelated_matches_elimination() {
        for seed in 0..5 {
            let spec = WorkloadSpec::new(WorkloadKind::WRelated, 20, 30, seed).with_s(4);
            let w: WorkloadMatrix<f64> = spec.generate().unwrap();
            let svd = w.svd();
            let oracle = rank_by_elimination(w.matrix(), 1e-9);
            assert_eq!(oracle, 4);
            assert_eq!(svd.spectrum.rank, oracle);
        }
    }

    #[test]
    fn full_s_wrelated_has_full_rank() {
        for seed in 0..5 {
            let spec = WorkloadSpec::new(WorkloadKind::WRelated, 12, 18, seed).with_s(12);
            let w: WorkloadMatrix<f64> = spec.generate().unwrap();
            assert_eq!(w.rank(), 12);
            assert_eq!(rank_by_elimination(w.matrix(), 1e-9), 12);
        }
    }

    #[test]
    fn svd_orthonormality_and_reconstruction() {
        let spec = WorkloadSpec::new(WorkloadKind::WRange, 9, 14, 5);
        let w: WorkloadMatrix<f64> = spec.generate().unwrap();
        let svd = w.svd();
        let s = svd.singular_values().len();
        let utu = svd.u.transpose() * &svd.u;
        let vvt = &svd.v_t * svd.v_t.transpose();
        assert!((utu - DMatrix::identity(s, s)).amax() < 1e-8);
        assert!((vvt - DMatrix::identity(s, s)).amax() < 1e-8);
        assert!((svd.reconstruct() - w.matrix()).norm() <= 1e-8 * w.frobenius_norm());
        assert!(svd.singular_values().windows(2).all(|p| p[0] >= p[1]));
    }

    #[test]
    fn svd_works_in_single_precision() {
        let w = WorkloadMatrix::<f32>::from_rows(&[
            vec![0.0, 2.0, 1.0, 1.0],
            vec![0.0, 1.0, 0.0, 2.0],
            vec![1.0, 0.0, 2.0, 2.0],
        ])
        .unwrap();
        let svd = w.svd();
        assert_eq!(svd.spectrum.rank, 3);
        assert!((svd.reconstruct() - w.matrix()).norm() <= 1e-5 * w.frobenius_norm());
    }

    #[test]
    fn spectrum_summary_from_values() {
        let s = SpectrumSummary::from_singular_values([1.0, 2.0, 0.0]).unwrap();
        assert_eq!(s.singular_values, vec![2.0, 1.0, 0.0]);
        assert_eq!(s.rank, 2);
        assert_eq!(s.condition_ratio, 2.0);
        let z = SpectrumSummary::<f64>::from_singular_values([0.0, 0.0]).unwrap();
        assert_eq!(z.rank, 0);
        assert!(SpectrumSummary::from_singular_values([-1.0]).is_err());
    }

    #[test]
    fn wdiscrete_entries_and_density() {
        let spec = WorkloadSpec::new(WorkloadKind::WDiscrete, 256, 1024, 11);
        let w: WorkloadMatrix<f64> = spec.generate().unwrap();
        assert!(w.matrix().iter().all(|&x| x == 1.0 || x == -1.0));
        // 262144 Bernoulli(0.02) draws: sd of the fraction is ~2.7e-4, so the
        // band [0.015, 0.025] is more than 18 standard deviations wide.
        let ones = w.matrix().iter().filter(|&&x| x == 1.0).count() as f64;
        let frac = ones / (256.0 * 1024.0);
        assert!((0.015..=0.025).contains(&frac), "fraction {frac}");
        let again: WorkloadMatrix<f64> = spec.generate().unwrap();
        assert_eq!(w, again);
    }

    #[test]
    fn wdiscrete_rejects_bad_p() {
        for p in [0.0, 1.0, -0.1, 1.5] {
            let spec = WorkloadSpec::new(WorkloadKind::WDiscrete, 4, 4, 1).with_p(p);
            assert!(matches!(gen_wdiscrete::<f64>(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn wrange_rows_are_contiguous_blocks() {
        let spec = WorkloadSpec::new(WorkloadKind::WRange, 50, 40, 3);
        let w: WorkloadMatrix<f64> = spec.generate().unwrap();
        for row in w.matrix().row_iter() {
            let ones: Vec<usize> = (0..40).filter(|&j| row[j] == 1.0).collect();
            assert!(!ones.is_empty());
            assert_eq!(ones.last().unwrap() - ones[0] + 1, ones.len());
            assert!(row.iter().all(|&x| x == 0.0 || x == 1.0));
        }
        assert_eq!(w, spec.generate::<f64>().unwrap());
    }

    #[test]
    fn wrelated_rejects_bad_s() {
        let base = WorkloadSpec::new(WorkloadKind::WRelated, 5, 8, 1);
        assert!(gen_wrelated::<f64>(&base).is_err());
        assert!(gen_wrelated::<f64>(&base.clone().with_s(0)).is_err());
        assert!(gen_wrelated::<f64>(&base.clone().with_s(6)).is_err());
        assert!(gen_wrelated::<f64>(&base.with_s(5)).is_ok());
    }

    #[test]
    fn generator_kind_mismatch_is_config_error() {
        let spec = WorkloadSpec::new(WorkloadKind::WRange, 5, 8, 1);
        assert!(matches!(gen_wdiscrete::<f64>(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn coarsen_examples() {
        let d = coarsen(&[1.0, 2.0, 3.0, 4.0], 2).unwrap();
        assert_eq!(d.counts().as_slice(), &[3.0, 7.0]);
        let raw = [5.0, 1.0, 2.0];
        assert_eq!(coarsen(&raw, 3).unwrap().counts().as_slice(), &raw);
        // 7 into 3: sizes 3, 2, 2
        let d = coarsen(&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 3).unwrap();
        assert_eq!(d.counts().as_slice(), &[3.0, 2.0, 2.0]);
        assert!(coarsen(&[1.0, 2.0], 3).is_err());
    }

    proptest! {
        #[test]
        fn sensitivity_is_absolutely_homogeneous(
            entries in proptest::collection::vec(-5.0f64..5.0, 12),
            alpha in -10.0f64..10.0,
        ) {
            let w = WorkloadMatrix::from_row_slice(3, 4, &entries).unwrap();
            let lhs = w.scaled(alpha).unwrap().sensitivity();
            let rhs = alpha.abs() * w.sensitivity();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn coarsen_preserves_total(
            raw in proptest::collection::vec(0.0f64..1000.0, 1..200),
            frac in 0.0f64..1.0,
        ) {
            let n = 1 + ((raw.len() - 1) as f64 * frac) as usize;
            let d = coarsen(&raw, n).unwrap();
            prop_assert_eq!(d.len(), n);
            let total: f64 = raw.iter().sum();
            prop_assert!((d.sum() - total).abs() <= 1e-9 * (1.0 + total));
        }

        #[test]
        fn generated_workloads_reconstruct_and_respect_rank(
            seed in any::<u64>(),
            kind in 0usize..3,
            m in 2usize..16,
            n in 2usize..16,
            s_frac in 0.0f64..1.0,
        ) {
            let kind = [WorkloadKind::WDiscrete, WorkloadKind::WRange, WorkloadKind::WRelated][kind];
            let s = 1 + ((m.min(n) - 1) as f64 * s_frac) as usize;
            let spec = WorkloadSpec::new(kind, m, n, seed).with_s(s);
            let w: WorkloadMatrix<f64> = spec.generate().unwrap();
            let svd = w.svd();
            prop_assert!((svd.reconstruct() - w.matrix()).norm() <= 1e-8 * w.frobenius_norm().max(1e-300));
            if kind == WorkloadKind::WRelated {
                prop_assert!(svd.spectrum.rank_at(1e-8) <= s);
            }
        }
    }
}
