//! Hierarchical mechanism over a binary aggregation tree.
//!
//! Counts are zero-padded to `n = 2^h`; every node of the `h + 1` level tree
//! releases its subtree sum with `Lap((h + 1)·Δᵤ/ε)` noise (one record touches
//! one node per level). A query row is split into maximal runs of equal
//! weight, and each run is answered from the canonical dyadic cover of its
//! index range.

use nalgebra::DVector;

use super::padded_len;
use crate::error::Result;
use crate::mechanisms::{NoisyAnswer, PrivacyParams};
use crate::rng::{laplace_f64, rng_from_seed, NOISELESS_SCALE};
use crate::scalar::Real;
use crate::workload::{DatabaseVector, WorkloadMatrix};

pub const HM_ID: &str = "HM";

/// Heap node ids covering `[lo, hi)` of an `n`-leaf tree, `O(log n)` of them.
pub fn dyadic_cover(n: usize, lo: usize, hi: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut l, mut r) = (lo + n, hi + n);
    while l < r {
        if l & 1 == 1 {
            out.push(l);
            l += 1;
        }
        if r & 1 == 1 {
            r -= 1;
            out.push(r);
        }
        l >>= 1;
        r >>= 1;
    }
    out
}

/// Per-row linear combinations of tree nodes reproducing a workload.
#[derive(Clone, Debug)]
pub struct HierarchicalPlan {
    n: usize,
    levels: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl HierarchicalPlan {
    pub fn new<T: Real>(workload: &WorkloadMatrix<T>) -> Self {
        let n = padded_len(workload.n());
        let levels = n.trailing_zeros() as usize + 1;
        let rows = workload
            .matrix()
            .row_iter()
            .map(|row| {
                let mut terms = Vec::new();
                let width = row.len();
                let mut start = 0;
                while start < width {
                    let weight = row[start];
                    let mut end = start + 1;
                    while end < width && row[end] == weight {
                        end += 1;
                    }
                    if weight != T::zero() {
                        let w = weight.as_f64();
                        terms.extend(dyadic_cover(n, start, end).into_iter().map(|node| (node, w)));
                    }
                    start = end;
                }
                terms
            })
            .collect();
        HierarchicalPlan { n, levels, rows }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Laplace scale of every node: `(h + 1)·Δᵤ/ε`.
    pub fn node_scale<T: Real>(&self, params: &PrivacyParams<T>) -> f64 {
        self.levels as f64 * params.scale_for(T::one()).as_f64()
    }

    /// Expected squared error of each answer: `2·b²·Σ (coefficient)²` over its cover.
    pub fn expected_error_per_query<T: Real>(&self, params: &PrivacyParams<T>) -> Vec<f64> {
        let b = self.node_scale(params);
        self.rows
            .iter()
            .map(|terms| 2.0 * b * b * terms.iter().map(|(_, w)| w * w).sum::<f64>())
            .collect()
    }

    pub fn answer<T: Real>(
        &self,
        data: &DatabaseVector<T>,
        params: &PrivacyParams<T>,
        seed: u64,
    ) -> NoisyAnswer<T> {
        let n = self.n;
        let mut nodes = vec![0.0; 2 * n];
        for (i, x) in data.counts().iter().enumerate() {
            nodes[n + i] = x.as_f64();
        }
        for k in (1..n).rev() {
            nodes[k] = nodes[2 * k] + nodes[2 * k + 1];
        }
        let scale = self.node_scale(params);
        if scale >= NOISELESS_SCALE {
            let mut rng = rng_from_seed(seed);
            for v in nodes.iter_mut().skip(1) {
                *v += laplace_f64(scale, &mut rng);
            }
        }
        let values = DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|terms| T::lit(terms.iter().map(|&(k, w)| w * nodes[k]).sum())),
        );
        NoisyAnswer::new(values, HM_ID, seed)
    }
}

pub fn hierarchical_answer<T: Real>(
    workload: &WorkloadMatrix<T>,
    data: &DatabaseVector<T>,
    params: &PrivacyParams<T>,
    seed: u64,
) -> Result<NoisyAnswer<T>> {
    workload.check_data(data)?;
    Ok(HierarchicalPlan::new(workload).answer(data, params, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::expected_error_nod_per_query;
    use nalgebra::DMatrix;

    #[test]
    fn dyadic_cover_is_exact_partition() {
        let n = 16;
        for lo in 0..n {
            for hi in lo + 1..=n {
                let cover = dyadic_cover(n, lo, hi);
                let mut hit = vec![0; n];
                for node in &cover {
                    let depth = usize::BITS - 1 - node.leading_zeros();
                    let span = n >> depth;
                    let first = (node - (1 << depth)) * span;
                    for c in &mut hit[first..first + span] {
                        *c += 1;
                    }
                }
                for (i, c) in hit.iter().enumerate() {
                    assert_eq!(*c, usize::from(i >= lo && i < hi), "[{lo},{hi}) index {i}");
                }
                assert!(cover.len() <= 2 * 4);
            }
        }
        assert_eq!(dyadic_cover(8, 0, 8), vec![1]);
    }

    #[test]
    fn noiseless_limit_is_exact() {
        let w = WorkloadMatrix::new(DMatrix::from_row_slice(
            3,
            5,
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 2.0, -1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 3.0],
        ))
        .unwrap();
        let d = DatabaseVector::new(vec![2.0, 7.0, 1.0, 8.0, 2.0]).unwrap();
        let p = PrivacyParams::new(1e15).unwrap();
        let ans = hierarchical_answer(&w, &d, &p, 5).unwrap();
        assert!((ans.values - w.answer(&d).unwrap()).amax() < 1e-9);
    }

    #[test]
    fn unbiased() {
        let w = WorkloadMatrix::new(DMatrix::from_fn(3, 8, |i, j| if j >= i && j < i + 4 { 1.0 } else { 0.0 })).unwrap();
        let d = DatabaseVector::new(vec![1.0, 3.0, 0.0, 2.0, 2.0, 5.0, 0.0, 1.0]).unwrap();
        let p = PrivacyParams::new(1.0).unwrap();
        let plan = HierarchicalPlan::new(&w);
        let trials = 50_000;
        let mut mean = DVector::zeros(3);
        for t in 0..trials {
            mean += plan.answer(&d, &p, t).values;
        }
        mean /= trials as f64;
        assert!((mean - w.answer(&d).unwrap()).amax() < 0.2);
    }

    #[test]
    fn full_range_variance_beats_noise_on_data() {
        let n = 1024;
        let w = WorkloadMatrix::new(DMatrix::from_element(1, n, 1.0)).unwrap();
        let p = PrivacyParams::new(1.0).unwrap();
        let plan = HierarchicalPlan::new(&w);
        let hm = plan.expected_error_per_query(&p)[0];
        // the whole domain is the root alone: 2·(h + 1)² with h = 10
        assert!((hm - 2.0 * 11.0 * 11.0).abs() < 1e-9);
        let nod = expected_error_nod_per_query(&w, &p)[0];
        assert!((nod - 2.0 * n as f64).abs() < 1e-9);
        assert!(hm < nod);
        let d = DatabaseVector::zeros(n).unwrap();
        let trials = 100_000u64;
        let emp: f64 = (0..trials).map(|t| plan.answer(&d, &p, t).values[0].powi(2)).sum::<f64>() / trials as f64;
        assert!((emp / hm - 1.0).abs() < 0.03);
    }
}
