//! Euclidean projection of matrix columns onto the unit L1 ball.

use nalgebra::{DMatrix, DVectorViewMut};

use crate::scalar::Real;

/// Slack on the "already inside" test so that projecting a projected column
/// is the identity (its L1 norm is 1 up to summation roundoff).
fn inside_slack<T: Real>(len: usize) -> T {
    T::unit_roundoff() * T::lit(4.0 * (len.max(1) as f64))
}

/// Projects `column` in place onto `{x : ‖x‖₁ ≤ 1}`.
///
/// Sort-based exact method: the projection soft-thresholds every entry by the
/// θ ≥ 0 that brings the L1 norm down to exactly one.
pub fn project_l1_ball_in_place<T: Real>(column: &mut DVectorViewMut<'_, T>) {
    let l1 = column.iter().fold(T::zero(), |acc, x| acc + x.abs());
    if l1 <= T::one() + inside_slack::<T>(column.len()) {
        return;
    }
    let mut mags: Vec<T> = column.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));

    let mut prefix = T::zero();
    let mut theta = T::zero();
    for (j, &u) in mags.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - T::one()) / T::lit((j + 1) as f64);
        if u > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in column.iter_mut() {
        let shrunk = (x.abs() - theta).max(T::zero());
        *x = if *x < T::zero() { -shrunk } else { shrunk };
    }
}

/// Projects every column of `l` onto the unit L1 ball.
pub fn project_columns_l1<T: Real>(l: &DMatrix<T>) -> DMatrix<T> {
    let mut out = l.clone();
    project_columns_l1_in_place(&mut out);
    out
}

pub fn project_columns_l1_in_place<T: Real>(l: &mut DMatrix<T>) {
    for mut col in l.column_iter_mut() {
        let mut view = col.as_view_mut();
        project_l1_ball_in_place(&mut view);
    }
}
