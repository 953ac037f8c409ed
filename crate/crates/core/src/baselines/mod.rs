//! Comparison mechanisms: the matrix mechanism with an optimized strategy,
//! and simplified wavelet and hierarchical mechanisms.
//!
//! The wavelet and hierarchical mechanisms are compact reimplementations
//! (branching factor 2, budget split evenly over tree levels) meant to
//! reproduce relative orderings, not the tuned variants of their original
//! publications.

pub mod hierarchical;
pub mod matrix_mechanism;
pub mod wavelet;

pub use hierarchical::{hierarchical_answer, HierarchicalPlan, HM_ID};
pub use matrix_mechanism::{
    mm_answer, mm_objective_grad, mm_solve_strategy, smoothed_max, smoothed_max_grad, MmConfig,
    StrategyMatrix, MM_ID,
};
pub use wavelet::{wavelet_answer, HaarTransform, WM_ID};

/// Smallest power of two at least `n`.
pub(crate) fn padded_len(n: usize) -> usize {
    n.max(1).next_power_of_two()
}
