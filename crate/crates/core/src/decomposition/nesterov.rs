//! Accelerated projected gradient for the `L`-subproblem
//!
//! ```text
//! G(L) = β/2 · tr(LᵀBᵀBL) − tr((βW + π)ᵀBL)   s.t. every column of L has L1 norm ≤ 1
//! ```

use nalgebra::DMatrix;

use super::projection::project_columns_l1_in_place;
use crate::scalar::Real;

/// Largest number of step doublings tried in one backtracking search.
const MAX_BACKTRACK: usize = 64;

/// Momentum and step-size state of the accelerated solver.
#[derive(Clone, Debug)]
pub struct NesterovState<T: Real> {
    /// Current Lipschitz estimate ω (inverse step size).
    pub omega: T,
    /// δ⁽ᵗ⁻²⁾.
    pub delta_prev: T,
    /// δ⁽ᵗ⁻¹⁾.
    pub delta: T,
    /// Stop once `‖S − L⁽ᵗ⁾‖_F < χ`.
    pub chi: T,
    /// Iterations performed by the last solve.
    pub t: usize,
}

impl<T: Real> NesterovState<T> {
    /// Fresh state for an `r × n` unknown: ω = 1 and χ = r·n·10⁻¹².
    pub fn new(r: usize, n: usize) -> Self {
        NesterovState {
            omega: T::one(),
            delta_prev: T::zero(),
            delta: T::one(),
            chi: T::lit(r as f64 * n as f64 * 1e-12),
            t: 0,
        }
    }

    fn restart_momentum(&mut self) {
        self.delta_prev = T::zero();
        self.delta = T::one();
        self.t = 0;
    }
}

/// Result of one call to [`solve_l`].
#[derive(Clone, Debug)]
pub struct LSolve<T: Real> {
    pub l: DMatrix<T>,
    pub iterations: usize,
    /// False when the iteration cap was hit before the stopping test.
    pub converged: bool,
}

/// Quadratic model of the `L`-subproblem: `G(L) = ½⟨L, H·L⟩ − ⟨C, L⟩`
/// with `H = β·BᵀB` and `C = Bᵀ(βW + π)`.
pub(crate) struct LSubproblem<T: Real> {
    h: DMatrix<T>,
    c: DMatrix<T>,
}

impl<T: Real> LSubproblem<T> {
    pub(crate) fn new(b: &DMatrix<T>, w: &DMatrix<T>, pi: &DMatrix<T>, beta: T) -> Self {
        let bt = b.transpose();
        let h = (&bt * b) * beta;
        let c = &bt * (w * beta + pi);
        LSubproblem { h, c }
    }

    pub(crate) fn value(&self, l: &DMatrix<T>) -> T {
        T::lit(0.5) * l.dot(&(&self.h * l)) - self.c.dot(l)
    }

    pub(crate) fn gradient(&self, l: &DMatrix<T>) -> DMatrix<T> {
        &self.h * l - &self.c
    }
}

/// `G(L)` for the given multiplier and penalty.
pub fn g_value<T: Real>(
    l: &DMatrix<T>,
    b: &DMatrix<T>,
    w: &DMatrix<T>,
    pi: &DMatrix<T>,
    beta: T,
) -> T {
    LSubproblem::new(b, w, pi, beta).value(l)
}

/// `∂G/∂L = βBᵀBL − βBᵀW − Bᵀπ`.
pub fn grad_g<T: Real>(
    l: &DMatrix<T>,
    b: &DMatrix<T>,
    w: &DMatrix<T>,
    pi: &DMatrix<T>,
    beta: T,
) -> DMatrix<T> {
    let bt = b.transpose();
    (&bt * b * l) * beta - (&bt * w) * beta - &bt * pi
}

/// Minimizes `G` over column-wise unit L1 balls starting from the feasible `l0`.
///
/// Momentum extrapolation `S = L⁽ᵗ⁾ + α(L⁽ᵗ⁾ − L⁽ᵗ⁻¹⁾)` with
/// `α = (δ⁽ᵗ⁻²⁾ − 1)/δ⁽ᵗ⁻¹⁾`, except `α = 0` on the first step. The step
/// `1/ω` is found by doubling ω until the projected point satisfies the
/// quadratic upper-bound test. Each accepted point becomes the new iterate.
pub fn solve_l<T: Real>(
    b: &DMatrix<T>,
    w: &DMatrix<T>,
    pi: &DMatrix<T>,
    beta: T,
    l0: &DMatrix<T>,
    state: &mut NesterovState<T>,
    max_iter: usize,
) -> LSolve<T> {
    let problem = LSubproblem::new(b, w, pi, beta);
    solve_subproblem(&problem, l0, state, max_iter)
}

pub(crate) fn solve_subproblem<T: Real>(
    problem: &LSubproblem<T>,
    l0: &DMatrix<T>,
    state: &mut NesterovState<T>,
    max_iter: usize,
) -> LSolve<T> {
    state.restart_momentum();
    let two = T::lit(2.0);
    let four = T::lit(4.0);

    let mut l_prev = l0.clone();
    let mut l_cur = l0.clone();

    for t in 1..=max_iter.max(1) {
        state.t = t;
        let alpha = if t == 1 {
            T::zero()
        } else {
            (state.delta_prev - T::one()) / state.delta
        };
        let s = if alpha == T::zero() {
            l_cur.clone()
        } else {
            &l_cur + (&l_cur - &l_prev) * alpha
        };
        let grad = problem.gradient(&s);

        let mut omega = state.omega;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let mut candidate = &s - &grad / omega;
            project_columns_l1_in_place(&mut candidate);
            let diff = &candidate - &s;
            let dist = diff.norm();
            if dist < state.chi {
                state.omega = omega;
                return LSolve {
                    l: candidate,
                    iterations: t,
                    converged: true,
                };
            }
            // G is quadratic, so G(c) − G(s) − ⟨∇G(s), c − s⟩ = ½⟨D, H·D⟩ exactly;
            // testing that form avoids cancellation between large G values
            let curvature = diff.dot(&(&problem.h * &diff));
            if curvature <= omega * dist * dist {
                accepted = Some(candidate);
                break;
            }
            omega *= two;
        }
        state.omega = omega;
        // Backtracking exhausted only when the curvature is not representable;
        // keep the last feasible iterate.
        let Some(next) = accepted else {
            return LSolve {
                l: l_cur,
                iterations: t,
                converged: false,
            };
        };
        l_prev = std::mem::replace(&mut l_cur, next);

        let next_delta = (T::one() + (T::one() + four * state.delta * state.delta).sqrt()) / two;
        state.delta_prev = state.delta;
        state.delta = next_delta;
    }
    LSolve {
        l: l_cur,
        iterations: max_iter.max(1),
        converged: false,
    }
}
