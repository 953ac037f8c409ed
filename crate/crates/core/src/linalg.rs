//! Dense factorizations with verified output.
//!
//! nalgebra's bidiagonal SVD occasionally returns factors that do not
//! reconstruct the input (e.g. constant matrices). Results are checked and,
//! on failure, recomputed with one-sided Jacobi rotations.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// Thin SVD `a = u · diag(sigma) · v_t`, unordered.
pub(crate) struct ThinSvd<T: Real> {
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    pub v_t: DMatrix<T>,
}

fn tolerance<T: Real>(m: usize, n: usize) -> T {
    T::lit(64.0) * T::unit_roundoff() * T::lit(m.max(n) as f64)
}

fn orthonormal_columns<T: Real>(q: &DMatrix<T>, tol: T) -> bool {
    let k = q.ncols();
    let gram = q.transpose() * q;
    (gram - DMatrix::identity(k, k)).amax() <= tol
}

fn accept<T: Real>(a: &DMatrix<T>, svd: &ThinSvd<T>) -> bool {
    let tol = tolerance::<T>(a.nrows(), a.ncols());
    if svd.u.iter().chain(svd.v_t.iter()).chain(svd.sigma.iter()).any(|x| !x.is_finite_value()) {
        return false;
    }
    let scale = a.norm().max(T::lit(f64::MIN_POSITIVE));
    let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.sigma) * &svd.v_t;
    (rebuilt - a).norm() <= tol * scale
        && orthonormal_columns(&svd.u, tol)
        && orthonormal_columns(&svd.v_t.transpose(), tol)
}

pub(crate) fn thin_svd<T: Real>(a: &DMatrix<T>) -> ThinSvd<T> {
    if let Some(svd) = a.clone().try_svd(true, true, T::unit_roundoff(), 0) {
        let candidate = ThinSvd {
            u: svd.u.expect("left vectors requested"),
            sigma: svd.singular_values,
            v_t: svd.v_t.expect("right vectors requested"),
        };
        if accept(a, &candidate) {
            return candidate;
        }
    }
    log::debug!("falling back to Jacobi SVD for {}x{}", a.nrows(), a.ncols());
    jacobi_svd(a)
}

/// One-sided Jacobi SVD on the taller orientation.
pub(crate) fn jacobi_svd<T: Real>(a: &DMatrix<T>) -> ThinSvd<T> {
    if a.nrows() < a.ncols() {
        let t = jacobi_svd(&a.transpose());
        return ThinSvd {
            u: t.v_t.transpose(),
            sigma: t.sigma,
            v_t: t.u.transpose(),
        };
    }
    let (m, n) = (a.nrows(), a.ncols());
    let mut work = a.clone();
    let mut v = DMatrix::<T>::identity(n, n);
    let eps = T::unit_roundoff();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = work.column(p).norm_squared();
                let beta = work.column(q).norm_squared();
                let gamma = work.column(p).dot(&work.column(q));
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (work[(i, p)], work[(i, q)]);
                    work[(i, p)] = c * x - s * y;
                    work[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma = DVector::zeros(n);
    let mut u = DMatrix::zeros(m, n);
    for j in 0..n {
        let norm = work.column(j).norm();
        sigma[j] = norm;
        if norm > T::zero() {
            u.set_column(j, &(work.column(j) / norm));
        }
    }
    complete_orthonormal(&mut u, &sigma);
    ThinSvd {
        u,
        sigma,
        v_t: v.transpose(),
    }
}

/// Replaces columns of `u` belonging to zero singular values with an orthonormal completion.
fn complete_orthonormal<T: Real>(u: &mut DMatrix<T>, sigma: &DVector<T>) {
    let m = u.nrows();
    let mut candidate = 0;
    for j in 0..u.ncols() {
        if sigma[j] > T::zero() {
            continue;
        }
        while candidate < m {
            let mut e = DVector::<T>::zeros(m);
            e[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for k in 0..u.ncols() {
                    if k == j || (sigma[k] == T::zero() && k > j) {
                        continue;
                    }
                    let proj = u.column(k).dot(&e);
                    e -= u.column(k) * proj;
                }
            }
            let norm = e.norm();
            if norm > T::lit(0.5) {
                u.set_column(j, &(e / norm));
                break;
            }
        }
    }
}

/// Symmetric eigendecomposition `a = Σ λ v vᵀ` with verified output.
pub(crate) fn symmetric_eigen<T: Real>(a: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = a.nrows();
    let sym = (a + a.transpose()) * T::lit(0.5);
    if let Some(eig) = sym.clone().try_symmetric_eigen(T::unit_roundoff(), 0) {
        let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues) * eig.eigenvectors.transpose();
        let tol = tolerance::<T>(n, n);
        let scale = sym.norm().max(T::lit(f64::MIN_POSITIVE));
        if (rebuilt - &sym).norm() <= tol * scale && orthonormal_columns(&eig.eigenvectors, tol) {
            return (eig.eigenvalues, eig.eigenvectors);
        }
    }
    log::debug!("falling back to Jacobi eigendecomposition for {n}x{n}");
    // for symmetric input the SVD gives |λ|; signs are recovered from vᵀ a v
    let svd = jacobi_svd(&sym);
    let vectors = svd.v_t.transpose();
    let values = DVector::from_fn(n, |k, _| {
        let col = vectors.column(k);
        (&sym * col).dot(&col)
    });
    (values, vectors)
}
