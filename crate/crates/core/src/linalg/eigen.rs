//! Cyclic Jacobi eigensolver for complex Hermitian matrices.
//!
//! Each rotation first removes the phase of the pivot entry with a diagonal
//! unitary and then applies a real Givens rotation, so the update stays in
//! the Hermitian cone and eigenvectors are accumulated as a unitary product.
//! Intended for the small dense problems in this crate (dimension <= 128).

use num_complex::Complex;

use crate::error::Result;
use crate::linalg::ComplexMatrix;
use crate::scalar::Real;

const MAX_SWEEPS: usize = 64;

/// Eigen-decomposition `m = V diag(λ) V†` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T: Real> {
    pub eigenvalues: Vec<T>,
    /// Eigenvectors stored as columns.
    pub eigenvectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    /// Rebuilds `V diag(f(λ)) V†`.
    pub fn map_spectrum(&self, f: impl Fn(T) -> Complex<T>) -> ComplexMatrix<T> {
        let v = &self.eigenvectors;
        let n = v.rows();
        let vals: Vec<Complex<T>> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = ComplexMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex::new(T::zero(), T::zero());
                for (k, &val) in vals.iter().enumerate() {
                    acc = acc + v[(r, k)] * val * v[(c, k)].conj();
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        self.map_spectrum(|l| Complex::new(l, T::zero()))
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> T {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }
}

/// Diagonalizes a Hermitian matrix.
///
/// Fails with [`crate::HqrnError::NotHermitian`] when the input deviates
/// from Hermitian by more than 1e-10 (relative to its largest entry).
pub fn eig_hermitian<T: Real>(m: &ComplexMatrix<T>) -> Result<HermitianEigen<T>> {
    let scale = T::one().max(m.max_abs());
    m.ensure_hermitian(T::tol(1e-10) * scale)?;
    Ok(jacobi(m))
}

/// Jacobi iteration on the Hermitian part of `m`; no precondition check.
pub(crate) fn jacobi<T: Real>(m: &ComplexMatrix<T>) -> HermitianEigen<T> {
    let n = m.rows();
    let half = T::lit(0.5);
    let mut a = ComplexMatrix::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * half);
    for i in 0..n {
        a[(i, i)].im = T::zero();
    }
    let mut v = ComplexMatrix::<T>::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        let mut total = T::zero();
        for r in 0..n {
            for c in 0..n {
                let s = a[(r, c)].norm_sqr();
                total = total + s;
                if r != c {
                    off = off + s;
                }
            }
        }
        if off <= eps * eps * total * T::lit(1e-4) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q, eps);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).expect("finite"));
    let eigenvalues = order.iter().map(|&i| a[(i, i)].re).collect();
    let eigenvectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    HermitianEigen {
        eigenvalues,
        eigenvectors,
    }
}

fn rotate<T: Real>(a: &mut ComplexMatrix<T>, v: &mut ComplexMatrix<T>, p: usize, q: usize, eps: T) {
    let n = a.rows();
    let apq = a[(p, q)];
    let abs = apq.norm();
    if abs == T::zero() {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    if abs <= eps * T::lit(1e-3) * (app.abs() * aqq.abs()).sqrt() {
        a[(p, q)] = Complex::new(T::zero(), T::zero());
        a[(q, p)] = Complex::new(T::zero(), T::zero());
        return;
    }
    let phase = apq / abs;
    let tau = (aqq - app) / (T::lit(2.0) * abs);
    let t = if tau == T::zero() {
        T::one()
    } else {
        tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;
    // J = [[c, s], [-s e^{-iθ}, c e^{-iθ}]] on the (p, q) plane.
    let ph_conj = phase.conj();
    let jqp = ph_conj * (-s);
    let jqq = ph_conj * c;

    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c + akq * jqp;
        a[(k, q)] = akp * s + akq * jqq;
    }
    let jqp_c = jqp.conj();
    let jqq_c = jqq.conj();
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c + aqk * jqp_c;
        a[(q, k)] = apk * s + aqk * jqq_c;
    }
    a[(p, q)] = Complex::new(T::zero(), T::zero());
    a[(q, p)] = Complex::new(T::zero(), T::zero());
    a[(p, p)].im = T::zero();
    a[(q, q)].im = T::zero();

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c + vkq * jqp;
        v[(k, q)] = vkp * s + vkq * jqq;
    }
}
