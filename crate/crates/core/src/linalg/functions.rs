//! Matrix functions built on the Hermitian eigensolver.

use num_complex::Complex;

use crate::error::{HqrnError, Result};
use crate::linalg::eigen::{eig_hermitian, jacobi};
use crate::linalg::ComplexMatrix;
use crate::scalar::Real;

/// Angle used to fold the two Hermitian parts of a unitary into one matrix.
const FOLD_ANGLE: f64 = 0.4142135623730951;
/// Relative gap below which eigenvalues of the folded matrix are treated as a cluster.
const CLUSTER_GAP: f64 = 1e-5;

/// Principal square root of a positive semidefinite matrix.
///
/// Eigenvalues in [-1e-9, 0) are clamped to zero; anything more negative is
/// rejected.
pub fn matrix_sqrt_psd<T: Real>(m: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let e = eig_hermitian(m)?;
    let min = e.min_eigenvalue();
    if min < -T::tol(1e-9) {
        return Err(HqrnError::NegativeEigenvalue {
            value: min.as_f64(),
        });
    }
    Ok(e.map_spectrum(|l| Complex::new(l.max(T::zero()).sqrt(), T::zero())))
}

/// `exp(i H)` for Hermitian `H`.
pub fn exp_i_hermitian<T: Real>(h: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let e = eig_hermitian(h)?;
    Ok(e.map_spectrum(|l| Complex::new(l.cos(), l.sin())))
}

/// Hermitian generator `H` with `u = exp(i H)` and eigenphases in (-π, π].
///
/// `u` is diagonalized through the Hermitian matrix
/// `cos(a) (u + u†)/2 + sin(a) (u - u†)/(2i)`, whose eigenvalues are
/// `cos(θ - a)` for eigenphases θ. Clusters of equal `cos(θ - a)` are split a
/// second time with the real part `(u + u†)/2`.
pub fn matrix_log_unitary<T: Real>(u: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let n = u.ensure_unitary(T::tol(1e-9))?;
    let (ca, sa) = (T::lit(FOLD_ANGLE.cos()), T::lit(FOLD_ANGLE.sin()));
    let half = T::lit(0.5);
    let folded = ComplexMatrix::from_fn(n, n, |r, c| {
        let x = u[(r, c)];
        let y = u[(c, r)].conj();
        let re_part = (x + y) * half;
        // (x - y) / (2i) = -i (x - y) / 2
        let im_part = (x - y) * Complex::new(T::zero(), -half);
        re_part * ca + im_part * sa
    });
    let e = jacobi(&folded);
    let mut v = e.eigenvectors.clone();

    let real_part = ComplexMatrix::from_fn(n, n, |r, c| (u[(r, c)] + u[(c, r)].conj()) * half);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && e.eigenvalues[end] - e.eigenvalues[end - 1] < T::lit(CLUSTER_GAP) {
            end += 1;
        }
        if end - start > 1 {
            refine_cluster(&mut v, &real_part, start, end);
        }
        start = end;
    }

    let pi = T::PI();
    let phases: Vec<T> = (0..n)
        .map(|k| {
            let col = v.column(k);
            let uv = u.matvec(&col);
            let z = col
                .iter()
                .zip(&uv)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
            let mut theta = z.arg();
            if theta <= -pi + T::tol(1e-12) {
                theta = theta + T::lit(2.0) * pi;
            }
            theta
        })
        .collect();

    let mut h = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (k, &th) in phases.iter().enumerate() {
                acc = acc + v[(r, k)] * th * v[(c, k)].conj();
            }
            h[(r, c)] = acc;
        }
    }
    for r in 0..n {
        h[(r, r)].im = T::zero();
        for c in (r + 1)..n {
            let avg = (h[(r, c)] + h[(c, r)].conj()) * half;
            h[(r, c)] = avg;
            h[(c, r)] = avg.conj();
        }
    }
    Ok(h)
}

/// Re-diagonalizes `op` inside the span of columns `start..end` of `v`.
fn refine_cluster<T: Real>(v: &mut ComplexMatrix<T>, op: &ComplexMatrix<T>, start: usize, end: usize) {
    let n = v.rows();
    let k = end - start;
    let basis = v.submatrix(0, start, n, k);
    let restricted = basis.adjoint().matmul(op).matmul(&basis);
    let inner = jacobi(&restricted);
    let rotated = basis.matmul(&inner.eigenvectors);
    for r in 0..n {
        for c in 0..k {
            v[(r, start + c)] = rotated[(r, c)];
        }
    }
}

/// Singular value decomposition `m = V diag(σ) W†` of a square matrix.
///
/// `W` and `σ²` come from the eigen-decomposition of `m† m`; the columns of
/// `V` are `m w_k / σ_k`, completed and re-orthonormalized where `σ_k` is tiny.
/// Singular values are returned in descending order.
pub fn svd_square<T: Real>(m: &ComplexMatrix<T>) -> Result<(ComplexMatrix<T>, Vec<T>, ComplexMatrix<T>)> {
    let n = m.ensure_square()?;
    let e = jacobi(&m.adjoint().matmul(m));
    let order: Vec<usize> = (0..n).rev().collect();
    let w = ComplexMatrix::from_fn(n, n, |r, c| e.eigenvectors[(r, order[c])]);
    let sigma: Vec<T> = order.iter().map(|&k| e.eigenvalues[k].max(T::zero()).sqrt()).collect();
    let scale = sigma.first().copied().unwrap_or(T::zero());
    let floor = T::epsilon().sqrt() * scale.max(T::min_positive_value());

    let mut cols: Vec<Vec<Complex<T>>> = Vec::with_capacity(n);
    for k in 0..n {
        let v = if sigma[k] > floor {
            let mw = m.matvec(&w.column(k));
            orthogonalize(mw.into_iter().map(|z| z / sigma[k]).collect(), &cols)
        } else {
            // complete the basis with the standard vector that is least covered
            (0..n)
                .map(|j| {
                    let mut e = vec![Complex::new(T::zero(), T::zero()); n];
                    e[j] = Complex::new(T::one(), T::zero());
                    orthogonalize(e, &cols)
                })
                .max_by(|a, b| vec_norm(a).partial_cmp(&vec_norm(b)).expect("finite"))
                .expect("n > 0")
        };
        let norm = vec_norm(&v);
        cols.push(v.into_iter().map(|z| z / norm).collect());
    }
    let v = ComplexMatrix::from_fn(n, n, |r, c| cols[c][r]);
    Ok((v, sigma, w))
}

fn vec_norm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
}

/// Two passes of Gram-Schmidt against orthonormal `basis`.
fn orthogonalize<T: Real>(mut v: Vec<Complex<T>>, basis: &[Vec<Complex<T>>]) -> Vec<Complex<T>> {
    for _pass in 0..2 {
        for q in basis {
            let proj = q
                .iter()
                .zip(&v)
                .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
            for (x, p) in v.iter_mut().zip(q) {
                *x = *x - *p * proj;
            }
        }
    }
    v
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &ComplexMatrix<T>) -> T {
    let gram = m.adjoint().matmul(m);
    jacobi(&gram).max_eigenvalue().max(T::zero()).sqrt()
}

/// Scales singular values above one back to one: `m V diag(min(1, 1/σ)) V†`.
pub fn clamp_singular_values<T: Real>(m: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    let gram = m.adjoint().matmul(m);
    let e = jacobi(&gram);
    if e.max_eigenvalue() <= T::one() {
        return m.clone();
    }
    let shrink = e.map_spectrum(|s2| {
        let s = s2.max(T::zero()).sqrt();
        let f = if s > T::one() { T::one() / s } else { T::one() };
        Complex::new(f, T::zero())
    });
    m.matmul(&shrink)
}
