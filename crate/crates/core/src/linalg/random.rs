//! Random matrix ensembles used by tests, data generators and initializers.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{ComplexMatrix, DensityMatrix};
use crate::scalar::{czero, Real};

pub fn gaussian_complex<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::lit(re), T::lit(im))
}

pub fn gaussian_matrix<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian_complex(rng))
}

/// Haar-random pure state of dimension `n`.
pub fn haar_state<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Complex<T>> {
    let v: Vec<Complex<T>> = (0..n).map(|_| gaussian_complex(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Haar-random unitary via modified Gram-Schmidt on a Ginibre matrix.
pub fn random_unitary<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix<T> {
    let g = gaussian_matrix::<T, R>(n, n, rng);
    let mut cols: Vec<Vec<Complex<T>>> = (0..n).map(|c| g.column(c)).collect();
    for j in 0..n {
        for _pass in 0..2 {
            for k in 0..j {
                let (done, rest) = cols.split_at_mut(j);
                let qk = &done[k];
                let proj = qk
                    .iter()
                    .zip(rest[0].iter())
                    .fold(czero::<T>(), |acc, (a, b)| acc + a.conj() * b);
                for (x, q) in rest[0].iter_mut().zip(qk) {
                    *x = *x - *q * proj;
                }
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        for x in cols[j].iter_mut() {
            *x = *x / norm;
        }
    }
    ComplexMatrix::from_fn(n, n, |r, c| cols[c][r])
}

pub fn random_hermitian<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix<T> {
    let g = gaussian_matrix::<T, R>(n, n, rng);
    let half = T::lit(0.5);
    ComplexMatrix::from_fn(n, n, |r, c| (g[(r, c)] + g[(c, r)].conj()) * half)
}

/// `B B†` for a Ginibre `B`.
pub fn random_psd<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> ComplexMatrix<T> {
    let b = gaussian_matrix::<T, R>(n, n, rng);
    b.matmul(&b.adjoint())
}

/// Random full-rank mixed state (Hilbert-Schmidt measure).
pub fn random_density<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> DensityMatrix<T> {
    let p = random_psd::<T, R>(n, rng);
    let tr = p.trace().re;
    let m = p.scale(T::one() / tr);
    let half = T::lit(0.5);
    let m = ComplexMatrix::from_fn(n, n, |r, c| (m[(r, c)] + m[(c, r)].conj()) * half);
    DensityMatrix::from_matrix_unchecked(m)
}

/// Random probability vector drawn uniformly from the simplex.
pub fn random_simplex<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    let w: Vec<f64> = (0..n)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| T::lit(x / s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1, 2, 4, 16, 64] {
            let u = random_unitary::<f64, _>(n, &mut rng);
            assert!(u.unitary_deviation() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn simplex_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_simplex::<f64, _>(7, &mut rng);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(v.iter().all(|&x| x >= 0.0));
    }
}
