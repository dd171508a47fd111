//! Quantum and classical probability states.

use num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{HqrnError, Result};
use crate::linalg::eigen::jacobi;
use crate::linalg::ComplexMatrix;
use crate::scalar::{czero, Real};

/// Unit-trace positive semidefinite Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    matrix: ComplexMatrix<T>,
}

/// Nonnegative real vector summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexVector<T: Real> {
    values: Vec<T>,
}

fn is_diagonal<T: Real>(m: &ComplexMatrix<T>) -> bool {
    let n = m.rows();
    (0..n).all(|r| (0..n).all(|c| r == c || m[(r, c)] == czero()))
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity (1e-12), unit trace (1e-12) and PSD (eigenvalues >= -1e-10).
    pub fn new(matrix: ComplexMatrix<T>) -> Result<Self> {
        let n = matrix.ensure_square()?;
        let dev = matrix.hermitian_deviation();
        if dev > T::tol(1e-12) {
            return Err(HqrnError::InvalidState(format!(
                "not Hermitian (max deviation {dev:e})"
            )));
        }
        let tr = matrix.trace().re;
        if (tr - T::one()).abs() > T::tol(1e-12) {
            return Err(HqrnError::InvalidState(format!("trace {tr} != 1")));
        }
        let min_eig = if is_diagonal(&matrix) {
            (0..n).fold(T::infinity(), |m, i| m.min(matrix[(i, i)].re))
        } else {
            jacobi(&matrix).min_eigenvalue()
        };
        if min_eig < -T::tol(1e-10) {
            return Err(HqrnError::InvalidState(format!(
                "negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix known to be a valid state (closed operations only).
    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix<T>) -> Self {
        Self { matrix }
    }

    /// `diag(p)`.
    pub fn from_probabilities(p: &SimplexVector<T>) -> Self {
        Self {
            matrix: ComplexMatrix::from_diagonal(p.as_slice()),
        }
    }

    /// |ψ⟩⟨ψ| after normalizing ψ.
    pub fn pure(psi: &[Complex<T>]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if norm == T::zero() || !norm.is_finite() {
            return Err(HqrnError::InvalidState("zero or non-finite state vector".into()));
        }
        let v: Vec<Complex<T>> = psi.iter().map(|z| *z / norm).collect();
        let mut m = ComplexMatrix::outer(&v, &v);
        for i in 0..v.len() {
            m[(i, i)].im = T::zero();
        }
        Ok(Self { matrix: m })
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self::from_probabilities(&SimplexVector::uniform(n))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    /// `U ρ U†` for unitary `U` (not re-validated).
    pub fn conjugate(&self, u: &ComplexMatrix<T>) -> Result<Self> {
        if u.rows() != self.dim() || u.cols() != self.dim() {
            return Err(HqrnError::DimensionMismatch {
                expected: self.dim(),
                actual: u.rows(),
            });
        }
        let m = u.matmul(&self.matrix).matmul(&u.adjoint());
        Ok(Self { matrix: m })
    }

    /// Diagonal of `U ρ U†` without forming the product.
    ///
    /// Cost is O(nnz(ρ) · n); zero entries of ρ are skipped, so diagonal
    /// inputs cost O(n²).
    pub fn conjugated_diagonal(&self, u: &ComplexMatrix<T>) -> Vec<T> {
        let n = self.dim();
        assert_eq!(u.rows(), n);
        assert_eq!(u.cols(), n);
        let mut out = vec![T::zero(); n];
        for j in 0..n {
            for k in 0..n {
                let rho_jk = self.matrix[(j, k)];
                if rho_jk == czero() {
                    continue;
                }
                for (row, o) in out.iter_mut().enumerate() {
                    *o = *o + (u[(row, j)] * rho_jk * u[(row, k)].conj()).re;
                }
            }
        }
        out
    }

    /// Probabilities ⟨n|ρ|n⟩ of a computational-basis measurement.
    pub fn measure_z(&self) -> SimplexVector<T> {
        let values = (0..self.dim())
            .map(|i| self.matrix[(i, i)].re.max(T::zero()))
            .collect();
        SimplexVector { values }
    }

    /// `a ρ + (1 - a) σ`, a in [0, 1].
    pub fn mix(&self, a: T, other: &Self) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(HqrnError::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        if !(a >= T::zero() && a <= T::one()) {
            return Err(HqrnError::InvalidParameter(format!(
                "mixing weight {a} outside [0, 1]"
            )));
        }
        let m = &self.matrix.scale(a) + &other.matrix.scale(T::one() - a);
        Ok(Self { matrix: m })
    }

    /// Eigenvalues in ascending order.
    pub fn spectrum(&self) -> Vec<T> {
        jacobi(&self.matrix).eigenvalues
    }
}

impl<T: Real> SimplexVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(HqrnError::InvalidSimplex("empty vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(HqrnError::InvalidSimplex(format!("entry {v} is negative or non-finite")));
        }
        let s: T = values.iter().copied().sum();
        if (s - T::one()).abs() > T::tol(1e-10) {
            return Err(HqrnError::InvalidSimplex(format!("entries sum to {s}")));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![T::one() / T::lit(n as f64); n],
        }
    }

    pub fn basis(n: usize, index: usize) -> Self {
        let mut values = vec![T::zero(); n];
        values[index] = T::one();
        Self { values }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn linf_distance(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

impl<T: Real> Serialize for DensityMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.matrix.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for DensityMatrix<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = ComplexMatrix::deserialize(d)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

impl<T: Real> Serialize for SimplexVector<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for SimplexVector<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<T>::deserialize(d)?;
        SimplexVector::new(v).map_err(serde::de::Error::custom)
    }
}

/// Computational-basis measurement statistics of `rho`.
pub fn measure_z<T: Real>(rho: &DensityMatrix<T>) -> SimplexVector<T> {
    rho.measure_z()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random::{random_density, random_unitary};
    use crate::scalar::cplx;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell() -> DensityMatrix<f64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::pure(&[cplx(h, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(h, 0.0)]).unwrap()
    }

    #[test]
    fn bell_state_statistics() {
        let p = bell().measure_z();
        for (a, b) in p.as_slice().iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn maximally_mixed_statistics() {
        let p = DensityMatrix::<f64>::maximally_mixed(4).measure_z();
        assert_eq!(p.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn rejects_invalid_states() {
        let not_unit = ComplexMatrix::<f64>::from_diagonal(&[0.5, 0.4]);
        assert!(DensityMatrix::new(not_unit).is_err());
        let negative = ComplexMatrix::<f64>::from_diagonal(&[1.5, -0.5]);
        assert!(DensityMatrix::new(negative).is_err());
        let mut not_psd = ComplexMatrix::<f64>::from_diagonal(&[0.5, 0.5]);
        not_psd[(0, 1)] = cplx(0.9, 0.0);
        not_psd[(1, 0)] = cplx(0.9, 0.0);
        assert!(DensityMatrix::new(not_psd).is_err());
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexVector::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn conjugated_diagonal_matches_full_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rho = random_density::<f64, _>(8, &mut rng);
        let u = random_unitary::<f64, _>(8, &mut rng);
        let fast = rho.conjugated_diagonal(&u);
        let full = rho.conjugate(&u).unwrap().measure_z();
        for (a, b) in fast.iter().zip(full.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn unitary_conjugation_preserves_validity(seed in any::<u64>(), n in 1usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_density::<f64, _>(n, &mut rng);
            let u = random_unitary::<f64, _>(n, &mut rng);
            let out = rho.conjugate(&u).unwrap();
            prop_assert!(out.matrix().hermitian_deviation() < 1e-10);
            prop_assert!((out.matrix().trace().re - 1.0).abs() < 1e-10);
            prop_assert!(out.spectrum()[0] > -1e-10);
            let p = out.measure_z();
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(SimplexVector::new(p.into_vec()).is_ok());
        }
    }
}
