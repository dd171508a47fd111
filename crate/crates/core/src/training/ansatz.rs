//! Fifteen-angle two-qubit unitary in KAK form.
//!
//! `U = (A₁⊗A₂) exp(i(θx XX + θy YY + θz ZZ)) (B₁⊗B₂)` with each single-qubit
//! factor `Rz(a) Ry(b) Rz(c)`. The angle vector is laid out as
//! `[B₁(3), B₂(3), θx, θy, θz, A₁(3), A₂(3)]`.

use num_complex::Complex;

use crate::error::{HqrnError, Result};
use crate::linalg::kron;
use crate::ComplexMatrix;

pub const ANSATZ_PARAMS: usize = 15;

type C = Complex<f64>;

/// `Rz(a) Ry(b) Rz(c)`.
pub fn single_qubit_rotation(a: f64, b: f64, c: f64) -> ComplexMatrix {
    let (sb, cb) = (b / 2.0).sin_cos();
    let e = |t: f64| C::from_polar(1.0, t / 2.0);
    // Rz(t) = diag(e^{-it/2}, e^{it/2})
    let data = vec![
        e(-a - c) * cb,
        -e(-a + c) * sb,
        e(a - c) * sb,
        e(a + c) * cb,
    ];
    ComplexMatrix::new(2, 2, data).expect("2x2 buffer")
}

/// `exp(i(θx XX + θy YY + θz ZZ))`; the three terms commute.
pub fn entangling_core(tx: f64, ty: f64, tz: f64) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(4, 4);
    // block diagonal on {|00⟩,|11⟩} (ZZ = +1) and {|01⟩,|10⟩} (ZZ = -1)
    let even = tx - ty;
    let odd = tx + ty;
    let pz = C::from_polar(1.0, tz);
    let mz = C::from_polar(1.0, -tz);
    let (se, ce) = even.sin_cos();
    let (so, co) = odd.sin_cos();
    m[(0, 0)] = pz * ce;
    m[(3, 3)] = pz * ce;
    m[(0, 3)] = pz * C::new(0.0, se);
    m[(3, 0)] = pz * C::new(0.0, se);
    m[(1, 1)] = mz * co;
    m[(2, 2)] = mz * co;
    m[(1, 2)] = mz * C::new(0.0, so);
    m[(2, 1)] = mz * C::new(0.0, so);
    m
}

pub fn ansatz_unitary(theta: &[f64]) -> Result<ComplexMatrix> {
    if theta.len() != ANSATZ_PARAMS {
        return Err(HqrnError::DimensionMismatch {
            expected: ANSATZ_PARAMS,
            actual: theta.len(),
        });
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(HqrnError::NonFinite("ansatz angle".into()));
    }
    let r = |i: usize| single_qubit_rotation(theta[i], theta[i + 1], theta[i + 2]);
    let before = kron(&r(0), &r(3));
    let after = kron(&r(9), &r(12));
    let core = entangling_core(theta[6], theta[7], theta[8]);
    Ok(after.matmul(&core).matmul(&before))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::exp_i_hermitian;
    use crate::reconstruct::pauli::PauliString;
    use proptest::prelude::*;

    #[test]
    fn zero_angles_give_identity() {
        let u = ansatz_unitary(&[0.0; 15]).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-15);
        assert!(ansatz_unitary(&[0.0; 14]).is_err());
        let mut bad = [0.0; 15];
        bad[4] = f64::NAN;
        assert!(ansatz_unitary(&bad).is_err());
    }

    #[test]
    fn zz_quarter_turn() {
        let mut theta = [0.0; 15];
        theta[8] = std::f64::consts::FRAC_PI_2;
        let u = ansatz_unitary(&theta).unwrap();
        let i = C::new(0.0, 1.0);
        let want = ComplexMatrix::from_diagonal(&[1.0, -1.0, -1.0, 1.0]).scale_complex(i);
        assert!(u.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn core_matches_matrix_exponential() {
        let (tx, ty, tz) = (0.3, -1.1, 0.7);
        let h = &(&PauliString::from_label("XX").unwrap().to_matrix().scale(tx)
            + &PauliString::from_label("YY").unwrap().to_matrix().scale(ty))
            + &PauliString::from_label("ZZ").unwrap().to_matrix().scale(tz);
        let want = exp_i_hermitian(&h).unwrap();
        assert!(entangling_core(tx, ty, tz).max_abs_diff(&want) < 1e-13);
    }

    #[test]
    fn rotation_matches_product_of_exponentials() {
        let (a, b, c) = (0.4, 1.3, -2.2);
        let z = PauliString::from_label("Z").unwrap().to_matrix();
        let y = PauliString::from_label("Y").unwrap().to_matrix();
        // R_P(t) = exp(-i t P / 2)
        let rz = |t: f64| exp_i_hermitian(&z.scale(-t / 2.0)).unwrap();
        let ry = exp_i_hermitian(&y.scale(-b / 2.0)).unwrap();
        let want = rz(a).matmul(&ry).matmul(&rz(c));
        assert!(single_qubit_rotation(a, b, c).max_abs_diff(&want) < 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn always_unitary(theta in prop::collection::vec(-10.0f64..10.0, 15)) {
            let u = ansatz_unitary(&theta).unwrap();
            prop_assert!(u.unitary_deviation() < 1e-10);
        }
    }
}
