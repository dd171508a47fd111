//! Turning trained classical blocks into quantum blocks.
//!
//! A classical weight matrix `W` is split into its positive and negative parts
//! `W = W₊ - W₋`, the entrywise square roots of both are rescaled into
//! contractions `M±`, and each contraction is embedded in the top-left corner
//! of a unitary on twice the dimension (Halmos dilation). The unitaries are
//! used either exactly or after Trotter–Suzuki compilation. The resulting
//! block reads only the first `d` measurement outcomes, so on the embedded
//! input `diag(y) ⊕ 0` it reproduces the classical layer with `γ = c`.

pub mod pauli;
pub mod trotter;

use serde::{Deserialize, Serialize};

use crate::blocks::{weights_from_unitaries, CrbParams, QrbParams};
use crate::error::{HqrnError, Result};
use crate::linalg::{spectral_norm, svd_square, ComplexMatrix, DensityMatrix, RealMatrix, SimplexVector};
use crate::scalar::Real;

pub use pauli::{pauli_decompose, PauliString, PauliTerm};
pub use trotter::{suzuki_coefficient, trotterize, PauliRotation, TrotterCircuit, TrotterSpec};

/// Floor on the normalization constant so zero weights do not divide by zero.
pub const MIN_NORMALIZATION: f64 = 1e-12;
/// Operator norms up to `1 + CONTRACTION_SLACK` are clamped instead of rejected.
pub const CONTRACTION_SLACK: f64 = 1e-9;

/// `W = positive - negative` with both parts entrywise nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct SignSplit<T: Real> {
    pub positive: RealMatrix<T>,
    pub negative: RealMatrix<T>,
}

pub fn split_weights<T: Real>(w: &RealMatrix<T>) -> SignSplit<T> {
    let half = T::lit(0.5);
    SignSplit {
        positive: w.map(|x| (x.abs() + x) * half),
        negative: w.map(|x| (x.abs() - x) * half),
    }
}

/// Contractions `M± = sqrt(W±) / sqrt(c)` and the scale `c` they share.
#[derive(Clone, Debug, PartialEq)]
pub struct ContractionPair<T: Real> {
    pub plus: ComplexMatrix<T>,
    pub minus: ComplexMatrix<T>,
    /// `c = max(‖√W₊‖², ‖√W₋‖², 1e-12)`; becomes the block's `γ`.
    pub gamma: T,
}

pub fn to_contractions<T: Real>(split: &SignSplit<T>) -> Result<ContractionPair<T>> {
    if split.positive.as_slice().iter().chain(split.negative.as_slice()).any(|x| !(*x >= T::zero())) {
        return Err(HqrnError::InvalidParameter("sign split parts must be nonnegative".into()));
    }
    let a_plus = ComplexMatrix::from_real(&split.positive.map(|x| x.sqrt()));
    let a_minus = ComplexMatrix::from_real(&split.negative.map(|x| x.sqrt()));
    let n_plus = spectral_norm(&a_plus);
    let n_minus = spectral_norm(&a_minus);
    let c = (n_plus * n_plus).max(n_minus * n_minus).max(T::lit(MIN_NORMALIZATION));
    let inv = T::one() / c.sqrt();
    Ok(ContractionPair {
        plus: a_plus.scale(inv),
        minus: a_minus.scale(inv),
        gamma: c,
    })
}

/// `[[M, √(I - M M†)], [√(I - M† M), -M†]]`.
///
/// Both square roots come from one SVD `M = V Σ W†`, as `V √(1-Σ²) V†` and
/// `W √(1-Σ²) W†`, which keeps the result unitary to rounding even when a
/// singular value sits at one.
pub fn halmos_dilate<T: Real>(m: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    m.ensure_square()?;
    let (v, sigma, w) = svd_square(m)?;
    let norm = sigma.first().copied().unwrap_or(T::zero());
    if norm > T::one() + T::lit(CONTRACTION_SLACK) {
        return Err(HqrnError::NotContraction { norm: norm.as_f64() });
    }
    let sigma: Vec<T> = sigma.into_iter().map(|s| s.min(T::one())).collect();
    let defect: Vec<T> = sigma.iter().map(|&s| (T::one() - s * s).max(T::zero()).sqrt()).collect();
    // rounding-level excess keeps `m` verbatim; larger excess uses the clamped factorization
    let top_left = if norm > T::one() + T::lit(1e-12) {
        v.matmul(&ComplexMatrix::from_diagonal(&sigma)).matmul(&w.adjoint())
    } else {
        m.clone()
    };
    let d = ComplexMatrix::from_diagonal(&defect);
    let top_right = v.matmul(&d).matmul(&v.adjoint());
    let bottom_left = w.matmul(&d).matmul(&w.adjoint());
    let bottom_right = top_left.adjoint().scale(-T::one());
    Ok(ComplexMatrix::from_blocks(&top_left, &top_right, &bottom_left, &bottom_right))
}

/// How dilated unitaries are turned into block unitaries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Compilation {
    /// Use the dilations as they are.
    Exact,
    /// Replace each dilation by its Trotter–Suzuki circuit.
    Trotter(TrotterSpec),
    #[default]
    #[serde(skip)]
    DefaultTrotter,
}

impl Compilation {
    pub fn trotter_spec(&self) -> Option<TrotterSpec> {
        match self {
            Compilation::Exact => None,
            Compilation::Trotter(s) => Some(*s),
            Compilation::DefaultTrotter => Some(TrotterSpec::default()),
        }
    }
}

/// Summary written next to every reconstructed block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionReport {
    /// `max |W_rec - W|` over the `d × d` classical weights.
    pub max_abs_error: f64,
    /// Product-formula order; `None` for exact dilations.
    pub order: Option<u32>,
    pub steps: Option<u32>,
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct ReconstructedBlock<T: Real> {
    /// Block on `2d` levels whose first `d` outcomes carry the classical layer.
    pub qrb: QrbParams<T>,
    pub report: ReconstructionReport,
    /// Circuits for `U₊` and `U₋` when compiled with a product formula.
    pub circuits: Option<(TrotterCircuit<T>, TrotterCircuit<T>)>,
}

/// Weights seen by the first `d` outcomes of a dilated block.
pub fn reconstructed_weights<T: Real>(qrb: &QrbParams<T>) -> RealMatrix<T> {
    let d = qrb.active_outcomes();
    let full = weights_from_unitaries(qrb, None);
    RealMatrix::from_fn(d, d, |n, m| full[(n, m)])
}

/// Reconstructs one classical block.
pub fn reconstruct_block<T: Real>(crb: &CrbParams<T>, compilation: Compilation) -> Result<ReconstructedBlock<T>> {
    pauli::qubit_count(crb.dim())?;
    let pair = to_contractions(&split_weights(crb.weight()))?;
    let u_plus = halmos_dilate(&pair.plus)?;
    let u_minus = halmos_dilate(&pair.minus)?;
    let (u_plus, u_minus, circuits) = match compilation.trotter_spec() {
        None => (u_plus, u_minus, None),
        Some(spec) => {
            let cp = trotterize(&u_plus, spec)?;
            let cm = trotterize(&u_minus, spec)?;
            (cp.compile(), cm.compile(), Some((cp, cm)))
        }
    };
    let qrb = QrbParams::new(u_plus, u_minus, pair.gamma, crb.bias().to_vec(), crb.alpha())?;
    let error = reconstructed_weights(&qrb).max_abs_diff(crb.weight());
    let spec = compilation.trotter_spec();
    Ok(ReconstructedBlock {
        report: ReconstructionReport {
            max_abs_error: error.as_f64(),
            order: spec.map(|s| s.order),
            steps: spec.map(|s| s.steps),
            gamma: pair.gamma.as_f64(),
        },
        qrb,
        circuits,
    })
}

/// `diag(y) ⊕ 0` on `2d` levels.
pub fn embed_classical_input<T: Real>(y: &SimplexVector<T>, d: usize) -> Result<DensityMatrix<T>> {
    if y.dim() != d {
        return Err(HqrnError::DimensionMismatch {
            expected: d,
            actual: y.dim(),
        });
    }
    let mut p = y.as_slice().to_vec();
    p.resize(2 * d, T::zero());
    Ok(DensityMatrix::from_probabilities(&SimplexVector::from_vec_unchecked(p)))
}

/// First `d` diagonal entries of a dilated state.
pub fn extract_classical_output<T: Real>(rho: &DensityMatrix<T>, d: usize) -> Vec<T> {
    (0..d).map(|i| rho.matrix()[(i, i)].re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{cascade_crb, cascade_qrb, ActivationKind};
    use crate::linalg::random::random_simplex;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(d: usize, rng: &mut ChaCha8Rng) -> RealMatrix<f64> {
        RealMatrix::from_fn(d, d, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn split_hand_evaluated() {
        let w = RealMatrix::from_rows(&[vec![1.5, -0.5], vec![0.0, -2.0]]).unwrap();
        let s = split_weights(&w);
        assert_eq!(s.positive, RealMatrix::from_rows(&[vec![1.5, 0.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(s.negative, RealMatrix::from_rows(&[vec![0.0, 0.5], vec![0.0, 2.0]]).unwrap());
    }

    #[test]
    fn zero_weights_use_the_floor() {
        let s = split_weights(&RealMatrix::<f64>::zeros(3, 3));
        let pair = to_contractions(&s).unwrap();
        assert_eq!(pair.gamma, MIN_NORMALIZATION);
        assert_eq!(pair.plus.max_abs(), 0.0);
        let u = halmos_dilate(&pair.plus).unwrap();
        assert!(u.unitary_deviation() < 1e-14);
    }

    #[test]
    fn dilation_of_zero_is_swap() {
        let u = halmos_dilate(&ComplexMatrix::<f64>::zeros(2, 2)).unwrap();
        let z = ComplexMatrix::zeros(2, 2);
        let i = ComplexMatrix::identity(2);
        assert!(u.max_abs_diff(&ComplexMatrix::from_blocks(&z, &i, &i, &z)) < 1e-15);
    }

    #[test]
    fn dilation_rejects_expansions_and_clamps_rounding() {
        let big = ComplexMatrix::<f64>::identity(2).scale(1.01);
        assert!(matches!(halmos_dilate(&big), Err(HqrnError::NotContraction { .. })));
        let edge = ComplexMatrix::<f64>::identity(2).scale(1.0 + 5e-10);
        let u = halmos_dilate(&edge).unwrap();
        assert!(u.unitary_deviation() < 1e-9);
    }

    #[test]
    fn report_json_fields() {
        let crb = CrbParams::new(RealMatrix::identity(2), vec![0.0; 2], 0.5).unwrap();
        let r = reconstruct_block(&crb, Compilation::Exact).unwrap();
        let v = serde_json::to_value(&r.report).unwrap();
        for key in ["max_abs_error", "order", "steps", "gamma"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v["order"].is_null());
        assert_eq!(r.qrb.dim(), 4);
        assert_eq!(r.qrb.active_outcomes(), 2);
    }

    #[test]
    fn compilation_json() {
        let c: Compilation = serde_json::from_str(r#"{"kind":"trotter","order":4,"steps":16}"#).unwrap();
        assert_eq!(c, Compilation::Trotter(TrotterSpec { order: 4, steps: 16 }));
        let e: Compilation = serde_json::from_str(r#"{"kind":"exact"}"#).unwrap();
        assert_eq!(e, Compilation::Exact);
        assert_eq!(Compilation::default().trotter_spec(), Some(TrotterSpec::default()));
    }

    #[test]
    fn contraction_examples() {
        let pair = to_contractions(&split_weights(&RealMatrix::<f64>::identity(3))).unwrap();
        assert!((pair.gamma - 1.0).abs() < 1e-12);
        assert!(pair.plus.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-12);

        let four = RealMatrix::<f64>::identity(2).scale(4.0);
        let pair = to_contractions(&split_weights(&four)).unwrap();
        assert!((pair.gamma - 4.0).abs() < 1e-12);
        assert!(pair.plus.max_abs_diff(&ComplexMatrix::identity(2)) < 1e-12);
        assert_eq!(pair.minus.max_abs(), 0.0);
    }

    #[test]
    fn split_of_mixed_signs() {
        let w = RealMatrix::from_rows(&[vec![1.0, -2.0], vec![0.0, 3.0]]).unwrap();
        let s = split_weights(&w);
        assert_eq!(s.positive, RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 3.0]]).unwrap());
        assert_eq!(s.negative, RealMatrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap());
    }

    #[test]
    fn dilation_of_identity_is_reflection() {
        let u = halmos_dilate(&ComplexMatrix::<f64>::identity(2)).unwrap();
        let want = ComplexMatrix::from_diagonal(&[1.0, 1.0, -1.0, -1.0]);
        assert!(u.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn dilations_are_unitary_up_to_64_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in [2usize, 4, 8, 64] {
            let crb = CrbParams::new(random_weights(d, &mut rng), vec![0.0; d], 0.5).unwrap();
            let pair = to_contractions(&split_weights(crb.weight())).unwrap();
            for m in [&pair.plus, &pair.minus] {
                let u = halmos_dilate(m).unwrap();
                assert!(u.unitary_deviation() < 1e-9, "d={d}");
                assert_eq!(u.submatrix(0, 0, d, d), *m);
            }
        }
    }

    #[test]
    fn zero_weights_reconstruct_to_zero() {
        let crb = CrbParams::new(RealMatrix::<f64>::zeros(4, 4), vec![0.0; 4], 0.5).unwrap();
        let r = reconstruct_block(&crb, Compilation::default()).unwrap();
        assert!(reconstructed_weights(&r.qrb).max_abs() < 1e-12);
    }

    #[test]
    fn permutation_weights_round_trip_through_trotter() {
        // W = P - I with P the bit flip m -> m ^ 2 on four levels
        let w = RealMatrix::from_fn(4, 4, |n, m| {
            let p = if n == (m ^ 2) { 1.0 } else { 0.0 };
            let id = if n == m { 1.0 } else { 0.0 };
            p - id
        });
        let crb = CrbParams::new(w.clone(), vec![0.0; 4], 0.5).unwrap();
        let r = reconstruct_block(&crb, Compilation::Trotter(TrotterSpec::new(2, 64).unwrap())).unwrap();
        assert!(reconstructed_weights(&r.qrb).max_abs_diff(&w) < 1e-8);
        assert!(r.report.max_abs_error < 1e-8);
    }

    #[test]
    fn non_power_of_two_is_rejected() {
        let crb = CrbParams::new(RealMatrix::<f64>::identity(3), vec![0.0; 3], 0.5).unwrap();
        assert!(reconstruct_block(&crb, Compilation::Exact).is_err());
    }

    #[test]
    fn embedding_examples() {
        let diag = |rho: &DensityMatrix<f64>| rho.matrix().diagonal().iter().map(|z| z.re).collect::<Vec<_>>();
        let e = embed_classical_input(&SimplexVector::<f64>::basis(4, 0), 4).unwrap();
        assert_eq!(diag(&e), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let u = embed_classical_input(&SimplexVector::<f64>::uniform(2), 2).unwrap();
        assert_eq!(diag(&u), vec![0.5, 0.5, 0.0, 0.0]);
        assert!((u.matrix().trace().re - 1.0).abs() < 1e-15);
        assert!(embed_classical_input(&SimplexVector::<f64>::uniform(3), 2).is_err());
    }

    #[test]
    fn end_to_end_trotterized_block_matches_classical_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for d in [2usize, 4] {
            for _ in 0..3 {
                let w = RealMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
                let b: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..0.5)).collect();
                let crb = CrbParams::new(w, b, 0.5).unwrap();
                let y = SimplexVector::new(random_simplex(d, &mut rng)).unwrap();
                let (yc, hc) = crate::blocks::crb_forward(&y, &crb, ActivationKind::Relu).unwrap();
                for (order, tol) in [(2u32, 1e-4), (4, 1e-6)] {
                    let spec = TrotterSpec::new(order, 128).unwrap();
                    let r = reconstruct_block(&crb, Compilation::Trotter(spec)).unwrap();
                    let rho = embed_classical_input(&y, d).unwrap();
                    let q = crate::blocks::qrb_forward(&rho, &r.qrb, ActivationKind::Relu).unwrap();
                    let out = extract_classical_output(&q.rho_out, d);
                    for n in 0..d {
                        assert!((out[n] - yc.as_slice()[n]).abs() < tol, "order {order}");
                        assert!((q.h.as_slice()[n] - hc.as_slice()[n]).abs() < 2.0 * tol);
                    }
                }
            }
        }
    }

    #[test]
    fn trotterized_block_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let crb = CrbParams::new(random_weights(4, &mut rng), vec![0.1; 4], 0.5).unwrap();
        let r = reconstruct_block(&crb, Compilation::Trotter(TrotterSpec::new(2, 64).unwrap())).unwrap();
        assert!(r.report.max_abs_error < 1e-2, "{}", r.report.max_abs_error);
        assert!(r.circuits.is_some());
    }

    #[test]
    fn dilated_cascade_reproduces_classical_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let crbs: Vec<_> = (0..3)
            .map(|_| CrbParams::new(random_weights(4, &mut rng), vec![0.2; 4], 0.5).unwrap())
            .collect();
        let qrbs: Vec<_> = crbs
            .iter()
            .map(|c| reconstruct_block(c, Compilation::Exact).unwrap().qrb)
            .collect();
        let y = SimplexVector::new(random_simplex(4, &mut rng)).unwrap();
        let yc = cascade_crb(&y, &crbs, ActivationKind::Relu).unwrap();
        let q = cascade_qrb(&embed_classical_input(&y, 4).unwrap(), &qrbs, ActivationKind::Relu).unwrap();
        let out = extract_classical_output(&q.output, 4);
        for (a, b) in out.iter().zip(yc.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn split_recombines(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_weights(5, &mut rng);
            let s = split_weights(&w);
            prop_assert!(s.positive.as_slice().iter().all(|&x| x >= 0.0));
            prop_assert!(s.negative.as_slice().iter().all(|&x| x >= 0.0));
            let back = s.positive.zip_map(&s.negative, |a, b| a - b);
            prop_assert!(back.max_abs_diff(&w) < 1e-15);
        }

        #[test]
        fn exact_reconstruction(seed in any::<u64>(), d in prop::sample::select(vec![2usize, 4, 8])) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let crb = CrbParams::new(random_weights(d, &mut rng), vec![0.0; d], 0.5).unwrap();
            let pair = to_contractions(&split_weights(crb.weight())).unwrap();
            prop_assert!(spectral_norm(&pair.plus) <= 1.0 + 1e-12);
            prop_assert!(spectral_norm(&pair.minus) <= 1.0 + 1e-12);
            let u = halmos_dilate(&pair.plus).unwrap();
            prop_assert!(u.unitary_deviation() < 1e-10);
            prop_assert!(u.submatrix(0, 0, d, d).max_abs_diff(&pair.plus) < 1e-15);
            let r = reconstruct_block(&crb, Compilation::Exact).unwrap();
            prop_assert!(r.report.max_abs_error < 1e-10);
        }
    }
}
