//! Quantum residual blocks (QRB), their classical reduction (CRB) and cascades.
//!
//! A QRB applies two unitaries `U±` to its input state, measures both in the
//! computational basis, forms `h = F(γ (p₊ - p₋) + b)` with the normalized
//! activation `F`, and mixes `α ρ + (1 - α) diag(h)`. On diagonal inputs the
//! block acts on the diagonal exactly like a CRB with weights
//! `W_nm = γ (|⟨n|U₊|m⟩|² - |⟨n|U₋|m⟩|²)`.
//!
//! When `bias` is shorter than the unitary dimension, only the first
//! `bias.len()` measurement outcomes feed the activation and the remaining
//! outcomes are discarded. This is how dilated blocks on `2d` levels
//! reproduce a `d`-dimensional classical layer.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{HqrnError, Result};
use crate::linalg::{eig_hermitian, ComplexMatrix, DensityMatrix, RealMatrix, SimplexVector};
use crate::scalar::Real;

/// Nonnegative activation `f` inside the normalized map `F`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Relu,
    Sigmoid,
}

impl ActivationKind {
    #[inline]
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            ActivationKind::Relu => z.max(T::zero()),
            ActivationKind::Sigmoid => T::one() / (T::one() + (-z).exp()),
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, z: T) -> T {
        match self {
            ActivationKind::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            ActivationKind::Sigmoid => {
                let s = self.apply(z);
                s * (T::one() - s)
            }
        }
    }
}

/// Below this total activation mass `F` falls back to the uniform distribution.
pub const DEGENERATE_MASS: f64 = 1e-20;

/// `F(z)_n = f(z_n) / Σ_l f(z_l)`; uniform when the denominator vanishes.
pub fn normalized_activation<T: Real>(z: &[T], kind: ActivationKind) -> SimplexVector<T> {
    let f: Vec<T> = z.iter().map(|&x| kind.apply(x)).collect();
    let total: T = f.iter().copied().sum();
    if !(total >= T::lit(DEGENERATE_MASS)) {
        return SimplexVector::uniform(z.len());
    }
    SimplexVector::from_vec_unchecked(f.into_iter().map(|x| x / total).collect())
}

/// Parameters of one quantum residual block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QrbParamsRaw<T>", into = "QrbParamsRaw<T>")]
#[serde(bound = "T: Real")]
pub struct QrbParams<T: Real> {
    u_plus: ComplexMatrix<T>,
    u_minus: ComplexMatrix<T>,
    gamma: T,
    bias: Vec<T>,
    alpha: T,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Real")]
struct QrbParamsRaw<T: Real> {
    u_plus: ComplexMatrix<T>,
    u_minus: ComplexMatrix<T>,
    gamma: T,
    bias: Vec<T>,
    alpha: T,
}

impl<T: Real> TryFrom<QrbParamsRaw<T>> for QrbParams<T> {
    type Error = HqrnError;
    fn try_from(r: QrbParamsRaw<T>) -> Result<Self> {
        QrbParams::new(r.u_plus, r.u_minus, r.gamma, r.bias, r.alpha)
    }
}

impl<T: Real> From<QrbParams<T>> for QrbParamsRaw<T> {
    fn from(p: QrbParams<T>) -> Self {
        QrbParamsRaw {
            u_plus: p.u_plus,
            u_minus: p.u_minus,
            gamma: p.gamma,
            bias: p.bias,
            alpha: p.alpha,
        }
    }
}

fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha < T::one() {
        Ok(())
    } else {
        Err(HqrnError::InvalidParameter(format!(
            "residual weight alpha = {alpha} must lie in (0, 1)"
        )))
    }
}

impl<T: Real> QrbParams<T> {
    pub fn new(
        u_plus: ComplexMatrix<T>,
        u_minus: ComplexMatrix<T>,
        gamma: T,
        bias: Vec<T>,
        alpha: T,
    ) -> Result<Self> {
        let d = u_plus.ensure_unitary(T::tol(1e-9))?;
        let d2 = u_minus.ensure_unitary(T::tol(1e-9))?;
        if d != d2 {
            return Err(HqrnError::DimensionMismatch {
                expected: d,
                actual: d2,
            });
        }
        if bias.is_empty() || bias.len() > d {
            return Err(HqrnError::InvalidParameter(format!(
                "bias length {} must be in 1..={d}",
                bias.len()
            )));
        }
        if !gamma.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(HqrnError::NonFinite("gamma or bias".into()));
        }
        check_alpha(alpha)?;
        Ok(Self {
            u_plus,
            u_minus,
            gamma,
            bias,
            alpha,
        })
    }

    /// Identity unitaries, `γ = 1`, zero bias.
    pub fn identity(dim: usize, alpha: T) -> Result<Self> {
        Self::new(
            ComplexMatrix::identity(dim),
            ComplexMatrix::identity(dim),
            T::one(),
            vec![T::zero(); dim],
            alpha,
        )
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.u_plus.rows()
    }

    /// Number of measurement outcomes that feed the activation.
    #[inline]
    pub fn active_outcomes(&self) -> usize {
        self.bias.len()
    }

    pub fn u_plus(&self) -> &ComplexMatrix<T> {
        &self.u_plus
    }

    pub fn u_minus(&self) -> &ComplexMatrix<T> {
        &self.u_minus
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
}

/// Parameters of one classical residual block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CrbParamsRaw<T>", into = "CrbParamsRaw<T>")]
#[serde(bound = "T: Real")]
pub struct CrbParams<T: Real> {
    weight: RealMatrix<T>,
    bias: Vec<T>,
    alpha: T,
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound = "T: Real")]
struct CrbParamsRaw<T: Real> {
    weight: RealMatrix<T>,
    bias: Vec<T>,
    alpha: T,
}

impl<T: Real> TryFrom<CrbParamsRaw<T>> for CrbParams<T> {
    type Error = HqrnError;
    fn try_from(r: CrbParamsRaw<T>) -> Result<Self> {
        CrbParams::new(r.weight, r.bias, r.alpha)
    }
}

impl<T: Real> From<CrbParams<T>> for CrbParamsRaw<T> {
    fn from(p: CrbParams<T>) -> Self {
        CrbParamsRaw {
            weight: p.weight,
            bias: p.bias,
            alpha: p.alpha,
        }
    }
}

impl<T: Real> CrbParams<T> {
    pub fn new(weight: RealMatrix<T>, bias: Vec<T>, alpha: T) -> Result<Self> {
        if weight.rows() != weight.cols() {
            return Err(HqrnError::NotSquare {
                rows: weight.rows(),
                cols: weight.cols(),
            });
        }
        if bias.len() != weight.rows() {
            return Err(HqrnError::DimensionMismatch {
                expected: weight.rows(),
                actual: bias.len(),
            });
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(HqrnError::NonFinite("bias".into()));
        }
        check_alpha(alpha)?;
        Ok(Self {
            weight,
            bias,
            alpha,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &RealMatrix<T> {
        &self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn weight_mut(&mut self) -> &mut RealMatrix<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }
}

/// Everything a QRB computes on one input.
#[derive(Clone, Debug)]
pub struct QrbOutput<T: Real> {
    pub rho_out: DensityMatrix<T>,
    /// Intermediate mixture coefficients, zero on discarded outcomes.
    pub h: SimplexVector<T>,
    pub p_plus: SimplexVector<T>,
    pub p_minus: SimplexVector<T>,
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(HqrnError::DimensionMismatch { expected, actual })
    }
}

fn probabilities<T: Real>(rho: &DensityMatrix<T>, u: &ComplexMatrix<T>) -> SimplexVector<T> {
    let p = rho
        .conjugated_diagonal(u)
        .into_iter()
        .map(|x| x.max(T::zero()))
        .collect();
    SimplexVector::from_vec_unchecked(p)
}

/// `h = F(γ (p₊ - p₋) + b)` padded with zeros to `dim`.
pub(crate) fn block_coefficients<T: Real>(
    p_plus: &[T],
    p_minus: &[T],
    params: &QrbParams<T>,
    kind: ActivationKind,
) -> SimplexVector<T> {
    let active = params.active_outcomes();
    let z: Vec<T> = (0..active)
        .map(|n| params.gamma * (p_plus[n] - p_minus[n]) + params.bias[n])
        .collect();
    let mut h = normalized_activation(&z, kind).into_vec();
    h.resize(params.dim(), T::zero());
    SimplexVector::from_vec_unchecked(h)
}

/// `α ρ + (1 - α) diag(h)`.
pub(crate) fn residual_mix<T: Real>(rho: &DensityMatrix<T>, h: &SimplexVector<T>, alpha: T) -> DensityMatrix<T> {
    let one_minus = T::one() - alpha;
    let mut m = rho.matrix().scale(alpha);
    for (i, &hi) in h.as_slice().iter().enumerate() {
        m[(i, i)] = m[(i, i)] + Complex::new(one_minus * hi, T::zero());
    }
    DensityMatrix::from_matrix_unchecked(m)
}

/// One quantum residual block acting on `rho`.
pub fn qrb_forward<T: Real>(
    rho: &DensityMatrix<T>,
    params: &QrbParams<T>,
    kind: ActivationKind,
) -> Result<QrbOutput<T>> {
    check_dim(params.dim(), rho.dim())?;
    let p_plus = probabilities(rho, &params.u_plus);
    let p_minus = probabilities(rho, &params.u_minus);
    let h = block_coefficients(p_plus.as_slice(), p_minus.as_slice(), params, kind);
    let rho_out = residual_mix(rho, &h, params.alpha);
    Ok(QrbOutput {
        rho_out,
        h,
        p_plus,
        p_minus,
    })
}

/// One classical residual block: returns `(y_out, h)`.
pub fn crb_forward<T: Real>(
    y: &SimplexVector<T>,
    params: &CrbParams<T>,
    kind: ActivationKind,
) -> Result<(SimplexVector<T>, SimplexVector<T>)> {
    check_dim(params.dim(), y.dim())?;
    let mut z = params.weight.matvec(y.as_slice());
    for (zi, &b) in z.iter_mut().zip(&params.bias) {
        *zi = *zi + b;
    }
    let h = normalized_activation(&z, kind);
    let a = params.alpha;
    let out = h
        .as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(&hn, &yn)| (T::one() - a) * hn + a * yn)
        .collect();
    Ok((SimplexVector::from_vec_unchecked(out), h))
}

/// `γ (|⟨n|U₊|φ_m⟩|² - |⟨n|U₋|φ_m⟩|²)`, row `n` = output, column `m` = input.
///
/// `basis` holds the vectors `φ_m` as columns; `None` means the computational basis.
pub fn weights_from_unitaries<T: Real>(
    params: &QrbParams<T>,
    basis: Option<&ComplexMatrix<T>>,
) -> RealMatrix<T> {
    let (plus, minus) = match basis {
        Some(b) => (params.u_plus.matmul(b), params.u_minus.matmul(b)),
        None => (params.u_plus.clone(), params.u_minus.clone()),
    };
    let d = params.dim();
    RealMatrix::from_fn(d, d, |n, m| {
        params.gamma * (plus[(n, m)].norm_sqr() - minus[(n, m)].norm_sqr())
    })
}

/// Result of running a QRB cascade, with every intermediate step.
#[derive(Clone, Debug)]
pub struct QrbCascade<T: Real> {
    pub output: DensityMatrix<T>,
    pub steps: Vec<QrbOutput<T>>,
}

/// Applies the blocks in order.
pub fn cascade_qrb<T: Real>(
    rho0: &DensityMatrix<T>,
    blocks: &[QrbParams<T>],
    kind: ActivationKind,
) -> Result<QrbCascade<T>> {
    let mut rho = rho0.clone();
    let mut steps = Vec::with_capacity(blocks.len());
    for block in blocks {
        let out = qrb_forward(&rho, block, kind)?;
        rho = out.rho_out.clone();
        steps.push(out);
    }
    Ok(QrbCascade { output: rho, steps })
}

/// Output of a QRB cascade from the explicit k-layer expansion.
///
/// `ρ^(k) = Σ_j c_j diag(h^(j)) + (Π α_i) ρ^(0)` with `c_j = (1-α_j) Π_{i>j} α_i`,
/// and each `h^(k)` obtained from the earlier coefficients through the
/// computational-basis weights `W^(k)` and the weights `Ω^(k)` taken against
/// the eigenbasis of `ρ^(0)`. No density matrix is propagated, so this is an
/// independent check of [`cascade_qrb`]. For a common α it reduces to
/// `(1-α) Σ_n Σ_j α^j h_n^(k-j) |n⟩⟨n| + α^k ρ^(0)`.
pub fn closed_form_output<T: Real>(
    rho0: &DensityMatrix<T>,
    blocks: &[QrbParams<T>],
    kind: ActivationKind,
) -> Result<DensityMatrix<T>> {
    let d = rho0.dim();
    for b in blocks {
        check_dim(b.dim(), d)?;
    }
    let eig = eig_hermitian(rho0.matrix())?;
    let h0: Vec<T> = eig.eigenvalues.iter().map(|&l| l.max(T::zero())).collect();
    let basis = &eig.eigenvectors;

    let mut hs: Vec<Vec<T>> = Vec::with_capacity(blocks.len());
    let mut alphas: Vec<T> = Vec::with_capacity(blocks.len());
    for block in blocks {
        let w = weights_from_unitaries(block, None);
        let omega = weights_from_unitaries(block, Some(basis));
        let coeffs = mixture_coefficients(&alphas);
        let rho0_weight = alphas.iter().fold(T::one(), |acc, &a| acc * a);

        let active = block.active_outcomes();
        let mut z = vec![T::zero(); active];
        for (n, zn) in z.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (h_j, &c_j) in hs.iter().zip(&coeffs) {
                let wh: T = (0..d).map(|m| w[(n, m)] * h_j[m]).sum();
                acc = acc + c_j * wh;
            }
            let oh: T = (0..d).map(|m| omega[(n, m)] * h0[m]).sum();
            *zn = acc + rho0_weight * oh + block.bias[n];
        }
        let mut h = normalized_activation(&z, kind).into_vec();
        h.resize(d, T::zero());
        hs.push(h);
        alphas.push(block.alpha);
    }

    let coeffs = mixture_coefficients(&alphas);
    let rho0_weight = alphas.iter().fold(T::one(), |acc, &a| acc * a);
    let mut m = rho0.matrix().scale(rho0_weight);
    for (h_j, &c_j) in hs.iter().zip(&coeffs) {
        for (n, &hn) in h_j.iter().enumerate() {
            m[(n, n)] = m[(n, n)] + Complex::new(c_j * hn, T::zero());
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(m))
}

/// Weight of `diag(h^(j))` in the state after all blocks in `alphas`.
fn mixture_coefficients<T: Real>(alphas: &[T]) -> Vec<T> {
    (0..alphas.len())
        .map(|j| {
            alphas[j + 1..]
                .iter()
                .fold(T::one() - alphas[j], |acc, &a| acc * a)
        })
        .collect()
}

/// Applies classical blocks in order.
pub fn cascade_crb<T: Real>(
    y0: &SimplexVector<T>,
    blocks: &[CrbParams<T>],
    kind: ActivationKind,
) -> Result<SimplexVector<T>> {
    let mut y = y0.clone();
    for block in blocks {
        y = crb_forward(&y, block, kind)?.0;
    }
    Ok(y)
}
