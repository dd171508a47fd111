//! Product-formula compilation of a unitary into Pauli rotations.
//!
//! `U = exp(iH)` with `H = Σ_t a_t P_t` is approximated by `S(1/r)^r`, where
//! `S` is the first-order product, the symmetric second-order product, or a
//! Suzuki fractal built on the latter:
//! `S_{2k}(τ) = S_{2k-2}(p_k τ)² S_{2k-2}((1-4p_k) τ) S_{2k-2}(p_k τ)²`
//! with `p_k = 1 / (4 - 4^{1/(2k-1)})`.

use serde::{Deserialize, Serialize};

use crate::error::{HqrnError, Result};
use crate::linalg::{matrix_log_unitary, ComplexMatrix};
use crate::reconstruct::pauli::{apply_rotation_left, pauli_decompose, qubit_count, PauliString, PauliTerm};
use crate::scalar::Real;

pub const DEFAULT_ORDER: u32 = 2;
pub const DEFAULT_STEPS: u32 = 64;

/// Product-formula order and number of repetitions `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterSpec {
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_steps")]
    pub steps: u32,
}

fn default_order() -> u32 {
    DEFAULT_ORDER
}

fn default_steps() -> u32 {
    DEFAULT_STEPS
}

impl Default for TrotterSpec {
    fn default() -> Self {
        Self {
            order: DEFAULT_ORDER,
            steps: DEFAULT_STEPS,
        }
    }
}

impl TrotterSpec {
    pub fn new(order: u32, steps: u32) -> Result<Self> {
        let spec = Self { order, steps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(HqrnError::InvalidParameter("Trotter steps must be positive".into()));
        }
        if self.order == 0 || (self.order > 1 && self.order % 2 == 1) {
            return Err(HqrnError::InvalidParameter(format!(
                "Trotter order {} must be 1 or even",
                self.order
            )));
        }
        Ok(())
    }
}

/// Suzuki recursion weight `p_k = 1 / (4 - 4^{1/(2k-1)})`, defined for `k >= 2`.
pub fn suzuki_coefficient(k: u32) -> Result<f64> {
    if k < 2 {
        return Err(HqrnError::InvalidParameter(format!(
            "Suzuki coefficient needs k >= 2, got {k}"
        )));
    }
    let e = 1.0 / (2.0 * k as f64 - 1.0);
    Ok(1.0 / (4.0 - 4f64.powf(e)))
}

/// `exp(i · angle · P)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PauliRotation<T: Real> {
    pub pauli: PauliString,
    pub angle: T,
}

/// A Trotter step repeated `repetitions` times.
///
/// `step` lists rotations in the order they act on a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrotterCircuit<T: Real> {
    pub num_qubits: u32,
    pub step: Vec<PauliRotation<T>>,
    pub repetitions: u32,
}

impl<T: Real> TrotterCircuit<T> {
    /// All rotations of the full circuit in application order.
    pub fn factors(&self) -> impl Iterator<Item = &PauliRotation<T>> + '_ {
        (0..self.repetitions).flat_map(move |_| self.step.iter())
    }

    pub fn gate_count(&self) -> usize {
        self.step.len() * self.repetitions as usize
    }

    pub fn dim(&self) -> usize {
        1usize << self.num_qubits
    }

    /// Matrix of one step.
    pub fn step_matrix(&self) -> ComplexMatrix<T> {
        let mut m = ComplexMatrix::identity(self.dim());
        for rot in &self.step {
            apply_rotation_left(&mut m, &rot.pauli, rot.angle);
        }
        m
    }

    /// Matrix of the whole circuit, `step_matrix()^repetitions`.
    pub fn compile(&self) -> ComplexMatrix<T> {
        let step = self.step_matrix();
        matrix_power(&step, self.repetitions)
    }
}

fn matrix_power<T: Real>(m: &ComplexMatrix<T>, mut e: u32) -> ComplexMatrix<T> {
    let mut result: Option<ComplexMatrix<T>> = None;
    let mut base = m.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.matmul(&base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.matmul(&base);
        }
    }
    result.unwrap_or_else(|| ComplexMatrix::identity(m.rows()))
}

/// Rotations of one product-formula step of length `tau`, in application order.
pub fn product_formula<T: Real>(terms: &[PauliTerm<T>], order: u32, tau: T) -> Result<Vec<PauliRotation<T>>> {
    TrotterSpec { order, steps: 1 }.validate()?;
    let mut out = Vec::new();
    push_formula(terms, order, tau, &mut out)?;
    Ok(merge_adjacent(out))
}

fn push_formula<T: Real>(terms: &[PauliTerm<T>], order: u32, tau: T, out: &mut Vec<PauliRotation<T>>) -> Result<()> {
    match order {
        1 => out.extend(terms.iter().map(|t| PauliRotation {
            pauli: t.pauli,
            angle: t.coefficient * tau,
        })),
        2 => {
            let half = tau * T::lit(0.5);
            out.extend(terms.iter().map(|t| PauliRotation {
                pauli: t.pauli,
                angle: t.coefficient * half,
            }));
            out.extend(terms.iter().rev().map(|t| PauliRotation {
                pauli: t.pauli,
                angle: t.coefficient * half,
            }));
        }
        _ => {
            let p = T::lit(suzuki_coefficient(order / 2)?);
            let inner = order - 2;
            let outer = p * tau;
            let middle = (T::one() - T::lit(4.0) * p) * tau;
            for t in [outer, outer, middle, outer, outer] {
                push_formula(terms, inner, t, out)?;
            }
        }
    }
    Ok(())
}

/// Fuses consecutive rotations about the same Pauli string.
fn merge_adjacent<T: Real>(rotations: Vec<PauliRotation<T>>) -> Vec<PauliRotation<T>> {
    let mut out: Vec<PauliRotation<T>> = Vec::with_capacity(rotations.len());
    for r in rotations {
        match out.last_mut() {
            Some(last) if last.pauli == r.pauli => last.angle = last.angle + r.angle,
            _ => out.push(r),
        }
    }
    out
}

/// Compiles `exp(iH)` for Hermitian `h`.
pub fn trotterize_hamiltonian<T: Real>(h: &ComplexMatrix<T>, spec: TrotterSpec) -> Result<TrotterCircuit<T>> {
    spec.validate()?;
    let num_qubits = qubit_count(h.rows())?;
    let terms = pauli_decompose(h)?;
    let tau = T::one() / T::lit(spec.steps as f64);
    let step = product_formula(&terms, spec.order, tau)?;
    Ok(TrotterCircuit {
        num_qubits,
        step,
        repetitions: spec.steps,
    })
}

/// Compiles a unitary through its principal logarithm.
pub fn trotterize<T: Real>(u: &ComplexMatrix<T>, spec: TrotterSpec) -> Result<TrotterCircuit<T>> {
    spec.validate()?;
    qubit_count(u.rows())?;
    let h = matrix_log_unitary(u)?;
    trotterize_hamiltonian(&h, spec)
}
