//! Pauli strings on `n` qubits, stored as bit masks.
//!
//! A string is `i^{|x ∧ z|} X^x Z^z`, so `P|k⟩ = i^{|x∧z|} (-1)^{|k∧z|} |k ⊕ x⟩`.
//! Qubit 0 is the most significant bit of the basis index.

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{HqrnError, Result};
use crate::linalg::ComplexMatrix;
use crate::scalar::Real;

/// Coefficients with magnitude at or below this are dropped from decompositions.
pub const COEFFICIENT_CUTOFF: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    pub num_qubits: u32,
    pub x_mask: u64,
    pub z_mask: u64,
}

impl PauliString {
    pub fn identity(num_qubits: u32) -> Self {
        Self {
            num_qubits,
            x_mask: 0,
            z_mask: 0,
        }
    }

    /// Parses labels like `"XIZY"`; the first letter acts on qubit 0.
    pub fn from_label(label: &str) -> Result<Self> {
        let n = label.chars().count() as u32;
        if n == 0 || n > 32 {
            return Err(HqrnError::InvalidParameter(format!("bad Pauli label {label:?}")));
        }
        let mut p = Self::identity(n);
        for (q, ch) in label.chars().enumerate() {
            let bit = 1u64 << (n - 1 - q as u32);
            match ch {
                'I' => {}
                'X' => p.x_mask |= bit,
                'Z' => p.z_mask |= bit,
                'Y' => {
                    p.x_mask |= bit;
                    p.z_mask |= bit;
                }
                _ => {
                    return Err(HqrnError::InvalidParameter(format!(
                        "bad Pauli letter {ch:?} in {label:?}"
                    )))
                }
            }
        }
        Ok(p)
    }

    pub fn label(&self) -> String {
        (0..self.num_qubits)
            .map(|q| {
                let bit = 1u64 << (self.num_qubits - 1 - q);
                match (self.x_mask & bit != 0, self.z_mask & bit != 0) {
                    (false, false) => 'I',
                    (true, false) => 'X',
                    (true, true) => 'Y',
                    (false, true) => 'Z',
                }
            })
            .collect()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        1usize << self.num_qubits
    }

    /// Phase `c` with `P|k⟩ = c |k ⊕ x⟩`.
    #[inline]
    pub fn phase<T: Real>(&self, k: usize) -> Complex<T> {
        let y_count = (self.x_mask & self.z_mask).count_ones();
        let sign_flips = (k as u64 & self.z_mask).count_ones();
        // i^y (-1)^s = i^(y + 2s)
        match (y_count + 2 * sign_flips) % 4 {
            0 => Complex::new(T::one(), T::zero()),
            1 => Complex::new(T::zero(), T::one()),
            2 => Complex::new(-T::one(), T::zero()),
            _ => Complex::new(T::zero(), -T::one()),
        }
    }

    pub fn to_matrix<T: Real>(&self) -> ComplexMatrix<T> {
        let d = self.dim();
        let mut m = ComplexMatrix::zeros(d, d);
        for k in 0..d {
            m[(k ^ self.x_mask as usize, k)] = self.phase(k);
        }
        m
    }

    /// Lexicographic position with `I < X < Y < Z` and qubit 0 most significant.
    fn sort_key(&self) -> u128 {
        let mut key = 0u128;
        for q in 0..self.num_qubits {
            let bit = 1u64 << (self.num_qubits - 1 - q);
            let digit = match (self.x_mask & bit != 0, self.z_mask & bit != 0) {
                (false, false) => 0,
                (true, false) => 1,
                (true, true) => 2,
                (false, true) => 3,
            };
            key = key * 4 + digit;
        }
        key
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// `coefficient · P`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PauliTerm<T: Real> {
    pub pauli: PauliString,
    pub coefficient: T,
}

/// `log2(dim)` when `dim` is a power of two.
pub fn qubit_count(dim: usize) -> Result<u32> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(HqrnError::InvalidParameter(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros())
}

/// Expands a Hermitian matrix as `Σ tr(P H)/dim · P`, lexicographically ordered.
pub fn pauli_decompose<T: Real>(h: &ComplexMatrix<T>) -> Result<Vec<PauliTerm<T>>> {
    let d = h.ensure_hermitian(T::tol(1e-9) * T::one().max(h.max_abs()))?;
    let n = qubit_count(d)?;
    let inv_d = T::one() / T::lit(d as f64);
    let mut terms = Vec::new();
    for x in 0..d as u64 {
        for z in 0..d as u64 {
            let p = PauliString {
                num_qubits: n,
                x_mask: x,
                z_mask: z,
            };
            // tr(P H) = Σ_k phase(k) H[k, k ⊕ x]
            let mut acc = Complex::new(T::zero(), T::zero());
            for k in 0..d {
                acc = acc + p.phase::<T>(k) * h[(k, k ^ x as usize)];
            }
            let c = acc.re * inv_d;
            if c.abs() > T::lit(COEFFICIENT_CUTOFF) {
                terms.push(PauliTerm {
                    pauli: p,
                    coefficient: c,
                });
            }
        }
    }
    terms.sort_by_key(|t| t.pauli.sort_key());
    Ok(terms)
}

/// Applies `exp(iθP) = cos θ I + i sin θ P` to `m` from the left, in place.
pub fn apply_rotation_left<T: Real>(m: &mut ComplexMatrix<T>, pauli: &PauliString, theta: T) {
    let d = m.rows();
    let cols = m.cols();
    let x = pauli.x_mask as usize;
    let (c, s) = (theta.cos(), theta.sin());
    let i_sin = Complex::new(T::zero(), s);
    let data = m.as_mut_slice();
    if x == 0 {
        // diagonal: row r picks up cos θ + i sin θ phase(r)
        for r in 0..d {
            let f = Complex::new(c, T::zero()) + i_sin * pauli.phase::<T>(r);
            for v in &mut data[r * cols..(r + 1) * cols] {
                *v = *v * f;
            }
        }
        return;
    }
    for r in 0..d {
        let partner = r ^ x;
        if partner < r {
            continue;
        }
        // (P M)[r] = phase(partner) M[partner], (P M)[partner] = phase(r) M[r]
        let to_r = i_sin * pauli.phase::<T>(partner);
        let to_partner = i_sin * pauli.phase::<T>(r);
        for col in 0..cols {
            let a = data[r * cols + col];
            let b = data[partner * cols + col];
            data[r * cols + col] = a * c + to_r * b;
            data[partner * cols + col] = b * c + to_partner * a;
        }
    }
}
