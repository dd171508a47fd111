//! Labeled two-qubit states for the entanglement task and the PPT oracle.
//!
//! Three families are generated: Werner states around a phased Bell state,
//! convex mixtures of product states, and separable states whose
//! computational-basis statistics coincide with those of a Bell state.
//! Labels are `+1` for entangled and `-1` for separable and are checked
//! against the partial-transpose test at generation time.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HqrnError, Result};
use crate::linalg::random::{haar_state, random_simplex};
use crate::linalg::{eig_hermitian, kron};
use crate::sampling::stream_rng;
use crate::{ComplexMatrix, DensityMatrix};

/// Partial-transpose eigenvalues below this mark a state as entangled.
pub const PPT_THRESHOLD: f64 = -1e-10;
/// Werner states are entangled strictly above this Bell weight.
pub const WERNER_BOUNDARY: f64 = 1.0 / 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Entangled,
    Separable,
}

impl Label {
    pub fn sign(self) -> i8 {
        match self {
            Label::Entangled => 1,
            Label::Separable => -1,
        }
    }

    /// Class index used by classifiers: 1 entangled, 0 separable.
    pub fn class(self) -> usize {
        match self {
            Label::Entangled => 1,
            Label::Separable => 0,
        }
    }

    pub fn from_entangled(entangled: bool) -> Self {
        if entangled {
            Label::Entangled
        } else {
            Label::Separable
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.sign()
    }
}

impl TryFrom<i8> for Label {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Entangled),
            -1 => Ok(Label::Separable),
            _ => Err(format!("label must be +1 or -1, got {v}")),
        }
    }
}

/// Which pair of basis states the Bell state superposes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellPair {
    #[serde(rename = "00/11")]
    Even,
    #[serde(rename = "01/10")]
    Odd,
}

impl BellPair {
    /// Basis indices `(i, j)` of the superposed states.
    pub fn indices(self) -> (usize, usize) {
        match self {
            BellPair::Even => (0, 3),
            BellPair::Odd => (1, 2),
        }
    }
}

/// `(|i⟩ + e^{iφ}|j⟩)/√2` for the pair `(i, j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellSpec {
    pub pair: BellPair,
    pub phase: f64,
}

impl BellSpec {
    pub fn new(pair: BellPair, phase: f64) -> Result<Self> {
        if !(0.0..2.0 * PI).contains(&phase) {
            return Err(HqrnError::InvalidParameter(format!("phase {phase} outside [0, 2π)")));
        }
        Ok(Self { pair, phase })
    }

    pub fn state_vector(&self) -> Vec<Complex<f64>> {
        let (i, j) = self.pair.indices();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = vec![Complex::new(0.0, 0.0); 4];
        v[i] = Complex::new(h, 0.0);
        v[j] = Complex::from_polar(h, self.phase);
        v
    }

    /// `|Φ⟩⟨Φ|` with diagonal entries exactly 1/2.
    pub fn projector(&self) -> ComplexMatrix {
        let (i, j) = self.pair.indices();
        let mut m = ComplexMatrix::zeros(4, 4);
        m[(i, i)] = Complex::new(0.5, 0.0);
        m[(j, j)] = Complex::new(0.5, 0.0);
        m[(i, j)] = Complex::from_polar(0.5, -self.phase);
        m[(j, i)] = Complex::from_polar(0.5, self.phase);
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Werner,
    RandomSeparable,
    Adversarial,
}

/// Single-qubit factor `(|ψ⟩⟨ψ| + μ I/2) / (1 + μ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitFactor {
    /// Amplitudes as `[re, im]` pairs.
    pub psi: [[f64; 2]; 2],
    pub mu: f64,
}

impl QubitFactor {
    pub fn pure(psi: [Complex<f64>; 2]) -> Self {
        Self {
            psi: [[psi[0].re, psi[0].im], [psi[1].re, psi[1].im]],
            mu: 0.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let v = haar_state::<f64, R>(2, rng);
        let mu = rng.random::<f64>();
        Self {
            mu,
            ..Self::pure([v[0], v[1]])
        }
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let psi = [
            Complex::new(self.psi[0][0], self.psi[0][1]),
            Complex::new(self.psi[1][0], self.psi[1][1]),
        ];
        let norm = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
        let psi = [psi[0] / norm, psi[1] / norm];
        let proj = ComplexMatrix::outer(&psi, &psi);
        let mixed = &proj + &ComplexMatrix::identity(2).scale(self.mu / 2.0);
        mixed.scale(1.0 / (1.0 + self.mu))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductTerm {
    pub weight: f64,
    pub a: QubitFactor,
    pub b: QubitFactor,
}

/// Generation parameters kept with every state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateParams {
    Werner { p_b: f64, bell: BellSpec },
    RandomSeparable { terms: Vec<ProductTerm> },
    Adversarial { p_ad: f64, mimic: BellPair },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledState {
    pub state: DensityMatrix,
    pub label: Label,
    pub family: Family,
    pub params: StateParams,
}

impl LabeledState {
    /// Checks the stored label against the PPT oracle.
    pub fn check_label(&self) -> Result<()> {
        let entangled = ppt_is_entangled(&self.state)?;
        if Label::from_entangled(entangled) != self.label {
            return Err(HqrnError::Data(format!(
                "{:?} state labeled {} but PPT oracle says entangled = {entangled}",
                self.family,
                self.label.sign()
            )));
        }
        Ok(())
    }
}

/// `p σ + (1 - p) I/4`.
pub fn mix_with_identity(sigma: &ComplexMatrix, p: f64) -> ComplexMatrix {
    let mut m = sigma.scale(p);
    let noise = (1.0 - p) / 4.0;
    for i in 0..4 {
        m[(i, i)] += Complex::new(noise, 0.0);
    }
    m
}

fn check_weight(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(HqrnError::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
    }
    Ok(())
}

pub fn werner_state(p_b: f64, bell: BellSpec) -> Result<LabeledState> {
    check_weight("p_B", p_b)?;
    let state = DensityMatrix::new(mix_with_identity(&bell.projector(), p_b))?;
    let labeled = LabeledState {
        state,
        label: Label::from_entangled(p_b > WERNER_BOUNDARY),
        family: Family::Werner,
        params: StateParams::Werner { p_b, bell },
    };
    labeled.check_label()?;
    Ok(labeled)
}

/// `Σ_k w_k ρ_A^(k) ⊗ ρ_B^(k)`.
pub fn separable_mixture(terms: Vec<ProductTerm>) -> Result<LabeledState> {
    if terms.is_empty() {
        return Err(HqrnError::InvalidParameter("mixture needs at least one term".into()));
    }
    let mut m = ComplexMatrix::zeros(4, 4);
    for t in &terms {
        m = &m + &kron(&t.a.matrix(), &t.b.matrix()).scale(t.weight);
    }
    let labeled = LabeledState {
        state: DensityMatrix::new(m)?,
        label: Label::Separable,
        family: Family::RandomSeparable,
        params: StateParams::RandomSeparable { terms },
    };
    labeled.check_label()?;
    Ok(labeled)
}

pub fn random_separable(num_terms: usize, seed: u64) -> Result<LabeledState> {
    random_separable_with(num_terms, &mut stream_rng(seed, 0))
}

pub fn random_separable_with<R: Rng + ?Sized>(num_terms: usize, rng: &mut R) -> Result<LabeledState> {
    if num_terms == 0 {
        return Err(HqrnError::InvalidParameter("num_terms must be at least 1".into()));
    }
    let weights: Vec<f64> = random_simplex(num_terms, rng);
    let terms = weights
        .into_iter()
        .map(|weight| ProductTerm {
            weight,
            a: QubitFactor::random(rng),
            b: QubitFactor::random(rng),
        })
        .collect();
    separable_mixture(terms)
}

/// Separable state with the computational-basis statistics of the Bell pair:
/// `½(|i⟩⟨i| + |j⟩⟨j|)`.
pub fn bell_mimic(pair: BellPair) -> ComplexMatrix {
    let (i, j) = pair.indices();
    let mut m = ComplexMatrix::zeros(4, 4);
    m[(i, i)] = Complex::new(0.5, 0.0);
    m[(j, j)] = Complex::new(0.5, 0.0);
    m
}

/// `p_ad σ + (1 - p_ad) I/4` with σ the [`bell_mimic`] of `mimic`.
pub fn adversarial_state(p_ad: f64, mimic: BellPair) -> Result<LabeledState> {
    check_weight("p_ad", p_ad)?;
    let state = DensityMatrix::new(mix_with_identity(&bell_mimic(mimic), p_ad))?;
    let labeled = LabeledState {
        state,
        label: Label::Separable,
        family: Family::Adversarial,
        params: StateParams::Adversarial { p_ad, mimic },
    };
    labeled.check_label()?;
    Ok(labeled)
}

/// `ρ^{T_B}` with `ρ^{T_B}[(a b), (a' b')] = ρ[(a b'), (a' b)]`.
pub fn partial_transpose(rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    if rho.rows() != 4 || rho.cols() != 4 {
        return Err(HqrnError::DimensionMismatch {
            expected: 4,
            actual: rho.rows(),
        });
    }
    Ok(ComplexMatrix::from_fn(4, 4, |r, c| {
        let (a, b) = (r / 2, r % 2);
        let (a2, b2) = (c / 2, c % 2);
        rho[(2 * a + b2, 2 * a2 + b)]
    }))
}

/// Smallest eigenvalue of the partial transpose.
pub fn ppt_min_eigenvalue(rho: &DensityMatrix) -> Result<f64> {
    let pt = partial_transpose(rho.matrix())?;
    Ok(eig_hermitian(&pt)?.min_eigenvalue())
}

/// Peres–Horodecki test, exact for two qubits.
pub fn ppt_is_entangled(rho: &DensityMatrix) -> Result<bool> {
    Ok(ppt_min_eigenvalue(rho)? < PPT_THRESHOLD)
}

/// Number of states per family.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetCounts {
    pub werner: usize,
    pub random_separable: usize,
    pub adversarial: usize,
}

impl DatasetCounts {
    pub fn total(&self) -> usize {
        self.werner + self.random_separable + self.adversarial
    }
}

fn random_pair<R: Rng + ?Sized>(rng: &mut R) -> BellPair {
    if rng.random::<bool>() {
        BellPair::Even
    } else {
        BellPair::Odd
    }
}

/// Werner, random separable and adversarial states in that order.
///
/// Record `i` draws from stream `i` of the seed, so any record can be
/// regenerated on its own.
pub fn build_dataset(counts: DatasetCounts, seed: u64) -> Result<Vec<LabeledState>> {
    let mut out = Vec::with_capacity(counts.total());
    let mut index = 0u64;
    for _ in 0..counts.werner {
        let mut rng = stream_rng(seed, index);
        let p_b = rng.random::<f64>();
        let phase = rng.random::<f64>() * 2.0 * PI;
        let bell = BellSpec::new(random_pair(&mut rng), phase)?;
        out.push(werner_state(p_b, bell)?);
        index += 1;
    }
    for _ in 0..counts.random_separable {
        let mut rng = stream_rng(seed, index);
        let terms = rng.random_range(1..=4);
        out.push(random_separable_with(terms, &mut rng)?);
        index += 1;
    }
    for _ in 0..counts.adversarial {
        let mut rng = stream_rng(seed, index);
        let p_ad = rng.random::<f64>();
        out.push(adversarial_state(p_ad, random_pair(&mut rng))?);
        index += 1;
    }
    Ok(out)
}

/// Every entangled Werner state in `states` followed by its adversarial twin
/// (same weight, same basis pair); the twins share computational-basis statistics.
pub fn mimic_pairs(states: &[LabeledState]) -> Result<Vec<LabeledState>> {
    let mut out = Vec::new();
    for s in states {
        if let StateParams::Werner { p_b, bell } = s.params {
            if s.label == Label::Entangled {
                out.push(s.clone());
                out.push(adversarial_state(p_b, bell.pair)?);
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(states: &[LabeledState], mut w: W) -> Result<()> {
    for s in states {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads JSON lines and re-checks every label.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<LabeledState>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: LabeledState =
            serde_json::from_str(&line).map_err(|e| HqrnError::Data(format!("line {}: {e}", n + 1)))?;
        s.check_label()?;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z_stats(s: &LabeledState) -> Vec<f64> {
        s.state.measure_z().into_vec()
    }

    #[test]
    fn werner_examples() {
        let bell = BellSpec::new(BellPair::Even, 0.0).unwrap();
        let mixed = werner_state(0.0, bell).unwrap();
        assert_eq!(mixed.label, Label::Separable);
        assert!(mixed.state.matrix().max_abs_diff(&ComplexMatrix::identity(4).scale(0.25)) < 1e-15);

        let pure = werner_state(1.0, bell).unwrap();
        assert_eq!(pure.label, Label::Entangled);
        assert_eq!(z_stats(&pure), vec![0.5, 0.0, 0.0, 0.5]);

        let boundary = werner_state(1.0 / 3.0, bell).unwrap();
        assert_eq!(boundary.label, Label::Separable);
        assert!(werner_state(1.5, bell).is_err());
        assert!(werner_state(-0.1, bell).is_err());
    }

    #[test]
    fn bell_projector_matches_state_vector() {
        for pair in [BellPair::Even, BellPair::Odd] {
            let b = BellSpec::new(pair, 1.3).unwrap();
            let v = b.state_vector();
            let outer = ComplexMatrix::outer(&v, &v);
            assert!(outer.max_abs_diff(&b.projector()) < 1e-15);
        }
        assert!(BellSpec::new(BellPair::Even, 2.0 * PI).is_err());
    }

    #[test]
    fn werner_label_flips_at_one_third() {
        for pair in [BellPair::Even, BellPair::Odd] {
            let bell = BellSpec::new(pair, 0.7).unwrap();
            let above = werner_state(1.0 / 3.0 + 1e-6, bell).unwrap();
            let below = werner_state(1.0 / 3.0 - 1e-6, bell).unwrap();
            assert!(ppt_is_entangled(&above.state).unwrap());
            assert!(!ppt_is_entangled(&below.state).unwrap());
        }
    }

    #[test]
    fn ppt_examples() {
        let bell = BellSpec::new(BellPair::Even, 0.0).unwrap();
        let pure = DensityMatrix::pure(&bell.state_vector()).unwrap();
        assert!(ppt_is_entangled(&pure).unwrap());
        assert!((ppt_min_eigenvalue(&pure).unwrap() + 0.5).abs() < 1e-12);
        assert!(!ppt_is_entangled(&DensityMatrix::maximally_mixed(4)).unwrap());
        assert!(werner_state(0.4, bell).unwrap().label == Label::Entangled);
        assert!(werner_state(0.3, bell).unwrap().label == Label::Separable);
        assert!(ppt_is_entangled(&DensityMatrix::maximally_mixed(2)).is_err());
    }

    #[test]
    fn werner_partial_transpose_spectrum() {
        // eigenvalues (1 + p)/4 three times and (1 - 3p)/4 once
        for p in [0.0, 0.2, 0.5, 0.9] {
            let w = werner_state(p, BellSpec::new(BellPair::Odd, 2.1).unwrap()).unwrap();
            let min = ppt_min_eigenvalue(&w.state).unwrap();
            assert!((min - (1.0 - 3.0 * p) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adversarial_examples() {
        for (pair, want) in [(BellPair::Even, [0.5, 0.0, 0.0, 0.5]), (BellPair::Odd, [0.0, 0.5, 0.5, 0.0])] {
            let s = adversarial_state(1.0, pair).unwrap();
            assert_eq!(s.label, Label::Separable);
            assert!(!ppt_is_entangled(&s.state).unwrap());
            let target = werner_state(1.0, BellSpec::new(pair, 0.9).unwrap()).unwrap();
            for ((a, b), c) in z_stats(&s).iter().zip(z_stats(&target)).zip(want) {
                assert!((a - b).abs() < 1e-12);
                assert_eq!(*a, c);
            }
        }
        let zero = adversarial_state(0.0, BellPair::Even).unwrap();
        assert!(zero.state.matrix().max_abs_diff(&ComplexMatrix::identity(4).scale(0.25)) < 1e-15);
        assert!(adversarial_state(1.1, BellPair::Even).is_err());
    }

    #[test]
    fn twins_share_statistics_exactly() {
        let data = build_dataset(
            DatasetCounts {
                werner: 40,
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let pairs = mimic_pairs(&data).unwrap();
        assert!(!pairs.is_empty());
        for twin in pairs.chunks(2) {
            assert_eq!(twin[0].label, Label::Entangled);
            assert_eq!(twin[1].label, Label::Separable);
            assert_eq!(z_stats(&twin[0]), z_stats(&twin[1]));
        }
    }

    #[test]
    fn pure_product_from_single_term() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = QubitFactor::pure([Complex::new(h, 0.0), Complex::new(h, 0.0)]);
        let zero = QubitFactor::pure([Complex::new(1.0, 0.0), Complex::new(0.0, 0.0)]);
        let s = separable_mixture(vec![ProductTerm {
            weight: 1.0,
            a: plus,
            b: zero,
        }])
        .unwrap();
        assert_eq!(s.label, Label::Separable);
        // pure: tr ρ² = 1
        let purity = s.state.matrix().matmul(s.state.matrix()).trace().re;
        assert!((purity - 1.0).abs() < 1e-12);
        assert!(random_separable(0, 1).is_err());
    }

    #[test]
    fn single_term_random_separable_is_a_product() {
        let s = random_separable(1, 17).unwrap();
        let StateParams::RandomSeparable { terms } = &s.params else {
            panic!("wrong params")
        };
        assert_eq!(terms.len(), 1);
        let want = kron(&terms[0].a.matrix(), &terms[0].b.matrix());
        assert!(s.state.matrix().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn empty_and_sized_datasets() {
        assert!(build_dataset(DatasetCounts::default(), 1).unwrap().is_empty());
        let counts = DatasetCounts {
            werner: 350,
            random_separable: 300,
            adversarial: 650,
        };
        let d = build_dataset(counts, 9).unwrap();
        assert_eq!(d.len(), 1300);
        for s in &d {
            assert_eq!(Label::from_entangled(ppt_is_entangled(&s.state).unwrap()), s.label);
            assert!((s.state.matrix().trace().re - 1.0).abs() < 1e-12);
            assert!(s.state.spectrum()[0] > -1e-10);
        }
        assert_eq!(d.iter().filter(|s| s.family == Family::Adversarial).count(), 650);
    }

    #[test]
    fn dataset_is_reproducible() {
        let counts = DatasetCounts {
            werner: 5,
            random_separable: 5,
            adversarial: 5,
        };
        assert_eq!(build_dataset(counts, 4).unwrap(), build_dataset(counts, 4).unwrap());
        assert_ne!(build_dataset(counts, 4).unwrap(), build_dataset(counts, 5).unwrap());
    }

    #[test]
    fn jsonl_round_trip() {
        let counts = DatasetCounts {
            werner: 3,
            random_separable: 3,
            adversarial: 3,
        };
        let d = build_dataset(counts, 2).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 9);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["family"], "werner");
        assert!(first["label"] == 1 || first["label"] == -1);
        assert_eq!(first["params"]["kind"], "werner");
        assert_eq!(read_jsonl(&buf[..]).unwrap(), d);

        // a flipped label is caught on load
        let werner = text.lines().next().unwrap();
        let flipped = if werner.contains("\"label\":1") {
            werner.replace("\"label\":1", "\"label\":-1")
        } else {
            werner.replace("\"label\":-1", "\"label\":1")
        };
        assert!(read_jsonl(flipped.as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn random_separable_states_pass_ppt(seed in any::<u64>(), terms in 1usize..5) {
            let s = random_separable(terms, seed).unwrap();
            prop_assert!(!ppt_is_entangled(&s.state).unwrap());
            prop_assert!((s.state.matrix().trace().re - 1.0).abs() < 1e-12);
            prop_assert!(s.state.spectrum()[0] > -1e-10);
        }

        #[test]
        fn adversarial_states_pass_ppt(p in 0.0f64..=1.0, odd in any::<bool>()) {
            let pair = if odd { BellPair::Odd } else { BellPair::Even };
            let s = adversarial_state(p, pair).unwrap();
            prop_assert!(!ppt_is_entangled(&s.state).unwrap());
        }
    }
}
