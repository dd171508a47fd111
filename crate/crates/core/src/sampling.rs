//! Finite-shot measurement, copy accounting and agreement metrics.
//!
//! Each QRB estimates `p₊` and `p₋` from `Nₛ` shots apiece. The residual mix
//! stays the exact convex combination `α ρ + (1 - α) diag(h)`; the copies it
//! would consume are still charged to the [`EnsembleLedger`].
//!
//! Randomness comes from ChaCha8 streams: a run seed selects the key and the
//! item index selects the stream, so results do not depend on evaluation order.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::blocks::{block_coefficients, qrb_forward, residual_mix, ActivationKind, QrbOutput};
use crate::error::{HqrnError, Result};
use crate::{DensityMatrix, QrbParams, SimplexVector};

/// Name reported next to every seed.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha)";

/// Generator for `stream` under the run seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shots per measured branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shots {
    Finite(u64),
    Infinite,
}

impl Shots {
    pub fn finite(n: u64) -> Result<Self> {
        if n == 0 {
            return Err(HqrnError::InvalidParameter("shot count must be at least 1".into()));
        }
        Ok(Shots::Finite(n))
    }

    pub fn count(&self) -> Option<u64> {
        match self {
            Shots::Finite(n) => Some(*n),
            Shots::Infinite => None,
        }
    }
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::Finite(n) => write!(f, "{n}"),
            Shots::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShotsRepr {
    Count(u64),
    Label(String),
}

impl Serialize for Shots {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Shots::Finite(n) => ShotsRepr::Count(*n),
            Shots::Infinite => ShotsRepr::Label("infinite".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ShotsRepr::deserialize(d)? {
            ShotsRepr::Count(n) => Shots::finite(n).map_err(serde::de::Error::custom),
            ShotsRepr::Label(s) if s == "infinite" || s == "inf" => Ok(Shots::Infinite),
            ShotsRepr::Label(s) => Err(serde::de::Error::custom(format!(
                "shots must be a positive integer or \"infinite\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    pub shots: Shots,
    pub seed: u64,
}

impl ShotConfig {
    pub fn infinite() -> Self {
        Self {
            shots: Shots::Infinite,
            seed: 0,
        }
    }
}

/// Empirical frequencies of a multinomial draw of `n_shots` outcomes.
pub fn sample_distribution(p: &SimplexVector, n_shots: u64, seed: u64) -> Result<SimplexVector> {
    sample_distribution_with(p, n_shots, &mut stream_rng(seed, 0))
}

/// [`sample_distribution`] drawing from a caller-supplied generator.
///
/// The multinomial is realized as a chain of binomials over the outcomes.
pub fn sample_distribution_with<R: Rng + ?Sized>(p: &SimplexVector, n_shots: u64, rng: &mut R) -> Result<SimplexVector> {
    if n_shots == 0 {
        return Err(HqrnError::InvalidParameter("shot count must be at least 1".into()));
    }
    let probs = p.as_slice();
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = n_shots;
    let mut mass = 1.0f64;
    for (i, &pi) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            counts[i] = remaining;
            break;
        }
        let q = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = if q >= 1.0 {
            remaining
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(remaining, q)
                .map_err(|e| HqrnError::InvalidParameter(e.to_string()))?
                .sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        mass -= pi;
    }
    let n = n_shots as f64;
    Ok(SimplexVector::from_vec_unchecked(
        counts.into_iter().map(|c| c as f64 / n).collect(),
    ))
}

/// Copies consumed by one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCopies {
    /// Copies rotated and measured, `Nₛ` per branch.
    pub measured: u64,
    /// Copies passed through the residual mix.
    pub mixed: u64,
}

impl BlockCopies {
    pub fn for_shots(n_shots: u64) -> Self {
        Self {
            measured: 2 * n_shots,
            mixed: 2 * n_shots,
        }
    }

    pub fn total(&self) -> u64 {
        self.measured + self.mixed
    }
}

/// Copy accounting through a sampled cascade.
///
/// Block `k` draws `2Nₛ + 2Nₛ` copies from the current supply and returns
/// `4Nₛ` copies of its output, so the supply never grows.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleLedger {
    pub per_block: Vec<u64>,
    pub total_initial_copies: u64,
    pub supply: u64,
}

impl EnsembleLedger {
    pub fn new(initial_copies: u64) -> Self {
        Self {
            per_block: Vec::new(),
            total_initial_copies: initial_copies,
            supply: initial_copies,
        }
    }

    /// Charges one block; fails when the supply cannot cover it.
    pub fn record(&mut self, copies: BlockCopies) -> Result<()> {
        let need = copies.total();
        if need > self.supply {
            return Err(HqrnError::InvalidParameter(format!(
                "block needs {need} copies but only {} remain",
                self.supply
            )));
        }
        self.per_block.push(need);
        // the block emits `need` copies of its output; surplus input is left unused
        self.supply = need;
        Ok(())
    }
}

/// Result of a sampled block: the usual outputs plus its copy charge.
#[derive(Clone, Debug)]
pub struct SampledQrbOutput {
    pub output: QrbOutput<f64>,
    /// `None` for infinite shots.
    pub copies: Option<BlockCopies>,
}

/// [`qrb_forward`] with `p±` estimated from `cfg.shots` shots each.
pub fn qrb_forward_sampled(
    rho: &DensityMatrix,
    params: &QrbParams,
    kind: ActivationKind,
    cfg: &ShotConfig,
) -> Result<SampledQrbOutput> {
    qrb_forward_sampled_with(rho, params, kind, cfg.shots, &mut stream_rng(cfg.seed, 0))
}

pub fn qrb_forward_sampled_with<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    params: &QrbParams,
    kind: ActivationKind,
    shots: Shots,
    rng: &mut R,
) -> Result<SampledQrbOutput> {
    let exact = qrb_forward(rho, params, kind)?;
    let n = match shots {
        Shots::Infinite => {
            return Ok(SampledQrbOutput {
                output: exact,
                copies: None,
            })
        }
        Shots::Finite(n) => n,
    };
    let p_plus = sample_distribution_with(&exact.p_plus, n, rng)?;
    let p_minus = sample_distribution_with(&exact.p_minus, n, rng)?;
    let h = block_coefficients(p_plus.as_slice(), p_minus.as_slice(), params, kind);
    let rho_out = residual_mix(rho, &h, params.alpha());
    Ok(SampledQrbOutput {
        output: QrbOutput {
            rho_out,
            h,
            p_plus,
            p_minus,
        },
        copies: Some(BlockCopies::for_shots(n)),
    })
}

/// Sampled cascade for dataset item `item`; returns the final state and the ledger.
pub fn cascade_qrb_sampled(
    rho0: &DensityMatrix,
    blocks: &[QrbParams],
    kind: ActivationKind,
    cfg: &ShotConfig,
    item: u64,
) -> Result<(DensityMatrix, EnsembleLedger)> {
    let mut rng = stream_rng(cfg.seed, item);
    let mut ledger = EnsembleLedger::new(cfg.shots.count().map_or(0, |n| 4 * n));
    let mut rho = rho0.clone();
    for block in blocks {
        let out = qrb_forward_sampled_with(&rho, block, kind, cfg.shots, &mut rng)?;
        if let Some(c) = out.copies {
            ledger.record(c)?;
        }
        rho = out.output.rho_out;
    }
    Ok((rho, ledger))
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(HqrnError::InvalidParameter("label lists are empty".into()));
    }
    if a != b {
        return Err(HqrnError::DimensionMismatch { expected: a, actual: b });
    }
    Ok(())
}

/// Fraction of positions where the two label lists differ.
pub fn disagreement_rate(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    check_lengths(labels_a.len(), labels_b.len())?;
    let differ = labels_a.iter().zip(labels_b).filter(|(a, b)| a != b).count();
    Ok(differ as f64 / labels_a.len() as f64)
}

/// How two classifiers split the items by correctness.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub both_correct: f64,
    pub a_only: f64,
    pub b_only: f64,
    pub both_wrong: f64,
}

pub fn confusion_decomposition(pred_a: &[usize], pred_b: &[usize], truth: &[usize]) -> Result<Confusion> {
    check_lengths(pred_a.len(), pred_b.len())?;
    check_lengths(pred_a.len(), truth.len())?;
    let mut cells = [0usize; 4];
    for ((a, b), t) in pred_a.iter().zip(pred_b).zip(truth) {
        let idx = match (a == t, b == t) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        cells[idx] += 1;
    }
    let n = truth.len() as f64;
    Ok(Confusion {
        both_correct: cells[0] as f64 / n,
        a_only: cells[1] as f64 / n,
        b_only: cells[2] as f64 / n,
        both_wrong: cells[3] as f64 / n,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_lengths(xs.len(), ys.len())?;
    if xs.len() < 2 || xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(HqrnError::InvalidParameter("need at least two positive points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
