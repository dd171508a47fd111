//! Greedy layer-wise training of two-qubit QRB stacks.
//!
//! Block `k` is optimized with blocks `1..k` frozen. Its 35 parameters are
//! `[θ₊ (15), θ₋ (15), b (4), γ]`, the loss is the contrastive loss on the
//! measured output distributions, and gradients are central finite differences.
//! Each block keeps the best of several random restarts.

use std::f64::consts::PI;
use std::thread;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ansatz::{ansatz_unitary, ANSATZ_PARAMS};
use super::contrastive::{contrastive_loss, ContrastiveLossConfig};
use crate::blocks::{qrb_forward, ActivationKind};
use crate::entangle::LabeledState;
use crate::error::{HqrnError, Result};
use crate::sampling::stream_rng;
use crate::{DensityMatrix, QrbParams};

pub const QRB_DIM: usize = 4;
pub const QRB_PARAMS: usize = 2 * ANSATZ_PARAMS + QRB_DIM + 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyConfig {
    pub restarts: usize,
    pub max_steps: usize,
    pub fd_step: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Finite-difference gradients are rescaled to at most this norm.
    pub max_grad_norm: f64,
    pub alpha: f64,
    pub activation: ActivationKind,
    pub loss: ContrastiveLossConfig,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_steps: 200,
            fd_step: 1e-4,
            learning_rate: 0.05,
            momentum: 0.9,
            max_grad_norm: 10.0,
            alpha: 0.5,
            activation: ActivationKind::Relu,
            loss: ContrastiveLossConfig::default(),
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.restarts == 0 {
            return Err(HqrnError::InvalidParameter("restarts must be positive".into()));
        }
        for (name, v) in [
            ("fd_step", self.fd_step),
            ("learning_rate", self.learning_rate),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HqrnError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(HqrnError::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HqrnError::InvalidParameter("alpha must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Builds a block from the flat 35-vector.
pub fn qrb_from_vector(v: &[f64], alpha: f64) -> Result<QrbParams> {
    if v.len() != QRB_PARAMS {
        return Err(HqrnError::DimensionMismatch {
            expected: QRB_PARAMS,
            actual: v.len(),
        });
    }
    let (plus, rest) = v.split_at(ANSATZ_PARAMS);
    let (minus, rest) = rest.split_at(ANSATZ_PARAMS);
    let (bias, gamma) = rest.split_at(QRB_DIM);
    QrbParams::new(
        ansatz_unitary(plus)?,
        ansatz_unitary(minus)?,
        gamma[0],
        bias.to_vec(),
        alpha,
    )
}

/// States after passing through `blocks`.
pub fn propagate(states: &[DensityMatrix], blocks: &[QrbParams], kind: ActivationKind) -> Result<Vec<DensityMatrix>> {
    states
        .iter()
        .map(|s| {
            let mut rho = s.clone();
            for b in blocks {
                rho = qrb_forward(&rho, b, kind)?.rho_out;
            }
            Ok(rho)
        })
        .collect()
}

/// Computational-basis distributions after `blocks`.
pub fn features(states: &[DensityMatrix], blocks: &[QrbParams], kind: ActivationKind) -> Result<Vec<Vec<f64>>> {
    Ok(propagate(states, blocks, kind)?
        .iter()
        .map(|r| r.measure_z().into_vec())
        .collect())
}

/// Contrastive loss after one more block built from `v`.
pub fn block_loss(inputs: &[DensityMatrix], labels: &[usize], v: &[f64], cfg: &GreedyConfig) -> Result<f64> {
    let block = qrb_from_vector(v, cfg.alpha)?;
    let pts = features(inputs, std::slice::from_ref(&block), cfg.activation)?;
    Ok(contrastive_loss(&pts, labels, &cfg.loss)?.total)
}

fn finite_loss(inputs: &[DensityMatrix], labels: &[usize], v: &[f64], cfg: &GreedyConfig) -> Option<f64> {
    block_loss(inputs, labels, v, cfg).ok().filter(|l| l.is_finite())
}

/// Central differences, split over worker threads; each slot is written by one worker.
fn fd_gradient(inputs: &[DensityMatrix], labels: &[usize], v: &[f64], cfg: &GreedyConfig) -> Option<Vec<f64>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(QRB_PARAMS);
    let per = QRB_PARAMS.div_ceil(workers);
    let mut grad = vec![0.0; QRB_PARAMS];
    let ok = thread::scope(|s| {
        let handles: Vec<_> = grad
            .chunks_mut(per)
            .enumerate()
            .map(|(w, chunk)| {
                s.spawn(move || {
                    let mut p = v.to_vec();
                    for (j, g) in chunk.iter_mut().enumerate() {
                        let i = w * per + j;
                        p[i] = v[i] + cfg.fd_step;
                        let up = finite_loss(inputs, labels, &p, cfg)?;
                        p[i] = v[i] - cfg.fd_step;
                        let down = finite_loss(inputs, labels, &p, cfg)?;
                        p[i] = v[i];
                        *g = (up - down) / (2.0 * cfg.fd_step);
                    }
                    Some(())
                })
            })
            .collect();
        handles.into_iter().all(|h| h.join().expect("gradient worker").is_some())
    });
    ok.then_some(grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    /// `None` when the restart hit a non-finite loss and was discarded.
    pub final_loss: Option<f64>,
    /// Loss after every accepted step, starting from the initial point.
    pub accepted: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: usize,
    pub best_restart: usize,
    pub best_loss: f64,
    pub best_vector: Vec<f64>,
    pub restarts: Vec<RestartRecord>,
}

#[derive(Clone, Debug)]
pub struct GreedyOutcome {
    pub blocks: Vec<QrbParams>,
    pub records: Vec<BlockRecord>,
}

fn initial_vector<R: Rng + ?Sized>(rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..2 * ANSATZ_PARAMS).map(|_| rng.random_range(-PI..PI)).collect();
    v.extend((0..QRB_DIM).map(|_| rng.random_range(-0.1..0.1)));
    v.push(rng.random_range(0.5..2.0));
    v
}

/// Momentum descent that only keeps steps that do not raise the loss.
/// A rejected step clears the velocity and halves the step size.
fn run_restart(
    inputs: &[DensityMatrix],
    labels: &[usize],
    start: Vec<f64>,
    cfg: &GreedyConfig,
) -> (RestartRecord, Vec<f64>) {
    let discarded = |accepted| {
        (
            RestartRecord {
                final_loss: None,
                accepted,
            },
            Vec::new(),
        )
    };
    let Some(mut loss) = finite_loss(inputs, labels, &start, cfg) else {
        return discarded(Vec::new());
    };
    let mut theta = start;
    let mut velocity = vec![0.0; QRB_PARAMS];
    let mut lr = cfg.learning_rate;
    let mut accepted = vec![loss];
    for _ in 0..cfg.max_steps {
        let Some(mut g) = fd_gradient(inputs, labels, &theta, cfg) else {
            return discarded(accepted);
        };
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > cfg.max_grad_norm {
            g.iter_mut().for_each(|x| *x *= cfg.max_grad_norm / norm);
        }
        for (v, gi) in velocity.iter_mut().zip(&g) {
            *v = cfg.momentum * *v - lr * gi;
        }
        let cand: Vec<f64> = theta.iter().zip(&velocity).map(|(t, v)| t + v).collect();
        match block_loss(inputs, labels, &cand, cfg) {
            Ok(l) if !l.is_finite() => return discarded(accepted),
            Ok(l) if l <= loss => {
                theta = cand;
                loss = l;
                accepted.push(l);
                lr = (lr * 1.1).min(10.0 * cfg.learning_rate);
            }
            Ok(_) => {
                velocity.iter_mut().for_each(|v| *v = 0.0);
                lr *= 0.5;
            }
            Err(_) => return discarded(accepted),
        }
    }
    (
        RestartRecord {
            final_loss: Some(loss),
            accepted,
        },
        theta,
    )
}

/// Trains `depth` blocks on two-qubit states; labels are the states' classes.
///
/// Restart `r` of block `k` draws its starting point from stream `k·2³² + r` of `seed`.
pub fn greedy_train_qrb_stack(
    train: &[LabeledState],
    depth: usize,
    cfg: &GreedyConfig,
    seed: u64,
) -> Result<GreedyOutcome> {
    cfg.validate()?;
    let mut blocks = Vec::with_capacity(depth);
    let mut records = Vec::with_capacity(depth);
    if depth == 0 {
        return Ok(GreedyOutcome { blocks, records });
    }
    let labels: Vec<usize> = train.iter().map(|s| s.label.class()).collect();
    if train.len() < 2 || labels.iter().all(|&l| l == labels[0]) {
        return Err(HqrnError::Training("greedy training needs both classes".into()));
    }
    let states: Vec<DensityMatrix> = train.iter().map(|s| s.state.clone()).collect();
    if let Some(s) = states.iter().find(|s| s.dim() != QRB_DIM) {
        return Err(HqrnError::DimensionMismatch {
            expected: QRB_DIM,
            actual: s.dim(),
        });
    }
    let mut inputs = states;
    for k in 0..depth {
        let mut restarts = Vec::with_capacity(cfg.restarts);
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for r in 0..cfg.restarts {
            let mut rng = stream_rng(seed, ((k as u64) << 32) | r as u64);
            let (rec, theta) = run_restart(&inputs, &labels, initial_vector(&mut rng), cfg);
            if let Some(l) = rec.final_loss {
                if best.as_ref().is_none_or(|b| l < b.1) {
                    best = Some((r, l, theta));
                }
            } else {
                log::warn!("block {}: restart {r} discarded after a non-finite loss", k + 1);
            }
            restarts.push(rec);
        }
        let Some((best_restart, best_loss, best_vector)) = best else {
            return Err(HqrnError::Training(format!(
                "block {}: all {} restarts diverged",
                k + 1,
                cfg.restarts
            )));
        };
        log::info!("block {}: contrastive loss {best_loss:.4} (restart {best_restart})", k + 1);
        let block = qrb_from_vector(&best_vector, cfg.alpha)?;
        inputs = propagate(&inputs, std::slice::from_ref(&block), cfg.activation)?;
        blocks.push(block);
        records.push(BlockRecord {
            block: k + 1,
            best_restart,
            best_loss,
            best_vector,
            restarts,
        });
    }
    Ok(GreedyOutcome { blocks, records })
}
