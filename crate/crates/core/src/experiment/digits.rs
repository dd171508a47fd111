//! Digit recognition: classical cascade training and its quantum counterpart.
//!
//! The classical network is trained with per-epoch checkpoints. At scheduled
//! epochs the residual blocks are reconstructed as QRBs and the hybrid
//! network is evaluated at every configured shot count against both the
//! labels and the classical predictions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{default_compilation, derive_seed, write_csv, write_json, HybridModel};
use crate::blocks::ActivationKind;
use crate::error::{HqrnError, Result};
use crate::mnist::ingest_mnist;
use crate::reconstruct::{Compilation, ReconstructionReport};
use crate::sampling::{confusion_decomposition, disagreement_rate, stream_rng, ShotConfig, Shots, RNG_ALGORITHM};
use crate::training::{
    preprocess_image, train_crb_cascade, CascadeArch, CascadeModel, EpochMetrics, Example, LossKind, OptimizerConfig,
};
use crate::CrbParams;

const DATA_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const SHOT_STREAM: u64 = 4;

fn default_limit() -> Option<usize> {
    Some(1000)
}
fn default_classes() -> usize {
    2
}
fn default_input_dim() -> usize {
    4
}
fn default_train() -> usize {
    200
}
fn default_test() -> usize {
    100
}
fn default_noise() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DigitsData {
    /// IDX files; the first `*_limit` records are used (`null` for all).
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default = "default_limit")]
        train_limit: Option<usize>,
        #[serde(default = "default_limit")]
        test_limit: Option<usize>,
    },
    /// Noisy one-hot blobs on the simplex, one peak per class.
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_input_dim")]
        input_dim: usize,
        #[serde(default = "default_train")]
        train: usize,
        #[serde(default = "default_test")]
        test: usize,
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

impl DigitsData {
    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        if let DigitsData::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } = self
        {
            for p in [train_images, train_labels, test_images, test_labels] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            DigitsData::Mnist {
                train_limit, test_limit, ..
            } => {
                if *train_limit == Some(0) || *test_limit == Some(0) {
                    return Err(HqrnError::Config("MNIST limits must be positive".into()));
                }
            }
            DigitsData::Synthetic {
                classes,
                input_dim,
                train,
                noise,
                ..
            } => {
                if *classes < 2 || classes > input_dim {
                    return Err(HqrnError::Config(format!(
                        "synthetic data needs 2 <= classes <= input_dim, got {classes} and {input_dim}"
                    )));
                }
                if *train == 0 {
                    return Err(HqrnError::Config("synthetic train size must be positive".into()));
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(HqrnError::Config("synthetic noise must be nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    fn classes(&self) -> usize {
        match self {
            DigitsData::Mnist { .. } => 10,
            DigitsData::Synthetic { classes, .. } => *classes,
        }
    }
}

fn default_hidden() -> usize {
    64
}
fn default_blocks() -> usize {
    10
}
fn default_alpha() -> f64 {
    0.5
}
fn default_optimizer() -> OptimizerConfig {
    OptimizerConfig::rmsprop(50, 32)
}
fn default_shots() -> Vec<Shots> {
    vec![Shots::Finite(1_000), Shots::Finite(1_000_000), Shots::Infinite]
}
fn one() -> usize {
    1
}
fn default_hqrn_every() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DigitsConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub data: DigitsData,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_blocks")]
    pub num_blocks: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub activation: ActivationKind,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_compilation")]
    pub compilation: Compilation,
    /// Shot counts at which the hybrid network is evaluated; empty for a classical-only run.
    #[serde(default = "default_shots")]
    pub shots: Vec<Shots>,
    /// Independent sampling repetitions per shot count.
    #[serde(default = "one")]
    pub shot_repeats: usize,
    /// Epoch interval of hybrid evaluations; the last epoch is always evaluated.
    #[serde(default = "default_hqrn_every")]
    pub hqrn_every: usize,
    #[serde(default = "one")]
    pub checkpoint_every: usize,
}

impl DigitsConfig {
    /// Desk-scale run on the given IDX files.
    pub fn mnist(train_images: PathBuf, train_labels: PathBuf, test_images: PathBuf, test_labels: PathBuf) -> Self {
        Self::with_data(DigitsData::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit: default_limit(),
            test_limit: default_limit(),
        })
    }

    pub fn with_data(data: DigitsData) -> Self {
        Self {
            seed: 0,
            output_dir: None,
            data,
            hidden_dim: default_hidden(),
            num_blocks: default_blocks(),
            alpha: default_alpha(),
            activation: ActivationKind::default(),
            optimizer: default_optimizer(),
            compilation: default_compilation(),
            shots: default_shots(),
            shot_repeats: 1,
            hqrn_every: default_hqrn_every(),
            checkpoint_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.optimizer.validate().map_err(|e| HqrnError::Config(e.to_string()))?;
        if self.hidden_dim < 2 {
            return Err(HqrnError::Config("hidden_dim must be at least 2".into()));
        }
        if !self.shots.is_empty() && !self.hidden_dim.is_power_of_two() {
            return Err(HqrnError::Config(format!(
                "hidden_dim {} must be a power of two for quantum evaluation",
                self.hidden_dim
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HqrnError::Config("alpha must be in (0, 1)".into()));
        }
        if self.shot_repeats == 0 || self.hqrn_every == 0 || self.checkpoint_every == 0 {
            return Err(HqrnError::Config(
                "shot_repeats, hqrn_every and checkpoint_every must be positive".into(),
            ));
        }
        if let Compilation::Trotter(spec) = self.compilation {
            spec.validate().map_err(|e| HqrnError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn arch(&self, input_dim: usize) -> CascadeArch {
        CascadeArch {
            input_dim,
            hidden_dim: self.hidden_dim,
            num_blocks: self.num_blocks,
            outputs: self.data.classes(),
            alpha: self.alpha,
            activation: self.activation,
        }
    }
}

fn to_examples(records: Vec<crate::mnist::Digit>, limit: Option<usize>) -> Result<Vec<Example>> {
    records
        .into_iter()
        .take(limit.unwrap_or(usize::MAX))
        .map(|d| {
            Ok(Example {
                input: preprocess_image(&d.pixels)?.into_vec(),
                class: d.label as usize,
            })
        })
        .collect()
}

fn synthetic(classes: usize, input_dim: usize, n: usize, noise: f64, seed: u64, offset: u64) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let mut rng = stream_rng(seed, offset + i as u64);
            let class = i % classes;
            let mut x: Vec<f64> = (0..input_dim).map(|_| noise * rng.random::<f64>()).collect();
            x[class] += 1.0;
            let total: f64 = x.iter().sum();
            Example {
                input: x.into_iter().map(|v| v / total).collect(),
                class,
            }
        })
        .collect()
}

/// Training and test examples, already preprocessed.
pub fn load_data(data: &DigitsData, seed: u64) -> Result<(Vec<Example>, Vec<Example>)> {
    match data {
        DigitsData::Mnist {
            train_images,
            train_labels,
            test_images,
            test_labels,
            train_limit,
            test_limit,
        } => {
            let train = to_examples(ingest_mnist(train_images, train_labels)?, *train_limit)?;
            let test = to_examples(ingest_mnist(test_images, test_labels)?, *test_limit)?;
            Ok((train, test))
        }
        DigitsData::Synthetic {
            classes,
            input_dim,
            train,
            test,
            noise,
        } => {
            let s = derive_seed(seed, DATA_STREAM);
            Ok((
                synthetic(*classes, *input_dim, *train, *noise, s, 0),
                synthetic(*classes, *input_dim, *test, *noise, s, 1 << 32),
            ))
        }
    }
}

/// One hybrid evaluation at one shot count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotRow {
    pub epoch: usize,
    pub n_shots: String,
    pub repeat: usize,
    pub error_rate: f64,
    pub disagreement: f64,
    pub both_correct: f64,
    pub a_only: f64,
    pub b_only: f64,
    pub both_wrong: f64,
}

fn shots_label(s: Shots) -> String {
    match s {
        Shots::Finite(n) => n.to_string(),
        Shots::Infinite => "infinite".into(),
    }
}

/// Seed of the sampling run for `(epoch, shot index, repeat)`.
pub fn shot_seed(seed: u64, epoch: usize, shot_index: usize, repeat: usize) -> u64 {
    let tag = ((epoch as u64) << 40) | ((shot_index as u64) << 20) | repeat as u64;
    derive_seed(derive_seed(seed, SHOT_STREAM), tag)
}

/// Evaluates the hybrid network on `test` at every shot setting.
///
/// `a` in the confusion columns is the classical network, `b` the hybrid one.
pub fn evaluate_hybrid(
    hybrid: &HybridModel,
    test: &[Example],
    classical: &[usize],
    shots: &[Shots],
    repeats: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<ShotRow>> {
    let truth: Vec<usize> = test.iter().map(|e| e.class).collect();
    let mut rows = Vec::new();
    for (si, &s) in shots.iter().enumerate() {
        let reps = if s == Shots::Infinite { 1 } else { repeats };
        for repeat in 0..reps {
            let cfg = ShotConfig {
                shots: s,
                seed: shot_seed(seed, epoch, si, repeat),
            };
            let pred = test
                .iter()
                .enumerate()
                .map(|(i, e)| hybrid.predict(&e.input, LossKind::CrossEntropy, &cfg, i as u64))
                .collect::<Result<Vec<_>>>()?;
            let wrong = pred.iter().zip(&truth).filter(|(p, t)| p != t).count();
            let c = confusion_decomposition(classical, &pred, &truth)?;
            rows.push(ShotRow {
                epoch,
                n_shots: shots_label(s),
                repeat,
                error_rate: wrong as f64 / truth.len() as f64,
                disagreement: disagreement_rate(classical, &pred)?,
                both_correct: c.both_correct,
                a_only: c.a_only,
                b_only: c.b_only,
                both_wrong: c.both_wrong,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct DigitsReport {
    pub task: &'static str,
    pub seed: u64,
    pub rng_algorithm: &'static str,
    pub config: DigitsConfig,
    pub train_size: usize,
    pub test_size: usize,
    pub final_metrics: Option<EpochMetrics>,
    /// Reconstruction of the final blocks; empty for classical-only runs.
    pub reconstruction: Vec<ReconstructionReport>,
    /// Hybrid evaluations at the final epoch.
    pub final_shots: Vec<ShotRow>,
    pub elapsed_seconds: f64,
    #[serde(skip)]
    pub model: Option<CascadeModel>,
    #[serde(skip)]
    pub metrics: Vec<EpochMetrics>,
    #[serde(skip)]
    pub shot_rows: Vec<ShotRow>,
}

pub fn run_digits(cfg: &DigitsConfig, out: &Path) -> Result<DigitsReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (train, test) = load_data(&cfg.data, cfg.seed)?;
    if train.is_empty() || test.is_empty() {
        return Err(HqrnError::Data("empty training or test set".into()));
    }
    let input_dim = train[0].input.len();
    if let Some(e) = train.iter().chain(&test).find(|e| e.class >= cfg.data.classes()) {
        return Err(HqrnError::Data(format!("label {} outside the class range", e.class)));
    }
    log::info!("digits: {} train / {} test items, {input_dim} inputs", train.len(), test.len());

    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    let model = CascadeModel::init(&cfg.arch(input_dim), derive_seed(cfg.seed, INIT_STREAM))?;
    let last = cfg.optimizer.epochs;
    let mut shot_rows = Vec::new();
    let mut reconstruction = Vec::new();
    let outcome = train_crb_cascade(
        model,
        &train,
        &test,
        &cfg.optimizer,
        LossKind::CrossEntropy,
        derive_seed(cfg.seed, SHUFFLE_STREAM),
        |m, model| {
            if m.epoch % cfg.checkpoint_every == 0 || m.epoch == last {
                write_json(&ckpt_dir.join(format!("epoch-{:04}.json", m.epoch)), &model.blocks)?;
            }
            if !cfg.shots.is_empty() && (m.epoch % cfg.hqrn_every == 0 || m.epoch == last) {
                let hybrid = HybridModel::reconstruct(model, cfg.compilation)?;
                let classical = test
                    .iter()
                    .map(|e| model.predict(&e.input, LossKind::CrossEntropy))
                    .collect::<Result<Vec<_>>>()?;
                let rows = evaluate_hybrid(&hybrid, &test, &classical, &cfg.shots, cfg.shot_repeats, cfg.seed, m.epoch)?;
                for r in &rows {
                    log::info!(
                        "epoch {}: shots {} error {:.4} disagreement {:.4}",
                        r.epoch,
                        r.n_shots,
                        r.error_rate,
                        r.disagreement
                    );
                }
                shot_rows.extend(rows);
                if m.epoch == last {
                    write_json(&out.join("reconstructed_blocks.json"), &hybrid.blocks)?;
                    reconstruction = hybrid.reports;
                }
            }
            Ok(())
        },
    )?;
    write_csv(&out.join("metrics.csv"), &outcome.metrics)?;
    if !cfg.shots.is_empty() {
        write_csv(&out.join("shots.csv"), &shot_rows)?;
    }
    write_json(&out.join("model.json"), &outcome.model)?;
    let report = DigitsReport {
        task: "digits",
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM,
        config: cfg.clone(),
        train_size: train.len(),
        test_size: test.len(),
        final_metrics: outcome.metrics.last().copied(),
        reconstruction,
        final_shots: shot_rows.iter().filter(|r| r.epoch == last).cloned().collect(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        model: Some(outcome.model),
        metrics: outcome.metrics,
        shot_rows,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Reads a checkpoint written by [`run_digits`].
pub fn read_checkpoint(path: &Path) -> Result<Vec<CrbParams>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_cfg() -> DigitsConfig {
        let mut cfg = DigitsConfig::with_data(DigitsData::Synthetic {
            classes: 2,
            input_dim: 4,
            train: 60,
            test: 40,
            noise: 0.3,
        });
        cfg.hidden_dim = 4;
        cfg.num_blocks = 3;
        cfg.optimizer = OptimizerConfig {
            learning_rate: 1e-2,
            ..OptimizerConfig::adam(20, 8)
        };
        cfg.shots = vec![Shots::Finite(1000), Shots::Infinite];
        cfg.hqrn_every = 10;
        cfg
    }

    #[test]
    fn synthetic_run_matches_classical_at_infinite_shots() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_digits(&synthetic_cfg(), dir.path()).unwrap();
        let inf = report.final_shots.iter().find(|r| r.n_shots == "infinite").unwrap();
        assert!(inf.disagreement < 0.01);
        assert!(report.final_metrics.unwrap().test_error < 0.1);
        assert_eq!(report.shot_rows.len(), 4);
        assert_eq!(report.reconstruction.len(), 3);
        for f in ["report.json", "metrics.csv", "shots.csv", "model.json", "checkpoints/epoch-0020.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let blocks = read_checkpoint(&dir.path().join("checkpoints/epoch-0007.json")).unwrap();
        assert_eq!(blocks.len(), 3);
    }

    #[test]
    fn empty_shot_list_is_classical_only() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = synthetic_cfg();
        cfg.shots.clear();
        cfg.hidden_dim = 6;
        let report = run_digits(&cfg, dir.path()).unwrap();
        assert!(report.shot_rows.is_empty() && report.reconstruction.is_empty());
        assert!(!dir.path().join("shots.csv").exists());
        assert!(dir.path().join("metrics.csv").exists());
    }

    #[test]
    fn csv_outputs_are_reproducible() {
        let read = |p: &Path| -> String {
            let s = std::fs::read_to_string(p).unwrap();
            assert!(s.starts_with("# generated_at_unix="));
            s.lines().skip(1).collect::<Vec<_>>().join("\n")
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_digits(&synthetic_cfg(), a.path()).unwrap();
        run_digits(&synthetic_cfg(), b.path()).unwrap();
        for f in ["metrics.csv", "shots.csv"] {
            assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)));
        }
        let header = read(&a.path().join("shots.csv"));
        assert!(header.starts_with("epoch,n_shots,repeat,error_rate,disagreement,both_correct,a_only,b_only,both_wrong"));
        assert!(read(&a.path().join("metrics.csv")).starts_with("epoch,loss,train_error,test_error"));
    }

    #[test]
    fn missing_files_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = DigitsConfig::mnist(
            "nope-images".into(),
            "nope-labels".into(),
            "nope-images".into(),
            "nope-labels".into(),
        );
        let err = run_digits(&cfg, dir.path()).unwrap_err();
        assert_eq!(super::super::exit_code(&err), 3);
    }
}
