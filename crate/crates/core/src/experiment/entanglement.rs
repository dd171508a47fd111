//! Entanglement classification with a greedily trained QRB front end.
//!
//! A stack of two-qubit QRBs is trained once to the largest requested depth.
//! For every depth `M` the measured distributions after the first `M` blocks
//! feed a classical residual head trained with weighted binary cross-entropy.
//! The head's blocks are also reconstructed as QRBs and evaluated exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{default_compilation, derive_seed, write_csv, write_json, HybridModel};
use crate::blocks::ActivationKind;
use crate::entangle::{build_dataset, mimic_pairs, write_jsonl, DatasetCounts, Family, LabeledState};
use crate::error::{HqrnError, Result};
use crate::reconstruct::Compilation;
use crate::sampling::{ShotConfig, RNG_ALGORITHM};
use crate::training::greedy::{features, BlockRecord};
use crate::training::{
    contrastive_loss, greedy_train_qrb_stack, train_crb_cascade, CascadeArch, CascadeModel, Example, GreedyConfig,
    LossKind, OptimizerConfig,
};
use crate::{DensityMatrix, QrbParams};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const GREEDY_STREAM: u64 = 3;
const HEAD_INIT_STREAM: u64 = 4;
const HEAD_SHUFFLE_STREAM: u64 = 5;

fn default_train_counts() -> DatasetCounts {
    DatasetCounts {
        werner: 70,
        random_separable: 60,
        adversarial: 130,
    }
}

fn default_test_counts() -> DatasetCounts {
    DatasetCounts {
        werner: 100,
        random_separable: 150,
        adversarial: 250,
    }
}

fn default_depths() -> Vec<usize> {
    (0..=4).collect()
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub alpha: f64,
    pub activation: ActivationKind,
    pub optimizer: OptimizerConfig,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 8,
            num_blocks: 10,
            alpha: 0.5,
            activation: ActivationKind::Relu,
            optimizer: OptimizerConfig::adam(300, 32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntanglementConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_train_counts")]
    pub train_counts: DatasetCounts,
    #[serde(default = "default_test_counts")]
    pub test_counts: DatasetCounts,
    /// QRB depths to evaluate; the stack is trained once to the largest.
    #[serde(default = "default_depths")]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub greedy: GreedyConfig,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default = "default_compilation")]
    pub compilation: Compilation,
    /// Write `train.jsonl` and `test.jsonl`.
    #[serde(default = "yes")]
    pub write_datasets: bool,
}

impl Default for EntanglementConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            train_counts: default_train_counts(),
            test_counts: default_test_counts(),
            depths: default_depths(),
            greedy: GreedyConfig::default(),
            head: HeadConfig::default(),
            compilation: default_compilation(),
            write_datasets: true,
        }
    }
}

impl EntanglementConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: HqrnError| HqrnError::Config(e.to_string());
        if self.depths.is_empty() {
            return Err(HqrnError::Config("depths must not be empty".into()));
        }
        if self.train_counts.total() < 2 || self.test_counts.total() == 0 {
            return Err(HqrnError::Config("dataset counts are too small".into()));
        }
        self.greedy.validate().map_err(cfg_err)?;
        self.head.optimizer.validate().map_err(cfg_err)?;
        if !self.head.hidden_dim.is_power_of_two() || self.head.hidden_dim < 2 {
            return Err(HqrnError::Config("head hidden_dim must be a power of two".into()));
        }
        if !(self.head.alpha > 0.0 && self.head.alpha < 1.0) {
            return Err(HqrnError::Config("head alpha must be in (0, 1)".into()));
        }
        if let Compilation::Trotter(spec) = self.compilation {
            spec.validate().map_err(cfg_err)?;
        }
        Ok(())
    }

    fn head_arch(&self) -> CascadeArch {
        CascadeArch {
            input_dim: 4,
            hidden_dim: self.head.hidden_dim,
            num_blocks: self.head.num_blocks,
            outputs: 1,
            alpha: self.head.alpha,
            activation: self.head.activation,
        }
    }
}

/// Results at one QRB depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    pub depth: usize,
    pub contrastive_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Accuracy on entangled Werner test states and their separable twins.
    pub pair_accuracy: Option<f64>,
    /// Largest feature difference within a twin pair.
    pub pair_feature_gap: Option<f64>,
    pub werner_accuracy: Option<f64>,
    pub random_separable_accuracy: Option<f64>,
    pub adversarial_accuracy: Option<f64>,
    /// Test accuracy with the head's blocks run as reconstructed QRBs.
    pub hybrid_test_accuracy: f64,
    pub hybrid_disagreement: f64,
}

/// Computational-basis distribution of one test state after `depth` blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub item: usize,
    pub family: Family,
    pub label: i8,
    pub depth: usize,
    pub p00: f64,
    pub p01: f64,
    pub p10: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EntanglementReport {
    pub task: &'static str,
    pub seed: u64,
    pub rng_algorithm: &'static str,
    pub config: EntanglementConfig,
    pub train_size: usize,
    pub test_size: usize,
    pub pair_count: usize,
    pub positive_weight: f64,
    pub greedy: Vec<BlockRecord>,
    pub depths: Vec<DepthRow>,
    pub elapsed_seconds: f64,
    #[serde(skip)]
    pub qrb_blocks: Vec<QrbParams>,
}

fn states(v: &[LabeledState]) -> Vec<DensityMatrix> {
    v.iter().map(|s| s.state.clone()).collect()
}

fn examples(feats: Vec<Vec<f64>>, v: &[LabeledState]) -> Vec<Example> {
    feats
        .into_iter()
        .zip(v)
        .map(|(input, s)| Example {
            input,
            class: s.label.class(),
        })
        .collect()
}

fn accuracy(pred: &[usize], data: &[Example], keep: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut right, mut total) = (0usize, 0usize);
    for (i, (p, e)) in pred.iter().zip(data).enumerate() {
        if keep(i) {
            total += 1;
            right += usize::from(*p == e.class);
        }
    }
    (total > 0).then(|| right as f64 / total as f64)
}

pub fn run_entanglement(cfg: &EntanglementConfig, out: &Path) -> Result<EntanglementReport> {
    cfg.validate()?;
    let start = Instant::now();
    let train = build_dataset(cfg.train_counts, derive_seed(cfg.seed, TRAIN_STREAM))?;
    let test = build_dataset(cfg.test_counts, derive_seed(cfg.seed, TEST_STREAM))?;
    let pairs = mimic_pairs(&test)?;
    if cfg.write_datasets {
        write_jsonl(&train, std::io::BufWriter::new(std::fs::File::create(out.join("train.jsonl"))?))?;
        write_jsonl(&test, std::io::BufWriter::new(std::fs::File::create(out.join("test.jsonl"))?))?;
    }
    let classes: Vec<usize> = train.iter().map(|s| s.label.class()).collect();
    let loss = LossKind::weighted_bce_for(&classes)?;
    let LossKind::WeightedBce { positive_weight } = loss else {
        unreachable!("weighted_bce_for returns the weighted loss")
    };

    let max_depth = cfg.depths.iter().copied().max().unwrap_or(0);
    let greedy = greedy_train_qrb_stack(&train, max_depth, &cfg.greedy, derive_seed(cfg.seed, GREEDY_STREAM))?;
    write_json(&out.join("qrb_blocks.json"), &greedy.blocks)?;

    let (train_st, test_st, pair_st) = (states(&train), states(&test), states(&pairs));
    let kind = cfg.greedy.activation;
    let heads_dir = out.join("heads");
    std::fs::create_dir_all(&heads_dir)?;
    let mut rows = Vec::with_capacity(cfg.depths.len());
    for &m in &cfg.depths {
        let blocks = &greedy.blocks[..m];
        let tr = examples(features(&train_st, blocks, kind)?, &train);
        let te = examples(features(&test_st, blocks, kind)?, &test);
        let pe = examples(features(&pair_st, blocks, kind)?, &pairs);
        let points: Vec<&[f64]> = tr.iter().map(|e| e.input.as_slice()).collect();
        let lq = contrastive_loss(&points, &classes, &cfg.greedy.loss)?.total;

        let model = CascadeModel::init(&cfg.head_arch(), derive_seed(cfg.seed, HEAD_INIT_STREAM))?;
        let outcome = train_crb_cascade(
            model,
            &tr,
            &te,
            &cfg.head.optimizer,
            loss,
            derive_seed(cfg.seed, HEAD_SHUFFLE_STREAM),
            |_, _| Ok(()),
        )?;
        let head = outcome.model;
        write_json(&heads_dir.join(format!("depth-{m}.json")), &head)?;
        let predict = |d: &[Example]| d.iter().map(|e| head.predict(&e.input, loss)).collect::<Result<Vec<_>>>();
        let (p_tr, p_te, p_pe) = (predict(&tr)?, predict(&te)?, predict(&pe)?);

        let hybrid = HybridModel::reconstruct(&head, cfg.compilation)?;
        let exact = ShotConfig::infinite();
        let p_hy = te
            .iter()
            .enumerate()
            .map(|(i, e)| hybrid.predict(&e.input, loss, &exact, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let differ = p_hy.iter().zip(&p_te).filter(|(a, b)| a != b).count();

        let pair_gap = pe
            .chunks(2)
            .map(|w| w[0].input.iter().zip(&w[1].input).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));
        let family = |f: Family| accuracy(&p_te, &te, |i| test[i].family == f);
        let row = DepthRow {
            depth: m,
            contrastive_loss: lq,
            train_accuracy: accuracy(&p_tr, &tr, |_| true).unwrap_or(0.0),
            test_accuracy: accuracy(&p_te, &te, |_| true).unwrap_or(0.0),
            pair_accuracy: accuracy(&p_pe, &pe, |_| true),
            pair_feature_gap: pair_gap,
            werner_accuracy: family(Family::Werner),
            random_separable_accuracy: family(Family::RandomSeparable),
            adversarial_accuracy: family(Family::Adversarial),
            hybrid_test_accuracy: accuracy(&p_hy, &te, |_| true).unwrap_or(0.0),
            hybrid_disagreement: differ as f64 / te.len() as f64,
        };
        log::info!(
            "depth {m}: test accuracy {:.3}, pair accuracy {:?}",
            row.test_accuracy,
            row.pair_accuracy
        );
        rows.push(row);
    }

    let mut traj = Vec::with_capacity(test.len() * (max_depth + 1));
    for (item, s) in test.iter().enumerate() {
        let mut rho = vec![s.state.clone()];
        for depth in 0..=max_depth {
            if depth > 0 {
                rho = crate::training::greedy::propagate(&rho, &greedy.blocks[depth - 1..depth], kind)?;
            }
            let p = rho[0].measure_z().into_vec();
            traj.push(TrajectoryRow {
                item,
                family: s.family,
                label: s.label.sign(),
                depth,
                p00: p[0],
                p01: p[1],
                p10: p[2],
            });
        }
    }
    write_csv(&out.join("metrics.csv"), &rows)?;
    write_csv(&out.join("trajectories.csv"), &traj)?;
    let report = EntanglementReport {
        task: "entanglement",
        seed: cfg.seed,
        rng_algorithm: RNG_ALGORITHM,
        config: cfg.clone(),
        train_size: train.len(),
        test_size: test.len(),
        pair_count: pairs.len() / 2,
        positive_weight,
        greedy: greedy.records,
        depths: rows,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        qrb_blocks: greedy.blocks,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
