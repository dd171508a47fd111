//! Experiment runner behind the `hqrn` binary.
//!
//! A run reads one JSON config, writes `report.json`, `metrics.csv` and
//! task-specific CSV files into the output directory, and is deterministic
//! given the config and seed. Every CSV starts with a `#` line carrying the
//! generation time; the remaining bytes depend only on config and seed.

pub mod digits;
pub mod entanglement;
pub mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{HqrnError, Result};
use crate::reconstruct::trotter::TrotterSpec;
use crate::reconstruct::{
    embed_classical_input, extract_classical_output, reconstruct_block, Compilation, ReconstructionReport,
};
use crate::sampling::{cascade_qrb_sampled, stream_rng, ShotConfig};
use crate::training::{CascadeModel, LossKind};
use crate::QrbParams;

pub use digits::{run_digits, DigitsConfig, DigitsData, DigitsReport};
pub use entanglement::{run_entanglement, EntanglementConfig, EntanglementReport};
pub use verify::{run_equivalence_suite, SuiteResult, VerifyConfig, VerifyReport};

/// Output directory used when neither the config nor the command line names one.
pub const DEFAULT_OUTPUT_DIR: &str = "hqrn-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    Digits(DigitsConfig),
    Entanglement(EntanglementConfig),
    EquivalenceSuite(VerifyConfig),
}

/// Task selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Digits,
    Entanglement,
    EquivalenceSuite,
}

impl ExperimentConfig {
    pub fn task(&self) -> Task {
        match self {
            ExperimentConfig::Digits(_) => Task::Digits,
            ExperimentConfig::Entanglement(_) => Task::Entanglement,
            ExperimentConfig::EquivalenceSuite(_) => Task::EquivalenceSuite,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::Digits(c) => c.validate(),
            ExperimentConfig::Entanglement(c) => c.validate(),
            ExperimentConfig::EquivalenceSuite(c) => c.validate(),
        }
    }

    fn common_mut(&mut self) -> (&mut u64, &mut Option<PathBuf>) {
        match self {
            ExperimentConfig::Digits(c) => (&mut c.seed, &mut c.output_dir),
            ExperimentConfig::Entanglement(c) => (&mut c.seed, &mut c.output_dir),
            ExperimentConfig::EquivalenceSuite(c) => (&mut c.seed, &mut c.output_dir),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::Digits(c) => c.seed,
            ExperimentConfig::Entanglement(c) => c.seed,
            ExperimentConfig::EquivalenceSuite(c) => c.seed,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        let dir = match self {
            ExperimentConfig::Digits(c) => &c.output_dir,
            ExperimentConfig::Entanglement(c) => &c.output_dir,
            ExperimentConfig::EquivalenceSuite(c) => &c.output_dir,
        };
        dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Applies `--seed` and `--out`.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        let (s, o) = self.common_mut();
        if let Some(seed) = seed {
            *s = seed;
        }
        if out.is_some() {
            *o = out;
        }
        self
    }

    /// Makes relative data paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let ExperimentConfig::Digits(c) = self {
            c.data.resolve_paths(base);
        }
    }
}

/// Parses and validates a config; relative data paths are taken from the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HqrnError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HqrnError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Report of any task.
#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Report {
    Digits(Box<DigitsReport>),
    Entanglement(Box<EntanglementReport>),
    EquivalenceSuite(Box<VerifyReport>),
}

/// Runs the configured task and writes its artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out)?;
    Ok(match cfg {
        ExperimentConfig::Digits(c) => Report::Digits(Box::new(run_digits(c, &out)?)),
        ExperimentConfig::Entanglement(c) => Report::Entanglement(Box::new(run_entanglement(c, &out)?)),
        ExperimentConfig::EquivalenceSuite(c) => Report::EquivalenceSuite(Box::new(run_equivalence_suite(c, &out)?)),
    })
}

/// Process exit status for an error: 2 for configuration problems, 3 for bad data, 1 otherwise.
pub fn exit_code(err: &HqrnError) -> i32 {
    match err {
        HqrnError::Config(_) | HqrnError::InvalidParameter(_) => 2,
        HqrnError::Idx { .. } | HqrnError::Data(_) | HqrnError::Io(_) => 3,
        _ => 1,
    }
}

/// Independent seed for one purpose of a run.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    stream_rng(seed, purpose).next_u64()
}

pub(crate) fn default_compilation() -> Compilation {
    Compilation::Trotter(TrotterSpec::default())
}

/// A trained cascade whose residual blocks run as reconstructed QRBs.
///
/// The input projection and the head stay classical. The hidden simplex
/// vector is embedded as `diag(y) ⊕ 0` on twice the hidden dimension and
/// read back from the first half of the diagonal.
#[derive(Clone, Debug)]
pub struct HybridModel {
    pub classical: CascadeModel,
    pub blocks: Vec<QrbParams>,
    pub reports: Vec<ReconstructionReport>,
}

impl HybridModel {
    pub fn reconstruct(model: &CascadeModel, compilation: Compilation) -> Result<Self> {
        let mut blocks = Vec::with_capacity(model.blocks.len());
        let mut reports = Vec::with_capacity(model.blocks.len());
        for b in &model.blocks {
            let r = reconstruct_block(b, compilation)?;
            blocks.push(r.qrb);
            reports.push(r.report);
        }
        Ok(Self {
            classical: model.clone(),
            blocks,
            reports,
        })
    }

    /// Hidden vector after the quantum blocks, measured with `cfg.shots` shots per branch.
    pub fn features(&self, x: &[f64], cfg: &ShotConfig, item: u64) -> Result<Vec<f64>> {
        let d = self.classical.hidden_dim();
        let y0 = self.classical.embed(x)?;
        let rho0 = embed_classical_input(&y0, d)?;
        let (rho, _) = cascade_qrb_sampled(&rho0, &self.blocks, self.classical.activation, cfg, item)?;
        Ok(extract_classical_output(&rho, d))
    }

    pub fn predict(&self, x: &[f64], loss: LossKind, cfg: &ShotConfig, item: u64) -> Result<usize> {
        let y = self.features(x, cfg, item)?;
        Ok(CascadeModel::decide(&self.classical.head_scores(&y)?, loss))
    }
}

/// Writes rows as CSV under a `#` timestamp line.
pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    writeln!(file, "# generated_at_unix={stamp}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| HqrnError::Data(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}
