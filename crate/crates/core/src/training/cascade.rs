//! Classical residual cascades with analytic gradients.
//!
//! The network is `x ↦ F(Px + c)` followed by residual blocks and a linear
//! head. Gradients come from a hand-written reverse pass over cached
//! activations; [`CascadeModel::scores`] evaluates the same function through
//! the block module's forward code and serves as the reference path.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::blocks::{crb_forward, normalized_activation, ActivationKind, DEGENERATE_MASS};
use crate::error::{HqrnError, Result};
use crate::sampling::stream_rng;
use crate::{CrbParams, RealMatrix, SimplexVector};

/// Stream index reserved for parameter initialization.
const INIT_STREAM: u64 = u64::MAX;

/// Affine map `x ↦ Wx + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linear {
    pub weight: RealMatrix,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(weight: RealMatrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(HqrnError::DimensionMismatch {
                expected: weight.rows(),
                actual: bias.len(),
            });
        }
        Ok(Self { weight, bias })
    }

    fn random<R: Rng + ?Sized>(outputs: usize, inputs: usize, rng: &mut R) -> Self {
        let s = 1.0 / (inputs as f64).sqrt();
        let weight = RealMatrix::from_fn(outputs, inputs, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        Self {
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(HqrnError::DimensionMismatch {
                expected: self.inputs(),
                actual: x.len(),
            });
        }
        let mut out = self.weight.matvec(x);
        for (o, b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
        Ok(out)
    }
}

/// Label and raw scores of a linear head; ties go to the lowest index.
pub fn classify(y: &[f64], head: &Linear) -> Result<(usize, Vec<f64>)> {
    let scores = head.apply(y)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeArch {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub outputs: usize,
    pub alpha: f64,
    #[serde(default)]
    pub activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeModel {
    pub projection: Linear,
    pub blocks: Vec<CrbParams>,
    pub head: Linear,
    pub activation: ActivationKind,
    /// Inputs are multiplied by this before the projection.
    pub input_scale: f64,
    /// Block outputs are multiplied by this before the head.
    pub feature_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossKind {
    CrossEntropy,
    /// Single logit; class 1 is the positive class and its term is scaled by `positive_weight`.
    WeightedBce { positive_weight: f64 },
}

impl LossKind {
    /// `w_p = N_negative / N_positive` over `classes`.
    pub fn weighted_bce_for(classes: &[usize]) -> Result<Self> {
        let pos = classes.iter().filter(|&&c| c == 1).count();
        let neg = classes.len() - pos;
        if pos == 0 {
            return Err(HqrnError::Training("no positive examples for weighted BCE".into()));
        }
        Ok(LossKind::WeightedBce {
            positive_weight: neg as f64 / pos as f64,
        })
    }
}

/// One training or evaluation item.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub class: usize,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Loss of one example and its derivative with respect to the scores.
fn loss_and_score_grad(scores: &[f64], class: usize, loss: LossKind) -> (f64, Vec<f64>) {
    match loss {
        LossKind::CrossEntropy => {
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            let value = -(scores[class] - max - total.ln());
            let grad = exps
                .iter()
                .enumerate()
                .map(|(i, e)| e / total - if i == class { 1.0 } else { 0.0 })
                .collect();
            (value, grad)
        }
        LossKind::WeightedBce { positive_weight } => {
            let s = scores[0];
            if class == 1 {
                (positive_weight * softplus(-s), vec![positive_weight * (sigmoid(s) - 1.0)])
            } else {
                (softplus(s), vec![sigmoid(s)])
            }
        }
    }
}

/// Gradient of `F` pulled back through `z`: `∂L/∂z_j = f'(z_j)(g_j - g·F)/Σf`.
fn normalized_activation_backward(z: &[f64], out: &[f64], g: &[f64], kind: ActivationKind) -> Vec<f64> {
    let total: f64 = z.iter().map(|&v| kind.apply(v)).sum();
    if !(total >= DEGENERATE_MASS) {
        return vec![0.0; z.len()];
    }
    let dot: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
    z.iter()
        .zip(g)
        .map(|(&zj, &gj)| kind.derivative(zj) * (gj - dot) / total)
        .collect()
}

fn add_outer(target: &mut [f64], cols: usize, left: &[f64], right: &[f64]) {
    for (r, &l) in left.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let row = &mut target[r * cols..(r + 1) * cols];
        for (t, &x) in row.iter_mut().zip(right) {
            *t += l * x;
        }
    }
}

fn transpose_matvec(w: &RealMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        for (o, &x) in out.iter_mut().zip(w.row(r)) {
            *o += vr * x;
        }
    }
    out
}

impl CascadeModel {
    pub fn init(arch: &CascadeArch, seed: u64) -> Result<Self> {
        if arch.input_dim == 0 || arch.hidden_dim == 0 || arch.outputs == 0 {
            return Err(HqrnError::InvalidParameter("cascade dimensions must be positive".into()));
        }
        let mut rng = stream_rng(seed, INIT_STREAM);
        let projection = Linear::random(arch.hidden_dim, arch.input_dim, &mut rng);
        let blocks = (0..arch.num_blocks)
            .map(|_| {
                let l = Linear::random(arch.hidden_dim, arch.hidden_dim, &mut rng);
                CrbParams::new(l.weight, l.bias, arch.alpha)
            })
            .collect::<Result<_>>()?;
        let head = Linear::random(arch.outputs, arch.hidden_dim, &mut rng);
        Ok(Self {
            projection,
            blocks,
            head,
            activation: arch.activation,
            input_scale: arch.input_dim as f64,
            feature_scale: arch.hidden_dim as f64,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.outputs()
    }

    /// Input projected onto the hidden simplex.
    pub fn embed(&self, x: &[f64]) -> Result<SimplexVector> {
        let scaled: Vec<f64> = x.iter().map(|v| v * self.input_scale).collect();
        Ok(normalized_activation(&self.projection.apply(&scaled)?, self.activation))
    }

    /// Output of the last residual block.
    pub fn features(&self, x: &[f64]) -> Result<SimplexVector> {
        let mut y = self.embed(x)?;
        for b in &self.blocks {
            y = crb_forward(&y, b, self.activation)?.0;
        }
        Ok(y)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.head_scores(self.features(x)?.as_slice())
    }

    /// Head applied to a hidden-simplex vector.
    pub fn head_scores(&self, y: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = y.iter().map(|v| v * self.feature_scale).collect();
        self.head.apply(&scaled)
    }

    /// Predicted class from head scores.
    pub fn decide(scores: &[f64], loss: LossKind) -> usize {
        match loss {
            LossKind::CrossEntropy => {
                let mut best = 0;
                for (i, &s) in scores.iter().enumerate() {
                    if s > scores[best] {
                        best = i;
                    }
                }
                best
            }
            LossKind::WeightedBce { .. } => usize::from(sigmoid(scores[0]) > 0.5),
        }
    }

    pub fn predict(&self, x: &[f64], loss: LossKind) -> Result<usize> {
        Ok(Self::decide(&self.scores(x)?, loss))
    }

    pub fn num_params(&self) -> usize {
        let lin = |l: &Linear| l.weight.as_slice().len() + l.bias.len();
        lin(&self.projection)
            + lin(&self.head)
            + self
                .blocks
                .iter()
                .map(|b| b.weight().as_slice().len() + b.bias().len())
                .sum::<usize>()
    }

    /// Parameters in the order projection, blocks, head; weights row-major then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(self.projection.weight.as_slice());
        out.extend_from_slice(&self.projection.bias);
        for b in &self.blocks {
            out.extend_from_slice(b.weight().as_slice());
            out.extend_from_slice(b.bias());
        }
        out.extend_from_slice(self.head.weight.as_slice());
        out.extend_from_slice(&self.head.bias);
        out
    }

    pub fn set_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(HqrnError::DimensionMismatch {
                expected: self.num_params(),
                actual: p.len(),
            });
        }
        let mut rest = p;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(self.projection.weight.as_mut_slice());
        take(&mut self.projection.bias);
        for b in &mut self.blocks {
            take(b.weight_mut().as_mut_slice());
            take(b.bias_mut());
        }
        take(self.head.weight.as_mut_slice());
        take(&mut self.head.bias);
        Ok(())
    }

    fn check_example(&self, e: &Example, loss: LossKind) -> Result<()> {
        let classes = match loss {
            LossKind::CrossEntropy => self.head.outputs(),
            LossKind::WeightedBce { .. } => {
                if self.head.outputs() != 1 {
                    return Err(HqrnError::InvalidParameter("weighted BCE needs a single-logit head".into()));
                }
                2
            }
        };
        if e.class >= classes {
            return Err(HqrnError::InvalidParameter(format!(
                "class {} outside head range {classes}",
                e.class
            )));
        }
        Ok(())
    }

    /// Mean loss over `batch` and its flat gradient, by reverse-mode differentiation.
    pub fn loss_and_gradient(&self, batch: &[Example], loss: LossKind) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(HqrnError::InvalidParameter("empty batch".into()));
        }
        let kind = self.activation;
        let d = self.hidden_dim();
        let n_in = self.projection.inputs();
        let mut grad = vec![0.0; self.num_params()];
        let mut total = 0.0;

        // offsets into the flat vector
        let proj_w = 0;
        let proj_b = proj_w + d * n_in;
        let block0 = proj_b + d;
        let block_len = d * d + d;
        let head_w = block0 + self.blocks.len() * block_len;
        let head_b = head_w + self.head.outputs() * d;

        for e in batch {
            self.check_example(e, loss)?;
            let x: Vec<f64> = e.input.iter().map(|v| v * self.input_scale).collect();
            let z0 = self.projection.apply(&x)?;
            let mut ys = vec![normalized_activation(&z0, kind).into_vec()];
            let mut zs = Vec::with_capacity(self.blocks.len());
            let mut hs = Vec::with_capacity(self.blocks.len());
            for b in &self.blocks {
                let y = ys.last().expect("nonempty");
                let mut z = b.weight().matvec(y);
                for (zi, bi) in z.iter_mut().zip(b.bias()) {
                    *zi += bi;
                }
                let h = normalized_activation(&z, kind).into_vec();
                let a = b.alpha();
                let next = h.iter().zip(y).map(|(hn, yn)| (1.0 - a) * hn + a * yn).collect();
                zs.push(z);
                hs.push(h);
                ys.push(next);
            }
            let y_last: Vec<f64> = ys.last().expect("nonempty").iter().map(|v| v * self.feature_scale).collect();
            let scores = self.head.apply(&y_last)?;
            let (value, ds) = loss_and_score_grad(&scores, e.class, loss);
            total += value;

            add_outer(&mut grad[head_w..head_b], d, &ds, &y_last);
            for (g, s) in grad[head_b..].iter_mut().zip(&ds) {
                *g += s;
            }
            let mut g: Vec<f64> = transpose_matvec(&self.head.weight, &ds)
                .into_iter()
                .map(|v| v * self.feature_scale)
                .collect();
            for (k, b) in self.blocks.iter().enumerate().rev() {
                let a = b.alpha();
                let gh: Vec<f64> = g.iter().map(|v| (1.0 - a) * v).collect();
                let dz = normalized_activation_backward(&zs[k], &hs[k], &gh, kind);
                let off = block0 + k * block_len;
                add_outer(&mut grad[off..off + d * d], d, &dz, &ys[k]);
                for (gb, v) in grad[off + d * d..off + block_len].iter_mut().zip(&dz) {
                    *gb += v;
                }
                let back = transpose_matvec(b.weight(), &dz);
                g = g.iter().zip(&back).map(|(gi, bi)| a * gi + bi).collect();
            }
            let dz0 = normalized_activation_backward(&z0, &ys[0], &g, kind);
            add_outer(&mut grad[proj_w..proj_b], n_in, &dz0, &x);
            for (gb, v) in grad[proj_b..block0].iter_mut().zip(&dz0) {
                *gb += v;
            }
        }
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((total / n, grad))
    }

    /// Mean loss through the reference forward path.
    pub fn dataset_loss(&self, data: &[Example], loss: LossKind) -> Result<f64> {
        if data.is_empty() {
            return Err(HqrnError::InvalidParameter("empty dataset".into()));
        }
        let mut total = 0.0;
        for e in data {
            self.check_example(e, loss)?;
            total += loss_and_score_grad(&self.scores(&e.input)?, e.class, loss).0;
        }
        Ok(total / data.len() as f64)
    }

    /// Fraction of misclassified items.
    pub fn error_rate(&self, data: &[Example], loss: LossKind) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut wrong = 0usize;
        for e in data {
            if self.predict(&e.input, loss)? != e.class {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / data.len() as f64)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Rmsprop,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl OptimizerConfig {
    pub fn rmsprop(epochs: usize, batch_size: usize) -> Self {
        Self {
            algorithm: Algorithm::Rmsprop,
            learning_rate: 3e-3,
            weight_decay: 1e-4,
            epochs,
            batch_size,
        }
    }

    pub fn adam(epochs: usize, batch_size: usize) -> Self {
        Self {
            algorithm: Algorithm::Adam,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            epochs,
            batch_size,
        }
    }

    /// A zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(HqrnError::InvalidParameter(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(HqrnError::InvalidParameter("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(HqrnError::InvalidParameter("batch_size must be positive".into()));
        }
        Ok(())
    }
}

const RMS_DECAY: f64 = 0.99;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const OPT_EPS: f64 = 1e-8;

/// Moment buffers for the two update rules; weight decay enters as `g + λθ`.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Self {
        Self {
            cfg,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.steps += 1;
        let lr = self.cfg.learning_rate;
        let wd = self.cfg.weight_decay;
        match self.cfg.algorithm {
            Algorithm::Rmsprop => {
                for ((p, &g), v) in params.iter_mut().zip(grad).zip(&mut self.second) {
                    let g = g + wd * *p;
                    *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * g * g;
                    *p -= lr * g / (v.sqrt() + OPT_EPS);
                }
            }
            Algorithm::Adam => {
                let c1 = 1.0 - ADAM_BETA1.powi(self.steps);
                let c2 = 1.0 - ADAM_BETA2.powi(self.steps);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let g = g + wd * *p;
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + OPT_EPS);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_error: f64,
    pub test_error: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub model: CascadeModel,
    pub metrics: Vec<EpochMetrics>,
}

/// Minibatch training; `on_epoch` sees the model after every epoch.
///
/// Batches are reshuffled each epoch from stream `epoch` of `seed`.
pub fn train_crb_cascade(
    mut model: CascadeModel,
    train: &[Example],
    test: &[Example],
    cfg: &OptimizerConfig,
    loss: LossKind,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics, &CascadeModel) -> Result<()>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(HqrnError::Training("empty training set".into()));
    }
    for e in train.iter().chain(test) {
        model.check_example(e, loss)?;
    }
    let mut params = model.flatten();
    let mut opt = Optimizer::new(*cfg, params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut rng = stream_rng(seed, epoch as u64);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train[i].clone()).collect();
            let (value, grad) = model.loss_and_gradient(&batch, loss)?;
            if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(HqrnError::Training(format!(
                    "non-finite loss {value} in epoch {epoch} after {seen} examples"
                )));
            }
            loss_sum += value * batch.len() as f64;
            seen += batch.len();
            opt.step(&mut params, &grad);
            model.set_flat(&params)?;
        }
        let m = EpochMetrics {
            epoch,
            loss: loss_sum / seen as f64,
            train_error: model.error_rate(train, loss)?,
            test_error: model.error_rate(test, loss)?,
        };
        log::debug!(
            "epoch {epoch}: loss {:.4} train {:.3} test {:.3}",
            m.loss,
            m.train_error,
            m.test_error
        );
        on_epoch(&m, &model)?;
        metrics.push(m);
    }
    Ok(TrainingOutcome { model, metrics })
}

/// `x̃ = max(x, 0) / (Σ max(x, 0) + 10⁻²⁰)`; an image without positive mass maps to uniform.
pub fn preprocess_image(pixels: &[f64]) -> Result<SimplexVector> {
    if pixels.is_empty() {
        return Err(HqrnError::InvalidParameter("empty image".into()));
    }
    let clipped: Vec<f64> = pixels.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total == 0.0 {
        log::warn!("all-zero image replaced by the uniform vector");
        return Ok(SimplexVector::uniform(pixels.len()));
    }
    let scale = total + 1e-20;
    SimplexVector::new(clipped.into_iter().map(|x| x / scale).collect())
}
