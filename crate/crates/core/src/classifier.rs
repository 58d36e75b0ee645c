//! From-scratch MLP solvability classifier.
//!
//! Three fully connected layers with rectifier nonlinearities and dropout on
//! the hidden activations, a single logistic output head, binary cross-entropy
//! loss, and an adaptive-moment optimizer with bias correction and decoupled
//! weight decay. The positive class (target 1) is "unsolvable". Everything is
//! seeded and single-threaded, so training is bit-reproducible.

use std::fs;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::level::OneHotTensor;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("input tensor is {got_rows}x{got_cols}, model expects {rows}x{cols}")]
    DimMismatch { got_rows: usize, got_cols: usize, rows: usize, cols: usize },
    #[error("dataset split contains a single class; both labels are required")]
    SingleClassDataset,
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("model file version {got}, expected {MODEL_VERSION}")]
    VersionMismatch { got: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
}

/// Binary label; `Unsolvable` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solvability {
    Solvable,
    Unsolvable,
}

impl Solvability {
    pub fn target(self) -> f64 {
        match self {
            Solvability::Solvable => 0.0,
            Solvability::Unsolvable => 1.0,
        }
    }

    pub fn from_solvable(solvable: bool) -> Solvability {
        if solvable {
            Solvability::Solvable
        } else {
            Solvability::Unsolvable
        }
    }
}

/// Labeled one-hot tensors with an 80/20 default train/test split.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub items: Vec<(OneHotTensor, Solvability)>,
    pub split_ratio: f64,
}

impl LabeledDataset {
    pub fn new(items: Vec<(OneHotTensor, Solvability)>) -> LabeledDataset {
        LabeledDataset { items, split_ratio: 0.8 }
    }

    /// Deterministic stratified split into (train, test) index lists.
    pub fn stratified_split(&self, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for label in [Solvability::Solvable, Solvability::Unsolvable] {
            let mut idx: Vec<usize> = self
                .items
                .iter()
                .enumerate()
                .filter(|(_, (_, l))| *l == label)
                .map(|(i, _)| i)
                .collect();
            idx.shuffle(&mut rng);
            let n_train = (idx.len() as f64 * self.split_ratio).round() as usize;
            train.extend_from_slice(&idx[..n_train.min(idx.len())]);
            test.extend_from_slice(&idx[n_train.min(idx.len())..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        (train, test)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct DenseLayer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.b[o];
            for (wi, xi) in row.iter().zip(x.iter()) {
                z += wi * xi;
            }
            out.push(z);
        }
    }

    /// y = W^T g, accumulating into `out` (which must be zeroed by the caller).
    pub(crate) fn backward_input(&self, g: &[f64], out: &mut [f64]) {
        for o in 0..self.out_dim {
            let go = g[o];
            if go == 0.0 {
                continue;
            }
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (oi, wi) in out.iter_mut().zip(row.iter()) {
                *oi += wi * go;
            }
        }
    }
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-2, weight_decay: 1e-3, epochs: 10, batch_size: 32, seed: 0 }
    }
}

/// Per-epoch training log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// The three-layer perceptron.
#[derive(Debug, Clone)]
pub struct MlpModel {
    rows: usize,
    cols: usize,
    dims: Vec<usize>,
    dropout: f64,
    pub(crate) layers: Vec<DenseLayer>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    rows: usize,
    cols: usize,
    dims: Vec<usize>,
    dropout: f64,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

pub(crate) struct ForwardTrace {
    /// Pre-activation values per layer; `z[2]` has length 1 (the logit).
    pub(crate) z: Vec<Vec<f64>>,
    /// Hidden activations after rectifier and (in training) dropout.
    pub(crate) a: Vec<Vec<f64>>,
    /// Dropout masks, already scaled by 1/(1-p); empty at inference.
    masks: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Fresh model with seeded uniform fan-in-scaled weights and zero biases.
    pub fn init(rows: usize, cols: usize, hidden1: usize, hidden2: usize, seed: u64) -> MlpModel {
        assert!(rows > 0 && cols > 0 && hidden1 > 0 && hidden2 > 0);
        let input = rows * cols * 4;
        let dims = vec![input, hidden1, hidden2, 1];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for i in 0..3 {
            let (in_dim, out_dim) = (dims[i], dims[i + 1]);
            let scale = 1.0 / (in_dim as f64).sqrt();
            let w: Vec<f64> = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-scale..scale))
                .collect();
            layers.push(DenseLayer { in_dim, out_dim, w, b: vec![0.0; out_dim] });
        }
        MlpModel { rows, cols, dims, dropout: 0.2, layers }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    fn check_dims(&self, t: &OneHotTensor) -> Result<(), ClassifierError> {
        if t.rows() != self.rows || t.cols() != self.cols {
            return Err(ClassifierError::DimMismatch {
                got_rows: t.rows(),
                got_cols: t.cols(),
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    pub(crate) fn forward_trace(&self, x: &[f64], mut dropout_rng: Option<&mut ChaCha12Rng>) -> ForwardTrace {
        let mut z = Vec::with_capacity(3);
        let mut a = Vec::with_capacity(2);
        let mut masks = Vec::new();
        let mut cur: Vec<f64> = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut zi = Vec::new();
            layer.forward(&cur, &mut zi);
            if i < 2 {
                let mut ai: Vec<f64> = zi.iter().map(|v| v.max(0.0)).collect();
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    let keep = 1.0 - self.dropout;
                    let mask: Vec<f64> = ai
                        .iter()
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect();
                    for (av, mv) in ai.iter_mut().zip(mask.iter()) {
                        *av *= mv;
                    }
                    masks.push(mask);
                }
                cur = ai.clone();
                a.push(ai);
            }
            z.push(zi);
        }
        ForwardTrace { z, a, masks }
    }

    /// Pre-squash logit of the "unsolvable" class (inference mode).
    pub(crate) fn logit_raw(&self, x: &[f64]) -> f64 {
        self.forward_trace(x, None).z[2][0]
    }

    pub fn logit(&self, t: &OneHotTensor) -> Result<f64, ClassifierError> {
        self.check_dims(t)?;
        Ok(self.logit_raw(t.data()))
    }

    /// Probability that the level is unsolvable. Dropout is disabled at
    /// inference, so repeated calls agree exactly.
    pub fn forward(&self, t: &OneHotTensor) -> Result<f64, ClassifierError> {
        Ok(sigmoid(self.logit(t)?))
    }

    /// Exact reverse-mode derivative of the pre-squash logit with respect to
    /// every input entry (inference mode, dropout off). Layout matches
    /// [`OneHotTensor::data`].
    pub fn grad_input(&self, t: &OneHotTensor) -> Result<Vec<f64>, ClassifierError> {
        self.check_dims(t)?;
        Ok(self.grad_input_raw(t.data()))
    }

    pub(crate) fn grad_input_raw(&self, x: &[f64]) -> Vec<f64> {
        let trace = self.forward_trace(x, None);
        let mut g = vec![1.0];
        for i in (0..3).rev() {
            let layer = &self.layers[i];
            let mut gin = vec![0.0; layer.in_dim];
            layer.backward_input(&g, &mut gin);
            if i > 0 {
                // rectifier derivative at the pre-activation (0 at the kink)
                for (gi, zi) in gin.iter_mut().zip(trace.z[i - 1].iter()) {
                    if *zi <= 0.0 {
                        *gi = 0.0;
                    }
                }
            }
            g = gin;
        }
        g
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        fs::write(path, self.to_json()).map_err(|e| ClassifierError::CorruptFile(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_VERSION,
            rows: self.rows,
            cols: self.cols,
            dims: self.dims.clone(),
            dropout: self.dropout,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: (0..l.out_dim)
                        .map(|o| l.w[o * l.in_dim..(o + 1) * l.in_dim].to_vec())
                        .collect(),
                    b: l.b.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("model serialize")
    }

    pub fn load(path: &Path) -> Result<MlpModel, ClassifierError> {
        let text = fs::read_to_string(path).map_err(|e| ClassifierError::CorruptFile(e.to_string()))?;
        MlpModel::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<MlpModel, ClassifierError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ClassifierError::CorruptFile(e.to_string()))?;
        let version = raw
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| ClassifierError::CorruptFile("missing version".to_string()))?;
        if version != MODEL_VERSION as u64 {
            return Err(ClassifierError::VersionMismatch { got: version as u32 });
        }
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ClassifierError::CorruptFile(e.to_string()))?;
        if file.dims.len() != 4 || file.layers.len() != 3 || file.dims[0] != file.rows * file.cols * 4 {
            return Err(ClassifierError::CorruptFile("inconsistent dims".to_string()));
        }
        let mut layers = Vec::new();
        for (i, l) in file.layers.iter().enumerate() {
            let (in_dim, out_dim) = (file.dims[i], file.dims[i + 1]);
            if l.w.len() != out_dim || l.b.len() != out_dim || l.w.iter().any(|row| row.len() != in_dim) {
                return Err(ClassifierError::CorruptFile(format!("layer {i} has wrong shape")));
            }
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                w: l.w.iter().flatten().copied().collect(),
                b: l.b.clone(),
            });
        }
        Ok(MlpModel { rows: file.rows, cols: file.cols, dims: file.dims, dropout: file.dropout, layers })
    }

    /// SHA-256 of the serialized model, used to tag attribution dumps.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

/// Trains a copy of `model` on the dataset's train split; returns the trained
/// model and the per-epoch log. Deterministic for a fixed config seed.
pub fn train(
    model: &MlpModel,
    data: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(MlpModel, Vec<EpochStats>), ClassifierError> {
    let (train_idx, test_idx) = data.stratified_split(cfg.seed);
    let has_both = |idx: &[usize]| {
        idx.iter().any(|i| data.items[*i].1 == Solvability::Solvable)
            && idx.iter().any(|i| data.items[*i].1 == Solvability::Unsolvable)
    };
    if train_idx.is_empty() || !has_both(&train_idx) {
        return Err(ClassifierError::SingleClassDataset);
    }
    for (t, _) in &data.items {
        model.check_dims(t)?;
    }

    let mut model = model.clone();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let n_params = |l: &DenseLayer| l.w.len() + l.b.len();
    let mut adam = AdamState {
        m: model.layers.iter().map(|l| vec![0.0; n_params(l)]).collect(),
        v: model.layers.iter().map(|l| vec![0.0; n_params(l)]).collect(),
        step: 0,
    };
    let mut order = train_idx.clone();
    let mut log = Vec::new();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let mut grads: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; n_params(l)]).collect();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (t, label) = &data.items[i];
                let y = label.target();
                let trace = model.forward_trace(t.data(), Some(&mut rng));
                let z_out = trace.z[2][0];
                batch_loss += bce_from_logit(z_out, y);
                // output delta for logistic + cross-entropy
                let mut delta = vec![sigmoid(z_out) - y];
                for li in (0..3).rev() {
                    let layer = &model.layers[li];
                    let input: &[f64] = if li == 0 { t.data() } else { &trace.a[li - 1] };
                    let g = &mut grads[li];
                    for o in 0..layer.out_dim {
                        let d = delta[o];
                        if d != 0.0 {
                            let row = &mut g[o * layer.in_dim..(o + 1) * layer.in_dim];
                            for (gw, xi) in row.iter_mut().zip(input.iter()) {
                                *gw += d * xi;
                            }
                        }
                        g[layer.out_dim * layer.in_dim + o] += d;
                    }
                    if li > 0 {
                        let mut din = vec![0.0; layer.in_dim];
                        layer.backward_input(&delta, &mut din);
                        // through dropout mask, then rectifier
                        for (j, dv) in din.iter_mut().enumerate() {
                            *dv *= trace.masks[li - 1][j];
                            if trace.z[li - 1][j] <= 0.0 {
                                *dv = 0.0;
                            }
                        }
                        delta = din;
                    }
                }
                let _ = trace;
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch });
            }
            epoch_loss += batch_loss * batch.len() as f64;

            adam.step += 1;
            let bc1 = 1.0 - BETA1.powi(adam.step as i32);
            let bc2 = 1.0 - BETA2.powi(adam.step as i32);
            for (li, layer) in model.layers.iter_mut().enumerate() {
                let wlen = layer.w.len();
                let params = layer.w.iter_mut().chain(layer.b.iter_mut());
                for (pi, p) in params.enumerate() {
                    let g = grads[li][pi] * scale;
                    let m = &mut adam.m[li][pi];
                    let v = &mut adam.v[li][pi];
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    // decoupled weight decay, weights only
                    if pi < wlen {
                        *p -= cfg.learning_rate * cfg.weight_decay * *p;
                    }
                }
            }
        }
        if model.layers.iter().any(|l| l.w.iter().chain(l.b.iter()).any(|p| !p.is_finite())) {
            return Err(ClassifierError::NonFiniteLoss { epoch });
        }
        let train_acc = accuracy_on(&model, data, &train_idx);
        let test_acc = if test_idx.is_empty() { f64::NAN } else { accuracy_on(&model, data, &test_idx) };
        log.push(EpochStats { epoch, loss: epoch_loss / train_idx.len() as f64, train_acc, test_acc });
    }
    Ok((model, log))
}

fn accuracy_on(model: &MlpModel, data: &LabeledDataset, idx: &[usize]) -> f64 {
    let correct = idx
        .iter()
        .filter(|&&i| {
            let (t, label) = &data.items[i];
            let p = model.forward(t).expect("dims checked before training");
            let predicted = if p >= 0.5 { Solvability::Unsolvable } else { Solvability::Solvable };
            predicted == *label
        })
        .count();
    correct as f64 / idx.len() as f64
}

/// Fraction of items classified correctly; p >= 0.5 predicts unsolvable.
pub fn evaluate(model: &MlpModel, items: &[(OneHotTensor, Solvability)]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let correct = items
        .iter()
        .filter(|(t, label)| {
            let p = model.forward(t).expect("dim mismatch in evaluate");
            let predicted = if p >= 0.5 { Solvability::Unsolvable } else { Solvability::Solvable };
            predicted == *label
        })
        .count();
    correct as f64 / items.len() as f64
}

/// Training log CSV: `epoch,loss,train_acc,test_acc`.
pub fn training_log_csv(log: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_acc,test_acc\n");
    for e in log {
        out.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.train_acc, e.test_acc));
    }
    out
}
