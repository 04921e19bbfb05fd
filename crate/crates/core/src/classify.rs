//! Labeled corpora, the training loop, evaluation and blank-rejecting
//! prediction.
//!
//! Classes are ordered with `"blank"` at index 0 and the remaining names
//! sorted lexicographically, so the blank id is stable across corpora.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{read_wav, AudioError};
use crate::features::{FeatureConfig, FeatureError, Featurizer, MelSpectrogram};
use crate::framing::{segment, FramingConfig, FramingError};
use crate::nn::{adam_step, softmax, softmax_cross_entropy, AdamState, Checkpoint, CheckpointMeta, Cnn, ModelSpec, NnError, Tensor};

pub const BLANK_CLASS: &str = "blank";

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("class {class:?} has {count} item(s); a split needs at least 2")]
    ClassTooSmall { class: String, count: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("featurization digest mismatch: checkpoint has {checkpoint}, requested {requested}")]
    DigestMismatch { checkpoint: String, requested: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Framing(#[from] FramingError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = ClassifyError> = std::result::Result<T, E>;

/// Orders class names: blank first, then lexicographic.
pub fn order_class_names<I: IntoIterator<Item = String>>(names: I) -> Vec<String> {
    let set: BTreeSet<String> = names.into_iter().collect();
    let mut out: Vec<String> = Vec::with_capacity(set.len());
    if set.contains(BLANK_CLASS) {
        out.push(BLANK_CLASS.to_string());
    }
    out.extend(set.into_iter().filter(|n| n != BLANK_CLASS));
    out
}

/// Feature windows with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub items: Vec<(MelSpectrogram, usize)>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(items: Vec<(MelSpectrogram, usize)>, class_names: Vec<String>) -> Result<Self> {
        if class_names.iter().filter(|n| *n == BLANK_CLASS).count() != 1 {
            return Err(ClassifyError::InvalidConfig(format!("class list must contain exactly one {BLANK_CLASS:?}: {class_names:?}")));
        }
        if let Some((_, c)) = items.iter().find(|(_, c)| *c >= class_names.len()) {
            return Err(ClassifyError::InvalidConfig(format!("class id {c} out of range for {} classes", class_names.len())));
        }
        if let Some((first, _)) = items.first() {
            if let Some((bad, _)) = items.iter().find(|(m, _)| (m.n_mels, m.n_frames) != (first.n_mels, first.n_frames)) {
                return Err(ClassifyError::ShapeMismatch(format!(
                    "window of {}×{} among {}×{}",
                    bad.n_mels, bad.n_frames, first.n_mels, first.n_frames
                )));
            }
        }
        Ok(Self { items, class_names })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn blank_id(&self) -> usize {
        self.class_names.iter().position(|n| n == BLANK_CLASS).expect("validated on construction")
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, c)| *c).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for (_, c) in &self.items {
            counts[*c] += 1;
        }
        counts
    }

    /// `(n_mels, n_frames)` of every window.
    pub fn input_shape(&self) -> Option<(usize, usize)> {
        self.items.first().map(|(m, _)| (m.n_mels, m.n_frames))
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self { items: indices.iter().map(|&i| self.items[i].clone()).collect(), class_names: self.class_names.clone() }
    }

    /// Stacks the selected windows into an `(N, 1, n_mels, n_frames)` batch.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Vec<usize>)> {
        let (n_mels, n_frames) = self.input_shape().ok_or(ClassifyError::EmptyDataset)?;
        let mut data = Vec::with_capacity(indices.len() * n_mels * n_frames);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (m, c) = &self.items[i];
            data.extend(m.data.iter().map(|&v| v as f32));
            labels.push(*c);
        }
        Ok((Tensor::from_vec(&[indices.len(), 1, n_mels, n_frames], data)?, labels))
    }
}

/// How a corpus is cut into windows and featurized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSetup {
    pub framing: FramingConfig,
    pub features: FeatureConfig,
}

impl FeatureSetup {
    /// 1 s windows, 64-band log-Mel without emphasis.
    pub fn classification() -> Self {
        Self { framing: FramingConfig::CLASSIFICATION, features: FeatureConfig::classification() }
    }

    /// 0.2 s frames every 0.04 s, 32-band log-Mel with impact emphasis.
    pub fn streaming() -> Self {
        Self { framing: FramingConfig::STREAMING, features: FeatureConfig::streaming() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub class_name: String,
}

/// Lists a corpus: `manifest.csv` (columns `path,class`, paths relative to
/// the root) if present, otherwise `root/<class>/*.wav`.
pub fn scan_corpus(root: impl AsRef<Path>) -> Result<Vec<CorpusEntry>> {
    let root = root.as_ref();
    let manifest = root.join("manifest.csv");
    let mut entries = Vec::new();
    if manifest.is_file() {
        let mut reader = csv::Reader::from_path(&manifest).map_err(|e| ClassifyError::Corpus(e.to_string()))?;
        let headers = reader.headers().map_err(|e| ClassifyError::Corpus(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ClassifyError::Corpus(format!("manifest.csv lacks a {name:?} column")))
        };
        let (path_col, class_col) = (col("path")?, col("class")?);
        for record in reader.records() {
            let record = record.map_err(|e| ClassifyError::Corpus(e.to_string()))?;
            entries.push(CorpusEntry { path: root.join(&record[path_col]), class_name: record[class_col].to_string() });
        }
    } else {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let class_name = dir.file_name().unwrap().to_string_lossy().into_owned();
            let mut wavs: Vec<PathBuf> = fs::read_dir(&dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            wavs.sort();
            entries.extend(wavs.into_iter().map(|path| CorpusEntry { path, class_name: class_name.clone() }));
        }
    }
    if entries.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    Ok(entries)
}

/// Where a window came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowOrigin {
    pub path: PathBuf,
    pub start_sample: usize,
}

/// A featurized corpus.
#[derive(Debug, Clone)]
pub struct FeaturizedCorpus {
    pub dataset: LabeledDataset,
    pub origins: Vec<WindowOrigin>,
    pub sample_rate_hz: u32,
    pub digest: String,
}

/// Reads, segments and featurizes every clip. All clips must share one
/// sample rate.
pub fn featurize_corpus(entries: &[CorpusEntry], setup: &FeatureSetup) -> Result<FeaturizedCorpus> {
    let class_names = order_class_names(entries.iter().map(|e| e.class_name.clone()));
    let mut featurizer: Option<Featurizer> = None;
    let mut items = Vec::new();
    let mut origins = Vec::new();
    for entry in entries {
        let clip = read_wav(&entry.path)?;
        let f = match &featurizer {
            Some(f) if f.sample_rate() == clip.sample_rate_hz => f,
            Some(f) => {
                return Err(ClassifyError::Corpus(format!(
                    "{} is at {} Hz, corpus is at {} Hz",
                    entry.path.display(),
                    clip.sample_rate_hz,
                    f.sample_rate()
                )))
            }
            None => featurizer.insert(Featurizer::new(setup.features, clip.sample_rate_hz)?),
        };
        let class_id = class_names.iter().position(|n| *n == entry.class_name).expect("collected above");
        for w in segment(&clip, &setup.framing)? {
            items.push((f.featurize(w.samples)?, class_id));
            origins.push(WindowOrigin { path: entry.path.clone(), start_sample: w.start_sample });
        }
    }
    let featurizer = featurizer.ok_or(ClassifyError::EmptyDataset)?;
    if items.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    Ok(FeaturizedCorpus {
        dataset: LabeledDataset::new(items, class_names)?,
        origins,
        sample_rate_hz: featurizer.sample_rate(),
        digest: featurizer.digest().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub split_ratio: f64,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    /// Adam at 3e-4, batches of 32, 2000 epochs, 8:2 split.
    fn default() -> Self {
        Self { lr: 3e-4, batch_size: 32, epochs: 2000, split_ratio: 0.8, seed: 0, shuffle_each_epoch: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(ClassifyError::InvalidConfig(format!("split ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ClassifyError::InvalidConfig("batch size and epochs must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ClassifyError::InvalidConfig(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// Item indices of a train/validation partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Per-class partition: class `c` with `n` items sends
/// `clamp(floor(ratio·n + 0.5), 1, n − 1)` items to training, chosen by a
/// seeded shuffle within the class. Index lists are returned sorted.
pub fn stratified_split(labels: &[usize], n_classes: usize, class_names: &[String], ratio: f64, seed: u64) -> Result<Split> {
    if labels.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ClassifyError::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        per_class[c].push(i);
    }
    let mut split = Split { train: Vec::new(), val: Vec::new() };
    for (c, mut members) in per_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let n = members.len();
        if n < 2 {
            let class = class_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            return Err(ClassifyError::ClassTooSmall { class, count: n });
        }
        let n_train = ((ratio * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        members.shuffle(&mut rng);
        split.train.extend_from_slice(&members[..n_train]);
        split.val.extend_from_slice(&members[n_train..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation accuracy.
    pub model: Cnn<f32>,
    pub adam: AdamState<f32>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochRecord>,
    pub split: Split,
}

pub fn train(ds: &LabeledDataset, spec: ModelSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(ds, spec, cfg, |_| {})
}

/// Minibatch Adam on cross-entropy; `on_epoch` sees each epoch's record.
///
/// Every epoch reshuffles the training indices (the last partial batch is
/// kept), then measures validation accuracy. The earliest epoch with the
/// highest accuracy wins.
pub fn train_with(ds: &LabeledDataset, spec: ModelSpec, cfg: &TrainConfig, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    if spec.n_classes != ds.n_classes() {
        return Err(ClassifyError::ShapeMismatch(format!(
            "model has {} classes, dataset has {}",
            spec.n_classes,
            ds.n_classes()
        )));
    }
    let split = stratified_split(&ds.labels(), ds.n_classes(), &ds.class_names, cfg.split_ratio, cfg.seed)?;
    let mut model = Cnn::<f32>::new(spec, cfg.seed)?;
    let mut adam = AdamState::<f32>::new(&model.trainable_lens());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5EED));
    let lr = cfg.lr as f32;
    let val = ds.subset(&split.val);

    let mut order = split.train.clone();
    let mut best: Option<(usize, f64, Cnn<f32>, AdamState<f32>)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = ds.batch(chunk)?;
            let (logits, cache) = model.forward_train(&x)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            let grads = model.backward(&cache, &grad)?;
            let grad_refs: Vec<&[f32]> = grads.groups.iter().map(Vec::as_slice).collect();
            adam_step(&mut model.trainable_params_mut(), &grad_refs, &mut adam, lr);
            loss_sum += f64::from(loss) * chunk.len() as f64;
        }
        let val_accuracy = evaluate(&model, &val)?.accuracy;
        let record = EpochRecord { epoch, train_loss: loss_sum / order.len() as f64, val_accuracy };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().is_none_or(|b| val_accuracy > b.1) {
            best = Some((epoch, val_accuracy, model.clone(), adam.clone()));
        }
    }
    let (best_epoch, best_val_accuracy, model, adam) = best.expect("at least one epoch");
    Ok(TrainOutcome { model, adam, best_epoch, best_val_accuracy, history, split })
}

/// Counts of (true, predicted) pairs; rows are true classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self { counts: vec![vec![0; n_classes]; n_classes] }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    /// Rows divided by their sums; empty rows stay zero.
    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let sum: u64 = row.iter().sum();
                row.iter().map(|&c| if sum == 0 { 0.0 } else { c as f64 / sum as f64 }).collect()
            })
            .collect()
    }

    /// Fixed-width text rendering of the normalized matrix.
    pub fn render_table(&self, class_names: &[String]) -> String {
        let width = class_names.iter().map(|n| n.len()).max().unwrap_or(4).max(5);
        let mut out = String::new();
        let _ = write!(out, "{:>width$} |", "true\\pred");
        for i in 0..class_names.len() {
            let _ = write!(out, " {i:>5}");
        }
        out.push('\n');
        for (i, row) in self.normalized().iter().enumerate() {
            let _ = write!(out, "{:>width$} |", format!("{i}:{}", class_names[i]));
            for v in row {
                let _ = write!(out, " {v:>5.2}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Machine-readable evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
}

impl Evaluation {
    pub fn report(&self, class_names: &[String]) -> EvalReport {
        EvalReport {
            accuracy: self.accuracy,
            class_names: class_names.to_vec(),
            counts: self.confusion.counts.clone(),
            normalized: self.confusion.normalized(),
        }
    }
}

/// Lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

const EVAL_BATCH: usize = 64;

/// Window-level accuracy and confusion counts with eval-mode batch norm.
pub fn evaluate(model: &Cnn<f32>, ds: &LabeledDataset) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(ClassifyError::EmptyDataset);
    }
    let k = model.n_classes();
    let mut confusion = ConfusionMatrix::new(k);
    let indices: Vec<usize> = (0..ds.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let (x, labels) = ds.batch(chunk)?;
        let logits = model.infer(&x)?;
        for (row, &truth) in logits.data().chunks_exact(k).zip(&labels) {
            confusion.record(truth, argmax(row));
        }
    }
    Ok(Evaluation { accuracy: confusion.accuracy(), confusion })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class_id: usize,
    pub probs: Vec<f64>,
    pub is_contact: bool,
}

/// Softmax, argmax, and the blank-rejection rule: a window counts as contact
/// when its argmax is not blank and `1 − p(blank) ≥ tau`.
pub fn prediction_from_logits(logits: &[f64], blank_id: usize, tau: f64) -> Prediction {
    let probs = softmax(logits, logits.len());
    let class_id = argmax(&probs);
    let is_contact = class_id != blank_id && 1.0 - probs[blank_id] >= tau;
    Prediction { class_id, probs, is_contact }
}

pub fn predict(model: &Cnn<f32>, spec: &MelSpectrogram, blank_id: usize, tau: f64) -> Result<Prediction> {
    let x = Tensor::from_vec(&[1, 1, spec.n_mels, spec.n_frames], spec.data.iter().map(|&v| v as f32).collect())?;
    let logits = model.infer(&x)?;
    let logits: Vec<f64> = logits.data().iter().map(|&v| f64::from(v)).collect();
    if blank_id >= logits.len() {
        return Err(ClassifyError::ShapeMismatch(format!("blank id {blank_id} for {} classes", logits.len())));
    }
    Ok(prediction_from_logits(&logits, blank_id, tau))
}

/// Provenance stored in a checkpoint's training metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

/// Featurization stored in a checkpoint, enough to rebuild the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredFeaturization {
    pub sample_rate_hz: u32,
    pub setup: FeatureSetup,
}

/// A trained model together with the featurization it expects.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub model: Cnn<f32>,
    pub class_names: Vec<String>,
    pub blank_id: usize,
    pub setup: FeatureSetup,
    pub featurizer: Featurizer,
}

impl Classifier {
    pub fn checkpoint(outcome: &TrainOutcome, corpus: &FeaturizedCorpus, setup: &FeatureSetup, cfg: &TrainConfig) -> Checkpoint {
        let stored = StoredFeaturization { sample_rate_hz: corpus.sample_rate_hz, setup: *setup };
        let info = TrainingInfo { config: cfg.clone(), best_epoch: outcome.best_epoch, best_val_accuracy: outcome.best_val_accuracy };
        Checkpoint {
            model: outcome.model.clone(),
            adam: Some(outcome.adam.clone()),
            meta: CheckpointMeta {
                class_names: corpus.dataset.class_names.clone(),
                n_mels: setup.features.n_mels,
                featurization_digest: corpus.digest.clone(),
                featurization: serde_json::to_value(stored).expect("plain data"),
                training: serde_json::to_value(info).expect("plain data"),
            },
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let stored: StoredFeaturization = serde_json::from_value(ckpt.meta.featurization.clone())
            .map_err(|e| ClassifyError::InvalidConfig(format!("checkpoint featurization: {e}")))?;
        let featurizer = Featurizer::new(stored.setup.features, stored.sample_rate_hz)?;
        if featurizer.digest() != ckpt.meta.featurization_digest {
            return Err(ClassifyError::DigestMismatch {
                checkpoint: ckpt.meta.featurization_digest.clone(),
                requested: featurizer.digest().to_string(),
            });
        }
        let blank_id = ckpt
            .meta
            .class_names
            .iter()
            .position(|n| n == BLANK_CLASS)
            .ok_or_else(|| ClassifyError::InvalidConfig("checkpoint has no blank class".into()))?;
        Ok(Self { model: ckpt.model.clone(), class_names: ckpt.meta.class_names.clone(), blank_id, setup: stored.setup, featurizer })
    }

    pub fn training_info(ckpt: &Checkpoint) -> Option<TrainingInfo> {
        serde_json::from_value(ckpt.meta.training.clone()).ok()
    }

    /// Fails with `DigestMismatch` unless `digest` names this classifier's featurization.
    pub fn ensure_digest(&self, digest: &str) -> Result<()> {
        if digest != self.featurizer.digest() {
            return Err(ClassifyError::DigestMismatch { checkpoint: self.featurizer.digest().to_string(), requested: digest.to_string() });
        }
        Ok(())
    }

    pub fn predict(&self, spec: &MelSpectrogram, tau: f64) -> Result<Prediction> {
        predict(&self.model, spec, self.blank_id, tau)
    }
}
