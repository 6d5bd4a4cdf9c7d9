//! Training loops: config, the SGD driver shared by single-model methods,
//! and the strategy registry selecting a method by name.

mod coteach;
mod pmhm;
mod single;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use noisyseg_core::data::{
    binarize, load_manifest, read_image, read_mask, rng_substream, ClassMapping, Dataset,
    ManifestError, NoiseSpec, PnmError,
};
use noisyseg_core::losses::{LossError, StateIoErrorAlias};
use noisyseg_core::metrics::{MetricsError, MetricsReport};
use noisyseg_core::pmhm::PmhmError;

use crate::evalrun::{self, EvalError};
use crate::model::{FrameTensor, ModelError, Tensors, ToyModel};

pub use coteach::{CoTeachStrategy, CoteachParams};
pub use pmhm::PmhmStrategy;
pub use single::{ElrStrategy, NpnStrategy, PlainStrategy};

/// Methods accepted by [`build_strategy`].
pub const METHOD_NAMES: &[&str] = &[
    "baseline", "focal", "gce", "sce", "apl", "elr", "npn", "coteach", "pmhm",
];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Pmhm(#[from] PmhmError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    State(#[from] StateIoErrorAlias),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("training diverged at epoch {epoch} step {step}: loss {loss}")]
    Diverged { epoch: u32, step: usize, loss: f64 },
    #[error("training set has no samples")]
    NoSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: String,
    /// Defaults per method: 10 for coteach, 6 otherwise.
    pub epochs: Option<u32>,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Method-specific parameters (see the strategy docs).
    pub params: Value,
    /// Noise provenance of the training data, if known.
    pub noise: Option<NoiseSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: "baseline".to_string(),
            epochs: None,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 8,
            seed: 1,
            params: Value::Null,
            noise: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_epochs(&self) -> u32 {
        self.epochs
            .unwrap_or(if self.method == "coteach" { 10 } else { 6 })
    }
}

/// One frame of a training sample: features plus the supervision targets
/// (the object's noisy region for active prompts, all-zero for inactive
/// ones, following the active-participation recipe).
pub struct TrainFrame {
    pub frame_id: String,
    pub tensor: FrameTensor,
    pub targets: Vec<u8>,
}

/// One (clip, object) supervision unit with all its frames.
pub struct TrainSample {
    pub clip_id: String,
    pub object_id: u32,
    pub category: String,
    pub narration: String,
    pub active: bool,
    pub frames: Vec<TrainFrame>,
}

/// Loads the corpus into memory as per-prompt samples.
pub fn load_train_samples(root: &Path) -> Result<Vec<TrainSample>, TrainError> {
    let dataset = load_manifest(root)?;
    let mut samples = Vec::new();
    for clip in &dataset.clips {
        let mut frames_raw = Vec::with_capacity(clip.frames.len());
        for frame in &clip.frames {
            let image = read_image(dataset.resolve(&frame.image))?;
            let mask = read_mask(dataset.resolve(&frame.mask))?;
            frames_raw.push((frame.frame_id.clone(), FrameTensor::from_image(&image), mask));
        }
        for obj in &clip.objects {
            let frames = frames_raw
                .iter()
                .map(|(frame_id, tensor, mask)| {
                    let targets = if obj.active {
                        binarize(mask, obj.object_id as u16).bits().to_vec()
                    } else {
                        vec![0; tensor.pixels()]
                    };
                    TrainFrame {
                        frame_id: frame_id.clone(),
                        tensor: tensor.clone(),
                        targets,
                    }
                })
                .collect();
            samples.push(TrainSample {
                clip_id: clip.clip_id.clone(),
                object_id: obj.object_id,
                category: obj.category.clone(),
                narration: obj.narration.clone(),
                active: obj.active,
                frames,
            });
        }
    }
    if samples.is_empty() {
        return Err(TrainError::NoSamples);
    }
    Ok(samples)
}

/// Model vocabulary: category names from the class mapping (all datasets
/// share the mapping file), verbs collected from narrations.
pub fn build_vocab(
    train_root: &Path,
    eval_root: &Path,
) -> Result<(Vec<String>, Vec<String>), TrainError> {
    let mapping = ClassMapping::load(train_root.join("classes.json"))?;
    let categories: Vec<String> = mapping
        .all_categories()
        .into_iter()
        .map(String::from)
        .collect();
    let mut verbs = BTreeSet::new();
    for root in [train_root, eval_root] {
        let ds = load_manifest(root)?;
        for prompt in ds.prompts() {
            if let Some(v) = prompt.narration.split_whitespace().next() {
                verbs.insert(v.to_string());
            }
        }
    }
    Ok((categories, verbs.into_iter().collect()))
}

/// SGD with classical momentum.
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: Tensors,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, like: &Tensors) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: like.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut Tensors, grads: &Tensors) {
        for ((p, v), g) in params
            .fields_mut()
            .into_iter()
            .zip(self.velocity.fields_mut())
            .zip(grads.fields())
        {
            for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                *v = self.momentum * *v + g;
                *p -= self.lr * *v;
            }
        }
    }
}

/// Deterministic epoch shuffle drawn from the `"shuffle/{epoch}"` substream.
pub fn epoch_order(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut rng = rng_substream(seed, &format!("shuffle/{epoch}"));
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.next_index(i + 1);
        order.swap(i, j);
    }
    order
}

pub const DIVERGENCE_GUARD: f64 = 1e6;

/// What a strategy hands back: the model used for predictions, an optional
/// peer, per-step log rows, and the per-epoch mean losses.
pub struct TrainOutcome {
    pub model: ToyModel,
    pub peer: Option<ToyModel>,
    pub log: Vec<Value>,
    pub epoch_losses: Vec<f64>,
}

/// Everything a strategy needs to run.
pub struct TrainContext<'a> {
    pub samples: &'a [TrainSample],
    pub cfg: &'a TrainConfig,
    pub categories: &'a [String],
    pub verbs: &'a [String],
    /// Directory for persisted per-pixel state (ELR, NPN).
    pub state_dir: PathBuf,
}

impl TrainContext<'_> {
    pub fn new_model(&self) -> ToyModel {
        ToyModel::new(self.categories, self.verbs, self.cfg.seed)
    }
}

/// A training method selectable by name from the config.
pub trait TrainStrategy {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &TrainContext) -> Result<TrainOutcome, TrainError>;
}

/// Builds the configured strategy. Stateless pixel losses train under the
/// plain single-model loop; the remaining methods carry their own loops.
pub fn build_strategy(cfg: &TrainConfig) -> Result<Box<dyn TrainStrategy>, TrainError> {
    match cfg.method.as_str() {
        "baseline" | "ce" | "focal" | "gce" | "sce" | "apl" => {
            Ok(Box::new(PlainStrategy::new(&cfg.method, &cfg.params)?))
        }
        "elr" => Ok(Box::new(ElrStrategy::new(&cfg.params)?)),
        "npn" => Ok(Box::new(NpnStrategy::new(&cfg.params)?)),
        "coteach" => Ok(Box::new(CoTeachStrategy::new(&cfg.params, cfg.noise)?)),
        "pmhm" => Ok(Box::new(PmhmStrategy::new(&cfg.params)?)),
        other => Err(TrainError::UnknownMethod(other.to_string())),
    }
}

/// Record of one completed run.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub epoch_losses: Vec<f64>,
    pub report: MetricsReport,
    pub wall_clock_secs: f64,
}

/// Runs the full pipeline for one configuration: train on `train_root`,
/// predict and evaluate on the clean `eval_root`, and write the run
/// directory (config.json, checkpoints/, preds/, report.json, log.jsonl;
/// wall-clock timing goes to timing.json, which is diagnostic and excluded
/// from determinism comparisons).
pub fn execute_training_run(
    train_root: &Path,
    eval_root: &Path,
    cfg: &TrainConfig,
    run_dir: &Path,
) -> Result<RunRecord, TrainError> {
    let started = Instant::now();
    std::fs::create_dir_all(run_dir)?;

    let samples = load_train_samples(train_root)?;
    let (categories, verbs) = build_vocab(train_root, eval_root)?;
    let state_dir = run_dir.join("state");
    let ctx = TrainContext {
        samples: &samples,
        cfg,
        categories: &categories,
        verbs: &verbs,
        state_dir,
    };

    let strategy = build_strategy(cfg)?;
    let outcome = strategy.run(&ctx)?;

    // Artifacts.
    let mut cfg_bytes = serde_json::to_vec_pretty(cfg)?;
    cfg_bytes.push(b'\n');
    std::fs::write(run_dir.join("config.json"), cfg_bytes)?;

    let ckpt_dir = run_dir.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir)?;
    outcome.model.save(ckpt_dir.join("final.json"))?;
    if let Some(peer) = &outcome.peer {
        peer.save(ckpt_dir.join("peer.json"))?;
    }

    let mut log_bytes = Vec::new();
    for row in &outcome.log {
        serde_json::to_writer(&mut log_bytes, row)?;
        log_bytes.push(b'\n');
    }
    std::fs::write(run_dir.join("log.jsonl"), log_bytes)?;

    let eval_ds = load_manifest(eval_root)?;
    let pred_dir = run_dir.join("preds");
    write_predictions(&outcome.model, &eval_ds, &pred_dir)?;
    let report = evalrun::evaluate_dataset(eval_root, &pred_dir)?;
    let mut report_bytes = serde_json::to_vec_pretty(&report)?;
    report_bytes.push(b'\n');
    std::fs::write(run_dir.join("report.json"), report_bytes)?;

    let wall_clock_secs = started.elapsed().as_secs_f64();
    let timing = json!({ "wall_clock_secs": wall_clock_secs });
    std::fs::write(
        run_dir.join("timing.json"),
        serde_json::to_vec_pretty(&timing)?,
    )?;

    Ok(RunRecord {
        config: cfg.clone(),
        epoch_losses: outcome.epoch_losses,
        report,
        wall_clock_secs,
    })
}

/// Writes one main-head probability map per (clip, object, frame).
pub fn write_predictions(
    model: &ToyModel,
    dataset: &Dataset,
    pred_dir: &Path,
) -> Result<(), TrainError> {
    std::fs::create_dir_all(pred_dir)?;
    for clip in &dataset.clips {
        for frame in &clip.frames {
            let image = read_image(dataset.resolve(&frame.image))?;
            let tensor = FrameTensor::from_image(&image);
            for obj in &clip.objects {
                let (cat, verb) = model.prompt_ids(&obj.category, &obj.narration);
                let map = model.predict(&tensor, cat, verb);
                let path = pred_dir.join(evalrun::pred_filename(
                    &clip.clip_id,
                    obj.object_id,
                    &frame.frame_id,
                ));
                evalrun::write_probability_map(&map, &path)?;
            }
        }
    }
    Ok(())
}
