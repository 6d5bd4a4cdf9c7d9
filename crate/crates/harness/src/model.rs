//! Desk-scale text-conditioned pixel scorer.
//!
//! Per pixel the input is [r, g, b, x/(W-1), y/(H-1)] concatenated with the
//! prompt's learned category and verb embeddings. Two tanh stages of width
//! 32 feed four logistic readouts: a stage-1 probe on the first hidden
//! layer, a stage-2 probe, the main head, and a training-only auxiliary
//! head (the last three all read the second hidden layer). Stage maps are
//! ordered so the final stage is the main head.
//!
//! Gradients are exact and hand-derived; the finite-difference suite in
//! `tests/` guards every parameter.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use noisyseg_core::data::{rng_substream, ProbabilityMap, RgbImage};

pub const PIXEL_FEATURES: usize = 5;
pub const CAT_DIM: usize = 8;
pub const VERB_DIM: usize = 4;
pub const HIDDEN: usize = 32;
pub const INPUT: usize = PIXEL_FEATURES + CAT_DIM + VERB_DIM;
/// Probability readout stages; the last one is the main head.
pub const STAGES: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
    #[error("checkpoint parameter shapes are inconsistent")]
    BadShape,
}

/// All trainable parameters. Every field is a flat row-major matrix (or a
/// vector / single-element bias), which keeps SGD and gradient checks to a
/// uniform field walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensors {
    pub cat_embed: Vec<f64>,
    pub verb_embed: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub stage1_w: Vec<f64>,
    pub stage1_b: Vec<f64>,
    pub stage2_w: Vec<f64>,
    pub stage2_b: Vec<f64>,
    pub main_w: Vec<f64>,
    pub main_b: Vec<f64>,
    pub aux_w: Vec<f64>,
    pub aux_b: Vec<f64>,
}

impl Tensors {
    pub fn zeros(n_cat: usize, n_verb: usize) -> Self {
        Tensors {
            cat_embed: vec![0.0; n_cat * CAT_DIM],
            verb_embed: vec![0.0; n_verb * VERB_DIM],
            w1: vec![0.0; HIDDEN * INPUT],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            stage1_w: vec![0.0; HIDDEN],
            stage1_b: vec![0.0; 1],
            stage2_w: vec![0.0; HIDDEN],
            stage2_b: vec![0.0; 1],
            main_w: vec![0.0; HIDDEN],
            main_b: vec![0.0; 1],
            aux_w: vec![0.0; HIDDEN],
            aux_b: vec![0.0; 1],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Tensors::zeros(self.cat_embed.len() / CAT_DIM, self.verb_embed.len() / VERB_DIM)
    }

    pub fn fields(&self) -> [&Vec<f64>; 14] {
        [
            &self.cat_embed,
            &self.verb_embed,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.stage1_w,
            &self.stage1_b,
            &self.stage2_w,
            &self.stage2_b,
            &self.main_w,
            &self.main_b,
            &self.aux_w,
            &self.aux_b,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut Vec<f64>; 14] {
        [
            &mut self.cat_embed,
            &mut self.verb_embed,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.stage1_w,
            &mut self.stage1_b,
            &mut self.stage2_w,
            &mut self.stage2_b,
            &mut self.main_w,
            &mut self.main_b,
            &mut self.aux_w,
            &mut self.aux_b,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.fields().iter().flat_map(|f| f.iter().copied()).collect()
    }

    pub fn load_flat(&mut self, values: &[f64]) {
        let mut at = 0;
        for field in self.fields_mut() {
            field.copy_from_slice(&values[at..at + field.len()]);
            at += field.len();
        }
        assert_eq!(at, values.len());
    }

    /// `self += scale * other`, elementwise across all fields.
    pub fn add_scaled(&mut self, other: &Tensors, scale: f64) {
        for (dst, src) in self.fields_mut().into_iter().zip(other.fields()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn fill(&mut self, value: f64) {
        for field in self.fields_mut() {
            field.iter_mut().for_each(|v| *v = value);
        }
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

/// Precomputed per-pixel features of one frame: rgb in [0,1] plus
/// normalized coordinates.
#[derive(Debug, Clone)]
pub struct FrameTensor {
    pub width: usize,
    pub height: usize,
    /// `width * height * PIXEL_FEATURES`, row-major.
    pub feats: Vec<f64>,
}

impl FrameTensor {
    pub fn from_image(image: &RgbImage) -> Self {
        let (w, h) = (image.width, image.height);
        let mut feats = Vec::with_capacity(w * h * PIXEL_FEATURES);
        for y in 0..h {
            for x in 0..w {
                let [r, g, b] = image.rgb(x, y);
                feats.push(f64::from(r) / 255.0);
                feats.push(f64::from(g) / 255.0);
                feats.push(f64::from(b) / 255.0);
                feats.push(if w > 1 { x as f64 / (w - 1) as f64 } else { 0.0 });
                feats.push(if h > 1 { y as f64 / (h - 1) as f64 } else { 0.0 });
            }
        }
        FrameTensor {
            width: w,
            height: h,
            feats,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn feat(&self, px: usize) -> &[f64] {
        &self.feats[px * PIXEL_FEATURES..(px + 1) * PIXEL_FEATURES]
    }
}

/// Which readouts a forward pass materializes. Inference needs only the
/// main head, so the extra heads cannot perturb it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadSet {
    MainOnly,
    All,
}

/// Activations cached for the backward pass.
pub struct ForwardTrace {
    pub width: usize,
    pub height: usize,
    pub cat: usize,
    pub verb: usize,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub main: Vec<f64>,
    pub stage1: Option<Vec<f64>>,
    pub stage2: Option<Vec<f64>>,
    pub aux: Option<Vec<f64>>,
    /// Per-unit dropout scaling on the auxiliary head input
    /// (0 or 1/(1-rate)); `None` means no dropout.
    pub aux_scale: Option<Vec<f64>>,
}

impl ForwardTrace {
    pub fn main_map(&self) -> ProbabilityMap {
        ProbabilityMap::new(self.width, self.height, self.main.clone())
    }

    pub fn stage_maps(&self) -> Vec<ProbabilityMap> {
        let s1 = self.stage1.as_ref().expect("stage heads were computed");
        let s2 = self.stage2.as_ref().expect("stage heads were computed");
        vec![
            ProbabilityMap::new(self.width, self.height, s1.clone()),
            ProbabilityMap::new(self.width, self.height, s2.clone()),
            self.main_map(),
        ]
    }

    pub fn aux_map(&self) -> ProbabilityMap {
        ProbabilityMap::new(
            self.width,
            self.height,
            self.aux.as_ref().expect("aux head was computed").clone(),
        )
    }
}

/// Per-pixel upstream gradients `dL/dp` for each materialized head.
#[derive(Default)]
pub struct HeadGrads<'a> {
    pub main: Option<&'a [f64]>,
    pub stage1: Option<&'a [f64]>,
    pub stage2: Option<&'a [f64]>,
    pub aux: Option<&'a [f64]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    /// Category names; index 0 is the reserved unknown row.
    pub cat_vocab: Vec<String>,
    /// Verb names; index 0 is the reserved unknown row.
    pub verb_vocab: Vec<String>,
    pub params: Tensors,
}

impl ToyModel {
    /// Fresh model with uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights
    /// drawn from per-tensor substreams of `seed`, zero biases, and
    /// `U(-0.5, 0.5)` embeddings.
    pub fn new(categories: &[String], verbs: &[String], seed: u64) -> Self {
        let mut model = Self::with_zero_weights(categories, verbs);
        let mut init = |field: &mut Vec<f64>, label: &str, scale: f64| {
            let mut rng = rng_substream(seed, &format!("init/{label}"));
            for v in field.iter_mut() {
                *v = (rng.next_uniform01() * 2.0 - 1.0) * scale;
            }
        };
        let p = &mut model.params;
        init(&mut p.cat_embed, "cat_embed", 0.5);
        init(&mut p.verb_embed, "verb_embed", 0.5);
        init(&mut p.w1, "w1", 1.0 / (INPUT as f64).sqrt());
        init(&mut p.w2, "w2", 1.0 / (HIDDEN as f64).sqrt());
        init(&mut p.stage1_w, "stage1_w", 1.0 / (HIDDEN as f64).sqrt());
        init(&mut p.stage2_w, "stage2_w", 1.0 / (HIDDEN as f64).sqrt());
        init(&mut p.main_w, "main_w", 1.0 / (HIDDEN as f64).sqrt());
        init(&mut p.aux_w, "aux_w", 1.0 / (HIDDEN as f64).sqrt());
        model
    }

    pub fn with_zero_weights(categories: &[String], verbs: &[String]) -> Self {
        let mut cat_vocab = Vec::with_capacity(categories.len() + 1);
        cat_vocab.push("<unk>".to_string());
        cat_vocab.extend(categories.iter().cloned());
        let mut verb_vocab = Vec::with_capacity(verbs.len() + 1);
        verb_vocab.push("<unk>".to_string());
        verb_vocab.extend(verbs.iter().cloned());
        let params = Tensors::zeros(cat_vocab.len(), verb_vocab.len());
        ToyModel {
            cat_vocab,
            verb_vocab,
            params,
        }
    }

    pub fn cat_id(&self, name: &str) -> usize {
        self.cat_vocab.iter().position(|c| c == name).unwrap_or(0)
    }

    pub fn verb_id(&self, name: &str) -> usize {
        self.verb_vocab.iter().position(|v| v == name).unwrap_or(0)
    }

    /// Embedding ids for a prompt: its category plus the narration's verb
    /// (first whitespace token). Unknown names map to the reserved row 0.
    pub fn prompt_ids(&self, category: &str, narration: &str) -> (usize, usize) {
        let verb = narration.split_whitespace().next().unwrap_or("");
        (self.cat_id(category), self.verb_id(verb))
    }

    fn prompt_bias(&self, cat: usize, verb: usize) -> Vec<f64> {
        let p = &self.params;
        let e_cat = &p.cat_embed[cat * CAT_DIM..(cat + 1) * CAT_DIM];
        let e_verb = &p.verb_embed[verb * VERB_DIM..(verb + 1) * VERB_DIM];
        let mut bias = p.b1.clone();
        for u in 0..HIDDEN {
            let row = &p.w1[u * INPUT..(u + 1) * INPUT];
            let mut acc = 0.0;
            for (k, &e) in e_cat.iter().enumerate() {
                acc += row[PIXEL_FEATURES + k] * e;
            }
            for (k, &e) in e_verb.iter().enumerate() {
                acc += row[PIXEL_FEATURES + CAT_DIM + k] * e;
            }
            bias[u] += acc;
        }
        bias
    }

    /// Forward pass over one frame for one prompt. `aux_scale` applies
    /// inverted dropout to the auxiliary head's input units.
    pub fn forward(
        &self,
        frame: &FrameTensor,
        cat: usize,
        verb: usize,
        heads: HeadSet,
        aux_scale: Option<Vec<f64>>,
    ) -> ForwardTrace {
        let p = &self.params;
        let n = frame.pixels();
        let bias = self.prompt_bias(cat, verb);
        let all = heads == HeadSet::All;

        let mut h1 = vec![0.0; n * HIDDEN];
        let mut h2 = vec![0.0; n * HIDDEN];
        let mut main = vec![0.0; n];
        let mut stage1 = all.then(|| vec![0.0; n]);
        let mut stage2 = all.then(|| vec![0.0; n]);
        let mut aux = all.then(|| vec![0.0; n]);

        for px in 0..n {
            let feat = frame.feat(px);
            let h1_px = &mut h1[px * HIDDEN..(px + 1) * HIDDEN];
            for u in 0..HIDDEN {
                let row = &p.w1[u * INPUT..u * INPUT + PIXEL_FEATURES];
                let mut z = bias[u];
                for k in 0..PIXEL_FEATURES {
                    z += row[k] * feat[k];
                }
                h1_px[u] = z.tanh();
            }
            let (h1_px, h2_px) = {
                let h1_px = &h1[px * HIDDEN..(px + 1) * HIDDEN];
                let h2_px = &mut h2[px * HIDDEN..(px + 1) * HIDDEN];
                for u in 0..HIDDEN {
                    let row = &p.w2[u * HIDDEN..(u + 1) * HIDDEN];
                    let mut z = p.b2[u];
                    for k in 0..HIDDEN {
                        z += row[k] * h1_px[k];
                    }
                    h2_px[u] = z.tanh();
                }
                (h1_px, &*h2_px)
            };

            let dot = |w: &[f64], h: &[f64]| -> f64 {
                w.iter().zip(h).map(|(a, b)| a * b).sum()
            };
            main[px] = sigmoid(dot(&p.main_w, h2_px) + p.main_b[0]);
            if all {
                stage1.as_mut().unwrap()[px] = sigmoid(dot(&p.stage1_w, h1_px) + p.stage1_b[0]);
                stage2.as_mut().unwrap()[px] = sigmoid(dot(&p.stage2_w, h2_px) + p.stage2_b[0]);
                let aux_in: f64 = match &aux_scale {
                    Some(scale) => p
                        .aux_w
                        .iter()
                        .zip(h2_px)
                        .zip(scale)
                        .map(|((w, h), s)| w * h * s)
                        .sum(),
                    None => dot(&p.aux_w, h2_px),
                };
                aux.as_mut().unwrap()[px] = sigmoid(aux_in + p.aux_b[0]);
            }
        }

        ForwardTrace {
            width: frame.width,
            height: frame.height,
            cat,
            verb,
            h1,
            h2,
            main,
            stage1,
            stage2,
            aux,
            aux_scale,
        }
    }

    /// Inference: the main-head probability map only.
    pub fn predict(&self, frame: &FrameTensor, cat: usize, verb: usize) -> ProbabilityMap {
        self.forward(frame, cat, verb, HeadSet::MainOnly, None).main_map()
    }

    /// Accumulates parameter gradients for one frame given per-pixel
    /// upstream `dL/dp` for each head.
    pub fn backward(
        &self,
        frame: &FrameTensor,
        trace: &ForwardTrace,
        grads: &HeadGrads,
        out: &mut Tensors,
    ) {
        let p = &self.params;
        let n = frame.pixels();
        let e_cat = &p.cat_embed[trace.cat * CAT_DIM..(trace.cat + 1) * CAT_DIM];
        let e_verb = &p.verb_embed[trace.verb * VERB_DIM..(trace.verb + 1) * VERB_DIM];

        let mut sum_dz1 = vec![0.0; HIDDEN];
        let mut dh1 = vec![0.0; HIDDEN];
        let mut dh2 = vec![0.0; HIDDEN];
        let mut dz2 = vec![0.0; HIDDEN];

        for px in 0..n {
            let h1_px = &trace.h1[px * HIDDEN..(px + 1) * HIDDEN];
            let h2_px = &trace.h2[px * HIDDEN..(px + 1) * HIDDEN];
            dh1.iter_mut().for_each(|v| *v = 0.0);
            dh2.iter_mut().for_each(|v| *v = 0.0);
            let mut any = false;

            if let Some(g) = grads.main {
                let gp = g[px];
                if gp != 0.0 {
                    any = true;
                    let prob = trace.main[px];
                    let da = gp * prob * (1.0 - prob);
                    out.main_b[0] += da;
                    for u in 0..HIDDEN {
                        out.main_w[u] += da * h2_px[u];
                        dh2[u] += da * p.main_w[u];
                    }
                }
            }
            if let Some(g) = grads.stage2 {
                let gp = g[px];
                if gp != 0.0 {
                    any = true;
                    let prob = trace.stage2.as_ref().expect("stage2 computed")[px];
                    let da = gp * prob * (1.0 - prob);
                    out.stage2_b[0] += da;
                    for u in 0..HIDDEN {
                        out.stage2_w[u] += da * h2_px[u];
                        dh2[u] += da * p.stage2_w[u];
                    }
                }
            }
            if let Some(g) = grads.aux {
                let gp = g[px];
                if gp != 0.0 {
                    any = true;
                    let prob = trace.aux.as_ref().expect("aux computed")[px];
                    let da = gp * prob * (1.0 - prob);
                    out.aux_b[0] += da;
                    match &trace.aux_scale {
                        Some(scale) => {
                            for u in 0..HIDDEN {
                                out.aux_w[u] += da * h2_px[u] * scale[u];
                                dh2[u] += da * p.aux_w[u] * scale[u];
                            }
                        }
                        None => {
                            for u in 0..HIDDEN {
                                out.aux_w[u] += da * h2_px[u];
                                dh2[u] += da * p.aux_w[u];
                            }
                        }
                    }
                }
            }
            let mut dh1_direct = false;
            if let Some(g) = grads.stage1 {
                let gp = g[px];
                if gp != 0.0 {
                    any = true;
                    dh1_direct = true;
                    let prob = trace.stage1.as_ref().expect("stage1 computed")[px];
                    let da = gp * prob * (1.0 - prob);
                    out.stage1_b[0] += da;
                    for u in 0..HIDDEN {
                        out.stage1_w[u] += da * h1_px[u];
                        dh1[u] += da * p.stage1_w[u];
                    }
                }
            }
            if !any {
                continue;
            }

            // Through the second stage.
            let mut any_dz2 = false;
            for u in 0..HIDDEN {
                dz2[u] = dh2[u] * (1.0 - h2_px[u] * h2_px[u]);
                any_dz2 |= dz2[u] != 0.0;
            }
            if any_dz2 {
                for u in 0..HIDDEN {
                    let d = dz2[u];
                    if d == 0.0 {
                        continue;
                    }
                    out.b2[u] += d;
                    let w2_row = &p.w2[u * HIDDEN..(u + 1) * HIDDEN];
                    let g2_row = &mut out.w2[u * HIDDEN..(u + 1) * HIDDEN];
                    for k in 0..HIDDEN {
                        g2_row[k] += d * h1_px[k];
                        dh1[k] += d * w2_row[k];
                    }
                }
            } else if !dh1_direct {
                continue;
            }

            // Through the first stage.
            let feat = frame.feat(px);
            for u in 0..HIDDEN {
                let d = dh1[u] * (1.0 - h1_px[u] * h1_px[u]);
                if d == 0.0 {
                    continue;
                }
                sum_dz1[u] += d;
                let g1_row = &mut out.w1[u * INPUT..u * INPUT + PIXEL_FEATURES];
                for k in 0..PIXEL_FEATURES {
                    g1_row[k] += d * feat[k];
                }
            }
        }

        // Embedding columns and first-stage biases see the same dz1 at every
        // pixel of the frame, so they take the pixel sum once.
        for u in 0..HIDDEN {
            let d = sum_dz1[u];
            if d == 0.0 {
                continue;
            }
            out.b1[u] += d;
            let w1_row = &p.w1[u * INPUT..(u + 1) * INPUT];
            let g1_row = &mut out.w1[u * INPUT..(u + 1) * INPUT];
            for k in 0..CAT_DIM {
                g1_row[PIXEL_FEATURES + k] += d * e_cat[k];
                out.cat_embed[trace.cat * CAT_DIM + k] += d * w1_row[PIXEL_FEATURES + k];
            }
            for k in 0..VERB_DIM {
                g1_row[PIXEL_FEATURES + CAT_DIM + k] += d * e_verb[k];
                out.verb_embed[trace.verb * VERB_DIM + k] +=
                    d * w1_row[PIXEL_FEATURES + CAT_DIM + k];
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let model: ToyModel = serde_json::from_slice(&bytes)?;
        let expect = Tensors::zeros(model.cat_vocab.len(), model.verb_vocab.len());
        let ok = model
            .params
            .fields()
            .iter()
            .zip(expect.fields())
            .all(|(a, b)| a.len() == b.len());
        if !ok {
            return Err(ModelError::BadShape);
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn flat_image(w: usize, h: usize) -> RgbImage {
        RgbImage::new(w, h, vec![100; 3 * w * h])
    }

    #[test]
    fn zero_weights_give_constant_half_maps() {
        let model = ToyModel::with_zero_weights(&names(&["cup"]), &names(&["take"]));
        let frame = FrameTensor::from_image(&flat_image(5, 4));
        let trace = model.forward(&frame, 1, 1, HeadSet::All, None);
        assert!(trace.main.iter().all(|&p| p == 0.5));
        assert!(trace.stage1.unwrap().iter().all(|&p| p == 0.5));
        assert!(trace.aux.unwrap().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn output_dimensions_follow_the_frame() {
        let model = ToyModel::new(&names(&["cup", "pan"]), &names(&["take"]), 3);
        for (w, h) in [(7, 3), (1, 9), (16, 16)] {
            let frame = FrameTensor::from_image(&flat_image(w, h));
            let map = model.predict(&frame, 1, 1);
            assert_eq!((map.width(), map.height()), (w, h));
        }
    }

    #[test]
    fn different_categories_condition_the_map() {
        let model = ToyModel::new(&names(&["cup", "pan"]), &names(&["take"]), 7);
        let frame = FrameTensor::from_image(&flat_image(6, 6));
        let a = model.predict(&frame, 1, 1);
        let b = model.predict(&frame, 2, 1);
        assert!(
            a.probs().iter().zip(b.probs()).any(|(x, y)| x != y),
            "generic nonzero weights must react to the category id"
        );
    }

    #[test]
    fn unknown_names_map_to_the_reserved_row() {
        let model = ToyModel::new(&names(&["cup"]), &names(&["take"]), 1);
        assert_eq!(model.prompt_ids("cup", "take cup"), (1, 1));
        assert_eq!(model.prompt_ids("spoon", "juggle cup"), (0, 0));
    }

    #[test]
    fn main_head_ignores_extra_heads() {
        let model = ToyModel::new(&names(&["cup"]), &names(&["take"]), 9);
        let frame = FrameTensor::from_image(&flat_image(8, 5));
        let lean = model.forward(&frame, 1, 1, HeadSet::MainOnly, None);
        let full = model.forward(&frame, 1, 1, HeadSet::All, Some(vec![0.0; HIDDEN]));
        assert_eq!(lean.main, full.main, "bit-identical main outputs");
    }

    #[test]
    fn checkpoint_roundtrips_exactly() {
        let model = ToyModel::new(&names(&["cup", "pan"]), &names(&["take", "cut"]), 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = ToyModel::load(&path).unwrap();
        assert_eq!(model, back);
    }

    #[test]
    fn flatten_roundtrips() {
        let model = ToyModel::new(&names(&["cup"]), &names(&["take"]), 5);
        let flat = model.params.flatten();
        let mut other = model.params.zeros_like();
        other.load_flat(&flat);
        assert_eq!(model.params, other);
    }
}
