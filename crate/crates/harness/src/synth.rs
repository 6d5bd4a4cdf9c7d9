//! Synthetic clip generator: colored axis-aligned shapes with label masks,
//! templated narrations, and active flags, byte-deterministic given a seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use noisyseg_core::data::{
    rng_substream, save_manifest, write_image, write_mask, ClassMapping, Clip, Dataset, FrameRef,
    LabelMask, ManifestError, PnmError, PromptRecord, RgbImage,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("config: {0}")]
    BadConfig(String),
    #[error("clip {clip}: could not place object {object} without overlap")]
    Placement { clip: usize, object: usize },
    #[error("object ids exceed 65535")]
    ObjectOverflow,
    #[error(transparent)]
    Pnm(#[from] PnmError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub frames_per_clip: usize,
    pub width: usize,
    pub height: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Class vocabulary; doubles as the class mapping for text corruption.
    pub classes: BTreeMap<u32, Vec<String>>,
    /// Narration verbs; the verb for a category is
    /// `verbs[category_index % verbs.len()]`.
    pub verbs: Vec<String>,
    /// Target fraction of active objects per clip; at least one object is
    /// always active, and the narration names the first active object.
    pub active_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let classes: BTreeMap<u32, Vec<String>> = [
            (1, ["cup", "mug", "glass"]),
            (2, ["plate", "dish", "saucer"]),
            (3, ["knife", "blade", "cutter"]),
            (4, ["pan", "frying pan", "skillet"]),
            (5, ["box", "carton", "crate"]),
            (6, ["cloth", "rag", "towel"]),
        ]
        .into_iter()
        .map(|(id, names)| (id, names.into_iter().map(String::from).collect()))
        .collect();
        let verbs = [
            "take", "grab", "lift", "wash", "rinse", "scrub", "cut", "slice", "chop", "shake",
            "flip", "tilt", "open", "close", "slide", "fold", "wipe", "press",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        SynthConfig {
            n_clips: 40,
            frames_per_clip: 2,
            width: 64,
            height: 64,
            min_objects: 2,
            max_objects: 3,
            classes,
            verbs,
            active_fraction: 0.34,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_clips == 0 || self.frames_per_clip == 0 {
            return Err(SynthError::BadConfig("clip and frame counts must be positive".into()));
        }
        if self.width < 16 || self.height < 16 {
            return Err(SynthError::BadConfig("frames must be at least 16x16".into()));
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return Err(SynthError::BadConfig("bad object count range".into()));
        }
        if !(0.0..=1.0).contains(&self.active_fraction) {
            return Err(SynthError::BadConfig("active_fraction outside [0,1]".into()));
        }
        if self.classes.is_empty() || self.classes.values().any(|v| v.is_empty()) {
            return Err(SynthError::BadConfig("classes must be non-empty".into()));
        }
        if self.verbs.is_empty() {
            return Err(SynthError::BadConfig("verb vocabulary is empty".into()));
        }
        if self.max_objects > u16::MAX as usize {
            return Err(SynthError::ObjectOverflow);
        }
        Ok(())
    }

    pub fn class_mapping(&self) -> ClassMapping {
        ClassMapping {
            classes: self.classes.clone(),
        }
    }

    /// Categories flattened in (class id, declared position) order, with the
    /// owning class id.
    pub fn category_table(&self) -> Vec<(u32, String)> {
        self.classes
            .iter()
            .flat_map(|(id, names)| names.iter().map(|n| (*id, n.clone())))
            .collect()
    }

    pub fn verb_for(&self, category_index: usize) -> &str {
        &self.verbs[category_index % self.verbs.len()]
    }
}

/// Deterministic per-category appearance: hue by class, brightness variant
/// within the class, rectangles for even classes and ellipses for odd ones.
fn category_color(class_pos: usize, n_classes: usize, within: usize, within_n: usize) -> [u8; 3] {
    let hue = class_pos as f64 / n_classes as f64;
    let sat = 0.85;
    let spread = if within_n > 1 {
        within as f64 / (within_n - 1) as f64
    } else {
        0.5
    };
    let val = 0.55 + 0.35 * spread;
    hsv_to_rgb(hue, sat, val)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let sector = h6 as usize % 6;
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

const BACKGROUND: [u8; 3] = [28, 28, 30];

#[derive(Debug, Clone)]
struct ShapeSpec {
    category_index: usize,
    class_id: u32,
    category: String,
    ellipse: bool,
    color: [u8; 3],
    w: usize,
    h: usize,
    x: usize,
    y: usize,
}

impl ShapeSpec {
    fn overlaps(&self, other: &ShapeSpec) -> bool {
        // Bounding boxes inflated by a 1-pixel gap.
        let (ax0, ax1) = (self.x.saturating_sub(1), self.x + self.w + 1);
        let (ay0, ay1) = (self.y.saturating_sub(1), self.y + self.h + 1);
        let (bx0, bx1) = (other.x, other.x + other.w);
        let (by0, by1) = (other.y, other.y + other.h);
        ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
    }

    fn covers(&self, px: usize, py: usize) -> bool {
        if px < self.x || py < self.y || px >= self.x + self.w || py >= self.y + self.h {
            return false;
        }
        if !self.ellipse {
            return true;
        }
        let rx = self.w as f64 / 2.0;
        let ry = self.h as f64 / 2.0;
        let cx = self.x as f64 + rx - 0.5;
        let cy = self.y as f64 + ry - 0.5;
        let dx = (px as f64 - cx) / rx;
        let dy = (py as f64 - cy) / ry;
        dx * dx + dy * dy <= 1.0
    }
}

/// Generates the dataset under `out`: `manifest.json`, `classes.json`,
/// `synth_config.json`, and per-clip P6 frames with P5 label masks.
///
/// Per clip `c`, the substream `"clip/{c}"` drives the draws in this order:
/// object count; category picks (without replacement); an object
/// permutation choosing the active set; per object a size pair and
/// placement attempts; then per frame and object one (dx, dy) pair.
pub fn synth_generate(cfg: &SynthConfig, out: impl AsRef<Path>) -> Result<Dataset, SynthError> {
    cfg.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out)?;

    let categories = cfg.category_table();
    let n_classes = cfg.classes.len();
    let class_pos: BTreeMap<u32, usize> = cfg
        .classes
        .keys()
        .enumerate()
        .map(|(pos, id)| (*id, pos))
        .collect();

    let mut clips = Vec::with_capacity(cfg.n_clips);
    for c in 0..cfg.n_clips {
        let clip_id = format!("clip{c:05}");
        let mut rng = rng_substream(cfg.seed, &format!("clip/{c}"));

        let n_obj = cfg.min_objects + rng.next_index(cfg.max_objects - cfg.min_objects + 1);

        // Draw distinct categories.
        let mut remaining: Vec<usize> = (0..categories.len()).collect();
        let mut picked = Vec::with_capacity(n_obj);
        for _ in 0..n_obj.min(remaining.len()) {
            let at = rng.next_index(remaining.len());
            picked.push(remaining.swap_remove(at));
        }
        let n_obj = picked.len();

        // Active subset: permute object slots, take the first k.
        let mut order: Vec<usize> = (0..n_obj).collect();
        for i in (1..n_obj).rev() {
            let j = rng.next_index(i + 1);
            order.swap(i, j);
        }
        let n_active = ((cfg.active_fraction * n_obj as f64).round() as usize).clamp(1, n_obj);
        let active_slots: Vec<usize> = order[..n_active].to_vec();
        let target_slot = active_slots[0];

        // Shapes with non-overlapping placements.
        let mut shapes: Vec<ShapeSpec> = Vec::with_capacity(n_obj);
        for (slot, &cat_idx) in picked.iter().enumerate() {
            let (class_id, name) = categories[cat_idx].clone();
            let pos = class_pos[&class_id];
            let within_n = cfg.classes[&class_id].len();
            let within = cfg.classes[&class_id]
                .iter()
                .position(|n| n == &name)
                .unwrap();
            let w = 10 + rng.next_index(9);
            let h = 10 + rng.next_index(9);
            let mut shape = ShapeSpec {
                category_index: cat_idx,
                class_id,
                category: name,
                ellipse: pos % 2 == 1,
                color: category_color(pos, n_classes, within, within_n),
                w,
                h,
                x: 0,
                y: 0,
            };
            let mut placed = false;
            for _ in 0..200 {
                shape.x = rng.next_index(cfg.width - w);
                shape.y = rng.next_index(cfg.height - h);
                if shapes.iter().all(|s| !shape.overlaps(s)) {
                    placed = true;
                    break;
                }
            }
            if !placed {
                // Deterministic scan fallback.
                'scan: for y in 0..cfg.height - h {
                    for x in 0..cfg.width - w {
                        shape.x = x;
                        shape.y = y;
                        if shapes.iter().all(|s| !shape.overlaps(s)) {
                            placed = true;
                            break 'scan;
                        }
                    }
                }
            }
            if !placed {
                return Err(SynthError::Placement { clip: c, object: slot });
            }
            shapes.push(shape);
        }

        let target = &shapes[target_slot];
        let narration = format!(
            "{} {}",
            cfg.verb_for(target.category_index),
            target.category
        );

        let clip_dir = out.join("clips").join(&clip_id);
        fs::create_dir_all(&clip_dir)?;

        let mut frames = Vec::with_capacity(cfg.frames_per_clip);
        let mut positions: Vec<(usize, usize)> = shapes.iter().map(|s| (s.x, s.y)).collect();
        for f in 0..cfg.frames_per_clip {
            if f > 0 {
                // Per-frame motion: each object shifts by (dx, dy) in
                // [-2, 2], reverted if it would leave the frame or collide.
                for i in 0..shapes.len() {
                    let dx = rng.next_index(5) as i64 - 2;
                    let dy = rng.next_index(5) as i64 - 2;
                    let nx = (positions[i].0 as i64 + dx)
                        .clamp(0, (cfg.width - shapes[i].w) as i64)
                        as usize;
                    let ny = (positions[i].1 as i64 + dy)
                        .clamp(0, (cfg.height - shapes[i].h) as i64)
                        as usize;
                    let mut candidate = shapes[i].clone();
                    candidate.x = nx;
                    candidate.y = ny;
                    let collides = shapes.iter().enumerate().any(|(j, other)| {
                        if i == j {
                            return false;
                        }
                        let mut placed = other.clone();
                        placed.x = positions[j].0;
                        placed.y = positions[j].1;
                        candidate.overlaps(&placed)
                    });
                    if !collides {
                        positions[i] = (nx, ny);
                    }
                }
            }

            let mut image = vec![0u8; 3 * cfg.width * cfg.height];
            for (i, px) in image.chunks_exact_mut(3).enumerate() {
                let _ = i;
                px.copy_from_slice(&BACKGROUND);
            }
            let mut mask = LabelMask::zeros(cfg.width, cfg.height);
            for (slot, shape) in shapes.iter().enumerate() {
                let mut placed = shape.clone();
                placed.x = positions[slot].0;
                placed.y = positions[slot].1;
                let id = (slot + 1) as u16;
                for y in placed.y..placed.y + placed.h {
                    for x in placed.x..placed.x + placed.w {
                        if placed.covers(x, y) {
                            mask.set(x, y, id);
                            let at = 3 * (y * cfg.width + x);
                            image[at..at + 3].copy_from_slice(&placed.color);
                        }
                    }
                }
            }

            let frame_id = format!("f{f:05}");
            let image_rel = format!("clips/{clip_id}/{frame_id}.ppm");
            let mask_rel = format!("clips/{clip_id}/{frame_id}.pgm");
            write_image(
                &RgbImage::new(cfg.width, cfg.height, image),
                out.join(&image_rel),
            )?;
            write_mask(&mask, out.join(&mask_rel))?;
            frames.push(FrameRef {
                frame_id,
                image: image_rel,
                mask: mask_rel,
            });
        }

        let objects = shapes
            .iter()
            .enumerate()
            .map(|(slot, shape)| PromptRecord {
                clip_id: clip_id.clone(),
                object_id: (slot + 1) as u32,
                category: shape.category.clone(),
                class_id: shape.class_id,
                narration: narration.clone(),
                active: active_slots.contains(&slot),
            })
            .collect();

        clips.push(Clip {
            clip_id,
            frames,
            objects,
        });
    }

    let dataset = Dataset {
        root: out.to_path_buf(),
        clips,
    };
    save_manifest(&dataset)?;
    cfg.class_mapping().save(out.join("classes.json"))?;
    let mut cfg_bytes = serde_json::to_vec_pretty(cfg).expect("config serializes");
    cfg_bytes.push(b'\n');
    fs::write(out.join("synth_config.json"), cfg_bytes)?;
    Ok(dataset)
}
