//! Dataset manifest: the JSON document tying clips, frames, masks, and
//! prompt records together, plus the class-mapping file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported manifest version {0}")]
    Version(u32),
    #[error("clip {clip_id}: duplicate object_id {object_id}")]
    DuplicateObject { clip_id: String, object_id: u32 },
    #[error("clip {clip_id}: referenced file does not exist: {path}")]
    DanglingPath { clip_id: String, path: String },
    #[error("clip {clip_id}: {detail}")]
    Invalid { clip_id: String, detail: String },
    #[error("class mapping: {0}")]
    Mapping(String),
}

fn io_err(path: &Path, source: io::Error) -> ManifestError {
    ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One (clip, object) supervision unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    #[serde(skip)]
    pub clip_id: String,
    pub object_id: u32,
    pub category: String,
    pub class_id: u32,
    pub narration: String,
    pub active: bool,
}

impl PromptRecord {
    /// The fixed prompt template; corruption rewrites only `category`.
    pub fn render_prompt(&self) -> String {
        format!("{} used in the action of {}", self.category, self.narration)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub frame_id: String,
    /// Path of the P6 frame image, relative to the dataset root.
    pub image: String,
    /// Path of the P5 label mask, relative to the dataset root.
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub frames: Vec<FrameRef>,
    pub objects: Vec<PromptRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestDoc {
    version: u32,
    clips: Vec<Clip>,
}

/// A fully validated in-memory dataset rooted at a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub root: PathBuf,
    pub clips: Vec<Clip>,
}

impl Dataset {
    /// Resolves a manifest-relative path against the dataset root.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// All prompt records in manifest order.
    pub fn prompts(&self) -> impl Iterator<Item = &PromptRecord> {
        self.clips.iter().flat_map(|c| c.objects.iter())
    }

    pub fn prompt_count(&self) -> usize {
        self.clips.iter().map(|c| c.objects.len()).sum()
    }
}

/// Loads and validates `root/manifest.json`.
///
/// Either every TYPE invariant holds on the returned dataset or a structured
/// error is raised; no partially valid dataset escapes.
pub fn load_manifest(root: impl AsRef<Path>) -> Result<Dataset, ManifestError> {
    let root = root.as_ref().to_path_buf();
    let path = root.join("manifest.json");
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let doc: ManifestDoc = serde_json::from_slice(&bytes)?;
    if doc.version != MANIFEST_VERSION {
        return Err(ManifestError::Version(doc.version));
    }

    let mut clips = doc.clips;
    for clip in &mut clips {
        if clip.frames.is_empty() {
            return Err(ManifestError::Invalid {
                clip_id: clip.clip_id.clone(),
                detail: "clip has no frames".into(),
            });
        }
        let mut seen = BTreeSet::new();
        for obj in &mut clip.objects {
            obj.clip_id = clip.clip_id.clone();
            if obj.object_id == 0 {
                return Err(ManifestError::Invalid {
                    clip_id: clip.clip_id.clone(),
                    detail: "object_id must be >= 1".into(),
                });
            }
            if obj.object_id > u32::from(u16::MAX) {
                return Err(ManifestError::Invalid {
                    clip_id: clip.clip_id.clone(),
                    detail: format!("object_id {} exceeds 65535", obj.object_id),
                });
            }
            if !seen.insert(obj.object_id) {
                return Err(ManifestError::DuplicateObject {
                    clip_id: clip.clip_id.clone(),
                    object_id: obj.object_id,
                });
            }
        }
        for frame in &clip.frames {
            for rel in [&frame.image, &frame.mask] {
                if !root.join(rel).is_file() {
                    return Err(ManifestError::DanglingPath {
                        clip_id: clip.clip_id.clone(),
                        path: rel.clone(),
                    });
                }
            }
        }
    }
    Ok(Dataset { root, clips })
}

/// Writes `root/manifest.json` with canonical (pretty, field-ordered) bytes.
pub fn save_manifest(dataset: &Dataset) -> Result<(), ManifestError> {
    let doc = ManifestDoc {
        version: MANIFEST_VERSION,
        clips: dataset.clips.clone(),
    };
    let path = dataset.root.join("manifest.json");
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))
}

/// Map from class id to the ordered list of category names of that class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMapping {
    pub classes: BTreeMap<u32, Vec<String>>,
}

impl ClassMapping {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let mapping: ClassMapping = serde_json::from_slice(&bytes)?;
        mapping.validate()?;
        Ok(mapping)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(path, bytes).map_err(|e| io_err(path, e))
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.classes.is_empty() {
            return Err(ManifestError::Mapping("no classes declared".into()));
        }
        for (class_id, names) in &self.classes {
            if names.is_empty() {
                return Err(ManifestError::Mapping(format!(
                    "class {class_id} has an empty category list"
                )));
            }
            let unique: BTreeSet<&String> = names.iter().collect();
            if unique.len() != names.len() {
                return Err(ManifestError::Mapping(format!(
                    "class {class_id} has duplicate category names"
                )));
            }
        }
        Ok(())
    }

    pub fn categories(&self, class_id: u32) -> Option<&[String]> {
        self.classes.get(&class_id).map(|v| v.as_slice())
    }

    /// Class ids in ascending order.
    pub fn class_ids(&self) -> Vec<u32> {
        self.classes.keys().copied().collect()
    }

    /// All category names in (class id, declared position) order.
    pub fn all_categories(&self) -> Vec<&str> {
        self.classes
            .values()
            .flat_map(|names| names.iter().map(String::as_str))
            .collect()
    }
}

/// Noise configuration attached to a corrupted corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Text flip probability rho in [0,1].
    pub text_rate: f64,
    /// Dilation kernel side, 0 = no mask noise.
    pub kernel: u32,
    pub seed: u64,
}

impl NoiseSpec {
    pub const ALLOWED_KERNELS: [u32; 4] = [0, 9, 15, 21];

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.text_rate) {
            return Err(format!("text_rate {} outside [0,1]", self.text_rate));
        }
        if !Self::ALLOWED_KERNELS.contains(&self.kernel) {
            return Err(format!(
                "kernel {} not in {:?}",
                self.kernel,
                Self::ALLOWED_KERNELS
            ));
        }
        Ok(())
    }
}
