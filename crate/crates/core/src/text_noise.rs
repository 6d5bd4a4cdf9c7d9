//! Text prompt noise: symmetric class flipping plus within-class synonym
//! substitution, with per-prompt provenance and distribution diagnostics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{rng_substream, ClassMapping, Dataset, DeterministicRng};

#[derive(Debug, Error)]
pub enum TextNoiseError {
    #[error("unknown class_id {0}")]
    UnknownClass(u32),
    #[error("category {category:?} is not in the list for class {class_id}")]
    CategoryNotInClass { category: String, class_id: u32 },
    #[error("cannot flip: class mapping declares a single class")]
    SingleClass,
    #[error("noise rate {0} outside [0,1]")]
    BadRate(f64),
    #[error("clip {clip_id} object {object_id}: {source}")]
    Prompt {
        clip_id: String,
        object_id: u32,
        #[source]
        source: Box<TextNoiseError>,
    },
    #[error("empty dataset")]
    EmptyDataset,
}

/// Which branch of the corruption procedure produced an emitted category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseBranch {
    Flipped,
    Synonym,
}

/// Per-prompt record of what the corruption did.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextNoiseProvenance {
    pub clip_id: String,
    pub object_id: u32,
    pub original_category: String,
    pub emitted_category: String,
    pub branch: NoiseBranch,
    /// Class the category was flipped into; `None` on the synonym branch.
    pub flipped_class_id: Option<u32>,
}

/// Corrupts one category.
///
/// Draw order is part of the contract: `d1 = uniform01` decides the branch;
/// a flip draws `d2 = next_index(K-1)` over the other classes in ascending
/// class-id order then `d3 = next_index(|M(class_flip)|)`; otherwise
/// `d2 = next_index(|M(class)|)` picks a same-class name, possibly the
/// original.
pub fn corrupt_category(
    category: &str,
    class_id: u32,
    rate: f64,
    mapping: &ClassMapping,
    rng: &mut DeterministicRng,
) -> Result<(String, NoiseBranch, Option<u32>), TextNoiseError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(TextNoiseError::BadRate(rate));
    }
    let own = mapping
        .categories(class_id)
        .ok_or(TextNoiseError::UnknownClass(class_id))?;
    if !own.iter().any(|c| c == category) {
        return Err(TextNoiseError::CategoryNotInClass {
            category: category.to_string(),
            class_id,
        });
    }

    let d1 = rng.next_uniform01();
    if d1 < rate {
        let others: Vec<u32> = mapping
            .class_ids()
            .into_iter()
            .filter(|&id| id != class_id)
            .collect();
        if others.is_empty() {
            return Err(TextNoiseError::SingleClass);
        }
        let flip_class = others[rng.next_index(others.len())];
        let pool = mapping.categories(flip_class).expect("validated mapping");
        let emitted = pool[rng.next_index(pool.len())].clone();
        Ok((emitted, NoiseBranch::Flipped, Some(flip_class)))
    } else {
        let emitted = own[rng.next_index(own.len())].clone();
        Ok((emitted, NoiseBranch::Synonym, None))
    }
}

/// Corrupts every prompt record of a dataset in place.
///
/// Each prompt owns the substream labelled `"{clip_id}/{object_id}"`, so any
/// subset of the corpus corrupts identically regardless of iteration order.
/// Only category fields (and hence rendered prompts) change; masks, class
/// ids, narrations, and active flags are untouched. With `active_only`,
/// inactive prompts pass through unchanged (and get no provenance record).
pub fn corrupt_dataset_text(
    dataset: &mut Dataset,
    rate: f64,
    mapping: &ClassMapping,
    seed: u64,
    active_only: bool,
) -> Result<Vec<TextNoiseProvenance>, TextNoiseError> {
    let mut log = Vec::with_capacity(dataset.prompt_count());
    for clip in &mut dataset.clips {
        for obj in &mut clip.objects {
            if active_only && !obj.active {
                continue;
            }
            let label = format!("{}/{}", clip.clip_id, obj.object_id);
            let mut rng = rng_substream(seed, &label);
            let (emitted, branch, flipped_class_id) =
                corrupt_category(&obj.category, obj.class_id, rate, mapping, &mut rng).map_err(
                    |source| TextNoiseError::Prompt {
                        clip_id: clip.clip_id.clone(),
                        object_id: obj.object_id,
                        source: Box::new(source),
                    },
                )?;
            log.push(TextNoiseProvenance {
                clip_id: clip.clip_id.clone(),
                object_id: obj.object_id,
                original_category: std::mem::replace(&mut obj.category, emitted.clone()),
                emitted_category: emitted,
                branch,
                flipped_class_id,
            });
        }
    }
    Ok(log)
}

/// Category distribution over all prompt records, proportions summing to 1.
pub fn category_histogram(dataset: &Dataset) -> Result<BTreeMap<String, f64>, TextNoiseError> {
    let total = dataset.prompt_count();
    if total == 0 {
        return Err(TextNoiseError::EmptyDataset);
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for prompt in dataset.prompts() {
        *counts.entry(prompt.category.clone()).or_insert(0) += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(cat, n)| (cat, n as f64 / total as f64))
        .collect())
}

/// One row of the before/after distribution comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub category: String,
    pub clean: f64,
    pub noisy: f64,
    pub delta: f64,
}

/// Compares clean and noisy histograms: one row per major category (clean
/// proportion above `threshold`, descending) plus an aggregated "Others" row.
pub fn shift_report(
    clean: &BTreeMap<String, f64>,
    noisy: &BTreeMap<String, f64>,
    threshold: f64,
) -> Vec<ShiftRow> {
    let mut major: Vec<(&String, f64)> = clean
        .iter()
        .filter(|(_, &p)| p > threshold)
        .map(|(c, &p)| (c, p))
        .collect();
    major.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));

    let mut rows = Vec::with_capacity(major.len() + 1);
    let mut clean_major = 0.0;
    let mut noisy_major = 0.0;
    for (category, clean_p) in major {
        let noisy_p = noisy.get(category).copied().unwrap_or(0.0);
        clean_major += clean_p;
        noisy_major += noisy_p;
        rows.push(ShiftRow {
            category: category.clone(),
            clean: clean_p,
            noisy: noisy_p,
            delta: noisy_p - clean_p,
        });
    }
    let (clean_rest, noisy_rest) = (1.0 - clean_major, 1.0 - noisy_major);
    rows.push(ShiftRow {
        category: "Others".to_string(),
        clean: clean_rest,
        noisy: noisy_rest,
        delta: noisy_rest - clean_rest,
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Clip, FrameRef, PromptRecord};
    use std::collections::BTreeMap;
    use std::path::PathBuf;

    fn mapping(classes: &[(u32, &[&str])]) -> ClassMapping {
        let classes = classes
            .iter()
            .map(|(id, names)| (*id, names.iter().map(|s| s.to_string()).collect()))
            .collect();
        ClassMapping { classes }
    }

    fn paper_style_mapping() -> ClassMapping {
        mapping(&[
            (1, &["container", "food container", "cheese container"]),
            (2, &["fridge"]),
        ])
    }

    fn toy_dataset(prompts: &[(&str, u32, &str, u32)]) -> Dataset {
        let mut clips: BTreeMap<String, Clip> = BTreeMap::new();
        for (clip_id, object_id, category, class_id) in prompts {
            let clip = clips.entry(clip_id.to_string()).or_insert_with(|| Clip {
                clip_id: clip_id.to_string(),
                frames: vec![FrameRef {
                    frame_id: "f0".into(),
                    image: "f0.ppm".into(),
                    mask: "f0.pgm".into(),
                }],
                objects: vec![],
            });
            clip.objects.push(PromptRecord {
                clip_id: clip_id.to_string(),
                object_id: *object_id,
                category: category.to_string(),
                class_id: *class_id,
                narration: "open fridge".into(),
                active: true,
            });
        }
        Dataset {
            root: PathBuf::from("."),
            clips: clips.into_values().collect(),
        }
    }

    #[test]
    fn forced_flip_moves_container_to_fridge() {
        // With two classes, rate 1 forces the flip branch, and the only
        // other class holds a single name.
        let mapping = paper_style_mapping();
        let mut rng = rng_substream(11, "flip");
        let (emitted, branch, flipped) =
            corrupt_category("container", 1, 1.0, &mapping, &mut rng).unwrap();
        assert_eq!(emitted, "fridge");
        assert_eq!(branch, NoiseBranch::Flipped);
        assert_eq!(flipped, Some(2));
    }

    #[test]
    fn rate_zero_singleton_class_is_identity() {
        let mapping = mapping(&[(1, &["celery"]), (2, &["fridge"])]);
        let mut rng = rng_substream(3, "identity");
        for _ in 0..50 {
            let (emitted, branch, _) =
                corrupt_category("celery", 1, 0.0, &mapping, &mut rng).unwrap();
            assert_eq!(emitted, "celery");
            assert_eq!(branch, NoiseBranch::Synonym);
        }
    }

    #[test]
    fn rate_one_always_changes_class() {
        let mapping = mapping(&[
            (1, &["container", "food container"]),
            (2, &["fridge"]),
            (5, &["pan", "frying pan"]),
        ]);
        let mut rng = rng_substream(17, "always-flip");
        for _ in 0..200 {
            let (emitted, branch, flipped) =
                corrupt_category("container", 1, 1.0, &mapping, &mut rng).unwrap();
            assert_eq!(branch, NoiseBranch::Flipped);
            let flip_class = flipped.unwrap();
            assert_ne!(flip_class, 1);
            assert!(mapping
                .categories(flip_class)
                .unwrap()
                .iter()
                .any(|c| c == &emitted));
        }
    }

    #[test]
    fn synonym_branch_stays_within_class() {
        let mapping = paper_style_mapping();
        let mut rng = rng_substream(29, "synonym");
        let mut seen = BTreeMap::new();
        for _ in 0..300 {
            let (emitted, branch, flipped) =
                corrupt_category("container", 1, 0.0, &mapping, &mut rng).unwrap();
            assert_eq!(branch, NoiseBranch::Synonym);
            assert_eq!(flipped, None);
            assert!(mapping.categories(1).unwrap().iter().any(|c| c == &emitted));
            *seen.entry(emitted).or_insert(0usize) += 1;
        }
        // Uniform sampling without exclusion reaches every name, including
        // the original.
        assert_eq!(seen.len(), 3);
        assert!(seen.contains_key("container"));
        assert!(seen.contains_key("food container"));
        assert!(seen.contains_key("cheese container"));
    }

    #[test]
    fn unknown_class_and_foreign_category_error() {
        let mapping = paper_style_mapping();
        let mut rng = rng_substream(1, "err");
        assert!(matches!(
            corrupt_category("container", 9, 0.5, &mapping, &mut rng),
            Err(TextNoiseError::UnknownClass(9))
        ));
        assert!(matches!(
            corrupt_category("fridge", 1, 0.5, &mapping, &mut rng),
            Err(TextNoiseError::CategoryNotInClass { .. })
        ));
    }

    #[test]
    fn dataset_corruption_rate_zero_singletons_is_identity() {
        let mapping = mapping(&[(1, &["celery"]), (2, &["fridge"])]);
        let mut ds = toy_dataset(&[("c0", 1, "celery", 1), ("c1", 1, "fridge", 2)]);
        let before = ds.clone();
        let log = corrupt_dataset_text(&mut ds, 0.0, &mapping, 7, false).unwrap();
        assert_eq!(ds, before);
        assert_eq!(log.len(), 2);
        assert!(log.iter().all(|p| p.branch == NoiseBranch::Synonym));
    }

    #[test]
    fn dataset_corruption_is_subset_stable() {
        // A prompt draws from its own substream, so corrupting a superset
        // leaves shared prompts identical.
        let mapping = paper_style_mapping();
        let mut full = toy_dataset(&[("c0", 1, "container", 1), ("c1", 2, "fridge", 2)]);
        let mut sub = toy_dataset(&[("c1", 2, "fridge", 2)]);
        corrupt_dataset_text(&mut full, 0.5, &mapping, 99, false).unwrap();
        corrupt_dataset_text(&mut sub, 0.5, &mapping, 99, false).unwrap();
        let full_c1 = &full
            .clips
            .iter()
            .find(|c| c.clip_id == "c1")
            .unwrap()
            .objects[0];
        assert_eq!(full_c1.category, sub.clips[0].objects[0].category);
    }

    #[test]
    fn provenance_class_change_soundness() {
        let mapping = mapping(&[
            (1, &["container", "food container"]),
            (2, &["fridge", "mini fridge"]),
            (3, &["pan"]),
        ]);
        let class_of = |name: &str| -> u32 {
            for id in mapping.class_ids() {
                if mapping.categories(id).unwrap().iter().any(|c| c == name) {
                    return id;
                }
            }
            panic!("unknown category {name}");
        };
        let prompts: Vec<(String, u32)> = (0..400).map(|i| (format!("c{i}"), 1u32)).collect();
        let mut ds = toy_dataset(
            &prompts
                .iter()
                .map(|(c, o)| (c.as_str(), *o, "container", 1))
                .collect::<Vec<_>>(),
        );
        let log = corrupt_dataset_text(&mut ds, 0.5, &mapping, 123, false).unwrap();
        for p in &log {
            let emitted_class = class_of(&p.emitted_category);
            match p.branch {
                NoiseBranch::Flipped => {
                    assert_ne!(emitted_class, 1);
                    assert_eq!(Some(emitted_class), p.flipped_class_id);
                }
                NoiseBranch::Synonym => assert_eq!(emitted_class, 1),
            }
        }
    }

    #[test]
    fn flipped_fraction_concentrates_at_rate() {
        // Binomial Monte Carlo oracle: at N=100_000 and rho=0.4 the 3-sigma
        // band is +-0.00465.
        let mapping = mapping(&[(1, &["a1", "a2"]), (2, &["b1"]), (3, &["c1", "c2", "c3"])]);
        let prompts: Vec<String> = (0..100_000).map(|i| format!("c{i}")).collect();
        let mut ds = toy_dataset(
            &prompts
                .iter()
                .map(|c| (c.as_str(), 1u32, "a1", 1u32))
                .collect::<Vec<_>>(),
        );
        let log = corrupt_dataset_text(&mut ds, 0.4, &mapping, 2024, false).unwrap();
        let flipped = log
            .iter()
            .filter(|p| p.branch == NoiseBranch::Flipped)
            .count() as f64;
        let fraction = flipped / log.len() as f64;
        assert!(
            (fraction - 0.4).abs() <= 0.005,
            "flip fraction {fraction} outside 0.4 +- 0.005"
        );
    }

    #[test]
    fn active_only_skips_inactive_prompts() {
        let mapping = paper_style_mapping();
        let mut ds = toy_dataset(&[("c0", 1, "container", 1), ("c0", 2, "food container", 1)]);
        ds.clips[0].objects[1].active = false;
        let log = corrupt_dataset_text(&mut ds, 1.0, &mapping, 5, true).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(ds.clips[0].objects[1].category, "food container");
        assert_eq!(ds.clips[0].objects[0].category, "fridge");
    }

    #[test]
    fn histogram_counts_prompts() {
        let ds = toy_dataset(&[("c0", 1, "a", 1), ("c1", 1, "a", 1)]);
        let hist = category_histogram(&ds).unwrap();
        assert_eq!(hist.len(), 1);
        assert!((hist["a"] - 1.0).abs() < 1e-12);

        let ds = toy_dataset(&[
            ("c0", 1, "a", 1),
            ("c1", 1, "a", 1),
            ("c2", 1, "b", 1),
            ("c3", 1, "c", 1),
        ]);
        let hist = category_histogram(&ds).unwrap();
        assert!((hist["a"] - 0.5).abs() < 1e-12);
        assert!((hist["b"] - 0.25).abs() < 1e-12);
        assert!((hist["c"] - 0.25).abs() < 1e-12);
        assert!((hist.values().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_of_empty_dataset_errors() {
        let ds = Dataset {
            root: PathBuf::from("."),
            clips: vec![],
        };
        assert!(matches!(
            category_histogram(&ds),
            Err(TextNoiseError::EmptyDataset)
        ));
    }

    #[test]
    fn shift_report_identity_and_arithmetic() {
        let mut clean = BTreeMap::new();
        clean.insert("a".to_string(), 0.9);
        clean.insert("b".to_string(), 0.1);
        let rows = shift_report(&clean, &clean, 0.01);
        assert!(rows.iter().all(|r| r.delta.abs() < 1e-12));

        let mut noisy = BTreeMap::new();
        noisy.insert("a".to_string(), 0.5);
        noisy.insert("b".to_string(), 0.5);
        let rows = shift_report(&clean, &noisy, 0.01);
        assert_eq!(rows.len(), 3); // a, b, Others
        assert_eq!(rows[0].category, "a");
        assert!((rows[0].clean - 0.9).abs() < 1e-12 && (rows[0].noisy - 0.5).abs() < 1e-12);
        assert_eq!(rows[1].category, "b");
        assert!((rows[1].clean - 0.1).abs() < 1e-12 && (rows[1].noisy - 0.5).abs() < 1e-12);
        assert_eq!(rows[2].category, "Others");
        assert!(rows[2].clean.abs() < 1e-12);
    }

    #[test]
    fn heavy_flipping_shrinks_dominant_share_and_grows_others() {
        // Directional check: a dominant category diluted by flips loses
        // share, and the long tail ("Others") gains.
        let mapping = mapping(&[
            (1, &["left hand"]),
            (2, &["t1"]),
            (3, &["t2"]),
            (4, &["t3"]),
            (5, &["t4"]),
            (6, &["t5"]),
        ]);
        let names: Vec<String> = (0..4000).map(|i| format!("c{i}")).collect();
        let prompts: Vec<(&str, u32, &str, u32)> = names
            .iter()
            .enumerate()
            .map(|(i, c)| {
                // 40% dominant category, the rest spread over the tail.
                if i % 5 < 2 {
                    (c.as_str(), 1u32, "left hand", 1u32)
                } else {
                    let k = (i % 5) - 1; // 1..=3
                    let cat: &str = ["t1", "t2", "t3", "t4", "t5"][k];
                    (c.as_str(), 1u32, cat, 2 + k as u32)
                }
            })
            .collect();
        let mut ds = toy_dataset(&prompts);
        let clean_hist = category_histogram(&ds).unwrap();
        corrupt_dataset_text(&mut ds, 0.6, &mapping, 7, false).unwrap();
        let noisy_hist = category_histogram(&ds).unwrap();
        assert!(noisy_hist["left hand"] < clean_hist["left hand"]);

        let rows = shift_report(&clean_hist, &noisy_hist, 0.25);
        let others = rows.last().unwrap();
        assert_eq!(others.category, "Others");
        assert!(others.delta > 0.0, "Others share must grow under flipping");
    }
}
