//! Partitioned evaluation suite: mean and cumulative IoU split by active and
//! inactive samples, generalized IoU with the no-target convention, and
//! active-object classification accuracy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::BinaryMask;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mask dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("empty sample set")]
    EmptySamples,
    #[error("missing prediction for clip {clip_id} object {object_id} frame {frame_id}")]
    MissingPrediction {
        clip_id: String,
        object_id: u32,
        frame_id: String,
    },
}

/// One (object, frame) evaluation unit.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub clip_id: String,
    pub object_id: u32,
    pub frame_id: String,
    /// Probability map thresholded at 0.5.
    pub prediction: BinaryMask,
    /// The object's annotated region in the clean mask.
    pub gt_region: BinaryMask,
    pub active: bool,
}

/// Per-sample row kept in the report for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub clip_id: String,
    pub object_id: u32,
    pub frame_id: String,
    pub active: bool,
    pub iou: f64,
    pub intersection: u64,
    pub union: u64,
    pub pred_empty: bool,
}

/// The six-metric evaluation report. Partition means are `None` when the
/// partition is empty, never silently 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p_miou: Option<f64>,
    pub n_miou: Option<f64>,
    pub p_ciou: Option<f64>,
    pub n_ciou: Option<f64>,
    pub giou: f64,
    pub acc: f64,
    pub samples: Vec<SampleRow>,
}

impl MetricsReport {
    pub fn positive_count(&self) -> usize {
        self.samples.iter().filter(|s| s.active).count()
    }

    pub fn negative_count(&self) -> usize {
        self.samples.iter().filter(|s| !s.active).count()
    }
}

/// |P∩G| / |P∪G| with the 0/0 := 1 convention.
pub fn iou(prediction: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricsError> {
    let (i, u) = intersection_union(prediction, gt)?;
    Ok(if u == 0 { 1.0 } else { i as f64 / u as f64 })
}

fn intersection_union(p: &BinaryMask, g: &BinaryMask) -> Result<(u64, u64), MetricsError> {
    if p.width() != g.width() || p.height() != g.height() {
        return Err(MetricsError::DimensionMismatch(
            p.width(),
            p.height(),
            g.width(),
            g.height(),
        ));
    }
    let mut inter = 0u64;
    let mut union = 0u64;
    for (&a, &b) in p.bits().iter().zip(g.bits()) {
        inter += u64::from(a == 1 && b == 1);
        union += u64::from(a == 1 || b == 1);
    }
    Ok((inter, union))
}

/// Mean IoU per partition: positives over active samples, negatives over
/// inactive ones (lower is better there).
pub fn partitioned_miou(
    samples: &[EvalSample],
) -> Result<(Option<f64>, Option<f64>), MetricsError> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for s in samples {
        let idx = usize::from(!s.active);
        sums[idx] += iou(&s.prediction, &s.gt_region)?;
        counts[idx] += 1;
    }
    let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / counts[i] as f64);
    Ok((mean(0), mean(1)))
}

/// Cumulative IoU per partition: Σ intersections / Σ unions, 0/0 := 1.
pub fn partitioned_ciou(
    samples: &[EvalSample],
) -> Result<(Option<f64>, Option<f64>), MetricsError> {
    let mut inter = [0u64; 2];
    let mut union = [0u64; 2];
    let mut counts = [0usize; 2];
    for s in samples {
        let idx = usize::from(!s.active);
        let (i, u) = intersection_union(&s.prediction, &s.gt_region)?;
        inter[idx] += i;
        union[idx] += u;
        counts[idx] += 1;
    }
    let ratio = |i: usize| {
        (counts[i] > 0).then(|| {
            if union[i] == 0 {
                1.0
            } else {
                inter[i] as f64 / union[i] as f64
            }
        })
    };
    Ok((ratio(0), ratio(1)))
}

/// Generalized IoU: per-sample IoU for active samples; for inactive samples
/// the no-target convention scores 1 for an empty prediction, else 0.
pub fn giou(samples: &[EvalSample]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mut sum = 0.0;
    for s in samples {
        sum += if s.active {
            iou(&s.prediction, &s.gt_region)?
        } else if s.prediction.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    Ok(sum / samples.len() as f64)
}

/// Fraction of object-level active/inactive decisions that match the truth.
pub fn accuracy(object_scores: &[(bool, bool)]) -> Result<f64, MetricsError> {
    if object_scores.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let hits = object_scores
        .iter()
        .filter(|(predicted, truth)| predicted == truth)
        .count();
    Ok(hits as f64 / object_scores.len() as f64)
}

/// Assembles the full report from per-frame samples and per-object
/// activity decisions.
pub fn build_report(
    samples: &[EvalSample],
    object_scores: &[(bool, bool)],
) -> Result<MetricsReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let (p_miou, n_miou) = partitioned_miou(samples)?;
    let (p_ciou, n_ciou) = partitioned_ciou(samples)?;
    let giou = giou(samples)?;
    let acc = accuracy(object_scores)?;
    let rows = samples
        .iter()
        .map(|s| {
            let (i, u) = intersection_union(&s.prediction, &s.gt_region)?;
            Ok(SampleRow {
                clip_id: s.clip_id.clone(),
                object_id: s.object_id,
                frame_id: s.frame_id.clone(),
                active: s.active,
                iou: if u == 0 { 1.0 } else { i as f64 / u as f64 },
                intersection: i,
                union: u,
                pred_empty: s.prediction.is_empty(),
            })
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;
    Ok(MetricsReport {
        p_miou,
        n_miou,
        p_ciou,
        n_ciou,
        giou,
        acc,
        samples: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::rng_substream;
    use proptest::prelude::*;

    fn mask(w: usize, h: usize, ones: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::zeros(w, h);
        for &(x, y) in ones {
            m.set(x, y, 1);
        }
        m
    }

    fn sample(pred: BinaryMask, gt: BinaryMask, active: bool) -> EvalSample {
        EvalSample {
            clip_id: "c".into(),
            object_id: 1,
            frame_id: "f".into(),
            prediction: pred,
            gt_region: gt,
            active,
        }
    }

    #[test]
    fn iou_basic_cases() {
        let a = mask(4, 2, &[(0, 0), (1, 0)]);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);

        let b = mask(4, 2, &[(3, 1)]);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);

        // |P|=6, |G|=4, |P∩G|=3 -> 3/7
        let p = mask(4, 2, &[(0, 0), (1, 0), (2, 0), (3, 0), (0, 1), (1, 1)]);
        let g = mask(4, 2, &[(0, 0), (1, 0), (2, 0), (3, 1)]);
        assert!((iou(&p, &g).unwrap() - 3.0 / 7.0).abs() < 1e-15);

        let empty = BinaryMask::zeros(4, 2);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0, "0/0 convention");

        let tall = BinaryMask::zeros(2, 4);
        assert!(matches!(
            iou(&a, &tall),
            Err(MetricsError::DimensionMismatch(..))
        ));
    }

    #[test]
    fn partitioned_means_match_arithmetic() {
        // {IoU .5 active, .25 active, .1 inactive} -> p = .375, n = .1
        let s = vec![
            sample(mask(2, 2, &[(0, 0)]), mask(2, 2, &[(0, 0), (1, 0)]), true), // 1/2
            sample(
                mask(4, 1, &[(0, 0)]),
                mask(4, 1, &[(0, 0), (1, 0), (2, 0), (3, 0)]),
                true,
            ), // 1/4
            sample(
                mask(10, 1, &[(0, 0)]),
                mask(
                    10,
                    1,
                    &[
                        (0, 0),
                        (1, 0),
                        (2, 0),
                        (3, 0),
                        (4, 0),
                        (5, 0),
                        (6, 0),
                        (7, 0),
                        (8, 0),
                        (9, 0),
                    ],
                ),
                false,
            ), // 1/10
        ];
        let (p, n) = partitioned_miou(&s).unwrap();
        assert!((p.unwrap() - 0.375).abs() < 1e-15);
        assert!((n.unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn all_exact_actives_give_one_and_empty_partition_is_none() {
        let g = mask(3, 3, &[(1, 1), (2, 1)]);
        let s = vec![sample(g.clone(), g.clone(), true)];
        let (p, n) = partitioned_miou(&s).unwrap();
        assert_eq!(p, Some(1.0));
        assert_eq!(n, None);
    }

    #[test]
    fn empty_predictions_on_inactives_score_zero() {
        let g = mask(3, 3, &[(1, 1)]);
        let s = vec![sample(BinaryMask::zeros(3, 3), g, false)];
        let (_, n) = partitioned_miou(&s).unwrap();
        assert_eq!(n, Some(0.0));
        let (_, nc) = partitioned_ciou(&s).unwrap();
        assert_eq!(nc, Some(0.0));
    }

    #[test]
    fn cumulative_differs_from_mean() {
        // samples (I=3,U=7),(I=1,U=3): cIoU = 4/10, mIoU = (3/7 + 1/3)/2
        let s = vec![
            sample(
                mask(8, 1, &[(0, 0), (1, 0), (2, 0), (3, 0), (4, 0), (5, 0)]),
                mask(8, 1, &[(0, 0), (1, 0), (2, 0), (6, 0)]),
                true,
            ),
            sample(
                mask(4, 1, &[(0, 0), (1, 0)]),
                mask(4, 1, &[(1, 0), (2, 0)]),
                true,
            ),
        ];
        let (p_ciou, _) = partitioned_ciou(&s).unwrap();
        assert!((p_ciou.unwrap() - 0.4).abs() < 1e-15);
        let (p_miou, _) = partitioned_miou(&s).unwrap();
        let expected = (3.0 / 7.0 + 1.0 / 3.0) / 2.0;
        assert!((p_miou.unwrap() - expected).abs() < 1e-15);
        assert!((p_miou.unwrap() - 0.3810).abs() < 1e-4);
    }

    #[test]
    fn single_sample_ciou_equals_its_iou() {
        let p = mask(4, 1, &[(0, 0), (1, 0)]);
        let g = mask(4, 1, &[(1, 0), (2, 0)]);
        let s = vec![sample(p.clone(), g.clone(), true)];
        let (c, _) = partitioned_ciou(&s).unwrap();
        assert_eq!(c.unwrap(), iou(&p, &g).unwrap());
    }

    #[test]
    fn giou_no_target_convention() {
        // one active IoU .5 + one inactive empty-pred -> 0.75
        let s = vec![
            sample(mask(2, 2, &[(0, 0)]), mask(2, 2, &[(0, 0), (1, 0)]), true),
            sample(BinaryMask::zeros(2, 2), mask(2, 2, &[(1, 1)]), false),
        ];
        assert!((giou(&s).unwrap() - 0.75).abs() < 1e-15);

        // perfect model: actives exact, inactives empty
        let g = mask(2, 2, &[(0, 1)]);
        let s = vec![
            sample(g.clone(), g.clone(), true),
            sample(BinaryMask::zeros(2, 2), g.clone(), false),
        ];
        assert_eq!(giou(&s).unwrap(), 1.0);

        // any predicted pixel on an inactive sample contributes 0
        let s = vec![sample(mask(2, 2, &[(1, 0)]), g, false)];
        assert_eq!(giou(&s).unwrap(), 0.0);

        assert!(matches!(giou(&[]), Err(MetricsError::EmptySamples)));
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(accuracy(&[(true, true), (false, false)]).unwrap(), 1.0);
        assert_eq!(
            accuracy(&[(true, true), (false, true), (true, false), (false, false)]).unwrap(),
            0.5
        );
        assert!(matches!(accuracy(&[]), Err(MetricsError::EmptySamples)));
    }

    #[test]
    fn accuracy_matches_confusion_matrix_oracle() {
        let mut rng = rng_substream(13, "acc-oracle");
        for _ in 0..200 {
            let n = 1 + rng.next_index(16);
            let pairs: Vec<(bool, bool)> = (0..n)
                .map(|_| (rng.next_uniform01() < 0.5, rng.next_uniform01() < 0.5))
                .collect();
            // Oracle: accuracy = (TP + TN) / total from the confusion matrix.
            let tp = pairs.iter().filter(|(p, t)| *p && *t).count();
            let tn = pairs.iter().filter(|(p, t)| !*p && !*t).count();
            let expected = (tp + tn) as f64 / n as f64;
            assert!((accuracy(&pairs).unwrap() - expected).abs() < 1e-15);
        }
    }

    /// Brute-force oracle: recompute every metric by nested per-pixel loops.
    fn oracle_report(samples: &[EvalSample]) -> (f64, f64, f64, f64, f64) {
        let mut p_sum = 0.0;
        let mut p_n = 0usize;
        let mut n_sum = 0.0;
        let mut n_n = 0usize;
        let mut p_i = 0.0;
        let mut p_u = 0.0;
        let mut n_i = 0.0;
        let mut n_u = 0.0;
        let mut g_sum = 0.0;
        for s in samples {
            let mut inter = 0.0;
            let mut uni = 0.0;
            let mut pred_any = false;
            for y in 0..s.prediction.height() {
                for x in 0..s.prediction.width() {
                    let p = s.prediction.get(x, y) == 1;
                    let g = s.gt_region.get(x, y) == 1;
                    if p {
                        pred_any = true;
                    }
                    if p && g {
                        inter += 1.0;
                    }
                    if p || g {
                        uni += 1.0;
                    }
                }
            }
            let iou = if uni == 0.0 { 1.0 } else { inter / uni };
            if s.active {
                p_sum += iou;
                p_n += 1;
                p_i += inter;
                p_u += uni;
                g_sum += iou;
            } else {
                n_sum += iou;
                n_n += 1;
                n_i += inter;
                n_u += uni;
                g_sum += if pred_any { 0.0 } else { 1.0 };
            }
        }
        (
            if p_n > 0 { p_sum / p_n as f64 } else { f64::NAN },
            if n_n > 0 { n_sum / n_n as f64 } else { f64::NAN },
            if p_u == 0.0 { 1.0 } else { p_i / p_u },
            if n_u == 0.0 { 1.0 } else { n_i / n_u },
            g_sum / samples.len() as f64,
        )
    }

    fn random_samples(rng: &mut crate::data::DeterministicRng) -> Vec<EvalSample> {
        let n = 1 + rng.next_index(8);
        (0..n)
            .map(|i| {
                let w = 1 + rng.next_index(32);
                let h = 1 + rng.next_index(32);
                let fill = rng.next_uniform01() * 0.4;
                let pred = BinaryMask::new(
                    w,
                    h,
                    (0..w * h)
                        .map(|_| u8::from(rng.next_uniform01() < fill))
                        .collect(),
                );
                let gt = BinaryMask::new(
                    w,
                    h,
                    (0..w * h)
                        .map(|_| u8::from(rng.next_uniform01() < fill))
                        .collect(),
                );
                EvalSample {
                    clip_id: format!("c{i}"),
                    object_id: i as u32 + 1,
                    frame_id: "f0".into(),
                    prediction: pred,
                    gt_region: gt,
                    active: rng.next_uniform01() < 0.5,
                }
            })
            .collect()
    }

    #[test]
    fn metrics_match_pixel_count_oracle() {
        let mut rng = rng_substream(77, "metric-oracle");
        for _ in 0..200 {
            let samples = random_samples(&mut rng);
            let (op, on, opc, onc, og) = oracle_report(&samples);
            let (p, n) = partitioned_miou(&samples).unwrap();
            let (pc, nc) = partitioned_ciou(&samples).unwrap();
            let g = giou(&samples).unwrap();
            if let Some(p) = p {
                assert!((p - op).abs() < 1e-12);
            } else {
                assert!(op.is_nan());
            }
            if let Some(n) = n {
                assert!((n - on).abs() < 1e-12);
            } else {
                assert!(on.is_nan());
            }
            if let Some(pc) = pc {
                assert!((pc - opc).abs() < 1e-12);
            }
            if let Some(nc) = nc {
                assert!((nc - onc).abs() < 1e-12);
            }
            assert!((g - og).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn sample_order_never_changes_metrics(seed in any::<u64>()) {
            let mut rng = rng_substream(seed, "permutation");
            let mut samples = random_samples(&mut rng);
            let (p1, n1) = partitioned_miou(&samples).unwrap();
            let (c1, d1) = partitioned_ciou(&samples).unwrap();
            let g1 = giou(&samples).unwrap();
            samples.reverse();
            let (p2, n2) = partitioned_miou(&samples).unwrap();
            let (c2, d2) = partitioned_ciou(&samples).unwrap();
            let g2 = giou(&samples).unwrap();
            // Summation order changes the last ulp of the f64 means.
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
                _ => false,
            };
            prop_assert!(close(p1, p2));
            prop_assert!(close(n1, n2));
            prop_assert!(close(c1, c2));
            prop_assert!(close(d1, d2));
            prop_assert!((g1 - g2).abs() <= 1e-12);
        }
    }

    #[test]
    fn worse_overlap_never_raises_p_miou() {
        // Degrade one active prediction by removing an intersecting pixel;
        // p_miou must not increase.
        let g = mask(4, 4, &[(1, 1), (2, 1), (1, 2), (2, 2)]);
        let good = mask(4, 4, &[(1, 1), (2, 1), (1, 2)]);
        let worse = mask(4, 4, &[(1, 1), (2, 1)]);
        let s_good = vec![sample(good, g.clone(), true)];
        let s_worse = vec![sample(worse, g, true)];
        let (p_good, _) = partitioned_miou(&s_good).unwrap();
        let (p_worse, _) = partitioned_miou(&s_worse).unwrap();
        assert!(p_worse.unwrap() <= p_good.unwrap());
    }

    #[test]
    fn report_serializes_with_null_partitions() {
        let g = mask(2, 2, &[(0, 0)]);
        let s = vec![sample(g.clone(), g, true)];
        let report = build_report(&s, &[(true, true)]).unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["p_miou"], 1.0);
        assert!(json["n_miou"].is_null());
        assert_eq!(report.positive_count(), 1);
        assert_eq!(report.negative_count(), 0);
    }
}
