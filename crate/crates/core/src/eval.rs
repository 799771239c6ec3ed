//! Per-image acceptance gating, consensus fusion, and precision/recall/F1
//! aggregation.
//!
//! The per-image pipeline matches every raw detection to ground truth at the
//! IoU threshold first, then keeps matched pairs whose detection clears the
//! confidence threshold and whose class is in the accepted set. The raw
//! detection count `d` is taken before filtering, so low-confidence clutter
//! still counts against precision and rewards.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Detection, GroundTruthInstance};
use crate::error::{Error, Result};
use crate::geometry;
use crate::{MatchPair, ScoredBox};

/// Class names accepted by default: the COCO animal-adjacent labels the
/// detectors can emit for livestock imagery.
pub const DEFAULT_ANIMAL_CLASSES: [&str; 10] = [
    "cow", "sheep", "cat", "dog", "horse", "person", "elephant", "bear", "zebra", "giraffe",
];

/// Acceptance thresholds and class set for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCriteria {
    /// Minimum IoU for a detection to match a ground-truth box.
    pub rho: f64,
    /// Minimum confidence for a matched detection to count.
    pub tau: f64,
    /// Accepted class names, lowercased; membership is case-insensitive.
    pub animal_classes: BTreeSet<String>,
}

impl Default for EvalCriteria {
    fn default() -> Self {
        Self::new(0.5, 0.5, DEFAULT_ANIMAL_CLASSES.iter().map(|s| s.to_string()))
            .expect("default criteria are valid")
    }
}

impl EvalCriteria {
    pub fn new<I: IntoIterator<Item = String>>(rho: f64, tau: f64, classes: I) -> Result<Self> {
        let animal_classes: BTreeSet<String> =
            classes.into_iter().map(|c| c.trim().to_lowercase()).collect();
        let criteria = Self { rho, tau, animal_classes };
        criteria.validate()?;
        Ok(criteria)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidCriteria {
                detail: format!("rho must be in (0, 1], got {}", self.rho),
            });
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidCriteria {
                detail: format!("tau must be in [0, 1], got {}", self.tau),
            });
        }
        if self.animal_classes.is_empty() {
            return Err(Error::InvalidCriteria {
                detail: "class set must be non-empty".into(),
            });
        }
        Ok(())
    }

    pub fn accepts_class(&self, label: &str) -> bool {
        self.animal_classes.contains(&label.to_lowercase())
    }
}

/// Per-image counts: `g` ground-truth instances, `d` raw detections, `b`
/// accepted matches, plus the accepted pairs themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub g: usize,
    pub d: usize,
    pub b: usize,
    pub accepted_pairs: Vec<MatchPair>,
}

impl MatchOutcome {
    pub fn from_counts(g: usize, d: usize, b: usize) -> Self {
        debug_assert!(b <= g.min(d));
        Self { g, d, b, accepted_pairs: Vec::new() }
    }
}

/// How pooled metrics are formed from per-image outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Pool counts across images before forming ratios (default).
    Micro,
    /// Average per-image precision/recall/F1 arithmetically.
    Macro,
}

impl std::fmt::Display for Averaging {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Averaging::Micro => write!(f, "micro"),
            Averaging::Macro => write!(f, "macro"),
        }
    }
}

/// Aggregated precision/recall/F1 plus the pooled counts behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub total_g: usize,
    pub total_d: usize,
    pub total_b: usize,
    pub averaging: Averaging,
}

fn prf(g: usize, d: usize, b: usize) -> (f64, f64, f64) {
    if g == 0 && d == 0 {
        // Nothing to find and nothing claimed.
        return (1.0, 1.0, 1.0);
    }
    let precision = if d == 0 { 0.0 } else { b as f64 / d as f64 };
    let recall = if g == 0 { 0.0 } else { b as f64 / g as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Score one image: match all detections at `rho`, then keep pairs passing
/// the confidence and class gates. `d` counts the raw detections.
pub fn evaluate_image(
    predictions: &[Detection],
    ground_truth: &[GroundTruthInstance],
    criteria: &EvalCriteria,
) -> MatchOutcome {
    let scored: Vec<ScoredBox> = predictions
        .iter()
        .map(|det| ScoredBox { bbox: det.bbox, score: det.score })
        .collect();
    let gt_boxes: Vec<crate::BoundingBox> = ground_truth.iter().map(|gt| gt.bbox).collect();
    let pairs = geometry::match_detections(&scored, &gt_boxes, criteria.rho);

    let accepted_pairs: Vec<MatchPair> = pairs
        .into_iter()
        .filter(|p| {
            let det = &predictions[p.detection_index];
            det.score >= criteria.tau && criteria.accepts_class(&det.class_label)
        })
        .collect();

    MatchOutcome {
        g: ground_truth.len(),
        d: predictions.len(),
        b: accepted_pairs.len(),
        accepted_pairs,
    }
}

/// Micro-averaged metrics over a set of outcomes: `P = Σb/Σd`, `R = Σb/Σg`,
/// `F1 = 2PR/(P+R)`, with the degenerate conventions documented on [`prf`].
pub fn aggregate_metrics(outcomes: &[MatchOutcome]) -> Result<MetricsReport> {
    aggregate_metrics_with(outcomes, Averaging::Micro)
}

/// Aggregation with an explicit averaging mode.
pub fn aggregate_metrics_with(outcomes: &[MatchOutcome], averaging: Averaging) -> Result<MetricsReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomeList);
    }
    let total_g: usize = outcomes.iter().map(|o| o.g).sum();
    let total_d: usize = outcomes.iter().map(|o| o.d).sum();
    let total_b: usize = outcomes.iter().map(|o| o.b).sum();

    let (precision, recall, f1) = match averaging {
        Averaging::Micro => prf(total_g, total_d, total_b),
        Averaging::Macro => {
            let n = outcomes.len() as f64;
            let mut sums = (0.0, 0.0, 0.0);
            for o in outcomes {
                let (p, r, f) = prf(o.g, o.d, o.b);
                sums = (sums.0 + p, sums.1 + r, sums.2 + f);
            }
            (sums.0 / n, sums.1 / n, sums.2 / n)
        }
    };

    Ok(MetricsReport { precision, recall, f1, total_g, total_d, total_b, averaging })
}

/// Keep only detections on which at least `k` distinct models agree.
///
/// All detections are pooled and visited in descending score (ties: lower
/// model index, then lower detection index). Each unconsumed detection seeds
/// a group of all unconsumed detections overlapping it at IoU >= `rho`; the
/// whole group is consumed, and the seed (its highest-score member) is
/// retained iff the group spans at least `k` distinct models.
pub fn consensus_fuse(per_model: &[Vec<Detection>], k: usize, rho: f64) -> Result<Vec<Detection>> {
    if per_model.len() < k {
        return Err(Error::InsufficientModels { available: per_model.len(), required: k });
    }

    struct Entry<'a> {
        model: usize,
        det: &'a Detection,
    }
    let mut entries: Vec<Entry> = Vec::new();
    for (model, dets) in per_model.iter().enumerate() {
        for det in dets {
            entries.push(Entry { model, det });
        }
    }
    // Stable visitation order: score desc, then pool insertion order
    // (model index, then original detection index).
    entries.sort_by(|a, b| {
        b.det
            .score
            .partial_cmp(&a.det.score)
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut consumed = vec![false; entries.len()];
    let mut fused = Vec::new();
    for seed_idx in 0..entries.len() {
        if consumed[seed_idx] {
            continue;
        }
        let seed = &entries[seed_idx];
        let mut group = vec![seed_idx];
        for other_idx in seed_idx + 1..entries.len() {
            if consumed[other_idx] {
                continue;
            }
            if geometry::iou(&seed.det.bbox, &entries[other_idx].det.bbox) >= rho {
                group.push(other_idx);
            }
        }
        let models: BTreeSet<usize> = group.iter().map(|&i| entries[i].model).collect();
        for &i in &group {
            consumed[i] = true;
        }
        if models.len() >= k {
            fused.push(seed.det.clone());
        }
    }
    Ok(fused)
}

/// One cell of a criteria sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub model: String,
    pub rho: f64,
    pub tau: f64,
    pub metrics: MetricsReport,
}

/// Evaluate every model under every criteria combination over the whole
/// dataset: the full cross-product, one row per (model, criteria).
pub fn criteria_sweep(
    dataset: &crate::Dataset,
    pools: &[crate::PredictionSet],
    criteria_list: &[EvalCriteria],
) -> Result<Vec<SweepRow>> {
    criteria_sweep_with(dataset, pools, criteria_list, Averaging::Micro)
}

/// Cross-product sweep with an explicit averaging mode.
pub fn criteria_sweep_with(
    dataset: &crate::Dataset,
    pools: &[crate::PredictionSet],
    criteria_list: &[EvalCriteria],
    averaging: Averaging,
) -> Result<Vec<SweepRow>> {
    if dataset.images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rows = Vec::with_capacity(pools.len() * criteria_list.len());
    for pool in pools {
        for criteria in criteria_list {
            criteria.validate()?;
            let outcomes: Vec<MatchOutcome> = dataset
                .images
                .iter()
                .map(|img| evaluate_image(pool.detections_for(img.id), &img.ground_truth, criteria))
                .collect();
            rows.push(SweepRow {
                model: pool.model_name.clone(),
                rho: criteria.rho,
                tau: criteria.tau,
                metrics: aggregate_metrics_with(&outcomes, averaging)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::BoundingBox;
    use proptest::prelude::*;

    fn det(x: f64, y: f64, w: f64, h: f64, label: &str, score: f64) -> Detection {
        Detection { bbox: BoundingBox::new(x, y, w, h), class_label: label.into(), score }
    }

    fn gt(x: f64, y: f64, w: f64, h: f64, label: &str) -> GroundTruthInstance {
        GroundTruthInstance { bbox: BoundingBox::new(x, y, w, h), class_label: label.into() }
    }

    #[test]
    fn perfect_detection_counts_one_match() {
        let outcome = evaluate_image(
            &[det(0.0, 0.0, 10.0, 10.0, "cow", 0.9)],
            &[gt(0.0, 0.0, 10.0, 10.0, "cow")],
            &EvalCriteria::default(),
        );
        assert_eq!((outcome.g, outcome.d, outcome.b), (1, 1, 1));
    }

    #[test]
    fn low_confidence_match_is_filtered_but_still_counts_in_d() {
        let outcome = evaluate_image(
            &[det(0.0, 0.0, 10.0, 10.0, "cow", 0.4)],
            &[gt(0.0, 0.0, 10.0, 10.0, "cow")],
            &EvalCriteria::default(),
        );
        assert_eq!((outcome.g, outcome.d, outcome.b), (1, 1, 0));
    }

    #[test]
    fn three_gates_walkthrough() {
        // bottle fails the class gate, far-away cow fails the IoU gate.
        let outcome = evaluate_image(
            &[
                det(0.0, 0.0, 10.0, 10.0, "cow", 0.9),
                det(50.0, 50.0, 10.0, 10.0, "bottle", 0.95),
                det(200.0, 200.0, 5.0, 5.0, "cow", 0.6),
            ],
            &[gt(0.0, 0.0, 10.0, 10.0, "cow"), gt(50.0, 50.0, 10.0, 10.0, "cow")],
            &EvalCriteria::default(),
        );
        assert_eq!((outcome.g, outcome.d, outcome.b), (2, 3, 1));
    }

    #[test]
    fn class_gate_is_case_insensitive_membership() {
        let outcome = evaluate_image(
            &[det(0.0, 0.0, 10.0, 10.0, "Cow", 0.9)],
            &[gt(0.0, 0.0, 10.0, 10.0, "sheep")],
            &EvalCriteria::default(),
        );
        // Label agreement with the matched ground truth is not required,
        // only membership in the accepted set.
        assert_eq!(outcome.b, 1);
    }

    #[test]
    fn aggregate_hand_check() {
        let report = aggregate_metrics(&[MatchOutcome::from_counts(5, 4, 3)]).unwrap();
        assert!((report.precision - 0.75).abs() < 1e-12);
        assert!((report.recall - 0.6).abs() < 1e-12);
        assert!((report.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
        assert_eq!(format!("{:.3}", report.f1), "0.667");
    }

    #[test]
    fn aggregate_all_perfect_is_ones() {
        let outcomes = vec![MatchOutcome::from_counts(3, 3, 3), MatchOutcome::from_counts(2, 2, 2)];
        let report = aggregate_metrics(&outcomes).unwrap();
        assert_eq!((report.precision, report.recall, report.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn aggregate_degenerate_conventions() {
        let report = aggregate_metrics(&[MatchOutcome::from_counts(5, 0, 0)]).unwrap();
        assert_eq!((report.precision, report.recall, report.f1), (0.0, 0.0, 0.0));

        let report = aggregate_metrics(&[MatchOutcome::from_counts(0, 4, 0)]).unwrap();
        assert_eq!((report.precision, report.recall, report.f1), (0.0, 0.0, 0.0));

        let report = aggregate_metrics(&[MatchOutcome::from_counts(0, 0, 0)]).unwrap();
        assert_eq!((report.precision, report.recall, report.f1), (1.0, 1.0, 1.0));

        assert_eq!(aggregate_metrics(&[]).unwrap_err().kind(), "EmptyOutcomeList");
    }

    #[test]
    fn macro_averaging_averages_per_image() {
        let outcomes = vec![MatchOutcome::from_counts(2, 2, 2), MatchOutcome::from_counts(2, 2, 0)];
        let micro = aggregate_metrics(&outcomes).unwrap();
        let macro_ = aggregate_metrics_with(&outcomes, Averaging::Macro).unwrap();
        assert!((micro.precision - 0.5).abs() < 1e-12);
        assert!((macro_.precision - 0.5).abs() < 1e-12);
        // f1 differs: micro pools counts, macro averages per-image f1.
        assert!((micro.f1 - 0.5).abs() < 1e-12);
        assert!((macro_.f1 - 0.5).abs() < 1e-12);
        let skewed = vec![MatchOutcome::from_counts(1, 1, 1), MatchOutcome::from_counts(9, 9, 0)];
        let micro = aggregate_metrics(&skewed).unwrap();
        let macro_ = aggregate_metrics_with(&skewed, Averaging::Macro).unwrap();
        assert!((micro.recall - 0.1).abs() < 1e-12);
        assert!((macro_.recall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn consensus_unanimity_keeps_highest_score() {
        let per_model = vec![
            vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.8)],
            vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.9)],
            vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.7)],
        ];
        let fused = consensus_fuse(&per_model, 3, 0.5).unwrap();
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].score, 0.9);
    }

    #[test]
    fn consensus_two_of_three_agreement() {
        // Boxes from models 0 and 1 overlap; model 2 is elsewhere.
        let per_model = vec![
            vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.9)],
            vec![det(1.0, 0.0, 10.0, 10.0, "cow", 0.8)],
            vec![det(100.0, 100.0, 10.0, 10.0, "cow", 0.95)],
        ];
        let fused = consensus_fuse(&per_model, 3, 0.5).unwrap();
        assert!(fused.is_empty());

        let fused = consensus_fuse(&per_model, 2, 0.5).unwrap();
        assert_eq!(fused.len(), 1);
        assert_eq!(fused[0].score, 0.9);
    }

    #[test]
    fn consensus_disjoint_models_fuse_to_nothing() {
        let per_model = vec![
            vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.9)],
            vec![det(50.0, 50.0, 10.0, 10.0, "cow", 0.8)],
        ];
        assert!(consensus_fuse(&per_model, 2, 0.5).unwrap().is_empty());
    }

    #[test]
    fn consensus_requires_enough_sets() {
        let per_model = vec![vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.9)]];
        assert_eq!(
            consensus_fuse(&per_model, 2, 0.5).unwrap_err().kind(),
            "InsufficientModels"
        );
    }

    #[test]
    fn multiple_agreements_from_same_model_count_once() {
        // Two boxes from the same model agree with each other but no one else.
        let per_model = vec![
            vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.9), det(0.5, 0.0, 10.0, 10.0, "cow", 0.8)],
            vec![det(100.0, 0.0, 10.0, 10.0, "cow", 0.7)],
        ];
        assert!(consensus_fuse(&per_model, 2, 0.5).unwrap().is_empty());
    }

    fn one_image_dataset() -> crate::Dataset {
        crate::Dataset {
            images: vec![crate::ImageRecord {
                id: 1,
                width: 100,
                height: 100,
                ground_truth: vec![gt(0.0, 0.0, 10.0, 10.0, "cow")],
            }],
            categories: vec![],
        }
    }

    #[test]
    fn sweep_single_cell_equals_aggregate() {
        let ds = one_image_dataset();
        let pool = crate::PredictionSet {
            model_name: "m".into(),
            by_image: [(1u64, vec![det(0.0, 0.0, 10.0, 10.0, "cow", 0.9)])].into_iter().collect(),
        };
        let rows = criteria_sweep(&ds, &[pool], &[EvalCriteria::default()]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].metrics.f1, 1.0);
    }

    #[test]
    fn sweep_is_a_full_cross_product() {
        let ds = one_image_dataset();
        let mk_pool = |name: &str| crate::PredictionSet {
            model_name: name.into(),
            by_image: [(1u64, vec![])].into_iter().collect(),
        };
        let criteria = vec![
            EvalCriteria::new(0.5, 0.5, ["cow".to_string()]).unwrap(),
            EvalCriteria::new(0.6, 0.5, ["cow".to_string()]).unwrap(),
        ];
        let rows = criteria_sweep(&ds, &[mk_pool("a"), mk_pool("b")], &criteria).unwrap();
        assert_eq!(rows.len(), 4);
    }

    proptest! {
        #[test]
        fn raising_gates_never_increases_b(
            seed in 0u64..500,
            tau in 0.0f64..1.0,
            rho in 0.1f64..0.9,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dets: Vec<Detection> = (0..rng.gen_range(0..8)).map(|_| det(
                rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0),
                rng.gen_range(1.0..20.0), rng.gen_range(1.0..20.0),
                if rng.gen_bool(0.8) { "cow" } else { "bottle" },
                rng.gen_range(0.0..1.0),
            )).collect();
            let gts: Vec<GroundTruthInstance> = (0..rng.gen_range(0..8)).map(|_| gt(
                rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0),
                rng.gen_range(1.0..20.0), rng.gen_range(1.0..20.0),
                "cow",
            )).collect();
            let classes = ["cow".to_string()];
            let base = evaluate_image(&dets, &gts, &EvalCriteria::new(rho, tau, classes.clone()).unwrap());
            prop_assert!(base.b <= base.g.min(base.d));
            let higher_tau = evaluate_image(&dets, &gts,
                &EvalCriteria::new(rho, (tau + 0.2).min(1.0), classes.clone()).unwrap());
            prop_assert!(higher_tau.b <= base.b);
            let higher_rho = evaluate_image(&dets, &gts,
                &EvalCriteria::new((rho + 0.1).min(1.0), tau, classes).unwrap());
            prop_assert!(higher_rho.b <= base.b);
        }
    }
}
