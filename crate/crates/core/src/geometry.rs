//! Axis-aligned box arithmetic and detection-to-ground-truth matching.
//!
//! Boxes are continuous rectangles `[x, x+w] x [y, y+h]`; boxes that only
//! share an edge have intersection area 0 and therefore IoU 0.

use crate::scalar::Scalar;

/// Axis-aligned rectangle in absolute pixel coordinates.
///
/// `x`/`y` is the top-left corner, `w`/`h` the extent. Validity (finite
/// fields, `w > 0`, `h > 0`) is enforced at ingestion; the arithmetic here
/// assumes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<S: Scalar> {
    pub x: S,
    pub y: S,
    pub w: S,
    pub h: S,
}

impl<S: Scalar> BoundingBox<S> {
    pub fn new(x: S, y: S, w: S, h: S) -> Self {
        Self { x, y, w, h }
    }

    /// Right edge, `x + w`.
    pub fn right(&self) -> S {
        self.x + self.w
    }

    /// Bottom edge, `y + h`.
    pub fn bottom(&self) -> S {
        self.y + self.h
    }

    /// `true` iff all fields are finite and the box has positive extent.
    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > S::zero()
            && self.h > S::zero()
    }
}

/// Box area `w * h` in pixels squared.
pub fn area<S: Scalar>(b: &BoundingBox<S>) -> S {
    b.w * b.h
}

/// Intersection over union of two boxes, in `[0, 1]`.
///
/// Returns 0 for disjoint or merely edge-touching boxes; symmetric in its
/// arguments.
pub fn iou<S: Scalar>(a: &BoundingBox<S>, b: &BoundingBox<S>) -> S {
    let ix0 = a.x.max(b.x);
    let iy0 = a.y.max(b.y);
    let ix1 = a.right().min(b.right());
    let iy1 = a.bottom().min(b.bottom());

    if ix1 <= ix0 || iy1 <= iy0 {
        return S::zero();
    }
    let inter = (ix1 - ix0) * (iy1 - iy0);
    // Box areas are derived from the same corner arithmetic as the
    // intersection; mixing in `w * h` directly can round differently and
    // push iou(a, a) off 1 or the ratio past 1.
    let area_a = (a.right() - a.x) * (a.bottom() - a.y);
    let area_b = (b.right() - b.x) * (b.bottom() - b.y);
    let union = area_a + area_b - inter;
    if union <= S::zero() {
        return S::zero();
    }
    inter / union
}

/// A detection box paired with its confidence score, as fed to the matcher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox<S: Scalar> {
    pub bbox: BoundingBox<S>,
    pub score: S,
}

/// One detection-to-ground-truth assignment produced by [`match_detections`].
///
/// Indices are ordinals into the input lists; `iou` is at least the `rho`
/// used to produce the pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair<S: Scalar> {
    pub detection_index: usize,
    pub ground_truth_index: usize,
    pub iou: S,
}

/// Greedy one-to-one assignment of detections to ground-truth boxes.
///
/// Detections are visited in descending score (ties: lower original index
/// first); each claims the still-unmatched ground-truth box with the highest
/// IoU at or above `rho` (ties: lower ground-truth index). Unmatched items
/// on either side are simply absent from the result. Fully deterministic.
pub fn match_detections<S: Scalar>(
    detections: &[ScoredBox<S>],
    ground_truth: &[BoundingBox<S>],
    rho: S,
) -> Vec<MatchPair<S>> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        detections[b]
            .score
            .partial_cmp(&detections[a].score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; ground_truth.len()];
    let mut pairs = Vec::new();

    for det_idx in order {
        let mut best: Option<(usize, S)> = None;
        for (gt_idx, gt) in ground_truth.iter().enumerate() {
            if gt_taken[gt_idx] {
                continue;
            }
            let overlap = iou(&detections[det_idx].bbox, gt);
            if overlap < rho {
                continue;
            }
            // Strict > keeps the lowest ground-truth index on ties.
            let better = match best {
                None => true,
                Some((_, best_iou)) => overlap > best_iou,
            };
            if better {
                best = Some((gt_idx, overlap));
            }
        }
        if let Some((gt_idx, overlap)) = best {
            gt_taken[gt_idx] = true;
            pairs.push(MatchPair {
                detection_index: det_idx,
                ground_truth_index: gt_idx,
                iou: overlap,
            });
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox<f64> {
        BoundingBox::new(x, y, w, h)
    }

    fn sb(x: f64, y: f64, w: f64, h: f64, score: f64) -> ScoredBox<f64> {
        ScoredBox {
            bbox: bb(x, y, w, h),
            score,
        }
    }

    #[test]
    fn area_of_simple_boxes() {
        assert_eq!(area(&bb(0.0, 0.0, 10.0, 10.0)), 100.0);
        assert_eq!(area(&bb(5.0, 5.0, 1.0, 1.0)), 1.0);
        assert_eq!(area(&bb(0.0, 0.0, 3.0, 7.0)), 21.0);
    }

    #[test]
    fn iou_identical_boxes_is_one() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
    }

    #[test]
    fn iou_disjoint_boxes_is_zero() {
        assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(100.0, 100.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn iou_half_shifted_is_one_third() {
        // intersection 5x10 = 50, union 100 + 100 - 50 = 150
        let v = iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(5.0, 0.0, 10.0, 10.0));
        assert!((v - 1.0 / 3.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn iou_touching_boxes_is_zero() {
        assert_eq!(iou(&bb(0.0, 0.0, 10.0, 10.0), &bb(10.0, 0.0, 10.0, 10.0)), 0.0);
    }

    #[test]
    fn iou_works_in_f32() {
        let a = BoundingBox::<f32>::new(0.0, 0.0, 10.0, 10.0);
        let b = BoundingBox::<f32>::new(5.0, 0.0, 10.0, 10.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn match_single_exact_pair() {
        let pairs = match_detections(&[sb(0.0, 0.0, 10.0, 10.0, 0.9)], &[bb(0.0, 0.0, 10.0, 10.0)], 0.5);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].detection_index, 0);
        assert_eq!(pairs[0].ground_truth_index, 0);
        assert_eq!(pairs[0].iou, 1.0);
    }

    #[test]
    fn match_no_detections_is_empty() {
        let pairs = match_detections::<f64>(&[], &[bb(0.0, 0.0, 10.0, 10.0)], 0.5);
        assert!(pairs.is_empty());
    }

    #[test]
    fn match_higher_score_wins_single_ground_truth() {
        let dets = [sb(0.0, 0.0, 10.0, 10.0, 0.9), sb(1.0, 0.0, 10.0, 10.0, 0.8)];
        let pairs = match_detections(&dets, &[bb(0.0, 0.0, 10.0, 10.0)], 0.5);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].detection_index, 0);
    }

    #[test]
    fn match_score_tie_breaks_by_original_index() {
        let dets = [sb(1.0, 0.0, 10.0, 10.0, 0.8), sb(0.0, 0.0, 10.0, 10.0, 0.8)];
        let pairs = match_detections(&dets, &[bb(0.0, 0.0, 10.0, 10.0)], 0.5);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].detection_index, 0);
    }

    #[test]
    fn match_gt_tie_breaks_by_lower_index() {
        // Detection overlaps both ground-truth boxes equally.
        let dets = [sb(0.0, 0.0, 10.0, 20.0, 0.9)];
        let gts = [bb(0.0, 0.0, 10.0, 10.0), bb(0.0, 10.0, 10.0, 10.0)];
        let pairs = match_detections(&dets, &gts, 0.2);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].ground_truth_index, 0);
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(
            ax in -50.0f64..50.0, ay in -50.0f64..50.0, aw in 0.1f64..40.0, ah in 0.1f64..40.0,
            bx in -50.0f64..50.0, by in -50.0f64..50.0, bw in 0.1f64..40.0, bh in 0.1f64..40.0,
        ) {
            let a = bb(ax, ay, aw, ah);
            let b = bb(bx, by, bw, bh);
            let ab = iou(&a, &b);
            let ba = iou(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn matching_is_one_to_one_and_above_threshold(
            seed in 0u64..1000,
            n_det in 0usize..7,
            n_gt in 0usize..7,
            rho in 0.1f64..0.9,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dets: Vec<_> = (0..n_det).map(|_| sb(
                rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0),
                rng.gen_range(1.0..30.0), rng.gen_range(1.0..30.0),
                rng.gen_range(0.0..1.0),
            )).collect();
            let gts: Vec<_> = (0..n_gt).map(|_| bb(
                rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0),
                rng.gen_range(1.0..30.0), rng.gen_range(1.0..30.0),
            )).collect();
            let pairs = match_detections(&dets, &gts, rho);
            let mut seen_det = std::collections::HashSet::new();
            let mut seen_gt = std::collections::HashSet::new();
            for p in &pairs {
                prop_assert!(p.iou >= rho);
                prop_assert!(seen_det.insert(p.detection_index));
                prop_assert!(seen_gt.insert(p.ground_truth_index));
            }
            prop_assert!(pairs.len() <= n_det.min(n_gt));
            // Determinism: same inputs, same output.
            prop_assert_eq!(pairs, match_detections(&dets, &gts, rho));
        }
    }
}
