//! Ground-truth-known scene and arm generators, plus brute-force oracles
//! used to verify the geometry and evaluation paths.
//!
//! Generated ground-truth boxes never overlap each other, which makes the
//! greedy matcher provably optimal on clean scenes and isolates bandit
//! behavior from matcher suboptimality in convergence tests. All randomness
//! flows from explicit seeds; per-image generators derive their own seed so
//! output never depends on iteration order.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    self, CategoryEntry, Dataset, Detection, GroundTruthInstance, ImageRecord, ManifestEntry,
    PredictionSet,
};
use crate::error::{Error, Result};
use crate::geometry;
use crate::BoundingBox;

/// Label given to detections flipped by `class_noise_rate`; deliberately not
/// an accepted animal class.
pub const NOISE_LABEL: &str = "bottle";

fn default_class_label() -> String {
    "cow".into()
}

/// Layout of the synthetic ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub image_count: usize,
    /// Inclusive range of ground-truth boxes per image.
    pub boxes_per_image: (usize, usize),
    /// Image dimensions in pixels (width, height).
    pub image_size: (u32, u32),
    /// Inclusive range of box side lengths in pixels.
    pub box_size: (f64, f64),
    #[serde(default = "default_class_label")]
    pub class_label: String,
    pub seed: u64,
}

/// Behavior of one synthetic detector arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticArmSpec {
    pub name: String,
    /// Probability that a ground-truth box is detected.
    pub true_positive_rate: f64,
    /// Expected clutter detections per image (Poisson mean).
    pub false_positives_per_image: f64,
    /// Maximum fractional perturbation of detected boxes.
    pub localization_jitter: f64,
    /// Uniform confidence range (min, max).
    pub score_range: (f64, f64),
    /// Probability that a detection's label is flipped to a non-animal class.
    pub class_noise_rate: f64,
}

impl SyntheticSceneSpec {
    fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let ok = self.image_count > 0
            && w > 0
            && h > 0
            && self.boxes_per_image.0 <= self.boxes_per_image.1
            && self.box_size.0 > 0.0
            && self.box_size.0 <= self.box_size.1
            && !self.class_label.trim().is_empty();
        if !ok {
            return Err(Error::InvalidConfig { detail: format!("invalid scene spec: {self:?}") });
        }
        Ok(())
    }
}

impl SyntheticArmSpec {
    fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.true_positive_rate)
            && self.false_positives_per_image >= 0.0
            && self.localization_jitter >= 0.0
            && (0.0..=1.0).contains(&self.score_range.0)
            && self.score_range.0 <= self.score_range.1
            && self.score_range.1 <= 1.0
            && (0.0..=1.0).contains(&self.class_noise_rate);
        if !ok {
            return Err(Error::InvalidConfig { detail: format!("invalid arm spec: {self:?}") });
        }
        Ok(())
    }
}

/// SplitMix64 step; derives stable per-image seeds from a base seed.
fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_range(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

const PLACEMENT_ATTEMPTS: usize = 200;

/// Generate non-overlapping ground-truth scenes. Deterministic under the
/// spec's seed; every box lies inside the image and pairwise intersection
/// areas are zero.
pub fn generate_scenes(spec: &SyntheticSceneSpec) -> Result<Dataset> {
    spec.validate()?;
    let (width, height) = spec.image_size;
    let mut images = Vec::with_capacity(spec.image_count);

    for idx in 0..spec.image_count {
        let image_id = idx as u64 + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, image_id));
        let count = if spec.boxes_per_image.0 == spec.boxes_per_image.1 {
            spec.boxes_per_image.0
        } else {
            rng.gen_range(spec.boxes_per_image.0..=spec.boxes_per_image.1)
        };

        let mut boxes: Vec<BoundingBox> = Vec::with_capacity(count);
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..PLACEMENT_ATTEMPTS {
                let w = sample_range(&mut rng, spec.box_size.0, spec.box_size.1.min(width as f64));
                let h = sample_range(&mut rng, spec.box_size.0, spec.box_size.1.min(height as f64));
                let x = sample_range(&mut rng, 0.0, width as f64 - w);
                let y = sample_range(&mut rng, 0.0, height as f64 - h);
                let candidate = BoundingBox::new(x, y, w, h);
                // x + w can land one ulp past the edge; such candidates are
                // rejected so written corpora reload without clamping.
                let in_bounds =
                    candidate.right() <= width as f64 && candidate.bottom() <= height as f64;
                if in_bounds && boxes.iter().all(|b| geometry::iou(b, &candidate) == 0.0) {
                    boxes.push(candidate);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::PlacementFailure {
                    image_id,
                    requested: count,
                    failed: count - boxes.len(),
                });
            }
        }

        images.push(ImageRecord {
            id: image_id,
            width,
            height,
            ground_truth: boxes
                .into_iter()
                .map(|bbox| GroundTruthInstance { bbox, class_label: spec.class_label.clone() })
                .collect(),
        });
    }

    Ok(Dataset {
        images,
        categories: vec![CategoryEntry { id: 1, name: spec.class_label.clone() }],
    })
}

/// Generate one arm's predictions over the given scenes: each ground-truth
/// box is detected with probability `true_positive_rate` (jittered), plus
/// Poisson clutter placed uniformly. Deterministic under `seed`.
pub fn generate_arm(spec: &SyntheticArmSpec, scenes: &Dataset, seed: u64) -> Result<PredictionSet> {
    spec.validate()?;
    let mut by_image = std::collections::BTreeMap::new();

    for img in &scenes.images {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, img.id));
        let mut dets: Vec<Detection> = Vec::new();

        for gt in &img.ground_truth {
            if !rng.gen_bool(spec.true_positive_rate) {
                continue;
            }
            let j = spec.localization_jitter;
            let b = &gt.bbox;
            let (dx, dy, sw, sh) = if j > 0.0 {
                (
                    rng.gen_range(-j..=j) * b.w,
                    rng.gen_range(-j..=j) * b.h,
                    1.0 + rng.gen_range(-j..=j),
                    1.0 + rng.gen_range(-j..=j),
                )
            } else {
                (0.0, 0.0, 1.0, 1.0)
            };
            let label = if spec.class_noise_rate > 0.0 && rng.gen_bool(spec.class_noise_rate) {
                NOISE_LABEL.to_string()
            } else {
                gt.class_label.clone()
            };
            dets.push(Detection {
                bbox: BoundingBox::new(b.x + dx, b.y + dy, b.w * sw, b.h * sh),
                class_label: label,
                score: sample_range(&mut rng, spec.score_range.0, spec.score_range.1),
            });
        }

        if spec.false_positives_per_image > 0.0 {
            let poisson = Poisson::new(spec.false_positives_per_image)
                .map_err(|e| Error::InvalidConfig { detail: format!("bad Poisson mean: {e}") })?;
            let clutter = poisson.sample(&mut rng) as usize;
            let (iw, ih) = (img.width as f64, img.height as f64);
            for _ in 0..clutter {
                let w = sample_range(&mut rng, iw / 20.0, iw / 6.0).max(1.0);
                let h = sample_range(&mut rng, ih / 20.0, ih / 6.0).max(1.0);
                let x = sample_range(&mut rng, 0.0, iw - w);
                let y = sample_range(&mut rng, 0.0, ih - h);
                dets.push(Detection {
                    bbox: BoundingBox::new(x, y, w, h),
                    class_label: img
                        .ground_truth
                        .first()
                        .map(|gt| gt.class_label.clone())
                        .unwrap_or_else(|| scenes.categories.first().map(|c| c.name.clone()).unwrap_or_else(default_class_label)),
                    score: sample_range(&mut rng, spec.score_range.0, spec.score_range.1),
                });
            }
        }

        by_image.insert(img.id, dets);
    }

    Ok(PredictionSet { model_name: spec.name.clone(), by_image })
}

/// Worst-case IoU of a box against itself after a fractional jitter of `j`
/// (shift plus resize). Used to check that jitter cannot break a match.
fn jitter_iou_lower_bound(j: f64) -> f64 {
    (1.0 - j).powi(2) / (1.0 + 4.0 * j)
}

/// Closed-form expected per-image reward for an arm on a scene layout:
/// `E[dQ] = 3*TPR*g - g - (TPR*g + FP)` with `g` the mean boxes per image.
///
/// Only valid when class noise is off, jitter is small enough that every
/// emitted true positive still matches at IoU 0.5, and scores clear the
/// confidence gate.
pub fn expected_reward(arm: &SyntheticArmSpec, scene: &SyntheticSceneSpec) -> Result<f64> {
    arm.validate()?;
    scene.validate()?;
    if arm.class_noise_rate != 0.0 {
        return Err(Error::UnsupportedSpec {
            detail: format!("class_noise_rate must be 0, got {}", arm.class_noise_rate),
        });
    }
    if jitter_iou_lower_bound(arm.localization_jitter) < 0.5 {
        return Err(Error::UnsupportedSpec {
            detail: format!(
                "localization_jitter {} can push IoU below 0.5",
                arm.localization_jitter
            ),
        });
    }
    let mean_g = (scene.boxes_per_image.0 + scene.boxes_per_image.1) as f64 / 2.0;
    let tpr = arm.true_positive_rate;
    let fp = arm.false_positives_per_image;
    Ok(3.0 * tpr * mean_g - mean_g - (tpr * mean_g + fp))
}

const MAX_EXHAUSTIVE: usize = 8;

/// Maximum-cardinality one-to-one matching with all pair IoUs >= `rho`,
/// found by exhaustive enumeration. Oracle for the greedy matcher's bound;
/// instances are capped at 8 boxes per side.
pub fn brute_force_max_matching(
    detections: &[BoundingBox],
    ground_truth: &[BoundingBox],
    rho: f64,
) -> Result<usize> {
    if detections.len() > MAX_EXHAUSTIVE || ground_truth.len() > MAX_EXHAUSTIVE {
        return Err(Error::InstanceTooLarge {
            detections: detections.len(),
            ground_truth: ground_truth.len(),
            limit: MAX_EXHAUSTIVE,
        });
    }
    let feasible: Vec<Vec<usize>> = detections
        .iter()
        .map(|det| {
            ground_truth
                .iter()
                .enumerate()
                .filter(|(_, gt)| geometry::iou(det, gt) >= rho)
                .map(|(idx, _)| idx)
                .collect()
        })
        .collect();

    fn recurse(feasible: &[Vec<usize>], det: usize, used: u32) -> usize {
        if det == feasible.len() {
            return 0;
        }
        // Leave this detection unmatched...
        let mut best = recurse(feasible, det + 1, used);
        // ...or match it with any free compatible ground-truth box.
        for &gt in &feasible[det] {
            if used & (1 << gt) == 0 {
                best = best.max(1 + recurse(feasible, det + 1, used | (1 << gt)));
            }
        }
        best
    }
    Ok(recurse(&feasible, 0, 0))
}

const MAX_GRID: f64 = 4096.0;

/// IoU computed by counting unit grid cells: a cell `(i, j)` belongs to a box
/// iff `x <= i < x + w` and `y <= j < y + h`. For integer-coordinate boxes
/// this equals the analytic IoU exactly. Oracle for `geometry::iou`.
pub fn rasterized_iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    for bx in [a, b] {
        for v in [bx.x, bx.y, bx.w, bx.h] {
            if !v.is_finite() || v.fract() != 0.0 {
                return Err(Error::NonIntegerInput {
                    detail: format!("coordinate {v} is not an integer"),
                });
            }
            if v.abs() > MAX_GRID {
                return Err(Error::NonIntegerInput {
                    detail: format!("coordinate {v} exceeds the {MAX_GRID} grid bound"),
                });
            }
        }
    }

    let cells = |bx: &BoundingBox| -> Vec<(i64, i64)> {
        let (x0, y0) = (bx.x as i64, bx.y as i64);
        let (x1, y1) = ((bx.x + bx.w) as i64, (bx.y + bx.h) as i64);
        let mut out = Vec::new();
        for i in x0..x1 {
            for j in y0..y1 {
                out.push((i, j));
            }
        }
        out
    };

    let cells_a = cells(a);
    let cells_b: std::collections::HashSet<(i64, i64)> = cells(b).into_iter().collect();
    let inter = cells_a.iter().filter(|c| cells_b.contains(c)).count();
    let union = cells_a.len() + cells_b.len() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Paths produced by [`write_corpus`].
#[derive(Debug, Clone, Serialize)]
pub struct CorpusPaths {
    pub annotations: PathBuf,
    pub manifest: PathBuf,
    pub predictions: Vec<(String, PathBuf)>,
}

/// Write a full synthetic corpus in the same COCO formats the ingestion
/// layer reads: one annotation file, one results file per arm, and a pool
/// manifest. Output is byte-deterministic given the specs.
pub fn write_corpus(
    scene: &SyntheticSceneSpec,
    arms: &[SyntheticArmSpec],
    out_dir: &Path,
) -> Result<CorpusPaths> {
    let scenes = generate_scenes(scene)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|source| Error::Io { path: out_dir.to_path_buf(), source })?;

    let write = |path: &Path, contents: String| -> Result<()> {
        std::fs::write(path, contents)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })
    };

    let annotations = out_dir.join("annotations.json");
    let doc = dataset::to_coco_document(&scenes);
    write(&annotations, serde_json::to_string_pretty(&doc).expect("document serializes"))?;

    let mut manifest_entries = Vec::with_capacity(arms.len());
    let mut predictions = Vec::with_capacity(arms.len());
    for (idx, arm) in arms.iter().enumerate() {
        let preds = generate_arm(arm, &scenes, derive_seed(scene.seed, 0x4152_4d00 + idx as u64))?;
        let file_name = format!("{}.predictions.json", arm.name);
        let path = out_dir.join(&file_name);
        let entries = dataset::to_results_document(&preds);
        write(&path, serde_json::to_string_pretty(&entries).expect("entries serialize"))?;
        manifest_entries.push(ManifestEntry { model: arm.name.clone(), predictions: file_name.into() });
        predictions.push((arm.name.clone(), path));
    }

    let manifest = out_dir.join("manifest.json");
    write(&manifest, serde_json::to_string_pretty(&manifest_entries).expect("manifest serializes"))?;

    Ok(CorpusPaths { annotations, manifest, predictions })
}

/// Simulation spec document: one scene plus the arm pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub scene: SyntheticSceneSpec,
    pub arms: Vec<SyntheticArmSpec>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        // A corpus shaped like the target workload: 137 images, a pool of 16
        // arms of graded quality.
        let scene = SyntheticSceneSpec {
            image_count: 137,
            boxes_per_image: (1, 6),
            image_size: (640, 480),
            box_size: (24.0, 96.0),
            class_label: "cow".into(),
            seed: 7,
        };
        let profiles: [(f64, f64, f64, (f64, f64), f64); 16] = [
            (0.95, 0.2, 0.02, (0.55, 0.99), 0.0),
            (0.92, 0.4, 0.03, (0.55, 0.98), 0.0),
            (0.90, 0.3, 0.04, (0.50, 0.95), 0.02),
            (0.88, 0.6, 0.03, (0.50, 0.95), 0.0),
            (0.85, 0.5, 0.05, (0.45, 0.95), 0.0),
            (0.82, 1.0, 0.04, (0.50, 0.90), 0.05),
            (0.80, 0.8, 0.05, (0.40, 0.90), 0.0),
            (0.75, 1.2, 0.06, (0.45, 0.90), 0.0),
            (0.72, 0.6, 0.05, (0.35, 0.85), 0.05),
            (0.68, 1.5, 0.06, (0.40, 0.85), 0.0),
            (0.62, 1.0, 0.07, (0.35, 0.80), 0.10),
            (0.55, 2.0, 0.06, (0.30, 0.80), 0.0),
            (0.50, 1.5, 0.08, (0.30, 0.75), 0.05),
            (0.42, 2.5, 0.07, (0.25, 0.70), 0.10),
            (0.35, 1.0, 0.08, (0.20, 0.65), 0.0),
            (0.20, 3.0, 0.08, (0.15, 0.60), 0.10),
        ];
        let arms = profiles
            .iter()
            .enumerate()
            .map(|(idx, &(tpr, fp, jitter, score_range, noise))| SyntheticArmSpec {
                name: format!("arm-{:02}", idx + 1),
                true_positive_rate: tpr,
                false_positives_per_image: fp,
                localization_jitter: jitter,
                score_range,
                class_noise_rate: noise,
            })
            .collect();
        Self { scene, arms }
    }
}
