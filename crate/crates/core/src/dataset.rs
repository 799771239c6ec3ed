//! Ingestion of COCO-style annotation and prediction documents, pool
//! manifests, and the seeded train/test split.
//!
//! All documents are UTF-8 JSON. Annotation files follow the COCO layout
//! (`images`, `annotations` with `[x, y, width, height]` bboxes in absolute
//! pixels, `categories`); prediction files are flat COCO-results arrays of
//! `{image_id, category_id or category_name, bbox, score}`. Loaded data is
//! immutable and safe to share across threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::BoundingBox;

/// Annotated instance: box plus category name.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub bbox: BoundingBox,
    pub class_label: String,
}

/// Predicted instance: box, category name, confidence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub class_label: String,
    pub score: f64,
}

/// One image with its ground-truth annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub ground_truth: Vec<GroundTruthInstance>,
}

/// A loaded annotation document: image records plus the category table the
/// ids were resolved against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub categories: Vec<CategoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEntry {
    pub id: u64,
    pub name: String,
}

impl Dataset {
    pub fn image_ids(&self) -> Vec<u64> {
        self.images.iter().map(|img| img.id).collect()
    }

    pub fn image(&self, id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|img| img.id == id)
    }

    pub fn total_ground_truth(&self) -> usize {
        self.images.iter().map(|img| img.ground_truth.len()).sum()
    }
}

/// One detector arm: its full output over the dataset.
///
/// `by_image` holds an entry for every dataset image; models that detected
/// nothing on an image get an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub model_name: String,
    pub by_image: BTreeMap<u64, Vec<Detection>>,
}

impl PredictionSet {
    pub fn detections_for(&self, image_id: u64) -> &[Detection] {
        self.by_image.get(&image_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn total_detections(&self) -> usize {
        self.by_image.values().map(Vec::len).sum()
    }

    /// Number of images with at least one detection.
    pub fn images_covered(&self) -> usize {
        self.by_image.values().filter(|v| !v.is_empty()).count()
    }
}

/// Seeded partition of the image ids; `test_ids` holds `round((1-ratio)*N)`
/// ids (half-up), both sides in shuffle order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Raw document shapes
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CategoryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CocoAnnotation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<u64>,
    pub image_id: u64,
    pub category_id: u64,
    /// `[x, y, width, height]` in absolute pixels.
    pub bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CocoResultEntry {
    pub image_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_id: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category_name: Option<String>,
    pub bbox: [f64; 4],
    pub score: f64,
}

/// `(model name, predictions path)` pair; paths are resolved relative to the
/// manifest file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub model: String,
    pub predictions: PathBuf,
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile { path: path.to_path_buf() });
    }
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::MalformedDocument {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn validate_raw_box(image_id: u64, bbox: &[f64; 4]) -> Result<()> {
    if bbox.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidBox {
            detail: format!("non-finite bbox {bbox:?} on image {image_id}"),
        });
    }
    if bbox[2] <= 0.0 || bbox[3] <= 0.0 {
        return Err(Error::InvalidBox {
            detail: format!("non-positive extent bbox {bbox:?} on image {image_id}"),
        });
    }
    Ok(())
}

/// Clamp a ground-truth box to the image rectangle. Slight overruns are kept
/// (annotation tools commonly emit them) with a warning; boxes fully outside
/// the image are rejected.
fn clamp_to_image(image_id: u64, bbox: &[f64; 4], width: u32, height: u32) -> Result<BoundingBox> {
    let (w, h) = (width as f64, height as f64);
    // In-bounds boxes pass through untouched so loading round-trips exactly.
    if bbox[0] >= 0.0 && bbox[1] >= 0.0 && bbox[0] + bbox[2] <= w && bbox[1] + bbox[3] <= h {
        return Ok(BoundingBox::new(bbox[0], bbox[1], bbox[2], bbox[3]));
    }
    let x0 = bbox[0].max(0.0);
    let y0 = bbox[1].max(0.0);
    let x1 = (bbox[0] + bbox[2]).min(w);
    let y1 = (bbox[1] + bbox[3]).min(h);
    if x1 <= x0 || y1 <= y0 {
        return Err(Error::InvalidBox {
            detail: format!("bbox {bbox:?} lies fully outside image {image_id} ({width}x{height})"),
        });
    }
    log::warn!(
        "clamped ground-truth bbox {:?} to image {} bounds ({}x{})",
        bbox,
        image_id,
        width,
        height
    );
    Ok(BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
}

/// Load a COCO annotation document into a [`Dataset`].
///
/// Every `images` entry yields an [`ImageRecord`], including images with no
/// annotations; category ids are resolved to names. All validation failures
/// are fatal.
pub fn load_annotations(path: &Path) -> Result<Dataset> {
    let text = read_file(path)?;
    let doc: CocoDocument = parse_json(path, &text)?;
    dataset_from_document(path, doc)
}

fn dataset_from_document(path: &Path, doc: CocoDocument) -> Result<Dataset> {
    let mut categories: HashMap<u64, String> = HashMap::new();
    for cat in &doc.categories {
        if cat.name.trim().is_empty() {
            return Err(Error::MalformedDocument {
                path: path.to_path_buf(),
                detail: format!("category {} has an empty name", cat.id),
            });
        }
        if categories.insert(cat.id, cat.name.clone()).is_some() {
            return Err(Error::MalformedDocument {
                path: path.to_path_buf(),
                detail: format!("duplicate category id {}", cat.id),
            });
        }
    }

    let mut images: Vec<ImageRecord> = Vec::with_capacity(doc.images.len());
    let mut index_of: HashMap<u64, usize> = HashMap::new();
    for img in &doc.images {
        if img.width == 0 || img.height == 0 {
            return Err(Error::MalformedDocument {
                path: path.to_path_buf(),
                detail: format!("image {} has zero width or height", img.id),
            });
        }
        if index_of.insert(img.id, images.len()).is_some() {
            return Err(Error::MalformedDocument {
                path: path.to_path_buf(),
                detail: format!("duplicate image id {}", img.id),
            });
        }
        images.push(ImageRecord {
            id: img.id,
            width: img.width,
            height: img.height,
            ground_truth: Vec::new(),
        });
    }

    for ann in &doc.annotations {
        let &idx = index_of.get(&ann.image_id).ok_or_else(|| Error::DanglingReference {
            detail: format!("annotation references unknown image {}", ann.image_id),
        })?;
        let name = categories.get(&ann.category_id).ok_or_else(|| Error::DanglingReference {
            detail: format!("annotation references unknown category {}", ann.category_id),
        })?;
        validate_raw_box(ann.image_id, &ann.bbox)?;
        let record = &mut images[idx];
        let bbox = clamp_to_image(ann.image_id, &ann.bbox, record.width, record.height)?;
        record.ground_truth.push(GroundTruthInstance {
            bbox,
            class_label: name.clone(),
        });
    }

    Ok(Dataset {
        images,
        categories: doc.categories,
    })
}

/// Load one model's COCO-results file against an already-loaded dataset.
///
/// Detections are grouped per image; dataset images absent from the file get
/// empty detection lists. Entries may name their category directly
/// (`category_name`) or via `category_id`, which is resolved against the
/// dataset's category table.
pub fn load_predictions(path: &Path, model_name: &str, dataset: &Dataset) -> Result<PredictionSet> {
    let text = read_file(path)?;
    let entries: Vec<CocoResultEntry> = parse_json(path, &text)?;
    predictions_from_entries(path, model_name, dataset, &entries)
}

fn predictions_from_entries(
    path: &Path,
    model_name: &str,
    dataset: &Dataset,
    entries: &[CocoResultEntry],
) -> Result<PredictionSet> {
    let known_ids: HashSet<u64> = dataset.images.iter().map(|img| img.id).collect();
    let cat_names: HashMap<u64, &str> = dataset
        .categories
        .iter()
        .map(|c| (c.id, c.name.as_str()))
        .collect();

    let mut by_image: BTreeMap<u64, Vec<Detection>> =
        dataset.images.iter().map(|img| (img.id, Vec::new())).collect();

    for entry in entries {
        if !known_ids.contains(&entry.image_id) {
            return Err(Error::DanglingReference {
                detail: format!(
                    "prediction in {} references unknown image {}",
                    path.display(),
                    entry.image_id
                ),
            });
        }
        let label = match (&entry.category_name, entry.category_id) {
            (Some(name), _) => name.clone(),
            (None, Some(id)) => cat_names
                .get(&id)
                .map(|s| s.to_string())
                .ok_or_else(|| Error::DanglingReference {
                    detail: format!(
                        "prediction in {} references unknown category {}",
                        path.display(),
                        id
                    ),
                })?,
            (None, None) => {
                return Err(Error::MalformedDocument {
                    path: path.to_path_buf(),
                    detail: format!(
                        "prediction on image {} has neither category_id nor category_name",
                        entry.image_id
                    ),
                })
            }
        };
        validate_raw_box(entry.image_id, &entry.bbox)?;
        if !(0.0..=1.0).contains(&entry.score) || entry.score.is_nan() {
            return Err(Error::ScoreOutOfRange {
                image_id: entry.image_id,
                score: entry.score,
            });
        }
        by_image.get_mut(&entry.image_id).unwrap().push(Detection {
            bbox: BoundingBox::new(entry.bbox[0], entry.bbox[1], entry.bbox[2], entry.bbox[3]),
            class_label: label,
            score: entry.score,
        });
    }

    Ok(PredictionSet {
        model_name: model_name.to_string(),
        by_image,
    })
}

/// Load a pool manifest and every prediction set it names.
///
/// The manifest is a JSON array of `{model, predictions}`; prediction paths
/// are resolved relative to the manifest's directory. Model names must be
/// unique within the pool.
pub fn load_pool(manifest_path: &Path, dataset: &Dataset) -> Result<Vec<PredictionSet>> {
    let text = read_file(manifest_path)?;
    let entries: Vec<ManifestEntry> = parse_json(manifest_path, &text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    let mut pool = Vec::with_capacity(entries.len());
    for entry in &entries {
        if !seen.insert(entry.model.clone()) {
            return Err(Error::DuplicateModel { name: entry.model.clone() });
        }
        let pred_path = if entry.predictions.is_absolute() {
            entry.predictions.clone()
        } else {
            base.join(&entry.predictions)
        };
        pool.push(load_predictions(&pred_path, &entry.model, dataset)?);
    }
    Ok(pool)
}

/// Deterministic seeded split. The image list is shuffled under `seed`; the
/// first `round((1-ratio)*N)` ids (half-up) become the test side, the rest
/// the training side, both kept in shuffle order.
pub fn split_dataset(dataset: &Dataset, ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if dataset.images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidConfig {
            detail: format!("split ratio must be in (0, 1], got {ratio}"),
        });
    }
    let mut ids = dataset.image_ids();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let n = ids.len();
    // Half-up rounding of the test count.
    let test_count = (((1.0 - ratio) * n as f64) + 0.5).floor() as usize;
    let test_count = test_count.min(n);
    let test_ids = ids[..test_count].to_vec();
    let train_ids = ids[test_count..].to_vec();
    Ok(DatasetSplit { train_ids, test_ids, seed })
}

// ---------------------------------------------------------------------------
// Serialization back to the wire formats
// ---------------------------------------------------------------------------

/// Rebuild a COCO document from a dataset (annotation ids are renumbered
/// sequentially). Together with [`load_annotations`] this round-trips
/// field-for-field.
pub fn to_coco_document(dataset: &Dataset) -> CocoDocument {
    let name_to_id: HashMap<&str, u64> = dataset
        .categories
        .iter()
        .map(|c| (c.name.as_str(), c.id))
        .collect();
    let mut annotations = Vec::new();
    let mut next_id = 1u64;
    for img in &dataset.images {
        for gt in &img.ground_truth {
            annotations.push(CocoAnnotation {
                id: Some(next_id),
                image_id: img.id,
                category_id: name_to_id[gt.class_label.as_str()],
                bbox: [gt.bbox.x, gt.bbox.y, gt.bbox.w, gt.bbox.h],
            });
            next_id += 1;
        }
    }
    CocoDocument {
        images: dataset
            .images
            .iter()
            .map(|img| CocoImage {
                id: img.id,
                width: img.width,
                height: img.height,
                file_name: None,
            })
            .collect(),
        annotations,
        categories: dataset.categories.clone(),
    }
}

/// Flatten a prediction set into COCO-results entries (category by name).
pub fn to_results_document(predictions: &PredictionSet) -> Vec<CocoResultEntry> {
    let mut entries = Vec::new();
    for (&image_id, dets) in &predictions.by_image {
        for det in dets {
            entries.push(CocoResultEntry {
                image_id,
                category_id: None,
                category_name: Some(det.class_label.clone()),
                bbox: [det.bbox.x, det.bbox.y, det.bbox.w, det.bbox.h],
                score: det.score,
            });
        }
    }
    entries
}
