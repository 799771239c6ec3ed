//! End-to-end selection runs: the UCB loop, the brute-force and consensus
//! baselines, and seeded repetition with averaging.
//!
//! Bandit selection runs on the training split; the winner's reported
//! metrics come from the held-out test split. Image iteration order is the
//! split-shuffle order under the run's seed, so identical configs replay
//! bit-for-bit.

use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{BanditSnapshot, BanditState, ScoringMode};
use crate::dataset::{self, Dataset, ImageRecord, PredictionSet};
use crate::error::{Error, Result};
use crate::eval::{self, EvalCriteria, MatchOutcome, MetricsReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Ucb,
    BruteForce,
    Consensus,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Ucb => write!(f, "ucb"),
            Strategy::BruteForce => write!(f, "brute-force"),
            Strategy::Consensus => write!(f, "consensus"),
        }
    }
}

/// Everything one run needs besides the data; echoed verbatim into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub criteria: EvalCriteria,
    /// UCB exploration constant.
    pub exploration: f64,
    pub mode: ScoringMode,
    pub split_ratio: f64,
    pub seeds: Vec<u64>,
    pub strategy: Strategy,
    pub consensus_k: usize,
    /// Score brute-force rewards on the whole dataset instead of the
    /// training split only.
    pub brute_force_full_dataset: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool_manifest: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            criteria: EvalCriteria::default(),
            exploration: 0.1,
            mode: ScoringMode::Mean,
            split_ratio: 0.9,
            seeds: vec![1, 2, 3, 4],
            strategy: Strategy::Ucb,
            consensus_k: 2,
            brute_force_full_dataset: false,
            pool_manifest: None,
        }
    }
}

/// One pull as recorded in the trace. `arm` is absent for the consensus
/// pseudo-arm; `q_after` is the pulled arm's cumulative reward after the
/// update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: u64,
    pub image_id: u64,
    pub arm: Option<usize>,
    pub b: usize,
    pub g: usize,
    pub d: usize,
    pub q_after: f64,
}

/// Outcome of a single seeded run.
///
/// `metrics` is the run's reported score: held-out test metrics of the
/// winning arm for the selection strategies, training-split metrics of the
/// fused ensemble for the consensus baseline. `inference_count` counts
/// model-image evaluations spent during the selection phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub winner_model: Option<String>,
    pub winner_arm: Option<usize>,
    pub train_pulls: u64,
    pub inference_count: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: MetricsReport,
    pub trace: Vec<TraceEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandit: Option<BanditSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    #[serde(flatten)]
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalWinner {
    pub model: String,
    pub wins: usize,
    pub runs: usize,
}

/// Per-seed results plus their arithmetic mean and the modal winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub strategy: Strategy,
    pub per_seed: Vec<SeedRun>,
    pub mean: MeanMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modal_winner: Option<ModalWinner>,
}

fn image_index(dataset: &Dataset) -> HashMap<u64, &ImageRecord> {
    dataset.images.iter().map(|img| (img.id, img)).collect()
}

fn lookup<'a>(index: &HashMap<u64, &'a ImageRecord>, id: u64) -> Result<&'a ImageRecord> {
    index.get(&id).copied().ok_or_else(|| Error::Internal {
        detail: format!("split references image {id} missing from the dataset"),
    })
}

fn validate_inputs(config: &RunConfig, pool: &[PredictionSet]) -> Result<()> {
    config.criteria.validate()?;
    if pool.is_empty() {
        return Err(Error::NoArms);
    }
    if !(config.exploration >= 0.0) {
        return Err(Error::InvalidConfig {
            detail: format!("exploration constant must be >= 0, got {}", config.exploration),
        });
    }
    Ok(())
}

/// Metrics of one prediction set over a list of image ids.
fn score_on_ids(
    index: &HashMap<u64, &ImageRecord>,
    predictions: &PredictionSet,
    ids: &[u64],
    criteria: &EvalCriteria,
) -> Result<MetricsReport> {
    let outcomes: Result<Vec<MatchOutcome>> = ids
        .iter()
        .map(|&id| {
            let img = lookup(index, id)?;
            Ok(eval::evaluate_image(predictions.detections_for(id), &img.ground_truth, criteria))
        })
        .collect();
    eval::aggregate_metrics(&outcomes?)
}

/// Ids the winner is scored on: the held-out test split, or the training
/// split when the ratio leaves no test images (ratio = 1.0).
fn scoring_ids(split: &dataset::DatasetSplit) -> &[u64] {
    if split.test_ids.is_empty() {
        &split.train_ids
    } else {
        &split.test_ids
    }
}

/// Algorithm loop of the UCB strategy: one arm selected and evaluated per
/// training image, reward ledger updated after each pull, winner = argmax of
/// cumulative reward.
pub fn run_ucb_selection(
    config: &RunConfig,
    dataset: &Dataset,
    pool: &[PredictionSet],
    seed: u64,
) -> Result<RunResult> {
    validate_inputs(config, pool)?;
    let split = dataset::split_dataset(dataset, config.split_ratio, seed)?;
    let index = image_index(dataset);

    let mut state = BanditState::<f64>::new(pool.len(), config.exploration, config.mode);
    let mut trace = Vec::with_capacity(split.train_ids.len());
    for (idx, &image_id) in split.train_ids.iter().enumerate() {
        let arm = state.select_arm()?;
        let img = lookup(&index, image_id)?;
        let outcome =
            eval::evaluate_image(pool[arm].detections_for(image_id), &img.ground_truth, &config.criteria);
        state.update_reward(arm, outcome.b, outcome.g, outcome.d)?;
        trace.push(TraceEntry {
            step: idx as u64 + 1,
            image_id,
            arm: Some(arm),
            b: outcome.b,
            g: outcome.g,
            d: outcome.d,
            q_after: state.rewards()[arm],
        });
    }

    let winner = state.best_arm()?;
    let metrics = score_on_ids(&index, &pool[winner], scoring_ids(&split), &config.criteria)?;

    Ok(RunResult {
        winner_model: Some(pool[winner].model_name.clone()),
        winner_arm: Some(winner),
        train_pulls: split.train_ids.len() as u64,
        inference_count: split.train_ids.len() as u64,
        train_size: split.train_ids.len(),
        test_size: split.test_ids.len(),
        metrics,
        trace,
        bandit: Some(state.snapshot()),
    })
}

/// Baseline that evaluates every arm on every training image and picks the
/// cumulative-reward argmax post hoc. Rewards use the same `3b - g - d`
/// rule; with `brute_force_full_dataset` the rewards run over all images.
pub fn run_brute_force(
    config: &RunConfig,
    dataset: &Dataset,
    pool: &[PredictionSet],
    seed: u64,
) -> Result<RunResult> {
    validate_inputs(config, pool)?;
    let split = dataset::split_dataset(dataset, config.split_ratio, seed)?;
    let index = image_index(dataset);

    // Full shuffled order is test ++ train.
    let reward_ids: Vec<u64> = if config.brute_force_full_dataset {
        split.test_ids.iter().chain(split.train_ids.iter()).copied().collect()
    } else {
        split.train_ids.clone()
    };

    // (arm, image) evaluations are independent; parallelize per image and
    // reassemble in image-major order so traces stay deterministic.
    let per_image: Result<Vec<Vec<MatchOutcome>>> = reward_ids
        .par_iter()
        .map(|&image_id| {
            let img = lookup(&index, image_id)?;
            Ok(pool
                .iter()
                .map(|arm| eval::evaluate_image(arm.detections_for(image_id), &img.ground_truth, &config.criteria))
                .collect())
        })
        .collect();
    let per_image = per_image?;

    let mut rewards = vec![0.0f64; pool.len()];
    let mut trace = Vec::with_capacity(reward_ids.len() * pool.len());
    let mut step = 0u64;
    for (image_id, outcomes) in reward_ids.iter().zip(&per_image) {
        for (arm, outcome) in outcomes.iter().enumerate() {
            step += 1;
            rewards[arm] += 3.0 * outcome.b as f64 - outcome.g as f64 - outcome.d as f64;
            trace.push(TraceEntry {
                step,
                image_id: *image_id,
                arm: Some(arm),
                b: outcome.b,
                g: outcome.g,
                d: outcome.d,
                q_after: rewards[arm],
            });
        }
    }

    let mut winner = 0;
    for arm in 1..rewards.len() {
        if rewards[arm] > rewards[winner] {
            winner = arm;
        }
    }
    let metrics = score_on_ids(&index, &pool[winner], scoring_ids(&split), &config.criteria)?;

    Ok(RunResult {
        winner_model: Some(pool[winner].model_name.clone()),
        winner_arm: Some(winner),
        train_pulls: step,
        inference_count: (reward_ids.len() * pool.len()) as u64,
        train_size: split.train_ids.len(),
        test_size: split.test_ids.len(),
        metrics,
        trace,
        bandit: None,
    })
}

/// Baseline that fuses all arms' detections per training image (agreement of
/// at least `consensus_k` models) and scores the fused ensemble as a single
/// pseudo-arm. There is no winner model; the ensemble is the subject.
pub fn run_consensus(
    config: &RunConfig,
    dataset: &Dataset,
    pool: &[PredictionSet],
    seed: u64,
) -> Result<RunResult> {
    validate_inputs(config, pool)?;
    if pool.len() < config.consensus_k {
        return Err(Error::InsufficientModels {
            available: pool.len(),
            required: config.consensus_k,
        });
    }
    let split = dataset::split_dataset(dataset, config.split_ratio, seed)?;
    let index = image_index(dataset);

    let outcomes: Result<Vec<MatchOutcome>> = split
        .train_ids
        .par_iter()
        .map(|&image_id| {
            let img = lookup(&index, image_id)?;
            let per_model: Vec<Vec<crate::Detection>> = pool
                .iter()
                .map(|arm| arm.detections_for(image_id).to_vec())
                .collect();
            let fused = eval::consensus_fuse(&per_model, config.consensus_k, config.criteria.rho)?;
            Ok(eval::evaluate_image(&fused, &img.ground_truth, &config.criteria))
        })
        .collect();
    let outcomes = outcomes?;

    let mut trace = Vec::with_capacity(outcomes.len());
    let mut cumulative = 0.0f64;
    for (idx, (image_id, outcome)) in split.train_ids.iter().zip(&outcomes).enumerate() {
        cumulative += 3.0 * outcome.b as f64 - outcome.g as f64 - outcome.d as f64;
        trace.push(TraceEntry {
            step: idx as u64 + 1,
            image_id: *image_id,
            arm: None,
            b: outcome.b,
            g: outcome.g,
            d: outcome.d,
            q_after: cumulative,
        });
    }

    let metrics = eval::aggregate_metrics(&outcomes)?;

    Ok(RunResult {
        winner_model: None,
        winner_arm: None,
        train_pulls: split.train_ids.len() as u64,
        inference_count: (split.train_ids.len() * pool.len()) as u64,
        train_size: split.train_ids.len(),
        test_size: split.test_ids.len(),
        metrics,
        trace,
        bandit: None,
    })
}

/// Run the configured strategy once under one seed.
pub fn run_strategy(
    config: &RunConfig,
    dataset: &Dataset,
    pool: &[PredictionSet],
    seed: u64,
) -> Result<RunResult> {
    match config.strategy {
        Strategy::Ucb => run_ucb_selection(config, dataset, pool, seed),
        Strategy::BruteForce => run_brute_force(config, dataset, pool, seed),
        Strategy::Consensus => run_consensus(config, dataset, pool, seed),
    }
}

/// Arithmetic mean of the per-seed precision/recall/F1.
pub fn mean_metrics(per_seed: &[SeedRun]) -> MeanMetrics {
    let n = per_seed.len().max(1) as f64;
    MeanMetrics {
        precision: per_seed.iter().map(|r| r.result.metrics.precision).sum::<f64>() / n,
        recall: per_seed.iter().map(|r| r.result.metrics.recall).sum::<f64>() / n,
        f1: per_seed.iter().map(|r| r.result.metrics.f1).sum::<f64>() / n,
    }
}

fn modal_winner(per_seed: &[SeedRun]) -> Option<ModalWinner> {
    let mut counts: Vec<(String, usize)> = Vec::new();
    for run in per_seed {
        let Some(winner) = &run.result.winner_model else { return None };
        match counts.iter_mut().find(|(name, _)| name == winner) {
            Some((_, count)) => *count += 1,
            None => counts.push((winner.clone(), 1)),
        }
    }
    // Max count; ties go to the winner seen first.
    let mut best: Option<(String, usize)> = None;
    for (model, wins) in counts {
        let replace = match &best {
            None => true,
            Some((_, best_wins)) => wins > *best_wins,
        };
        if replace {
            best = Some((model, wins));
        }
    }
    best.map(|(model, wins)| ModalWinner { model, wins, runs: per_seed.len() })
}

/// Independent runs per seed (fresh split, fresh bandit state), averaged.
pub fn repeat_and_average(
    config: &RunConfig,
    dataset: &Dataset,
    pool: &[PredictionSet],
) -> Result<RunSummary> {
    if config.seeds.is_empty() {
        return Err(Error::InvalidConfig { detail: "at least one seed is required".into() });
    }
    let mut per_seed = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        per_seed.push(SeedRun { seed, result: run_strategy(config, dataset, pool, seed)? });
    }
    let mean = mean_metrics(&per_seed);
    let modal = modal_winner(&per_seed);
    Ok(RunSummary { strategy: config.strategy, per_seed, mean, modal_winner: modal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, SyntheticArmSpec, SyntheticSceneSpec};

    fn scene(images: usize, boxes: (usize, usize), seed: u64) -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            image_count: images,
            boxes_per_image: boxes,
            image_size: (640, 480),
            box_size: (20.0, 60.0),
            class_label: "cow".into(),
            seed,
        }
    }

    fn arm(name: &str, tpr: f64, fp: f64) -> SyntheticArmSpec {
        SyntheticArmSpec {
            name: name.into(),
            true_positive_rate: tpr,
            false_positives_per_image: fp,
            localization_jitter: 0.02,
            score_range: (0.6, 0.99),
            class_noise_rate: 0.0,
        }
    }

    fn build_pool(dataset: &Dataset, specs: &[SyntheticArmSpec], seed: u64) -> Vec<PredictionSet> {
        specs
            .iter()
            .enumerate()
            .map(|(idx, spec)| synthetic::generate_arm(spec, dataset, seed + idx as u64).unwrap())
            .collect()
    }

    #[test]
    fn single_arm_pool_wins_trivially() {
        let ds = synthetic::generate_scenes(&scene(30, (1, 4), 5)).unwrap();
        let pool = build_pool(&ds, &[arm("only", 0.9, 0.5)], 100);
        let config = RunConfig { seeds: vec![1], ..RunConfig::default() };
        let result = run_ucb_selection(&config, &ds, &pool, 1).unwrap();
        assert_eq!(result.winner_model.as_deref(), Some("only"));
        assert_eq!(result.inference_count, result.train_size as u64);
        assert_eq!(result.trace.len(), result.train_size);
    }

    #[test]
    fn perfect_arm_beats_broken_arm_for_any_seed() {
        let ds = synthetic::generate_scenes(&scene(60, (1, 4), 8)).unwrap();
        let pool = build_pool(&ds, &[arm("broken", 0.0, 0.0), arm("perfect", 1.0, 0.0)], 50);
        for seed in 0..10 {
            let config = RunConfig::default();
            let result = run_ucb_selection(&config, &ds, &pool, seed).unwrap();
            assert_eq!(result.winner_model.as_deref(), Some("perfect"), "seed {seed}");
        }
    }

    #[test]
    fn training_set_smaller_than_pool_still_works() {
        let ds = synthetic::generate_scenes(&scene(3, (1, 2), 4)).unwrap();
        let specs: Vec<SyntheticArmSpec> =
            (0..5).map(|i| arm(&format!("m{i}"), 0.5, 0.5)).collect();
        let pool = build_pool(&ds, &specs, 10);
        let config = RunConfig { split_ratio: 1.0, ..RunConfig::default() };
        let result = run_ucb_selection(&config, &ds, &pool, 1).unwrap();
        assert_eq!(result.train_pulls, 3);
        assert!(result.winner_model.is_some());
    }

    #[test]
    fn ucb_and_brute_force_coincide_for_one_arm() {
        let ds = synthetic::generate_scenes(&scene(40, (1, 4), 12)).unwrap();
        let pool = build_pool(&ds, &[arm("solo", 0.8, 0.5)], 77);
        for seed in 0..10 {
            let config = RunConfig::default();
            let ucb = run_ucb_selection(&config, &ds, &pool, seed).unwrap();
            let brute = run_brute_force(&config, &ds, &pool, seed).unwrap();
            assert_eq!(ucb.winner_model, brute.winner_model);
            assert_eq!(ucb.metrics, brute.metrics);
            assert_eq!(ucb.trace, brute.trace);
        }
    }

    #[test]
    fn brute_force_counts_every_arm_image_pair() {
        let ds = synthetic::generate_scenes(&scene(20, (1, 3), 9)).unwrap();
        let specs: Vec<SyntheticArmSpec> =
            (0..4).map(|i| arm(&format!("m{i}"), 0.7, 0.5)).collect();
        let pool = build_pool(&ds, &specs, 40);
        let config = RunConfig::default();
        let result = run_brute_force(&config, &ds, &pool, 3).unwrap();
        assert_eq!(result.inference_count, 4 * result.train_size as u64);
        assert_eq!(result.trace.len() as u64, result.inference_count);
    }

    #[test]
    fn brute_force_winner_matches_independent_rederivation() {
        let ds = synthetic::generate_scenes(&scene(50, (1, 4), 33)).unwrap();
        let specs = [arm("a", 0.9, 0.3), arm("b", 0.6, 1.0), arm("c", 0.4, 2.0)];
        let pool = build_pool(&ds, &specs, 60);
        let config = RunConfig::default();
        let result = run_brute_force(&config, &ds, &pool, 2).unwrap();

        // Independent single pass over the same training ids.
        let split = dataset::split_dataset(&ds, config.split_ratio, 2).unwrap();
        let mut rewards = vec![0.0f64; pool.len()];
        for &id in &split.train_ids {
            let img = ds.image(id).unwrap();
            for (a, set) in pool.iter().enumerate() {
                let o = eval::evaluate_image(set.detections_for(id), &img.ground_truth, &config.criteria);
                rewards[a] += 3.0 * o.b as f64 - o.g as f64 - o.d as f64;
            }
        }
        let oracle = rewards
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        assert_eq!(result.winner_arm, Some(oracle));
    }

    #[test]
    fn brute_force_separated_arms_pick_the_better_one() {
        // Expected per-image rewards +2 vs -1.
        let spec = scene(200, (2, 2), 21);
        let ds = synthetic::generate_scenes(&spec).unwrap();
        let good = arm("good", 1.0, 0.0);
        let bad = arm("bad", 0.5, 1.0);
        assert_eq!(synthetic::expected_reward(&good, &spec).unwrap(), 2.0);
        assert_eq!(synthetic::expected_reward(&bad, &spec).unwrap(), -1.0);
        let mut wins = 0;
        for seed in 0..10 {
            let pool = build_pool(&ds, &[bad.clone(), good.clone()], 1000 + seed);
            let result = run_brute_force(&RunConfig::default(), &ds, &pool, seed).unwrap();
            if result.winner_model.as_deref() == Some("good") {
                wins += 1;
            }
        }
        assert!(wins >= 9, "good arm won only {wins}/10 seeds");
    }

    #[test]
    fn consensus_of_identical_models_equals_single_model() {
        // No clutter: fusion must not merge a model's own overlapping boxes
        // for the unanimity-identity check to be exact.
        let ds = synthetic::generate_scenes(&scene(30, (1, 4), 14)).unwrap();
        let one = synthetic::generate_arm(&arm("m", 0.9, 0.0), &ds, 70).unwrap();
        let pool = vec![
            PredictionSet { model_name: "m1".into(), ..one.clone() },
            PredictionSet { model_name: "m2".into(), ..one.clone() },
        ];
        let config = RunConfig { strategy: Strategy::Consensus, ..RunConfig::default() };
        let consensus = run_consensus(&config, &ds, &pool, 4).unwrap();
        assert!(consensus.winner_model.is_none());

        // Score the single model over the same training images.
        let split = dataset::split_dataset(&ds, config.split_ratio, 4).unwrap();
        let outcomes: Vec<_> = split
            .train_ids
            .iter()
            .map(|&id| {
                eval::evaluate_image(one.detections_for(id), &ds.image(id).unwrap().ground_truth, &config.criteria)
            })
            .collect();
        let single = eval::aggregate_metrics(&outcomes).unwrap();
        assert_eq!(consensus.metrics, single);
    }

    #[test]
    fn consensus_of_disjoint_models_has_zero_recall() {
        // Two arms whose detections never coincide: one detects everything,
        // the other nothing, so no box is backed by two models.
        let ds = synthetic::generate_scenes(&scene(20, (1, 3), 16)).unwrap();
        let pool = build_pool(&ds, &[arm("all", 1.0, 0.0), arm("none", 0.0, 0.0)], 90);
        let config = RunConfig { strategy: Strategy::Consensus, ..RunConfig::default() };
        let result = run_consensus(&config, &ds, &pool, 1).unwrap();
        assert_eq!(result.metrics.recall, 0.0);
        assert_eq!(result.metrics.total_b, 0);
    }

    #[test]
    fn consensus_requires_enough_models() {
        let ds = synthetic::generate_scenes(&scene(5, (1, 2), 2)).unwrap();
        let pool = build_pool(&ds, &[arm("only", 1.0, 0.0)], 3);
        let config = RunConfig { strategy: Strategy::Consensus, ..RunConfig::default() };
        assert_eq!(
            run_consensus(&config, &ds, &pool, 1).unwrap_err().kind(),
            "InsufficientModels"
        );
    }

    #[test]
    fn mean_metrics_is_the_arithmetic_mean() {
        let mk = |f1: f64| SeedRun {
            seed: 0,
            result: RunResult {
                winner_model: Some("m".into()),
                winner_arm: Some(0),
                train_pulls: 0,
                inference_count: 0,
                train_size: 0,
                test_size: 0,
                metrics: MetricsReport {
                    precision: f1,
                    recall: f1,
                    f1,
                    total_g: 0,
                    total_d: 0,
                    total_b: 0,
                    averaging: eval::Averaging::Micro,
                },
                trace: vec![],
                bandit: None,
            },
        };
        let runs: Vec<SeedRun> = [0.70, 0.72, 0.71, 0.73].iter().map(|&f| mk(f)).collect();
        let mean = mean_metrics(&runs);
        assert!((mean.f1 - 0.715).abs() < 1e-12);
        assert_eq!(format!("{:.3}", mean.f1), "0.715");
    }

    #[test]
    fn repeat_and_average_single_seed_equals_that_run() {
        let ds = synthetic::generate_scenes(&scene(30, (1, 3), 19)).unwrap();
        let pool = build_pool(&ds, &[arm("a", 0.9, 0.2), arm("b", 0.5, 1.0)], 200);
        let config = RunConfig { seeds: vec![7], ..RunConfig::default() };
        let summary = repeat_and_average(&config, &ds, &pool).unwrap();
        assert_eq!(summary.per_seed.len(), 1);
        assert_eq!(summary.mean.f1, summary.per_seed[0].result.metrics.f1);
        let modal = summary.modal_winner.unwrap();
        assert_eq!(modal.wins, 1);
        assert_eq!(modal.runs, 1);
    }

    #[test]
    fn deterministic_pool_with_full_ratio_has_zero_variance() {
        let ds = synthetic::generate_scenes(&scene(25, (1, 3), 23)).unwrap();
        let pool = build_pool(&ds, &[arm("a", 0.8, 0.5)], 300);
        let config = RunConfig { split_ratio: 1.0, seeds: vec![1, 2, 3, 4], ..RunConfig::default() };
        let summary = repeat_and_average(&config, &ds, &pool).unwrap();
        let f1s: Vec<f64> = summary.per_seed.iter().map(|r| r.result.metrics.f1).collect();
        assert!(f1s.windows(2).all(|w| w[0] == w[1]), "expected zero variance: {f1s:?}");
        assert_eq!(summary.mean.f1, f1s[0]);
    }

    #[test]
    fn replay_reproduces_traces_exactly() {
        let ds = synthetic::generate_scenes(&scene(40, (1, 4), 29)).unwrap();
        let pool = build_pool(&ds, &[arm("a", 0.9, 0.3), arm("b", 0.6, 1.0)], 400);
        let config = RunConfig::default();
        for strategy in [Strategy::Ucb, Strategy::BruteForce, Strategy::Consensus] {
            let config = RunConfig { strategy, ..config.clone() };
            let first = run_strategy(&config, &ds, &pool, 5).unwrap();
            let second = run_strategy(&config, &ds, &pool, 5).unwrap();
            assert_eq!(first, second);
            assert_eq!(
                serde_json::to_string(&first.trace).unwrap(),
                serde_json::to_string(&second.trace).unwrap()
            );
        }
    }

    #[test]
    fn pull_accounting_matches_training_size() {
        let ds = synthetic::generate_scenes(&scene(35, (1, 3), 31)).unwrap();
        let pool = build_pool(&ds, &[arm("a", 0.9, 0.3), arm("b", 0.6, 1.0)], 500);
        let result = run_ucb_selection(&RunConfig::default(), &ds, &pool, 9).unwrap();
        let snapshot = result.bandit.as_ref().unwrap();
        let total: u64 = snapshot.n.iter().sum();
        assert_eq!(total, result.train_size as u64);
        assert_eq!(result.trace.len(), result.train_size);
        // Ledger conservation: replaying the pull log recovers Q exactly.
        let mut replayed = vec![0.0f64; snapshot.q.len()];
        for pull in &snapshot.pull_log {
            replayed[pull.arm] += 3.0 * pull.b as f64 - pull.g as f64 - pull.d as f64;
        }
        assert_eq!(replayed, snapshot.q);
    }

    #[test]
    fn efficiency_ratio_is_one_over_n() {
        for (arms, images) in [(2usize, 20usize), (4, 30), (8, 16)] {
            let ds = synthetic::generate_scenes(&scene(images, (1, 3), 41)).unwrap();
            let specs: Vec<SyntheticArmSpec> =
                (0..arms).map(|i| arm(&format!("m{i}"), 0.7, 0.5)).collect();
            let pool = build_pool(&ds, &specs, 600);
            let config = RunConfig::default();
            let ucb = run_ucb_selection(&config, &ds, &pool, 1).unwrap();
            let brute = run_brute_force(&config, &ds, &pool, 1).unwrap();
            assert_eq!(brute.inference_count, ucb.inference_count * arms as u64);
        }
    }
}
