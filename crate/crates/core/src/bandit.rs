//! UCB arm selection and the reward/penalty ledger.
//!
//! Each pull of arm `a` on an image with `g` ground-truth boxes, `d` raw
//! detections and `b` accepted matches changes its cumulative reward by
//! `b - (g - b) - (d - b) = 3b - g - d`: matches are rewarded, misses and
//! false positives penalized. Selection scores an arm by its value estimate
//! plus an exploration bonus `C * sqrt(ln t / N_a)`; arms never pulled are
//! selected first, lowest index first. All ties break to the lowest index so
//! runs replay exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How the exploitation term of the UCB score is formed.
///
/// The update ledger accumulates raw rewards either way; the mode only
/// changes the selection score. `Mean` (standard UCB1, scale-stable as the
/// pull count grows) is the default; `Cumulative` scores by the raw sum.
/// The final winner is always the argmax of cumulative reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    #[default]
    Mean,
    Cumulative,
}

impl std::fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoringMode::Mean => write!(f, "mean"),
            ScoringMode::Cumulative => write!(f, "cumulative"),
        }
    }
}

/// One ledger entry: which arm was pulled at which step, and the counts that
/// produced its reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRecord {
    pub step: u64,
    pub arm: usize,
    pub b: usize,
    pub g: usize,
    pub d: usize,
}

/// Reward vector, selection counts, exploration constant and pull log for
/// one bandit run. A pure value: transitions happen through
/// [`BanditState::update_reward`], and the selection loop owns the state
/// exclusively.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState<S: Scalar> {
    q: Vec<S>,
    n: Vec<u64>,
    exploration: S,
    mode: ScoringMode,
    pulls: Vec<PullRecord>,
}

/// JSON-exportable snapshot for replay and audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSnapshot {
    pub q: Vec<f64>,
    pub n: Vec<u64>,
    pub exploration: f64,
    pub mode: ScoringMode,
    pub pull_log: Vec<PullRecord>,
}

impl<S: Scalar> BanditState<S> {
    pub fn new(arms: usize, exploration: S, mode: ScoringMode) -> Self {
        Self {
            q: vec![S::zero(); arms],
            n: vec![0; arms],
            exploration,
            mode,
            pulls: Vec::new(),
        }
    }

    pub fn arms(&self) -> usize {
        self.q.len()
    }

    pub fn rewards(&self) -> &[S] {
        &self.q
    }

    pub fn counts(&self) -> &[u64] {
        &self.n
    }

    pub fn mode(&self) -> ScoringMode {
        self.mode
    }

    /// Total pulls so far.
    pub fn total_pulls(&self) -> u64 {
        self.n.iter().sum()
    }

    pub fn pull_log(&self) -> &[PullRecord] {
        &self.pulls
    }

    /// Next arm to pull.
    ///
    /// Any arm never selected gets priority (lowest index first), so a fresh
    /// state sweeps arms `0..n` before any score comparison; this also means
    /// `ln t` is only evaluated with `t >= arms >= 1`. Otherwise the arm with
    /// the highest UCB score wins, ties to the lowest index.
    pub fn select_arm(&self) -> Result<usize> {
        if self.q.is_empty() {
            return Err(Error::NoArms);
        }
        if let Some(idx) = self.n.iter().position(|&n| n == 0) {
            return Ok(idx);
        }
        let scores = self.ucb_scores().expect("all arms pulled");
        Ok(argmax(&scores))
    }

    /// UCB score per arm, or `None` while some arm is still unpulled.
    pub fn ucb_scores(&self) -> Option<Vec<S>> {
        if self.q.is_empty() || self.n.iter().any(|&n| n == 0) {
            return None;
        }
        let t = S::from_u64(self.total_pulls()).expect("pull count fits scalar");
        Some(
            self.q
                .iter()
                .zip(&self.n)
                .map(|(&q, &n)| {
                    let n_s = S::from_u64(n).expect("count fits scalar");
                    let base = match self.mode {
                        ScoringMode::Cumulative => q,
                        ScoringMode::Mean => q / n_s,
                    };
                    base + self.exploration * (t.ln() / n_s).sqrt()
                })
                .collect(),
        )
    }

    /// Apply one pull's outcome: increments the arm's selection count and
    /// changes its reward by exactly `3b - g - d`. Other arms are untouched.
    pub fn update_reward(&mut self, arm: usize, b: usize, g: usize, d: usize) -> Result<()> {
        if arm >= self.q.len() {
            return Err(Error::ArmOutOfRange { index: arm, arms: self.q.len() });
        }
        self.n[arm] += 1;
        let delta = 3 * b as i64 - g as i64 - d as i64;
        self.q[arm] = self.q[arm] + S::from_i64(delta).expect("reward delta fits scalar");
        self.pulls.push(PullRecord { step: self.pulls.len() as u64 + 1, arm, b, g, d });
        Ok(())
    }

    /// Arm with the highest cumulative reward, regardless of scoring mode;
    /// ties to the lowest index.
    pub fn best_arm(&self) -> Result<usize> {
        if self.q.is_empty() {
            return Err(Error::NoArms);
        }
        Ok(argmax(&self.q))
    }

    pub fn snapshot(&self) -> BanditSnapshot {
        BanditSnapshot {
            q: self.q.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            n: self.n.clone(),
            exploration: self.exploration.to_f64().unwrap_or(f64::NAN),
            mode: self.mode,
            pull_log: self.pulls.clone(),
        }
    }
}

fn argmax<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (idx, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = idx;
        }
    }
    best
}
