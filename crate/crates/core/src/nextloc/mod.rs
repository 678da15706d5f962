//! Next-location prediction from visit sequences.
//!
//! Three predictors share one interface: the user's most frequent location,
//! an order-1 Markov chain and an LSTM language model. Evaluation holds out
//! each user's last location.

pub mod lstm;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{TowerRegistry, Trajectory};

pub use lstm::{fit_rnn, RecurrentModel, RnnParams, Update};

#[derive(Debug, Error, PartialEq)]
pub enum NextLocError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("corpus has no transitions")]
    EmptyCorpus,
    #[error("no user has at least two locations to evaluate")]
    EmptyTestSet,
    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("unknown tower `{0}`")]
    UnknownTower(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Tower,
    Merged,
}

impl Resolution {
    /// Token for a tower at this resolution.
    pub fn token<'a>(&self, tower_id: &'a str, towers: &'a TowerRegistry) -> Result<&'a str, NextLocError> {
        match self {
            Resolution::Tower => Ok(tower_id),
            Resolution::Merged => towers
                .merged_group(tower_id)
                .ok_or_else(|| NextLocError::UnknownTower(tower_id.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationSequence {
    pub user_id: String,
    pub resolution: Resolution,
    pub tokens: Vec<String>,
}

/// One sequence per trajectory. At merged resolution consecutive visits to
/// the same group collapse into one token.
pub fn sequences(
    trajectories: &[Trajectory],
    towers: &TowerRegistry,
    resolution: Resolution,
) -> Result<Vec<LocationSequence>, NextLocError> {
    trajectories
        .iter()
        .map(|t| {
            let mut tokens: Vec<String> = Vec::with_capacity(t.visits.len());
            for v in &t.visits {
                let tok = resolution.token(&v.tower_id, towers)?;
                if tokens.last().map(String::as_str) != Some(tok) {
                    tokens.push(tok.to_string());
                }
            }
            Ok(LocationSequence {
                user_id: t.user_id.clone(),
                resolution,
                tokens,
            })
        })
        .collect()
}

pub const UNK: usize = 0;
const UNK_TOKEN: &str = "<unk>";

/// Sorted token list with `<unk>` at id 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut known: Vec<String> = tokens
            .into_iter()
            .filter(|t| *t != UNK_TOKEN)
            .map(str::to_string)
            .collect();
        known.sort();
        known.dedup();
        let mut all = Vec::with_capacity(known.len() + 1);
        all.push(UNK_TOKEN.to_string());
        all.extend(known);
        Self { tokens: all }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> usize {
        self.tokens[1..]
            .binary_search_by(|t| t.as_str().cmp(token))
            .map_or(UNK, |i| i + 1)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }
}

/// Modal token of `history`; ties go to the most recently seen.
pub fn predict_frequent(history: &[String]) -> Result<String, NextLocError> {
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (i, t) in history.iter().enumerate() {
        let e = stats.entry(t).or_insert((0, 0));
        e.0 += 1;
        e.1 = i;
    }
    stats
        .into_iter()
        .max_by_key(|(_, v)| *v)
        .map(|(t, _)| t.to_string())
        .ok_or(NextLocError::EmptyHistory)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    pub smoothing: f64,
    pub states: Vec<String>,
    /// `counts[a][b]` = transitions `a -> b`.
    pub counts: BTreeMap<String, BTreeMap<String, u64>>,
    pub global_mode: String,
}

pub const DEFAULT_SMOOTHING: f64 = 0.1;

pub fn fit_markov(corpus: &[Vec<String>], smoothing: f64) -> Result<MarkovModel, NextLocError> {
    if !(smoothing >= 0.0) {
        return Err(NextLocError::InvalidHyperparams(format!("smoothing must be >= 0, got {smoothing}")));
    }
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    let mut transitions = 0;
    for seq in corpus {
        for t in seq {
            *freq.entry(t).or_insert(0) += 1;
        }
        for w in seq.windows(2) {
            *counts.entry(w[0].clone()).or_default().entry(w[1].clone()).or_insert(0) += 1;
            transitions += 1;
        }
    }
    if transitions == 0 {
        return Err(NextLocError::EmptyCorpus);
    }
    // ties go to the smaller token
    let global_mode = freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(t, _)| t.to_string())
        .unwrap_or_default();
    Ok(MarkovModel {
        smoothing,
        states: freq.keys().map(|t| t.to_string()).collect(),
        counts,
        global_mode,
    })
}

impl MarkovModel {
    /// Smoothed `P(to | from)`; `None` for an unseen `from`.
    pub fn probability(&self, from: &str, to: &str) -> Option<f64> {
        let row = self.counts.get(from)?;
        let total: u64 = row.values().sum();
        let n = row.get(to).copied().unwrap_or(0);
        Some((n as f64 + self.smoothing) / (total as f64 + self.smoothing * self.states.len() as f64))
    }

    pub fn predict(&self, history: &[String]) -> Result<String, NextLocError> {
        let last = history.last().ok_or(NextLocError::EmptyHistory)?;
        let Some(row) = self.counts.get(last) else {
            return Ok(self.global_mode.clone());
        };
        // smoothing is uniform over targets, so the argmax is on raw counts
        Ok(row
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(t, _)| t.clone())
            .unwrap_or_else(|| self.global_mode.clone()))
    }
}

/// Whether a recommendation message is needed: the predicted and recommended
/// locations differ at `resolution`.
pub fn should_send(
    predicted: &str,
    recommended: &str,
    resolution: Resolution,
    towers: &TowerRegistry,
) -> bool {
    let norm = |t: &'_ str| -> String {
        match resolution {
            Resolution::Tower => t.to_string(),
            Resolution::Merged => towers.merged_group(t).unwrap_or(t).to_string(),
        }
    };
    norm(predicted) != norm(recommended)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Naive,
    Markov,
    Rnn,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Naive => "naive",
            ModelKind::Markov => "markov",
            ModelKind::Rnn => "rnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub models: Vec<ModelKind>,
    pub smoothing: f64,
    pub rnn: RnnParams,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Naive, ModelKind::Markov, ModelKind::Rnn],
            smoothing: DEFAULT_SMOOTHING,
            rnn: RnnParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: ModelKind,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// `(accuracy - naive) / naive`; absent when naive scores zero.
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub resolution: Option<Resolution>,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn accuracy(&self, model: ModelKind) -> Option<f64> {
        self.rows.iter().find(|r| r.model == model).map(|r| r.accuracy)
    }
}

/// Per-user predictions on the leave-last-out split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutPrediction {
    pub user_id: String,
    pub target: String,
    pub predictions: BTreeMap<ModelKind, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: AccuracyTable,
    pub predictions: Vec<HeldOutPrediction>,
    /// Models fitted on the training prefixes.
    pub markov: Option<MarkovModel>,
    pub rnn: Option<RecurrentModel>,
}

/// Trains on every user's sequence minus its last token and scores the
/// prediction of that token. Naive accuracy is always computed as the
/// improvement baseline.
pub fn evaluate(corpus: &[LocationSequence], opts: &EvalOptions) -> Result<Evaluation, NextLocError> {
    let test: Vec<&LocationSequence> = corpus.iter().filter(|s| s.tokens.len() >= 2).collect();
    if test.is_empty() {
        return Err(NextLocError::EmptyTestSet);
    }
    let train: Vec<Vec<String>> = test.iter().map(|s| s.tokens[..s.tokens.len() - 1].to_vec()).collect();
    let mut models = opts.models.clone();
    models.push(ModelKind::Naive);
    models.sort();
    models.dedup();

    let markov = if models.contains(&ModelKind::Markov) {
        Some(fit_markov(&train, opts.smoothing)?)
    } else {
        None
    };
    let rnn = if models.contains(&ModelKind::Rnn) {
        Some(fit_rnn(&train, &opts.rnn, opts.seed)?)
    } else {
        None
    };

    let mut held_out = Vec::with_capacity(test.len());
    let mut correct: BTreeMap<ModelKind, usize> = models.iter().map(|&m| (m, 0)).collect();
    for (seq, history) in test.iter().zip(&train) {
        let target = seq.tokens.last().cloned().unwrap_or_default();
        let mut predictions = BTreeMap::new();
        for &m in &models {
            let p = match m {
                ModelKind::Naive => predict_frequent(history)?,
                ModelKind::Markov => markov.as_ref().map(|mm| mm.predict(history)).transpose()?.unwrap_or_default(),
                ModelKind::Rnn => rnn.as_ref().map(|r| r.predict(history)).transpose()?.unwrap_or_default(),
            };
            if p == target {
                *correct.get_mut(&m).unwrap() += 1;
            }
            predictions.insert(m, p);
        }
        held_out.push(HeldOutPrediction {
            user_id: seq.user_id.clone(),
            target,
            predictions,
        });
    }
    let total = test.len();
    let naive = correct[&ModelKind::Naive] as f64 / total as f64;
    let rows = models
        .iter()
        .map(|&m| {
            let accuracy = correct[&m] as f64 / total as f64;
            AccuracyRow {
                model: m,
                correct: correct[&m],
                total,
                accuracy,
                improvement: (naive > 0.0).then(|| (accuracy - naive) / naive),
            }
        })
        .collect();
    let resolution = test[0].resolution;
    let uniform = test.iter().all(|s| s.resolution == resolution);
    Ok(Evaluation {
        table: AccuracyTable {
            resolution: uniform.then_some(resolution),
            rows,
        },
        predictions: held_out,
        markov,
        rnn,
    })
}
