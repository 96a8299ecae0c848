use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{intermediate_value, LabelScheme};

/// Probabilities below this are raised to it before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-40;

/// Log-likelihood score for each of the 256 key guesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyScoreBoard {
    pub scores: Vec<f64>,
}

impl KeyScoreBoard {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.len() != 256 {
            return Err(Error::Shape(format!("expected 256 key scores, got {}", scores.len())));
        }
        Ok(Self { scores })
    }

    /// Keys from best to worst; equal scores keep the lower key first.
    pub fn ranking(&self) -> Vec<u8> {
        let mut keys: Vec<u8> = (0..=255).collect();
        keys.sort_by(|&a, &b| {
            self.scores[b as usize]
                .total_cmp(&self.scores[a as usize])
                .then(a.cmp(&b))
        });
        keys
    }

    pub fn best(&self) -> u8 {
        self.ranking()[0]
    }
}

/// Position of `true_key` in the board's ranking (0 = best).
pub fn key_rank(board: &KeyScoreBoard, true_key: u8) -> usize {
    rank_in(&board.scores, true_key)
}

fn rank_in(scores: &[f64], true_key: u8) -> usize {
    let t = scores[true_key as usize];
    scores
        .iter()
        .enumerate()
        .filter(|&(k, &s)| s > t || (s == t && k < true_key as usize))
        .count()
}

/// Per-trace log-probability of each key guess, shape (n_traces, 256).
pub fn key_log_likelihoods<F: Scalar>(
    probs: ArrayView2<'_, F>,
    plaintexts: &[u8],
    scheme: LabelScheme,
) -> Result<Array2<f64>> {
    if probs.nrows() != plaintexts.len() {
        return Err(Error::Shape(format!(
            "{} probability rows for {} plaintexts",
            probs.nrows(),
            plaintexts.len()
        )));
    }
    if probs.ncols() != scheme.n_classes() {
        return Err(Error::SchemeMismatch {
            expected: format!("{} classes ({scheme})", scheme.n_classes()),
            found: format!("{} classes", probs.ncols()),
        });
    }
    let mut out = Array2::zeros((plaintexts.len(), 256));
    for (i, (row, &p)) in probs.rows().into_iter().zip(plaintexts).enumerate() {
        // one log per class, then a lookup per key
        let logs: Vec<f64> = (0..=255u8)
            .map(|v| scheme.value_probability(row, v).as_f64().max(PROBABILITY_FLOOR).ln())
            .collect();
        for k in 0..256 {
            out[[i, k]] = logs[intermediate_value(p, k as u8) as usize];
        }
    }
    Ok(out)
}

/// Sums the rows of a key log-likelihood matrix.
pub fn board_from_log_likelihoods(loglik: ArrayView2<'_, f64>) -> KeyScoreBoard {
    let mut scores = vec![0.0; 256];
    for row in loglik.rows() {
        for (s, &l) in scores.iter_mut().zip(row) {
            *s += l;
        }
    }
    KeyScoreBoard { scores }
}

/// Rank of `true_key` after each of the first `max_traces` traces of `order`.
pub fn rank_curve(loglik: ArrayView2<'_, f64>, order: &[usize], true_key: u8, max_traces: usize) -> Vec<usize> {
    let mut scores = vec![0.0; 256];
    order
        .iter()
        .take(max_traces)
        .map(|&i| {
            for (s, &l) in scores.iter_mut().zip(loglik.row(i)) {
                *s += l;
            }
            rank_in(&scores, true_key)
        })
        .collect()
}
