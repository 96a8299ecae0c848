use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::scoring::{key_log_likelihoods, rank_curve};
use super::ProfilingModel;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::trace::TraceSet;

/// Mean rank of the true key against the number of attack traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeReport {
    /// Entry `t - 1` is the mean rank after `t` traces.
    pub mean_rank_curve: Vec<f64>,
    /// First trace count from which the mean rank stays at 0 for the rest of
    /// the curve; `None` if it never does.
    pub convergence_point: Option<usize>,
    pub n_repeats: usize,
    pub seeds: Vec<u64>,
    /// Each repeat's rank curve.
    pub rank_curves: Vec<Vec<usize>>,
}

pub fn convergence_point(curve: &[f64]) -> Option<usize> {
    let tail = curve.iter().rev().take_while(|&&r| r == 0.0).count();
    (tail > 0).then(|| curve.len() - tail + 1)
}

impl GeReport {
    pub fn from_curves(curves: Vec<Vec<usize>>, seeds: Vec<u64>) -> Result<Self> {
        let len = curves.first().map_or(0, Vec::len);
        if curves.is_empty() || curves.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("rank curves must be non-empty and equally long".into()));
        }
        let n = curves.len() as f64;
        let mean: Vec<f64> = (0..len)
            .map(|t| curves.iter().map(|c| c[t] as f64).sum::<f64>() / n)
            .collect();
        Ok(Self {
            convergence_point: convergence_point(&mean),
            mean_rank_curve: mean,
            n_repeats: curves.len(),
            seeds,
            rank_curves: curves,
        })
    }

    /// Convergence point with non-convergence counted as `budget + 1`.
    pub fn convergence_or_budget(&self) -> usize {
        self.convergence_point.unwrap_or(self.mean_rank_curve.len() + 1)
    }
}

/// One attack: ranks after 1..=`max_traces` traces of `attack`, consumed in
/// an order shuffled by `order_seed`.
pub fn attack_rank_curve<F: Scalar>(
    model: &ProfilingModel<F>,
    attack: &TraceSet<F>,
    max_traces: usize,
    order_seed: u64,
) -> Result<Vec<usize>> {
    let key = attack.fixed_key().ok_or(Error::MissingPlaintexts)?;
    let pts = attack.plaintexts().ok_or(Error::MissingPlaintexts)?;
    if attack.len() < max_traces {
        return Err(Error::Config(format!(
            "attack set of {} traces is smaller than the budget {max_traces}",
            attack.len()
        )));
    }
    if model.scheme() != attack.scheme() {
        return Err(Error::SchemeMismatch {
            expected: model.scheme().name().into(),
            found: attack.scheme().name().into(),
        });
    }
    let probs = model.class_probabilities(attack.samples().view())?;
    let ll = key_log_likelihoods(probs.view(), pts, model.scheme())?;
    let mut order: Vec<usize> = (0..attack.len()).collect();
    order.shuffle(&mut seeded(order_seed));
    Ok(rank_curve(ll.view(), &order, key, max_traces))
}

/// Runs `n_repeats` independent attacks. `repeat` receives the repeat index
/// and its seed and returns the trained model with its attack set; errors
/// come back tagged with the repeat index.
pub fn guessing_entropy<F: Scalar>(
    mut repeat: impl FnMut(usize, u64) -> Result<(ProfilingModel<F>, TraceSet<F>)>,
    max_attack_traces: usize,
    n_repeats: usize,
    seed: u64,
) -> Result<GeReport> {
    if n_repeats == 0 || max_attack_traces == 0 {
        return Err(Error::Config("GE needs at least one repeat and one attack trace".into()));
    }
    let mut curves = Vec::with_capacity(n_repeats);
    let mut seeds = Vec::with_capacity(n_repeats);
    for r in 0..n_repeats {
        let s = derive_seed(seed, "ge-repeat", r as u64);
        let curve = repeat(r, s)
            .and_then(|(model, attack)| {
                attack_rank_curve(&model, &attack, max_attack_traces, derive_seed(s, "attack-order", 0))
            })
            .map_err(|e| e.at_stage("guessing entropy", Some(r)))?;
        curves.push(curve);
        seeds.push(s);
    }
    GeReport::from_curves(curves, seeds)
}
