//! Profiling classifiers, maximum-likelihood key scoring and guessing
//! entropy.

mod augment;
mod ge;
mod mlp;
mod plan;
mod scoring;
mod template;

pub use augment::{augment_noise, augment_repeat};
pub use ge::{attack_rank_curve, convergence_point, guessing_entropy, GeReport};
pub use mlp::{MlpHyper, MlpModel, Selection, Standardizer};
pub use plan::{Split, SplitSizes};
pub use scoring::{
    board_from_log_likelihoods, key_log_likelihoods, key_rank, rank_curve, KeyScoreBoard,
    PROBABILITY_FLOOR,
};
pub use template::{cholesky, GaussianTemplate};

use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{LabelScheme, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Mlp,
    GaussianTemplate,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub kind: ClassifierKind,
    /// Sample window fed to the classifier; the whole trace when absent.
    pub window: Option<Range<usize>>,
    pub mlp: MlpHyper,
}

#[derive(Debug, Clone)]
pub enum ProfilingModel<F> {
    Mlp(MlpModel<F>),
    GaussianTemplate(GaussianTemplate),
}

impl<F: Scalar> ProfilingModel<F> {
    pub fn scheme(&self) -> LabelScheme {
        match self {
            ProfilingModel::Mlp(m) => m.scheme,
            ProfilingModel::GaussianTemplate(t) => t.scheme,
        }
    }

    pub fn window(&self) -> Range<usize> {
        match self {
            ProfilingModel::Mlp(m) => m.window.clone(),
            ProfilingModel::GaussianTemplate(t) => t.window.clone(),
        }
    }

    /// Class probabilities for full traces, one row per trace.
    pub fn class_probabilities(&self, samples: ArrayView2<'_, F>) -> Result<Array2<F>> {
        let w = self.window();
        if w.end > samples.ncols() {
            return Err(Error::Shape(format!(
                "model window {w:?} exceeds traces of {} samples",
                samples.ncols()
            )));
        }
        let x = samples.slice(s![.., w]);
        match self {
            ProfilingModel::Mlp(m) => m.probabilities(x),
            ProfilingModel::GaussianTemplate(t) => t.probabilities(x),
        }
    }

    pub fn trace_probabilities(&self, trace: &[F]) -> Result<Array1<F>> {
        let row = ArrayView2::from_shape((1, trace.len()), trace).expect("one row");
        Ok(self.class_probabilities(row)?.row(0).to_owned())
    }
}

/// Sum of per-trace log-probabilities of each key guess over `attack`.
pub fn score_keys<F: Scalar>(model: &ProfilingModel<F>, attack: &TraceSet<F>) -> Result<KeyScoreBoard> {
    if model.scheme() != attack.scheme() {
        return Err(Error::SchemeMismatch {
            expected: model.scheme().name().into(),
            found: attack.scheme().name().into(),
        });
    }
    let pts = attack.plaintexts().ok_or(Error::MissingPlaintexts)?;
    let probs = model.class_probabilities(attack.samples().view())?;
    let ll = key_log_likelihoods(probs.view(), pts, model.scheme())?;
    Ok(board_from_log_likelihoods(ll.view()))
}

/// Mean rank of the true key over attack sizes 1..=`budget`, averaged over
/// consecutive `budget`-sized chunks of `val` (a shorter set is one chunk).
pub fn validation_mean_rank<F: Scalar>(model: &ProfilingModel<F>, val: &TraceSet<F>, budget: usize) -> Result<f64> {
    let key = val.fixed_key().ok_or(Error::MissingPlaintexts)?;
    let pts = val.plaintexts().ok_or(Error::MissingPlaintexts)?;
    if val.is_empty() {
        return Err(Error::Config("empty validation set".into()));
    }
    let probs = model.class_probabilities(val.samples().view())?;
    let ll = key_log_likelihoods(probs.view(), pts, model.scheme())?;
    let budget = budget.min(val.len());
    let chunks = val.len() / budget;
    let mut total = 0.0;
    for c in 0..chunks {
        let order: Vec<usize> = (c * budget..(c + 1) * budget).collect();
        let curve = rank_curve(ll.view(), &order, key, budget);
        total += curve.iter().sum::<usize>() as f64 / budget as f64;
    }
    Ok(total / chunks as f64)
}

/// Fits a classifier on `train`. MLP hyperparameters are chosen by
/// validation mean rank on `val` when the grid has more than one point.
pub fn train_model<F: Scalar>(
    train: &TraceSet<F>,
    config: &ClassifierConfig,
    val: Option<&TraceSet<F>>,
) -> Result<ProfilingModel<F>> {
    if train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if let Some(v) = val {
        if v.scheme() != train.scheme() {
            return Err(Error::SchemeMismatch {
                expected: train.scheme().name().into(),
                found: v.scheme().name().into(),
            });
        }
    }
    if let Some(class) = train.class_histogram().iter().position(|&c| c == 0) {
        return Err(Error::MissingClass { class });
    }
    let window = config.window.clone().unwrap_or(0..train.n_samples());
    if window.is_empty() || window.end > train.n_samples() {
        return Err(Error::Config(format!(
            "window {window:?} outside traces of {} samples",
            train.n_samples()
        )));
    }
    match config.kind {
        ClassifierKind::GaussianTemplate => Ok(ProfilingModel::GaussianTemplate(GaussianTemplate::fit(train, window)?)),
        ClassifierKind::Mlp => {
            let budget = config.mlp.val_budget;
            let mut scorer = |m: &MlpModel<F>| {
                validation_mean_rank(&ProfilingModel::Mlp(m.clone()), val.expect("checked"), budget)
            };
            let score: Option<&mut dyn FnMut(&MlpModel<F>) -> Result<f64>> = match val {
                Some(_) => Some(&mut scorer),
                None => None,
            };
            Ok(ProfilingModel::Mlp(mlp::train_mlp(train, &config.mlp, window, score)?))
        }
    }
}
