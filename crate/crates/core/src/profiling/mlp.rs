use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{build_mlp, softmax_ce_loss, AdamConfig, AdamState, MlpArch, Mode, Network, Trainable};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::trace::{LabelScheme, TraceSet};

/// Per-column standardisation fitted on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<F: Scalar>(x: ArrayView2<'_, F>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.axis_iter(Axis(1)) {
            let m = col.iter().map(|v| v.as_f64()).sum::<f64>() / n;
            let var = col.iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / n;
            mean.push(m);
            std.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn apply<F: Scalar>(&self, x: ArrayView2<'_, F>) -> Array2<F> {
        let shift: Array1<F> = self.mean.iter().map(|&m| F::lit(m)).collect();
        let scale: Array1<F> = self.std.iter().map(|&s| F::lit(1.0 / s)).collect();
        (&x - &shift) * &scale
    }
}

/// Hyperparameter grid for MLP profiling. Every combination of learning
/// rate and batch size is trained up to the largest checkpoint epoch and
/// scored on the validation set at each checkpoint; the best-scoring state
/// is kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpHyper {
    pub arch: MlpArch,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epoch_checkpoints: Vec<usize>,
    /// Attack-trace budget of the validation rank metric.
    pub val_budget: usize,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            arch: MlpArch::SimMlp,
            learning_rates: vec![1e-3],
            batch_sizes: vec![50],
            epoch_checkpoints: vec![50],
            val_budget: 500,
            seed: 0,
        }
    }
}

impl MlpHyper {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.batch_sizes.is_empty() || self.epoch_checkpoints.is_empty() {
            return Err(Error::Config("MLP hyperparameter grid has an empty axis".into()));
        }
        if self.learning_rates.iter().any(|&lr| !(lr > 0.0)) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_sizes.contains(&0) || self.epoch_checkpoints.contains(&0) || self.val_budget == 0 {
            return Err(Error::Config("batch sizes, epochs and val_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.learning_rates.len() * self.batch_sizes.len() * self.epoch_checkpoints.len()
    }
}

/// The grid point that won validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Validation mean rank, `None` when there was nothing to choose between.
    pub val_mean_rank: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpModel<F> {
    pub network: Network<F>,
    pub standardizer: Standardizer,
    pub scheme: LabelScheme,
    pub window: Range<usize>,
    pub selection: Selection,
}

impl<F: Scalar> MlpModel<F> {
    pub fn probabilities(&self, windowed: ArrayView2<'_, F>) -> Result<Array2<F>> {
        let x = self.standardizer.apply(windowed);
        self.network.predict(x.view())
    }
}

fn epoch_pass<F: Scalar>(
    net: &mut Network<F>,
    opt: &mut AdamState<F>,
    x: &Array2<F>,
    labels: &[usize],
    batch: usize,
    order: &mut [usize],
    rng: &mut crate::rng::SeededRng,
    epoch: usize,
) -> Result<()> {
    order.shuffle(rng);
    for chunk in order.chunks(batch) {
        let xb = x.select(Axis(0), chunk);
        let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        net.zero_grad();
        let logits = net.forward_logits(xb.view(), rng)?;
        let loss = softmax_ce_loss(logits.view(), &yb)?;
        if !loss.loss.as_f64().is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: "classifier cross-entropy".into(),
            });
        }
        net.backward(loss.grad.view())?;
        opt.step(net)?;
    }
    Ok(())
}

/// Trains the MLP grid on `train` and keeps the state with the lowest
/// validation score from `score` (called with the candidate model).
pub(crate) fn train_mlp<F: Scalar>(
    train: &TraceSet<F>,
    hyper: &MlpHyper,
    window: Range<usize>,
    mut score: Option<&mut dyn FnMut(&MlpModel<F>) -> Result<f64>>,
) -> Result<MlpModel<F>> {
    hyper.validate()?;
    if score.is_none() && hyper.grid_size() > 1 {
        return Err(Error::Config("a hyperparameter grid needs a validation set".into()));
    }
    let scheme = train.scheme();
    let x_raw = train.samples().slice(s![.., window.clone()]);
    let standardizer = Standardizer::fit(x_raw);
    let x = standardizer.apply(x_raw);
    let labels: Vec<usize> = train.labels().iter().map(|&l| l as usize).collect();
    let mut checkpoints = hyper.epoch_checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let max_epoch = *checkpoints.last().expect("validated non-empty");

    let mut best: Option<(f64, MlpModel<F>)> = None;
    for &lr in &hyper.learning_rates {
        for &batch in &hyper.batch_sizes {
            // every grid point starts from the same weights
            let mut net = build_mlp::<F>(hyper.arch, window.len(), scheme.n_classes(), &mut seeded(derive_seed(hyper.seed, "mlp-init", 0)))?;
            net.set_mode(Mode::Train);
            let mut opt = AdamState::new(AdamConfig::with_lr(lr));
            let mut rng = seeded(derive_seed(hyper.seed, "mlp-batches", 0));
            let mut order: Vec<usize> = (0..train.len()).collect();
            for epoch in 1..=max_epoch {
                epoch_pass(&mut net, &mut opt, &x, &labels, batch, &mut order, &mut rng, epoch)?;
                if !checkpoints.contains(&epoch) {
                    continue;
                }
                let mut snapshot = net.clone();
                snapshot.set_mode(Mode::Infer);
                let mut candidate = MlpModel {
                    network: snapshot,
                    standardizer: standardizer.clone(),
                    scheme,
                    window: window.clone(),
                    selection: Selection {
                        learning_rate: lr,
                        batch_size: batch,
                        epochs: epoch,
                        val_mean_rank: None,
                    },
                };
                let metric = match score.as_deref_mut() {
                    Some(f) => {
                        let m = f(&candidate)?;
                        candidate.selection.val_mean_rank = Some(m);
                        m
                    }
                    None => 0.0,
                };
                if best.as_ref().map_or(true, |(b, _)| metric < *b) {
                    best = Some((metric, candidate));
                }
            }
        }
    }
    Ok(best.expect("grid is non-empty").1)
}
