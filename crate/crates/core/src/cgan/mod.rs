//! Conditional GAN over fixed-length traces: assembly, adversarial training,
//! conditional generation and per-class generation counts.

mod allocate;
mod scaler;

pub use allocate::allocate_class_counts;
pub use scaler::{ScalerKind, TraceScaler};

use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{
    bce_loss, AdamConfig, AdamState, Embedding, LayerSpec, Mode, Network, Trainable,
};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::trace::{LabelScheme, TraceSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CganConfig {
    pub latent_dim: usize,
    pub label_embedding_dim: usize,
    /// Embedding tables start uniform on `[-embedding_init, embedding_init]`.
    pub embedding_init: f64,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub leaky_alpha: f64,
    /// Dropout after each generator hidden block, kept active when generating.
    pub dropout_rate: f64,
    /// Adds BatchNorm to the discriminator's hidden blocks.
    pub d_batch_norm: bool,
    pub scaler: ScalerKind,
    pub g_adam: AdamConfig,
    pub d_adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CganConfig {
    fn default() -> Self {
        Self {
            latent_dim: 100,
            label_embedding_dim: 50,
            embedding_init: 0.05,
            g_hidden: vec![128, 256],
            d_hidden: vec![256, 128],
            leaky_alpha: 0.2,
            dropout_rate: 0.4,
            d_batch_norm: false,
            scaler: ScalerKind::Global,
            g_adam: AdamConfig::with_lr(2e-4),
            d_adam: AdamConfig::with_lr(2e-4),
            epochs: 200,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl CganConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.label_embedding_dim == 0 {
            return Err(Error::Config("latent and embedding sizes must be positive".into()));
        }
        if !(self.embedding_init >= 0.0 && self.embedding_init.is_finite()) {
            return Err(Error::Config("embedding_init must be finite and >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.g_hidden.iter().chain(&self.d_hidden).any(|&w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.leaky_alpha > 0.0) {
            return Err(Error::Config("leaky_alpha must be positive".into()));
        }
        Ok(())
    }

    fn generator_specs(&self, n_samples: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = self.latent_dim + self.label_embedding_dim;
        for &h in &self.g_hidden {
            specs.push(LayerSpec::Dense {
                input: width,
                output: h,
            });
            specs.push(LayerSpec::LeakyRelu {
                alpha: self.leaky_alpha,
            });
            specs.push(LayerSpec::BatchNorm {
                dim: h,
                epsilon: 1e-5,
                momentum: 0.9,
            });
            if self.dropout_rate > 0.0 {
                specs.push(LayerSpec::Dropout {
                    rate: self.dropout_rate,
                });
            }
            width = h;
        }
        specs.push(LayerSpec::Dense {
            input: width,
            output: n_samples,
        });
        specs.push(LayerSpec::Tanh);
        specs
    }

    fn discriminator_specs(&self, n_samples: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = n_samples + self.label_embedding_dim;
        for &h in &self.d_hidden {
            specs.push(LayerSpec::Dense {
                input: width,
                output: h,
            });
            specs.push(LayerSpec::LeakyRelu {
                alpha: self.leaky_alpha,
            });
            if self.d_batch_norm {
                specs.push(LayerSpec::batch_norm(h));
            }
            width = h;
        }
        specs.push(LayerSpec::Dense {
            input: width,
            output: 1,
        });
        specs.push(LayerSpec::Sigmoid);
        specs
    }
}

/// Generator and discriminator with their label embeddings.
#[derive(Debug, Clone)]
pub struct CganPair<F> {
    pub generator: Network<F>,
    pub discriminator: Network<F>,
    pub g_embedding: Embedding<F>,
    pub d_embedding: Embedding<F>,
    pub scaler: Option<TraceScaler>,
    pub scheme: LabelScheme,
    latent_dim: usize,
    n_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub d_loss: Vec<f64>,
    pub g_loss: Vec<f64>,
    /// Mean D output on real traces per epoch.
    pub d_real: Vec<f64>,
    /// Mean D output on generated traces per epoch.
    pub d_fake: Vec<f64>,
}

struct Joint<'a, F> {
    net: &'a mut Network<F>,
    embedding: &'a mut Embedding<F>,
}

impl<F: Scalar> Trainable<F> for Joint<'_, F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [F], &[F])) {
        self.net.visit_params(f);
        self.embedding.visit_params(f);
    }

    fn zero_grad(&mut self) {
        self.net.zero_grad();
        self.embedding.zero_grad();
    }
}

fn gaussian<F: Scalar>(rows: usize, cols: usize, rng: &mut dyn RngCore) -> Array2<F> {
    Array2::from_shape_fn((rows, cols), |_| {
        let z: f64 = StandardNormal.sample(rng);
        F::lit(z)
    })
}

fn hcat<F: Scalar>(a: ArrayView2<'_, F>, b: ArrayView2<'_, F>) -> Array2<F> {
    concatenate(Axis(1), &[a.reborrow(), b.reborrow()]).expect("row counts match")
}

pub fn build_cgan<F: Scalar>(
    cfg: &CganConfig,
    n_samples: usize,
    scheme: LabelScheme,
) -> Result<CganPair<F>> {
    cfg.validate()?;
    if n_samples == 0 {
        return Err(Error::Config("traces must have at least one sample".into()));
    }
    let mut rng = seeded(derive_seed(cfg.seed, "cgan-init", 0));
    let mut generator = Network::new(&cfg.generator_specs(n_samples), &mut rng)?;
    generator.set_dropout_active_in_infer(true);
    let discriminator = Network::new(&cfg.discriminator_specs(n_samples), &mut rng)?;
    let k = scheme.n_classes();
    Ok(CganPair {
        generator,
        discriminator,
        g_embedding: Embedding::new(k, cfg.label_embedding_dim, cfg.embedding_init, &mut rng),
        d_embedding: Embedding::new(k, cfg.label_embedding_dim, cfg.embedding_init, &mut rng),
        scaler: None,
        scheme,
        latent_dim: cfg.latent_dim,
        n_samples,
    })
}

impl<F: Scalar> CganPair<F> {
    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn generator_input(&self, z: &Array2<F>, labels: &[u8]) -> Result<Array2<F>> {
        Ok(hcat(z.view(), self.g_embedding.lookup(labels)?.view()))
    }

    fn discriminator_input(&self, x: ArrayView2<'_, F>, labels: &[u8]) -> Result<Array2<F>> {
        let e = self.d_embedding.lookup(labels)?;
        Ok(hcat(x, e.view()))
    }

    /// Discriminator probabilities for already-scaled traces.
    pub fn discriminate(&self, scaled: ArrayView2<'_, F>, labels: &[u8]) -> Result<Array2<F>> {
        let input = self.discriminator_input(scaled, labels)?;
        self.discriminator.predict(input.view())
    }

    /// Generator output in scaled units (dropout active, running BN stats).
    pub fn generate_scaled(&self, labels: &[u8], rng: &mut dyn RngCore) -> Result<Array2<F>> {
        let z = gaussian(labels.len(), self.latent_dim, rng);
        let input = self.generator_input(&z, labels)?;
        let mut g = self.generator.clone();
        g.set_mode(Mode::Infer);
        g.infer(input.view(), Some(rng))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.generator.save(dir.join("generator.nn"))?;
        self.discriminator.save(dir.join("discriminator.nn"))?;
        let meta = CganMeta {
            scheme: self.scheme,
            latent_dim: self.latent_dim,
            n_samples: self.n_samples,
            scaler: self.scaler.clone(),
            g_embedding: rows_f64(self.g_embedding.table()),
            d_embedding: rows_f64(self.d_embedding.table()),
        };
        std::fs::write(dir.join("cgan.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: CganMeta = serde_json::from_slice(&std::fs::read(dir.join("cgan.json"))?)?;
        let mut generator = Network::load(dir.join("generator.nn"))?;
        generator.set_dropout_active_in_infer(true);
        let discriminator = Network::load(dir.join("discriminator.nn"))?;
        Ok(Self {
            generator,
            discriminator,
            g_embedding: Embedding::from_table(table_from_rows(&meta.g_embedding)?),
            d_embedding: Embedding::from_table(table_from_rows(&meta.d_embedding)?),
            scaler: meta.scaler,
            scheme: meta.scheme,
            latent_dim: meta.latent_dim,
            n_samples: meta.n_samples,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CganMeta {
    scheme: LabelScheme,
    latent_dim: usize,
    n_samples: usize,
    scaler: Option<TraceScaler>,
    g_embedding: Vec<Vec<f64>>,
    d_embedding: Vec<Vec<f64>>,
}

fn rows_f64<F: Scalar>(a: &Array2<F>) -> Vec<Vec<f64>> {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|x| x.as_f64()).collect())
        .collect()
}

fn table_from_rows<F: Scalar>(rows: &[Vec<f64>]) -> Result<Array2<F>> {
    let cols = rows.first().map_or(0, Vec::len);
    let flat: Vec<F> = rows.iter().flatten().map(|&x| F::lit(x)).collect();
    Array2::from_shape_vec((rows.len(), cols), flat).map_err(|e| Error::Malformed(e.to_string()))
}

/// Adversarial training on `ts`. Fits the pair's scaler on `ts` first.
///
/// Each mini-batch takes one discriminator step (real traces against target
/// 1, generated traces against target 0) and one generator step with the
/// non-saturating objective (generated traces against target 1). Noise is
/// standard Gaussian; generated batches reuse the real batch's labels.
pub fn train_cgan<F: Scalar>(
    pair: &mut CganPair<F>,
    ts: &TraceSet<F>,
    cfg: &CganConfig,
) -> Result<LossHistory> {
    if ts.scheme() != pair.scheme {
        return Err(Error::SchemeMismatch {
            expected: pair.scheme.name().into(),
            found: ts.scheme().name().into(),
        });
    }
    if ts.n_samples() != pair.n_samples {
        return Err(Error::Shape(format!(
            "cgan built for {} samples, traces have {}",
            pair.n_samples,
            ts.n_samples()
        )));
    }
    if ts.is_empty() {
        return Err(Error::Config("cannot train on an empty set".into()));
    }
    let scaler = TraceScaler::fit(ts.samples(), cfg.scaler)?;
    let real = scaler.scale(ts.samples())?;
    pair.scaler = Some(scaler);

    let mut rng = seeded(derive_seed(cfg.seed, "cgan-train", 0));
    let mut d_opt = AdamState::<F>::new(cfg.d_adam);
    let mut g_opt = AdamState::<F>::new(cfg.g_adam);
    let ns = pair.n_samples;
    let latent = pair.latent_dim;
    let one = F::one();
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..ts.len()).collect();

    pair.generator.set_mode(Mode::Train);
    pair.discriminator.set_mode(Mode::Train);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut d_sum, mut g_sum, mut r_sum, mut f_sum, mut batches) =
            (0.0, 0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let n = chunk.len();
            let x = real.select(Axis(0), chunk);
            let labels: Vec<u8> = chunk.iter().map(|&i| ts.labels()[i]).collect();
            let ones = Array2::from_elem((n, 1), one);
            let zeros = Array2::zeros((n, 1));

            // discriminator
            let z = gaussian::<F>(n, latent, &mut rng);
            let g_in = pair.generator_input(&z, &labels)?;
            let fake = pair.generator.forward(g_in.view(), &mut rng)?;
            Joint {
                net: &mut pair.discriminator,
                embedding: &mut pair.d_embedding,
            }
            .zero_grad();
            let d_real_in = pair.discriminator_input(x.view(), &labels)?;
            let d_real = pair.discriminator.forward(d_real_in.view(), &mut rng)?;
            let loss_real = bce_loss(d_real.view(), ones.view())?;
            let grad_in = pair.discriminator.backward(loss_real.grad.view())?;
            pair.d_embedding.backward(&labels, grad_in.slice(s![.., ns..]));
            let d_fake_in = pair.discriminator_input(fake.view(), &labels)?;
            let d_fake = pair.discriminator.forward(d_fake_in.view(), &mut rng)?;
            let loss_fake = bce_loss(d_fake.view(), zeros.view())?;
            let grad_in = pair.discriminator.backward(loss_fake.grad.view())?;
            pair.d_embedding.backward(&labels, grad_in.slice(s![.., ns..]));
            let d_loss = (loss_real.loss + loss_fake.loss).as_f64() / 2.0;
            check_finite(d_loss, epoch, "discriminator")?;
            d_opt.step(&mut Joint {
                net: &mut pair.discriminator,
                embedding: &mut pair.d_embedding,
            })?;

            // generator
            Joint {
                net: &mut pair.generator,
                embedding: &mut pair.g_embedding,
            }
            .zero_grad();
            let z = gaussian::<F>(n, latent, &mut rng);
            let g_in = pair.generator_input(&z, &labels)?;
            let fake = pair.generator.forward(g_in.view(), &mut rng)?;
            let d_in = pair.discriminator_input(fake.view(), &labels)?;
            let d_out = pair.discriminator.forward(d_in.view(), &mut rng)?;
            let loss_g = bce_loss(d_out.view(), ones.view())?;
            let grad_d_in = pair.discriminator.backward(loss_g.grad.view())?;
            let grad_fake = grad_d_in.slice(s![.., ..ns]).to_owned();
            let grad_g_in = pair.generator.backward(grad_fake.view())?;
            pair.g_embedding.backward(&labels, grad_g_in.slice(s![.., latent..]));
            check_finite(loss_g.loss.as_f64(), epoch, "generator")?;
            g_opt.step(&mut Joint {
                net: &mut pair.generator,
                embedding: &mut pair.g_embedding,
            })?;

            d_sum += d_loss;
            g_sum += loss_g.loss.as_f64();
            r_sum += d_real.mean().map_or(0.0, |m| m.as_f64());
            f_sum += d_fake.mean().map_or(0.0, |m| m.as_f64());
            batches += 1;
        }
        let b = batches as f64;
        history.d_loss.push(d_sum / b);
        history.g_loss.push(g_sum / b);
        history.d_real.push(r_sum / b);
        history.d_fake.push(f_sum / b);
    }
    pair.generator.set_mode(Mode::Infer);
    pair.discriminator.set_mode(Mode::Infer);
    Ok(history)
}

fn check_finite(loss: f64, epoch: usize, which: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            epoch,
            detail: format!("{which} loss is {loss}; training diverged or collapsed"),
        })
    }
}

/// `count` synthetic traces of class `label`, in raw amplitude units.
pub fn generate<F: Scalar>(pair: &CganPair<F>, label: u8, count: usize, seed: u64) -> Result<TraceSet<F>> {
    let mut counts = vec![0; pair.scheme.n_classes()];
    if label as usize >= counts.len() {
        return Err(Error::LabelOutOfRange {
            label: label as usize,
            n_classes: counts.len(),
        });
    }
    counts[label as usize] = count;
    generate_by_counts(pair, &counts, seed)
}

/// Synthetic traces with exactly `counts[c]` traces of class `c`, grouped by
/// class in increasing order.
pub fn generate_by_counts<F: Scalar>(
    pair: &CganPair<F>,
    counts: &[usize],
    seed: u64,
) -> Result<TraceSet<F>> {
    let scaler = pair.scaler.as_ref().ok_or(Error::UnfittedScaler)?;
    if counts.len() != pair.scheme.n_classes() {
        return Err(Error::Shape(format!(
            "{} class counts for a {}-class scheme",
            counts.len(),
            pair.scheme.n_classes()
        )));
    }
    let labels: Vec<u8> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| std::iter::repeat(c as u8).take(n))
        .collect();
    if labels.is_empty() {
        return Ok(TraceSet::empty(pair.n_samples, pair.scheme));
    }
    let mut rng = seeded(seed);
    let scaled = pair.generate_scaled(&labels, &mut rng)?;
    let raw = scaler.unscale(&scaled)?;
    TraceSet::new(raw, None, labels, pair.scheme, None)
}

/// `total` synthetic traces split across classes by `allocate_class_counts`.
pub fn generate_allocated<F: Scalar>(pair: &CganPair<F>, total: usize, seed: u64) -> Result<TraceSet<F>> {
    let counts = allocate_class_counts(pair.scheme, total);
    generate_by_counts(pair, &counts, seed)
}

/// Concatenates original then generated traces.
pub fn augment<F: Scalar>(original: &TraceSet<F>, generated: &TraceSet<F>) -> Result<TraceSet<F>> {
    original.concat(generated)
}

/// Fraction of held-out real and fresh generated traces the discriminator
/// classifies correctly at threshold 0.5.
pub fn discriminator_accuracy<F: Scalar>(
    pair: &CganPair<F>,
    held_out: &TraceSet<F>,
    seed: u64,
) -> Result<f64> {
    let scaler = pair.scaler.as_ref().ok_or(Error::UnfittedScaler)?;
    let real = scaler.scale(held_out.samples())?;
    let labels = held_out.labels();
    let p_real = pair.discriminate(real.view(), labels)?;
    let fake = pair.generate_scaled(labels, &mut seeded(seed))?;
    let p_fake = pair.discriminate(fake.view(), labels)?;
    let half = F::lit(0.5);
    let correct = p_real.iter().filter(|&&p| p > half).count() + p_fake.iter().filter(|&&p| p <= half).count();
    Ok(correct as f64 / (2 * labels.len()).max(1) as f64)
}
