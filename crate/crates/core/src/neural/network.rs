use ndarray::{Array2, ArrayView2};
use rand::RngCore;

use super::layer::{Cache, Layer, LayerSpec, Phase};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Anything with trainable tensors an optimizer can update.
pub trait Trainable<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [F], &[F]));
    fn zero_grad(&mut self);
}

/// A sequential stack of layers.
#[derive(Debug, Clone)]
pub struct Network<F> {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<F>>,
    mode: Mode,
    dropout_active_in_infer: bool,
    caches: Vec<Cache<F>>,
    input_dim: usize,
    output_dim: usize,
}

impl<F: Scalar> Network<F> {
    /// Builds a network from layer specs. Dense weights are drawn from
    /// N(0, 2/fan_in) when the next activation is ReLU-like and from
    /// N(0, 1/fan_in) otherwise; biases start at zero.
    pub fn new(specs: &[LayerSpec], rng: &mut dyn RngCore) -> Result<Self> {
        let (input_dim, output_dim) = check_chain(specs)?;
        let layers = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let std = match spec {
                    LayerSpec::Dense { input, .. } => {
                        let relu_like = specs[i + 1..]
                            .iter()
                            .find(|s| s.is_activation() || matches!(s, LayerSpec::Dense { .. }))
                            .is_some_and(|s| {
                                matches!(s, LayerSpec::Relu | LayerSpec::LeakyRelu { .. })
                            });
                        let gain = if relu_like { 2.0 } else { 1.0 };
                        (gain / *input as f64).sqrt()
                    }
                    _ => 0.0,
                };
                Layer::new(spec, std, rng)
            })
            .collect();
        Ok(Self {
            specs: specs.to_vec(),
            layers,
            mode: Mode::Train,
            dropout_active_in_infer: false,
            caches: Vec::new(),
            input_dim,
            output_dim,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn dropout_active_in_infer(&self) -> bool {
        self.dropout_active_in_infer
    }

    pub fn set_dropout_active_in_infer(&mut self, active: bool) {
        self.dropout_active_in_infer = active;
    }

    pub fn param_count(&self) -> usize {
        self.parameters().len()
    }

    fn phase(&self) -> Phase {
        match self.mode {
            Mode::Train => Phase {
                batch_stats: true,
                dropout: true,
            },
            Mode::Infer => Phase {
                batch_stats: false,
                dropout: self.dropout_active_in_infer,
            },
        }
    }

    fn check_input(&self, x: &ArrayView2<'_, F>) -> Result<()> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    fn run(&mut self, x: ArrayView2<'_, F>, upto: usize, rng: &mut dyn RngCore) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let phase = self.phase();
        self.caches.clear();
        let mut h = x.to_owned();
        for layer in &mut self.layers[..upto] {
            let (y, cache, stats) = layer.forward(h.view(), phase, Some(&mut *rng));
            if let Some((mean, var)) = stats {
                layer.update_running(&mean, &var);
            }
            self.caches.push(cache);
            h = y;
        }
        Ok(h)
    }

    /// Forward pass in the current mode, caching activations for `backward`.
    pub fn forward(&mut self, x: ArrayView2<'_, F>, rng: &mut dyn RngCore) -> Result<Array2<F>> {
        let n = self.layers.len();
        self.run(x, n, rng)
    }

    /// Like `forward` but stops before a trailing softmax, returning logits.
    pub fn forward_logits(&mut self, x: ArrayView2<'_, F>, rng: &mut dyn RngCore) -> Result<Array2<F>> {
        let n = self.layers.len();
        let upto = if matches!(self.layers.last(), Some(Layer::Softmax)) {
            n - 1
        } else {
            n
        };
        self.run(x, upto, rng)
    }

    /// Inference-semantics pass on an immutable network: running BatchNorm
    /// statistics, dropout only if `dropout_active_in_infer` and `rng` given.
    pub fn infer<'r>(
        &self,
        x: ArrayView2<'_, F>,
        mut rng: Option<&mut (dyn RngCore + 'r)>,
    ) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let phase = Phase {
            batch_stats: false,
            dropout: self.dropout_active_in_infer,
        };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let (y, _, _) = layer.forward(h.view(), phase, rng.as_deref_mut());
            h = y;
        }
        Ok(h)
    }

    /// Deterministic inference (no dropout).
    pub fn predict(&self, x: ArrayView2<'_, F>) -> Result<Array2<F>> {
        self.infer(x, None)
    }

    /// Backpropagates dL/d(output of the last forward) and returns dL/dx.
    /// Parameter gradients accumulate until `zero_grad`.
    pub fn backward(&mut self, grad: ArrayView2<'_, F>) -> Result<Array2<F>> {
        if self.caches.is_empty() || self.mode != Mode::Train {
            return Err(Error::NoForwardCache);
        }
        let caches = std::mem::take(&mut self.caches);
        let mut g = grad.to_owned();
        for (layer, cache) in self.layers[..caches.len()].iter_mut().zip(caches).rev() {
            g = layer.backward(cache, g)?;
        }
        Ok(g)
    }

    /// All trainable parameters, flattened in a fixed order.
    pub fn parameters(&self) -> Vec<F> {
        let mut out = Vec::new();
        for layer in &self.layers {
            layer.visit_params_ref(&mut |p| out.extend_from_slice(p));
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[F]) -> Result<()> {
        let mut offset = 0;
        let mut short = false;
        self.visit_params(&mut |p, _| {
            if offset + p.len() > values.len() {
                short = true;
                return;
            }
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
        if short || offset != values.len() {
            return Err(Error::Shape(format!(
                "parameter vector of length {} does not match the network",
                values.len()
            )));
        }
        Ok(())
    }

    /// Accumulated gradients, in `parameters` order.
    pub fn gradients(&mut self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, g| out.extend_from_slice(g));
        out
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }
}

impl<F: Scalar> Trainable<F> for Network<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [F], &[F])) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grad();
        }
    }
}

/// Checks that dimensions chain and returns `(input_dim, output_dim)`.
fn check_chain(specs: &[LayerSpec]) -> Result<(usize, usize)> {
    let mut input = None;
    let mut dim: Option<usize> = None;
    let mut expect = |d: usize, what: &str, dim: &mut Option<usize>| -> Result<()> {
        match *dim {
            Some(cur) if cur != d => Err(Error::Shape(format!(
                "{what} expects width {d} but receives {cur}"
            ))),
            Some(_) => Ok(()),
            None => {
                input = Some(d);
                *dim = Some(d);
                Ok(())
            }
        }
    };
    for spec in specs {
        match *spec {
            LayerSpec::Dense { input: i, output } => {
                if i == 0 || output == 0 {
                    return Err(Error::Config("dense layer widths must be positive".into()));
                }
                expect(i, "dense layer", &mut dim)?;
                dim = Some(output);
            }
            LayerSpec::BatchNorm {
                dim: d,
                epsilon,
                momentum,
            } => {
                if d == 0 || epsilon < 0.0 || !(0.0..=1.0).contains(&momentum) {
                    return Err(Error::Config("invalid batch-norm parameters".into()));
                }
                expect(d, "batch norm", &mut dim)?;
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
            LayerSpec::LeakyRelu { alpha } => {
                if !(alpha > 0.0) {
                    return Err(Error::Config("leaky relu alpha must be positive".into()));
                }
            }
            _ => {}
        }
    }
    match (input, dim) {
        (Some(i), Some(o)) => Ok((i, o)),
        _ => Err(Error::Config(
            "network needs at least one dense or batch-norm layer".into(),
        )),
    }
}
