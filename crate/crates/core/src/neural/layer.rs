use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    LeakyRelu { alpha: f64 },
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    BatchNorm { dim: usize, epsilon: f64, momentum: f64 },
    Dropout { rate: f64 },
}

impl LayerSpec {
    pub fn batch_norm(dim: usize) -> Self {
        LayerSpec::BatchNorm {
            dim,
            epsilon: 1e-5,
            momentum: 0.9,
        }
    }

    pub(crate) fn is_activation(&self) -> bool {
        matches!(
            self,
            LayerSpec::LeakyRelu { .. }
                | LayerSpec::Relu
                | LayerSpec::Tanh
                | LayerSpec::Sigmoid
                | LayerSpec::Softmax
        )
    }
}

/// How a forward pass treats BatchNorm and Dropout.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Phase {
    pub batch_stats: bool,
    pub dropout: bool,
}

#[derive(Debug, Clone)]
pub(crate) enum Layer<F> {
    Dense {
        weight: Array2<F>,
        bias: Array1<F>,
        grad_weight: Array2<F>,
        grad_bias: Array1<F>,
    },
    LeakyRelu(F),
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    BatchNorm {
        gamma: Array1<F>,
        beta: Array1<F>,
        grad_gamma: Array1<F>,
        grad_beta: Array1<F>,
        running_mean: Array1<F>,
        running_var: Array1<F>,
        epsilon: F,
        momentum: F,
    },
    Dropout(F),
}

#[derive(Debug, Clone)]
pub(crate) enum Cache<F> {
    Input(Array2<F>),
    Output(Array2<F>),
    Norm {
        xhat: Array2<F>,
        inv_std: Array1<F>,
        batch_stats: bool,
    },
    Mask(Option<Array2<F>>),
}

impl<F: Scalar> Layer<F> {
    /// `init_std` is only used by dense layers.
    pub fn new(spec: &LayerSpec, init_std: f64, rng: &mut dyn RngCore) -> Self {
        match *spec {
            LayerSpec::Dense { input, output } => {
                let weight = Array2::from_shape_fn((input, output), |_| {
                    let z: f64 = StandardNormal.sample(rng);
                    F::lit(z * init_std)
                });
                Layer::Dense {
                    weight,
                    bias: Array1::zeros(output),
                    grad_weight: Array2::zeros((input, output)),
                    grad_bias: Array1::zeros(output),
                }
            }
            LayerSpec::LeakyRelu { alpha } => Layer::LeakyRelu(F::lit(alpha)),
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Tanh => Layer::Tanh,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Softmax => Layer::Softmax,
            LayerSpec::BatchNorm {
                dim,
                epsilon,
                momentum,
            } => Layer::BatchNorm {
                gamma: Array1::ones(dim),
                beta: Array1::zeros(dim),
                grad_gamma: Array1::zeros(dim),
                grad_beta: Array1::zeros(dim),
                running_mean: Array1::zeros(dim),
                running_var: Array1::ones(dim),
                epsilon: F::lit(epsilon),
                momentum: F::lit(momentum),
            },
            LayerSpec::Dropout { rate } => Layer::Dropout(F::lit(rate)),
        }
    }

    /// Runs the layer. Batch-statistics BatchNorm also returns the batch
    /// mean and variance so the caller can update running statistics.
    pub fn forward<'r>(
        &self,
        x: ArrayView2<'_, F>,
        phase: Phase,
        rng: Option<&mut (dyn RngCore + 'r)>,
    ) -> (Array2<F>, Cache<F>, Option<(Array1<F>, Array1<F>)>) {
        match self {
            Layer::Dense { weight, bias, .. } => {
                let y = x.dot(weight) + bias;
                (y, Cache::Input(x.to_owned()), None)
            }
            Layer::LeakyRelu(alpha) => {
                let a = *alpha;
                let y = x.mapv(|v| if v > F::zero() { v } else { a * v });
                (y, Cache::Input(x.to_owned()), None)
            }
            Layer::Relu => (x.mapv(|v| v.max(F::zero())), Cache::Input(x.to_owned()), None),
            Layer::Tanh => {
                let y = x.mapv(F::tanh);
                (y.clone(), Cache::Output(y), None)
            }
            Layer::Sigmoid => {
                let y = x.mapv(sigmoid);
                (y.clone(), Cache::Output(y), None)
            }
            Layer::Softmax => {
                let y = softmax_rows(x);
                (y.clone(), Cache::Output(y), None)
            }
            Layer::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                epsilon,
                ..
            } => {
                let stats = phase.batch_stats.then(|| {
                    let n = F::lit(x.nrows() as f64);
                    let mean = x.sum_axis(Axis(0)) / n;
                    let var = (&x - &mean).mapv(|d| d * d).sum_axis(Axis(0)) / n;
                    (mean, var)
                });
                let (mean, var) = match &stats {
                    Some((m, v)) => (m, v),
                    None => (running_mean, running_var),
                };
                let eps = *epsilon;
                let inv_std = var.mapv(|v| F::one() / (v + eps).sqrt());
                let xhat = (&x - mean) * &inv_std;
                let y = &xhat * gamma + beta;
                (
                    y,
                    Cache::Norm {
                        xhat,
                        inv_std,
                        batch_stats: phase.batch_stats,
                    },
                    stats,
                )
            }
            Layer::Dropout(rate) => {
                let r = *rate;
                match (phase.dropout, rng) {
                    (true, Some(rng)) if r > F::zero() => {
                        let keep = F::one() - r;
                        let scale = F::one() / keep;
                        let rf = r.as_f64();
                        let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
                            if rng.gen::<f64>() < rf {
                                F::zero()
                            } else {
                                scale
                            }
                        });
                        (&x * &mask, Cache::Mask(Some(mask)), None)
                    }
                    _ => (x.to_owned(), Cache::Mask(None), None),
                }
            }
        }
    }

    /// Propagates `grad` (dL/dy) to dL/dx, accumulating parameter gradients.
    pub fn backward(&mut self, cache: Cache<F>, grad: Array2<F>) -> Result<Array2<F>> {
        Ok(match (self, cache) {
            (
                Layer::Dense {
                    weight,
                    grad_weight,
                    grad_bias,
                    ..
                },
                Cache::Input(x),
            ) => {
                *grad_weight += &x.t().dot(&grad);
                *grad_bias += &grad.sum_axis(Axis(0));
                grad.dot(&weight.t())
            }
            (Layer::LeakyRelu(alpha), Cache::Input(x)) => {
                let a = *alpha;
                let mut g = grad;
                Zip::from(&mut g)
                    .and(&x)
                    .for_each(|g, &v| if v <= F::zero() { *g *= a });
                g
            }
            (Layer::Relu, Cache::Input(x)) => {
                let mut g = grad;
                Zip::from(&mut g)
                    .and(&x)
                    .for_each(|g, &v| if v <= F::zero() { *g = F::zero() });
                g
            }
            (Layer::Tanh, Cache::Output(y)) => {
                let mut g = grad;
                Zip::from(&mut g)
                    .and(&y)
                    .for_each(|g, &y| *g *= F::one() - y * y);
                g
            }
            (Layer::Sigmoid, Cache::Output(y)) => {
                let mut g = grad;
                Zip::from(&mut g)
                    .and(&y)
                    .for_each(|g, &y| *g *= y * (F::one() - y));
                g
            }
            (Layer::Softmax, Cache::Output(y)) => {
                // dx = y ⊙ (g − Σ g⊙y)
                let dot = (&grad * &y).sum_axis(Axis(1)).insert_axis(Axis(1));
                (&grad - &dot) * &y
            }
            (
                Layer::BatchNorm {
                    gamma,
                    grad_gamma,
                    grad_beta,
                    ..
                },
                Cache::Norm {
                    xhat,
                    inv_std,
                    batch_stats,
                },
            ) => {
                *grad_gamma += &(&grad * &xhat).sum_axis(Axis(0));
                *grad_beta += &grad.sum_axis(Axis(0));
                let dxhat = &grad * &*gamma;
                if batch_stats {
                    let n = F::lit(grad.nrows() as f64);
                    let sum_d = dxhat.sum_axis(Axis(0));
                    let sum_dx = (&dxhat * &xhat).sum_axis(Axis(0));
                    ((&dxhat * n - &sum_d) - &xhat * &sum_dx) * &(inv_std / n)
                } else {
                    dxhat * &inv_std
                }
            }
            (Layer::Dropout(_), Cache::Mask(mask)) => match mask {
                Some(m) => grad * &m,
                None => grad,
            },
            _ => return Err(Error::NoForwardCache),
        })
    }

    /// Folds a batch mean/variance into BatchNorm running statistics.
    pub fn update_running(&mut self, mean: &Array1<F>, var: &Array1<F>) {
        if let Layer::BatchNorm {
            running_mean,
            running_var,
            momentum,
            ..
        } = self
        {
            let m = *momentum;
            Zip::from(running_mean)
                .and(mean)
                .for_each(|r, &b| *r = m * *r + (F::one() - m) * b);
            Zip::from(running_var)
                .and(var)
                .for_each(|r, &b| *r = m * *r + (F::one() - m) * b);
        }
    }

    pub fn visit_params_ref(&self, f: &mut dyn FnMut(&[F])) {
        match self {
            Layer::Dense { weight, bias, .. } => {
                f(weight.as_slice().expect("standard layout"));
                f(bias.as_slice().expect("contiguous"));
            }
            Layer::BatchNorm { gamma, beta, .. } => {
                f(gamma.as_slice().expect("contiguous"));
                f(beta.as_slice().expect("contiguous"));
            }
            _ => {}
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Layer::Dense {
                grad_weight,
                grad_bias,
                ..
            } => {
                grad_weight.fill(F::zero());
                grad_bias.fill(F::zero());
            }
            Layer::BatchNorm {
                grad_gamma,
                grad_beta,
                ..
            } => {
                grad_gamma.fill(F::zero());
                grad_beta.fill(F::zero());
            }
            _ => {}
        }
    }

    /// Trainable tensors paired with their gradients, in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut [F], &[F])) {
        match self {
            Layer::Dense {
                weight,
                bias,
                grad_weight,
                grad_bias,
            } => {
                f(as_slice_mut(weight), grad_weight.as_slice().expect("standard layout"));
                f(bias.as_slice_mut().expect("contiguous"), grad_bias.as_slice().expect("contiguous"));
            }
            Layer::BatchNorm {
                gamma,
                beta,
                grad_gamma,
                grad_beta,
                ..
            } => {
                f(gamma.as_slice_mut().expect("contiguous"), grad_gamma.as_slice().expect("contiguous"));
                f(beta.as_slice_mut().expect("contiguous"), grad_beta.as_slice().expect("contiguous"));
            }
            _ => {}
        }
    }

    /// Non-trainable persistent state (BatchNorm running statistics).
    pub fn buffers_mut(&mut self) -> Vec<&mut Array1<F>> {
        match self {
            Layer::BatchNorm {
                running_mean,
                running_var,
                ..
            } => vec![running_mean, running_var],
            _ => Vec::new(),
        }
    }
}

fn as_slice_mut<F>(a: &mut Array2<F>) -> &mut [F] {
    a.as_slice_mut().expect("standard layout")
}

pub(crate) fn sigmoid<F: Scalar>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}

pub(crate) fn softmax_rows<F: Scalar>(x: ArrayView2<'_, F>) -> Array2<F> {
    let mut y = x.to_owned();
    for mut row in y.rows_mut() {
        let m = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}
