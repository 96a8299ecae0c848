use ndarray::{Array2, Axis};
use rand::RngCore;
use rand_distr::{Distribution, Uniform};

use super::network::Trainable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Learned lookup table mapping a class index to a dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<F> {
    table: Array2<F>,
    grad: Array2<F>,
}

impl<F: Scalar> Embedding<F> {
    /// Table entries drawn uniformly from `[-scale, scale]`.
    pub fn new(n_classes: usize, dim: usize, scale: f64, rng: &mut dyn RngCore) -> Self {
        let u = Uniform::new_inclusive(-scale.abs(), scale.abs());
        let table = Array2::from_shape_fn((n_classes, dim), |_| F::lit(u.sample(rng)));
        Self {
            grad: Array2::zeros(table.raw_dim()),
            table,
        }
    }

    pub fn from_table(table: Array2<F>) -> Self {
        Self {
            grad: Array2::zeros(table.raw_dim()),
            table: table.as_standard_layout().into_owned(),
        }
    }

    pub fn table(&self) -> &Array2<F> {
        &self.table
    }

    pub fn n_classes(&self) -> usize {
        self.table.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.ncols()
    }

    pub fn lookup(&self, labels: &[u8]) -> Result<Array2<F>> {
        let idx = labels
            .iter()
            .map(|&l| {
                let l = l as usize;
                if l < self.n_classes() {
                    Ok(l)
                } else {
                    Err(Error::LabelOutOfRange {
                        label: l,
                        n_classes: self.n_classes(),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.table.select(Axis(0), &idx))
    }

    /// Accumulates dL/d(looked-up rows) into the table gradient.
    pub fn backward(&mut self, labels: &[u8], grad: ndarray::ArrayView2<'_, F>) {
        for (&l, g) in labels.iter().zip(grad.rows()) {
            let mut row = self.grad.row_mut(l as usize);
            row += &g;
        }
    }
}

impl<F: Scalar> Trainable<F> for Embedding<F> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut [F], &[F])) {
        f(
            self.table.as_slice_mut().expect("standard layout"),
            self.grad.as_slice().expect("standard layout"),
        );
    }

    fn zero_grad(&mut self) {
        self.grad.fill(F::zero());
    }
}
