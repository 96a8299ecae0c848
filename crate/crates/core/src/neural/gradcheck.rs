//! Central finite-difference gradients, used to validate backpropagation.

use ndarray::{Array2, ArrayView2};

use super::network::{Mode, Network, Trainable};
use crate::error::Result;
use crate::rng::seeded;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GradientComparison<F> {
    pub analytic_params: Vec<F>,
    pub numeric_params: Vec<F>,
    pub analytic_input: Array2<F>,
    pub numeric_input: Array2<F>,
}

impl<F: Scalar> GradientComparison<F> {
    /// ‖a − n‖ / max(‖a‖, ‖n‖) over parameters and inputs together.
    pub fn relative_error(&self) -> F {
        let pairs = self
            .analytic_params
            .iter()
            .zip(&self.numeric_params)
            .chain(self.analytic_input.iter().zip(self.numeric_input.iter()));
        let (mut diff, mut na, mut nn) = (F::zero(), F::zero(), F::zero());
        for (&a, &n) in pairs {
            diff += (a - n) * (a - n);
            na += a * a;
            nn += n * n;
        }
        let scale = na.sqrt().max(nn.sqrt());
        if scale == F::zero() {
            F::zero()
        } else {
            diff.sqrt() / scale
        }
    }
}

/// Compares backprop against central differences of `L = Σ out ⊙ weights`
/// in train mode. Every forward reuses `seed` so dropout masks match.
pub fn compare_gradients<F: Scalar>(
    net: &Network<F>,
    x: ArrayView2<'_, F>,
    weights: ArrayView2<'_, F>,
    step: F,
    seed: u64,
) -> Result<GradientComparison<F>> {
    let mut net = net.clone();
    net.set_mode(Mode::Train);
    let loss = |n: &mut Network<F>, input: ArrayView2<'_, F>| -> Result<F> {
        let out = n.forward(input, &mut seeded(seed))?;
        Ok((&out * &weights).sum())
    };

    net.zero_grad();
    net.forward(x, &mut seeded(seed))?;
    let analytic_input = net.backward(weights)?;
    let analytic_params = net.gradients();

    let base = net.parameters();
    let two = F::lit(2.0);
    let mut numeric_params = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + step;
        net.set_parameters(&p)?;
        let up = loss(&mut net, x)?;
        p[i] = base[i] - step;
        net.set_parameters(&p)?;
        let dn = loss(&mut net, x)?;
        numeric_params.push((up - dn) / (two * step));
    }
    net.set_parameters(&base)?;

    let mut numeric_input = Array2::zeros(x.raw_dim());
    for idx in ndarray::indices(x.raw_dim()) {
        let mut xp = x.to_owned();
        xp[idx] = x[idx] + step;
        let up = loss(&mut net, xp.view())?;
        xp[idx] = x[idx] - step;
        let dn = loss(&mut net, xp.view())?;
        numeric_input[idx] = (up - dn) / (two * step);
    }
    Ok(GradientComparison {
        analytic_params,
        numeric_params,
        analytic_input,
        numeric_input,
    })
}
