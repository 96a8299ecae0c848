use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{LabelScheme, TraceSet};

/// Per-class means with one pooled, ridge-regularised covariance. Classes
/// get equal priors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTemplate {
    pub scheme: LabelScheme,
    pub window: Range<usize>,
    /// (n_classes, dim)
    pub means: Array2<f64>,
    pub covariance: Array2<f64>,
    /// Lower Cholesky factor of `covariance`.
    chol: Array2<f64>,
}

/// Lower-triangular `L` with `L Lᵀ = a`, or `None` if `a` is not positive
/// definite.
pub fn cholesky(a: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L y = b` for lower-triangular `L`.
fn forward_substitute(l: &Array2<f64>, b: &mut [f64]) {
    for i in 0..b.len() {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

impl GaussianTemplate {
    pub fn fit<F: Scalar>(ts: &TraceSet<F>, window: Range<usize>) -> Result<Self> {
        if window.is_empty() || window.end > ts.n_samples() {
            return Err(Error::Shape(format!(
                "window {window:?} outside traces of {} samples",
                ts.n_samples()
            )));
        }
        let scheme = ts.scheme();
        let k = scheme.n_classes();
        let hist = ts.class_histogram();
        if let Some(class) = hist.iter().position(|&c| c == 0) {
            return Err(Error::MissingClass { class });
        }
        let dim = window.len();
        let x = ts.samples().slice(ndarray::s![.., window.clone()]).mapv(|v| v.as_f64());
        let mut means = Array2::<f64>::zeros((k, dim));
        for (row, &label) in x.rows().into_iter().zip(ts.labels()) {
            let mut m = means.row_mut(label as usize);
            m += &row;
        }
        for (mut m, &c) in means.rows_mut().into_iter().zip(&hist) {
            m /= c as f64;
        }
        let mut centred = x;
        for (mut row, &label) in centred.rows_mut().into_iter().zip(ts.labels()) {
            row -= &means.row(label as usize);
        }
        let dof = (ts.len() as f64 - k as f64).max(1.0);
        let mut cov = centred.t().dot(&centred) / dof;
        let trace: f64 = cov.diag().sum();
        // zero-noise data still needs an invertible matrix
        let ridge = if trace > 0.0 { 1e-6 * trace / dim as f64 } else { 1e-6 };
        cov.diag_mut().mapv_inplace(|v| v + ridge);
        let chol = cholesky(cov.view()).ok_or_else(|| {
            Error::Shape("pooled covariance is not positive definite".into())
        })?;
        Ok(Self {
            scheme,
            window,
            means,
            covariance: cov,
            chol,
        })
    }

    /// Log density of each class up to a shared constant.
    pub fn class_log_likelihoods(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut buf = vec![0.0; x.len()];
        self.means
            .axis_iter(Axis(0))
            .map(|m| {
                for ((b, &xi), &mi) in buf.iter_mut().zip(x).zip(m) {
                    *b = xi - mi;
                }
                forward_substitute(&self.chol, &mut buf);
                -0.5 * buf.iter().map(|v| v * v).sum::<f64>()
            })
            .collect()
    }

    /// Posterior class probabilities for windowed traces, shape (n, n_classes).
    pub fn probabilities<F: Scalar>(&self, windowed: ArrayView2<'_, F>) -> Result<Array2<F>> {
        if windowed.ncols() != self.window.len() {
            return Err(Error::Shape(format!(
                "template expects {} samples, got {}",
                self.window.len(),
                windowed.ncols()
            )));
        }
        let k = self.means.nrows();
        let mut out = Array2::<F>::zeros((windowed.nrows(), k));
        for (row, mut o) in windowed.rows().into_iter().zip(out.rows_mut()) {
            let x: Array1<f64> = row.mapv(|v| v.as_f64());
            let ll = self.class_log_likelihoods(x.view());
            let max = ll.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let e = ll.mapv(|v| (v - max).exp());
            let z = e.sum();
            for (oi, ei) in o.iter_mut().zip(e.iter()) {
                *oi = F::lit(ei / z);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(cholesky(array![[1.0, 2.0], [2.0, 1.0]].view()).is_none());
    }

    #[test]
    fn separable_zero_noise_classifies_perfectly() {
        let samples = array![[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]];
        let ts = TraceSet::new(samples, None, vec![0, 0, 1, 1], LabelScheme::Lsb, None).unwrap();
        let t = GaussianTemplate::fit(&ts, 0..2).unwrap();
        let p = t.probabilities(ts.samples().view()).unwrap();
        for (row, &l) in p.rows().into_iter().zip(ts.labels()) {
            assert!(row[l as usize] > 0.99);
            assert!((row.sum() - 1.0f64).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_class_is_an_error() {
        let samples = Array2::<f64>::zeros((3, 2));
        let ts = TraceSet::new(samples, None, vec![1, 2, 3], LabelScheme::HammingWeight, None).unwrap();
        assert!(matches!(GaussianTemplate::fit(&ts, 0..2), Err(Error::MissingClass { class: 0 })));
    }
}
