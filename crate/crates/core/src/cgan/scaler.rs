use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalerKind {
    /// One min/max over the whole set.
    #[default]
    Global,
    /// Min/max per sample index.
    PerSample,
}

/// Affine map between raw amplitudes and the generator's [−1, 1] range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceScaler {
    pub kind: ScalerKind,
    /// Per-column bounds; a single entry for `Global`.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl TraceScaler {
    pub fn fit<F: Scalar>(samples: &Array2<F>, kind: ScalerKind) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("cannot fit a scaler on an empty set".into()));
        }
        let (min, max) = match kind {
            ScalerKind::Global => {
                let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                    (lo.min(x.as_f64()), hi.max(x.as_f64()))
                });
                (vec![lo], vec![hi])
            }
            ScalerKind::PerSample => samples
                .axis_iter(Axis(1))
                .map(|c| {
                    c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                        (lo.min(x.as_f64()), hi.max(x.as_f64()))
                    })
                })
                .unzip(),
        };
        Ok(Self { kind, min, max })
    }

    fn bounds(&self, j: usize) -> (f64, f64) {
        match self.kind {
            ScalerKind::Global => (self.min[0], self.max[0]),
            ScalerKind::PerSample => (self.min[j], self.max[j]),
        }
    }

    fn check<F>(&self, x: &Array2<F>) -> Result<()> {
        if self.kind == ScalerKind::PerSample && x.ncols() != self.min.len() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} samples, got {}",
                self.min.len(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn half_range(lo: f64, hi: f64) -> f64 {
        if hi > lo {
            (hi - lo) / 2.0
        } else {
            1.0
        }
    }

    /// Raw amplitudes → [−1, 1] within the fitted range.
    pub fn scale<F: Scalar>(&self, x: &Array2<F>) -> Result<Array2<F>> {
        self.check(x)?;
        let offsets: Array1<(F, F)> = (0..x.ncols())
            .map(|j| {
                let (lo, hi) = self.bounds(j);
                let h = Self::half_range(lo, hi);
                (F::lit((lo + hi) / 2.0), F::lit(1.0 / h))
            })
            .collect();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (v, &(c, s)) in row.iter_mut().zip(offsets.iter()) {
                *v = (*v - c) * s;
            }
        }
        Ok(out)
    }

    /// [−1, 1] → raw amplitudes.
    pub fn unscale<F: Scalar>(&self, x: &Array2<F>) -> Result<Array2<F>> {
        self.check(x)?;
        let offsets: Vec<(F, F)> = (0..x.ncols())
            .map(|j| {
                let (lo, hi) = self.bounds(j);
                let h = Self::half_range(lo, hi);
                (F::lit((lo + hi) / 2.0), F::lit(h))
            })
            .collect();
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (v, &(c, h)) in row.iter_mut().zip(&offsets) {
                *v = *v * h + c;
            }
        }
        Ok(out)
    }

    /// Raw bounds of column `j` (the image of [−1, 1]).
    pub fn raw_range(&self, j: usize) -> (f64, f64) {
        self.bounds(j)
    }
}
