use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::trace::TraceSet;

fn resample_indices(len: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..len)).collect()
}

/// `ts` followed by `n` of its traces drawn uniformly with replacement.
pub fn augment_repeat<F: Scalar>(ts: &TraceSet<F>, n: usize, seed: u64) -> Result<TraceSet<F>> {
    if ts.is_empty() {
        return Err(Error::Config("cannot resample an empty trace set".into()));
    }
    if n == 0 {
        return Err(Error::Config("number of repeated traces must be positive".into()));
    }
    let idx = resample_indices(ts.len(), n, &mut seeded(seed));
    ts.concat(&ts.select(&idx))
}

/// `ts` followed by `n` resampled traces with i.i.d. N(0, sigma²) noise added
/// to every sample; labels and plaintexts are inherited.
pub fn augment_noise<F: Scalar>(ts: &TraceSet<F>, sigma: f64, n: usize, seed: u64) -> Result<TraceSet<F>> {
    if ts.is_empty() {
        return Err(Error::Config("cannot resample an empty trace set".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("noise sigma must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::Config("number of noisy traces must be positive".into()));
    }
    let mut rng = seeded(seed);
    let idx = resample_indices(ts.len(), n, &mut rng);
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    let mut added = ts.select(&idx);
    let noisy = added.samples().mapv(|v| v + F::lit(normal.sample(&mut rng)));
    added = TraceSet::new(
        noisy,
        added.plaintexts().map(<[u8]>::to_vec),
        added.labels().to_vec(),
        added.scheme(),
        added.fixed_key(),
    )?;
    ts.concat(&added)
}
