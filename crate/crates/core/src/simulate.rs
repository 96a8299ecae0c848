//! Synthetic leaky traces with one planted S-box leakage point.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Scalar;
use crate::trace::{label_hw, sbox_output, LabelScheme, TraceSet};

/// Deterministic part of the planted leak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakModel {
    /// The S-box output byte itself.
    #[default]
    Identity,
    /// Hamming weight of the S-box output.
    HammingWeight,
}

impl LeakModel {
    pub fn apply(self, v: u8) -> f64 {
        match self {
            LeakModel::Identity => v as f64,
            LeakModel::HammingWeight => label_hw(v) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_traces: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    pub fixed_key: u8,
    #[serde(default = "default_leakage_index")]
    pub leakage_index: usize,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    /// Inclusive integer range of background amplitudes.
    #[serde(default = "default_background")]
    pub background_range: (i32, i32),
    /// Half-range `J` of the per-trace leak shift, uniform on `-J..=J`.
    #[serde(default)]
    pub jitter: Option<usize>,
    #[serde(default)]
    pub leak_model: LeakModel,
    #[serde(default = "default_scheme")]
    pub label_scheme: LabelScheme,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_samples() -> usize {
    50
}
fn default_leakage_index() -> usize {
    25
}
fn default_noise_sigma() -> f64 {
    1.0
}
fn default_background() -> (i32, i32) {
    (0, 255)
}
fn default_scheme() -> LabelScheme {
    LabelScheme::Lsb
}

impl SimConfig {
    /// 50 samples, leak at 25, unit noise, 0..=255 background.
    pub fn standard(n_traces: usize, fixed_key: u8, seed: u64) -> Self {
        Self {
            n_traces,
            n_samples: default_n_samples(),
            fixed_key,
            leakage_index: default_leakage_index(),
            noise_sigma: default_noise_sigma(),
            background_range: default_background(),
            jitter: None,
            leak_model: LeakModel::Identity,
            label_scheme: LabelScheme::Lsb,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let j = self.jitter.unwrap_or(0);
        if self.n_traces == 0 || self.n_samples == 0 {
            return Err(Error::Config("n_traces and n_samples must be positive".into()));
        }
        if self.leakage_index < j || self.leakage_index + j >= self.n_samples {
            return Err(Error::Config(format!(
                "leak index {} with jitter {} does not fit in {} samples",
                self.leakage_index, j, self.n_samples
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        if self.background_range.0 > self.background_range.1 {
            return Err(Error::Config("empty background range".into()));
        }
        if self.label_scheme == LabelScheme::GanLabel {
            return Err(Error::Config(
                "gan_label traces need mask knowledge and cannot be simulated".into(),
            ));
        }
        Ok(())
    }
}

pub fn simulate<F: Scalar>(config: &SimConfig) -> Result<TraceSet<F>> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let (lo, hi) = config.background_range;
    let n = config.n_traces;
    let ns = config.n_samples;
    let j = config.jitter.unwrap_or(0) as i64;

    let mut samples = Array2::<F>::zeros((n, ns));
    let mut plaintexts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for mut row in samples.rows_mut() {
        let p: u8 = rng.gen();
        for s in row.iter_mut() {
            *s = F::lit(rng.gen_range(lo..=hi) as f64);
        }
        let shift = if j > 0 { rng.gen_range(-j..=j) } else { 0 };
        let idx = (config.leakage_index as i64 + shift) as usize;
        let v = sbox_output(p, config.fixed_key);
        row[idx] = F::lit(config.leak_model.apply(v) + noise.sample(&mut rng));
        plaintexts.push(p);
        labels.push(
            config
                .label_scheme
                .label_of(v)
                .expect("validated scheme is value-derived"),
        );
    }
    TraceSet::new(
        samples,
        Some(plaintexts),
        labels,
        config.label_scheme,
        Some(config.fixed_key),
    )
}

/// Splits at `boundary` into `[0, boundary)` and `[boundary, n)`.
pub fn split_d1_d2<F: Scalar>(
    ts: &TraceSet<F>,
    boundary: usize,
) -> Result<(TraceSet<F>, TraceSet<F>)> {
    if boundary == 0 || boundary >= ts.len() {
        return Err(Error::Config(format!(
            "split boundary {} outside (0, {})",
            boundary,
            ts.len()
        )));
    }
    Ok((ts.slice(0..boundary), ts.slice(boundary..ts.len())))
}

/// Draws pairwise-disjoint random subsets of the requested sizes.
pub fn sample_disjoint<F: Scalar>(
    ts: &TraceSet<F>,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<TraceSet<F>>> {
    let total: usize = sizes.iter().sum();
    if total > ts.len() {
        return Err(Error::Config(format!(
            "requested {} traces from a set of {}",
            total,
            ts.len()
        )));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config("subset sizes must be positive".into()));
    }
    let mut idx: Vec<usize> = (0..ts.len()).collect();
    idx.shuffle(&mut seeded(seed));
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &s in sizes {
        out.push(ts.select(&idx[start..start + s]));
        start += s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_plants_exact_sbox_value() {
        let mut cfg = SimConfig::standard(3000, 0x00, 3);
        cfg.noise_sigma = 0.0;
        let ts = simulate::<f64>(&cfg).unwrap();
        let pts = ts.plaintexts().unwrap();
        let i = pts.iter().position(|&p| p == 0).expect("p=0 drawn in 3000 traces");
        assert_eq!(ts.samples()[[i, 25]], 99.0);
        for (row, &p) in ts.samples().rows().into_iter().zip(pts) {
            assert_eq!(row[25], sbox_output(p, 0) as f64);
            assert!(row.iter().all(|&x| (0.0..=255.0).contains(&x) && x.fract() == 0.0));
        }
    }

    #[test]
    fn jitter_keeps_leak_within_window() {
        let mut cfg = SimConfig::standard(500, 0x2B, 9);
        cfg.noise_sigma = 0.0;
        cfg.jitter = Some(2);
        cfg.background_range = (1000, 1000);
        let ts = simulate::<f64>(&cfg).unwrap();
        let mut positions = std::collections::BTreeSet::new();
        for (row, &p) in ts.samples().rows().into_iter().zip(ts.plaintexts().unwrap()) {
            let leak: Vec<usize> = (0..50).filter(|&j| row[j] != 1000.0).collect();
            assert_eq!(leak.len(), 1);
            assert_eq!(row[leak[0]], sbox_output(p, 0x2B) as f64);
            positions.insert(leak[0]);
        }
        assert_eq!(positions.into_iter().collect::<Vec<_>>(), vec![23, 24, 25, 26, 27]);
    }

    #[test]
    fn same_seed_same_set() {
        let cfg = SimConfig::standard(100, 7, 42);
        let a = simulate::<f64>(&cfg).unwrap();
        let b = simulate::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
        let c = simulate::<f64>(&SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_follow_scheme() {
        let mut cfg = SimConfig::standard(200, 0x10, 1);
        cfg.label_scheme = LabelScheme::HammingWeight;
        let ts = simulate::<f64>(&cfg).unwrap();
        for (&l, &p) in ts.labels().iter().zip(ts.plaintexts().unwrap()) {
            assert_eq!(l, label_hw(sbox_output(p, 0x10)));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = SimConfig::standard(10, 0, 0);
        cfg.jitter = Some(25);
        assert!(simulate::<f64>(&cfg).is_err());
        cfg.jitter = Some(24);
        assert!(simulate::<f64>(&cfg).is_ok());
        cfg.noise_sigma = -1.0;
        assert!(simulate::<f64>(&cfg).is_err());
    }

    #[test]
    fn d1_d2_split_sizes() {
        let ts = simulate::<f64>(&SimConfig::standard(10_000, 0, 0)).unwrap();
        let (a, b) = split_d1_d2(&ts, 6000).unwrap();
        assert_eq!((a.len(), b.len()), (6000, 4000));
        assert_eq!(a.trace(0), ts.trace(0));
        assert_eq!(b.trace(0), ts.trace(6000));
        let small = ts.slice(0..10);
        assert_eq!(split_d1_d2(&small, 1).map(|(a, b)| (a.len(), b.len())).unwrap(), (1, 9));
        assert_eq!(split_d1_d2(&small, 9).map(|(a, b)| (a.len(), b.len())).unwrap(), (9, 1));
        assert!(split_d1_d2(&small, 0).is_err());
        assert!(split_d1_d2(&small, 10).is_err());
    }

    #[test]
    fn disjoint_draws() {
        let ts = simulate::<f64>(&SimConfig::standard(5000, 0, 0)).unwrap();
        // samples are continuous at the leak, so rows identify traces
        let key = |t: &TraceSet<f64>, i: usize| t.samples()[[i, 25]].to_bits();
        let sets = sample_disjoint(&ts, &[500, 2000], 11).unwrap();
        assert_eq!(sets[0].len(), 500);
        assert_eq!(sets[1].len(), 2000);
        let a: std::collections::HashSet<u64> = (0..500).map(|i| key(&sets[0], i)).collect();
        assert!((0..2000).all(|i| !a.contains(&key(&sets[1], i))));
        assert_eq!(sample_disjoint(&ts, &[500, 2000], 11).unwrap()[0], sets[0]);

        let two = ts.slice(0..2);
        let parts = sample_disjoint(&two, &[1, 1], 5).unwrap();
        let mut got = vec![key(&parts[0], 0), key(&parts[1], 0)];
        got.sort();
        let mut want = vec![key(&two, 0), key(&two, 1)];
        want.sort();
        assert_eq!(got, want);

        let all = sample_disjoint(&two, &[2], 5).unwrap();
        assert_eq!(all[0].len(), 2);
        assert!(sample_disjoint(&two, &[2, 1], 5).is_err());
    }
}
