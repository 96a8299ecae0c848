//! Correlation and difference-of-means statistics over trace sets.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{intermediate_value, label_hw, label_lsb, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueMap {
    Identity,
    #[serde(alias = "hamming_weight")]
    Hw,
    Lsb,
}

impl ValueMap {
    pub fn apply(self, v: u8) -> f64 {
        match self {
            ValueMap::Identity => v as f64,
            ValueMap::Hw => label_hw(v) as f64,
            ValueMap::Lsb => label_lsb(v) as f64,
        }
    }
}

impl std::str::FromStr for ValueMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "id" => Ok(ValueMap::Identity),
            "hw" | "hamming_weight" => Ok(ValueMap::Hw),
            "lsb" => Ok(ValueMap::Lsb),
            other => Err(Error::Config(format!("unknown value map `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    KeyGuess { key: u8, map: ValueMap },
    Labels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace<F> {
    pub values: Vec<F>,
    /// Columns with zero variance, reported as 0.
    pub undefined: Vec<bool>,
    pub hypothesis: Hypothesis,
}

impl<F: Scalar> CorrelationTrace<F> {
    /// Index and value of the largest |ρ|; ties go to the lower index.
    pub fn peak(&self) -> (usize, F) {
        let mut best = (0, F::zero());
        for (i, &v) in self.values.iter().enumerate() {
            if v.abs() > best.1.abs() {
                best = (i, v);
            }
        }
        best
    }

    /// Mean |ρ| outside `[peak - halfwidth, peak + halfwidth]`.
    pub fn leakage_noise(&self, halfwidth: usize) -> F {
        let (p, _) = self.peak();
        let excluded = p.saturating_sub(halfwidth)..(p + halfwidth + 1);
        self.leakage_noise_outside(excluded)
    }

    /// Mean |ρ| over columns outside `excluded`.
    pub fn leakage_noise_outside(&self, excluded: Range<usize>) -> F {
        let (sum, n) = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| !excluded.contains(i))
            .fold((F::zero(), 0usize), |(s, n), (_, &v)| (s + v.abs(), n + 1));
        if n == 0 {
            F::zero()
        } else {
            sum / F::lit(n as f64)
        }
    }

    /// Number of columns whose |ρ| is at least `fraction` of the peak |ρ|.
    pub fn peak_width(&self, fraction: F) -> usize {
        let (_, v) = self.peak();
        let cut = v.abs() * fraction;
        self.values.iter().filter(|x| x.abs() >= cut).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomTrace<F> {
    pub values: Vec<F>,
    pub selector_bit: u8,
}

/// Sample Pearson correlation coefficient.
pub fn pearson<F: Scalar>(x: &[F], y: &[F]) -> Result<F> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Shape("pearson needs at least two points".into()));
    }
    let n = F::lit(x.len() as f64);
    let mx = x.iter().copied().sum::<F>() / n;
    let my = y.iter().copied().sum::<F>() / n;
    let (mut sxy, mut sxx, mut syy) = (F::zero(), F::zero(), F::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == F::zero() {
        return Err(Error::UndefinedCorrelation("x"));
    }
    if syy == F::zero() {
        return Err(Error::UndefinedCorrelation("y"));
    }
    Ok(clamp_unit(sxy / (sxx.sqrt() * syy.sqrt())))
}

fn clamp_unit<F: Scalar>(r: F) -> F {
    r.max(-F::one()).min(F::one())
}

/// Correlates every sample column with the hypothesis vector `h`.
fn correlate_columns<F: Scalar>(ts: &TraceSet<F>, h: &[F], hypothesis: Hypothesis) -> CorrelationTrace<F> {
    let samples = ts.samples();
    let n = F::lit(h.len() as f64);
    let ns = ts.n_samples();
    let mh = h.iter().copied().sum::<F>() / n;
    let hc: Vec<F> = h.iter().map(|&v| v - mh).collect();
    let shh: F = hc.iter().map(|&v| v * v).sum();

    let mut mean = vec![F::zero(); ns];
    for row in samples.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut sxh = vec![F::zero(); ns];
    let mut sxx = vec![F::zero(); ns];
    for (row, &d) in samples.rows().into_iter().zip(&hc) {
        for j in 0..ns {
            let dx = row[j] - mean[j];
            sxh[j] += dx * d;
            sxx[j] += dx * dx;
        }
    }
    let mut values = vec![F::zero(); ns];
    let mut undefined = vec![false; ns];
    for j in 0..ns {
        if sxx[j] == F::zero() || shh == F::zero() {
            undefined[j] = true;
        } else {
            values[j] = clamp_unit(sxh[j] / (sxx[j].sqrt() * shh.sqrt()));
        }
    }
    CorrelationTrace {
        values,
        undefined,
        hypothesis,
    }
}

/// Correlation power analysis against the S-box output under `key`.
pub fn cpa<F: Scalar>(ts: &TraceSet<F>, key: u8, map: ValueMap) -> Result<CorrelationTrace<F>> {
    if ts.len() < 2 {
        return Err(Error::Shape("cpa needs at least two traces".into()));
    }
    let pts = ts.plaintexts().ok_or(Error::MissingPlaintexts)?;
    let h: Vec<F> = pts
        .iter()
        .map(|&p| F::lit(map.apply(intermediate_value(p, key))))
        .collect();
    Ok(correlate_columns(ts, &h, Hypothesis::KeyGuess { key, map }))
}

/// Correlates each sample column directly with per-trace label values.
pub fn cpa_by_label<F: Scalar>(ts: &TraceSet<F>, labels: &[F]) -> Result<CorrelationTrace<F>> {
    if labels.len() != ts.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} traces",
            labels.len(),
            ts.len()
        )));
    }
    if ts.len() < 2 {
        return Err(Error::Shape("cpa needs at least two traces".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::UndefinedCorrelation("labels"));
    }
    Ok(correlate_columns(ts, labels, Hypothesis::Labels))
}

/// `cpa_by_label` on the set's own labels.
pub fn cpa_own_labels<F: Scalar>(ts: &TraceSet<F>) -> Result<CorrelationTrace<F>> {
    let labels: Vec<F> = ts.labels().iter().map(|&l| F::lit(l as f64)).collect();
    cpa_by_label(ts, &labels)
}

/// Single-bit difference of means: mean(bit set) − mean(bit clear) per sample.
pub fn dpa<F: Scalar>(ts: &TraceSet<F>, key: u8, bit_index: u8) -> Result<DomTrace<F>> {
    if bit_index > 7 {
        return Err(Error::Config(format!("bit index {bit_index} > 7")));
    }
    let pts = ts.plaintexts().ok_or(Error::MissingPlaintexts)?;
    let selector: Vec<bool> = pts
        .iter()
        .map(|&p| (intermediate_value(p, key) >> bit_index) & 1 == 1)
        .collect();
    difference_of_means(ts, &selector, bit_index)
}

/// Difference of means for an explicit partition (`true` = group 1).
pub fn difference_of_means<F: Scalar>(
    ts: &TraceSet<F>,
    selector: &[bool],
    selector_bit: u8,
) -> Result<DomTrace<F>> {
    if selector.len() != ts.len() {
        return Err(Error::Shape("selector length differs from trace count".into()));
    }
    let ns = ts.n_samples();
    let mut sums = [vec![F::zero(); ns], vec![F::zero(); ns]];
    let mut counts = [0usize; 2];
    for (row, &s) in ts.samples().rows().into_iter().zip(selector) {
        let g = s as usize;
        counts[g] += 1;
        for (acc, &x) in sums[g].iter_mut().zip(row) {
            *acc += x;
        }
    }
    if counts.contains(&0) {
        return Err(Error::Config("a difference-of-means partition is empty".into()));
    }
    let (n0, n1) = (F::lit(counts[0] as f64), F::lit(counts[1] as f64));
    let values = sums[1]
        .iter()
        .zip(&sums[0])
        .map(|(&a, &b)| a / n1 - b / n0)
        .collect();
    Ok(DomTrace {
        values,
        selector_bit,
    })
}

/// The length-`window` range maximising Σ|ρ|. Among equal sums the window
/// whose |ρ| mass is best centred wins, then the lower start.
pub fn locate_poi<F: Scalar>(corr: &CorrelationTrace<F>, window: usize) -> Result<Range<usize>> {
    let n = corr.values.len();
    if window == 0 || window > n {
        return Err(Error::Config(format!(
            "window {window} outside 1..={n}"
        )));
    }
    let abs: Vec<F> = corr.values.iter().map(|v| v.abs()).collect();
    let offcentre = |start: usize| -> F {
        let w = &abs[start..start + window];
        let mass: F = w.iter().copied().sum();
        if mass == F::zero() {
            return F::zero();
        }
        let com = w
            .iter()
            .enumerate()
            .map(|(i, &a)| F::lit(i as f64) * a)
            .sum::<F>()
            / mass;
        (com - F::lit((window - 1) as f64 / 2.0)).abs()
    };
    let mut best_start = 0;
    let mut best = (F::neg_infinity(), F::infinity());
    for start in 0..=n - window {
        // fresh sums keep ties exact
        let s: F = abs[start..start + window].iter().copied().sum();
        if s > best.0 {
            best = (s, offcentre(start));
            best_start = start;
        } else if s == best.0 {
            let d = offcentre(start);
            if d < best.1 {
                best = (s, d);
                best_start = start;
            }
        }
    }
    Ok(best_start..best_start + window)
}
