//! Trace containers, the AES S-box leakage target and label construction.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[rustfmt::skip]
const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

/// AES forward S-box applied to `p ^ k`.
pub fn sbox_output(p: u8, k: u8) -> u8 {
    SBOX[(p ^ k) as usize]
}

/// First-round S-box output: the targeted intermediate value.
pub fn intermediate_value(p: u8, k_guess: u8) -> u8 {
    sbox_output(p, k_guess)
}

pub fn label_lsb(v: u8) -> u8 {
    v & 1
}

pub fn label_hw(v: u8) -> u8 {
    v.count_ones() as u8
}

/// Four-way label combining the LSB of a mask and of the masked S-box output.
pub fn gan_label(mask_lsb: u8, masked_lsb: u8) -> u8 {
    debug_assert!(mask_lsb < 2 && masked_lsb < 2);
    2 * (masked_lsb & 1) + (mask_lsb & 1)
}

/// Splits a Gan_label into `(mask_lsb, masked_lsb)`.
pub fn split_gan_label(gl: u8) -> Result<(u8, u8)> {
    if gl > 3 {
        return Err(Error::LabelOutOfRange {
            label: gl as usize,
            n_classes: 4,
        });
    }
    Ok((gl & 1, gl >> 1))
}

/// Recovers the unmasked S-box output LSB carried by a Gan_label.
pub fn sbox_lsb_from_gan_label(gl: u8) -> Result<u8> {
    let (mask, masked) = split_gan_label(gl)?;
    Ok(mask ^ masked)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScheme {
    Lsb,
    #[serde(alias = "hw")]
    HammingWeight,
    GanLabel,
    RawValue,
}

impl LabelScheme {
    pub fn n_classes(self) -> usize {
        match self {
            LabelScheme::Lsb => 2,
            LabelScheme::HammingWeight => 9,
            LabelScheme::GanLabel => 4,
            LabelScheme::RawValue => 256,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            LabelScheme::Lsb => 0,
            LabelScheme::HammingWeight => 1,
            LabelScheme::GanLabel => 2,
            LabelScheme::RawValue => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LabelScheme::Lsb,
            1 => LabelScheme::HammingWeight,
            2 => LabelScheme::GanLabel,
            3 => LabelScheme::RawValue,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::Lsb => "lsb",
            LabelScheme::HammingWeight => "hw",
            LabelScheme::GanLabel => "gan_label",
            LabelScheme::RawValue => "raw_value",
        }
    }

    /// Label of an unmasked intermediate value. `GanLabel` needs mask
    /// knowledge and has no such mapping.
    pub fn label_of(self, v: u8) -> Option<u8> {
        match self {
            LabelScheme::Lsb => Some(label_lsb(v)),
            LabelScheme::HammingWeight => Some(label_hw(v)),
            LabelScheme::RawValue => Some(v),
            LabelScheme::GanLabel => None,
        }
    }

    /// Probability a classifier assigns to intermediate value `v` given its
    /// class probabilities. For `GanLabel` the classes whose shares XOR to
    /// the LSB of `v` are summed.
    pub fn value_probability<F: Scalar>(self, probs: ArrayView1<'_, F>, v: u8) -> F {
        match self.label_of(v) {
            Some(label) => probs[label as usize],
            None => {
                let bit = label_lsb(v);
                (0..4u8)
                    .filter(|&gl| (gl & 1) ^ (gl >> 1) == bit)
                    .map(|gl| probs[gl as usize])
                    .sum()
            }
        }
    }
}

impl std::fmt::Display for LabelScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One trace, detached from its set.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<F> {
    pub samples: Vec<F>,
    pub plaintext: Option<u8>,
    pub label: u8,
}

/// A labelled set of equal-length traces stored trace-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet<F> {
    samples: Array2<F>,
    plaintexts: Option<Vec<u8>>,
    labels: Vec<u8>,
    scheme: LabelScheme,
    fixed_key: Option<u8>,
}

impl<F: Scalar> TraceSet<F> {
    pub fn new(
        samples: Array2<F>,
        plaintexts: Option<Vec<u8>>,
        labels: Vec<u8>,
        scheme: LabelScheme,
        fixed_key: Option<u8>,
    ) -> Result<Self> {
        let n = samples.nrows();
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {} traces",
                labels.len(),
                n
            )));
        }
        if let Some(pts) = &plaintexts {
            if pts.len() != n {
                return Err(Error::Shape(format!(
                    "{} plaintexts for {} traces",
                    pts.len(),
                    n
                )));
            }
        }
        let n_classes = scheme.n_classes();
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                n_classes,
            });
        }
        Ok(Self {
            samples: samples.as_standard_layout().into_owned(),
            plaintexts,
            labels,
            scheme,
            fixed_key,
        })
    }

    pub fn empty(n_samples: usize, scheme: LabelScheme) -> Self {
        Self {
            samples: Array2::zeros((0, n_samples)),
            plaintexts: Some(Vec::new()),
            labels: Vec::new(),
            scheme,
            fixed_key: None,
        }
    }

    /// Builds a set from detached traces. Plaintexts are kept only when every
    /// trace carries one.
    pub fn from_traces(
        traces: &[Trace<F>],
        n_samples: usize,
        scheme: LabelScheme,
        fixed_key: Option<u8>,
    ) -> Result<Self> {
        let mut flat = Vec::with_capacity(traces.len() * n_samples);
        for t in traces {
            if t.samples.len() != n_samples {
                return Err(Error::Shape(format!(
                    "trace of length {} in a set of length {}",
                    t.samples.len(),
                    n_samples
                )));
            }
            flat.extend_from_slice(&t.samples);
        }
        let plaintexts = traces.iter().map(|t| t.plaintext).collect();
        let labels = traces.iter().map(|t| t.label).collect();
        let samples = Array2::from_shape_vec((traces.len(), n_samples), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(samples, plaintexts, labels, scheme, fixed_key)
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn fixed_key(&self) -> Option<u8> {
        self.fixed_key
    }

    pub fn samples(&self) -> &Array2<F> {
        &self.samples
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn plaintexts(&self) -> Option<&[u8]> {
        self.plaintexts.as_deref()
    }

    pub fn trace(&self, i: usize) -> Trace<F> {
        Trace {
            samples: self.samples.row(i).to_vec(),
            plaintext: self.plaintexts.as_ref().map(|p| p[i]),
            label: self.labels[i],
        }
    }

    /// Per-class trace counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.scheme.n_classes()];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Sub-set with the traces at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            samples: self.samples.select(Axis(0), indices),
            plaintexts: self
                .plaintexts
                .as_ref()
                .map(|p| indices.iter().map(|&i| p[i]).collect()),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            scheme: self.scheme,
            fixed_key: self.fixed_key,
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let idx: Vec<usize> = range.collect();
        self.select(&idx)
    }

    /// Same traces and plaintexts relabelled under another scheme. Needs the
    /// fixed key and plaintexts.
    pub fn relabel(&self, scheme: LabelScheme) -> Result<Self> {
        let key = self
            .fixed_key
            .ok_or_else(|| Error::Config("relabelling needs a fixed key".into()))?;
        let pts = self.plaintexts.as_ref().ok_or(Error::MissingPlaintexts)?;
        let labels = pts
            .iter()
            .map(|&p| {
                scheme
                    .label_of(intermediate_value(p, key))
                    .ok_or_else(|| Error::SchemeMismatch {
                        expected: "a value-derived scheme".into(),
                        found: scheme.name().into(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels,
            scheme,
            ..self.clone()
        })
    }

    /// Applies `f` to every sample.
    pub fn map_samples(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            samples: self.samples.mapv(f),
            ..self.clone()
        }
    }

    /// Concatenates two sets: `self` first, then `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_samples() != other.n_samples() {
            return Err(Error::Shape(format!(
                "cannot join sets of length {} and {}",
                self.n_samples(),
                other.n_samples()
            )));
        }
        if self.scheme != other.scheme {
            return Err(Error::SchemeMismatch {
                expected: self.scheme.name().into(),
                found: other.scheme.name().into(),
            });
        }
        let samples = ndarray::concatenate(Axis(0), &[self.samples.view(), other.samples.view()])
            .map_err(|e| Error::Shape(e.to_string()))?;
        let plaintexts = match (&self.plaintexts, &other.plaintexts) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        let fixed_key = if other.is_empty() || self.fixed_key == other.fixed_key {
            self.fixed_key
        } else if self.is_empty() {
            other.fixed_key
        } else {
            None
        };
        Ok(Self {
            samples,
            plaintexts,
            labels: self.labels.iter().chain(&other.labels).copied().collect(),
            scheme: self.scheme,
            fixed_key,
        })
    }

    pub fn cast<G: Scalar>(&self) -> TraceSet<G> {
        TraceSet {
            samples: self.samples.mapv(|x| G::lit(x.as_f64())),
            plaintexts: self.plaintexts.clone(),
            labels: self.labels.clone(),
            scheme: self.scheme,
            fixed_key: self.fixed_key,
        }
    }
}
