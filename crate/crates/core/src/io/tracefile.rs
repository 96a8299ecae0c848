//! Binary trace file: a 20-byte little-endian header followed by one record
//! per trace.
//!
//! ```text
//! 0   magic "SCTR"
//! 4   u32 version (1)
//! 8   u32 n_traces
//! 12  u32 n_samples
//! 16  u8  label scheme code
//! 17  u8  has_plaintext
//! 18  u8  has_fixed_key
//! 19  u8  fixed_key (0xFF when absent)
//! 20  records: [u8 plaintext if has_plaintext] u16 label, n_samples × f32
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::trace::{LabelScheme, TraceSet};

pub const TRACE_MAGIC: [u8; 4] = *b"SCTR";
pub const TRACE_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceFileHeader {
    pub version: u32,
    pub n_traces: u32,
    pub n_samples: u32,
    pub scheme: LabelScheme,
    pub has_plaintext: bool,
    pub fixed_key: Option<u8>,
}

impl TraceFileHeader {
    pub fn record_len(&self) -> usize {
        self.has_plaintext as usize + 2 + 4 * self.n_samples as usize
    }

    pub fn payload_len(&self) -> usize {
        self.record_len() * self.n_traces as usize
    }

    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[0..4].copy_from_slice(&TRACE_MAGIC);
        h[4..8].copy_from_slice(&self.version.to_le_bytes());
        h[8..12].copy_from_slice(&self.n_traces.to_le_bytes());
        h[12..16].copy_from_slice(&self.n_samples.to_le_bytes());
        h[16] = self.scheme.code();
        h[17] = self.has_plaintext as u8;
        h[18] = self.fixed_key.is_some() as u8;
        h[19] = self.fixed_key.unwrap_or(0xFF);
        h
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != TRACE_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = u32_at(4);
        if version != TRACE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let scheme = LabelScheme::from_code(bytes[16])
            .ok_or_else(|| Error::Malformed(format!("unknown label scheme code {}", bytes[16])))?;
        let flag = |i: usize, what: &str| match bytes[i] {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::Malformed(format!("{what} flag is {v}"))),
        };
        let has_plaintext = flag(17, "plaintext")?;
        let fixed_key = flag(18, "fixed-key")?.then_some(bytes[19]);
        Ok(Self {
            version,
            n_traces: u32_at(8),
            n_samples: u32_at(12),
            scheme,
            has_plaintext,
            fixed_key,
        })
    }
}

fn header_of<F>(ts: &TraceSet<F>) -> Result<TraceFileHeader>
where
    F: Scalar,
{
    let n_traces = u32::try_from(ts.len()).map_err(|_| Error::Shape("too many traces for the file format".into()))?;
    let n_samples =
        u32::try_from(ts.n_samples()).map_err(|_| Error::Shape("traces too long for the file format".into()))?;
    Ok(TraceFileHeader {
        version: TRACE_VERSION,
        n_traces,
        n_samples,
        scheme: ts.scheme(),
        has_plaintext: ts.plaintexts().is_some(),
        fixed_key: ts.fixed_key(),
    })
}

/// Serialises `ts`. Samples are stored as f32, so f64 sets lose precision.
pub fn encode_traces<F: Scalar>(ts: &TraceSet<F>) -> Result<Vec<u8>> {
    let header = header_of(ts)?;
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.to_bytes());
    let pts = ts.plaintexts();
    for (i, row) in ts.samples().rows().into_iter().enumerate() {
        if let Some(p) = pts {
            out.push(p[i]);
        }
        out.extend_from_slice(&(ts.labels()[i] as u16).to_le_bytes());
        for &v in row {
            let f = v.to_f32().unwrap_or(f32::NAN);
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_traces<F: Scalar>(bytes: &[u8]) -> Result<TraceSet<F>> {
    let h = TraceFileHeader::parse(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = h.payload_len();
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected: HEADER_LEN + expected,
            found: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Malformed(format!(
            "{} trailing bytes after {} traces",
            payload.len() - expected,
            h.n_traces
        )));
    }
    let n = h.n_traces as usize;
    let ns = h.n_samples as usize;
    let mut samples = Vec::with_capacity(n * ns);
    let mut labels = Vec::with_capacity(n);
    let mut plaintexts = h.has_plaintext.then(|| Vec::with_capacity(n));
    for rec in payload.chunks_exact(h.record_len().max(1)).take(n) {
        let mut pos = 0;
        if let Some(p) = plaintexts.as_mut() {
            p.push(rec[0]);
            pos = 1;
        }
        let label = u16::from_le_bytes([rec[pos], rec[pos + 1]]);
        let label = u8::try_from(label).map_err(|_| Error::LabelOutOfRange {
            label: label as usize,
            n_classes: h.scheme.n_classes(),
        })?;
        labels.push(label);
        for c in rec[pos + 2..].chunks_exact(4) {
            let v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            samples.push(F::from_f32(v).expect("f32 converts"));
        }
    }
    let samples = Array2::from_shape_vec((n, ns), samples).map_err(|e| Error::Malformed(e.to_string()))?;
    TraceSet::new(samples, plaintexts, labels, h.scheme, h.fixed_key)
}

pub fn write_traces<F: Scalar>(path: impl AsRef<Path>, ts: &TraceSet<F>) -> Result<()> {
    let bytes = encode_traces(ts)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn read_traces<F: Scalar>(path: impl AsRef<Path>) -> Result<TraceSet<F>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_traces(&bytes)
}

/// Reads only the header.
pub fn read_header(path: impl AsRef<Path>) -> Result<TraceFileHeader> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    std::fs::File::open(path)?.take(HEADER_LEN as u64).read_to_end(&mut buf)?;
    TraceFileHeader::parse(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{simulate, SimConfig};

    fn set() -> TraceSet<f32> {
        simulate(&SimConfig::standard(10, 0x2b, 1)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ts = set();
        let bytes = encode_traces(&ts).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 10 * (1 + 2 + 200));
        assert_eq!(&bytes[..4], b"SCTR");
        assert_eq!(bytes[19], 0x2b);
        assert_eq!(decode_traces::<f32>(&bytes).unwrap(), ts);
    }

    #[test]
    fn absent_key_and_plaintexts() {
        let ts = TraceSet::new(Array2::<f32>::zeros((2, 3)), None, vec![0, 1], LabelScheme::Lsb, None).unwrap();
        let bytes = encode_traces(&ts).unwrap();
        assert_eq!(&bytes[17..20], &[0, 0, 0xFF]);
        assert_eq!(decode_traces::<f32>(&bytes).unwrap(), ts);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_traces(&set()).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_traces::<f32>(&bytes), Err(Error::BadMagic(m)) if &m == b"XXXX"));
    }

    #[test]
    fn truncated_payload() {
        let ts = set();
        let bytes = encode_traces(&ts).unwrap();
        let nine = &bytes[..HEADER_LEN + 9 * 203];
        assert!(matches!(decode_traces::<f32>(nine), Err(Error::Truncated { .. })));
        assert!(matches!(decode_traces::<f32>(&bytes[..10]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn version_and_trailing_bytes() {
        let mut bytes = encode_traces(&set()).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_traces::<f32>(&bytes), Err(Error::UnsupportedVersion(2))));
        bytes[4] = 1;
        bytes.push(0);
        assert!(matches!(decode_traces::<f32>(&bytes), Err(Error::Malformed(_))));
    }

    #[test]
    fn out_of_range_label() {
        let mut bytes = encode_traces(&set()).unwrap();
        bytes[HEADER_LEN + 1] = 5;
        assert!(matches!(decode_traces::<f32>(&bytes), Err(Error::LabelOutOfRange { label: 5, .. })));
    }
}
