//! On-disk formats: binary trace files, CSV curves and JSON run manifests.

mod curves;
mod tracefile;

pub use curves::Curve;
pub use tracefile::{
    decode_traces, encode_traces, read_header, read_traces, write_traces, TraceFileHeader, HEADER_LEN,
    TRACE_MAGIC, TRACE_VERSION,
};

use crate::cgan::LossHistory;
use crate::error::Result;
use crate::leakage::{CorrelationTrace, DomTrace};
use crate::profiling::GeReport;
use crate::scalar::Scalar;

pub fn correlation_curve<F: Scalar>(c: &CorrelationTrace<F>) -> Result<Curve> {
    let n = c.values.len();
    Curve::new("sample", (0..n).collect())
        .with("rho", c.values.iter().map(|v| v.as_f64()).collect())?
        .with("undefined", c.undefined.iter().map(|&u| u as u8 as f64).collect())
}

pub fn dom_curve<F: Scalar>(d: &DomTrace<F>) -> Result<Curve> {
    Curve::new("sample", (0..d.values.len()).collect()).with("dom", d.values.iter().map(|v| v.as_f64()).collect())
}

pub fn ge_curve(r: &GeReport) -> Result<Curve> {
    Curve::new("trace_count", (1..=r.mean_rank_curve.len()).collect()).with("mean_rank", r.mean_rank_curve.clone())
}

pub fn loss_curve(h: &LossHistory) -> Result<Curve> {
    Curve::new("epoch", (1..=h.d_loss.len()).collect())
        .with("d_loss", h.d_loss.clone())?
        .with("g_loss", h.g_loss.clone())?
        .with("d_real", h.d_real.clone())?
        .with("d_fake", h.d_fake.clone())
}
