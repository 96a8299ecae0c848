//! Versioned binary encoding of a network: layer specs followed by
//! little-endian f64 parameters and BatchNorm running statistics.

use std::path::Path;

use super::layer::LayerSpec;
use super::network::Network;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Scalar;

pub const NETWORK_MAGIC: [u8; 4] = *b"SCNN";
pub const NETWORK_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                expected: self.pos + n,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl<F: Scalar> Network<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(&NETWORK_MAGIC);
        w.u32(NETWORK_VERSION);
        w.u8(self.dropout_active_in_infer() as u8);
        w.u32(self.specs().len() as u32);
        for spec in self.specs() {
            match *spec {
                LayerSpec::Dense { input, output } => {
                    w.u8(0);
                    w.u32(input as u32);
                    w.u32(output as u32);
                }
                LayerSpec::LeakyRelu { alpha } => {
                    w.u8(1);
                    w.f64(alpha);
                }
                LayerSpec::Relu => w.u8(2),
                LayerSpec::Tanh => w.u8(3),
                LayerSpec::Sigmoid => w.u8(4),
                LayerSpec::Softmax => w.u8(5),
                LayerSpec::BatchNorm {
                    dim,
                    epsilon,
                    momentum,
                } => {
                    w.u8(6);
                    w.u32(dim as u32);
                    w.f64(epsilon);
                    w.f64(momentum);
                }
                LayerSpec::Dropout { rate } => {
                    w.u8(7);
                    w.f64(rate);
                }
            }
        }
        let params = self.parameters();
        w.u64(params.len() as u64);
        for p in params {
            w.f64(p.as_f64());
        }
        let buffers = self.buffers();
        w.u64(buffers.len() as u64);
        for b in buffers {
            w.f64(b.as_f64());
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != NETWORK_MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != NETWORK_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dropout_in_infer = r.u8()? != 0;
        let n_layers = r.u32()? as usize;
        let mut specs = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let spec = match r.u8()? {
                0 => LayerSpec::Dense {
                    input: r.u32()? as usize,
                    output: r.u32()? as usize,
                },
                1 => LayerSpec::LeakyRelu { alpha: r.f64()? },
                2 => LayerSpec::Relu,
                3 => LayerSpec::Tanh,
                4 => LayerSpec::Sigmoid,
                5 => LayerSpec::Softmax,
                6 => LayerSpec::BatchNorm {
                    dim: r.u32()? as usize,
                    epsilon: r.f64()?,
                    momentum: r.f64()?,
                },
                7 => LayerSpec::Dropout { rate: r.f64()? },
                t => return Err(Error::Malformed(format!("unknown layer tag {t}"))),
            };
            specs.push(spec);
        }
        let mut net = Network::new(&specs, &mut seeded(0))?;
        net.set_dropout_active_in_infer(dropout_in_infer);
        let n_params = r.u64()? as usize;
        if n_params != net.param_count() {
            return Err(Error::Malformed(format!(
                "{} parameters stored for a network with {}",
                n_params,
                net.param_count()
            )));
        }
        let params = (0..n_params)
            .map(|_| r.f64().map(F::lit))
            .collect::<Result<Vec<F>>>()?;
        net.set_parameters(&params)?;
        let n_buffers = r.u64()? as usize;
        let buffers = (0..n_buffers)
            .map(|_| r.f64().map(F::lit))
            .collect::<Result<Vec<F>>>()?;
        net.set_buffers(&buffers)?;
        if r.pos != bytes.len() {
            return Err(Error::Malformed("trailing bytes after network".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn buffers(&self) -> Vec<F> {
        let mut me = self.clone();
        let mut out = Vec::new();
        for layer in me.layers_mut() {
            for b in layer.buffers_mut() {
                out.extend(b.iter().copied());
            }
        }
        out
    }

    fn set_buffers(&mut self, values: &[F]) -> Result<()> {
        let mut it = values.iter();
        for layer in self.layers_mut() {
            for b in layer.buffers_mut() {
                for x in b.iter_mut() {
                    *x = *it
                        .next()
                        .ok_or_else(|| Error::Malformed("missing running statistics".into()))?;
                }
            }
        }
        if it.next().is_some() {
            return Err(Error::Malformed("extra running statistics".into()));
        }
        Ok(())
    }
}
