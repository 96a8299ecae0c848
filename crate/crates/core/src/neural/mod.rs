//! Minimal feed-forward neural engine with exact backpropagation.

mod adam;
mod blob;
mod embedding;
pub mod gradcheck;
mod layer;
mod loss;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use blob::{NETWORK_MAGIC, NETWORK_VERSION};
pub use embedding::Embedding;
pub use layer::LayerSpec;
pub use loss::{bce_loss, softmax_ce_loss, LossOutput};
pub use network::{Mode, Network, Trainable};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

/// Fixed classifier architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlpArch {
    /// Two ReLU hidden layers of 70 and 50 units.
    SimMlp,
    /// Four ReLU hidden layers of 200 units.
    MlpBest,
}

impl MlpArch {
    pub fn hidden_widths(self) -> &'static [usize] {
        match self {
            MlpArch::SimMlp => &[70, 50],
            MlpArch::MlpBest => &[200, 200, 200, 200],
        }
    }

    pub fn specs(self, input_dim: usize, n_classes: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut width = input_dim;
        for &h in self.hidden_widths() {
            specs.push(LayerSpec::Dense {
                input: width,
                output: h,
            });
            specs.push(LayerSpec::Relu);
            width = h;
        }
        specs.push(LayerSpec::Dense {
            input: width,
            output: n_classes,
        });
        specs.push(LayerSpec::Softmax);
        specs
    }
}

pub fn build_mlp<F: Scalar>(
    arch: MlpArch,
    input_dim: usize,
    n_classes: usize,
    rng: &mut dyn RngCore,
) -> Result<Network<F>> {
    Network::new(&arch.specs(input_dim, n_classes), rng)
}
