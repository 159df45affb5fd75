//! Local model: parameter vectors, the MLP classifier, and SGD training.

mod mlp;
mod params;

pub use mlp::{Activation, Mlp, MlpSpec, TrainConfig};
pub use params::{Layer, LayerShape, Layout, ParamVector};
