//! Minimal volumetric neural-network engine: tensors, a differentiation
//! tape, convolution kernels, optimizers and the networks built on them.

mod checkpoint;
mod discriminator;
mod graph;
pub mod kernels;
mod optim;
mod params;
mod tensor;
mod unet;

pub use checkpoint::Checkpoint;
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use graph::{Gradients, Graph, Var};
pub use optim::{Adam, Sgd};
pub use params::{Init, ParamId, ParamStore, LEAKY_SLOPE};
pub use tensor::Tensor;
pub use unet::{Head, HeadOutputs, UNet, UNetConfig, Upsampling};
