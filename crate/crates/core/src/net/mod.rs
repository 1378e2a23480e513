//! Minimal reverse-mode differentiable feedforward networks.

mod adam;
mod io;
mod layer;
mod loss;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState, NetworkAdam};
pub use io::{
    load_network, network_from_str, network_to_string, read_network, save_network, write_network,
    NETWORK_FORMAT_VERSION, NETWORK_MAGIC,
};
pub(crate) use io::{decode_f64s, encode_f64s};
pub use layer::{Dense, Layer};
pub use loss::{loss, loss_slice, one_hot, LossKind, CE_CLAMP};
pub use network::{DenseGrad, ForwardTrace, Gradients, Mode, Network, Role};
