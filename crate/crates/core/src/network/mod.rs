//! The toy classification network, its configuration schema and the
//! composite loss.

mod config;
mod conv;
mod loss;
mod model;

pub use config::{ConvBlock, NetworkConfig, TemporalPooling, TsPlacement, FRAME_MERGE};
pub use conv::{conv_backward, conv_forward, ConvGeom};
pub use loss::{argmax, cross_entropy, fuse_streams, softmax, LossBreakdown};
pub use model::{is_weight, ClipPass, ForwardPass, LossWeights, Network};
