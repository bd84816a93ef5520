//! AT-NN (convolutional token embedding + self-attention) and CNN-REG
//! regressors built on the autodiff tape, with checkpoint persistence.

mod checkpoint;
mod config;
mod layers;
mod model;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION};
pub use config::{Architecture, AtNnConfig, AttentionScale, CnnRegConfig, MhaConfig};
pub use layers::{attention_block, attention_weights, dense, multi_head_attention, HeadWeights, PositionalEncoding};
pub use model::{AtNnTrace, Forward, ForwardMode, Model, Param};
