//! Chunked spectral features and the fully connected mask estimator.

mod adam;
mod chunk;
mod mlp;
mod persist;
mod train;

pub use adam::{adam_step, AdamParams, AdamState};
pub use chunk::{chunk, dechunk, ChunkSpec, Dechunked};
pub use mlp::{sigmoid, Activation, Dense, ForwardCache, Gradients, MlpModel};
pub use persist::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use train::{estimate_mask, train, ChunkPairs, EpochRecord, TrainConfig, TrainHistory};
