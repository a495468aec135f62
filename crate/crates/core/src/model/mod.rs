//! The autoencoder + branched graph-convolution regressor.

mod checkpoint;
mod config;
mod layers;
mod network;
mod params;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_load, checkpoint_save, checkpoint_to_string, Checkpoint, TensorRecord,
    FORMAT_VERSION,
};
pub use config::ModelConfig;
pub use layers::{build_normalized_adjacency, gcn_layer, Adjacency, GraphState};
pub use network::{
    batch_forward, composite_loss, composite_loss_breakdown, decoder_forward, encoder_forward, loss_and_gradient,
    model_backward, model_forward, predict_batch, project_to_nodes, BatchCache, EncoderCache, Example, Forward,
    LossBreakdown, SampleCache,
};
pub use params::{layer_widths, pair_index, Dense, GradientBundle, Head, ModelParams, UNIT_EDGE_RAW};
