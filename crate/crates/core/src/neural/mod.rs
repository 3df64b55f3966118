//! Reverse-mode autodiff, LSTM layers and the mask-estimation filter variants.

mod arrange;
mod checkpoint;
pub mod gradcheck;
mod lstm;
mod model;
mod tape;

pub use arrange::{
    arrange, arrange_batch, disarrange, feature_count, freq_index_feature, inverse_permutations,
    random_permutations, rearrange_between_layers, shuffle_sequence, unshuffle, ArrangedBatch, Arrangement,
};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use lstm::{lstm_backward, lstm_forward, LstmCache, LstmGrads};
pub use model::{
    build_model, ForwardPass, Model, ModelConfig, Param, Schedule, Shuffle, ShuffleScope, Variant,
};
pub use tape::{Gradients, Graph, Tensor, Var, MAGNITUDE_DELTA};
