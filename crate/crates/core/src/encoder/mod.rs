//! GRU session encoder with a fully connected next-item decoder.

mod model;
mod ranking;
mod train;

pub use model::{EncoderModel, EncoderParam, EncoderShape, EncoderVars, ENCODER_PARAM_COUNT, ENCODER_PARAM_NAMES};
pub use ranking::{argmax_item, top_k, RankedList};
pub use train::{
    pretrain_diversity_embedding, supervised_loss_and_grads, supervised_step, train_supervised, PretrainConfig,
};
