//! The augmented pointer network: a reverse-mode tape, a one-layer GRU
//! encoder, an attention GRU decoder pointing into the augmented question,
//! Adagrad training, and constrained greedy decoding.

mod model;
mod tape;

pub use model::{
    augment, forward, grad_check, loss_batch, predict, train, AugmentedQuestion, GruParams,
    ModelConfig, PtrNetError, TrainLog, Vocab, MODEL_FILE_VERSION,
};
pub use tape::{NodeId, ShapeMismatch, Tape};
