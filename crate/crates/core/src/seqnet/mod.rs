//! Differentiable sequence machinery: delta features, LSTM/BLSTM layers,
//! the per-frame softmax loss and whole-network backpropagation.

mod delta;
mod loss;
mod lstm;
mod network;

pub use delta::{append_deltas, append_deltas_backward, delta, delta_transpose, DeltaConfig};
pub use lstm::{
    blstm_backward, blstm_forward, lstm_backward, lstm_forward, BlstmCache, BlstmParams, LstmCache, LstmParams,
    FORGET_BIAS_INIT, INIT_RANGE,
};
pub use loss::{sequence_loss, sequence_loss_grad, LossWeighting};
pub use network::{
    argmax, clip_gradients, Architecture, ForwardCache, Gradients, Model, OutputLayer, ParamGroup, SequenceNetParams,
    Streams,
};
