//! Two-stream end-to-end visual speech classification.
//!
//! Raw mouth-region frames and their frame-to-frame differences each pass
//! through an RBM-pretrained bottleneck encoder. Bottleneck features with
//! appended delta and delta-delta coefficients feed one LSTM per stream; a
//! bidirectional LSTM fuses the two streams and a softmax layer labels every
//! frame. The whole stack is fine-tuned jointly with AdaDelta.

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod numeric;
pub mod rbm;
pub mod seqnet;
pub mod trainer;

pub use error::{Error, Result};
