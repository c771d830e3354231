//! Run configuration, checkpoint files and the command implementations
//! behind the `e2evsr` binary.

pub mod checkpoint;
mod commands;
mod config;

pub use commands::{
    cmd_eval, cmd_predict, cmd_pretrain, cmd_synth, cmd_train, encoder_file, evaluate_split, history_csv,
    pretrain_log_file, probabilities_csv, stream_frames, EvalReport, StreamKind, ACCURACY_FILE,
    CONFUSION_FILE, CONFUSION_NORMALIZED_FILE, HISTORY_FILE, MODEL_FILE, PROBABILITIES_FILE,
};
pub use config::{RunConfig, EFFECTIVE_CONFIG_FILE, KEYS};
