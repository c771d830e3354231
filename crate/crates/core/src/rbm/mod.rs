//! Restricted Boltzmann machines and greedy encoder pretraining.

mod params;
mod stack;

pub use params::{cd1_update, Cd1Settings, RbmKind, RbmParams, INIT_WEIGHT_STD};
pub use stack::{layer_kinds, pretrain_stack, EncoderStack, PretrainConfig, PretrainRecord};
