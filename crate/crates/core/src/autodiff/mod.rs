//! Minimal reverse-mode differentiation for desk-scale perceptrons, with the
//! Adam optimizer and a cosine learning-rate schedule.

mod mlp;
mod params;
mod schedule;
mod tape;

pub use mlp::{mlp_forward, Activation, Head, Mlp, MlpSpec};
pub use params::{AdamConfig, Param, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use params::Reader;
pub use schedule::{cosine_lr, CosineSchedule};
pub use tape::{distance_weights, power_normalize_value, Tape, Var};

#[cfg(test)]
mod tests;
