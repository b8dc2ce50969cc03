//! Joint coding-modulation (JCM) for digital semantic communication.
//!
//! Source vectors are mapped by a learned encoder to per-position categorical
//! distributions over constellation symbols, sampled with the Gumbel-Max
//! trick, sent over an AWGN channel, and decoded into a class posterior and a
//! source reconstruction. Training minimizes cross-entropy plus λ-weighted
//! reconstruction error with Gumbel-Softmax gradients.
//!
//! Numeric modules are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.

pub mod autodiff;
pub mod baselines;
pub mod channel;
pub mod checks;
pub mod constellation;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod loss;
pub mod gumbel;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod transition;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = tensor::Matrix<f64>;
pub type Matrix32 = tensor::Matrix<f32>;
pub type Constellation64 = constellation::Constellation<f64>;
pub type ComplexSequence64 = constellation::ComplexSequence<f64>;
pub type TransitionPmf64 = transition::TransitionPmf<f64>;
pub type ParamStore64 = autodiff::ParamStore<f64>;
pub type ParamStore32 = autodiff::ParamStore<f32>;
pub type JcmModel64 = pipeline::JcmModel<f64>;
pub type JcmModel32 = pipeline::JcmModel<f32>;
