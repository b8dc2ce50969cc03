use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// Output interpretation of the last layer. Both are affine; the tag tells
/// consumers whether to apply a softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Logits,
    Linear,
}

/// Fully connected stack: `widths[0]` inputs, `widths.last()` outputs,
/// `activations[l]` applied after hidden layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub head: Head,
}

impl MlpSpec {
    /// ReLU hidden layers between `input` and `output`.
    pub fn relu(input: usize, hidden: &[usize], output: usize, head: Head) -> Self {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self { widths, activations: vec![Activation::Relu; hidden.len()], head }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Shape(format!("MLP needs >= 1 layer of positive widths, got {:?}", self.widths)));
        }
        if self.activations.len() != self.widths.len() - 2 {
            return Err(Error::Shape("one activation per hidden layer".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// An [`MlpSpec`] bound to a parameter-name prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub prefix: String,
    pub spec: MlpSpec,
}

impl Mlp {
    pub fn new(prefix: impl Into<String>, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { prefix: prefix.into(), spec })
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.w", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.b", self.prefix)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<S: Scalar>(&self, store: &mut ParamStore<S>, rng: &mut Rng) {
        for (l, w) in self.spec.widths.windows(2).enumerate() {
            store.insert_glorot(self.weight_name(l), w[0], w[1], rng);
            store.insert(self.bias_name(l), Matrix::zeros(1, w[1]));
        }
    }

    pub fn owns(&self, name: &str) -> bool {
        name.strip_prefix(self.prefix.as_str()).is_some_and(|rest| rest.starts_with('.'))
    }

    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, store: &ParamStore<S>, input: Var) -> Result<Var> {
        let width = tape.value(input).cols();
        if width != self.spec.input_width() {
            return Err(Error::Shape(format!("`{}` expects {} inputs, got {width}", self.prefix, self.spec.input_width())));
        }
        let mut h = input;
        for l in 0..self.spec.layers() {
            let w = tape.param(store, &self.weight_name(l))?;
            let b = tape.param(store, &self.bias_name(l))?;
            let z = tape.matmul(h, w)?;
            h = tape.add_bias(z, b)?;
            if let Some(act) = self.spec.activations.get(l) {
                h = match act {
                    Activation::Relu => tape.relu(h),
                    Activation::Identity => h,
                };
            }
        }
        Ok(h)
    }
}

/// Runs `mlp` on `input` and returns the output together with the tape.
pub fn mlp_forward<S: Scalar>(store: &ParamStore<S>, mlp: &Mlp, input: &Matrix<S>) -> Result<(Matrix<S>, Tape<S>, Var)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let out = mlp.forward(&mut tape, store, x)?;
    Ok((tape.value(out).clone(), tape, out))
}
