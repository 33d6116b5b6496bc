//! Fully connected networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// MLP with hidden activations and a linear output layer.
///
/// Parameters are stored as `[w0, b0, w1, b1, ...]` with `w_l` of shape
/// `[in, out]` and `b_l` of shape `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<Tensor>,
}

/// An [`Mlp`]'s parameters registered on a tape.
pub struct BoundMlp {
    pub vars: Vec<Var>,
    activation: Activation,
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut StreamRng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Invalid(format!("bad layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-a..a))
                .collect();
            params.push(Tensor::new(vec![fan_in, fan_out], data)?);
            params.push(Tensor::zeros(&[fan_out]));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn from_params(
        sizes: &[usize],
        activation: Activation,
        params: Vec<Tensor>,
    ) -> Result<Self> {
        if params.len() != 2 * (sizes.len().saturating_sub(1)) {
            return Err(Error::shape(
                "mlp",
                &[2 * (sizes.len() - 1)],
                &[params.len()],
            ));
        }
        for (l, w) in sizes.windows(2).enumerate() {
            if params[2 * l].shape() != [w[0], w[1]] {
                return Err(Error::shape("mlp", &[w[0], w[1]], params[2 * l].shape()));
            }
            if params[2 * l + 1].shape() != [w[1]] {
                return Err(Error::shape("mlp", &[w[1]], params[2 * l + 1].shape()));
            }
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Output layer weight and bias, for pinning a head to fixed values.
    pub fn last_layer_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        let n = self.params.len();
        let (w, b) = self.params[n - 2..].split_at_mut(1);
        (&mut w[0], &mut b[0])
    }

    pub fn flatten(&self) -> Tensor {
        Tensor::vector(
            self.params
                .iter()
                .flat_map(|p| p.data().iter().copied())
                .collect(),
        )
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(
                "set_flat",
                &[self.num_params()],
                &[flat.len()],
            ));
        }
        let mut off = 0;
        for p in &mut self.params {
            let n = p.numel();
            p.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Registers the parameters as leaves (`trainable`) or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.clone())
                } else {
                    tape.constant(p.clone())
                }
            })
            .collect();
        BoundMlp {
            vars,
            activation: self.activation,
        }
    }

    /// Binds the parameters as slices of a flat parameter vector starting at `offset`.
    pub fn bind_flat(&self, tape: &mut Tape, flat: Var, offset: &mut usize) -> Result<BoundMlp> {
        let mut vars = Vec::with_capacity(self.params.len());
        for p in &self.params {
            let s = tape.slice(flat, *offset, p.numel())?;
            vars.push(tape.reshape(s, p.shape())?);
            *offset += p.numel();
        }
        Ok(BoundMlp {
            vars,
            activation: self.activation,
        })
    }

    /// Evaluates the network on a batch without keeping a tape around.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let y = bound.forward(&mut tape, xv)?;
        Ok(tape.value(y).clone())
    }
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let layers = self.vars.len() / 2;
        let mut h = x;
        for l in 0..layers {
            let z = tape.matmul(h, self.vars[2 * l])?;
            h = tape.add(z, self.vars[2 * l + 1])?;
            if l + 1 < layers {
                h = match self.activation {
                    Activation::Relu => tape.relu(h)?,
                    Activation::Tanh => tape.tanh(h)?,
                };
            }
        }
        Ok(h)
    }
}
