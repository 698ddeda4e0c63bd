use std::fmt;
use std::str::FromStr;

use crate::autodiff::{Graph, Tensor, Var};
use crate::sampling::SeededRng;

use super::NetError;

/// Standard deviation of the zero-mean Gaussian weight initialization.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(NetError::Checkpoint(format!("unknown activation `{other}`"))),
        }
    }
}

/// Fully connected layer computing `act(x · W + b)` with `W: in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self, NetError> {
        if layers.is_empty() {
            return Err(NetError::NoLayers);
        }
        for (i, layer) in layers.iter().enumerate() {
            let ws = layer.weight.shape();
            if ws.len() != 2 || layer.bias.shape() != [1, ws[1]] {
                return Err(NetError::LayerShape {
                    layer: i,
                    weight: ws.to_vec(),
                    bias: layer.bias.shape().to_vec(),
                });
            }
            if i > 0 && layers[i - 1].output_dim() != ws[0] {
                return Err(NetError::DimMismatch {
                    expected: layers[i - 1].output_dim(),
                    got: ws[0],
                });
            }
        }
        Ok(Mlp { layers })
    }

    /// Layers `dims[0] → dims[1] → ... → dims[last]`; weights `N(0, std²)`, biases zero.
    pub fn random(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        std: f64,
        rng: &mut SeededRng,
    ) -> Result<Self, NetError> {
        if dims.len() < 2 {
            return Err(NetError::NoLayers);
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let data = (0..w[0] * w[1]).map(|_| std * rng.standard_normal()).collect();
                Layer {
                    weight: Tensor::new(vec![w[0], w[1]], data).expect("length matches shape"),
                    bias: Tensor::zeros(&[1, w[1]]),
                    activation: if i == last { output } else { hidden },
                }
            })
            .collect();
        Self::new(layers)
    }

    /// Embedding network `input → hidden → hidden → feature_dim` with relu.
    pub fn classifier(
        input_dim: usize,
        hidden: usize,
        feature_dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self, NetError> {
        Self::random(
            &[input_dim, hidden, hidden, feature_dim],
            Activation::Relu,
            Activation::Identity,
            INIT_STD,
            rng,
        )
    }

    /// Generator `latent → hidden → data_dim`.
    pub fn generator(latent_dim: usize, hidden: usize, data_dim: usize, rng: &mut SeededRng) -> Result<Self, NetError> {
        Self::random(
            &[latent_dim, hidden, data_dim],
            Activation::Relu,
            Activation::Identity,
            INIT_STD,
            rng,
        )
    }

    /// Discriminator `data_dim → hidden → 1` with a sigmoid output.
    pub fn discriminator(data_dim: usize, hidden: usize, rng: &mut SeededRng) -> Result<Self, NetError> {
        Self::random(
            &[data_dim, hidden, 1],
            Activation::Relu,
            Activation::Sigmoid,
            INIT_STD,
            rng,
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Places the parameters on `g`, tracked when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (w, b) = if trainable {
                    (g.param(l.weight.clone()), g.param(l.bias.clone()))
                } else {
                    (g.constant(l.weight.clone()), g.constant(l.bias.clone()))
                };
                (w, b, l.activation)
            })
            .collect();
        BoundMlp {
            layers,
            input_dim: self.input_dim(),
        }
    }

    /// Forward pass outside any training graph.
    pub fn forward_values(&self, batch: &Tensor) -> Result<Tensor, NetError> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, false);
        let x = g.constant(batch.clone());
        let y = net.forward(&mut g, x)?;
        Ok(g.value(y).clone())
    }
}

/// An [`Mlp`] whose parameters live on one graph.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var, Activation)>,
    input_dim: usize,
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NetError> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(NetError::DimMismatch {
                expected: self.input_dim,
                got: shape.get(1).copied().unwrap_or(0),
            });
        }
        let mut h = x;
        for &(w, b, act) in &self.layers {
            let z = g.matmul(h, w)?;
            let z = g.add(z, b)?;
            h = match act {
                Activation::Identity => z,
                Activation::Relu => g.relu(z)?,
                Activation::Sigmoid => g.sigmoid(z)?,
            };
        }
        Ok(h)
    }

    /// Parameter handles in the same order as [`Mlp::params`].
    pub fn params(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }
}
