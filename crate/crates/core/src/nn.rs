//! Multilayer perceptrons on the tape: conditional generators and critics.
//!
//! A [`GeneratorNet`] maps a latent draw z concatenated with a conditioning
//! value y to a parameter draw, giving samples of the approximate posterior
//! by pushforward. A [`CriticNet`] scores (theta, y) pairs in (0,1) for
//! adversarial training. Weights live outside any tape and are bound to a
//! fresh tape per forward pass.

use crate::autodiff::{AdError, Tape, Var};
use crate::tensor::Tensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

/// Slope used by [`Activation::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(&self, x: &Var) -> Result<Var, AdError> {
        match self {
            Activation::Relu => x.relu(),
            Activation::LeakyRelu => x.leaky_relu(LEAKY_SLOPE),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => x.sigmoid(),
        }
    }
}

/// Transform applied to the last (linear) layer's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    /// Unbounded output.
    Identity,
    /// lo + (hi - lo) * sigmoid(x), componentwise: output constrained to an
    /// axis-aligned box.
    SigmoidBox { lo: Vec<f64>, hi: Vec<f64> },
    /// scale * x + shift, componentwise.
    Affine { scale: Vec<f64>, shift: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentFamily {
    StandardNormal,
    /// Uniform on (-1, 1) per component.
    Uniform,
}

/// Distribution of the latent input z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub dim: usize,
    pub family: LatentFamily,
}

impl LatentSpec {
    pub fn standard_normal(dim: usize) -> Self {
        LatentSpec { dim, family: LatentFamily::StandardNormal }
    }

    /// Draws an m x dim matrix of latents. Fixed seeds give bitwise
    /// identical draws.
    pub fn sample(&self, m: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..m * self.dim)
            .map(|_| match self.family {
                LatentFamily::StandardNormal => rng.sample(StandardNormal),
                LatentFamily::Uniform => rng.random_range(-1.0..1.0),
            })
            .collect();
        Tensor::matrix(m, self.dim, data)
    }
}

/// Fully connected feed-forward architecture. Hidden layer i has
/// `hidden[i]` units and activation `activations[i]`; the output layer is
/// linear followed by `output_transform`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MLPArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activations: Vec<Activation>,
    pub output_dim: usize,
    pub output_transform: OutputTransform,
}

impl MLPArchitecture {
    /// Architecture with the same activation on every hidden layer.
    pub fn uniform(
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
        output_dim: usize,
        output_transform: OutputTransform,
    ) -> Self {
        MLPArchitecture {
            input_dim,
            hidden: hidden.to_vec(),
            activations: vec![activation; hidden.len()],
            output_dim,
            output_transform,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(NnError::InvalidArchitecture("zero input or output dimension".into()));
        }
        if self.hidden.len() != self.activations.len() {
            return Err(NnError::InvalidArchitecture(format!(
                "{} hidden layers but {} activations",
                self.hidden.len(),
                self.activations.len()
            )));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(NnError::InvalidArchitecture("zero-width hidden layer".into()));
        }
        match &self.output_transform {
            OutputTransform::Identity => {}
            OutputTransform::SigmoidBox { lo, hi } => {
                if lo.len() != self.output_dim || hi.len() != self.output_dim {
                    return Err(NnError::InvalidArchitecture(
                        "sigmoid box bounds must match output dimension".into(),
                    ));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
                    return Err(NnError::InvalidArchitecture(
                        "sigmoid box requires finite lo < hi".into(),
                    ));
                }
            }
            OutputTransform::Affine { scale, shift } => {
                if scale.len() != self.output_dim || shift.len() != self.output_dim {
                    return Err(NnError::InvalidArchitecture(
                        "affine transform must match output dimension".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// (fan_in, fan_out) of every weight matrix, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// One layer's parameters: weights (fan_in x fan_out) and bias (fan_out).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Tensor,
    pub b: Tensor,
}

/// An architecture together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNet {
    pub arch: MLPArchitecture,
    pub layers: Vec<Layer>,
}

impl MlpNet {
    /// Glorot-uniform initialization: weights drawn from
    /// U(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))), biases zero.
    pub fn init(arch: MLPArchitecture, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w: Vec<f64> =
                    (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
                Layer {
                    w: Tensor::matrix(fan_in, fan_out, w),
                    b: Tensor::new(vec![fan_out], vec![0.0; fan_out]),
                }
            })
            .collect();
        Ok(MlpNet { arch, layers })
    }

    /// Net with all weights and biases zero. Mostly useful in tests.
    pub fn zeros(arch: MLPArchitecture) -> Result<Self, NnError> {
        arch.validate()?;
        let layers = arch
            .layer_dims()
            .iter()
            .map(|&(fan_in, fan_out)| Layer {
                w: Tensor::zeros(&[fan_in, fan_out]),
                b: Tensor::zeros(&[fan_out]),
            })
            .collect();
        Ok(MlpNet { arch, layers })
    }

    /// Parameter tensors in update order: layer 0 weights, layer 0 bias,
    /// layer 1 weights, ... This order is a stable part of the checkpoint
    /// format.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Binds the parameters to `tape` as gradient-enabled leaves.
    pub fn bind(&self, tape: &Tape) -> BoundMlp {
        let vars = self
            .layers
            .iter()
            .map(|l| (tape.param(l.w.clone()), tape.param(l.b.clone())))
            .collect();
        BoundMlp { arch: self.arch.clone(), vars }
    }
}

/// Parameters of one net bound to a tape.
pub struct BoundMlp {
    arch: MLPArchitecture,
    vars: Vec<(Var, Var)>,
}

impl BoundMlp {
    /// Parameter vars in the same order as [`MlpNet::tensors`].
    pub fn param_vars(&self) -> Vec<Var> {
        self.vars.iter().flat_map(|(w, b)| [w.clone(), b.clone()]).collect()
    }

    /// Forward pass over a batch of input rows (n x input_dim), returning
    /// n x output_dim with the output transform applied.
    pub fn forward(&self, x: &Var) -> Result<Var, AdError> {
        let n = x.shape()[0];
        let mut h = x.clone();
        for (i, (w, b)) in self.vars.iter().enumerate() {
            let cols = w.shape()[1];
            h = h.matmul(w)?.add(&b.broadcast_to(&[n, cols])?)?;
            if i < self.arch.activations.len() {
                h = self.arch.activations[i].apply(&h)?;
            }
        }
        let tape = h.tape().clone();
        let p = self.arch.output_dim;
        match &self.arch.output_transform {
            OutputTransform::Identity => Ok(h),
            OutputTransform::SigmoidBox { lo, hi } => {
                let lo_row = tape.constant(Tensor::new(vec![p], lo.clone())).broadcast_to(&[n, p])?;
                let span: Vec<f64> = lo.iter().zip(hi).map(|(l, h)| h - l).collect();
                let span_row =
                    tape.constant(Tensor::new(vec![p], span)).broadcast_to(&[n, p])?;
                h.sigmoid()?.mul(&span_row)?.add(&lo_row)
            }
            OutputTransform::Affine { scale, shift } => {
                let scale_row =
                    tape.constant(Tensor::new(vec![p], scale.clone())).broadcast_to(&[n, p])?;
                let shift_row =
                    tape.constant(Tensor::new(vec![p], shift.clone())).broadcast_to(&[n, p])?;
                h.mul(&scale_row)?.add(&shift_row)
            }
        }
    }
}

/// Conditional generator g(z, y): latent and conditioning value in,
/// parameter draw out.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorNet {
    pub mlp: MlpNet,
    pub latent: LatentSpec,
    pub data_dim: usize,
}

impl GeneratorNet {
    pub fn new(mlp: MlpNet, latent: LatentSpec, data_dim: usize) -> Result<Self, NnError> {
        if latent.dim == 0 {
            return Err(NnError::InvalidArchitecture("latent dimension must be positive".into()));
        }
        if mlp.arch.input_dim != latent.dim + data_dim {
            return Err(NnError::InvalidArchitecture(format!(
                "input dim {} != latent dim {} + data dim {}",
                mlp.arch.input_dim, latent.dim, data_dim
            )));
        }
        Ok(GeneratorNet { mlp, latent, data_dim })
    }

    /// Glorot-initialized generator.
    pub fn init(
        latent: LatentSpec,
        data_dim: usize,
        hidden: &[usize],
        activation: Activation,
        output_dim: usize,
        output_transform: OutputTransform,
        seed: u64,
    ) -> Result<Self, NnError> {
        let arch = MLPArchitecture::uniform(
            latent.dim + data_dim,
            hidden,
            activation,
            output_dim,
            output_transform,
        );
        Ok(GeneratorNet { mlp: MlpNet::init(arch, seed)?, latent, data_dim })
    }

    pub fn parameter_dim(&self) -> usize {
        self.mlp.arch.output_dim
    }

    pub fn bind(&self, tape: &Tape) -> BoundGenerator {
        BoundGenerator {
            mlp: self.mlp.bind(tape),
            latent: self.latent.clone(),
            data_dim: self.data_dim,
        }
    }

    /// Draws m approximate-posterior samples for conditioning value `y`,
    /// evaluating the net off-tape. Bitwise deterministic in `seed`.
    pub fn sample_posterior(&self, y: &[f64], m: usize, seed: u64) -> Result<Tensor, NnError> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let out = bound.sample(&tape, y, m, seed)?;
        Ok(out.value())
    }
}

/// Generator parameters bound to a tape.
pub struct BoundGenerator {
    pub mlp: BoundMlp,
    latent: LatentSpec,
    data_dim: usize,
}

impl BoundGenerator {
    pub fn param_vars(&self) -> Vec<Var> {
        self.mlp.param_vars()
    }

    /// m pushforward draws conditioned on `y`, on the tape: gradients flow
    /// back into the generator weights (reparametrization).
    pub fn sample(&self, tape: &Tape, y: &[f64], m: usize, seed: u64) -> Result<Var, NnError> {
        if y.len() != self.data_dim {
            return Err(NnError::InvalidArchitecture(format!(
                "conditioning value has length {}, expected {}",
                y.len(),
                self.data_dim
            )));
        }
        let z = tape.constant(self.latent.sample(m, seed));
        let input = if self.data_dim == 0 {
            z
        } else {
            let y_rows =
                tape.constant(Tensor::new(vec![self.data_dim], y.to_vec())).broadcast_to(&[m, self.data_dim])?;
            z.concat(&y_rows, 1)?
        };
        Ok(self.mlp.forward(&input)?)
    }
}

/// Critic c(theta, y) for adversarial training; outputs lie in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    pub mlp: MlpNet,
}

impl CriticNet {
    pub fn new(mlp: MlpNet) -> Result<Self, NnError> {
        if mlp.arch.output_dim != 1 {
            return Err(NnError::InvalidArchitecture("critic output must be scalar".into()));
        }
        if mlp.arch.output_transform != OutputTransform::Identity {
            return Err(NnError::InvalidArchitecture(
                "critic applies its own sigmoid; use the identity transform".into(),
            ));
        }
        Ok(CriticNet { mlp })
    }

    pub fn init(
        parameter_dim: usize,
        data_dim: usize,
        hidden: &[usize],
        activation: Activation,
        seed: u64,
    ) -> Result<Self, NnError> {
        let arch = MLPArchitecture::uniform(
            parameter_dim + data_dim,
            hidden,
            activation,
            1,
            OutputTransform::Identity,
        );
        CriticNet::new(MlpNet::init(arch, seed)?)
    }

    pub fn bind(&self, tape: &Tape) -> BoundCritic {
        BoundCritic { mlp: self.mlp.bind(tape) }
    }

    /// Critic value for a single pair, off-tape.
    pub fn score_value(&self, theta: &[f64], y: &[f64]) -> Result<f64, NnError> {
        let tape = Tape::new();
        let bound = self.bind(&tape);
        let mut row = theta.to_vec();
        row.extend_from_slice(y);
        let input = tape.constant(Tensor::matrix(1, row.len(), row));
        Ok(bound.score_rows(&input)?.item())
    }
}

/// Critic parameters bound to a tape.
pub struct BoundCritic {
    pub mlp: BoundMlp,
}

impl BoundCritic {
    pub fn param_vars(&self) -> Vec<Var> {
        self.mlp.param_vars()
    }

    /// Scores rows of [theta | y] (n x (p+d)), returning n x 1 values in
    /// (0, 1).
    pub fn score_rows(&self, rows: &Var) -> Result<Var, AdError> {
        self.mlp.forward(rows)?.sigmoid()
    }
}
