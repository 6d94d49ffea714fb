//! Model configuration, parameters, and the full forward/backward pass.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ops::{self, Phase};
use super::tensor::{Scalar, Tensor};
use super::NnError;
use crate::rng::{self, Rng, Stream};

/// Architecture hyperparameters. The defaults are the published layer widths;
/// only `vocab_size` and `max_len` normally change between runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dropout_rate: f64,
    pub dense1: usize,
    pub dense2: usize,
    pub output_units: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, max_len: usize) -> Self {
        ModelConfig {
            vocab_size,
            embed_dim: 128,
            conv1_filters: 128,
            conv2_filters: 256,
            kernel_size: 5,
            pool_size: 2,
            dropout_rate: 0.3,
            dense1: 128,
            dense2: 64,
            output_units: 1,
            max_len,
        }
    }

    /// Spatial length after both conv+pool stages, or `None` if the input is
    /// too short for the stack.
    pub fn pooled_len(&self) -> Option<usize> {
        let (k, p) = (self.kernel_size, self.pool_size);
        if k == 0 || p == 0 {
            return None;
        }
        let l1 = (self.max_len + 1).checked_sub(k)?;
        let p1 = l1 / p;
        let l2 = (p1 + 1).checked_sub(k)?;
        let p2 = l2 / p;
        (p2 >= 1).then_some(p2)
    }

    /// Smallest `max_len` that the stack accepts.
    pub fn min_max_len(&self) -> usize {
        let mut probe = self.clone();
        probe.max_len = 1;
        while probe.pooled_len().is_none() && probe.max_len < 1 << 20 {
            probe.max_len += 1;
        }
        probe.max_len
    }

    pub fn flatten_dim(&self) -> Option<usize> {
        self.pooled_len().map(|t| t * self.conv2_filters)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("conv1_filters", self.conv1_filters),
            ("conv2_filters", self.conv2_filters),
            ("kernel_size", self.kernel_size),
            ("pool_size", self.pool_size),
            ("dense1", self.dense1),
            ("dense2", self.dense2),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NnError::Config(format!("{name} must be positive")));
            }
        }
        if self.output_units != 1 {
            return Err(NnError::Config(format!(
                "output_units must be 1 for the sigmoid head, got {}",
                self.output_units
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.pooled_len().is_none() {
            return Err(NnError::Config(format!(
                "max_len {} leaves no positions after both conv/pool stages (minimum {})",
                self.max_len,
                self.min_max_len()
            )));
        }
        Ok(())
    }

    /// `(name, shape)` for every parameter tensor, in canonical order.
    pub fn param_shapes(&self) -> Result<Vec<(&'static str, Vec<usize>)>, NnError> {
        self.validate()?;
        let flat = self.flatten_dim().expect("validated");
        let k = self.kernel_size;
        Ok(vec![
            (PARAM_NAMES[0], vec![self.vocab_size, self.embed_dim]),
            (PARAM_NAMES[1], vec![k, self.embed_dim, self.conv1_filters]),
            (PARAM_NAMES[2], vec![self.conv1_filters]),
            (PARAM_NAMES[3], vec![k, self.conv1_filters, self.conv2_filters]),
            (PARAM_NAMES[4], vec![self.conv2_filters]),
            (PARAM_NAMES[5], vec![flat, self.dense1]),
            (PARAM_NAMES[6], vec![self.dense1]),
            (PARAM_NAMES[7], vec![self.dense1, self.dense2]),
            (PARAM_NAMES[8], vec![self.dense2]),
            (PARAM_NAMES[9], vec![self.dense2, self.output_units]),
            (PARAM_NAMES[10], vec![self.output_units]),
        ])
    }
}

pub const PARAM_NAMES: [&str; 11] = [
    "embedding",
    "conv1.kernel",
    "conv1.bias",
    "conv2.kernel",
    "conv2.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
    "out.weight",
    "out.bias",
];

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub embedding: Tensor<T>,
    pub conv1_kernel: Tensor<T>,
    pub conv1_bias: Tensor<T>,
    pub conv2_kernel: Tensor<T>,
    pub conv2_bias: Tensor<T>,
    pub dense1_weight: Tensor<T>,
    pub dense1_bias: Tensor<T>,
    pub dense2_weight: Tensor<T>,
    pub dense2_bias: Tensor<T>,
    pub out_weight: Tensor<T>,
    pub out_bias: Tensor<T>,
}

impl<T: Scalar> Parameters<T> {
    pub fn zeros(config: &ModelConfig) -> Result<Self, NnError> {
        let tensors: Vec<Tensor<T>> = config
            .param_shapes()?
            .iter()
            .map(|(_, s)| Tensor::zeros(s))
            .collect();
        Self::from_tensors(tensors)
    }

    /// Builds from tensors in [`PARAM_NAMES`] order.
    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Result<Self, NnError> {
        let mut it = tensors.into_iter();
        let mut next = || {
            it.next().ok_or_else(|| NnError::Config(format!("expected {} tensors", PARAM_NAMES.len())))
        };
        Ok(Parameters {
            embedding: next()?,
            conv1_kernel: next()?,
            conv1_bias: next()?,
            conv2_kernel: next()?,
            conv2_bias: next()?,
            dense1_weight: next()?,
            dense1_bias: next()?,
            dense2_weight: next()?,
            dense2_bias: next()?,
            out_weight: next()?,
            out_bias: next()?,
        })
    }

    pub fn tensors(&self) -> [&Tensor<T>; 11] {
        [
            &self.embedding,
            &self.conv1_kernel,
            &self.conv1_bias,
            &self.conv2_kernel,
            &self.conv2_bias,
            &self.dense1_weight,
            &self.dense1_bias,
            &self.dense2_weight,
            &self.dense2_bias,
            &self.out_weight,
            &self.out_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 11] {
        [
            &mut self.embedding,
            &mut self.conv1_kernel,
            &mut self.conv1_bias,
            &mut self.conv2_kernel,
            &mut self.conv2_bias,
            &mut self.dense1_weight,
            &mut self.dense1_bias,
            &mut self.dense2_weight,
            &mut self.dense2_bias,
            &mut self.out_weight,
            &mut self.out_bias,
        ]
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &Tensor<T>)> {
        PARAM_NAMES.into_iter().zip(self.tensors())
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        Parameters::from_tensors(self.tensors().iter().map(|t| t.cast()).collect()).expect("same arity")
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Checks every tensor shape against `config`, naming the first mismatch.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<(), NnError> {
        for ((name, expected), t) in config.param_shapes()?.into_iter().zip(self.tensors()) {
            if t.shape() != expected.as_slice() {
                return Err(NnError::Shape {
                    op: "parameters",
                    detail: format!("{name}: expected {expected:?}, found {:?}", t.shape()),
                });
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights, zero biases, embedding uniform in ±0.05.
/// Values are drawn in `f64` so `f32` and `f64` parameters agree up to rounding.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Parameters<T>, NnError> {
    let shapes = config.param_shapes()?;
    let mut rng = rng::stream(seed, Stream::Init);
    let mut tensors = Vec::with_capacity(shapes.len());
    for (name, shape) in &shapes {
        let n: usize = shape.iter().product();
        let bound = if *name == "embedding" {
            Some(0.05)
        } else if name.ends_with(".bias") {
            None
        } else {
            let (fan_in, fan_out) = fans(shape);
            Some(glorot_bound(fan_in, fan_out))
        };
        let data = match bound {
            None => vec![T::zero(); n],
            Some(a) => (0..n).map(|_| T::of_f64(rng.random_range(-a..a))).collect(),
        };
        tensors.push(Tensor::from_vec(shape, data)?);
    }
    Parameters::from_tensors(tensors)
}

/// Fan-in/fan-out of a dense `[in, out]` or conv `[k, in, out]` weight.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n_in, n_out] => (*n_in, *n_out),
        [k, c_in, c_out] => (k * c_in, k * c_out),
        _ => unreachable!("weights are rank 2 or 3"),
    }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Evaluation disables dropout; training draws masks from the given generator.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    ids: Vec<u32>,
    embedded: Tensor<T>,
    conv1_pre: Tensor<T>,
    pool1_arg: Vec<usize>,
    drop1_mask: Option<Vec<T>>,
    conv2_in: Tensor<T>,
    conv2_pre: Tensor<T>,
    pool2_arg: Vec<usize>,
    pool2_shape: Vec<usize>,
    drop2_mask: Option<Vec<T>>,
    flat: Tensor<T>,
    dense1_pre: Tensor<T>,
    drop3_mask: Option<Vec<T>>,
    dense2_in: Tensor<T>,
    dense2_pre: Tensor<T>,
    out_in: Tensor<T>,
    logits: Vec<T>,
    probs: Vec<T>,
}

/// Runs the full stack on `ids` (`batch * config.max_len` row-major).
pub fn forward<T: Scalar>(
    params: &Parameters<T>,
    config: &ModelConfig,
    ids: &[u32],
    mode: Mode<'_>,
) -> Result<ForwardPass<T>, NnError> {
    let len = config.max_len;
    if len == 0 || !ids.len().is_multiple_of(len) || ids.is_empty() {
        return Err(NnError::Shape {
            op: "forward",
            detail: format!("{} ids is not a positive multiple of max_len {len}", ids.len()),
        });
    }
    let batch = ids.len() / len;
    let (phase, mut rng) = match mode {
        Mode::Eval => (Phase::Eval, None),
        Mode::Train(r) => (Phase::Train, Some(r)),
    };
    let rate = config.dropout_rate;
    let mut drop = |x: &Tensor<T>| -> (Tensor<T>, Option<Vec<T>>) {
        match rng.as_deref_mut() {
            Some(r) => ops::dropout(x, rate, phase, r),
            None => (x.clone(), None),
        }
    };

    let embedded = ops::embed_forward(ids, batch, len, &params.embedding)?;
    let conv1_pre = ops::conv1d_forward(&embedded, &params.conv1_kernel, &params.conv1_bias)?;
    let (pool1, pool1_arg) = ops::maxpool1d(&ops::relu(&conv1_pre), config.pool_size)?;
    let (conv2_in, drop1_mask) = drop(&pool1);

    let conv2_pre = ops::conv1d_forward(&conv2_in, &params.conv2_kernel, &params.conv2_bias)?;
    let (pool2, pool2_arg) = ops::maxpool1d(&ops::relu(&conv2_pre), config.pool_size)?;
    let pool2_shape = pool2.shape().to_vec();
    let (dropped2, drop2_mask) = drop(&pool2);
    let flat_dim = pool2_shape[1] * pool2_shape[2];
    let flat = dropped2.reshape(&[batch, flat_dim])?;

    let dense1_pre = ops::dense_forward(&flat, &params.dense1_weight, &params.dense1_bias)?;
    let (dense2_in, drop3_mask) = drop(&ops::relu(&dense1_pre));
    let dense2_pre = ops::dense_forward(&dense2_in, &params.dense2_weight, &params.dense2_bias)?;
    let out_in = ops::relu(&dense2_pre);
    let logits = ops::dense_forward(&out_in, &params.out_weight, &params.out_bias)?.into_data();
    let probs = logits.iter().map(|&z| ops::sigmoid(z)).collect();

    Ok(ForwardPass {
        ids: ids.to_vec(),
        embedded,
        conv1_pre,
        pool1_arg,
        drop1_mask,
        conv2_in,
        conv2_pre,
        pool2_arg,
        pool2_shape,
        drop2_mask,
        flat,
        dense1_pre,
        drop3_mask,
        dense2_in,
        dense2_pre,
        out_in,
        logits,
        probs,
    })
}

impl<T: Scalar> ForwardPass<T> {
    /// Sigmoid outputs, one per sample.
    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn batch(&self) -> usize {
        self.logits.len()
    }

    /// Flattened feature width fed to the first dense layer.
    pub fn flatten_dim(&self) -> usize {
        self.flat.shape()[1]
    }

    /// Hash of every relu sign and pool argmax. Two passes with equal
    /// signatures sit on the same linear piece of the network, so a finite
    /// difference between them is free of kink error.
    pub fn branch_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for t in [&self.conv1_pre, &self.conv2_pre, &self.dense1_pre, &self.dense2_pre] {
            for v in t.data() {
                (*v > T::zero()).hash(&mut h);
            }
        }
        self.pool1_arg.hash(&mut h);
        self.pool2_arg.hash(&mut h);
        h.finish()
    }

    /// Back-propagates `grad_logits` (dLoss/dlogit per sample), reusing the
    /// forward dropout masks. Returns gradients for every parameter.
    pub fn backward(&self, params: &Parameters<T>, grad_logits: &[T]) -> Result<Parameters<T>, NnError> {
        let batch = self.batch();
        if grad_logits.len() != batch {
            return Err(NnError::Shape {
                op: "backward",
                detail: format!("{} logit gradients for batch {batch}", grad_logits.len()),
            });
        }
        let mut g = Parameters {
            embedding: Tensor::zeros(params.embedding.shape()),
            conv1_kernel: Tensor::zeros(params.conv1_kernel.shape()),
            conv1_bias: Tensor::zeros(params.conv1_bias.shape()),
            conv2_kernel: Tensor::zeros(params.conv2_kernel.shape()),
            conv2_bias: Tensor::zeros(params.conv2_bias.shape()),
            dense1_weight: Tensor::zeros(params.dense1_weight.shape()),
            dense1_bias: Tensor::zeros(params.dense1_bias.shape()),
            dense2_weight: Tensor::zeros(params.dense2_weight.shape()),
            dense2_bias: Tensor::zeros(params.dense2_bias.shape()),
            out_weight: Tensor::zeros(params.out_weight.shape()),
            out_bias: Tensor::zeros(params.out_bias.shape()),
        };
        let d_logits = Tensor::from_vec(&[batch, 1], grad_logits.to_vec())?;
        let d_out_in = ops::dense_backward(&self.out_in, &params.out_weight, &d_logits, &mut g.out_weight, &mut g.out_bias);
        let d_dense2_pre = ops::relu_backward(&self.dense2_pre, &d_out_in);
        let d_dense2_in = ops::dense_backward(
            &self.dense2_in,
            &params.dense2_weight,
            &d_dense2_pre,
            &mut g.dense2_weight,
            &mut g.dense2_bias,
        );
        let d_relu1 = ops::dropout_backward(&d_dense2_in, self.drop3_mask.as_deref());
        let d_dense1_pre = ops::relu_backward(&self.dense1_pre, &d_relu1);
        let d_flat = ops::dense_backward(
            &self.flat,
            &params.dense1_weight,
            &d_dense1_pre,
            &mut g.dense1_weight,
            &mut g.dense1_bias,
        );
        let d_dropped2 = d_flat.reshape(&self.pool2_shape)?;
        let d_pool2 = ops::dropout_backward(&d_dropped2, self.drop2_mask.as_deref());
        let d_relu2 = ops::maxpool1d_backward(&d_pool2, &self.pool2_arg, self.conv2_pre.shape());
        let d_conv2_pre = ops::relu_backward(&self.conv2_pre, &d_relu2);
        let d_conv2_in = ops::conv1d_backward(
            &self.conv2_in,
            &params.conv2_kernel,
            &d_conv2_pre,
            &mut g.conv2_kernel,
            &mut g.conv2_bias,
        );
        let d_pool1 = ops::dropout_backward(&d_conv2_in, self.drop1_mask.as_deref());
        let d_relu1c = ops::maxpool1d_backward(&d_pool1, &self.pool1_arg, self.conv1_pre.shape());
        let d_conv1_pre = ops::relu_backward(&self.conv1_pre, &d_relu1c);
        let d_embedded = ops::conv1d_backward(
            &self.embedded,
            &params.conv1_kernel,
            &d_conv1_pre,
            &mut g.conv1_kernel,
            &mut g.conv1_bias,
        );
        ops::embed_backward(&self.ids, &d_embedded, &mut g.embedding);
        Ok(g)
    }
}

/// Eval-mode probabilities for a batch.
pub fn predict<T: Scalar>(params: &Parameters<T>, config: &ModelConfig, ids: &[u32]) -> Result<Vec<T>, NnError> {
    Ok(forward(params, config, ids, Mode::Eval)?.probs)
}
