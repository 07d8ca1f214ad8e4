//! Multilayer perceptron: rectifier on hidden layers, identity on the last.
//!
//! Inputs and features are stored one sample per column, so a layer maps
//! `X (in × N)` to `W·X + b·1ᵀ (out × N)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix, Trans};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    /// length `out`
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Layer {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Parameters of `Φ(·; θ)`. Also used for gradients and velocities, which
/// share the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(MlpParams {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("an MLP needs at least one layer".into()));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::dim(
                    "MlpParams::from_layers",
                    l.output_dim(),
                    l.bias.len(),
                ));
            }
            if k > 0 && layers[k - 1].output_dim() != l.input_dim() {
                return Err(Error::dim(
                    "MlpParams::from_layers",
                    layers[k - 1].output_dim(),
                    l.input_dim(),
                ));
            }
        }
        Ok(MlpParams { layers })
    }

    /// `[in₀, out₀, out₁, …]`
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].input_dim()];
        d.extend(self.layers.iter().map(Layer::output_dim));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::output_dim)
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn flat_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    pub fn flat_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(l.bias.as_slice());
        }
        out
    }

    /// Overwrites parameters from a vector produced by [`MlpParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(
                "MlpParams::assign_flat",
                self.num_params(),
                flat.len(),
            ));
        }
        let mut off = 0;
        for s in self.flat_slices_mut() {
            s.copy_from_slice(&flat[off..off + s.len()]);
            off += s.len();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flat_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.shape() == b.weight.shape() && a.bias.len() == b.bias.len())
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least two dims, got {dims:?}"
        )));
    }
    if dims.contains(&0) {
        return Err(Error::Config(format!(
            "MLP dims must be positive, got {dims:?}"
        )));
    }
    Ok(())
}

/// Uniform Glorot initialization, `±sqrt(6 / (fan_in + fan_out))`, zero
/// biases.
pub fn xavier_init(dims: &[usize], seed: u64) -> Result<MlpParams> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Layer {
                weight: Matrix::from_fn(fan_out, fan_in, |_, _| rng.gen_range(-limit..limit)),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpParams { layers })
}

/// Per-layer inputs and pre-activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn samples(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::cols)
    }

    /// Input of the final layer: the last hidden activations, or the raw
    /// input for a single-layer network.
    pub fn last_hidden(&self) -> &Matrix {
        self.inputs
            .last()
            .expect("a network has at least one layer")
    }
}

pub fn forward(params: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    if x.rows() != params.input_dim() {
        return Err(Error::dim("forward", params.input_dim(), x.rows()));
    }
    let n_layers = params.layers.len();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre_activations = Vec::with_capacity(n_layers);
    let mut current = x.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        let pre = affine(layer, &current)?;
        let post = if k + 1 < n_layers {
            relu(&pre)
        } else {
            pre.clone()
        };
        inputs.push(current);
        pre_activations.push(pre);
        current = post;
    }
    Ok((
        current,
        ForwardCache {
            inputs,
            pre_activations,
        },
    ))
}

/// Forward pass without retaining intermediates.
pub fn infer(params: &MlpParams, x: &Matrix) -> Result<Matrix> {
    if x.rows() != params.input_dim() {
        return Err(Error::dim("infer", params.input_dim(), x.rows()));
    }
    let n_layers = params.layers.len();
    let mut current = affine(&params.layers[0], x)?;
    for (k, layer) in params.layers.iter().enumerate().skip(1) {
        relu_in_place(&mut current);
        current = affine(layer, &current)?;
        debug_assert!(k < n_layers);
    }
    Ok(current)
}

fn affine(layer: &Layer, x: &Matrix) -> Result<Matrix> {
    let mut out = layer.weight.matmul(x)?;
    let n = out.cols();
    for (i, b) in layer.bias.iter().enumerate() {
        for v in &mut out.as_mut_slice()[i * n..(i + 1) * n] {
            *v += b;
        }
    }
    Ok(out)
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    relu_in_place(&mut out);
    out
}

fn relu_in_place(m: &mut Matrix) {
    for v in m.as_mut_slice() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
}

/// Gradients of `⟨grad_features, Φ(x; θ)⟩` with respect to every parameter,
/// together with the gradient with respect to the input.
pub fn backward_with_input(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_features: &Matrix,
) -> Result<(MlpParams, Matrix)> {
    backward_tapped(params, cache, grad_features, None)
}

/// Like [`backward_with_input`], with an extra gradient `grad_hidden`
/// injected at [`ForwardCache::last_hidden`], for objectives that also read
/// the activations feeding the final layer.
pub fn backward_tapped(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_features: &Matrix,
    grad_hidden: Option<&Matrix>,
) -> Result<(MlpParams, Matrix)> {
    let n_layers = params.layers.len();
    if cache.inputs.len() != n_layers {
        return Err(Error::dim("backward", n_layers, cache.inputs.len()));
    }
    let out_shape = (params.output_dim(), cache.samples());
    if grad_features.shape() != out_shape {
        return Err(Error::dim(
            "backward",
            format!("{out_shape:?}"),
            format!("{:?}", grad_features.shape()),
        ));
    }
    if let Some(g) = grad_hidden {
        if g.shape() != cache.last_hidden().shape() {
            return Err(Error::dim(
                "backward",
                format!("{:?}", cache.last_hidden().shape()),
                format!("{:?}", g.shape()),
            ));
        }
    }
    let mut grads = Vec::with_capacity(n_layers);
    let mut delta = grad_features.clone();
    for k in (0..n_layers).rev() {
        if k + 1 < n_layers {
            // rectifier: derivative 0 for pre-activations ≤ 0
            for (d, z) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(cache.pre_activations[k].as_slice())
            {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = &cache.inputs[k];
        let weight_grad = gemm(1.0, &delta, Trans::No, input, Trans::Yes)?;
        let n = delta.cols();
        let bias_grad = (0..delta.rows())
            .map(|i| delta.as_slice()[i * n..(i + 1) * n].iter().sum())
            .collect();
        let mut next = gemm(1.0, &params.layers[k].weight, Trans::Yes, &delta, Trans::No)?;
        if k + 1 == n_layers {
            if let Some(g) = grad_hidden {
                next = next.add(g)?;
            }
        }
        grads.push(Layer {
            weight: weight_grad,
            bias: bias_grad,
        });
        delta = next;
    }
    grads.reverse();
    Ok((MlpParams { layers: grads }, delta))
}

pub fn backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_features: &Matrix,
) -> Result<MlpParams> {
    Ok(backward_with_input(params, cache, grad_features)?.0)
}

/// SGD with Nesterov momentum and coupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity: MlpParams,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(params: &MlpParams, cfg: &SgdConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                cfg.momentum
            )));
        }
        if cfg.learning_rate < 0.0 || cfg.weight_decay < 0.0 {
            return Err(Error::Config(
                "learning rate and weight decay must be non-negative".into(),
            ));
        }
        Ok(OptimizerState {
            velocity: params.zeros_like(),
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        })
    }
}

/// `v ← μv − lr·(g + wd·θ)`, `θ ← θ + μv − lr·(g + wd·θ)`.
pub fn sgd_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut OptimizerState,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.velocity) {
        return Err(Error::dim(
            "sgd_step",
            format!("{:?}", params.dims()),
            format!("{:?} / {:?}", grads.dims(), state.velocity.dims()),
        ));
    }
    let (mu, lr, wd) = (state.momentum, state.learning_rate, state.weight_decay);
    let grad_slices = grads.flat_slices();
    let vel_slices = state.velocity.flat_slices_mut();
    for ((theta, g), v) in params
        .flat_slices_mut()
        .into_iter()
        .zip(grad_slices)
        .zip(vel_slices)
    {
        for ((t, gi), vi) in theta.iter_mut().zip(g).zip(v.iter_mut()) {
            let step = lr * (gi + wd * *t);
            *vi = mu * *vi - step;
            *t += mu * *vi - step;
        }
    }
    Ok(())
}

/// Learning rate after ten-fold decays at 50% and 75% of training.
pub fn step_decay_lr(base: f64, epoch: usize, total_epochs: usize) -> f64 {
    let mut lr = base;
    if 2 * epoch >= total_epochs {
        lr *= 0.1;
    }
    if 4 * epoch >= 3 * total_epochs {
        lr *= 0.1;
    }
    lr
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xavier_is_deterministic_with_zero_bias() {
        let a = xavier_init(&[10, 128, 128, 3], 7).unwrap();
        let b = xavier_init(&[10, 128, 128, 3], 7).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert!(a.layers.iter().all(|l| l.bias.iter().all(|&v| v == 0.0)));
        let c = xavier_init(&[10, 128, 128, 3], 8).unwrap();
        assert_ne!(a.flatten(), c.flatten());
    }

    #[test]
    fn xavier_variance_matches_glorot() {
        let p = xavier_init(&[128, 128], 3).unwrap();
        let w = p.layers[0].weight.as_slice();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 2.0 / 256.0;
        assert!(
            (var / target - 1.0).abs() < 0.2,
            "variance {var} vs {target}"
        );
    }

    #[test]
    fn invalid_dims() {
        assert!(xavier_init(&[3], 0).is_err());
        assert!(xavier_init(&[3, 0, 2], 0).is_err());
    }

    #[test]
    fn zero_params_give_zero_features() {
        let p = MlpParams::zeros(&[4, 6, 2]).unwrap();
        let x = Matrix::from_fn(4, 5, |i, j| (i + j) as f64 - 3.0);
        let (z, _) = forward(&p, &x).unwrap();
        assert_eq!(z, Matrix::zeros(2, 5));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let p = MlpParams::from_layers(vec![Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        }])
        .unwrap();
        let x = Matrix::from_fn(3, 4, |i, j| i as f64 - j as f64);
        assert_eq!(forward(&p, &x).unwrap().0, x);
        assert_eq!(infer(&p, &x).unwrap(), x);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = MlpParams::zeros(&[4, 2]).unwrap();
        assert!(forward(&p, &Matrix::zeros(3, 1)).is_err());
        let (_, cache) = forward(&p, &Matrix::zeros(4, 2)).unwrap();
        assert!(backward(&p, &cache, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn relu_blocks_gradient_at_non_positive_preactivations() {
        // hidden pre-activation is exactly 0 for the first sample and −1 for the second
        let p = MlpParams::from_layers(vec![
            Layer {
                weight: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
                bias: vec![0.0],
            },
            Layer {
                weight: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                bias: vec![0.0],
            },
        ])
        .unwrap();
        let x = Matrix::from_vec(1, 2, vec![0.0, -1.0]).unwrap();
        let (_, cache) = forward(&p, &x).unwrap();
        let (g, gx) =
            backward_with_input(&p, &cache, &Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap())
                .unwrap();
        assert_eq!(g.layers[0].weight.get(0, 0), 0.0);
        assert_eq!(g.layers[0].bias[0], 0.0);
        assert_eq!(gx.as_slice(), &[0.0, 0.0]);
        assert_eq!(g.layers[1].bias[0], 2.0);
    }

    #[test]
    fn plain_gradient_step_without_momentum() {
        let mut p = xavier_init(&[3, 2], 1).unwrap();
        let before = p.flatten();
        let mut g = p.zeros_like();
        g.assign_flat(&(0..8).map(|i| i as f64).collect::<Vec<_>>())
            .unwrap();
        let mut st = OptimizerState::new(
            &p,
            &SgdConfig {
                learning_rate: 0.5,
                momentum: 0.0,
                weight_decay: 0.0,
            },
        )
        .unwrap();
        sgd_step(&mut p, &g, &mut st).unwrap();
        let after = p.flatten();
        for i in 0..8 {
            assert_eq!(after[i], before[i] - 0.5 * i as f64);
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = xavier_init(&[3, 4, 2], 5).unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        let mut st = OptimizerState::new(
            &p,
            &SgdConfig {
                learning_rate: 0.1,
                momentum: 0.9,
                weight_decay: 0.0,
            },
        )
        .unwrap();
        sgd_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn momentum_out_of_range_rejected() {
        let p = MlpParams::zeros(&[2, 2]).unwrap();
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 1.0,
            weight_decay: 0.0,
        };
        assert!(OptimizerState::new(&p, &cfg).is_err());
    }

    #[test]
    fn schedule_decays_at_half_and_three_quarters() {
        let lrs: Vec<f64> = [0, 49, 50, 74, 75, 99]
            .iter()
            .map(|&e| step_decay_lr(0.01, e, 100))
            .collect();
        assert_eq!(lrs[0], 0.01);
        assert_eq!(lrs[1], 0.01);
        assert!((lrs[2] - 1e-3).abs() < 1e-18);
        assert!((lrs[3] - 1e-3).abs() < 1e-18);
        assert!((lrs[4] - 1e-4).abs() < 1e-18);
        assert!((lrs[5] - 1e-4).abs() < 1e-18);
    }
}
