use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::layers::{Conv2d, Dense, Layer, LayerCache, LayerSpec};
use super::tensor::Tensor;
use crate::error::{config_err, state_err, Error, Result};

/// Incrementally describes a network; shapes are inferred at [`build`](Self::build).
#[derive(Debug, Clone)]
pub struct NetworkBuilder {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
}

impl NetworkBuilder {
    /// `input_shape` excludes the batch dimension.
    pub fn new(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            specs: Vec::new(),
        }
    }

    pub fn conv2d(mut self, out_channels: usize, kernel: usize, stride: usize) -> Self {
        self.specs.push(LayerSpec::Conv2d {
            out_channels,
            kernel,
            stride,
        });
        self
    }

    pub fn dense(self, outputs: usize) -> Self {
        self.dense_with_gain(outputs, 1.0)
    }

    /// Dense layer whose initialization bound is scaled by `gain`.
    pub fn dense_with_gain(mut self, outputs: usize, gain: f64) -> Self {
        self.specs.push(LayerSpec::Dense { outputs, gain });
        self
    }

    pub fn relu(mut self) -> Self {
        self.specs.push(LayerSpec::Relu);
        self
    }

    pub fn flatten(mut self) -> Self {
        self.specs.push(LayerSpec::Flatten);
        self
    }

    pub fn softmax(mut self) -> Self {
        self.specs.push(LayerSpec::Softmax);
        self
    }

    pub fn build(self, rng: &mut impl Rng) -> Result<Network> {
        Network::from_specs(&self.input_shape, &self.specs, rng)
    }
}

/// Gradients for every parameter tensor of a network, in [`Network::params`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<Tensor>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Tensor>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.params.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(Tensor::is_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.params {
            t.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm.is_finite() {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    batch: usize,
    layers: Vec<LayerCache>,
}

/// Feed-forward stack of layers with its own Adam state.
///
/// Inputs carry a leading batch dimension. [`forward`](Self::forward) is pure;
/// [`forward_train`](Self::forward_train) retains activations for exactly one
/// subsequent [`backward`](Self::backward).
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    shapes: Vec<Vec<usize>>,
    adam: Adam,
    cache: Option<ForwardCache>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
    adam_step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

impl Network {
    fn from_specs(input_shape: &[usize], specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(config_err(format!("invalid input shape {input_shape:?}")));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (i, spec) in specs.iter().enumerate() {
            let relu_follows = matches!(specs.get(i + 1), Some(LayerSpec::Relu));
            let layer = match *spec {
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                } => {
                    let c = Conv2d::new(&shape, out_channels, kernel, stride, relu_follows, rng)?;
                    shape = vec![c.out_h, c.out_w, c.out_channels];
                    Layer::Conv2d(c)
                }
                LayerSpec::Dense { outputs, gain } => {
                    let d = Dense::new(&shape, outputs, gain, relu_follows, rng)?;
                    shape = vec![outputs];
                    Layer::Dense(d)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => {
                    shape = vec![shape.iter().product()];
                    Layer::Flatten
                }
                LayerSpec::Softmax => {
                    if shape.len() != 1 {
                        return Err(config_err("softmax expects a flat input"));
                    }
                    Layer::Softmax
                }
            };
            layers.push(layer);
            shapes.push(shape.clone());
        }
        let param_shapes: Vec<Vec<usize>> = layers
            .iter()
            .flat_map(|l| l.params().into_iter().map(|p| p.shape().to_vec()))
            .collect();
        Ok(Self {
            input_shape: input_shape.to_vec(),
            specs: specs.to_vec(),
            layers,
            shapes,
            adam: Adam::new(&param_shapes),
            cache: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map_or(&self.input_shape, |s| s.as_slice())
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.step_count()
    }

    /// Replace every parameter with the corresponding one of `other`.
    pub fn copy_params_from(&mut self, other: &Network) -> Result<()> {
        if self.specs != other.specs || self.input_shape != other.input_shape {
            return Err(config_err("cannot copy parameters between different architectures"));
        }
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        let shape = input.shape();
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(config_err(format!(
                "network expects [batch, {:?}], got {:?}",
                self.input_shape, shape
            )));
        }
        Ok(shape[0])
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<(Tensor, Vec<LayerCache>)> {
        let n = self.check_input(input)?;
        let mut x = input.data().to_vec();
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        for (layer, shape) in self.layers.iter().zip(&self.shapes) {
            let width = shape.iter().product();
            let (y, cache) = layer.forward(&x, n, width, keep);
            if let Some(c) = cache {
                caches.push(c);
            }
            x = y;
        }
        let mut out_shape = vec![n];
        out_shape.extend_from_slice(self.output_shape());
        Ok((Tensor::new(out_shape, x)?, caches))
    }

    /// Pure inference pass; parameters and caches are untouched.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false)?.0)
    }

    /// Forward pass that keeps activations for the next [`backward`](Self::backward).
    pub fn forward_train(&mut self, input: &Tensor) -> Result<Tensor> {
        let (out, layers) = self.run(input, true)?;
        self.cache = Some(ForwardCache {
            batch: input.batch(),
            layers,
        });
        Ok(out)
    }

    /// Backpropagates `loss_grad` (d loss / d output) through the cached pass.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Gradients> {
        self.backward_impl(loss_grad, false)
    }

    /// As [`backward`](Self::backward), also returning d loss / d input.
    pub fn backward_with_input(&mut self, loss_grad: &Tensor) -> Result<Gradients> {
        self.backward_impl(loss_grad, true)
    }

    fn backward_impl(&mut self, loss_grad: &Tensor, want_input: bool) -> Result<Gradients> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| state_err("backward called without a preceding forward_train"))?;
        let n = cache.batch;
        let mut expected = vec![n];
        expected.extend_from_slice(self.output_shape());
        if loss_grad.shape() != expected.as_slice() {
            return Err(config_err(format!(
                "loss gradient shape {:?} does not match output {:?}",
                loss_grad.shape(),
                expected
            )));
        }
        let mut params: Vec<Tensor> = self.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.params().len();
        }
        let mut dy = loss_grad.data().to_vec();
        let mut input_grad = None;
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let width = self.shapes[i].iter().product();
            let count = layer.params().len();
            let slot = &mut params[offsets[i]..offsets[i] + count];
            let need_dx = i > 0 || want_input;
            match layer.backward(lc, dy, n, width, slot, need_dx) {
                Some(dx) if i > 0 => dy = dx,
                Some(dx) => {
                    let mut shape = vec![n];
                    shape.extend_from_slice(&self.input_shape);
                    input_grad = Some(Tensor::new(shape, dx)?);
                    break;
                }
                None => break,
            }
        }
        Ok(Gradients {
            params,
            input: input_grad,
        })
    }

    /// One Adam update with the given learning rate.
    ///
    /// Non-finite gradients skip the update and return `false`.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<bool> {
        if grads.params.len() != self.adam.tensor_count() {
            return Err(config_err("gradient count does not match parameter count"));
        }
        for (g, p) in grads.params.iter().zip(self.params()) {
            if g.shape() != p.shape() {
                return Err(config_err(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        if !grads.is_finite() {
            log::warn!("non-finite gradient; skipping Adam update");
            return Ok(false);
        }
        let mut adam = std::mem::take(&mut self.adam);
        adam.step(self.params_mut(), grads, lr);
        self.adam = adam;
        Ok(true)
    }

    fn manifest(&self) -> Manifest {
        let mut tensors = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (j, p) in layer.params().into_iter().enumerate() {
                let role = if j == 0 { "weight" } else { "bias" };
                tensors.push(TensorEntry {
                    name: format!("layer{i}.{}.{role}", layer.name()),
                    shape: p.shape().to_vec(),
                });
            }
        }
        Manifest {
            format: "f64-le".into(),
            input_shape: self.input_shape.clone(),
            layers: self.specs.clone(),
            tensors,
            adam_step: self.adam.step_count(),
        }
    }

    /// Writes `<path>.bin` (little-endian f64 parameters) and `<path>.json` (shape manifest).
    pub fn save(&self, path: &Path) -> Result<()> {
        let (bin, json) = weight_paths(path);
        let mut bytes = Vec::with_capacity(self.param_count() * 8);
        for p in self.params() {
            for v in p.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(bin, bytes)?;
        fs::write(json, serde_json::to_string_pretty(&self.manifest())?)?;
        Ok(())
    }

    /// Loads parameters saved by [`save`](Self::save) into this network.
    pub fn load_params(&mut self, path: &Path) -> Result<()> {
        let (bin, json) = weight_paths(path);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(json)?)?;
        if manifest.layers != self.specs || manifest.input_shape != self.input_shape {
            return Err(config_err("checkpoint architecture does not match network"));
        }
        let bytes = fs::read(bin)?;
        if bytes.len() != self.param_count() * 8 {
            return Err(Error::Input(format!(
                "checkpoint holds {} bytes, expected {}",
                bytes.len(),
                self.param_count() * 8
            )));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        for p in self.params_mut() {
            for v in p.data_mut() {
                *v = values.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Rebuilds a network from a saved manifest and loads its parameters.
    pub fn load(path: &Path) -> Result<Self> {
        let (_, json) = weight_paths(path);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(json)?)?;
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut net = Self::from_specs(&manifest.input_shape, &manifest.layers, &mut rng)?;
        net.load_params(path)?;
        Ok(net)
    }
}

fn weight_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("bin"), path.with_extension("json"))
}
