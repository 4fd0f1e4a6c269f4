use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, View};
use super::tensor::Tensor;
use crate::error::{config_err, Result};

/// Serializable description of a layer; enough to rebuild the architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid-padding 2-D convolution with a square kernel over channel-last
    /// `[height, width, channels]` inputs.
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    Dense {
        outputs: usize,
        /// Multiplier on the initialization bound.
        #[serde(default = "one")]
        gain: f64,
    },
    Relu,
    Flatten,
    Softmax,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// `[out_channels, kernel * kernel * in_channels]`, patch order `(ki, kj, c)`
    pub weight: Tensor,
    /// `[out_channels]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[outputs, inputs]`
    pub weight: Tensor,
    /// `[outputs]`
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    Relu,
    Flatten,
    Softmax,
}

/// Per-layer values retained by a training forward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache {
    /// im2col buffers for every sample.
    Conv(Vec<f64>),
    /// Layer input.
    Dense(Vec<f64>),
    /// Layer output.
    Relu(Vec<f64>),
    Flatten,
    /// Layer output.
    Softmax(Vec<f64>),
}

fn uniform_init(rng: &mut impl Rng, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl Conv2d {
    pub(crate) fn new(
        input: &[usize],
        out_channels: usize,
        kernel: usize,
        stride: usize,
        relu_follows: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let &[in_h, in_w, in_channels] = input else {
            return Err(config_err(format!(
                "conv2d expects [height, width, channels] input, got {input:?}"
            )));
        };
        if kernel == 0 || stride == 0 || out_channels == 0 {
            return Err(config_err("conv2d kernel, stride and channels must be positive"));
        }
        if kernel > in_h || kernel > in_w {
            return Err(config_err(format!(
                "conv2d kernel {kernel} larger than input {in_h}x{in_w}"
            )));
        }
        let out_h = (in_h - kernel) / stride + 1;
        let out_w = (in_w - kernel) / stride + 1;
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        let bound = if relu_follows {
            (6.0 / fan_in as f64).sqrt()
        } else {
            (6.0 / (fan_in + fan_out) as f64).sqrt()
        };
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            in_h,
            in_w,
            out_h,
            out_w,
            weight: Tensor::new(
                vec![out_channels, fan_in],
                uniform_init(rng, out_channels * fan_in, bound),
            )?,
            bias: Tensor::zeros(&[out_channels]),
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Gathers the patches of one channel-last sample as rows of `cols`
    /// (`[positions, patch_len]`, patch order `(ki, kj, c)`).
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let r_len = self.patch_len();
        let span = self.kernel * self.in_channels;
        let step = self.stride * self.in_channels;
        let line = self.in_w * self.in_channels;
        for oy in 0..self.out_h {
            let block = &mut cols[oy * self.out_w * r_len..(oy + 1) * self.out_w * r_len];
            for ki in 0..self.kernel {
                let src = &x[(oy * self.stride + ki) * line..];
                for (ox, row) in block.chunks_exact_mut(r_len).enumerate() {
                    let s = &src[ox * step..ox * step + span];
                    let d = &mut row[ki * span..(ki + 1) * span];
                    d.iter_mut().zip(s).for_each(|(d, s)| *d = *s);
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let r_len = self.patch_len();
        let span = self.kernel * self.in_channels;
        let step = self.stride * self.in_channels;
        let line = self.in_w * self.in_channels;
        for oy in 0..self.out_h {
            let block = &cols[oy * self.out_w * r_len..(oy + 1) * self.out_w * r_len];
            for ki in 0..self.kernel {
                let dst = &mut dx[(oy * self.stride + ki) * line..];
                for (ox, row) in block.chunks_exact(r_len).enumerate() {
                    let d = &mut dst[ox * step..ox * step + span];
                    let s = &row[ki * span..(ki + 1) * span];
                    d.iter_mut().zip(s).for_each(|(d, s)| *d += *s);
                }
            }
        }
    }

    /// Patches tile the input without overlap, so the layer can read the
    /// input in place instead of building im2col buffers.
    fn tiles(&self) -> bool {
        self.kernel == self.stride
    }

    /// Weight as `[patch_len, out_channels]`.
    fn weight_t(&self) -> Vec<f64> {
        let (o, r) = (self.out_channels, self.patch_len());
        let w = self.weight.data();
        let mut wt = vec![0.0; r * o];
        for oc in 0..o {
            for j in 0..r {
                wt[j * o + oc] = w[oc * r + j];
            }
        }
        wt
    }

    /// Calls `f(position, ki, offset)` for every kernel row of every output
    /// position of one sample; `offset` indexes the row's first input value.
    fn for_each_tile_row(&self, mut f: impl FnMut(usize, usize, usize)) {
        let line = self.in_w * self.in_channels;
        let step = self.stride * self.in_channels;
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let pos = oy * self.out_w + ox;
                for ki in 0..self.kernel {
                    f(pos, ki, (oy * self.stride + ki) * line + ox * step);
                }
            }
        }
    }

    fn forward_tiled(&self, x: &[f64], n: usize) -> Vec<f64> {
        match self.out_channels {
            4 => self.forward_tiled_fixed::<4>(x, n),
            8 => self.forward_tiled_fixed::<8>(x, n),
            16 => self.forward_tiled_fixed::<16>(x, n),
            _ => self.forward_tiled_any(x, n),
        }
    }

    /// Same as [`forward_tiled_any`](Self::forward_tiled_any) with the channel
    /// count known at compile time, so the accumulator lives in registers.
    fn forward_tiled_fixed<const O: usize>(&self, x: &[f64], n: usize) -> Vec<f64> {
        let in_len = self.in_channels * self.in_h * self.in_w;
        let p = self.positions();
        let span = self.kernel * self.in_channels;
        let line = self.in_w * self.in_channels;
        let wt = self.weight_t();
        let bias: [f64; O] = self.bias.data().try_into().expect("bias width");
        let mut out = vec![0.0; n * p * O];
        for s in 0..n {
            let xs = &x[s * in_len..(s + 1) * in_len];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let mut acc = bias;
                    for ki in 0..self.kernel {
                        let at = (oy * self.stride + ki) * line + ox * span;
                        let wk = &wt[ki * span * O..(ki + 1) * span * O];
                        for (j, &v) in xs[at..at + span].iter().enumerate() {
                            let wr: &[f64; O] = wk[j * O..(j + 1) * O].try_into().expect("weight row");
                            for c in 0..O {
                                acc[c] += wr[c] * v;
                            }
                        }
                    }
                    let pos = s * p + oy * self.out_w + ox;
                    out[pos * O..(pos + 1) * O].copy_from_slice(&acc);
                }
            }
        }
        out
    }

    fn forward_tiled_any(&self, x: &[f64], n: usize) -> Vec<f64> {
        let in_len = self.in_channels * self.in_h * self.in_w;
        let (o, p) = (self.out_channels, self.positions());
        let span = self.kernel * self.in_channels;
        let wt = self.weight_t();
        let mut out = vec![0.0; n * p * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        for s in 0..n {
            let xs = &x[s * in_len..(s + 1) * in_len];
            let ys = &mut out[s * p * o..(s + 1) * p * o];
            self.for_each_tile_row(|pos, ki, at| {
                let acc = &mut ys[pos * o..(pos + 1) * o];
                let wk = &wt[ki * span * o..(ki + 1) * span * o];
                for (&v, wr) in xs[at..at + span].iter().zip(wk.chunks_exact(o)) {
                    acc.iter_mut().zip(wr).for_each(|(a, w)| *a += w * v);
                }
            });
        }
        out
    }

    fn forward(&self, x: &[f64], n: usize, keep: bool) -> (Vec<f64>, Option<LayerCache>) {
        // Direct tiling wins for inference; training keeps the im2col columns,
        // whose gemm backward is cheaper than the tiled one.
        if self.tiles() && !keep {
            return (self.forward_tiled(x, n), None);
        }
        let in_len = self.in_channels * self.in_h * self.in_w;
        let r = self.patch_len();
        let p = self.positions();
        let mut cols = vec![0.0; n * p * r];
        for s in 0..n {
            self.im2col(&x[s * in_len..(s + 1) * in_len], &mut cols[s * p * r..(s + 1) * p * r]);
        }
        let o = self.out_channels;
        let mut out = vec![0.0; n * p * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.bias.data());
        }
        // out [N*P, O] = cols [N*P, R] . W^T [R, O]
        gemm(
            n * p,
            r,
            o,
            View::rows(&cols, r),
            View::transposed(self.weight.data(), r),
            1.0,
            &mut out,
        );
        (out, keep.then_some(LayerCache::Conv(cols)))
    }

    fn backward(
        &self,
        cols: &[f64],
        dy: &[f64],
        n: usize,
        grads: &mut [Tensor],
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let r = self.patch_len();
        let p = self.positions();
        let o = self.out_channels;
        let (gw, gb) = grads.split_at_mut(1);
        // dW [O, R] += dy^T [O, N*P] . cols [N*P, R]
        gemm(
            o,
            n * p,
            r,
            View::transposed(dy, o),
            View::rows(cols, r),
            1.0,
            gw[0].data_mut(),
        );
        let gb = gb[0].data_mut();
        for row in dy.chunks(o) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        need_dx.then(|| {
            let in_len = self.in_channels * self.in_h * self.in_w;
            // dcols [N*P, R] = dy [N*P, O] . W [O, R]
            let mut dcols = vec![0.0; n * p * r];
            gemm(
                n * p,
                o,
                r,
                View::rows(dy, o),
                View::rows(self.weight.data(), r),
                0.0,
                &mut dcols,
            );
            let mut dx = vec![0.0; n * in_len];
            for s in 0..n {
                self.col2im(
                    &dcols[s * p * r..(s + 1) * p * r],
                    &mut dx[s * in_len..(s + 1) * in_len],
                );
            }
            dx
        })
    }
}

impl Dense {
    pub(crate) fn new(
        input: &[usize],
        outputs: usize,
        gain: f64,
        relu_follows: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let &[inputs] = input else {
            return Err(config_err(format!(
                "dense expects a flat input, got {input:?} (add flatten)"
            )));
        };
        if outputs == 0 || inputs == 0 {
            return Err(config_err("dense layer needs positive sizes"));
        }
        let bound = gain
            * if relu_follows {
                (6.0 / inputs as f64).sqrt()
            } else {
                (6.0 / (inputs + outputs) as f64).sqrt()
            };
        let weight = if bound > 0.0 {
            uniform_init(rng, outputs * inputs, bound)
        } else {
            vec![0.0; outputs * inputs]
        };
        Ok(Self {
            inputs,
            outputs,
            weight: Tensor::new(vec![outputs, inputs], weight)?,
            bias: Tensor::zeros(&[outputs]),
        })
    }

    fn forward(&self, x: &[f64], n: usize, keep: bool) -> (Vec<f64>, Option<LayerCache>) {
        let mut out = vec![0.0; n * self.outputs];
        for row in out.chunks_mut(self.outputs) {
            row.copy_from_slice(self.bias.data());
        }
        gemm(
            n,
            self.inputs,
            self.outputs,
            View::rows(x, self.inputs),
            View::transposed(self.weight.data(), self.inputs),
            1.0,
            &mut out,
        );
        (out, keep.then(|| LayerCache::Dense(x.to_vec())))
    }

    fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        n: usize,
        grads: &mut [Tensor],
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        let (gw, gb) = grads.split_at_mut(1);
        gemm(
            self.outputs,
            n,
            self.inputs,
            View::transposed(dy, self.outputs),
            View::rows(x, self.inputs),
            1.0,
            gw[0].data_mut(),
        );
        let gb = gb[0].data_mut();
        for row in dy.chunks(self.outputs) {
            gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        need_dx.then(|| {
            let mut dx = vec![0.0; n * self.inputs];
            gemm(
                n,
                self.outputs,
                self.inputs,
                View::rows(dy, self.outputs),
                View::rows(self.weight.data(), self.inputs),
                0.0,
                &mut dx,
            );
            dx
        })
    }
}

pub(crate) fn softmax_rows(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = x.to_vec();
    for row in out.chunks_mut(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

impl Layer {
    /// Parameter tensors owned by this layer, weight first.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Softmax => "softmax",
        }
    }

    /// `width` is the per-sample size of this layer's output.
    pub(crate) fn forward(
        &self,
        x: &[f64],
        n: usize,
        width: usize,
        keep: bool,
    ) -> (Vec<f64>, Option<LayerCache>) {
        match self {
            Layer::Conv2d(c) => c.forward(x, n, keep),
            Layer::Dense(d) => d.forward(x, n, keep),
            Layer::Relu => {
                let out: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
                let cache = keep.then(|| LayerCache::Relu(out.clone()));
                (out, cache)
            }
            Layer::Flatten => (x.to_vec(), keep.then_some(LayerCache::Flatten)),
            Layer::Softmax => {
                let out = softmax_rows(x, width);
                let cache = keep.then(|| LayerCache::Softmax(out.clone()));
                (out, cache)
            }
        }
    }

    /// Accumulates parameter gradients into `grads` (this layer's slice) and
    /// returns the gradient with respect to the layer input when requested.
    pub(crate) fn backward(
        &self,
        cache: &LayerCache,
        dy: Vec<f64>,
        n: usize,
        width: usize,
        grads: &mut [Tensor],
        need_dx: bool,
    ) -> Option<Vec<f64>> {
        match (self, cache) {
            (Layer::Conv2d(c), LayerCache::Conv(cols)) => c.backward(cols, &dy, n, grads, need_dx),
            (Layer::Dense(d), LayerCache::Dense(x)) => d.backward(x, &dy, n, grads, need_dx),
            (Layer::Relu, LayerCache::Relu(out)) => Some(
                dy.iter()
                    .zip(out)
                    .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                    .collect(),
            ),
            (Layer::Flatten, LayerCache::Flatten) => Some(dy),
            (Layer::Softmax, LayerCache::Softmax(out)) => {
                let mut dx = dy;
                for (g, y) in dx.chunks_mut(width).zip(out.chunks(width)) {
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    g.iter_mut().zip(y).for_each(|(gi, yi)| *gi = yi * (*gi - dot));
                }
                Some(dx)
            }
            _ => unreachable!("layer cache does not match layer kind"),
        }
    }
}
