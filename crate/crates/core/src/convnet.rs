//! A compact convolutional network trained from scratch: convolution, ReLU,
//! max pooling, a two-layer residual block, fully connected layers and a
//! softmax head, with mean cross-entropy loss, reverse-mode gradients and
//! Adam.
//!
//! Everything runs in `f64` on single-channel square inputs. The residual
//! block computes `y = relu(w2 * relu(w1 * x) + x)` with same-padded 3x3
//! convolutions and no biases, so it preserves the input shape.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{mix, rng_from};
use crate::tfr::TimeFrequencyMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        out_channels: usize,
        stride: usize,
    },
    Relu,
    MaxPool {
        window: usize,
    },
    Residual {
        channels: usize,
    },
    Flatten,
    Dense {
        width: usize,
    },
    SoftmaxHead {
        classes: usize,
    },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv {
                kernel,
                out_channels,
                stride,
            } => write!(
                f,
                "conv({kernel}x{kernel}, {out_channels}, stride {stride})"
            ),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::MaxPool { window } => write!(f, "maxpool({window})"),
            LayerSpec::Residual { channels } => write!(f, "residual_block({channels})"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Dense { width } => write!(f, "fully_connected({width})"),
            LayerSpec::SoftmaxHead { classes } => write!(f, "softmax_head({classes})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvNetArch {
    pub input_size: usize,
    pub stages: Vec<LayerSpec>,
}

impl ConvNetArch {
    /// conv(3x3, 8) - relu - maxpool(2) - residual(8) - maxpool(2) - flatten -
    /// fc(32) - relu - softmax_head(classes)
    pub fn default_for(classes: usize, input_size: usize) -> Self {
        ConvNetArch {
            input_size,
            stages: vec![
                LayerSpec::Conv {
                    kernel: 3,
                    out_channels: 8,
                    stride: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { window: 2 },
                LayerSpec::Residual { channels: 8 },
                LayerSpec::MaxPool { window: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { width: 32 },
                LayerSpec::Relu,
                LayerSpec::SoftmaxHead { classes },
            ],
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match self.stages.last() {
            Some(LayerSpec::SoftmaxHead { classes }) => Some(*classes),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Conv(ConvGeom, usize, usize),
    Relu,
    MaxPool {
        c: usize,
        in_h: usize,
        in_w: usize,
        win: usize,
    },
    Residual {
        geom: ConvGeom,
        w1: usize,
        w2: usize,
    },
    Flatten,
    Dense {
        inp: usize,
        out: usize,
        w: usize,
        b: usize,
    },
    SoftmaxHead {
        inp: usize,
        classes: usize,
        w: usize,
        b: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvGeom {
    in_c: usize,
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        in_h: usize,
        in_w: usize,
    ) -> Result<Self> {
        let pad = k / 2;
        if k == 0 || stride == 0 || in_h + 2 * pad < k || in_w + 2 * pad < k {
            return Err(Error::invalid(format!(
                "convolution {k}x{k} stride {stride} does not fit a {in_h}x{in_w} input"
            )));
        }
        Ok(ConvGeom {
            in_c,
            out_c,
            k,
            stride,
            pad,
            in_h,
            in_w,
            out_h: (in_h + 2 * pad - k) / stride + 1,
            out_w: (in_w + 2 * pad - k) / stride + 1,
        })
    }

    fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    /// Output positions whose input coordinate `o * stride + off - pad` lies
    /// inside `[0, in_len)`.
    fn valid(&self, off: usize, in_len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let shift = off as isize - self.pad as isize;
        let lo = if shift >= 0 {
            0
        } else {
            ((-shift) + s - 1) / s
        };
        let hi_excl = ((in_len as isize - 1 - shift) / s + 1).clamp(0, out_len as isize);
        (lo as usize, (hi_excl as usize).max(lo as usize))
    }

    fn forward(&self, input: &[f64], w: &[f64], bias: Option<&[f64]>, out: &mut [f64]) {
        let (ih, iw, oh, ow, k) = (self.in_h, self.in_w, self.out_h, self.out_w, self.k);
        for o in 0..self.out_c {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(bias.map_or(0.0, |b| b[o]));
            for i in 0..self.in_c {
                let src = &input[i * ih * iw..(i + 1) * ih * iw];
                for ky in 0..k {
                    let (y0, y1) = self.valid(ky, ih, oh);
                    for kx in 0..k {
                        let (x0, x1) = self.valid(kx, iw, ow);
                        let wv = w[((o * self.in_c + i) * k + ky) * k + kx];
                        for y in y0..y1 {
                            let sy = y * self.stride + ky - self.pad;
                            let row = &src[sy * iw..(sy + 1) * iw];
                            let dst = &mut plane[y * ow..(y + 1) * ow];
                            for x in x0..x1 {
                                dst[x] += wv * row[x * self.stride + kx - self.pad];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    fn backward(
        &self,
        input: &[f64],
        w: &[f64],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_b: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let (ih, iw, oh, ow, k) = (self.in_h, self.in_w, self.out_h, self.out_w, self.k);
        let mut grad_in = vec![0.0; self.in_c * ih * iw];
        if let Some(gb) = grad_b {
            for o in 0..self.out_c {
                gb[o] += grad_out[o * oh * ow..(o + 1) * oh * ow].iter().sum::<f64>();
            }
        }
        for o in 0..self.out_c {
            let go = &grad_out[o * oh * ow..(o + 1) * oh * ow];
            for i in 0..self.in_c {
                let src = &input[i * ih * iw..(i + 1) * ih * iw];
                let gin = &mut grad_in[i * ih * iw..(i + 1) * ih * iw];
                for ky in 0..k {
                    let (y0, y1) = self.valid(ky, ih, oh);
                    for kx in 0..k {
                        let (x0, x1) = self.valid(kx, iw, ow);
                        let widx = ((o * self.in_c + i) * k + ky) * k + kx;
                        let wv = w[widx];
                        let mut gw = 0.0;
                        for y in y0..y1 {
                            let sy = y * self.stride + ky - self.pad;
                            for x in x0..x1 {
                                let sx = x * self.stride + kx - self.pad;
                                let g = go[y * ow + x];
                                gw += g * src[sy * iw + sx];
                                gin[sy * iw + sx] += g * wv;
                            }
                        }
                        grad_w[widx] += gw;
                    }
                }
            }
        }
        grad_in
    }
}

/// Standalone two-convolution residual block over a `channels x h x w` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub channels: usize,
    /// `[out][in][3][3]` weights of the first and second convolution.
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

/// `y = relu(w2 * relu(w1 * x) + x)` for a flattened `channels x h x w` input.
pub fn residual_forward(block: &ResidualBlock, x: &[f64], h: usize, w: usize) -> Result<Vec<f64>> {
    let c = block.channels;
    let geom = ConvGeom::new(c, c, 3, 1, h, w)?;
    for (len, expected) in [
        (x.len(), c * h * w),
        (block.w1.len(), geom.weight_len()),
        (block.w2.len(), geom.weight_len()),
    ] {
        if len != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: len,
            });
        }
    }
    let mut h1 = vec![0.0; x.len()];
    geom.forward(x, &block.w1, None, &mut h1);
    for v in &mut h1 {
        *v = v.max(0.0);
    }
    let mut y = vec![0.0; x.len()];
    geom.forward(&h1, &block.w2, None, &mut y);
    Ok(y.iter().zip(x).map(|(f, xv)| (f + xv).max(0.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    pub arch: ConvNetArch,
    pub params: Vec<ParamGroup>,
    layers: Vec<Layer>,
    feature_dim: usize,
}

/// Per-layer values kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
enum Cache {
    None,
    Pool(Vec<usize>),
    Residual { a1: Vec<f64>, sum: Vec<f64> },
}

/// Result of a forward pass over one input.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l + 1]` the output of
    /// stage `l`; the last entry holds the class probabilities.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn probabilities(&self) -> &[f64] {
        self.activations.last().map_or(&[], |v| v.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<Vec<f64>>,
    pub probabilities: Vec<Vec<f64>>,
    pub activations: Vec<Vec<Vec<f64>>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// `-ln p[label]`, computed stably from logits.
pub fn cross_entropy_from_logits(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn cross_entropy(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].ln()
}

impl ConvNet {
    /// Builds the network with fan-in scaled uniform weights and zero biases.
    pub fn new(arch: &ConvNetArch, seed: u64) -> Result<Self> {
        let (layers, groups, feature_dim) = resolve(arch)?;
        let mut rng = rng_from(seed);
        let params = groups
            .into_iter()
            .map(|(name, len, fan_in)| {
                let values = if fan_in == 0 {
                    vec![0.0; len]
                } else {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
                };
                ParamGroup { name, values }
            })
            .collect();
        Ok(ConvNet {
            arch: arch.clone(),
            params,
            layers,
            feature_dim,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(arch: &ConvNetArch, params: Vec<ParamGroup>) -> Result<Self> {
        let (layers, groups, feature_dim) = resolve(arch)?;
        if groups.len() != params.len()
            || groups
                .iter()
                .zip(&params)
                .any(|((n, len, _), p)| *n != p.name || *len != p.values.len())
        {
            return Err(Error::Format(
                "parameters do not match the architecture".into(),
            ));
        }
        Ok(ConvNet {
            arch: arch.clone(),
            params,
            layers,
            feature_dim,
        })
    }

    pub fn class_count(&self) -> usize {
        self.arch.classes().unwrap_or(0)
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_size * self.arch.input_size
    }

    /// Width of the layer feeding the softmax head.
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass over one flattened `S x S` input.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut activations = vec![x.to_vec()];
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut logits = Vec::new();
        for layer in &self.layers {
            let input = activations.last().expect("input present");
            let (out, cache) = match *layer {
                Layer::Conv(g, w, b) => {
                    let mut out = vec![0.0; g.out_len()];
                    g.forward(
                        input,
                        &self.params[w].values,
                        Some(&self.params[b].values),
                        &mut out,
                    );
                    (out, Cache::None)
                }
                Layer::Relu => (input.iter().map(|v| v.max(0.0)).collect(), Cache::None),
                Layer::MaxPool { c, in_h, in_w, win } => {
                    let (out, idx) = maxpool_forward(input, c, in_h, in_w, win);
                    (out, Cache::Pool(idx))
                }
                Layer::Residual { geom, w1, w2 } => {
                    let mut h1 = vec![0.0; geom.out_len()];
                    geom.forward(input, &self.params[w1].values, None, &mut h1);
                    let a1: Vec<f64> = h1.iter().map(|v| v.max(0.0)).collect();
                    let mut sum = vec![0.0; geom.out_len()];
                    geom.forward(&a1, &self.params[w2].values, None, &mut sum);
                    for (s, xv) in sum.iter_mut().zip(input) {
                        *s += xv;
                    }
                    let out = sum.iter().map(|v| v.max(0.0)).collect();
                    (out, Cache::Residual { a1, sum })
                }
                Layer::Flatten => (input.clone(), Cache::None),
                Layer::Dense { inp, out, w, b } => (
                    dense_forward(
                        input,
                        &self.params[w].values,
                        &self.params[b].values,
                        inp,
                        out,
                    ),
                    Cache::None,
                ),
                Layer::SoftmaxHead { inp, classes, w, b } => {
                    logits = dense_forward(
                        input,
                        &self.params[w].values,
                        &self.params[b].values,
                        inp,
                        classes,
                    );
                    (softmax(&logits), Cache::None)
                }
            };
            activations.push(out);
            caches.push(cache);
        }
        Ok(Trace {
            activations,
            logits,
            caches,
        })
    }

    pub fn forward(&self, batch: &[TimeFrequencyMap]) -> Result<ForwardOutput> {
        let mut out = ForwardOutput {
            logits: Vec::with_capacity(batch.len()),
            probabilities: Vec::with_capacity(batch.len()),
            activations: Vec::with_capacity(batch.len()),
        };
        for map in batch {
            let t = self.trace(&map.values)?;
            out.probabilities.push(t.probabilities().to_vec());
            out.logits.push(t.logits);
            out.activations.push(t.activations);
        }
        Ok(out)
    }

    /// Activations entering the softmax head.
    pub fn extract_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut t = self.trace(x)?;
        let n = t.activations.len();
        Ok(t.activations.swap_remove(n - 2))
    }

    /// Parameter gradients of the loss `sum_k weight * CE(x_k)`.
    fn backward(&self, trace: &Trace, label: usize, weight: f64, grads: &mut [Vec<f64>]) {
        let probs = trace.probabilities();
        let mut g: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(j, p)| weight * (p - if j == label { 1.0 } else { 0.0 }))
            .collect();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[l];
            g = match *layer {
                Layer::SoftmaxHead { inp, classes, w, b } => {
                    dense_backward(input, &self.params[w].values, &g, inp, classes, grads, w, b)
                }
                Layer::Dense { inp, out, w, b } => {
                    dense_backward(input, &self.params[w].values, &g, inp, out, grads, w, b)
                }
                Layer::Flatten => g,
                Layer::Relu => g
                    .iter()
                    .zip(input)
                    .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                    .collect(),
                Layer::MaxPool { .. } => {
                    let Cache::Pool(idx) = &trace.caches[l] else {
                        unreachable!("pool cache")
                    };
                    let mut gin = vec![0.0; input.len()];
                    for (gv, &i) in g.iter().zip(idx) {
                        gin[i] += gv;
                    }
                    gin
                }
                Layer::Conv(geom, w, b) => {
                    let (gw, gb) = two_mut(grads, w, b);
                    geom.backward(input, &self.params[w].values, &g, gw, Some(gb))
                }
                Layer::Residual { geom, w1, w2 } => {
                    let Cache::Residual { a1, sum } = &trace.caches[l] else {
                        unreachable!("residual cache")
                    };
                    let gsum: Vec<f64> = g
                        .iter()
                        .zip(sum)
                        .map(|(gv, s)| if *s > 0.0 { *gv } else { 0.0 })
                        .collect();
                    let ga1 =
                        geom.backward(a1, &self.params[w2].values, &gsum, &mut grads[w2], None);
                    let gh1: Vec<f64> = ga1
                        .iter()
                        .zip(a1)
                        .map(|(gv, a)| if *a > 0.0 { *gv } else { 0.0 })
                        .collect();
                    let mut gin =
                        geom.backward(input, &self.params[w1].values, &gh1, &mut grads[w1], None);
                    for (gi, gs) in gin.iter_mut().zip(&gsum) {
                        *gi += gs;
                    }
                    gin
                }
            };
        }
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .map(|p| vec![0.0; p.values.len()])
            .collect()
    }
}

fn two_mut(grads: &mut [Vec<f64>], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = grads.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

fn dense_forward(x: &[f64], w: &[f64], b: &[f64], inp: usize, out: usize) -> Vec<f64> {
    (0..out)
        .map(|o| {
            b[o] + w[o * inp..(o + 1) * inp]
                .iter()
                .zip(x)
                .map(|(a, v)| a * v)
                .sum::<f64>()
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &[f64],
    w: &[f64],
    g: &[f64],
    inp: usize,
    out: usize,
    grads: &mut [Vec<f64>],
    wi: usize,
    bi: usize,
) -> Vec<f64> {
    let mut gin = vec![0.0; inp];
    {
        let (gw, gb) = two_mut(grads, wi, bi);
        for o in 0..out {
            let go = g[o];
            gb[o] += go;
            if go == 0.0 {
                continue;
            }
            let row = &w[o * inp..(o + 1) * inp];
            let grow = &mut gw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                grow[i] += go * x[i];
                gin[i] += go * row[i];
            }
        }
    }
    gin
}

fn maxpool_forward(x: &[f64], c: usize, h: usize, w: usize, win: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / win, w / win);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0;
                for dy in 0..win {
                    for dx in 0..win {
                        let i = ch * h * w + (y * win + dy) * w + xo * win + dx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                idx.push(best_i);
            }
        }
    }
    (out, idx)
}

type GroupDecl = (String, usize, usize);

/// Checks the stage list and derives layer geometry plus parameter groups
/// `(name, length, fan_in)`; fan-in 0 marks a bias.
fn resolve(arch: &ConvNetArch) -> Result<(Vec<Layer>, Vec<GroupDecl>, usize)> {
    let bad = |msg: String| Err(Error::invalid(format!("architecture: {msg}")));
    if arch.input_size == 0 {
        return bad("input size must be positive".into());
    }
    let n = arch.stages.len();
    match arch.stages.last() {
        Some(LayerSpec::SoftmaxHead { classes }) if *classes >= 2 => {}
        _ => return bad("must end with a softmax head of at least 2 classes".into()),
    }
    if arch.stages[..n - 1]
        .iter()
        .any(|s| matches!(s, LayerSpec::SoftmaxHead { .. }))
    {
        return bad("exactly one softmax head is allowed".into());
    }
    if arch
        .stages
        .iter()
        .filter(|s| matches!(s, LayerSpec::Flatten))
        .count()
        != 1
    {
        return bad("exactly one flatten stage is required".into());
    }

    let mut layers = Vec::with_capacity(n);
    let mut groups: Vec<GroupDecl> = Vec::new();
    let (mut c, mut h, mut w) = (1usize, arch.input_size, arch.input_size);
    let mut flat: Option<usize> = None;
    let mut feature_dim = 0;
    for (i, stage) in arch.stages.iter().enumerate() {
        let layer = match (*stage, flat) {
            (
                LayerSpec::Conv {
                    kernel,
                    out_channels,
                    stride,
                },
                None,
            ) => {
                if out_channels == 0 {
                    return bad(format!("stage {i}: conv needs output channels"));
                }
                let g = ConvGeom::new(c, out_channels, kernel, stride, h, w)?;
                let wi = groups.len();
                groups.push((
                    format!("conv{i}.weight"),
                    g.weight_len(),
                    c * kernel * kernel,
                ));
                groups.push((format!("conv{i}.bias"), out_channels, 0));
                (c, h, w) = (out_channels, g.out_h, g.out_w);
                Layer::Conv(g, wi, wi + 1)
            }
            (LayerSpec::Relu, _) => Layer::Relu,
            (LayerSpec::MaxPool { window }, None) => {
                if window == 0 || window > h || window > w {
                    return bad(format!(
                        "stage {i}: pool window {window} does not fit {h}x{w}"
                    ));
                }
                let l = Layer::MaxPool {
                    c,
                    in_h: h,
                    in_w: w,
                    win: window,
                };
                (h, w) = (h / window, w / window);
                l
            }
            (LayerSpec::Residual { channels }, None) => {
                if channels != c {
                    return bad(format!(
                        "stage {i}: residual block over {channels} channels receives {c}"
                    ));
                }
                let g = ConvGeom::new(c, c, 3, 1, h, w)?;
                let wi = groups.len();
                groups.push((format!("res{i}.w1"), g.weight_len(), c * 9));
                groups.push((format!("res{i}.w2"), g.weight_len(), c * 9));
                Layer::Residual {
                    geom: g,
                    w1: wi,
                    w2: wi + 1,
                }
            }
            (LayerSpec::Flatten, None) => {
                flat = Some(c * h * w);
                Layer::Flatten
            }
            (LayerSpec::Dense { width }, Some(inp)) => {
                if width == 0 {
                    return bad(format!("stage {i}: zero-width layer"));
                }
                let wi = groups.len();
                groups.push((format!("fc{i}.weight"), width * inp, inp));
                groups.push((format!("fc{i}.bias"), width, 0));
                flat = Some(width);
                Layer::Dense {
                    inp,
                    out: width,
                    w: wi,
                    b: wi + 1,
                }
            }
            (LayerSpec::SoftmaxHead { classes }, Some(inp)) => {
                let wi = groups.len();
                groups.push(("head.weight".into(), classes * inp, inp));
                groups.push(("head.bias".into(), classes, 0));
                feature_dim = inp;
                Layer::SoftmaxHead {
                    inp,
                    classes,
                    w: wi,
                    b: wi + 1,
                }
            }
            (s, None) => return bad(format!("stage {i}: {s} must follow flatten")),
            (s, Some(_)) => return bad(format!("stage {i}: {s} cannot follow flatten")),
        };
        if h == 0 || w == 0 {
            return bad(format!("stage {i} reduces the map to nothing"));
        }
        layers.push(layer);
    }
    Ok((layers, groups, feature_dim))
}

/// Mean cross-entropy over the batch and its gradient for every parameter
/// group. Samples are processed in fixed-size chunks whose partial sums are
/// added in order, so the result does not depend on thread count.
pub fn loss_and_grad(
    net: &ConvNet,
    inputs: &[&[f64]],
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f64>>)> {
    batch_pass(net, inputs, labels).map(|(loss, grads, _)| (loss, grads))
}

/// Loss, gradients and the number of correctly classified inputs.
fn batch_pass(
    net: &ConvNet,
    inputs: &[&[f64]],
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f64>>, usize)> {
    if inputs.is_empty() {
        return Err(Error::Empty("empty batch".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            found: labels.len(),
        });
    }
    let classes = net.class_count();
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {l} outside [0, {classes})")));
    }
    for x in inputs {
        net.check_input(x)?;
    }
    let weight = 1.0 / inputs.len() as f64;
    type Part = (f64, Vec<Vec<f64>>, usize);
    let chunk_job = |(xs, ys): (&[&[f64]], &[usize])| -> Result<Part> {
        let mut grads = net.zero_grads();
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, &y) in xs.iter().zip(ys) {
            let t = net.trace(x)?;
            loss += cross_entropy_from_logits(&t.logits, y);
            correct += usize::from(argmax(&t.logits) == y);
            net.backward(&t, y, weight, &mut grads);
        }
        Ok((loss, grads, correct))
    };
    const CHUNK: usize = 8;
    let jobs: Vec<(&[&[f64]], &[usize])> = inputs.chunks(CHUNK).zip(labels.chunks(CHUNK)).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<Part> = {
        use rayon::prelude::*;
        jobs.into_par_iter().map(chunk_job).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Part> = jobs.into_iter().map(chunk_job).collect::<Result<_>>()?;

    let mut total = 0.0;
    let mut correct = 0;
    let mut grads = net.zero_grads();
    for (loss, g, ok) in parts {
        total += loss;
        correct += ok;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    Ok((total * weight, grads, correct))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr: 0.001,
            batch_size: 128,
            epochs: 30,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(net: &ConvNet) -> Self {
        AdamState {
            m: net.zero_grads(),
            v: net.zero_grads(),
            step: 0,
        }
    }
}

/// One Adam update with the bias correction folded into the step size:
/// `theta -= lr * sqrt(1 - b2^t) / (1 - b1^t) * m / (sqrt(v) + eps)`.
pub fn adam_step(
    params: &mut [ParamGroup],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    hyper: &TrainHyper,
) -> Result<()> {
    let shapes_ok = params.len() == grads.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(grads)
            .zip(&state.m)
            .all(|((p, g), m)| p.values.len() == g.len() && g.len() == m.len());
    if !shapes_ok {
        return Err(Error::invalid(
            "Adam: parameter, gradient and state shapes differ",
        ));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (hyper.adam_beta1, hyper.adam_beta2);
    let step_size = hyper.lr * (1.0 - b2.powi(t)).sqrt() / (1.0 - b1.powi(t));
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..g.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            p.values[i] -= step_size * m[i] / (v[i].sqrt() + hyper.adam_eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches, weighted by batch size.
    pub loss: f64,
    pub accuracy: f64,
}

/// Trains from a seeded initialization with seeded batch shuffling.
pub fn train_convnet(
    inputs: &[Vec<f64>],
    labels: &[usize],
    arch: &ConvNetArch,
    hyper: &TrainHyper,
) -> Result<(ConvNet, Vec<EpochStats>)> {
    hyper.validate()?;
    let mut net = ConvNet::new(arch, mix(hyper.seed, 0))?;
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            found: labels.len(),
        });
    }
    for class in 0..net.class_count() {
        if !labels.contains(&class) {
            return Err(Error::MissingClass(class));
        }
    }
    let mut state = AdamState::new(&net);
    let mut rng = rng_from(mix(hyper.seed, 1));
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(hyper.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| inputs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads, ok) = batch_pass(&net, &xs, &ys)?;
            correct += ok;
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut net.params, &grads, &mut state, hyper)?;
        }
        history.push(EpochStats {
            epoch,
            loss: loss_sum / inputs.len() as f64,
            accuracy: correct as f64 / inputs.len() as f64,
        });
    }
    Ok((net, history))
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}
