//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use hfo_core::convnet::{cross_entropy_from_logits, loss_and_grad, ConvNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sum(a) - 1/2 a'Qa` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(k: &[f64], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[i * n + j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let balance = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient ascent on the SVM dual. Returns the
/// maximizer and its objective.
pub fn qp_oracle(k: &[f64], y: &[f64], c: f64, iterations: usize) -> (Vec<f64>, f64) {
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mul = |a: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| q(i, j) * a[j]).sum())
            .collect()
    };
    // power iteration for the Lipschitz constant
    let mut v = vec![1.0; n];
    let mut lip = 1.0;
    for _ in 0..200 {
        let w = mul(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (lip * 1.05 + 1e-12);
    let mut x = vec![0.0; n];
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut best = (x.clone(), dual_objective(k, y, &x));
    for _ in 0..iterations {
        let g = mul(&z);
        let ascent: Vec<f64> = (0..n).map(|i| z[i] + step * (1.0 - g[i])).collect();
        let x_next = project(&ascent, y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let obj = dual_objective(k, y, &x_next);
        if obj < best.1 {
            // restart momentum when the objective drops
            t = 1.0;
            z = best.0.clone();
            continue;
        }
        z = (0..n)
            .map(|i| x_next[i] + (t - 1.0) / t_next * (x_next[i] - x[i]))
            .collect();
        x = x_next;
        t = t_next;
        best = (x.clone(), obj);
    }
    best
}

/// Per-class precision, F1, specificity, sensitivity and accuracy from raw
/// confusion counts `cm[truth][pred]`, with undefined ratios reported as 0.
pub fn metric_oracle(cm: &[Vec<u64>]) -> Vec<[f64; 5]> {
    let c = cm.len();
    let total: u64 = cm.iter().flatten().sum();
    let safe = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    (0..c)
        .map(|k| {
            let tp = cm[k][k] as f64;
            let predicted: f64 = (0..c).map(|r| cm[r][k] as f64).sum();
            let actual: f64 = cm[k].iter().map(|&v| v as f64).sum();
            let fp = predicted - tp;
            let fn_ = actual - tp;
            let tn = total as f64 - tp - fp - fn_;
            let p = safe(tp, tp + fp);
            let r = safe(tp, tp + fn_);
            let f1 = safe(2.0 * p * r, p + r);
            let spec = safe(tn, tn + fp);
            let acc = safe(tp + tn, total as f64);
            [p, f1, spec, r, acc]
        })
        .collect()
}

/// `sin(2 pi f t)` sampled at `fs` for `n` samples.
pub fn tone(freq_hz: f64, fs_hz: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * freq_hz * i as f64 / fs_hz).sin())
        .collect()
}

/// Central-difference check of `loss_and_grad` on up to `per_group`
/// randomly chosen entries of every parameter group. Returns
/// `(group name, max relative error)`; denominators are floored at `floor`.
pub fn gradient_check(
    net: &ConvNet,
    inputs: &[Vec<f64>],
    labels: &[usize],
    per_group: usize,
    h: f64,
    floor: f64,
    seed: u64,
) -> Vec<(String, f64)> {
    let refs: Vec<&[f64]> = inputs.iter().map(|v| v.as_slice()).collect();
    let (_, grads) = loss_and_grad(net, &refs, labels).unwrap();
    let mut r = rng(seed);
    let mut out = Vec::new();
    for (g, group) in net.params.iter().enumerate() {
        let len = group.values.len();
        let picks: Vec<usize> = if len <= per_group {
            (0..len).collect()
        } else {
            (0..per_group).map(|_| r.random_range(0..len)).collect()
        };
        let mut worst = 0.0f64;
        for i in picks {
            let mut plus = net.clone();
            plus.params[g].values[i] += h;
            let mut minus = net.clone();
            minus.params[g].values[i] -= h;
            let lp = mean_loss(&plus, inputs, labels);
            let lm = mean_loss(&minus, inputs, labels);
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads[g][i];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(floor);
            worst = worst.max(rel);
        }
        out.push((group.name.clone(), worst));
    }
    out
}

/// Forward-only mean cross-entropy.
pub fn mean_loss(net: &ConvNet, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
    inputs
        .iter()
        .zip(labels)
        .map(|(x, &y)| cross_entropy_from_logits(&net.trace(x).unwrap().logits, y))
        .sum::<f64>()
        / inputs.len() as f64
}

pub fn random_inputs(count: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| (0..len).map(|_| r.random::<f64>()).collect())
        .collect()
}

/// A small network over 16 x 16 maps, quick enough for integration tests.
pub fn tiny_arch(classes: usize) -> hfo_core::convnet::ConvNetArch {
    use hfo_core::convnet::{ConvNetArch, LayerSpec};
    ConvNetArch {
        input_size: 16,
        stages: vec![
            LayerSpec::Conv {
                kernel: 3,
                out_channels: 4,
                stride: 1,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Residual { channels: 4 },
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { width: 12 },
            LayerSpec::Relu,
            LayerSpec::SoftmaxHead { classes },
        ],
    }
}

pub fn tiny_config(
    kind: hfo_core::pipeline::ModelKind,
    seed: u64,
) -> hfo_core::pipeline::TrainConfig {
    let mut cfg = hfo_core::pipeline::TrainConfig::new(kind, seed);
    cfg.scalogram.size = 16;
    cfg.pool_size = 8;
    cfg.arch = Some(tiny_arch(3));
    cfg.hyper.epochs = 40;
    cfg.hyper.batch_size = 8;
    cfg.hyper.lr = 0.01;
    cfg
}
