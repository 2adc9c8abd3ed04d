mod common;

use hfo_core::convnet::{
    adam_step, residual_forward, AdamState, ConvNet, ConvNetArch, LayerSpec, ResidualBlock,
    TrainHyper,
};

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Direct 3x3 same-padded cross-correlation, `w[o][i][ky][kx]`.
fn conv_ref(x: &[f64], w: &[f64], c: usize, h: usize, wd: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * h * wd];
    for o in 0..c {
        for y in 0..h {
            for xx in 0..wd {
                let mut s = 0.0;
                for i in 0..c {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) =
                                (y as isize + ky as isize - 1, xx as isize + kx as isize - 1);
                            if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                continue;
                            }
                            s += w[((o * c + i) * 3 + ky) * 3 + kx]
                                * x[(i * h + sy as usize) * wd + sx as usize];
                        }
                    }
                }
                out[(o * h + y) * wd + xx] = s;
            }
        }
    }
    out
}

#[test]
fn residual_block_matches_direct_formula() {
    let (c, h, w) = (2, 5, 4);
    let x = common::random_inputs(1, c * h * w, 1).remove(0);
    let x: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
    let weights = common::random_inputs(2, c * c * 9, 2);
    let w1: Vec<f64> = weights[0].iter().map(|v| v - 0.5).collect();
    let w2: Vec<f64> = weights[1].iter().map(|v| v - 0.5).collect();
    let block = ResidualBlock {
        channels: c,
        w1: w1.clone(),
        w2: w2.clone(),
    };
    let got = residual_forward(&block, &x, h, w).unwrap();
    let inner: Vec<f64> = conv_ref(&x, &w1, c, h, w).into_iter().map(relu).collect();
    let expect: Vec<f64> = conv_ref(&inner, &w2, c, h, w)
        .iter()
        .zip(&x)
        .map(|(a, b)| relu(a + b))
        .collect();
    for (g, e) in got.iter().zip(&expect) {
        assert!((g - e).abs() < 1e-12);
    }
    assert!(residual_forward(&block, &x[1..], h, w).is_err());
}

#[test]
fn small_network_gradients_match_finite_differences() {
    for seed in 0..3 {
        let net = ConvNet::new(&common::tiny_arch(3), seed).unwrap();
        let inputs = common::random_inputs(6, net.input_len(), seed + 10);
        let labels = [0, 1, 2, 0, 1, 2];
        for (name, err) in common::gradient_check(&net, &inputs, &labels, 30, 1e-6, 1e-6, seed) {
            assert!(err < 1e-4, "seed {seed} group {name}: {err:e}");
        }
    }
}

#[test]
fn strided_convolution_gradients() {
    let arch = ConvNetArch {
        input_size: 9,
        stages: vec![
            LayerSpec::Conv {
                kernel: 3,
                out_channels: 3,
                stride: 2,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::SoftmaxHead { classes: 2 },
        ],
    };
    let net = ConvNet::new(&arch, 4).unwrap();
    let inputs = common::random_inputs(4, net.input_len(), 8);
    for (name, err) in common::gradient_check(&net, &inputs, &[0, 1, 1, 0], 40, 1e-6, 1e-6, 1) {
        assert!(err < 1e-4, "group {name}: {err:e}");
    }
}

#[test]
fn adam_first_step_moves_each_weight_by_the_learning_rate() {
    let mut net = ConvNet::new(&common::tiny_arch(2), 0).unwrap();
    let before = net.params.clone();
    let grads: Vec<Vec<f64>> = net
        .params
        .iter()
        .map(|g| {
            g.values
                .iter()
                .enumerate()
                .map(|(i, _)| if i % 2 == 0 { 3.0 } else { -0.5 })
                .collect()
        })
        .collect();
    let hyper = TrainHyper {
        lr: 0.01,
        ..TrainHyper::default()
    };
    let mut state = AdamState::new(&net);
    adam_step(&mut net.params, &grads, &mut state, &hyper).unwrap();
    for ((a, b), g) in before.iter().zip(&net.params).zip(&grads) {
        for ((x0, x1), gi) in a.values.iter().zip(&b.values).zip(g) {
            // the first bias-corrected step is lr * sign(g), up to eps
            let expect = -0.01 * gi.signum();
            assert!((x1 - x0 - expect).abs() < 1e-8);
        }
    }
}
