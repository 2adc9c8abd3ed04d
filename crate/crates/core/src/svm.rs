//! Binary soft-margin kernel SVM trained by sequential minimal optimization.
//!
//! The solver works on the dual in minimization form,
//!
//! ```text
//! min_a  1/2 a'Qa - e'a   s.t.  0 <= a_i <= C,  y'a = 0,   Q_ij = y_i y_j K_ij
//! ```
//!
//! choosing each working pair with second-order information (maximal
//! violating `i`, then the `j` giving the largest guaranteed decrease) and
//! stopping once the maximal KKT violation drops below `tol`.
//!
//! Features are standardized per dimension before training; the fitted
//! standardizer travels with the model.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_from;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::invalid("rbf kernel requires gamma > 0"))
            }
            _ => Ok(()),
        }
    }

    fn eval_unchecked(&self, x: &[f64], z: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => x.iter().zip(z).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

pub fn kernel_eval(kernel: &KernelSpec, x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: z.len(),
        });
    }
    Ok(kernel.eval_unchecked(x, z))
}

/// Kernel choice before training; an rbf without gamma gets
/// `1 / (dim * variance)` of the standardized training features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Linear,
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelChoice,
    pub c: f64,
    pub tol: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelChoice::Rbf { gamma: None },
            c: 1.0,
            tol: 1e-3,
            max_epochs: 1000,
            seed: 0,
            standardize: true,
        }
    }
}

/// Per-dimension affine map to zero mean and unit variance. Constant
/// dimensions are only centered.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, inv_std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.inv_std)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvmModel {
    /// Support vectors in standardized feature space.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for each support vector.
    pub alphas_signed: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub dim: usize,
    pub standardizer: Option<Standardizer>,
}

impl BinarySvmModel {
    /// A model whose decision value is `sign` everywhere.
    pub fn constant(sign: f64, dim: usize) -> Self {
        BinarySvmModel {
            support_vectors: Vec::new(),
            alphas_signed: Vec::new(),
            bias: sign.signum(),
            kernel: KernelSpec::Linear,
            c: 1.0,
            dim,
            standardizer: None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.support_vectors.is_empty()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if self.support_vectors.is_empty() {
            return Ok(self.bias);
        }
        let z = match &self.standardizer {
            Some(s) => s.apply(x),
            None => x.to_vec(),
        };
        Ok(self.decision_value_standardized(&z))
    }

    fn decision_value_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas_signed)
            .map(|(sv, a)| a * self.kernel.eval_unchecked(sv, z))
            .sum::<f64>()
            + self.bias
    }
}

/// Solver diagnostics, indexed like the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub alphas: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `sum(a) - 1/2 a'Qa` at the returned point.
    pub dual_objective: f64,
    /// Largest violation of the pairwise KKT gap at exit.
    pub kkt_gap: f64,
}

pub fn train_binary_svm(x: &[Vec<f64>], y: &[f64], cfg: &SvmConfig) -> Result<BinarySvmModel> {
    train_binary_svm_with_report(x, y, cfg).map(|(m, _)| m)
}

pub fn train_binary_svm_with_report(
    x: &[Vec<f64>],
    y: &[f64],
    cfg: &SvmConfig,
) -> Result<(BinarySvmModel, SolverReport)> {
    if x.is_empty() {
        return Err(Error::Empty("no training examples".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
    }
    if y.iter().any(|&l| l != 1.0 && l != -1.0) {
        return Err(Error::invalid("labels must be -1 or +1"));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::SingleClass);
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) {
        return Err(Error::invalid("C must be positive"));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }

    let standardizer = cfg.standardize.then(|| Standardizer::fit(x));
    let z: Vec<Vec<f64>> = match &standardizer {
        Some(s) => x.iter().map(|r| s.apply(r)).collect(),
        None => x.to_vec(),
    };
    let kernel = match cfg.kernel {
        KernelChoice::Linear => KernelSpec::Linear,
        KernelChoice::Rbf { gamma: Some(gamma) } => KernelSpec::Rbf { gamma },
        KernelChoice::Rbf { gamma: None } => KernelSpec::Rbf {
            gamma: default_gamma(&z),
        },
    };
    kernel.validate()?;

    let gram = gram_matrix(&kernel, &z);
    let solution = solve_smo(&gram, y, cfg);

    let mut support_vectors = Vec::new();
    let mut alphas_signed = Vec::new();
    for (i, &a) in solution.alphas.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(z[i].clone());
            alphas_signed.push(a * y[i]);
        }
    }
    let model = BinarySvmModel {
        support_vectors,
        alphas_signed,
        bias: solution.bias,
        kernel,
        c: cfg.c,
        dim,
        standardizer,
    };
    let report = SolverReport {
        alphas: solution.alphas,
        iterations: solution.iterations,
        converged: solution.converged,
        dual_objective: solution.dual_objective,
        kkt_gap: solution.gap,
    };
    Ok((model, report))
}

/// `1 / (dim * var)` over all entries of the feature matrix.
pub fn default_gamma(rows: &[Vec<f64>]) -> f64 {
    let dim = rows.first().map_or(1, |r| r.len()).max(1);
    let count = (rows.len() * dim) as f64;
    let mean = rows.iter().flatten().sum::<f64>() / count;
    let var = rows
        .iter()
        .flatten()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / count;
    if var > 1e-12 {
        1.0 / (dim as f64 * var)
    } else {
        1.0 / dim as f64
    }
}

/// Dense row-major kernel matrix.
pub fn gram_matrix(kernel: &KernelSpec, rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let row_of = |i: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| kernel.eval_unchecked(&rows[i], r))
            .collect()
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(row_of).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Vec<f64>> = (0..n).map(row_of).collect();
    parts.concat()
}

struct Solution {
    alphas: Vec<f64>,
    bias: f64,
    iterations: usize,
    converged: bool,
    dual_objective: f64,
    gap: f64,
}

fn solve_smo(k: &[f64], y: &[f64], cfg: &SvmConfig) -> Solution {
    let n = y.len();
    let c = cfg.c;
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];

    // scan order decides ties between equally good candidates
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(cfg.seed));

    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let max_iter = cfg.max_epochs.max(1).saturating_mul(n.max(1));
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;

    while iterations < max_iter {
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for &t in &order {
            if in_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v > g_max {
                    g_max = v;
                    i_sel = t;
                }
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = usize::MAX;
        let mut best_obj = f64::INFINITY;
        for &t in &order {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = -y[t] * grad[t];
            g_min = g_min.min(v);
            if i_sel != usize::MAX {
                let b = g_max - v;
                if b > 0.0 {
                    let mut a = k[i_sel * n + i_sel] + k[t * n + t] - 2.0 * k[i_sel * n + t];
                    if a <= 0.0 {
                        a = TAU;
                    }
                    let obj = -(b * b) / a;
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = t;
                    }
                }
            }
        }
        gap = g_max - g_min;
        if i_sel == usize::MAX || j_sel == usize::MAX || gap < cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
    }

    let bias = -rho(&alpha, &grad, y, c);
    let dual_objective = -0.5
        * alpha
            .iter()
            .zip(&grad)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>();
    Solution {
        alphas: alpha,
        bias,
        iterations,
        converged,
        dual_objective,
        gap,
    }
}

/// Threshold from the free multipliers, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(c: f64) -> SvmConfig {
        SvmConfig {
            kernel: KernelChoice::Linear,
            c,
            ..Default::default()
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(
            kernel_eval(&KernelSpec::Linear, &[1.0, 2.0], &[3.0, 4.0]).unwrap(),
            11.0
        );
        let rbf = KernelSpec::Rbf { gamma: 0.7 };
        assert_eq!(kernel_eval(&rbf, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        let a = [0.1, 0.5, -1.2];
        let b = [2.0, -0.4, 0.9];
        assert_eq!(
            kernel_eval(&rbf, &a, &b).unwrap(),
            kernel_eval(&rbf, &b, &a).unwrap()
        );
        assert!(kernel_eval(&rbf, &a, &[1.0]).is_err());
        assert!(KernelSpec::Rbf { gamma: 0.0 }.validate().is_err());
    }

    #[test]
    fn two_symmetric_points() {
        let x = vec![vec![-1.0], vec![1.0]];
        let y = vec![-1.0, 1.0];
        let (m, rep) = train_binary_svm_with_report(&x, &y, &linear(10.0)).unwrap();
        assert!((rep.alphas[0] - rep.alphas[1]).abs() < 1e-12);
        assert!(m.decision_value(&[0.0]).unwrap().abs() < 1e-6);
        assert!((m.decision_value(&[1.0]).unwrap() - 1.0).abs() < 1e-4);
        assert!((m.decision_value(&[-1.0]).unwrap() + 1.0).abs() < 1e-4);
    }

    #[test]
    fn xor_with_rbf() {
        let x = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ];
        let y = vec![-1.0, -1.0, 1.0, 1.0];
        let cfg = SvmConfig {
            kernel: KernelChoice::Rbf { gamma: Some(1.0) },
            c: 10.0,
            ..Default::default()
        };
        let m = train_binary_svm(&x, &y, &cfg).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.decision_value(xi).unwrap().signum(), *yi);
        }
    }

    #[test]
    fn decision_value_edge_cases() {
        let m = BinarySvmModel::constant(-3.0, 2);
        assert_eq!(m.decision_value(&[5.0, 1.0]).unwrap(), -1.0);
        assert!(m.decision_value(&[5.0]).is_err());

        let x = vec![
            vec![0.0, 1.0],
            vec![1.0, 0.3],
            vec![2.0, -1.0],
            vec![3.0, 0.0],
        ];
        let y = vec![-1.0, -1.0, 1.0, 1.0];
        let m = train_binary_svm(&x, &y, &SvmConfig::default()).unwrap();
        let mut doubled = m.clone();
        doubled.alphas_signed.iter_mut().for_each(|a| *a *= 2.0);
        doubled.bias *= 2.0;
        for p in [[0.5, 0.5], [2.5, -0.2]] {
            let d = m.decision_value(&p).unwrap();
            assert!((doubled.decision_value(&p).unwrap() - 2.0 * d).abs() < 1e-12);
        }
    }

    #[test]
    fn input_errors() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            train_binary_svm(&x, &[1.0, 1.0], &SvmConfig::default()),
            Err(Error::SingleClass)
        ));
        let bad = vec![vec![f64::NAN], vec![1.0]];
        assert!(train_binary_svm(&bad, &[1.0, -1.0], &SvmConfig::default()).is_err());
        assert!(train_binary_svm(&x, &[1.0, 0.0], &SvmConfig::default()).is_err());
        let cfg = SvmConfig {
            c: 0.0,
            ..Default::default()
        };
        assert!(train_binary_svm(&x, &[1.0, -1.0], &cfg).is_err());
    }

    #[test]
    fn feasibility_and_kkt_on_noisy_data() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let t = i as f64;
                vec![
                    (t * 0.37).sin() * 2.0,
                    (t * 0.91).cos() + (i % 2) as f64 * 0.8,
                ]
            })
            .collect();
        let y: Vec<f64> = (0..60)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let cfg = SvmConfig {
            c: 0.5,
            ..Default::default()
        };
        let (m, rep) = train_binary_svm_with_report(&x, &y, &cfg).unwrap();
        assert!(rep.converged);
        let balance: f64 = rep.alphas.iter().zip(&y).map(|(a, l)| a * l).sum();
        assert!(balance.abs() < 1e-8);
        for (i, &a) in rep.alphas.iter().enumerate() {
            assert!((0.0..=cfg.c).contains(&a));
            let margin = y[i] * m.decision_value(&x[i]).unwrap();
            if a == 0.0 {
                assert!(margin >= 1.0 - cfg.tol);
            } else if a == cfg.c {
                assert!(margin <= 1.0 + cfg.tol);
            } else {
                assert!((margin - 1.0).abs() <= cfg.tol);
            }
        }
    }

    #[test]
    fn same_seed_same_model() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos()])
            .collect();
        let y: Vec<f64> = (0..30)
            .map(|i| if i % 3 == 0 { 1.0 } else { -1.0 })
            .collect();
        let cfg = SvmConfig {
            seed: 17,
            ..Default::default()
        };
        assert_eq!(
            train_binary_svm(&x, &y, &cfg).unwrap(),
            train_binary_svm(&x, &y, &cfg).unwrap()
        );
    }
}
