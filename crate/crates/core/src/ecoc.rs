//! Error-correcting output codes over binary SVMs.
//!
//! A code matrix has one row per binary machine and one column (codeword)
//! per class. Entry `+1` puts the class in the row's positive superclass,
//! `-1` in the negative one and `0` leaves it out of that row entirely.
//! Prediction takes the sign of every machine and picks the codeword at the
//! smallest Hamming distance, ignoring zero entries.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rng::mix;
use crate::svm::{train_binary_svm, BinarySvmModel, SvmConfig};

pub const MAX_EXHAUSTIVE_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodingScheme {
    OneVsAll,
    OneVsOne,
    Exhaustive,
}

impl CodingScheme {
    pub fn name(self) -> &'static str {
        match self {
            CodingScheme::OneVsAll => "ova",
            CodingScheme::OneVsOne => "ovo",
            CodingScheme::Exhaustive => "exhaustive",
        }
    }
}

impl fmt::Display for CodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ova" | "one_vs_all" => Ok(CodingScheme::OneVsAll),
            "ovo" | "one_vs_one" => Ok(CodingScheme::OneVsOne),
            "exhaustive" => Ok(CodingScheme::Exhaustive),
            _ => Err(Error::invalid(format!("unknown coding scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeMatrix {
    /// Row-major `rows x classes`, values in {-1, 0, +1}.
    entries: Vec<i8>,
    rows: usize,
    classes: usize,
    pub scheme: CodingScheme,
}

impl CodeMatrix {
    pub fn from_entries(entries: Vec<Vec<i8>>, scheme: CodingScheme) -> Result<Self> {
        let rows = entries.len();
        let classes = entries.first().map_or(0, |r| r.len());
        if rows == 0 || classes < 2 {
            return Err(Error::invalid(
                "code matrix needs at least one row and two classes",
            ));
        }
        if entries.iter().any(|r| r.len() != classes) {
            return Err(Error::invalid("ragged code matrix"));
        }
        let m = CodeMatrix {
            entries: entries.concat(),
            rows,
            classes,
            scheme,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, row: usize, class: usize) -> i8 {
        self.entries[row * self.classes + class]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.classes..(row + 1) * self.classes]
    }

    pub fn column(&self, class: usize) -> Vec<i8> {
        (0..self.rows).map(|r| self.get(r, class)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.entries.iter().any(|v| !(-1..=1).contains(v)) {
            return Err(Error::invalid("code entries must be -1, 0 or +1"));
        }
        if (0..self.rows).any(|r| self.row(r).iter().all(|&v| v == 0)) {
            return Err(Error::invalid("code matrix has an all-zero row"));
        }
        for a in 0..self.classes {
            for b in a + 1..self.classes {
                if self.column_distance(a, b) == 0 {
                    return Err(Error::invalid(format!(
                        "codewords of classes {a} and {b} are indistinguishable"
                    )));
                }
            }
        }
        Ok(())
    }

    fn column_distance(&self, a: usize, b: usize) -> usize {
        (0..self.rows)
            .filter(|&r| {
                let (x, y) = (self.get(r, a), self.get(r, b));
                x != 0 && y != 0 && x != y
            })
            .count()
    }
}

pub fn build_code_matrix(scheme: CodingScheme, c: usize) -> Result<CodeMatrix> {
    if c < 2 {
        return Err(Error::invalid("at least two classes are required"));
    }
    let entries: Vec<Vec<i8>> = match scheme {
        CodingScheme::OneVsAll => (0..c)
            .map(|i| (0..c).map(|j| if i == j { 1 } else { -1 }).collect())
            .collect(),
        CodingScheme::OneVsOne => {
            let mut rows = Vec::with_capacity(c * (c - 1) / 2);
            for a in 0..c {
                for b in a + 1..c {
                    let mut row = vec![0i8; c];
                    row[a] = 1;
                    row[b] = -1;
                    rows.push(row);
                }
            }
            rows
        }
        CodingScheme::Exhaustive => {
            if c > MAX_EXHAUSTIVE_CLASSES {
                return Err(Error::invalid(format!(
                    "exhaustive codes are limited to {MAX_EXHAUSTIVE_CLASSES} classes (got {c})"
                )));
            }
            // every bipartition with class 0 on the positive side, except the
            // trivial one; bit j-1 of the mask moves class j to the negative side
            let count = (1usize << (c - 1)) - 1;
            (1..=count)
                .map(|mask| {
                    (0..c)
                        .map(|j| {
                            if j > 0 && mask & (1 << (j - 1)) != 0 {
                                -1
                            } else {
                                1
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    CodeMatrix::from_entries(entries, scheme)
}

/// Smallest pairwise codeword distance, counting only rows where both
/// entries are non-zero.
pub fn min_hamming_distance(matrix: &CodeMatrix) -> usize {
    let mut best = usize::MAX;
    for a in 0..matrix.classes {
        for b in a + 1..matrix.classes {
            best = best.min(matrix.column_distance(a, b));
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcocModel {
    pub matrix: CodeMatrix,
    /// One per matrix row. Rows whose induced problem holds a single sign are
    /// constant models.
    pub classifiers: Vec<BinarySvmModel>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcocPrediction {
    pub class: usize,
    pub per_class_distance: Vec<f64>,
    /// Negated hinge loss against each codeword; higher is better.
    pub per_class_score: Vec<f64>,
    pub decision_values: Vec<f64>,
}

pub fn train_ecoc(
    features: &[Vec<f64>],
    labels: &[usize],
    matrix: &CodeMatrix,
    svm_cfg: &SvmConfig,
) -> Result<EcocModel> {
    if features.is_empty() {
        return Err(Error::Empty("no training examples".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            found: labels.len(),
        });
    }
    let c = matrix.classes();
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} outside [0, {c})")));
    }
    for class in 0..c {
        if !labels.contains(&class) {
            return Err(Error::MissingClass(class));
        }
    }
    let dim = features[0].len();

    let train_row = |row: usize| -> Result<BinarySvmModel> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (f, &l) in features.iter().zip(labels) {
            let code = matrix.get(row, l);
            if code != 0 {
                x.push(f.clone());
                y.push(code as f64);
            }
        }
        let has_pos = y.contains(&1.0);
        let has_neg = y.contains(&-1.0);
        if has_pos != has_neg {
            return Ok(BinarySvmModel::constant(
                if has_pos { 1.0 } else { -1.0 },
                dim,
            ));
        }
        let cfg = SvmConfig {
            seed: mix(svm_cfg.seed, row as u64),
            ..*svm_cfg
        };
        train_binary_svm(&x, &y, &cfg)
    };

    #[cfg(feature = "parallel")]
    let classifiers = {
        use rayon::prelude::*;
        (0..matrix.rows())
            .into_par_iter()
            .map(train_row)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let classifiers = (0..matrix.rows())
        .map(train_row)
        .collect::<Result<Vec<_>>>()?;

    Ok(EcocModel {
        matrix: matrix.clone(),
        classifiers,
        dim,
    })
}

pub fn ecoc_predict(model: &EcocModel, x: &[f64]) -> Result<EcocPrediction> {
    let f = model
        .classifiers
        .iter()
        .map(|m| m.decision_value(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(decode(&model.matrix, &f))
}

/// Hamming decoding of a vector of decision values. A decision value of
/// exactly zero counts as half a disagreement; ties go to the lowest class.
pub fn decode(matrix: &CodeMatrix, decision_values: &[f64]) -> EcocPrediction {
    let c = matrix.classes();
    let mut distance = vec![0.0; c];
    let mut score = vec![0.0; c];
    for (row, &f) in decision_values.iter().enumerate().take(matrix.rows()) {
        let sign = if f > 0.0 {
            1.0
        } else if f < 0.0 {
            -1.0
        } else {
            0.0
        };
        for j in 0..c {
            let b = matrix.get(row, j) as f64;
            if b != 0.0 {
                distance[j] += (1.0 - b * sign) / 2.0;
                score[j] -= (1.0 - b * f).max(0.0);
            }
        }
    }
    let class = distance
        .iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |best, (j, &d)| if d < best.1 { (j, d) } else { best },
        )
        .0;
    EcocPrediction {
        class,
        per_class_distance: distance,
        per_class_score: score,
        decision_values: decision_values.to_vec(),
    }
}
