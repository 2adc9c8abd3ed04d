//! The three model families behind one interface: ECOC-SVM on pooled
//! scalograms, the convolutional network alone, and network features fed to
//! an ECOC-SVM. All of them start from the same scalograms and produce the
//! same report schema.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::convnet::{self, ConvNet, ConvNetArch, EpochStats, TrainHyper};
use crate::ecoc::{build_code_matrix, ecoc_predict, train_ecoc, CodingScheme, EcocModel};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, stratified_split, CvReport, EvaluationReport, Split};
use crate::rng::mix;
use crate::simgen::{EventClass, LabeledDataset, SignalSegment};
use crate::svm::SvmConfig;
use crate::tfr::{scalogram, ScalogramConfig, TimeFrequencyMap};

/// Side length the scalogram is mean-pooled to for the plain SVM.
pub const DEFAULT_POOL_SIZE: usize = 16;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Svm,
    Cnn,
    Hybrid,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Svm => "svm",
            ModelKind::Cnn => "cnn",
            ModelKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(ModelKind::Svm),
            "cnn" => Ok(ModelKind::Cnn),
            "hybrid" => Ok(ModelKind::Hybrid),
            _ => Err(Error::invalid(format!("unknown model kind '{s}'"))),
        }
    }
}

/// ECOC-SVM over mean-pooled scalograms.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub scalogram_cfg: ScalogramConfig,
    pub pool_size: usize,
    pub ecoc: EcocModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub scalogram_cfg: ScalogramConfig,
    pub net: ConvNet,
}

/// Network feature extractor followed by an ECOC-SVM.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub feature_net: ConvNet,
    pub ecoc: EcocModel,
    pub scalogram_cfg: ScalogramConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Svm(SvmModel),
    Cnn(CnnModel),
    Hybrid(HybridModel),
}

/// A trained classifier with its class names and the configuration it was
/// trained with, so it can be retrained on other splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub class_names: Vec<EventClass>,
    pub body: ModelBody,
    pub config: TrainConfig,
    /// Master seed of the dataset the model was trained on.
    pub data_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    /// Higher is more likely: negated hinge loss for ECOC models, softmax
    /// probability for the network.
    pub per_class_score: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub scalogram: ScalogramConfig,
    pub pool_size: usize,
    pub coding: CodingScheme,
    pub svm: SvmConfig,
    pub hyper: TrainHyper,
    /// `None` uses the default architecture sized to the scalogram.
    pub arch: Option<ConvNetArch>,
    /// Root of every random choice made while training (split, network
    /// initialization and shuffling, SVM scan order).
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        TrainConfig {
            kind,
            scalogram: ScalogramConfig::default(),
            pool_size: DEFAULT_POOL_SIZE,
            coding: CodingScheme::OneVsAll,
            svm: SvmConfig::default(),
            hyper: TrainHyper::default(),
            arch: None,
            seed,
        }
    }

    pub fn split_seed(&self) -> u64 {
        mix(self.seed, 0)
    }

    fn hyper_seeded(&self) -> TrainHyper {
        TrainHyper {
            seed: mix(self.seed, 1),
            ..self.hyper
        }
    }

    fn svm_seeded(&self) -> SvmConfig {
        SvmConfig {
            seed: mix(self.seed, 2),
            ..self.svm
        }
    }

    pub fn arch_for(&self, classes: usize) -> ConvNetArch {
        self.arch
            .clone()
            .unwrap_or_else(|| ConvNetArch::default_for(classes, self.scalogram.size))
    }
}

/// Scalograms of every segment, in dataset order.
pub fn scalograms(
    segments: &[SignalSegment],
    cfg: &ScalogramConfig,
) -> Result<Vec<TimeFrequencyMap>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        segments.par_iter().map(|s| scalogram(s, cfg)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        segments.iter().map(|s| scalogram(s, cfg)).collect()
    }
}

fn pooled_features(maps: &[&TimeFrequencyMap], pool: usize) -> Result<Vec<Vec<f64>>> {
    maps.iter().map(|m| m.mean_pool(pool)).collect()
}

fn net_features(net: &ConvNet, maps: &[&TimeFrequencyMap]) -> Result<Vec<Vec<f64>>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        maps.par_iter()
            .map(|m| net.extract_features(&m.values))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        maps.iter()
            .map(|m| net.extract_features(&m.values))
            .collect()
    }
}

fn check_map(map: &TimeFrequencyMap, cfg: &ScalogramConfig) -> Result<()> {
    if map.size != cfg.size {
        return Err(Error::DimensionMismatch {
            expected: cfg.size,
            found: map.size,
        });
    }
    Ok(())
}

/// Result of fitting one model, with the network's training curve when one
/// was trained.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: TrainedModel,
    pub history: Vec<EpochStats>,
}

/// Fits the configured model family to precomputed scalograms.
pub fn fit(
    maps: &[&TimeFrequencyMap],
    labels: &[usize],
    class_names: &[EventClass],
    cfg: &TrainConfig,
    data_seed: u64,
) -> Result<Fitted> {
    cfg.scalogram.validate()?;
    if maps.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: maps.len(),
            found: labels.len(),
        });
    }
    for m in maps {
        check_map(m, &cfg.scalogram)?;
    }
    let classes = class_names.len();
    let mut history = Vec::new();
    let train_net = |history: &mut Vec<EpochStats>| -> Result<ConvNet> {
        let inputs: Vec<Vec<f64>> = maps.iter().map(|m| m.values.clone()).collect();
        let (net, h) =
            convnet::train_convnet(&inputs, labels, &cfg.arch_for(classes), &cfg.hyper_seeded())?;
        *history = h;
        Ok(net)
    };
    let body = match cfg.kind {
        ModelKind::Svm => {
            let features = pooled_features(maps, cfg.pool_size)?;
            let matrix = build_code_matrix(cfg.coding, classes)?;
            ModelBody::Svm(SvmModel {
                scalogram_cfg: cfg.scalogram,
                pool_size: cfg.pool_size,
                ecoc: train_ecoc(&features, labels, &matrix, &cfg.svm_seeded())?,
            })
        }
        ModelKind::Cnn => ModelBody::Cnn(CnnModel {
            scalogram_cfg: cfg.scalogram,
            net: train_net(&mut history)?,
        }),
        ModelKind::Hybrid => {
            let net = train_net(&mut history)?;
            let features = net_features(&net, maps)?;
            let matrix = build_code_matrix(cfg.coding, classes)?;
            ModelBody::Hybrid(HybridModel {
                ecoc: train_ecoc(&features, labels, &matrix, &cfg.svm_seeded())?,
                feature_net: net,
                scalogram_cfg: cfg.scalogram,
            })
        }
    };
    Ok(Fitted {
        model: TrainedModel {
            class_names: class_names.to_vec(),
            body,
            config: cfg.clone(),
            data_seed,
        },
        history,
    })
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.body {
            ModelBody::Svm(_) => ModelKind::Svm,
            ModelBody::Cnn(_) => ModelKind::Cnn,
            ModelBody::Hybrid(_) => ModelKind::Hybrid,
        }
    }

    pub fn scalogram_cfg(&self) -> &ScalogramConfig {
        match &self.body {
            ModelBody::Svm(m) => &m.scalogram_cfg,
            ModelBody::Cnn(m) => &m.scalogram_cfg,
            ModelBody::Hybrid(m) => &m.scalogram_cfg,
        }
    }

    pub fn class_labels(&self) -> Vec<String> {
        self.class_names.iter().map(|c| c.to_string()).collect()
    }

    pub fn predict_map(&self, map: &TimeFrequencyMap) -> Result<Prediction> {
        check_map(map, self.scalogram_cfg())?;
        match &self.body {
            ModelBody::Svm(m) => {
                let p = ecoc_predict(&m.ecoc, &map.mean_pool(m.pool_size)?)?;
                Ok(Prediction {
                    class: p.class,
                    per_class_score: p.per_class_score,
                })
            }
            ModelBody::Cnn(m) => {
                let t = m.net.trace(&map.values)?;
                Ok(Prediction {
                    class: convnet::argmax(&t.logits),
                    per_class_score: t.probabilities().to_vec(),
                })
            }
            ModelBody::Hybrid(m) => hybrid_predict_map(m, map),
        }
    }

    pub fn predict(&self, signal: &SignalSegment) -> Result<Prediction> {
        self.predict_map(&scalogram(signal, self.scalogram_cfg())?)
    }

    pub fn predict_maps(&self, maps: &[&TimeFrequencyMap]) -> Result<Vec<Prediction>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            maps.par_iter().map(|m| self.predict_map(m)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            maps.iter().map(|m| self.predict_map(m)).collect()
        }
    }

    /// Maps dataset labels onto this model's class indices.
    pub fn labels_for(&self, dataset: &LabeledDataset) -> Result<Vec<usize>> {
        dataset
            .segments
            .iter()
            .map(|s| {
                self.class_names
                    .iter()
                    .position(|&c| c == s.label)
                    .ok_or_else(|| Error::invalid(format!("model has no class '{}'", s.label)))
            })
            .collect()
    }

    /// Scores every segment of `dataset`.
    pub fn evaluate(&self, dataset: &LabeledDataset) -> Result<EvaluationReport> {
        let start = Instant::now();
        let truth = self.labels_for(dataset)?;
        let maps = scalograms(&dataset.segments, self.scalogram_cfg())?;
        let refs: Vec<&TimeFrequencyMap> = maps.iter().collect();
        let mut report = report_for(self, &refs, &truth)?;
        report.runtime_s = start.elapsed().as_secs_f64();
        Ok(report)
    }
}

fn report_for(
    model: &TrainedModel,
    maps: &[&TimeFrequencyMap],
    truth: &[usize],
) -> Result<EvaluationReport> {
    let preds = model.predict_maps(maps)?;
    let (pred, scores): (Vec<usize>, Vec<Vec<f64>>) = preds
        .into_iter()
        .map(|p| (p.class, p.per_class_score))
        .unzip();
    EvaluationReport::from_predictions(&model.class_labels(), truth, &pred, &scores)
}

fn hybrid_predict_map(model: &HybridModel, map: &TimeFrequencyMap) -> Result<Prediction> {
    let features = model.feature_net.extract_features(&map.values)?;
    let p = ecoc_predict(&model.ecoc, &features)?;
    Ok(Prediction {
        class: p.class,
        per_class_score: p.per_class_score,
    })
}

/// `ecoc_predict(extract_features(scalogram(signal)))`.
pub fn hybrid_predict(model: &HybridModel, signal: &SignalSegment) -> Result<Prediction> {
    hybrid_predict_map(model, &scalogram(signal, &model.scalogram_cfg)?)
}

/// Model trained on the training side of a stratified split, its report on
/// the held-out side, and the split itself.
#[derive(Debug, Clone)]
pub struct HoldoutOutcome {
    pub model: TrainedModel,
    pub report: EvaluationReport,
    pub history: Vec<EpochStats>,
    pub split: Split,
}

/// Scalograms, stratified split, training on the training side and
/// evaluation on the held-out side.
pub fn train_holdout(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    train_frac: f64,
) -> Result<HoldoutOutcome> {
    let start = Instant::now();
    dataset.validate()?;
    let labels = dataset.labels()?;
    let classes = dataset.class_count();
    let split = stratified_split(&labels, train_frac, cfg.split_seed())?;
    for (side, idx) in [("training", &split.train), ("test", &split.test)] {
        if let Some(missing) = (0..classes).find(|c| !idx.iter().any(|&i| labels[i] == *c)) {
            return Err(Error::invalid(format!(
                "{side} split has no example of class {}",
                dataset.class_names[missing]
            )));
        }
    }
    let maps = scalograms(&dataset.segments, &cfg.scalogram)?;
    let pick = |idx: &[usize]| -> (Vec<&TimeFrequencyMap>, Vec<usize>) {
        idx.iter().map(|&i| (&maps[i], labels[i])).unzip()
    };
    let (train_maps, train_labels) = pick(&split.train);
    let fitted = fit(
        &train_maps,
        &train_labels,
        &dataset.class_names,
        cfg,
        dataset.master_seed,
    )?;
    let (test_maps, test_labels) = pick(&split.test);
    let mut report = report_for(&fitted.model, &test_maps, &test_labels)?;
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(HoldoutOutcome {
        model: fitted.model,
        report,
        history: fitted.history,
        split,
    })
}

/// Fits on every segment of `dataset`.
pub fn train_full(dataset: &LabeledDataset, cfg: &TrainConfig) -> Result<Fitted> {
    dataset.validate()?;
    let labels = dataset.labels()?;
    let maps = scalograms(&dataset.segments, &cfg.scalogram)?;
    let refs: Vec<&TimeFrequencyMap> = maps.iter().collect();
    fit(
        &refs,
        &labels,
        &dataset.class_names,
        cfg,
        dataset.master_seed,
    )
}

/// Hybrid training per the CNN-then-SVM recipe: the network and the SVM
/// stage both see only the training side of the split.
pub fn train_hybrid(
    dataset: &LabeledDataset,
    arch: &ConvNetArch,
    hyper: &TrainHyper,
    scheme: CodingScheme,
    svm_cfg: &SvmConfig,
    split_seed: u64,
) -> Result<(HybridModel, EvaluationReport)> {
    let cfg = TrainConfig {
        kind: ModelKind::Hybrid,
        scalogram: ScalogramConfig {
            size: arch.input_size,
            ..ScalogramConfig::default()
        },
        pool_size: DEFAULT_POOL_SIZE,
        coding: scheme,
        svm: *svm_cfg,
        hyper: *hyper,
        arch: Some(arch.clone()),
        seed: split_seed,
    };
    let out = train_holdout(dataset, &cfg, DEFAULT_TRAIN_FRACTION)?;
    match out.model.body {
        ModelBody::Hybrid(h) => Ok((h, out.report)),
        _ => unreachable!("hybrid configuration yields a hybrid model"),
    }
}

/// Stratified k-fold cross-validation, retraining the configured model on
/// each fold. Fold `f` uses training seed `mix(cfg.seed, 100 + f)`.
pub fn cross_validate_model(
    dataset: &LabeledDataset,
    cfg: &TrainConfig,
    k: usize,
) -> Result<CvReport> {
    dataset.validate()?;
    let labels = dataset.labels()?;
    let maps = scalograms(&dataset.segments, &cfg.scalogram)?;
    let names: Vec<String> = dataset.class_names.iter().map(|c| c.to_string()).collect();
    let mut fold = 0u64;
    let mut report = cross_validate(&names, &labels, k, cfg.split_seed(), |split| {
        let fold_cfg = TrainConfig {
            seed: mix(cfg.seed, 100 + fold),
            ..cfg.clone()
        };
        fold += 1;
        let train_maps: Vec<&TimeFrequencyMap> = split.train.iter().map(|&i| &maps[i]).collect();
        let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
        let fitted = fit(
            &train_maps,
            &train_labels,
            &dataset.class_names,
            &fold_cfg,
            dataset.master_seed,
        )?;
        let test_maps: Vec<&TimeFrequencyMap> = split.test.iter().map(|&i| &maps[i]).collect();
        Ok(fitted
            .model
            .predict_maps(&test_maps)?
            .into_iter()
            .map(|p| (p.class, p.per_class_score))
            .collect())
    })?;
    report.pooled.runtime_s = 0.0;
    Ok(report)
}
