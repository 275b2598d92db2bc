//! Mini-batch training, evaluation and k-fold cross-validation.

mod ablate;
mod adamw;
mod kfold;
mod metrics;

pub use ablate::{ablate, AblationRow, AblationTable, Sweep};
pub use adamw::AdamW;
pub use kfold::KFoldPlan;
pub use metrics::{ConfusionMatrix, EpochRecord, Metrics, Split, Summary};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{expand_dataset, AugmentConfig};
use crate::dsp::PreprocessedSample;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Worker threads for per-sample work; 0 uses the global pool. Results
    /// do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 200,
            base_lr: 1e-3,
            lr_decay: 0.988,
            weight_decay: 1e-4,
            seed: 0,
            shuffle: true,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }
}

/// `base_lr · lr_decay^epoch`
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    cfg.base_lr * cfg.lr_decay.powi(i32::try_from(epoch).unwrap_or(i32::MAX))
}

/// A trained model and its history.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub metrics: Metrics,
}

/// Accuracy, mean loss and confusion matrix of `model` on `samples`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: ConfusionMatrix,
}

fn argmax<T: Scalar>(p: &Tensor<T>) -> usize {
    let mut best = 0;
    for (i, &v) in p.data().iter().enumerate() {
        if v > p.data()[best] {
            best = i;
        }
    }
    best
}

fn cross_entropy<T: Scalar>(p: &Tensor<T>, label: usize) -> f64 {
    -p.data()[label].as_f64().max(crate::tensor::CE_CLAMP).ln()
}

fn with_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Evaluation-mode pass over `samples`.
pub fn evaluate<T: Scalar>(model: &Model<T>, samples: &[PreprocessedSample<T>]) -> Result<Evaluation> {
    let probs: Vec<Tensor<T>> = samples.par_iter().map(|s| model.predict(&s.data)).collect::<Result<_>>()?;
    let mut confusion = ConfusionMatrix::new(model.config().n_classes);
    let mut loss = 0.0;
    for (s, p) in samples.iter().zip(&probs) {
        confusion.record(s.label.id(), argmax(p));
        loss += cross_entropy(p, s.label.id());
    }
    let n = samples.len().max(1) as f64;
    Ok(Evaluation { accuracy: confusion.accuracy(), loss: loss / n, confusion })
}

fn check_dataset<T: Scalar>(samples: &[PreprocessedSample<T>], cfg: &ModelConfig, what: &str) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.label.id() >= cfg.n_classes {
            return Err(Error::Dataset(format!("{what} sample {i} has label {} but the model has {} classes", s.label.id(), cfg.n_classes)));
        }
        if s.features() != cfg.input_features {
            return Err(Error::Dataset(format!("{what} sample {i} has {} features, model expects {}", s.features(), cfg.input_features)));
        }
    }
    Ok(())
}

/// Train a fresh model on `train_set`, validating on `validation` (may be
/// empty) after every epoch.
///
/// Each epoch is shuffled with its own stream; each sample's dropout masks
/// come from a stream keyed by `(epoch, position)`. Per-sample gradients are
/// computed in parallel and summed in batch order, so the result is
/// independent of the thread count.
pub fn train<T: Scalar>(
    train_set: &[PreprocessedSample<T>],
    validation: &[PreprocessedSample<T>],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model_cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Dataset("training set is empty".into()));
    }
    let first = train_set[0].label;
    if train_set.iter().all(|s| s.label == first) {
        return Err(Error::Dataset("training set holds a single class".into()));
    }
    check_dataset(train_set, model_cfg, "training")?;
    check_dataset(validation, model_cfg, "validation")?;
    with_pool(cfg.threads, || train_inner(train_set, validation, model_cfg, cfg))?
}

fn train_inner<T: Scalar>(
    train_set: &[PreprocessedSample<T>],
    validation: &[PreprocessedSample<T>],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    let mut model = Model::<T>::new(model_cfg.clone(), cfg.seed)?;
    let mut opt = AdamW::new(model.params());
    let mut metrics = Metrics::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        if cfg.shuffle {
            use rand::seq::SliceRandom;
            order.sort_unstable();
            order.shuffle(&mut rng::stream(cfg.seed, "shuffle", &[epoch as u64]));
        }
        let lr = lr_at_epoch(cfg, epoch);
        let (mut correct, mut loss_sum) = (0usize, 0.0f64);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(T, Tensor<T>, Vec<Tensor<T>>)> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let position = (b * cfg.batch_size + j) as u64;
                    let mut r = rng::stream(cfg.seed, "dropout", &[epoch as u64, position]);
                    model.loss_and_grads(&train_set[i].data, train_set[i].label.id(), true, &mut r)
                })
                .collect::<Result<_>>()?;
            let mut grads: Vec<Tensor<T>> = model.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
            for ((loss, probs, g), &i) in results.iter().zip(batch) {
                loss_sum += loss.as_f64();
                correct += usize::from(argmax(probs) == train_set[i].label.id());
                for (acc, gi) in grads.iter_mut().zip(g) {
                    for (a, &v) in acc.data_mut().iter_mut().zip(gi.data()) {
                        *a += v;
                    }
                }
            }
            let inv = T::one() / T::of_usize(batch.len());
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= inv));
            opt.step(model.params_mut(), &grads, lr, cfg.weight_decay)?;
        }
        let n = train_set.len() as f64;
        metrics.history.push(EpochRecord { epoch, split: Split::Train, accuracy: correct as f64 / n, loss: loss_sum / n });
        if !validation.is_empty() {
            let ev = evaluate(&model, validation)?;
            metrics.history.push(EpochRecord { epoch, split: Split::Validation, accuracy: ev.accuracy, loss: ev.loss });
            metrics.confusion = Some(ev.confusion);
        }
        metrics.wall_clock.push(started.elapsed().as_secs_f64());
    }
    if metrics.confusion.is_none() && !validation.is_empty() {
        metrics.confusion = Some(evaluate(&model, validation)?.confusion);
    }
    Ok(TrainOutcome { model, metrics })
}

fn subset<T: Clone>(data: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| data[i].clone()).collect()
}

/// Train on every fold but `fold` (augmented with `augment` if given) and
/// validate on `fold`.
pub fn run_fold<T: Scalar>(
    dataset: &[PreprocessedSample<T>],
    plan: &KFoldPlan,
    fold: usize,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    augment: Option<&AugmentConfig>,
) -> Result<TrainOutcome<T>> {
    if fold >= plan.k() {
        return Err(Error::InvalidArgument(format!("fold {fold} of a {}-fold plan", plan.k())));
    }
    let mut train_set = subset(dataset, &plan.training(fold));
    let validation = subset(dataset, plan.validation(fold));
    for class in 0..model_cfg.n_classes {
        let in_data = dataset.iter().any(|s| s.label.id() == class);
        if in_data && !train_set.iter().any(|s| s.label.id() == class) {
            return Err(Error::Dataset(format!("class {class} is absent from the training split of fold {fold}")));
        }
    }
    if let Some(a) = augment {
        let a = AugmentConfig { seed: rng::derive_seed(a.seed, "fold", &[fold as u64]), ..a.clone() };
        train_set = expand_dataset(&train_set, &a)?;
    }
    train(&train_set, &validation, model_cfg, train_cfg)
}

#[derive(Clone, Debug)]
pub struct KFoldReport {
    pub folds: Vec<Metrics>,
    /// Final-epoch validation accuracy of each fold.
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

/// Train `k` models, each validated on its held-out fold.
pub fn kfold_evaluate<T: Scalar>(
    dataset: &[PreprocessedSample<T>],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    k: usize,
    augment: Option<&AugmentConfig>,
) -> Result<KFoldReport> {
    let labels: Vec<_> = dataset.iter().map(|s| s.label).collect();
    let plan = KFoldPlan::new(&labels, k, train_cfg.seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        folds.push(run_fold(dataset, &plan, fold, model_cfg, train_cfg, augment)?.metrics);
    }
    let accuracies: Vec<f64> = folds.iter().map(|m| m.last(Split::Validation).map_or(0.0, |r| r.accuracy)).collect();
    let mean_accuracy = accuracies.iter().sum::<f64>() / k as f64;
    Ok(KFoldReport { folds, accuracies, mean_accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::InteractionLabel;
    use rand::Rng;

    fn lr_cfg(base: f64) -> TrainConfig {
        TrainConfig { base_lr: base, ..Default::default() }
    }

    #[test]
    fn lr_schedule() {
        let c = lr_cfg(0.01);
        assert_eq!(lr_at_epoch(&c, 0), 0.01);
        assert!((lr_at_epoch(&c, 1) - 0.00988).abs() < 1e-15);
        assert!((lr_at_epoch(&c, 10) / 0.01 - 0.8862).abs() / 0.8862 < 1e-4);
        for e in 0..50 {
            assert!(lr_at_epoch(&c, e + 1) < lr_at_epoch(&c, e));
        }
    }

    /// Two classes told apart by when a burst happens. (Not by its sign:
    /// attention output H ⊙ A is even in H.)
    fn two_class(n: usize, seed: u64) -> Vec<PreprocessedSample<f64>> {
        let mut r = rng::stream(seed, "two-class", &[]);
        (0..n)
            .map(|i| {
                let c = i % 2;
                let data = Tensor::from_fn([2, 12, 3], |j| {
                    let t = (j / 3) % 12;
                    let burst = if (t >= 6) == (c == 1) { 0.8 } else { 0.0 };
                    burst + r.random_range(-0.2..0.2)
                });
                PreprocessedSample::new(data, InteractionLabel::new(c).unwrap()).unwrap()
            })
            .collect()
    }

    fn tiny() -> ModelConfig {
        ModelConfig { input_features: 3, kernel: 3, dropout: 0.1, n_classes: 2, ..Default::default() }.with_filters(vec![6, 6])
    }

    #[test]
    fn separable_data_is_learned() {
        let data = two_class(24, 1);
        let cfg = TrainConfig { epochs: 50, batch_size: 8, base_lr: 0.01, seed: 2, ..Default::default() };
        let out = train(&data, &[], &tiny(), &cfg).unwrap();
        assert_eq!(out.metrics.best_accuracy(Split::Train), Some(1.0), "{}", out.metrics.to_csv());
        assert_eq!(evaluate(&out.model, &data).unwrap().accuracy, 1.0);
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let data = two_class(6, 1);
        let cfg = TrainConfig { epochs: 0, seed: 5, ..Default::default() };
        let out = train(&data, &data, &tiny(), &cfg).unwrap();
        assert!(out.metrics.history.is_empty());
        assert_eq!(out.model, Model::new(tiny(), 5).unwrap());
    }

    #[test]
    fn deterministic_across_runs_and_threads() {
        let data = two_class(20, 3);
        let cfg = TrainConfig { epochs: 3, batch_size: 6, base_lr: 0.01, seed: 9, ..Default::default() };
        let a = train(&data[..14], &data[14..], &tiny(), &cfg).unwrap();
        let b = train(&data[..14], &data[14..], &tiny(), &TrainConfig { threads: 3, ..cfg.clone() }).unwrap();
        assert_eq!(a.metrics.to_csv(), b.metrics.to_csv());
        assert_eq!(a.model, b.model);
        let c = train(&data[..14], &data[14..], &tiny(), &TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn rejects_bad_datasets() {
        let data = two_class(6, 1);
        let cfg = TrainConfig { epochs: 1, ..Default::default() };
        assert!(train::<f64>(&[], &[], &tiny(), &cfg).is_err());
        let one_class: Vec<_> = data.iter().filter(|s| s.label.id() == 0).cloned().collect();
        assert!(train(&one_class, &[], &tiny(), &cfg).is_err());
        let wrong_width = ModelConfig { input_features: 4, ..tiny() };
        assert!(train(&data, &[], &wrong_width, &cfg).is_err());
    }

    #[test]
    fn confusion_matches_validation_size() {
        let data = two_class(16, 4);
        let cfg = TrainConfig { epochs: 2, batch_size: 4, seed: 1, ..Default::default() };
        let report = kfold_evaluate(&data, &tiny(), &cfg, 4, None).unwrap();
        assert_eq!(report.folds.len(), 4);
        for m in &report.folds {
            let c = m.confusion.as_ref().unwrap();
            assert_eq!(c.total(), 4);
            assert_eq!(c.row_sums()[..2], [2, 2]);
            assert_eq!(m.last(Split::Validation).unwrap().accuracy, c.accuracy());
        }
        let mean = report.accuracies.iter().sum::<f64>() / 4.0;
        assert_eq!(report.mean_accuracy, mean);
    }
}
