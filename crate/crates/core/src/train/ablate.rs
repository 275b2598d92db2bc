use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_fold, KFoldPlan, Metrics, Split, TrainConfig};
use crate::augment::{AugmentConfig, AugmentMethod};
use crate::dsp::PreprocessedSample;
use crate::error::{Error, Result};
use crate::model::{AttentionPlacement, ModelConfig};
use crate::scalar::Scalar;

/// One hyper-parameter varied over a list of values, everything else fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    Kernel(Vec<usize>),
    Dropout(Vec<f64>),
    /// Each point is a set of methods; the empty set trains on raw data.
    Augmentation(Vec<Vec<AugmentMethod>>),
    Attention(Vec<AttentionPlacement>),
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Kernel(_) => "kernel",
            Sweep::Dropout(_) => "dropout",
            Sweep::Augmentation(_) => "augmentation",
            Sweep::Attention(_) => "attention",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Kernel(v) => v.len(),
            Sweep::Dropout(v) => v.len(),
            Sweep::Augmentation(v) => v.len(),
            Sweep::Attention(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub best_val_accuracy: f64,
    /// First epoch whose training accuracy reached 0.9.
    pub epochs_to_90_train: Option<usize>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub sweep: String,
    /// How the validation split was chosen.
    pub protocol: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("setting,train_accuracy,train_loss,val_accuracy,val_loss,best_val_accuracy,epochs_to_90_train\n");
        for r in &self.rows {
            let e90 = r.epochs_to_90_train.map_or(String::new(), |e| e.to_string());
            let _ = writeln!(
                s,
                "{},{:?},{:?},{:?},{:?},{:?},{}",
                r.setting, r.train_accuracy, r.train_loss, r.val_accuracy, r.val_loss, r.best_val_accuracy, e90
            );
        }
        s
    }

    pub fn row(&self, setting: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }
}

fn method_set_name(methods: &[AugmentMethod]) -> String {
    if methods.is_empty() {
        "raw".into()
    } else {
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join("+")
    }
}

fn placement_name(p: AttentionPlacement) -> &'static str {
    match p {
        AttentionPlacement::PreTcnOnly => "pre_tcn_only",
        AttentionPlacement::PostTcn => "post_tcn",
        AttentionPlacement::EveryLayer => "every_layer",
        AttentionPlacement::None => "none",
    }
}

/// Train and validate once per sweep point on fold 0 of a stratified
/// `k`-fold plan seeded by `train_cfg.seed`.
///
/// `augment` applies to every point of non-augmentation sweeps; for an
/// augmentation sweep it supplies everything but the method set.
pub fn ablate<T: Scalar>(
    dataset: &[PreprocessedSample<T>],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    augment: Option<&AugmentConfig>,
    k: usize,
    sweep: &Sweep,
) -> Result<AblationTable> {
    if sweep.is_empty() {
        return Err(Error::InvalidArgument(format!("{} sweep has no points", sweep.name())));
    }
    let labels: Vec<_> = dataset.iter().map(|s| s.label).collect();
    let plan = KFoldPlan::new(&labels, k, train_cfg.seed)?;
    let mut points: Vec<(String, ModelConfig, Option<AugmentConfig>)> = Vec::new();
    let base_aug = augment.cloned();
    match sweep {
        Sweep::Kernel(ks) => {
            for &kernel in ks {
                points.push((format!("k={kernel}"), ModelConfig { kernel, ..model_cfg.clone() }, base_aug.clone()));
            }
        }
        Sweep::Dropout(ps) => {
            for &dropout in ps {
                points.push((format!("dropout={dropout}"), ModelConfig { dropout, ..model_cfg.clone() }, base_aug.clone()));
            }
        }
        Sweep::Augmentation(sets) => {
            let base = base_aug.clone().unwrap_or_default();
            for methods in sets {
                let aug = (!methods.is_empty()).then(|| AugmentConfig { methods: methods.clone(), ..base.clone() });
                points.push((method_set_name(methods), model_cfg.clone(), aug));
            }
        }
        Sweep::Attention(ps) => {
            for &attention in ps {
                points.push((placement_name(attention).into(), ModelConfig { attention, ..model_cfg.clone() }, base_aug.clone()));
            }
        }
    }
    let mut rows = Vec::with_capacity(points.len());
    for (setting, mcfg, aug) in points {
        let out = run_fold(dataset, &plan, 0, &mcfg, train_cfg, aug.as_ref())?;
        let m = out.metrics;
        let last_train = m.last(Split::Train);
        let last_val = m.last(Split::Validation);
        rows.push(AblationRow {
            setting,
            train_accuracy: last_train.map_or(0.0, |r| r.accuracy),
            train_loss: last_train.map_or(f64::NAN, |r| r.loss),
            val_accuracy: last_val.map_or(0.0, |r| r.accuracy),
            val_loss: last_val.map_or(f64::NAN, |r| r.loss),
            best_val_accuracy: m.best_accuracy(Split::Validation).unwrap_or(0.0),
            epochs_to_90_train: m.epochs_to_reach(Split::Train, 0.9),
            metrics: m,
        });
    }
    Ok(AblationTable {
        sweep: sweep.name().into(),
        protocol: format!("validation on fold 0 of a stratified {k}-fold plan, seed {}", train_cfg.seed),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::InteractionLabel;
    use crate::tensor::Tensor;

    #[test]
    fn one_row_per_point() {
        let data: Vec<_> = (0..8)
            .map(|i| {
                let x = Tensor::from_fn([1, 8, 2], |j| ((i * 7 + j) as f64 * 0.3).sin());
                PreprocessedSample::new(x, InteractionLabel::new(i % 2).unwrap()).unwrap()
            })
            .collect();
        let mcfg = ModelConfig { input_features: 2, n_classes: 2, kernel: 2, ..Default::default() }.with_filters(vec![3]);
        let tcfg = TrainConfig { epochs: 1, batch_size: 4, ..Default::default() };
        let t = ablate(&data, &mcfg, &tcfg, None, 2, &Sweep::Kernel(vec![2, 3, 7, 15])).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.to_csv().lines().count(), 5);
        assert!(t.row("k=15").is_some());
        let single = ablate(&data, &mcfg, &tcfg, None, 2, &Sweep::Dropout(vec![0.2])).unwrap();
        assert_eq!(single.rows.len(), 1);
        let aug = Sweep::Augmentation(vec![vec![], vec![AugmentMethod::Dropout]]);
        let t = ablate(&data, &mcfg, &tcfg, None, 2, &aug).unwrap();
        assert_eq!(t.rows[0].setting, "raw");
        assert_eq!(t.rows[1].setting, "dropout");
        assert!(ablate(&data, &mcfg, &tcfg, None, 2, &Sweep::Kernel(vec![])).is_err());
    }
}
