use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub accuracy: f64,
    pub loss: f64,
}

/// Counts indexed `[true class][predicted class]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; classes]; classes] }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `trace / total`, or 0 when empty.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }
}

/// Training history of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub history: Vec<EpochRecord>,
    /// Validation confusion matrix after the last epoch.
    pub confusion: Option<ConfusionMatrix>,
    /// Seconds per epoch. Kept out of the CSV so metrics files are
    /// reproducible byte for byte.
    #[serde(skip)]
    pub wall_clock: Vec<f64>,
}

impl Metrics {
    pub fn epochs(&self) -> usize {
        self.history.iter().map(|r| r.epoch + 1).max().unwrap_or(0)
    }

    pub fn series(&self, split: Split) -> Vec<EpochRecord> {
        self.history.iter().copied().filter(|r| r.split == split).collect()
    }

    pub fn last(&self, split: Split) -> Option<EpochRecord> {
        self.history.iter().rev().copied().find(|r| r.split == split)
    }

    pub fn best_accuracy(&self, split: Split) -> Option<f64> {
        self.series(split).iter().map(|r| r.accuracy).reduce(f64::max)
    }

    /// First epoch (1-based count) whose accuracy reaches `threshold`.
    pub fn epochs_to_reach(&self, split: Split, threshold: f64) -> Option<usize> {
        self.series(split).iter().find(|r| r.accuracy >= threshold).map(|r| r.epoch + 1)
    }

    /// `epoch,split,accuracy,loss` with a header line; floats use the
    /// shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,split,accuracy,loss\n");
        for r in &self.history {
            let _ = writeln!(s, "{},{},{:?},{:?}", r.epoch, r.split.name(), r.accuracy, r.loss);
        }
        s
    }

    pub fn summary(&self) -> Summary {
        Summary {
            epochs: self.epochs(),
            final_train_accuracy: self.last(Split::Train).map(|r| r.accuracy),
            final_train_loss: self.last(Split::Train).map(|r| r.loss),
            final_validation_accuracy: self.last(Split::Validation).map(|r| r.accuracy),
            final_validation_loss: self.last(Split::Validation).map(|r| r.loss),
            best_validation_accuracy: self.best_accuracy(Split::Validation),
            confusion: self.confusion.clone(),
        }
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("metrics.csv", self.to_csv())?;
        write("summary.json", to_json(&self.summary())?)?;
        let timing: String = self.wall_clock.iter().enumerate().map(|(e, s)| format!("{e},{s:.6}\n")).collect();
        write("timing.csv", format!("epoch,seconds\n{timing}"))
    }
}

pub(crate) fn to_json<S: Serialize>(v: &S) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: usize,
    pub final_train_accuracy: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub final_validation_accuracy: Option<f64>,
    pub final_validation_loss: Option<f64>,
    pub best_validation_accuracy: Option<f64>,
    pub confusion: Option<ConfusionMatrix>,
}
