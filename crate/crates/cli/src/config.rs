use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tcn_aa::augment::AugmentConfig;
use tcn_aa::csi::{SyntheticSpec, DEFAULT_TARGET_PACKETS};
use tcn_aa::dsp::PreprocessOptions;
use tcn_aa::model::ModelConfig;
use tcn_aa::train::{Sweep, TrainConfig};
use toml::{Table, Value};

/// Sections whose `seed` falls back to the global seed when not set.
const SEEDED_SECTIONS: [&str; 3] = ["synth", "augment", "train"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub preprocess: PreprocessOptions,
    pub pipeline: PipelineConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cv: CvConfig,
    pub ablate: AblateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Input manifest, or a directory holding `manifest.csv`.
    pub dataset: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { dataset: None, out: PathBuf::from("out"), checkpoint: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub samples_per_class: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub n_p: usize,
    pub n_s: usize,
    pub base_amplitude: f64,
    pub noise: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = SyntheticSpec::new(12, 20, 0);
        SynthConfig {
            classes: s.classes,
            samples_per_class: s.samples_per_class,
            n_t: s.n_t,
            n_r: s.n_r,
            n_p: s.n_p,
            n_s: s.n_s,
            base_amplitude: s.base_amplitude,
            noise: s.noise,
            jitter: s.jitter,
            seed: s.seed,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            n_t: self.n_t,
            n_r: self.n_r,
            n_p: self.n_p,
            n_s: self.n_s,
            base_amplitude: self.base_amplitude,
            noise: self.noise,
            jitter: self.jitter,
            ..SyntheticSpec::new(self.classes, self.samples_per_class, self.seed)
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentStage {
    /// Mix preprocessed samples.
    #[default]
    Preprocessed,
    /// Mix raw amplitudes, then preprocess.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub target_packets: usize,
    /// Upper bound on packets trimmed from the front; the rest comes off the
    /// tail. Unset trims everything from the front.
    pub steady_state: Option<usize>,
    pub augment_stage: AugmentStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig { target_packets: DEFAULT_TARGET_PACKETS, steady_state: None, augment_stage: AugmentStage::Preprocessed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    /// Run only this fold; unset runs all of them.
    pub fold: Option<usize>,
    /// Augment each fold's training split with `[augment]`.
    pub augment: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 10, fold: None, augment: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub sweep: Sweep,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig { sweep: Sweep::Kernel(vec![2, 7, 15]) }
    }
}

/// Parse `raw` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.into())),
        Err(_) => Value::String(raw.into()),
    }
}

fn set_path(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("malformed override key `{key}`");
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table.entry((*p).to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => bail!("override `{key}`: `{p}` is not a table"),
        };
    }
    table.insert((*last).to_string(), value);
    Ok(())
}

/// Layer defaults, the file, `--seed` and `--set` overrides, in increasing
/// precedence.
pub fn load(path: Option<&Path>, seed: Option<u64>, overrides: &[String]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            text.parse::<Table>().with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Table::new(),
    };
    if let Some(s) = seed {
        table.insert("seed".into(), seed_value(s)?);
    }
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            bail!("override `{o}` is not of the form key=value");
        };
        set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
    }
    let global = table.get("seed").cloned().unwrap_or(Value::Integer(0));
    for section in SEEDED_SECTIONS {
        if let Value::Table(t) = table.entry(section).or_insert_with(|| Value::Table(Table::new())) {
            t.entry("seed").or_insert_with(|| global.clone());
        }
    }
    let cfg: RunConfig = Value::Table(table).try_into().context("invalid configuration")?;
    cfg.validate()?;
    Ok(cfg)
}

fn seed_value(s: u64) -> Result<Value> {
    match i64::try_from(s) {
        Ok(v) => Ok(Value::Integer(v)),
        Err(_) => bail!("seed {s} exceeds the configuration range (at most {})", i64::MAX),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.augment.validate().context("[augment]")?;
        self.model.validate().context("[model]")?;
        self.train.validate().context("[train]")?;
        if self.cv.folds < 2 {
            bail!("[cv] folds must be at least 2, got {}", self.cv.folds);
        }
        if let Some(f) = self.cv.fold {
            if f >= self.cv.folds {
                bail!("[cv] fold {f} is out of range for {} folds", self.cv.folds);
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serialising the resolved configuration")
    }
}

/// Accept either a manifest file or a directory containing `manifest.csv`.
pub fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.csv")
    } else {
        p.to_path_buf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_take_precedence() {
        let cfg = load(None, Some(7), &["train.epochs=3".into(), "model.filters=[4, 4]".into(), "model.dilations=[1, 2]".into()]).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.synth.seed, 7);
        assert_eq!(cfg.augment.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.model.filters, vec![4, 4]);
    }

    #[test]
    fn section_seed_wins_over_global() {
        let cfg = load(None, Some(7), &["augment.seed=11".into()]).unwrap();
        assert_eq!(cfg.augment.seed, 11);
        assert_eq!(cfg.train.seed, 7);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = load(None, None, &["train.epoch=3".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("epoch"), "{err:#}");
        let err = load(None, None, &["bogus=1".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
    }

    #[test]
    fn bare_strings_and_sweeps() {
        let cfg = load(None, None, &["model.attention=none".into(), "ablate.sweep={kind = \"dropout\", values = [0.1, 0.5]}".into()]).unwrap();
        assert_eq!(cfg.model.attention, tcn_aa::model::AttentionPlacement::None);
        assert_eq!(cfg.ablate.sweep, Sweep::Dropout(vec![0.1, 0.5]));
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = load(None, None, &[]).unwrap();
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
