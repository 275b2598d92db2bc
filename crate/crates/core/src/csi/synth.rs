//! Deterministic synthetic CSI for desk-scale experiments.
//!
//! Every class gets a time–frequency signature: a sinusoidal (optionally
//! chirped) amplitude modulation under a Gaussian burst envelope, whose
//! strength varies across subcarriers with a class-specific spatial pattern.
//! Samples of a class differ only through seeded additive noise and, when
//! `jitter > 0`, small per-sample perturbations of the signature.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ComplexSample, CsiRecording, DatasetManifest, InteractionLabel, ManifestEntry, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng;

/// Modulation pattern that identifies one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    /// Modulation frequency in cycles per packet.
    pub frequency: f64,
    /// Frequency drift across the whole recording, cycles per packet.
    pub chirp: f64,
    /// Burst centre as a fraction of the recording length.
    pub burst_center: f64,
    /// Burst standard deviation as a fraction of the recording length.
    pub burst_width: f64,
    /// Peak relative modulation depth, in `(0, 1)`.
    pub depth: f64,
    /// Cycles of modulation-strength variation across the subcarriers.
    pub spatial: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub n_p: usize,
    pub n_s: usize,
    pub signatures: Vec<ClassSignature>,
    /// Mean static amplitude in ADC units.
    pub base_amplitude: f64,
    /// Half-width of the uniform noise added to `re` and `im`, ADC units.
    pub noise: f64,
    /// Per-sample signature perturbation strength in `[0, 1]`.
    pub jitter: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Paper-shaped geometry (2×3 antennas, 1500 packets, 30 subcarriers)
    /// with default signatures.
    pub fn new(classes: usize, samples_per_class: usize, seed: u64) -> Self {
        let mut spec = SyntheticSpec {
            classes,
            samples_per_class,
            n_t: 2,
            n_r: 3,
            n_p: 1500,
            n_s: 30,
            signatures: Vec::new(),
            base_amplitude: 40.0,
            noise: 4.0,
            jitter: 0.0,
            seed,
        };
        spec.signatures = default_signatures(classes);
        spec
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(2..=NUM_CLASSES).contains(&self.classes) {
            return bad(format!("synthetic classes must be in 2..={NUM_CLASSES}, got {}", self.classes));
        }
        if self.samples_per_class == 0 {
            return bad("samples_per_class must be positive".into());
        }
        for (name, v) in [("n_t", self.n_t), ("n_r", self.n_r), ("n_p", self.n_p), ("n_s", self.n_s)] {
            if v == 0 || v > usize::from(u16::MAX) {
                return bad(format!("{name} = {v} outside 1..=65535"));
            }
        }
        if self.signatures.len() != self.classes {
            return bad(format!("{} signatures for {} classes", self.signatures.len(), self.classes));
        }
        if !(self.noise >= 0.0 && self.base_amplitude >= 0.0 && (0.0..=1.0).contains(&self.jitter)) {
            return bad("noise and base_amplitude must be non-negative, jitter in [0, 1]".into());
        }
        for (c, s) in self.signatures.iter().enumerate() {
            if !(s.depth > 0.0 && s.depth < 1.0 && s.burst_width > 0.0 && s.frequency >= 0.0) {
                return bad(format!("signature of class {c} is out of range: {s:?}"));
            }
        }
        Ok(())
    }
}

/// Signatures spread evenly over frequency, burst position and spatial
/// pattern. Frequencies stay below 0.04 cycles/packet so they survive the
/// default low-pass stage.
pub fn default_signatures(classes: usize) -> Vec<ClassSignature> {
    let denom = classes.saturating_sub(1).max(1) as f64;
    (0..classes)
        .map(|c| {
            let u = c as f64 / denom;
            ClassSignature {
                frequency: 0.004 + 0.032 * u,
                chirp: if c % 2 == 0 { 0.0 } else { 0.006 },
                burst_center: 0.35 + 0.4 * ((c * 5) % classes) as f64 / denom,
                burst_width: 0.18 + 0.06 * (c % 3) as f64,
                depth: 0.6,
                spatial: 0.5 + (c % 4) as f64 * 0.5,
            }
        })
        .collect()
}

/// Generated recordings and the manifest describing them.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub recordings: Vec<CsiRecording>,
}

/// Generate every recording of `spec`. Pure in `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut entries = Vec::new();
    let mut recordings = Vec::new();
    for class in 0..spec.classes {
        let label = InteractionLabel::new(class)?;
        for sample in 0..spec.samples_per_class {
            recordings.push(generate_one(spec, class, sample)?);
            entries.push(ManifestEntry {
                path: PathBuf::from(format!("class{class:02}/sample{sample:04}.csi")),
                label,
                pair_id: (sample / 10) as u32,
                trial_id: (sample % 10) as u32,
            });
        }
    }
    Ok(SyntheticDataset { manifest: DatasetManifest::new(entries)?, recordings })
}

/// Write recordings under `dir` plus `dir/manifest.csv`.
pub fn write_synthetic(dir: impl AsRef<Path>, data: &SyntheticDataset) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for (entry, rec) in data.manifest.entries().iter().zip(&data.recordings) {
        let path = DatasetManifest::resolve(dir, entry);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        rec.save(&path)?;
    }
    let manifest = dir.join("manifest.csv");
    data.manifest.save(&manifest)?;
    Ok(manifest)
}

fn quantize(v: f64) -> Result<i8> {
    let q = v.round();
    if !(-128.0..=127.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "synthetic value {v:.2} exceeds the signed 8-bit range; lower base_amplitude, depth or noise"
        )));
    }
    Ok(q as i8)
}

fn generate_one(spec: &SyntheticSpec, class: usize, sample: usize) -> Result<CsiRecording> {
    let sig = &spec.signatures[class];
    let mut rng = rng::stream(spec.seed, "synth", &[class as u64, sample as u64]);
    let j = spec.jitter;
    let mut sym = |scale: f64| if j > 0.0 { j * scale * rng.random_range(-1.0..=1.0) } else { 0.0 };
    let phase = sym(std::f64::consts::PI);
    let freq_scale = 1.0 + sym(0.15);
    let center_shift = sym(0.15);
    let gain = 1.0 + sym(0.3);

    let n_p = spec.n_p as f64;
    let n_pairs = spec.n_t * spec.n_r;
    let freq = sig.frequency * freq_scale;
    let center = (sig.burst_center + center_shift) * n_p;
    let width = sig.burst_width * n_p;

    let modulation: Vec<f64> = (0..spec.n_p)
        .map(|t| {
            let t = t as f64;
            let envelope = (-0.5 * ((t - center) / width).powi(2)).exp();
            let psi = TAU * (freq * t + 0.5 * sig.chirp * t * t / n_p) + phase;
            sig.depth * gain.min(1.0 / sig.depth) * envelope * psi.sin()
        })
        .collect();

    let mut data = Vec::with_capacity(n_pairs * spec.n_p * spec.n_s);
    for pair in 0..n_pairs {
        let pf = pair as f64;
        for (t, &m) in modulation.iter().enumerate() {
            for s in 0..spec.n_s {
                let sf = s as f64 / spec.n_s as f64;
                let profile = spec.base_amplitude * (0.75 + 0.25 * (TAU * 1.3 * sf + 0.9 * pf).cos());
                let spatial = 0.5 + 0.5 * (TAU * sig.spatial * sf + 0.7 * pf).cos();
                let amp = profile * (1.0 + m * spatial);
                let theta = TAU * (0.07 * s as f64 + 0.31 * pf) + 0.002 * t as f64;
                let (mut re, mut im) = (amp * theta.cos(), amp * theta.sin());
                if spec.noise > 0.0 {
                    re += rng.random_range(-spec.noise..=spec.noise);
                    im += rng.random_range(-spec.noise..=spec.noise);
                }
                data.push(ComplexSample::new(quantize(re)?, quantize(im)?));
            }
        }
    }
    CsiRecording::new(spec.n_t, spec.n_r, spec.n_p, spec.n_s, data)
}
