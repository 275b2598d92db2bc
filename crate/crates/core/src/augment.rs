//! Sample-level augmentation on preprocessed tensors.
//!
//! Three operators: random value dropout, and the three-way mix
//! `D = A·(1−ε₁) + B·ε₂ + C·ε₃` with donors drawn either from other classes
//! or from the same class. `D` always keeps the label of `A`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::PreprocessedSample;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    Dropout,
    MixOther,
    MixSame,
}

impl AugmentMethod {
    pub const ALL: [AugmentMethod; 3] = [AugmentMethod::Dropout, AugmentMethod::MixOther, AugmentMethod::MixSame];

    pub fn name(self) -> &'static str {
        match self {
            AugmentMethod::Dropout => "dropout",
            AugmentMethod::MixOther => "mix_other",
            AugmentMethod::MixSame => "mix_same",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            AugmentMethod::Dropout => 0,
            AugmentMethod::MixOther => 1,
            AugmentMethod::MixSame => 2,
        }
    }
}

impl std::fmt::Display for AugmentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// λ is drawn from `(0, dropout_lambda_max)` per augmented sample.
    pub dropout_lambda_max: f64,
    /// Each ε_k is drawn from `(0, mix_epsilon_max)` per mixing event.
    pub mix_epsilon_max: f64,
    pub methods: Vec<AugmentMethod>,
    pub copies: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            dropout_lambda_max: 0.07,
            mix_epsilon_max: 0.05,
            methods: AugmentMethod::ALL.to_vec(),
            copies: 1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dropout_lambda_max > 0.0 && self.dropout_lambda_max < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dropout_lambda_max must lie in (0, 1), got {}",
                self.dropout_lambda_max
            )));
        }
        if !(self.mix_epsilon_max > 0.0 && self.mix_epsilon_max < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "mix_epsilon_max must lie in (0, 0.5), got {}",
                self.mix_epsilon_max
            )));
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(Error::InvalidArgument(format!("augmentation method {m} listed twice")));
            }
        }
        Ok(())
    }
}

/// Zero each scalar independently with probability `lambda`.
///
/// `lambda = 0` returns the input unchanged and `lambda = 1` zeroes
/// everything.
pub fn dropout_with_lambda<T: Scalar, R: Rng + ?Sized>(
    s: &PreprocessedSample<T>,
    lambda: f64,
    rng: &mut R,
) -> Result<PreprocessedSample<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("dropout probability {lambda} outside [0, 1]")));
    }
    let mut out = s.clone();
    for v in out.data.data_mut() {
        if rng.random::<f64>() < lambda {
            *v = T::zero();
        }
    }
    Ok(out)
}

/// Value dropout with λ drawn uniformly from `(0, lambda_max)`.
pub fn dropout_augment<T: Scalar, R: Rng + ?Sized>(
    s: &PreprocessedSample<T>,
    lambda_max: f64,
    rng: &mut R,
) -> Result<PreprocessedSample<T>> {
    let lambda = open_interval(rng, lambda_max);
    dropout_with_lambda(s, lambda, rng)
}

/// `D = A·(1−ε₁) + B·ε₂ + C·ε₃`, labelled like `A`.
pub fn mix_samples<T: Scalar>(
    a: &PreprocessedSample<T>,
    b: &PreprocessedSample<T>,
    c: &PreprocessedSample<T>,
    eps: [f64; 3],
) -> Result<PreprocessedSample<T>> {
    if b.data.shape() != a.data.shape() || c.data.shape() != a.data.shape() {
        return Err(Error::shape(
            "mix_samples",
            format!("{:?}, {:?}, {:?}", a.data.shape(), b.data.shape(), c.data.shape()),
        ));
    }
    if let Some(e) = eps.iter().find(|e| !(**e >= 0.0 && **e < 0.5)) {
        return Err(Error::InvalidArgument(format!("mixing weight {e} outside [0, 0.5)")));
    }
    let (ka, kb, kc) = (T::of(1.0 - eps[0]), T::of(eps[1]), T::of(eps[2]));
    let mut out = a.clone();
    for ((d, &x), (&y, &z)) in out.data.data_mut().iter_mut().zip(a.data.data()).zip(b.data.data().iter().zip(c.data.data())) {
        *d = x * ka + y * kb + z * kc;
    }
    Ok(out)
}

/// Donors and weights chosen for one mixing event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixDraw {
    pub b: usize,
    pub c: usize,
    pub eps: [f64; 3],
}

fn open_interval<R: Rng + ?Sized>(rng: &mut R, hi: f64) -> f64 {
    // random::<f64>() is in [0, 1); flip it to get (0, 1].
    let u = 1.0 - rng.random::<f64>();
    (u * hi).min(hi * (1.0 - f64::EPSILON))
}

fn draw_eps<R: Rng + ?Sized>(rng: &mut R, eps_max: f64) -> [f64; 3] {
    [open_interval(rng, eps_max), open_interval(rng, eps_max), open_interval(rng, eps_max)]
}

/// The `k`-th index (in dataset order) satisfying `keep`.
fn nth_eligible<T>(dataset: &[PreprocessedSample<T>], keep: impl Fn(usize) -> bool, k: usize) -> usize {
    (0..dataset.len()).filter(|&i| keep(i)).nth(k).expect("k below eligible count")
}

fn check_anchor<T>(dataset: &[PreprocessedSample<T>], a: usize) -> Result<()> {
    if a >= dataset.len() {
        return Err(Error::InvalidArgument(format!("sample index {a} outside a dataset of {}", dataset.len())));
    }
    Ok(())
}

/// Pick `B`, `C` uniformly (with replacement) among samples whose label
/// differs from `dataset[a]`, plus fresh weights.
pub fn draw_mix_other<T, R: Rng + ?Sized>(
    dataset: &[PreprocessedSample<T>],
    a: usize,
    eps_max: f64,
    rng: &mut R,
) -> Result<MixDraw> {
    check_anchor(dataset, a)?;
    let label = dataset[a].label;
    let keep = |i: usize| dataset[i].label != label;
    let n = (0..dataset.len()).filter(|&i| keep(i)).count();
    if n == 0 {
        return Err(Error::Dataset(format!("no donor with a label other than {label}")));
    }
    let b = nth_eligible(dataset, keep, rng.random_range(0..n));
    let c = nth_eligible(dataset, keep, rng.random_range(0..n));
    Ok(MixDraw { b, c, eps: draw_eps(rng, eps_max) })
}

/// Pick two distinct same-label donors, neither of them `a`, plus weights.
pub fn draw_mix_same<T, R: Rng + ?Sized>(
    dataset: &[PreprocessedSample<T>],
    a: usize,
    eps_max: f64,
    rng: &mut R,
) -> Result<MixDraw> {
    check_anchor(dataset, a)?;
    let label = dataset[a].label;
    let keep = |i: usize| i != a && dataset[i].label == label;
    let n = (0..dataset.len()).filter(|&i| keep(i)).count();
    if n < 2 {
        return Err(Error::Dataset(format!("class {label} needs at least 2 other samples to mix, found {n}")));
    }
    let kb = rng.random_range(0..n);
    let mut kc = rng.random_range(0..n - 1);
    if kc >= kb {
        kc += 1;
    }
    let b = nth_eligible(dataset, keep, kb);
    let c = nth_eligible(dataset, keep, kc);
    Ok(MixDraw { b, c, eps: draw_eps(rng, eps_max) })
}

fn apply_draw<T: Scalar>(dataset: &[PreprocessedSample<T>], a: usize, d: MixDraw) -> Result<PreprocessedSample<T>> {
    mix_samples(&dataset[a], &dataset[d.b], &dataset[d.c], d.eps)
}

pub fn mix_other<T: Scalar, R: Rng + ?Sized>(
    dataset: &[PreprocessedSample<T>],
    a: usize,
    eps_max: f64,
    rng: &mut R,
) -> Result<PreprocessedSample<T>> {
    let d = draw_mix_other(dataset, a, eps_max, rng)?;
    apply_draw(dataset, a, d)
}

pub fn mix_same<T: Scalar, R: Rng + ?Sized>(
    dataset: &[PreprocessedSample<T>],
    a: usize,
    eps_max: f64,
    rng: &mut R,
) -> Result<PreprocessedSample<T>> {
    let d = draw_mix_same(dataset, a, eps_max, rng)?;
    apply_draw(dataset, a, d)
}

/// One augmented copy of `dataset[a]`.
pub fn augment_one<T: Scalar, R: Rng + ?Sized>(
    dataset: &[PreprocessedSample<T>],
    a: usize,
    method: AugmentMethod,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<PreprocessedSample<T>> {
    match method {
        AugmentMethod::Dropout => {
            check_anchor(dataset, a)?;
            dropout_augment(&dataset[a], cfg.dropout_lambda_max, rng)
        }
        AugmentMethod::MixOther => mix_other(dataset, a, cfg.mix_epsilon_max, rng),
        AugmentMethod::MixSame => mix_same(dataset, a, cfg.mix_epsilon_max, rng),
    }
}

/// Originals first, then for each method in `cfg.methods` and each copy, one
/// augmented sample per original, in original order. Donors come from the
/// originals only.
///
/// Every output sample has its own RNG stream keyed by
/// `(method, copy, index)`, so the result does not depend on thread count.
pub fn expand_dataset<T: Scalar>(dataset: &[PreprocessedSample<T>], cfg: &AugmentConfig) -> Result<Vec<PreprocessedSample<T>>> {
    cfg.validate()?;
    let mut out = dataset.to_vec();
    for &method in &cfg.methods {
        for copy in 0..cfg.copies {
            let batch: Vec<PreprocessedSample<T>> = (0..dataset.len())
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(cfg.seed, "augment", &[method.stream_id(), copy as u64, i as u64]);
                    augment_one(dataset, i, method, cfg, &mut r)
                })
                .collect::<Result<_>>()?;
            out.extend(batch);
        }
    }
    Ok(out)
}

/// Index of the original that output `j` of [`expand_dataset`] derives from.
pub fn expansion_source(j: usize, n_original: usize) -> usize {
    j % n_original
}
