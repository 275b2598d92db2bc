//! Preprocessing chain: amplitude → per-pair min-max normalisation →
//! Butterworth low-pass along time → cascaded Haar DWT (approximation only).

mod butterworth;
mod container;
mod dwt;
mod normalize;

pub use butterworth::{
    apply_filter, apply_filter_mode, design_butterworth_lowpass, FilterMode, FilterSpec, IirCoefficients,
};
pub use container::{class_counts, decode_sample, encode_sample, load_dataset, load_sample, save_dataset, save_sample, Dataset, CSP_MAGIC};
pub use dwt::{dwt_approx, dwt_approx_time, dwt_detail, WaveletFamily, WaveletSpec};
pub use normalize::minmax_normalize;

use serde::{Deserialize, Serialize};

use crate::csi::{amplitude, CsiRecording, InteractionLabel};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Model-ready sample of shape `(pairs, time, subcarriers)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessedSample<T> {
    pub data: Tensor<T>,
    pub label: InteractionLabel,
}

impl<T: Scalar> PreprocessedSample<T> {
    pub fn new(data: Tensor<T>, label: InteractionLabel) -> Result<Self> {
        if data.ndim() != 3 {
            return Err(Error::shape("PreprocessedSample", format!("expected 3-D, got {:?}", data.shape())));
        }
        if !data.all_finite() {
            return Err(Error::NonFinite("PreprocessedSample"));
        }
        Ok(PreprocessedSample { data, label })
    }

    pub fn pairs(&self) -> usize {
        self.data.dim(0)
    }

    pub fn time(&self) -> usize {
        self.data.dim(1)
    }

    pub fn features(&self) -> usize {
        self.data.dim(2)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    NormalizeThenFilter,
    FilterThenNormalize,
}

/// Full preprocessing configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessOptions {
    pub filter: FilterSpec,
    pub wavelet: WaveletSpec,
    pub order: StageOrder,
    pub filter_mode: FilterMode,
}

/// Filter every `(pair, subcarrier)` series along the time axis.
pub fn filter_time<T: Scalar>(x: &Tensor<T>, coeffs: &IirCoefficients, mode: FilterMode) -> Result<Tensor<T>> {
    if x.ndim() != 3 {
        return Err(Error::shape("filter_time", format!("expected 3-D, got {:?}", x.shape())));
    }
    let (pairs, len, subs) = (x.dim(0), x.dim(1), x.dim(2));
    let mut out = x.clone();
    let mut series = vec![T::zero(); len];
    for p in 0..pairs {
        for s in 0..subs {
            for (t, v) in series.iter_mut().enumerate() {
                *v = x.data()[(p * len + t) * subs + s];
            }
            let y = apply_filter_mode(&series, coeffs, mode);
            for (t, v) in y.into_iter().enumerate() {
                out.data_mut()[(p * len + t) * subs + s] = v;
            }
        }
    }
    Ok(out)
}

/// Run the chain on an amplitude tensor `(pairs, packets, subcarriers)`.
pub fn preprocess_amplitude<T: Scalar>(amp: &Tensor<T>, opts: &PreprocessOptions) -> Result<Tensor<T>> {
    opts.wavelet.validate()?;
    let coeffs = design_butterworth_lowpass(&opts.filter)?;
    if amp.ndim() != 3 {
        return Err(Error::shape("preprocess", format!("expected 3-D amplitude, got {:?}", amp.shape())));
    }
    let factor = 1usize
        .checked_shl(opts.wavelet.levels as u32)
        .filter(|&f| f > 0)
        .ok_or_else(|| Error::InvalidArgument("too many wavelet levels".into()))?;
    if !amp.dim(1).is_multiple_of(factor) {
        return Err(Error::InvalidArgument(format!(
            "{} packets are not divisible by 2^{} for the wavelet stage",
            amp.dim(1),
            opts.wavelet.levels
        )));
    }
    let smoothed = match opts.order {
        StageOrder::NormalizeThenFilter => filter_time(&minmax_normalize(amp)?, &coeffs, opts.filter_mode)?,
        StageOrder::FilterThenNormalize => minmax_normalize(&filter_time(amp, &coeffs, opts.filter_mode)?)?,
    };
    dwt_approx_time(&smoothed, opts.wavelet.levels)
}

/// Preprocess a gated/trimmed recording.
pub fn preprocess<T: Scalar>(
    rec: &CsiRecording,
    label: InteractionLabel,
    opts: &PreprocessOptions,
) -> Result<PreprocessedSample<T>> {
    let amp = amplitude::<T>(rec);
    PreprocessedSample::new(preprocess_amplitude(&amp, opts)?, label)
}
