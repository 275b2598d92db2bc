use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    #[default]
    Haar,
}

/// Cascaded single-level transforms keeping approximation coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: usize,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        WaveletSpec { family: WaveletFamily::Haar, levels: 2 }
    }
}

impl WaveletSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("wavelet levels must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_even(len: usize) -> Result<()> {
    if !len.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("DWT needs an even-length signal, got {len}")));
    }
    Ok(())
}

/// Haar approximation coefficients `a[i] = (x[2i] + x[2i+1]) / √2`.
pub fn dwt_approx<T: Scalar>(signal: &[T]) -> Result<Vec<T>> {
    check_even(signal.len())?;
    let s = T::FRAC_1_SQRT_2();
    Ok(signal.chunks_exact(2).map(|p| (p[0] + p[1]) * s).collect())
}

/// Haar detail coefficients `d[i] = (x[2i] − x[2i+1]) / √2`.
pub fn dwt_detail<T: Scalar>(signal: &[T]) -> Result<Vec<T>> {
    check_even(signal.len())?;
    let s = T::FRAC_1_SQRT_2();
    Ok(signal.chunks_exact(2).map(|p| (p[0] - p[1]) * s).collect())
}

/// Apply [`dwt_approx`] `levels` times along axis 1 of a
/// `(pairs, time, subcarriers)` tensor.
pub fn dwt_approx_time<T: Scalar>(x: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    if x.ndim() != 3 {
        return Err(Error::shape("dwt_approx_time", format!("expected 3-D, got {:?}", x.shape())));
    }
    let (pairs, mut len, subs) = (x.dim(0), x.dim(1), x.dim(2));
    let mut cur = x.clone();
    for _ in 0..levels {
        check_even(len)?;
        let half = len / 2;
        let s = T::FRAC_1_SQRT_2();
        let mut next = Tensor::zeros([pairs, half, subs]);
        let src = cur.data();
        let dst = next.data_mut();
        for p in 0..pairs {
            for i in 0..half {
                let a = &src[(p * len + 2 * i) * subs..(p * len + 2 * i + 1) * subs];
                let b = &src[(p * len + 2 * i + 1) * subs..(p * len + 2 * i + 2) * subs];
                let o = &mut dst[(p * half + i) * subs..(p * half + i + 1) * subs];
                for ((o, &a), &b) in o.iter_mut().zip(a).zip(b) {
                    *o = (a + b) * s;
                }
            }
        }
        cur = next;
        len = half;
    }
    Ok(cur)
}
