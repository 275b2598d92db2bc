//! Butterworth low-pass design by bilinear transform, and IIR filtering.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Low-pass design parameters. `cutoff` is a fraction of Nyquist.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { order: 5, cutoff: 0.1 }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("filter order must be at least 1".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {} must lie strictly inside (0, 1) of Nyquist",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// Transfer function `B(z⁻¹)/A(z⁻¹)` with `a[0] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct IirCoefficients {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl IirCoefficients {
    /// Normalise so `a[0] = 1` and reject unstable denominators.
    pub fn new(b: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        let a0 = *a.first().ok_or_else(|| Error::InvalidArgument("empty denominator".into()))?;
        if b.is_empty() || a0 == 0.0 || !a0.is_finite() {
            return Err(Error::InvalidArgument("degenerate IIR coefficients".into()));
        }
        let coeffs = IirCoefficients {
            b: b.iter().map(|v| v / a0).collect(),
            a: a.iter().map(|v| v / a0).collect(),
        };
        if !coeffs.is_stable() {
            return Err(Error::InvalidArgument("denominator has roots on or outside the unit circle".into()));
        }
        Ok(coeffs)
    }

    pub fn numerator(&self) -> &[f64] {
        &self.b
    }

    pub fn denominator(&self) -> &[f64] {
        &self.a
    }

    /// Schur–Cohn step-down test: every reflection coefficient of the
    /// denominator has magnitude below one.
    pub fn is_stable(&self) -> bool {
        let mut p = self.a.clone();
        while p.len() > 1 && *p.last().unwrap() == 0.0 {
            p.pop();
        }
        while p.len() > 1 {
            let n = p.len() - 1;
            let k = p[n] / p[0];
            if k.is_nan() || k.abs() >= 1.0 {
                return false;
            }
            let denom = 1.0 - k * k;
            p = (0..n).map(|i| (p[i] - k * p[n - i]) / denom).collect();
        }
        true
    }

    /// `H(e^{jω})` for `omega` in radians per sample.
    pub fn response(&self, omega: f64) -> Complex64 {
        let eval = |c: &[f64]| {
            c.iter()
                .enumerate()
                .map(|(i, &v)| Complex64::from_polar(v, -omega * i as f64))
                .sum::<Complex64>()
        };
        eval(&self.b) / eval(&self.a)
    }

    /// `|H|` at a frequency given as a fraction of Nyquist.
    pub fn magnitude_at(&self, fraction_of_nyquist: f64) -> f64 {
        self.response(PI * fraction_of_nyquist).norm()
    }
}

/// Expand `Π (z − rᵢ)` into coefficients of descending powers.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= ci * r;
        }
        c = next;
    }
    c
}

/// Digital Butterworth low-pass: analog prototype poles on the left half of
/// the unit circle, scaled to the pre-warped cutoff `2·tan(πf/2)` and mapped
/// through `z = (2 + s)/(2 − s)`. All zeros sit at `z = −1`; gain is set so
/// the DC response is exactly one.
pub fn design_butterworth_lowpass(spec: &FilterSpec) -> Result<IirCoefficients> {
    spec.validate()?;
    let n = spec.order;
    let warped = 2.0 * (PI * spec.cutoff / 2.0).tan();
    let two = Complex64::new(2.0, 0.0);
    let poles: Vec<Complex64> = (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let s = Complex64::from_polar(warped, theta);
            (two + s) / (two - s)
        })
        .collect();
    let zeros = vec![Complex64::new(-1.0, 0.0); n];

    let a: Vec<f64> = poly_from_roots(&poles).iter().map(|c| c.re).collect();
    let b_unit: Vec<f64> = poly_from_roots(&zeros).iter().map(|c| c.re).collect();
    let gain = a.iter().sum::<f64>() / b_unit.iter().sum::<f64>();
    let b = b_unit.iter().map(|v| v * gain).collect();
    IirCoefficients::new(b, a)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Single causal pass, zero initial state.
    #[default]
    Causal,
    /// Causal pass, then a second pass over the reversed output (zero phase).
    ForwardBackward,
}

/// Direct-form II transposed recursion with zero initial state.
pub fn apply_filter<T: Scalar>(signal: &[T], coeffs: &IirCoefficients) -> Vec<T> {
    let order = coeffs.a.len().max(coeffs.b.len());
    let b: Vec<T> = (0..order).map(|i| T::of(coeffs.b.get(i).copied().unwrap_or(0.0))).collect();
    let a: Vec<T> = (0..order).map(|i| T::of(coeffs.a.get(i).copied().unwrap_or(0.0))).collect();
    let mut state = vec![T::zero(); order];
    signal
        .iter()
        .map(|&x| {
            let y = b[0] * x + state[0];
            for i in 1..order {
                let next = if i + 1 < order { state[i] } else { T::zero() };
                state[i - 1] = b[i] * x - a[i] * y + next;
            }
            y
        })
        .collect()
}

pub fn apply_filter_mode<T: Scalar>(signal: &[T], coeffs: &IirCoefficients, mode: FilterMode) -> Vec<T> {
    let forward = apply_filter(signal, coeffs);
    match mode {
        FilterMode::Causal => forward,
        FilterMode::ForwardBackward => {
            let rev: Vec<T> = forward.into_iter().rev().collect();
            let mut back = apply_filter(&rev, coeffs);
            back.reverse();
            back
        }
    }
}
