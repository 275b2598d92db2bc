use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Min-max scale each slice along axis 0 to `[−1, 1]`.
///
/// For a `(pairs, packets, subcarriers)` tensor every TR-pair slice is
/// normalised over all of its packets and subcarriers. A constant slice maps
/// to zeros.
pub fn minmax_normalize<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if !x.all_finite() {
        return Err(Error::NonFinite("minmax_normalize"));
    }
    if x.ndim() == 0 {
        return Err(Error::shape("minmax_normalize", "scalar input"));
    }
    let mut out = x.clone();
    let groups = x.dim(0);
    if groups == 0 {
        return Ok(out);
    }
    let per = x.len() / groups;
    if per == 0 {
        return Ok(out);
    }
    let two = T::of(2.0);
    for slice in out.data_mut().chunks_mut(per) {
        let (lo, hi) = slice
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi == lo {
            slice.iter_mut().for_each(|v| *v = T::zero());
            continue;
        }
        let range = hi - lo;
        for v in slice.iter_mut() {
            *v = two * ((*v - lo) / range) - T::one();
        }
    }
    Ok(out)
}
