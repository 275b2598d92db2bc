//! Slice-level forward and backward kernels. Backward kernels accumulate
//! (`+=`) into their gradient buffers.

use crate::scalar::Scalar;

/// `c[m,n] = a[m,k] · b[k,n]`
pub fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            // Skipping exact zeros keeps masked attention rows bitwise
            // independent of the masked-out values.
            if aip == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cj, &bj) in row.iter_mut().zip(brow) {
                *cj += aip * bj;
            }
        }
    }
    c
}

/// `ga += g · bᵀ`, `gb += aᵀ · g` for `c = a[m,k] · b[k,n]`.
#[allow(clippy::too_many_arguments)]
pub fn matmul_backward<T: Scalar>(
    g: &[T],
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    ga: &mut [T],
    gb: &mut [T],
) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::zero();
            for (&gj, &bj) in grow.iter().zip(brow) {
                acc += gj * bj;
            }
            ga[i * k + p] += acc;
            let aip = a[i * k + p];
            let gbrow = &mut gb[p * n..(p + 1) * n];
            for (o, &gj) in gbrow.iter_mut().zip(grow) {
                *o += aip * gj;
            }
        }
    }
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// `y[n,o] = Σ_i x[n,i]·w[o,i] + b[o]`
pub fn linear<T: Scalar>(
    x: &[T],
    w: &[T],
    b: Option<&[T]>,
    rows: usize,
    fin: usize,
    fout: usize,
) -> Vec<T> {
    let mut y = vec![T::zero(); rows * fout];
    for r in 0..rows {
        let xr = &x[r * fin..(r + 1) * fin];
        for o in 0..fout {
            let wo = &w[o * fin..(o + 1) * fin];
            let mut acc = b.map_or(T::zero(), |b| b[o]);
            for (&xi, &wi) in xr.iter().zip(wo) {
                acc += xi * wi;
            }
            y[r * fout + o] = acc;
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn linear_backward<T: Scalar>(
    g: &[T],
    x: &[T],
    w: &[T],
    rows: usize,
    fin: usize,
    fout: usize,
    gx: &mut [T],
    gw: &mut [T],
    mut gb: Option<&mut [T]>,
) {
    for r in 0..rows {
        let xr = &x[r * fin..(r + 1) * fin];
        let gxr = &mut gx[r * fin..(r + 1) * fin];
        for o in 0..fout {
            let go = g[r * fout + o];
            if let Some(gb) = gb.as_deref_mut() {
                gb[o] += go;
            }
            if go == T::zero() {
                continue;
            }
            let wo = &w[o * fin..(o + 1) * fin];
            for (gxi, &wi) in gxr.iter_mut().zip(wo) {
                *gxi += go * wi;
            }
            let gwo = &mut gw[o * fin..(o + 1) * fin];
            for (gwi, &xi) in gwo.iter_mut().zip(xr) {
                *gwi += go * xi;
            }
        }
    }
}

/// Row-wise softmax over contiguous rows of length `cols`. Entries equal to
/// −∞ receive probability exactly 0. Returns the index of the first row that
/// is entirely −∞, if any.
pub fn softmax_rows<T: Scalar>(x: &[T], cols: usize) -> Result<Vec<T>, usize> {
    let mut y = vec![T::zero(); x.len()];
    for (r, (xr, yr)) in x.chunks(cols).zip(y.chunks_mut(cols)).enumerate() {
        let max = xr.iter().copied().fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(r);
        }
        let mut sum = T::zero();
        for (yi, &xi) in yr.iter_mut().zip(xr) {
            *yi = (xi - max).exp();
            sum += *yi;
        }
        for yi in yr.iter_mut() {
            *yi /= sum;
        }
    }
    Ok(y)
}

pub fn softmax_rows_backward<T: Scalar>(g: &[T], y: &[T], cols: usize, gx: &mut [T]) {
    for ((gr, yr), gxr) in g.chunks(cols).zip(y.chunks(cols)).zip(gx.chunks_mut(cols)) {
        let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
        for ((o, &gi), &yi) in gxr.iter_mut().zip(gr).zip(yr) {
            *o += yi * (gi - dot);
        }
    }
}

/// Causal dilated convolution.
///
/// `x` is `[c_in, t]`, `w` is `[c_out, c_in, k]`, `b` is `[c_out]`. Tap `κ`
/// reads `x[·, τ − (k−1−κ)·d]`, i.e. the input left-padded with `(k−1)·d`
/// zeros; tap `k−1` is the current sample.
#[allow(clippy::too_many_arguments)]
pub fn causal_conv1d<T: Scalar>(
    x: &[T],
    w: &[T],
    b: &[T],
    c_in: usize,
    c_out: usize,
    t: usize,
    k: usize,
    dilation: usize,
) -> Vec<T> {
    let mut y = vec![T::zero(); c_out * t];
    for c in 0..c_out {
        let yc = &mut y[c * t..(c + 1) * t];
        yc.iter_mut().for_each(|v| *v = b[c]);
        for ci in 0..c_in {
            let xc = &x[ci * t..(ci + 1) * t];
            for kappa in 0..k {
                let wv = w[(c * c_in + ci) * k + kappa];
                let shift = (k - 1 - kappa) * dilation;
                if shift >= t || wv == T::zero() {
                    continue;
                }
                for (yv, &xv) in yc[shift..].iter_mut().zip(&xc[..t - shift]) {
                    *yv += wv * xv;
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub fn causal_conv1d_backward<T: Scalar>(
    g: &[T],
    x: &[T],
    w: &[T],
    c_in: usize,
    c_out: usize,
    t: usize,
    k: usize,
    dilation: usize,
    gx: &mut [T],
    gw: &mut [T],
    gb: &mut [T],
) {
    for c in 0..c_out {
        let gc = &g[c * t..(c + 1) * t];
        gb[c] += gc.iter().copied().sum();
        for ci in 0..c_in {
            let xc = &x[ci * t..(ci + 1) * t];
            let gxc = &mut gx[ci * t..(ci + 1) * t];
            for kappa in 0..k {
                let idx = (c * c_in + ci) * k + kappa;
                let shift = (k - 1 - kappa) * dilation;
                if shift >= t {
                    continue;
                }
                let wv = w[idx];
                let mut acc = T::zero();
                for ((&gv, &xv), gxv) in gc[shift..].iter().zip(&xc[..t - shift]).zip(&mut gxc[..t - shift]) {
                    acc += gv * xv;
                    *gxv += wv * gv;
                }
                gw[idx] += acc;
            }
        }
    }
}

/// Decompose `shape` around `axis` into (outer, axis length, inner).
pub fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
