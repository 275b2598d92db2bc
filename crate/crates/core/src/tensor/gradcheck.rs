use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gradient magnitudes below this are compared on an absolute scale of
/// `REL_FLOOR`, so near-zero components do not dominate the relative error.
pub const REL_FLOOR: f64 = 1e-3;

/// Worst coordinate found by [`grad_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which input tensor and flat coordinate produced the worst error.
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compare reverse-mode gradients of the scalar function `f` against central
/// differences `(f(x+eps·eᵢ) − f(x−eps·eᵢ)) / 2eps` at every coordinate of
/// every input.
///
/// Relative error per coordinate is `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>], eps: f64) -> Result<GradCheckReport>
where
    T: Scalar,
    F: Fn(&Graph<T>, &[Var]) -> Result<Var>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("finite-difference step {eps} must be positive")));
    }
    let eval = |xs: &[Tensor<T>]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.leaf(x.clone())).collect();
        let root = f(&g, &vars)?;
        let v = g.value(root);
        if v.len() != 1 {
            return Err(Error::shape("grad_check", format!("function returned {:?}", v.shape())));
        }
        Ok(v.item().as_f64())
    };

    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.leaf(x.clone())).collect();
    let root = f(&g, &vars)?;
    let grads = g.backward(root)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, input: 0, coord: 0, analytic: 0.0, numeric: 0.0 };
    let mut probe: Vec<Tensor<T>> = inputs.to_vec();
    for (which, (input, var)) in inputs.iter().zip(&vars).enumerate() {
        for coord in 0..input.len() {
            let x0 = input.data()[coord];
            probe[which].data_mut()[coord] = x0 + T::of(eps);
            let up = eval(&probe)?;
            probe[which].data_mut()[coord] = x0 - T::of(eps);
            let down = eval(&probe)?;
            probe[which].data_mut()[coord] = x0;

            let numeric = (up - down) / (2.0 * eps);
            let analytic = grads.get(*var).map_or(0.0, |t| t.data()[coord].as_f64());
            let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            let err = (analytic - numeric).abs() / denom;
            if err > report.max_rel_error || err.is_nan() {
                report = GradCheckReport { max_rel_error: err, input: which, coord, analytic, numeric };
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let c = Tensor::<f64>::new([4], vec![0.5, -2.0, 3.0, 1.25]).unwrap();
        let x = Tensor::<f64>::new([4], vec![1.0, 2.0, -1.0, 0.3]).unwrap();
        let report = grad_check(
            |g, v| {
                let c = g.leaf(c.clone());
                let p = g.mul(v[0], c)?;
                Ok(g.sum(p))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu at an exact kink: analytic picks 0, numeric sees slope 1/2.
        let x = Tensor::<f64>::new([1], vec![0.0]).unwrap();
        let report = grad_check(|g, v| Ok(g.sum(g.relu(v[0]))), &[x], 1e-5).unwrap();
        assert!(report.max_rel_error > 0.4);
    }
}
