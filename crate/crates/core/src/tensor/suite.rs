//! Finite-difference checks of every differentiable primitive.

use rand::Rng;

use super::{grad_check, GradCheckReport, Graph, MaskMode, Tensor, Var};
use crate::error::Result;
use crate::rng;

/// Central-difference step used by [`primitive_checks`].
pub const PRIMITIVE_STEP: f64 = 1e-5;

type Probe = Box<dyn Fn(&Graph<f64>, &[Var]) -> Result<Var>>;

/// Values bounded away from zero so ReLU stays off its kink.
fn away_from_zero(shape: &[usize], seed: u64, index: u64) -> Tensor<f64> {
    let mut r = rng::stream(seed, "gradcheck", &[index]);
    Tensor::from_fn(shape.to_vec(), |_| {
        let m: f64 = r.random_range(0.1..1.0);
        if r.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// `Σ y ⊙ R` for a fixed random `R`, turning any output into a scalar with
/// a generic upstream gradient.
fn contract(g: &Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let r = away_from_zero(&g.shape(y), seed, 1000);
    let w = g.leaf(r);
    Ok(g.sum(g.mul(y, w)?))
}

/// One report per primitive, all in double precision with step
/// [`PRIMITIVE_STEP`].
pub fn primitive_checks(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let x = |shape: &[usize], i: u64| away_from_zero(shape, seed, i);
    let cases: Vec<(&'static str, Probe, Vec<Tensor<f64>>)> = vec![
        ("add", Box::new(move |g, v| contract(g, g.add(v[0], v[1])?, seed)), vec![x(&[3, 4], 0), x(&[3, 4], 1)]),
        ("mul", Box::new(move |g, v| contract(g, g.mul(v[0], v[1])?, seed)), vec![x(&[3, 4], 2), x(&[3, 4], 3)]),
        ("scale", Box::new(move |g, v| contract(g, g.scale(v[0], -1.7), seed)), vec![x(&[5], 4)]),
        ("relu", Box::new(move |g, v| contract(g, g.relu(v[0]), seed)), vec![x(&[4, 3], 5)]),
        ("matmul", Box::new(move |g, v| contract(g, g.matmul(v[0], v[1])?, seed)), vec![x(&[3, 4], 6), x(&[4, 2], 7)]),
        ("transpose", Box::new(move |g, v| contract(g, g.transpose(v[0])?, seed)), vec![x(&[3, 5], 8)]),
        (
            "linear",
            Box::new(move |g, v| contract(g, g.linear(v[0], v[1], Some(v[2]))?, seed)),
            vec![x(&[2, 3, 4], 9), x(&[5, 4], 10), x(&[5], 11)],
        ),
        ("softmax_rows", Box::new(move |g, v| contract(g, g.softmax_rows(v[0])?, seed)), vec![x(&[3, 5], 12)]),
        (
            "mask_neg_inf",
            Box::new(move |g, v| contract(g, g.softmax_rows(g.lower_triangular_mask(v[0], MaskMode::NegInf)?)?, seed)),
            vec![x(&[5, 5], 13)],
        ),
        (
            "mask_zero_literal",
            Box::new(move |g, v| contract(g, g.lower_triangular_mask(v[0], MaskMode::ZeroLiteral)?, seed)),
            vec![x(&[5, 5], 14)],
        ),
        (
            "causal_conv1d",
            Box::new(move |g, v| contract(g, g.causal_conv1d(v[0], v[1], v[2], 2)?, seed)),
            vec![x(&[3, 9], 15), x(&[2, 3, 3], 16), x(&[2], 17)],
        ),
        (
            "dropout",
            Box::new(move |g, v| {
                let mut r = rng::stream(seed, "gradcheck-dropout", &[]);
                contract(g, g.dropout(v[0], 0.4, true, &mut r)?, seed)
            }),
            vec![x(&[4, 6], 18)],
        ),
        ("mean_over_axis", Box::new(move |g, v| contract(g, g.mean_over_axis(v[0], 1)?, seed)), vec![x(&[2, 3, 4], 19)]),
        ("sum", Box::new(|g, v| Ok(g.sum(v[0]))), vec![x(&[3, 3], 20)]),
        ("select", Box::new(move |g, v| contract(g, g.select(v[0], 1, 2)?, seed)), vec![x(&[2, 4, 3], 21)]),
        ("stack", Box::new(move |g, v| contract(g, g.stack(&[v[0], v[1]])?, seed)), vec![x(&[3, 2], 22), x(&[3, 2], 23)]),
        // The input must stay a distribution under perturbation, so it is
        // produced by a softmax.
        ("cross_entropy", Box::new(|g, v| g.cross_entropy(g.softmax_rows(v[0])?, 2)), vec![x(&[5], 24)]),
    ];
    cases
        .into_iter()
        .map(|(name, f, inputs)| Ok((name, grad_check(f, &inputs, PRIMITIVE_STEP)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_matches_central_differences() {
        let reports = primitive_checks(3).unwrap();
        assert_eq!(reports.len(), 17);
        for (name, r) in reports {
            assert!(r.max_rel_error < 1e-6, "{name}: {r:?}");
        }
    }
}
