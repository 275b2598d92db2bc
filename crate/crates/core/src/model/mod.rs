//! TCN with masked temporal attention.
//!
//! Each TR-pair slice `(T, F)` runs through the same weights: optional
//! attention, a stack of causal dilated residual blocks, the last time step,
//! a linear head and a softmax. The per-pair distributions are averaged.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::{grad_check, GradCheckReport, Graph, MaskMode, Tensor, Var};

/// Where temporal attention is inserted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionPlacement {
    /// Once, on the input, before the first block.
    #[default]
    PreTcnOnly,
    /// Once, on the output of the last block.
    PostTcn,
    /// Before every block.
    EveryLayer,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Feature width `F` of each pair slice (subcarriers).
    pub input_features: usize,
    /// Output channels of each block; its length is the layer count.
    pub filters: Vec<usize>,
    pub kernel: usize,
    /// Must be `1, 2, 4, …`, one per block.
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub attention: AttentionPlacement,
    pub mask_mode: MaskMode,
    pub residual: bool,
    /// Key width; `None` means the width of the attended features.
    pub d_k: Option<usize>,
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_features: 30,
            filters: vec![50, 50, 50],
            kernel: 15,
            dilations: vec![1, 2, 4],
            dropout: 0.5,
            attention: AttentionPlacement::PreTcnOnly,
            mask_mode: MaskMode::NegInf,
            residual: true,
            d_k: None,
            n_classes: 12,
        }
    }
}

impl ModelConfig {
    /// Config with `filters` and matching dilations `1, 2, 4, …`.
    pub fn with_filters(mut self, filters: Vec<usize>) -> Self {
        self.dilations = (0..filters.len()).map(|m| 1usize << m).collect();
        self.filters = filters;
        self
    }

    pub fn layers(&self) -> usize {
        self.filters.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.input_features == 0 || self.kernel == 0 || self.n_classes < 2 {
            return bad("input_features and kernel must be positive and n_classes at least 2".into());
        }
        if self.filters.contains(&0) {
            return bad(format!("filters {:?} contain a zero", self.filters));
        }
        if self.dilations.len() != self.filters.len() {
            return bad(format!("{} dilations for {} layers", self.dilations.len(), self.filters.len()));
        }
        for (m, &d) in self.dilations.iter().enumerate() {
            if m >= usize::BITS as usize || d != 1usize << m {
                return bad(format!("dilation of layer {m} must be {}, got {d}", 1u128 << m));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.d_k == Some(0) {
            return bad("d_k must be positive".into());
        }
        Ok(())
    }

    fn channels_in(&self, m: usize) -> usize {
        if m == 0 {
            self.input_features
        } else {
            self.filters[m - 1]
        }
    }

    fn last_width(&self) -> usize {
        self.filters.last().copied().unwrap_or(self.input_features)
    }
}

/// `1 + (k−1)·Σ d`.
pub fn receptive_field(cfg: &ModelConfig) -> usize {
    1 + (cfg.kernel - 1) * cfg.dilations.iter().sum::<usize>()
}

/// Total number of scalar parameters.
pub fn parameter_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(Layout::new(cfg)?.specs.iter().map(|s| s.shape.iter().product::<usize>()).sum())
}

/// Name and shape of one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    fan: Option<(usize, usize)>,
}

#[derive(Clone, Copy, Debug)]
struct AttentionIdx {
    w_q: usize,
    w_k: usize,
    w_v: usize,
}

#[derive(Clone, Copy, Debug)]
struct BlockIdx {
    w: usize,
    b: usize,
    proj: Option<(usize, usize)>,
}

#[derive(Clone, Debug)]
struct Layout {
    specs: Vec<ParamSpec>,
    /// One per block for `EveryLayer`, otherwise at most one.
    attention: Vec<AttentionIdx>,
    blocks: Vec<BlockIdx>,
    head: (usize, usize),
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut specs = Vec::new();
        let mut push = |name: String, shape: Vec<usize>, fan: Option<(usize, usize)>| {
            specs.push(ParamSpec { name, shape, fan });
            specs.len() - 1
        };
        let mut attention = Vec::new();
        let attn = |push: &mut dyn FnMut(String, Vec<usize>, Option<(usize, usize)>) -> usize, tag: &str, width: usize| {
            let dk = cfg.d_k.unwrap_or(width);
            AttentionIdx {
                w_q: push(format!("{tag}.w_q"), vec![dk, width], Some((width, dk))),
                w_k: push(format!("{tag}.w_k"), vec![dk, width], Some((width, dk))),
                w_v: push(format!("{tag}.w_v"), vec![width, width], Some((width, width))),
            }
        };
        if cfg.attention == AttentionPlacement::PreTcnOnly {
            attention.push(attn(&mut push, "attention", cfg.input_features));
        }
        let mut blocks = Vec::new();
        for m in 0..cfg.layers() {
            if cfg.attention == AttentionPlacement::EveryLayer {
                attention.push(attn(&mut push, &format!("attention{m}"), cfg.channels_in(m)));
            }
            let (c_in, c_out, k) = (cfg.channels_in(m), cfg.filters[m], cfg.kernel);
            let w = push(format!("block{m}.conv.w"), vec![c_out, c_in, k], Some((c_in * k, c_out * k)));
            let b = push(format!("block{m}.conv.b"), vec![c_out], None);
            let proj = (cfg.residual && c_in != c_out).then(|| {
                (
                    push(format!("block{m}.proj.w"), vec![c_out, c_in, 1], Some((c_in, c_out))),
                    push(format!("block{m}.proj.b"), vec![c_out], None),
                )
            });
            blocks.push(BlockIdx { w, b, proj });
        }
        if cfg.attention == AttentionPlacement::PostTcn {
            attention.push(attn(&mut push, "attention_post", cfg.last_width()));
        }
        let c = cfg.last_width();
        let head = (
            push("head.w".into(), vec![cfg.n_classes, c], Some((c, cfg.n_classes))),
            push("head.b".into(), vec![cfg.n_classes], None),
        );
        Ok(Layout { specs, attention, blocks, head })
    }
}

/// Parameter handles of one attention unit on a graph.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
}

/// Parameter handles of one residual block on a graph.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub w: Var,
    pub b: Var,
    pub proj: Option<(Var, Var)>,
}

/// `H′ = H ⊙ (softmax(mask(Q·Kᵀ/√d_k)) · V)` for `H: [T, F]`, with
/// `Q = H·W_Qᵀ`, `K = H·W_Kᵀ`, `V = H·W_Vᵀ`.
pub fn attention_forward<T: Scalar>(g: &Graph<T>, h: Var, p: &AttentionVars, mask: MaskMode) -> Result<Var> {
    let q = g.linear(h, p.w_q, None)?;
    let k = g.linear(h, p.w_k, None)?;
    let v = g.linear(h, p.w_v, None)?;
    let dk = g.shape(q)[1];
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, T::one() / T::of_usize(dk).sqrt());
    let s = g.lower_triangular_mask(s, mask)?;
    let a = g.matmul(g.softmax_rows(s)?, v)?;
    if g.shape(a) != g.shape(h) {
        return Err(Error::shape("attention", format!("A {:?} vs H {:?}", g.shape(a), g.shape(h))));
    }
    g.mul(h, a)
}

/// `dropout(relu(conv(x))) + residual(x)` on `x: [C_in, T]`.
#[allow(clippy::too_many_arguments)]
pub fn tcn_block_forward<T: Scalar, R: Rng + ?Sized>(
    g: &Graph<T>,
    x: Var,
    p: &BlockVars,
    dilation: usize,
    dropout: f64,
    residual: bool,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let y = g.causal_conv1d(x, p.w, p.b, dilation)?;
    let y = g.dropout(g.relu(y), dropout, training, rng)?;
    if !residual {
        return Ok(y);
    }
    let skip = match p.proj {
        Some((w, b)) => g.causal_conv1d(x, w, b, 1)?,
        None => x,
    };
    g.add(y, skip)
}

/// Output of one forward pass on a graph.
pub struct Forward {
    /// Pooled class distribution `[n_classes]`.
    pub probs: Var,
    /// Per pair, every intermediate activation in order, time on axis 1 for
    /// block outputs and axis 0 for attention outputs.
    pub trace: Vec<Vec<(String, Var)>>,
}

/// Activation recorded by [`Model::activations`], with its time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Activation<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub time_axis: usize,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Tensor<T>>,
}

impl<T: PartialEq> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

impl<T: Scalar> Model<T> {
    /// Xavier-uniform weights `±√(6/(fan_in+fan_out))` and zero biases, each
    /// tensor from its own `init` stream.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let layout = Layout::new(&config)?;
        let params = layout
            .specs
            .iter()
            .enumerate()
            .map(|(i, s)| match s.fan {
                Some((fan_in, fan_out)) => {
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let mut r = rng::stream(seed, "init", &[i as u64]);
                    Tensor::from_fn(s.shape.clone(), |_| T::of(r.random_range(-limit..=limit)))
                }
                None => Tensor::zeros(s.shape.clone()),
            })
            .collect();
        Ok(Model { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        let layout = Layout::new(&config)?;
        if params.len() != layout.specs.len() {
            return Err(Error::Checkpoint(format!("{} tensors for {} parameters", params.len(), layout.specs.len())));
        }
        for (s, p) in layout.specs.iter().zip(&params) {
            if p.shape() != s.shape.as_slice() {
                return Err(Error::Checkpoint(format!("{} has shape {:?}, expected {:?}", s.name, p.shape(), s.shape)));
            }
        }
        Ok(Model { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.layout.specs
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.layout.specs.iter().position(|s| s.name == name).map(|i| &self.params[i])
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.layout.specs.iter().position(|s| s.name == name).map(move |i| &mut self.params[i])
    }

    /// Register every parameter as a leaf.
    pub fn leaves(&self, g: &Graph<T>) -> Vec<Var> {
        self.params.iter().map(|p| g.leaf(p.clone())).collect()
    }

    /// Forward pass of `x: [pairs, T, F]` using parameter leaves `vars`.
    pub fn forward_on<R: Rng + ?Sized>(
        &self,
        g: &Graph<T>,
        vars: &[Var],
        x: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<Forward> {
        let cfg = &self.config;
        if x.ndim() != 3 || x.dim(2) != cfg.input_features || x.dim(0) == 0 || x.dim(1) == 0 {
            return Err(Error::shape(
                "model_forward",
                format!("input {:?}, expected (pairs, T, {})", x.shape(), cfg.input_features),
            ));
        }
        let layout = &self.layout;
        let attn: Vec<AttentionVars> = layout
            .attention
            .iter()
            .map(|a| AttentionVars { w_q: vars[a.w_q], w_k: vars[a.w_k], w_v: vars[a.w_v] })
            .collect();
        let blocks: Vec<BlockVars> = layout
            .blocks
            .iter()
            .map(|b| BlockVars { w: vars[b.w], b: vars[b.b], proj: b.proj.map(|(w, b)| (vars[w], vars[b])) })
            .collect();
        let t_last = x.dim(1) - 1;

        let mut dists = Vec::with_capacity(x.dim(0));
        let mut trace = Vec::with_capacity(x.dim(0));
        for pair in 0..x.dim(0) {
            let mut steps = Vec::new();
            let mut h = g.leaf(x.outer(pair));
            if cfg.attention == AttentionPlacement::PreTcnOnly {
                h = attention_forward(g, h, &attn[0], cfg.mask_mode)?;
                steps.push(("attention".to_string(), h));
            }
            let mut z = g.transpose(h)?;
            for (m, block) in blocks.iter().enumerate() {
                if cfg.attention == AttentionPlacement::EveryLayer {
                    let a = attention_forward(g, g.transpose(z)?, &attn[m], cfg.mask_mode)?;
                    steps.push((format!("attention{m}"), a));
                    z = g.transpose(a)?;
                }
                z = tcn_block_forward(g, z, block, cfg.dilations[m], cfg.dropout, cfg.residual, training, rng)?;
                steps.push((format!("block{m}"), z));
            }
            let last = if cfg.attention == AttentionPlacement::PostTcn {
                let a = attention_forward(g, g.transpose(z)?, &attn[0], cfg.mask_mode)?;
                steps.push(("attention_post".to_string(), a));
                g.select(a, 0, t_last)?
            } else {
                g.select(z, 1, t_last)?
            };
            let logits = g.linear(last, vars[layout.head.0], Some(vars[layout.head.1]))?;
            dists.push(g.softmax_rows(logits)?);
            trace.push(steps);
        }
        let probs = g.mean_over_axis(g.stack(&dists)?, 0)?;
        Ok(Forward { probs, trace })
    }

    /// Evaluation-mode class distribution.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::new();
        let vars = self.leaves(&g);
        let f = self.forward_on(&g, &vars, x, false, &mut rng::stream(0, "unused", &[]))?;
        let p = g.value(f.probs).clone();
        Ok(p)
    }

    /// Evaluation-mode activations of every layer, per pair.
    pub fn activations(&self, x: &Tensor<T>) -> Result<Vec<Vec<Activation<T>>>> {
        let g = Graph::new();
        let vars = self.leaves(&g);
        let f = self.forward_on(&g, &vars, x, false, &mut rng::stream(0, "unused", &[]))?;
        Ok(f.trace
            .into_iter()
            .map(|steps| {
                steps
                    .into_iter()
                    .map(|(name, v)| {
                        let time_axis = if name.starts_with("block") { 1 } else { 0 };
                        Activation { name, value: g.value(v).clone(), time_axis }
                    })
                    .collect()
            })
            .collect())
    }

    /// Cross-entropy of the pooled distribution, the distribution itself and
    /// the gradient for every parameter.
    pub fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        x: &Tensor<T>,
        label: usize,
        training: bool,
        rng: &mut R,
    ) -> Result<(T, Tensor<T>, Vec<Tensor<T>>)> {
        let g = Graph::new();
        let vars = self.leaves(&g);
        let f = self.forward_on(&g, &vars, x, training, rng)?;
        let loss = g.cross_entropy(f.probs, label)?;
        let mut grads = g.backward(loss)?;
        let gs = vars
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
            .collect();
        let value = g.value(loss).item();
        let probs = g.value(f.probs).clone();
        Ok((value, probs, gs))
    }
}

/// Small configuration for finite-difference checks: 4 features, three
/// 8-filter blocks, k = 3, no dropout, 5 classes. Mask mode, residual and
/// attention placement come from `base`.
pub fn tiny_config(base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        input_features: 4,
        kernel: 3,
        dropout: 0.0,
        n_classes: 5,
        d_k: None,
        ..base.clone()
    }
    .with_filters(vec![8, 8, 8])
}

/// Gradient check of the full loss for every attention placement on
/// [`tiny_config`] with a 2-pair, 16-step input.
///
/// Biases start at zero, and repeated `H ⊙ A` products shrink the activations
/// feeding the last block, so at initialisation pre-activations sit on the
/// ReLU kink. The checked model therefore gets seeded biases in ±[0.1, 0.5].
pub fn model_gradient_checks(base: &ModelConfig, seed: u64) -> Result<Vec<(AttentionPlacement, GradCheckReport)>> {
    let mut r = rng::stream(seed, "gradcheck-input", &[]);
    let x = Tensor::<f64>::from_fn([2, 16, 4], |_| r.random_range(-1.0..1.0));
    let mut out = Vec::new();
    for placement in [
        AttentionPlacement::PreTcnOnly,
        AttentionPlacement::PostTcn,
        AttentionPlacement::None,
        AttentionPlacement::EveryLayer,
    ] {
        let mut model = Model::<f64>::new(ModelConfig { attention: placement, ..tiny_config(base) }, seed)?;
        let mut r = rng::stream(seed, "gradcheck-bias", &[]);
        let biases: Vec<usize> = (0..model.specs().len()).filter(|&i| model.specs()[i].name.ends_with(".b")).collect();
        for i in biases {
            model.params_mut()[i].data_mut().iter_mut().for_each(|v| {
                let m: f64 = r.random_range(0.1..0.5);
                *v = if r.random::<bool>() { m } else { -m };
            });
        }
        let report = grad_check(
            |g, vars| {
                let f = model.forward_on(g, vars, &x, false, &mut rng::stream(0, "unused", &[]))?;
                g.cross_entropy(f.probs, 3)
            },
            model.params(),
            1e-5,
        )?;
        out.push((placement, report));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig { input_features: 4, kernel: 3, dropout: 0.0, n_classes: 5, ..Default::default() }
            .with_filters(vec![8, 8, 8])
    }

    fn input(pairs: usize, t: usize, f: usize, seed: u64) -> Tensor<f64> {
        let mut r = rng::stream(seed, "test-input", &[]);
        Tensor::from_fn([pairs, t, f], |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn default_parameter_count() {
        // attention 3·30·30, block0 50·30·15+50 plus projection 50·30+50,
        // blocks 1-2 50·50·15+50 each, head 50·12+12
        let expected = 2700 + (22550 + 1550) + 2 * 37550 + 612;
        assert_eq!(parameter_count(&ModelConfig::default()).unwrap(), expected);
        assert_eq!(Model::<f64>::new(ModelConfig::default(), 0).unwrap().parameter_count(), expected);
    }

    #[test]
    fn parameter_count_edge_cases() {
        let head_only = ModelConfig { attention: AttentionPlacement::None, ..Default::default() }.with_filters(vec![]);
        assert_eq!(parameter_count(&head_only).unwrap(), 30 * 12 + 12);
        let small = ModelConfig { attention: AttentionPlacement::None, ..Default::default() }.with_filters(vec![10, 10]);
        let big = ModelConfig { attention: AttentionPlacement::None, ..Default::default() }.with_filters(vec![20, 20]);
        let count = |c: usize| (c * 30 * 15 + c) + (c * 30 + c) + (c * c * 15 + c) + (c * 12 + 12);
        assert_eq!(parameter_count(&small).unwrap(), count(10));
        assert_eq!(parameter_count(&big).unwrap(), count(20));
        let no_res = ModelConfig { residual: false, ..Default::default() };
        assert_eq!(parameter_count(&no_res).unwrap(), 102512 - 1550);
    }

    #[test]
    fn receptive_field_formula() {
        assert_eq!(receptive_field(&ModelConfig::default()), 99);
        assert_eq!(receptive_field(&ModelConfig { kernel: 2, ..Default::default() }.with_filters(vec![4])), 2);
        assert_eq!(receptive_field(&ModelConfig { kernel: 2, ..Default::default() }), 8);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        assert!(ModelConfig { dilations: vec![1, 2, 3], ..Default::default() }.validate().is_err());
        assert!(ModelConfig { dilations: vec![1, 2], ..Default::default() }.validate().is_err());
        assert!(ModelConfig { dropout: 1.0, ..Default::default() }.validate().is_err());
        assert!(ModelConfig { kernel: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn output_is_a_distribution() {
        let model = Model::<f64>::new(tiny(), 3).unwrap();
        let p = model.predict(&input(6, 16, 4, 1)).unwrap();
        assert_eq!(p.shape(), &[5]);
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert!(p.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let model = Model::<f64>::new(tiny(), 4).unwrap();
        let x = input(6, 16, 4, 2);
        let perm = [3, 0, 5, 1, 4, 2];
        let y = Tensor::stack(&perm.iter().map(|&i| x.outer(i)).collect::<Vec<_>>()).unwrap();
        let (a, b) = (model.predict(&x).unwrap(), model.predict(&y).unwrap());
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_pairs_equal_single_pair() {
        let model = Model::<f64>::new(tiny(), 5).unwrap();
        let one = input(1, 16, 4, 3);
        let six = Tensor::stack(&vec![one.outer(0); 6]).unwrap();
        let (a, b) = (model.predict(&one).unwrap(), model.predict(&six).unwrap());
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_attention() {
        let g = Graph::<f64>::new();
        let h = g.leaf(Tensor::new([1, 2], vec![0.5, -2.0]).unwrap());
        let w = |v: Vec<f64>| g.leaf(Tensor::new([2, 2], v).unwrap());
        let p = AttentionVars { w_q: w(vec![1.0, 2.0, 3.0, 4.0]), w_k: w(vec![-1.0, 0.0, 2.0, 1.0]), w_v: w(vec![1.0, 1.0, 0.0, 2.0]) };
        let out = attention_forward(&g, h, &p, MaskMode::NegInf).unwrap();
        // V = H·W_Vᵀ = [0.5 − 2, −4] = [−1.5, −4]
        assert_eq!(g.value(out).data(), &[0.5 * -1.5, -2.0 * -4.0]);
    }

    #[test]
    fn zero_query_key_gives_running_mean() {
        let (t, f) = (7, 3);
        let g = Graph::<f64>::new();
        let hx = input(1, t, f, 9).outer(0);
        let wv = Tensor::from_fn([f, f], |i| (i as f64 * 0.37).sin());
        let h = g.leaf(hx.clone());
        let p = AttentionVars {
            w_q: g.leaf(Tensor::zeros([f, f])),
            w_k: g.leaf(Tensor::zeros([f, f])),
            w_v: g.leaf(wv.clone()),
        };
        let out = g.value(attention_forward(&g, h, &p, MaskMode::NegInf).unwrap()).clone();
        // Oracle: V by scalar loops, then prefix means.
        for row in 0..t {
            for c in 0..f {
                let mut mean = 0.0;
                for j in 0..=row {
                    let v: f64 = (0..f).map(|i| hx.at(&[j, i]) * wv.at(&[c, i])).sum();
                    mean += v / (row + 1) as f64;
                }
                assert!((out.at(&[row, c]) - hx.at(&[row, c]) * mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_edge_cases() {
        let g = Graph::<f64>::new();
        let x = g.leaf(input(1, 10, 4, 4).outer(0).reshape([4, 10]).unwrap());
        let zero = BlockVars { w: g.leaf(Tensor::zeros([4, 4, 3])), b: g.leaf(Tensor::zeros([4])), proj: None };
        let mut r = rng::stream(0, "t", &[]);
        let y = tcn_block_forward(&g, x, &zero, 2, 0.5, false, false, &mut r).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
        let y = tcn_block_forward(&g, x, &zero, 2, 0.5, true, false, &mut r).unwrap();
        assert_eq!(*g.value(y), *g.value(x));
        for d in [1, 2, 4] {
            let w = g.leaf(Tensor::ones([6, 4, 15]));
            let p = BlockVars { w, b: g.leaf(Tensor::zeros([6])), proj: None };
            assert_eq!(g.shape(tcn_block_forward(&g, x, &p, d, 0.0, false, false, &mut r).unwrap()), vec![6, 10]);
        }
    }

    #[test]
    fn full_model_gradient_check() {
        let bases = [
            ModelConfig::default(),
            ModelConfig { mask_mode: MaskMode::ZeroLiteral, ..Default::default() },
            ModelConfig { residual: false, ..Default::default() },
        ];
        for base in bases {
            for (placement, report) in model_gradient_checks(&base, 21).unwrap() {
                assert!(report.max_rel_error < 1e-4, "{placement:?}: {report:?}");
            }
        }
    }

    #[test]
    fn loss_grads_match_leaf_order() {
        let model = Model::<f64>::new(tiny(), 8).unwrap();
        let (loss, probs, grads) = model.loss_and_grads(&input(3, 12, 4, 6), 1, false, &mut rng::stream(0, "t", &[])).unwrap();
        assert!((loss + probs.data()[1].ln()).abs() < 1e-12);
        assert_eq!(grads.len(), model.params().len());
        for (gr, p) in grads.iter().zip(model.params()) {
            assert_eq!(gr.shape(), p.shape());
        }
    }

    #[test]
    fn initialisation_is_seeded() {
        let a = Model::<f64>::new(tiny(), 1).unwrap();
        assert_eq!(a, Model::new(tiny(), 1).unwrap());
        assert_ne!(a, Model::new(tiny(), 2).unwrap());
        assert!(a.param("block0.conv.b").unwrap().data().iter().all(|&v| v == 0.0));
        let limit = (6.0f64 / (4 * 3 + 8 * 3) as f64).sqrt();
        assert!(a.param("block0.conv.w").unwrap().data().iter().all(|v| v.abs() <= limit));
    }
}
