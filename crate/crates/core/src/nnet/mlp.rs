use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Default hidden width of the auxiliary OOD head.
pub const DEFAULT_HEAD_WIDTH: usize = 300;

/// Default initial value of the learnable energy slope `w`.
///
/// With `E = logsumexp(logits)` a positive slope makes the in-score
/// `σ(w·E)` agree with the free energy `−E`: in-distribution inputs sit at
/// negative free energy, outliers at positive. A cross-entropy warm-up
/// already raises `E` on the ID data, so training starts on the right side.
pub const DEFAULT_ENERGY_SLOPE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Fully connected layer, `y = W x + b` with `W` shaped `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Scoring head attached to the penultimate features:
/// `g(h) = vᵀ relu(U h + c) + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct OodHead {
    pub hidden_weight: Matrix,
    pub hidden_bias: Vec<f64>,
    pub output_weight: Vec<f64>,
    pub output_bias: f64,
}

impl OodHead {
    pub fn width(&self) -> usize {
        self.hidden_weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.hidden_weight.cols()
    }

    fn zeros_like(&self) -> Self {
        Self {
            hidden_weight: Matrix::zeros(self.hidden_weight.rows(), self.hidden_weight.cols()),
            hidden_bias: vec![0.0; self.hidden_bias.len()],
            output_weight: vec![0.0; self.output_weight.len()],
            output_bias: 0.0,
        }
    }
}

/// What kind of value a parameter block holds; drives weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Slope,
}

/// A named, contiguous run of parameters.
pub struct ParamBlock<'a> {
    pub path: String,
    pub role: ParamRole,
    pub values: &'a [f64],
}

pub struct ParamBlockMut<'a> {
    pub path: String,
    pub role: ParamRole,
    pub values: &'a mut [f64],
}

/// Every trainable value of an [`MlpModel`]. Gradients and optimizer
/// velocities use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub layers: Vec<Dense>,
    pub energy_slope_w: f64,
    pub ood_head: Option<OodHead>,
}

/// Gradient of a scalar loss, shape-congruent with the model parameters.
pub type Gradients = ParamSet;

impl ParamSet {
    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            energy_slope_w: 0.0,
            ood_head: self.ood_head.as_ref().map(OodHead::zeros_like),
        }
    }

    pub fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 5);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(ParamBlock {
                path: format!("layers[{l}].weight"),
                role: ParamRole::Weight,
                values: layer.weight.as_slice(),
            });
            out.push(ParamBlock {
                path: format!("layers[{l}].bias"),
                role: ParamRole::Bias,
                values: &layer.bias,
            });
        }
        out.push(ParamBlock {
            path: "energy_slope_w".into(),
            role: ParamRole::Slope,
            values: std::slice::from_ref(&self.energy_slope_w),
        });
        if let Some(head) = &self.ood_head {
            out.push(ParamBlock {
                path: "ood_head.hidden_weight".into(),
                role: ParamRole::Weight,
                values: head.hidden_weight.as_slice(),
            });
            out.push(ParamBlock {
                path: "ood_head.hidden_bias".into(),
                role: ParamRole::Bias,
                values: &head.hidden_bias,
            });
            out.push(ParamBlock {
                path: "ood_head.output_weight".into(),
                role: ParamRole::Weight,
                values: &head.output_weight,
            });
            out.push(ParamBlock {
                path: "ood_head.output_bias".into(),
                role: ParamRole::Bias,
                values: std::slice::from_ref(&head.output_bias),
            });
        }
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<ParamBlockMut<'_>> {
        let mut out = Vec::with_capacity(2 * self.layers.len() + 5);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push(ParamBlockMut {
                path: format!("layers[{l}].weight"),
                role: ParamRole::Weight,
                values: layer.weight.as_mut_slice(),
            });
            out.push(ParamBlockMut {
                path: format!("layers[{l}].bias"),
                role: ParamRole::Bias,
                values: &mut layer.bias,
            });
        }
        out.push(ParamBlockMut {
            path: "energy_slope_w".into(),
            role: ParamRole::Slope,
            values: std::slice::from_mut(&mut self.energy_slope_w),
        });
        if let Some(head) = &mut self.ood_head {
            out.push(ParamBlockMut {
                path: "ood_head.hidden_weight".into(),
                role: ParamRole::Weight,
                values: head.hidden_weight.as_mut_slice(),
            });
            out.push(ParamBlockMut {
                path: "ood_head.hidden_bias".into(),
                role: ParamRole::Bias,
                values: &mut head.hidden_bias,
            });
            out.push(ParamBlockMut {
                path: "ood_head.output_weight".into(),
                role: ParamRole::Weight,
                values: &mut head.output_weight,
            });
            out.push(ParamBlockMut {
                path: "ood_head.output_bias".into(),
                role: ParamRole::Bias,
                values: std::slice::from_mut(&mut head.output_bias),
            });
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.values.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks()
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, model has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let n = block.values.len();
            block.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (dst, src) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, s) in dst.values.iter_mut().zip(src.values) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.same_shape(&b.weight) && a.bias.len() == b.bias.len())
            && match (&self.ood_head, &other.ood_head) {
                (None, None) => true,
                (Some(a), Some(b)) => {
                    a.hidden_weight.same_shape(&b.hidden_weight)
                        && a.output_weight.len() == b.output_weight.len()
                }
                _ => false,
            }
    }

    /// Path and index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(String, usize)> {
        self.blocks().into_iter().find_map(|b| {
            b.values
                .iter()
                .position(|v| !v.is_finite())
                .map(|i| (b.path, i))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.values.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Activations cached by [`MlpModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    head: Option<HeadTrace>,
}

#[derive(Debug, Clone)]
struct HeadTrace {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    score: f64,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("trace has at least one layer")
    }

    /// Output of the OOD head, when the model has one.
    pub fn head_score(&self) -> Option<f64> {
        self.head.as_ref().map(|h| h.score)
    }

    fn penultimate(&self) -> &[f64] {
        match self.post.last() {
            Some(h) => h,
            None => &self.input,
        }
    }
}

/// Feedforward classifier with a learnable energy slope and an optional OOD head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    activation: Activation,
    params: ParamSet,
}

impl MlpModel {
    /// Randomly initialised model: He-normal weights for relu, Xavier-uniform
    /// for tanh, zero biases. Deterministic in `seed`.
    pub fn init(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::build(layer_dims, activation, None, seed)
    }

    /// Like [`MlpModel::init`], plus an OOD head of the given hidden width.
    pub fn init_with_head(
        layer_dims: &[usize],
        activation: Activation,
        head_width: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::build(layer_dims, activation, Some(head_width), seed)
    }

    fn build(
        layer_dims: &[usize],
        activation: Activation,
        head_width: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::config(format!(
                "need at least an input and an output dimension, got {layer_dims:?}"
            )));
        }
        if layer_dims.contains(&0) {
            return Err(Error::config(format!(
                "layer dimensions must be positive, got {layer_dims:?}"
            )));
        }
        if head_width == Some(0) {
            return Err(Error::config("ood head width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense {
                weight: random_matrix(&mut rng, w[1], w[0], activation),
                bias: vec![0.0; w[1]],
            })
            .collect();
        let ood_head = head_width.map(|width| {
            let in_dim = layer_dims[layer_dims.len() - 2];
            let hidden_weight = random_matrix(&mut rng, width, in_dim, Activation::Relu);
            let out = random_matrix(&mut rng, 1, width, Activation::Tanh);
            OodHead {
                hidden_weight,
                hidden_bias: vec![0.0; width],
                output_weight: out.as_slice().to_vec(),
                output_bias: 0.0,
            }
        });
        Ok(Self {
            activation,
            params: ParamSet {
                layers,
                energy_slope_w: DEFAULT_ENERGY_SLOPE,
                ood_head,
            },
        })
    }

    /// Assemble a model from explicit parameters, validating dimensions.
    pub fn from_params(activation: Activation, params: ParamSet) -> Result<Self> {
        if params.layers.is_empty() {
            return Err(Error::config("model needs at least one layer"));
        }
        for (l, layer) in params.layers.iter().enumerate() {
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::shape(format!(
                    "layer {l}: bias length {} does not match output dim {}",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
        }
        for (l, pair) in params.layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer {l} outputs {} values but layer {} expects {}",
                    pair[0].out_dim(),
                    l + 1,
                    pair[1].in_dim()
                )));
            }
        }
        if let Some(head) = &params.ood_head {
            let penultimate = params.layers.last().map(Dense::in_dim).unwrap_or(0);
            if head.in_dim() != penultimate
                || head.hidden_bias.len() != head.width()
                || head.output_weight.len() != head.width()
            {
                return Err(Error::shape("ood head does not match the penultimate layer"));
            }
        }
        if let Some((path, i)) = params.first_non_finite() {
            return Err(Error::numeric(format!("non-finite parameter {path}[{i}]")));
        }
        Ok(Self { activation, params })
    }

    pub fn with_energy_slope(mut self, w: f64) -> Self {
        self.params.energy_slope_w = w;
        self
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layers(&self) -> &[Dense] {
        &self.params.layers
    }

    pub fn energy_slope(&self) -> f64 {
        self.params.energy_slope_w
    }

    pub fn head(&self) -> Option<&OodHead> {
        self.params.ood_head.as_ref()
    }

    pub fn has_head(&self) -> bool {
        self.params.ood_head.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.params.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.params.layers.last().map(Dense::out_dim).unwrap_or(0)
    }

    /// `[input, hidden..., K]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.params.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.params.zeros_like()
    }

    /// Logits plus the activations needed by [`MlpModel::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Trace)> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.params.layers.len();
        let mut pre = Vec::with_capacity(n_layers);
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_layers.saturating_sub(1));
        for (l, layer) in self.params.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &post[l - 1] };
            let mut z = Vec::with_capacity(layer.out_dim());
            layer.weight.affine(input, &layer.bias, &mut z);
            if l + 1 < n_layers {
                post.push(z.iter().map(|&v| self.activation.apply(v)).collect());
            }
            pre.push(z);
        }
        let mut trace = Trace {
            input: x.to_vec(),
            pre,
            post,
            head: None,
        };
        if let Some(head) = &self.params.ood_head {
            let mut hp = Vec::with_capacity(head.width());
            head.hidden_weight
                .affine(trace.penultimate(), &head.hidden_bias, &mut hp);
            let hidden: Vec<f64> = hp.iter().map(|v| v.max(0.0)).collect();
            let score = hidden
                .iter()
                .zip(&head.output_weight)
                .fold(head.output_bias, |acc, (a, v)| acc + a * v);
            trace.head = Some(HeadTrace {
                pre: hp,
                hidden,
                score,
            });
        }
        let logits = trace.logits().to_vec();
        Ok((logits, trace))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(x).map(|(logits, _)| logits)
    }

    /// Gradient of a loss that depends on the logits only.
    pub fn backward(&self, trace: &Trace, d_logits: &[f64]) -> Result<Gradients> {
        let mut grads = self.zero_gradients();
        self.backward_into(trace, d_logits, 0.0, &mut grads)?;
        Ok(grads)
    }

    /// Accumulate into `grads` the gradient of a loss with upstream
    /// derivatives `d_logits` (w.r.t. the logits) and `d_head` (w.r.t. the
    /// head score). The energy-slope entry is left untouched.
    pub fn backward_into(
        &self,
        trace: &Trace,
        d_logits: &[f64],
        d_head: f64,
        grads: &mut Gradients,
    ) -> Result<()> {
        self.check_trace(trace)?;
        if d_logits.len() != self.num_classes() {
            return Err(Error::shape(format!(
                "upstream gradient has {} entries, model has {} classes",
                d_logits.len(),
                self.num_classes()
            )));
        }
        if !grads.same_shape(&self.params) {
            return Err(Error::shape("gradient buffer does not match model"));
        }
        if d_head != 0.0 && self.params.ood_head.is_none() {
            return Err(Error::config("head gradient supplied but model has no ood head"));
        }

        let n_layers = self.params.layers.len();
        // Gradient w.r.t. the penultimate features coming from the head.
        let mut head_feature_grad: Option<Vec<f64>> = None;
        if let (Some(head), Some(ht), Some(gh)) =
            (&self.params.ood_head, &trace.head, grads.ood_head.as_mut())
        {
            if d_head != 0.0 {
                for (gv, a) in gh.output_weight.iter_mut().zip(&ht.hidden) {
                    *gv += d_head * a;
                }
                gh.output_bias += d_head;
                let d_pre: Vec<f64> = head
                    .output_weight
                    .iter()
                    .zip(&ht.pre)
                    .map(|(v, z)| if *z > 0.0 { d_head * v } else { 0.0 })
                    .collect();
                gh.hidden_weight.add_outer(&d_pre, trace.penultimate(), 1.0);
                for (gb, d) in gh.hidden_bias.iter_mut().zip(&d_pre) {
                    *gb += d;
                }
                let mut dh = Vec::new();
                head.hidden_weight.transpose_mul(&d_pre, &mut dh);
                head_feature_grad = Some(dh);
            }
        }

        let mut delta = d_logits.to_vec();
        let mut back = Vec::new();
        for l in (0..n_layers).rev() {
            let layer = &self.params.layers[l];
            let input = if l == 0 { &trace.input } else { &trace.post[l - 1] };
            let g = &mut grads.layers[l];
            g.weight.add_outer(&delta, input, 1.0);
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            if l == 0 {
                break;
            }
            layer.weight.transpose_mul(&delta, &mut back);
            if l == n_layers - 1 {
                if let Some(dh) = &head_feature_grad {
                    for (b, h) in back.iter_mut().zip(dh) {
                        *b += h;
                    }
                }
            }
            delta.clear();
            delta.extend(
                back.iter()
                    .zip(&trace.pre[l - 1])
                    .zip(&trace.post[l - 1])
                    .map(|((b, z), a)| b * self.activation.derivative(*z, *a)),
            );
        }
        Ok(())
    }

    fn check_trace(&self, trace: &Trace) -> Result<()> {
        let ok = trace.input.len() == self.input_dim()
            && trace.pre.len() == self.params.layers.len()
            && trace
                .pre
                .iter()
                .zip(&self.params.layers)
                .all(|(z, layer)| z.len() == layer.out_dim())
            && trace.head.is_some() == self.params.ood_head.is_some();
        if ok {
            Ok(())
        } else {
            Err(Error::shape("trace was not produced by this model"))
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, act: Activation) -> Matrix {
    let data: Vec<f64> = match act {
        Activation::Relu => {
            let std = (2.0 / cols as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..rows * cols).map(|_| dist.sample(rng)).collect()
        }
        Activation::Tanh => {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            (0..rows * cols).map(|_| dist.sample(rng)).collect()
        }
    };
    Matrix::from_vec(rows, cols, data).expect("sized by construction")
}
