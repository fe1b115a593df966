//! Dense feed-forward network substrate: architecture description, forward
//! evaluation with per-neuron traces, softmax cross-entropy loss and exact
//! reverse-mode gradients.
//!
//! Hidden layers are ReLU-activated; the output layer is non-activated.
//! Inputs carry the non-sensitive features plus an encoding of the sensitive
//! attribute occupying `sensitive_slice` of the input layer.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint_binary, save_checkpoint_text};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation applied to hidden layers. The output layer is always identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
}

/// How the sensitive attribute is laid out inside the input vector.
///
/// Inferred from the width of `sensitive_slice`: a single column holds a
/// signed value in {-1, +1}; two or more columns hold a one-hot encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingMode {
    OneHot,
    SignedBinary,
}

/// Architecture of a fully connected classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Widths from input to output, length >= 2.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// Input positions that encode the sensitive attribute.
    pub sensitive_slice: Range<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, sensitive_slice: Range<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Spec("need at least an input and an output layer".into()));
        }
        if layer_sizes.iter().any(|&w| w == 0) {
            return Err(Error::Spec("layer widths must be positive".into()));
        }
        if sensitive_slice.start >= sensitive_slice.end {
            return Err(Error::Spec("sensitive slice must be non-empty".into()));
        }
        if sensitive_slice.end > layer_sizes[0] {
            return Err(Error::Spec(format!(
                "sensitive slice {:?} exceeds input width {}",
                sensitive_slice, layer_sizes[0]
            )));
        }
        Ok(Self { layer_sizes, activation: Activation::Relu, sensitive_slice })
    }

    /// Convenience constructor: input width, hidden widths, output width.
    pub fn with_hidden(
        input_width: usize,
        hidden: &[usize],
        output_width: usize,
        sensitive_slice: Range<usize>,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input_width);
        sizes.extend_from_slice(hidden);
        sizes.push(output_width);
        Self::new(sizes, sensitive_slice)
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of classes the classifier distinguishes. A single output
    /// neuron is a threshold-at-zero binary classifier.
    pub fn num_classes(&self) -> usize {
        self.output_width().max(2)
    }

    /// Number of weight/bias layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn sensitive_width(&self) -> usize {
        self.sensitive_slice.len()
    }

    pub fn nonsensitive_width(&self) -> usize {
        self.input_width() - self.sensitive_width()
    }

    pub fn encoding_mode(&self) -> EncodingMode {
        if self.sensitive_width() == 1 {
            EncodingMode::SignedBinary
        } else {
            EncodingMode::OneHot
        }
    }

    /// Input positions that do not encode the sensitive attribute, in order.
    pub fn nonsensitive_positions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.input_width()).filter(|i| !self.sensitive_slice.contains(i))
    }

    /// Builds the full input vector from non-sensitive features and a
    /// sensitive encoding.
    pub fn assemble_input(&self, x: &[f64], s_enc: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.nonsensitive_width() {
            return Err(Error::Shape(format!(
                "expected {} non-sensitive features, got {}",
                self.nonsensitive_width(),
                x.len()
            )));
        }
        if s_enc.len() != self.sensitive_width() {
            return Err(Error::Shape(format!(
                "expected sensitive encoding of width {}, got {}",
                self.sensitive_width(),
                s_enc.len()
            )));
        }
        let mut input = vec![0.0; self.input_width()];
        let mut xi = x.iter();
        for (pos, slot) in input.iter_mut().enumerate() {
            if self.sensitive_slice.contains(&pos) {
                *slot = s_enc[pos - self.sensitive_slice.start];
            } else {
                *slot = *xi.next().unwrap();
            }
        }
        Ok(input)
    }
}

/// One dense layer worth of values, row-major `[out x in]` weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerValues {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl LayerValues {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { weights: vec![0.0; rows * cols], biases: vec![0.0; rows], rows, cols }
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    #[inline]
    pub fn weight_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.weights[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.cols..(row + 1) * self.cols]
    }

    fn fill_zero(&mut self) {
        self.weights.iter_mut().for_each(|w| *w = 0.0);
        self.biases.iter_mut().for_each(|b| *b = 0.0);
    }

    fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += scale * b;
        }
    }
}

/// Network parameters, shaped by a [`NetworkSpec`], plus an update counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub layers: Vec<LayerValues>,
    /// Monotonically increasing update counter.
    pub version: u64,
}

impl Parameters {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = (0..spec.depth())
            .map(|l| LayerValues::zeros(spec.layer_sizes[l + 1], spec.layer_sizes[l]))
            .collect();
        Self { layers, version: 0 }
    }

    pub fn matches_spec(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() == spec.depth()
            && self.layers.iter().enumerate().all(|(l, layer)| {
                layer.rows == spec.layer_sizes[l + 1]
                    && layer.cols == spec.layer_sizes[l]
                    && layer.weights.len() == layer.rows * layer.cols
                    && layer.biases.len() == layer.rows
            })
    }

    pub fn validate_finite(&self) -> Result<()> {
        for (l, layer) in self.layers.iter().enumerate() {
            let ok = layer.weights.iter().chain(&layer.biases).all(|v| v.is_finite());
            if !ok {
                return Err(Error::NonFinite { layer: l });
            }
        }
        Ok(())
    }

    /// Applies `theta -= eta * grad` and bumps the version counter.
    pub fn apply_update(&mut self, grad: &GradientSet, eta: f64) -> Result<()> {
        if self.layers.len() != grad.layers.len() {
            return Err(Error::Shape("gradient/parameter layer count mismatch".into()));
        }
        for (layer, g) in self.layers.iter_mut().zip(&grad.layers) {
            layer.add_scaled(g, -eta);
        }
        self.version += 1;
        self.validate_finite()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }
}

/// Loss gradients with the same shape as [`Parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerValues>,
}

impl GradientSet {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self { layers: Parameters::zeros(spec).layers }
    }

    pub fn fill_zero(&mut self) {
        self.layers.iter_mut().for_each(LayerValues::fill_zero);
    }

    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.add_scaled(b, scale);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w *= factor);
            layer.biases.iter_mut().for_each(|b| *b *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Per-neuron evaluation record of one forward pass.
///
/// `pre[l]` and `post[l]` hold layer `l + 1` of the network (the input is
/// layer 0 and lives in `input`); the final `post` entry is the network
/// output, which equals its `pre` because the output layer is identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
    pub params_version: u64,
}

impl ForwardTrace {
    pub fn empty(spec: &NetworkSpec) -> Self {
        Self {
            input: vec![0.0; spec.input_width()],
            pre: spec.layer_sizes[1..].iter().map(|&w| vec![0.0; w]).collect(),
            post: spec.layer_sizes[1..].iter().map(|&w| vec![0.0; w]).collect(),
            params_version: u64::MAX,
        }
    }

    /// Output-layer values, equal to the network function value.
    pub fn output(&self) -> &[f64] {
        self.post.last().unwrap()
    }

    fn check_fresh(&self, params: &Parameters) -> Result<()> {
        if self.params_version != params.version {
            return Err(Error::StaleTrace { trace: self.params_version, params: params.version });
        }
        Ok(())
    }
}

/// Evaluates the network, recording every pre- and post-activation value.
pub fn forward(
    spec: &NetworkSpec,
    params: &Parameters,
    x: &[f64],
    s_enc: &[f64],
) -> Result<ForwardTrace> {
    let mut trace = ForwardTrace::empty(spec);
    forward_into(spec, params, x, s_enc, &mut trace)?;
    Ok(trace)
}

/// [`forward`] into a caller-owned trace, reusing its buffers.
pub fn forward_into(
    spec: &NetworkSpec,
    params: &Parameters,
    x: &[f64],
    s_enc: &[f64],
    trace: &mut ForwardTrace,
) -> Result<()> {
    let input = spec.assemble_input(x, s_enc)?;
    forward_assembled_into(spec, params, &input, trace)
}

/// Forward pass over an already assembled full-width input vector.
pub fn forward_assembled_into(
    spec: &NetworkSpec,
    params: &Parameters,
    input: &[f64],
    trace: &mut ForwardTrace,
) -> Result<()> {
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    if input.len() != spec.input_width() {
        return Err(Error::Shape(format!(
            "expected input width {}, got {}",
            spec.input_width(),
            input.len()
        )));
    }
    trace.input.clear();
    trace.input.extend_from_slice(input);

    let depth = spec.depth();
    for l in 0..depth {
        let layer = &params.layers[l];
        if l == 0 {
            matvec_bias(layer, &trace.input, &mut trace.pre[0]);
        } else {
            matvec_bias(layer, &trace.post[l - 1], &mut trace.pre[l]);
        }
        let activate = l + 1 < depth;
        let pre = &trace.pre[l];
        let post = &mut trace.post[l];
        post.clear();
        if activate {
            post.extend(pre.iter().map(|&v| v.max(0.0)));
        } else {
            post.extend_from_slice(pre);
        }
    }
    trace.params_version = params.version;
    Ok(())
}

fn matvec_bias(layer: &LayerValues, input: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.reserve(layer.rows);
    for r in 0..layer.rows {
        let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
        let mut acc = layer.biases[r];
        for (w, v) in row.iter().zip(input) {
            acc += w * v;
        }
        out.push(acc);
    }
}

/// Value of neuron `index` in `layer` (0 = input) for the traced input.
pub fn subnetwork_output(
    spec: &NetworkSpec,
    trace: &ForwardTrace,
    layer: usize,
    index: usize,
) -> Result<f64> {
    if layer > spec.depth() {
        return Err(Error::NeuronIndex { layer, index });
    }
    let values: &[f64] = if layer == 0 { &trace.input } else { &trace.post[layer - 1] };
    values.get(index).copied().ok_or(Error::NeuronIndex { layer, index })
}

/// Logits used for prediction and loss. A single physical output `z` acts
/// as the two-class logit vector `[0, z]`.
fn effective_logits(spec: &NetworkSpec, output: &[f64]) -> Vec<f64> {
    if spec.output_width() == 1 {
        vec![0.0, output[0]]
    } else {
        output.to_vec()
    }
}

/// Predicted class label in `1..=num_classes`; ties break to the lowest.
pub fn predict(spec: &NetworkSpec, trace: &ForwardTrace) -> usize {
    let logits = effective_logits(spec, trace.output());
    let mut best = 0;
    for (k, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = k;
        }
    }
    best + 1
}

fn check_label(spec: &NetworkSpec, label: usize) -> Result<()> {
    let k = spec.num_classes();
    if label == 0 || label > k {
        return Err(Error::Data(format!("label {label} outside 1..={k}")));
    }
    Ok(())
}

/// Softmax cross-entropy of the traced output against a 1-based label.
pub fn loss(spec: &NetworkSpec, trace: &ForwardTrace, label: usize) -> Result<f64> {
    check_label(spec, label)?;
    let logits = effective_logits(spec, trace.output());
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[label - 1])
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Posterior class probabilities for the traced input.
pub fn class_probabilities(spec: &NetworkSpec, trace: &ForwardTrace) -> Vec<f64> {
    softmax(&effective_logits(spec, trace.output()))
}

/// Loss gradient of one sample with respect to every parameter.
pub fn backward(
    spec: &NetworkSpec,
    params: &Parameters,
    trace: &ForwardTrace,
    label: usize,
) -> Result<GradientSet> {
    let mut grad = GradientSet::zeros(spec);
    backward_into(spec, params, trace, label, &mut grad)?;
    Ok(grad)
}

/// [`backward`] into a caller-owned gradient buffer, overwriting it.
pub fn backward_into(
    spec: &NetworkSpec,
    params: &Parameters,
    trace: &ForwardTrace,
    label: usize,
    grad: &mut GradientSet,
) -> Result<()> {
    check_label(spec, label)?;
    let seed = loss_seed(spec, trace, label);
    backward_seeded_into(spec, params, trace, &seed, grad)
}

/// Output-layer loss derivative: `softmax(z) - onehot(label)`, folded back
/// to one component when the network has a single physical output.
fn loss_seed(spec: &NetworkSpec, trace: &ForwardTrace, label: usize) -> Vec<f64> {
    let logits = effective_logits(spec, trace.output());
    let mut seed = softmax(&logits);
    seed[label - 1] -= 1.0;
    if spec.output_width() == 1 {
        // Logits are [0, z]; only the second component is a real neuron.
        vec![seed[1]]
    } else {
        seed
    }
}

/// Reverse-mode sweep from an arbitrary output-layer seed `dL/dz`.
///
/// Seeding with `onehot(k)` yields the jacobian row of output `k`; seeding
/// with the softmax residual yields the loss gradient. The ReLU derivative
/// at exactly zero is taken as zero.
pub fn backward_seeded_into(
    spec: &NetworkSpec,
    params: &Parameters,
    trace: &ForwardTrace,
    seed: &[f64],
    grad: &mut GradientSet,
) -> Result<()> {
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    trace.check_fresh(params)?;
    if seed.len() != spec.output_width() {
        return Err(Error::Shape(format!(
            "expected seed width {}, got {}",
            spec.output_width(),
            seed.len()
        )));
    }
    if grad.layers.len() != spec.depth() {
        return Err(Error::Shape("gradient buffer does not match spec".into()));
    }

    let depth = spec.depth();
    let mut delta: Vec<f64> = seed.to_vec();
    for l in (0..depth).rev() {
        let prev: &[f64] = if l == 0 { &trace.input } else { &trace.post[l - 1] };
        let g = &mut grad.layers[l];
        debug_assert_eq!(g.rows, delta.len());
        debug_assert_eq!(g.cols, prev.len());
        for r in 0..g.rows {
            let d = delta[r];
            let row = &mut g.weights[r * g.cols..(r + 1) * g.cols];
            for (slot, &p) in row.iter_mut().zip(prev) {
                *slot = d * p;
            }
            g.biases[r] = d;
        }
        if l == 0 {
            break;
        }
        // delta_{l-1} = (W_l^T delta_l) * relu'(pre_{l-1})
        let layer = &params.layers[l];
        let mut next = vec![0.0; layer.cols];
        for r in 0..layer.rows {
            let d = delta[r];
            if d == 0.0 {
                continue;
            }
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            for (slot, &w) in next.iter_mut().zip(row) {
                *slot += d * w;
            }
        }
        for (slot, &pre) in next.iter_mut().zip(&trace.pre[l - 1]) {
            if pre <= 0.0 {
                *slot = 0.0;
            }
        }
        delta = next;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
