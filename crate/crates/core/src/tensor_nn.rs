//! Dense feed-forward networks in `f64` with exact backpropagation.
//!
//! Layers store weights row-major with shape `(out_dim, in_dim)`. Hidden layers
//! apply the configured activation; the final layer is affine and produces the
//! class logits. Two output heads are supported:
//!
//! - [`OutputKind::Logistic2`]: one score `z` per example, class logits `(-z, z)`,
//!   so `P(y = 1 | x) = e^z / (e^z + e^-z)`.
//! - [`OutputKind::Softmax`]: `K` logits, softmax probabilities.
//!
//! All reductions run left to right over examples so results are bit-identical
//! across repeated calls.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// New matrix made of the given rows, in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::Shape(format!(
                "vstack of {} and {} columns",
                self.cols, other.cols
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Matrix {
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    /// Single score `z`, class logits `(-z, z)`.
    Logistic2,
    /// `classes` logits with a softmax.
    Softmax { classes: usize },
}

impl OutputKind {
    pub fn classes(self) -> usize {
        match self {
            OutputKind::Logistic2 => 2,
            OutputKind::Softmax { classes } => classes,
        }
    }

    fn width(self) -> usize {
        match self {
            OutputKind::Logistic2 => 1,
            OutputKind::Softmax { classes } => classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Network parameters `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layers: Vec<Layer>,
    activation: Activation,
    output: OutputKind,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>, activation: Activation, output: OutputKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias length {} vs {} outputs",
                    layer.bias.len(),
                    layer.weight.rows()
                )));
            }
            if i > 0 && layers[i - 1].weight.rows() != layer.weight.cols() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    layer.weight.cols(),
                    i - 1,
                    layers[i - 1].weight.rows()
                )));
            }
        }
        let last = layers[layers.len() - 1].weight.rows();
        if last != output.width() {
            return Err(Error::Shape(format!(
                "final layer emits {last} scores, output head needs {}",
                output.width()
            )));
        }
        Ok(Self {
            layers,
            activation,
            output,
        })
    }

    /// All-zero parameters for the layer widths `sizes = [input, hidden.., head]`.
    pub fn zeros(sizes: &[usize], activation: Activation, output: OutputKind) -> Result<Self> {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self::new(layers, activation, output)
    }

    /// He-style uniform initialisation: `W ~ U(-a, a)` with `a = sqrt(6 / fan_in)`,
    /// zero biases. `sizes` lists layer widths; the last entry must match the head.
    pub fn init_he<R: Rng>(
        sizes: &[usize],
        activation: Activation,
        output: OutputKind,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(sizes, activation, output)?;
        for layer in &mut params.layers {
            let bound = (6.0 / layer.weight.cols() as f64).sqrt();
            for w in &mut layer.weight.data {
                *w = rng.gen_range(-bound..bound);
            }
        }
        Ok(params)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output(&self) -> OutputKind {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.output.classes()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data.len() + l.bias.len())
            .sum()
    }

    /// Layer by layer: weight (row-major) then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weight.data);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    /// Inverse of [`MlpParams::flatten`].
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut out = self.clone();
        let mut at = 0;
        for layer in &mut out.layers {
            let n = layer.weight.data.len();
            layer.weight.data.copy_from_slice(&flat[at..at + n]);
            at += n;
            let m = layer.bias.len();
            layer.bias.copy_from_slice(&flat[at..at + m]);
            at += m;
        }
        Ok(out)
    }

    /// `θ ← θ - step · g` for a flattened direction `g`.
    pub fn step(&mut self, direction: &[f64], step: f64) {
        let mut at = 0;
        for layer in &mut self.layers {
            for w in layer.weight.data.iter_mut().chain(layer.bias.iter_mut()) {
                *w -= step * direction[at];
                at += 1;
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data.iter().chain(l.bias.iter()))
            .map(|w| w * w)
            .sum()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; `inputs[0]` is the batch.
    pub inputs: Vec<Matrix>,
    /// Pre-activations per layer; the last one holds the raw head scores.
    pub pre: Vec<Matrix>,
    /// Class logits, `n × K`.
    pub logits: Matrix,
    /// Class probabilities, `n × K`.
    pub probs: Matrix,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.logits.rows()
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.probs.rows())
            .map(|i| argmax(self.probs.row(i)))
            .collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

fn affine(input: &Matrix, layer: &Layer) -> Matrix {
    let (n, d_in, d_out) = (input.rows, input.cols, layer.weight.rows);
    let mut out = Matrix::zeros(n, d_out);
    for i in 0..n {
        let x = input.row(i);
        for o in 0..d_out {
            let w = layer.weight.row(o);
            let mut acc = layer.bias[o];
            for j in 0..d_in {
                acc += w[j] * x[j];
            }
            out.data[i * d_out + o] = acc;
        }
    }
    out
}

fn softmax_row(logits: &[f64], out: &mut [f64]) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Forward pass over a batch (one example per row).
pub fn mlp_forward(params: &MlpParams, batch: &Matrix) -> Result<ForwardCache> {
    if batch.cols != params.input_dim() {
        return Err(Error::Shape(format!(
            "batch has {} features, network expects {}",
            batch.cols,
            params.input_dim()
        )));
    }
    let last = params.layers.len() - 1;
    let mut inputs = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut current = batch.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let z = affine(&current, layer);
        inputs.push(current);
        current = if l == last {
            z.clone()
        } else {
            let mut a = z.clone();
            for v in &mut a.data {
                *v = params.activation.apply(*v);
            }
            a
        };
        pre.push(z);
    }
    let n = batch.rows;
    let k = params.num_classes();
    let scores = &pre[last];
    let mut logits = Matrix::zeros(n, k);
    let mut probs = Matrix::zeros(n, k);
    match params.output {
        OutputKind::Logistic2 => {
            for i in 0..n {
                let z = scores.data[i];
                logits.data[2 * i] = -z;
                logits.data[2 * i + 1] = z;
                let p1 = sigmoid(2.0 * z);
                probs.data[2 * i] = sigmoid(-2.0 * z);
                probs.data[2 * i + 1] = p1;
            }
        }
        OutputKind::Softmax { .. } => {
            logits.data.copy_from_slice(&scores.data);
            for i in 0..n {
                let (lo, hi) = (i * k, (i + 1) * k);
                softmax_row(&logits.data[lo..hi], &mut probs.data[lo..hi]);
            }
        }
    }
    Ok(ForwardCache {
        inputs,
        pre,
        logits,
        probs,
    })
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn check_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} examples", labels.len())));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= k) {
        return Err(Error::Input(format!("label {y} at index {i} outside 0..{k}")));
    }
    Ok(())
}

/// Cross-entropy `ℓ_i = -log p(y_i | x_i)` from logits via log-sum-exp.
pub fn per_example_loss(cache: &ForwardCache, labels: &[usize]) -> Result<Vec<f64>> {
    let (n, k) = (cache.logits.rows, cache.logits.cols);
    check_labels(labels, n, k)?;
    Ok((0..n)
        .map(|i| {
            let row = cache.logits.row(i);
            let top = argmax(row);
            let m = row[top];
            let rest: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != top)
                .map(|(_, &l)| (l - m).exp())
                .sum();
            (m - row[labels[i]]) + rest.ln_1p()
        })
        .collect())
}

/// `∇_θ [Σ_i ω_i ℓ_i + (λ/2)||θ||²]`, flattened like [`MlpParams::flatten`].
pub fn weighted_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    labels: &[usize],
    weights: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    let (n, k) = (cache.probs.rows, cache.probs.cols);
    check_labels(labels, n, k)?;
    if weights.len() != n {
        return Err(Error::Shape(format!("{} weights for {n} examples", weights.len())));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(Error::Input(format!("observation weight {w} is negative or NaN")));
    }

    // d(ω_i ℓ_i) / d(head score)
    let last = params.layers.len() - 1;
    let width = params.output.width();
    let mut delta = Matrix::zeros(n, width);
    for i in 0..n {
        let p = cache.probs.row(i);
        match params.output {
            OutputKind::Logistic2 => {
                let y = if labels[i] == 1 { 1.0 } else { 0.0 };
                delta.data[i] = weights[i] * 2.0 * (p[1] - y);
            }
            OutputKind::Softmax { .. } => {
                for c in 0..k {
                    let target = if c == labels[i] { 1.0 } else { 0.0 };
                    delta.data[i * k + c] = weights[i] * (p[c] - target);
                }
            }
        }
    }

    let mut grads: Vec<Vec<f64>> = vec![Vec::new(); params.layers.len()];
    for l in (0..=last).rev() {
        let layer = &params.layers[l];
        let input = &cache.inputs[l];
        let (d_out, d_in) = (layer.weight.rows, layer.weight.cols);
        let mut gw = vec![0.0; d_out * d_in];
        let mut gb = vec![0.0; d_out];
        for i in 0..n {
            let x = input.row(i);
            let d = delta.row(i);
            for o in 0..d_out {
                let dv = d[o];
                if dv == 0.0 {
                    continue;
                }
                gb[o] += dv;
                let row = &mut gw[o * d_in..(o + 1) * d_in];
                for j in 0..d_in {
                    row[j] += dv * x[j];
                }
            }
        }
        for (g, w) in gw.iter_mut().zip(&layer.weight.data) {
            *g += lambda * w;
        }
        for (g, b) in gb.iter_mut().zip(&layer.bias) {
            *g += lambda * b;
        }
        if gw.iter().chain(&gb).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: l,
                what: "gradient".into(),
            });
        }
        let mut flat = gw;
        flat.extend_from_slice(&gb);
        grads[l] = flat;

        if l > 0 {
            let z_prev = &cache.pre[l - 1];
            let mut next = Matrix::zeros(n, d_in);
            for i in 0..n {
                let d = delta.row(i);
                let zp = z_prev.row(i);
                for j in 0..d_in {
                    let mut acc = 0.0;
                    for o in 0..d_out {
                        acc += d[o] * layer.weight.data[o * d_in + j];
                    }
                    next.data[i * d_in + j] = acc * params.activation.derivative(zp[j]);
                }
            }
            delta = next;
        }
    }
    Ok(grads.concat())
}

/// Gradient of each `ℓ_i` separately. Costs one backward pass per example.
pub fn per_example_gradients(
    params: &MlpParams,
    batch: &Matrix,
    labels: &[usize],
) -> Result<Vec<Vec<f64>>> {
    (0..batch.rows)
        .map(|i| {
            let one = batch.select_rows(&[i]);
            let cache = mlp_forward(params, &one)?;
            weighted_backward(params, &cache, &labels[i..=i], &[1.0], 0.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch3() -> Matrix {
        Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25], vec![-1.5, 3.0]]).unwrap()
    }

    #[test]
    fn zero_network_gives_half_probabilities() {
        let p = MlpParams::zeros(&[2, 3, 1], Activation::Relu, OutputKind::Logistic2).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        assert!(cache.probs.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_layer_gives_softmax_of_input() {
        let layers = vec![Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
        }];
        let p = MlpParams::new(layers, Activation::Identity, OutputKind::Softmax { classes: 3 }).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let cache = mlp_forward(&p, &x).unwrap();
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (j, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((cache.probs.get(0, j) - v.exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn two_layer_forward_matches_hand_evaluation() {
        // W1 = [[1, -1], [0.5, 2]], b1 = [0, -1]; W2 = [[1, -2]], b2 = [0.5]
        let layers = vec![
            Layer {
                weight: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap(),
                bias: vec![0.0, -1.0],
            },
            Layer {
                weight: Matrix::from_rows(&[vec![1.0, -2.0]]).unwrap(),
                bias: vec![0.5],
            },
        ];
        let p = MlpParams::new(layers, Activation::Relu, OutputKind::Logistic2).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        // row 0: h = relu(3, -4.5) = (3, 0); z = 3.5
        // row 1: h = relu(0.25, -0.25) = (0.25, 0); z = 0.75
        // row 2: h = relu(-4.5, 4.25) = (0, 4.25); z = -8
        let expect_z = [3.5, 0.75, -8.0];
        for (i, z) in expect_z.iter().enumerate() {
            assert_eq!(cache.logits.get(i, 1), *z);
            let p1 = (2.0 * z).exp() / ((2.0 * z).exp() + 1.0);
            assert!((cache.probs.get(i, 1) - p1).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = MlpParams::zeros(&[3, 1], Activation::Relu, OutputKind::Logistic2).unwrap();
        assert!(matches!(mlp_forward(&p, &batch3()), Err(Error::Shape(_))));
    }

    #[test]
    fn losses_for_known_predictions() {
        let p = MlpParams::zeros(&[2, 1], Activation::Identity, OutputKind::Logistic2).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        let l = per_example_loss(&cache, &[0, 1, 1]).unwrap();
        assert!(l.iter().all(|v| (v - 2f64.ln()).abs() < 1e-15));

        // logits (-z, z) with z = s·x = 1 and true label 1: log(1 + e^-2)
        let layers = vec![Layer {
            weight: Matrix::from_rows(&[vec![1.0]]).unwrap(),
            bias: vec![0.0],
        }];
        let p = MlpParams::new(layers, Activation::Identity, OutputKind::Logistic2).unwrap();
        let cache = mlp_forward(&p, &Matrix::from_rows(&[vec![1.0]]).unwrap()).unwrap();
        let l = per_example_loss(&cache, &[1]).unwrap();
        assert!((l[0] - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
        assert!((l[0] - 0.126_928_011_042_972_6).abs() < 1e-12);
    }

    #[test]
    fn loss_is_zero_for_certain_prediction() {
        let layers = vec![Layer {
            weight: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            bias: vec![0.0, 0.0],
        }];
        let p = MlpParams::new(layers, Activation::Identity, OutputKind::Softmax { classes: 2 }).unwrap();
        let cache = mlp_forward(&p, &Matrix::from_rows(&[vec![1000.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(per_example_loss(&cache, &[0]).unwrap()[0], 0.0);
        assert!(per_example_loss(&cache, &[1]).unwrap()[0] > 0.0);
    }

    #[test]
    fn label_out_of_range_is_input_error() {
        let p = MlpParams::zeros(&[2, 1], Activation::Relu, OutputKind::Logistic2).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        assert!(matches!(per_example_loss(&cache, &[0, 2, 1]), Err(Error::Input(_))));
    }

    #[test]
    fn logistic_head_matches_two_logit_softmax() {
        // softmax over (a, b) equals the logistic head with z = (b - a) / 2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let soft = MlpParams::init_he(&[2, 4, 2], Activation::Relu, OutputKind::Softmax { classes: 2 }, &mut rng).unwrap();
        let mut layers = soft.layers().to_vec();
        let head = &layers[1];
        let w: Vec<f64> = (0..4).map(|j| (head.weight.get(1, j) - head.weight.get(0, j)) / 2.0).collect();
        let b = (head.bias[1] - head.bias[0]) / 2.0;
        layers[1] = Layer {
            weight: Matrix::new(1, 4, w).unwrap(),
            bias: vec![b],
        };
        let logi = MlpParams::new(layers, Activation::Relu, OutputKind::Logistic2).unwrap();
        let x = batch3();
        let a = mlp_forward(&soft, &x).unwrap();
        let c = mlp_forward(&logi, &x).unwrap();
        for (u, v) in a.probs.data().iter().zip(c.probs.data()) {
            assert!((u - v).abs() < 1e-14);
        }
        let labels = [1, 0, 1];
        let la = per_example_loss(&a, &labels).unwrap();
        let lc = per_example_loss(&c, &labels).unwrap();
        for (u, v) in la.iter().zip(&lc) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_weights_leave_only_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = MlpParams::init_he(&[2, 3, 1], Activation::Relu, OutputKind::Logistic2, &mut rng).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        let g = weighted_backward(&p, &cache, &[0, 1, 0], &[0.0; 3], 0.7).unwrap();
        for (gi, ti) in g.iter().zip(p.flatten()) {
            assert_eq!(*gi, 0.7 * ti);
        }
    }

    #[test]
    fn gradient_is_linear_in_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = MlpParams::init_he(&[2, 3, 3], Activation::Relu, OutputKind::Softmax { classes: 3 }, &mut rng).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        let w = [0.3, 1.2, 0.8];
        let w2: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let g1 = weighted_backward(&p, &cache, &[2, 1, 0], &w, 0.0).unwrap();
        let g2 = weighted_backward(&p, &cache, &[2, 1, 0], &w2, 0.0).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn negative_weight_rejected() {
        let p = MlpParams::zeros(&[2, 1], Activation::Relu, OutputKind::Logistic2).unwrap();
        let cache = mlp_forward(&p, &batch3()).unwrap();
        let r = weighted_backward(&p, &cache, &[0, 1, 0], &[1.0, -0.1, 1.0], 0.0);
        assert!(matches!(r, Err(Error::Input(_))));
    }

    #[test]
    fn flatten_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = MlpParams::init_he(&[4, 5, 3], Activation::Relu, OutputKind::Softmax { classes: 3 }, &mut rng).unwrap();
        let flat = p.flatten();
        assert_eq!(flat.len(), p.param_count());
        assert_eq!(p.with_flat(&flat).unwrap(), p);
        assert!(p.with_flat(&flat[1..]).is_err());
    }

    #[test]
    fn chained_dimensions_are_enforced() {
        let layers = vec![
            Layer { weight: Matrix::zeros(3, 2), bias: vec![0.0; 3] },
            Layer { weight: Matrix::zeros(1, 4), bias: vec![0.0] },
        ];
        assert!(MlpParams::new(layers, Activation::Relu, OutputKind::Logistic2).is_err());
    }
}
