//! Fully connected networks: forward and backward passes, the three losses
//! used by the training steps, classical-momentum SGD and a finite-difference
//! gradient checker.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Probabilities are clamped to `[BCE_EPSILON, 1 - BCE_EPSILON]` before the log.
pub const BCE_EPSILON: f64 = 1e-7;

/// Floor applied to the true-class probability in the categorical loss.
const CATEGORICAL_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Matrix) {
        match self {
            Activation::Linear => {}
            Activation::Relu => z.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Sigmoid => z.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
            Activation::Softmax => {
                for r in 0..z.rows() {
                    softmax_in_place(z.row_mut(r));
                }
            }
        }
    }

    /// Turns `dL/da` into `dL/dz` given the activated output `a`.
    fn backprop(self, upstream: &Matrix, activated: &Matrix) -> Matrix {
        match self {
            Activation::Linear => upstream.clone(),
            Activation::Relu => {
                let mut dz = upstream.clone();
                for (g, &a) in dz.data_mut().iter_mut().zip(activated.data()) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
                dz
            }
            Activation::Sigmoid => {
                let mut dz = upstream.clone();
                for (g, &a) in dz.data_mut().iter_mut().zip(activated.data()) {
                    *g *= a * (1.0 - a);
                }
                dz
            }
            Activation::Softmax => {
                let mut dz = upstream.clone();
                for r in 0..dz.rows() {
                    let s = activated.row(r);
                    let row = dz.row_mut(r);
                    let inner: f64 = row.iter().zip(s).map(|(g, p)| g * p).sum();
                    for (g, &p) in row.iter_mut().zip(s) {
                        *g = p * (*g - inner);
                    }
                }
                dz
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// One affine layer `a = act(x W + b)` with `W` stored as `inputs x outputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    velocity_weight: Matrix,
    velocity_bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias, zero momentum.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self::from_parts(
            Matrix::from_vec(inputs, outputs, data).expect("sized buffer"),
            vec![0.0; outputs],
            activation,
        )
        .expect("consistent shapes")
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::Shape(format!(
                "bias of length {} for a layer with {} outputs",
                bias.len(),
                weight.cols()
            )));
        }
        Ok(Self {
            velocity_weight: Matrix::zeros(weight.rows(), weight.cols()),
            velocity_bias: vec![0.0; bias.len()],
            weight,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn velocity(&self) -> (&Matrix, &[f64]) {
        (&self.velocity_weight, &self.velocity_bias)
    }
}

/// Per-layer gradients, shaped like the parameters of the network that
/// produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weight: Matrix::zeros(l.inputs(), l.outputs()),
                    bias: vec![0.0; l.outputs()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.add_assign(&b.weight);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(&l.bias))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Activations recorded by [`Mlp::forward`]; `activations[0]` is the input and
/// `activations[i + 1]` the output of layer `i`.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
    generation: u64,
    dims: Vec<usize>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations
            .last()
            .expect("cache holds the input at least")
    }

    pub fn layer_output(&self, layer: usize) -> &Matrix {
        &self.activations[layer + 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, momentum: f64) -> Result<Self> {
        let cfg = Self {
            learning_rate,
            momentum,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // A zero rate is accepted so a component can be held fixed explicitly.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    generation: u64,
}

impl Mlp {
    /// `dims` lists every width from input to output; `activations` has one
    /// entry per layer.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::InvalidArgument(format!(
                "{} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("width {i} is zero")));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Dense::glorot(w[0], w[1], act, rng))
            .collect();
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    /// Hidden layers share `hidden`; the final layer uses `output`.
    pub fn uniform(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n = dims.len().saturating_sub(1);
        let acts: Vec<_> = (0..n)
            .map(|i| if i + 1 == n { output } else { hidden })
            .collect();
        Self::new(dims, &acts, rng)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self {
            layers,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access for hand-set weights. Invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    /// Every width from input to output.
    pub fn dims(&self) -> Vec<usize> {
        match self.layers.first() {
            None => Vec::new(),
            Some(first) => std::iter::once(first.inputs())
                .chain(self.layers.iter().map(Dense::outputs))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.layers.first().map(Dense::inputs)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.layers.last().map(Dense::outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Evaluates the network and keeps what [`Mlp::backward`] needs.
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = activations.last().expect("non-empty");
            let z = self.affine(i, layer, x)?;
            activations.push(z);
        }
        let cache = ForwardCache {
            activations,
            generation: self.generation,
            dims: self.dims(),
        };
        Ok((cache.output().clone(), cache))
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        let mut x = batch.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            x = self.affine(i, layer, &x)?;
        }
        Ok(x)
    }

    fn affine(&self, index: usize, layer: &Dense, x: &Matrix) -> Result<Matrix> {
        if x.cols() != layer.inputs() {
            return Err(Error::Shape(format!(
                "layer {index} expects {} inputs, got {}",
                layer.inputs(),
                x.cols()
            )));
        }
        let mut z = x.dot(&layer.weight);
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        layer.activation.apply(&mut z);
        Ok(z)
    }

    /// Backpropagates `dL/d(output)` and returns parameter gradients together
    /// with `dL/d(input)`.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(Gradients, Matrix)> {
        if cache.generation != self.generation || cache.dims != self.dims() {
            return Err(Error::Contract(
                "forward cache does not belong to the current parameters".into(),
            ));
        }
        if upstream.shape() != cache.output().shape() {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, network output is {:?}",
                upstream.shape(),
                cache.output().shape()
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer.activation.backprop(&g, &cache.activations[i + 1]);
            let input = &cache.activations[i];
            grads.push(LayerGradient {
                weight: input.t_dot(&dz),
                bias: dz.column_sums(),
            });
            g = dz.dot_t(&layer.weight);
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, g))
    }

    /// Classical momentum: `v ← μ·v − lr·g`, `θ ← θ + v`. Leaves the network
    /// untouched when any gradient entry is non-finite.
    pub fn sgd_step(&mut self, grads: &Gradients, config: &SgdConfig) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "{} gradient blocks for {} layers",
                grads.layers.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, g)) in self.layers.iter().zip(&grads.layers).enumerate() {
            if g.weight.shape() != layer.weight.shape() || g.bias.len() != layer.bias.len() {
                return Err(Error::Shape(format!(
                    "gradient for layer {i} has the wrong shape"
                )));
            }
            if !g.weight.is_finite() || g.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::divergence(
                    format!("sgd layer {i}"),
                    0,
                    "non-finite gradient entry",
                ));
            }
        }
        let (lr, mu) = (config.learning_rate, config.momentum);
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for ((p, v), &d) in layer
                .weight
                .data_mut()
                .iter_mut()
                .zip(layer.velocity_weight.data_mut())
                .zip(g.weight.data())
            {
                *v = mu * *v - lr * d;
                *p += *v;
            }
            for ((p, v), &d) in layer
                .bias
                .iter_mut()
                .zip(layer.velocity_bias.iter_mut())
                .zip(&g.bias)
            {
                *v = mu * *v - lr * d;
                *p += *v;
            }
        }
        self.generation += 1;
        Ok(())
    }

    /// SHA-256 over parameters and momentum buffers, as hex.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            for v in l
                .weight
                .data()
                .iter()
                .chain(&l.bias)
                .chain(l.velocity_weight.data())
                .chain(&l.velocity_bias)
            {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_checkpoint(&self, seed: Option<u64>, config: serde_json::Value) -> MlpCheckpoint {
        MlpCheckpoint {
            version: CHECKPOINT_VERSION,
            seed,
            config,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation,
                    weight: l.weight.data().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &MlpCheckpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported network checkpoint version {}",
                ckpt.version
            )));
        }
        let layers = ckpt
            .layers
            .iter()
            .map(|r| {
                let w = Matrix::from_vec(r.inputs, r.outputs, r.weight.clone())?;
                Dense::from_parts(w, r.bias.clone(), r.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }
}

pub const CHECKPOINT_VERSION: u8 = 1;

/// Serialized network: layer widths, activation tags and row-major parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub version: u8,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub layers: Vec<LayerRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MlpCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Mean over the batch of the squared L2 distance between rows.
pub fn loss_mse(prediction: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if prediction.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs target {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let n = prediction.rows().max(1) as f64;
    let diff = prediction.sub(target);
    let value = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
    Ok((value, diff.scale(2.0 / n)))
}

/// Mean binary cross-entropy of single-column probabilities against targets.
pub fn loss_bce(probability: &Matrix, labels: &[f64]) -> Result<(f64, Matrix)> {
    if probability.cols() != 1 || probability.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "probabilities {:?} vs {} labels",
            probability.shape(),
            labels.len()
        )));
    }
    let n = labels.len().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(probability.rows(), 1);
    for (i, (&p, &y)) in probability.data().iter().zip(labels).enumerate() {
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        value -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.data_mut()[i] = (p - y) / (p * (1.0 - p)) / n;
    }
    Ok((value / n, grad))
}

/// Mean negative log-likelihood of the true class under softmax rows.
pub fn loss_categorical(softmax: &Matrix, one_hot: &Matrix) -> Result<(f64, Matrix)> {
    if softmax.shape() != one_hot.shape() {
        return Err(Error::Shape(format!(
            "softmax {:?} vs one-hot {:?}",
            softmax.shape(),
            one_hot.shape()
        )));
    }
    let n = softmax.rows().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(softmax.rows(), softmax.cols());
    for r in 0..softmax.rows() {
        let class = one_hot_class(one_hot.row(r))
            .ok_or_else(|| Error::Contract(format!("row {r} is not a valid one-hot vector")))?;
        let total: f64 = softmax.row(r).iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!("softmax row {r} sums to {total}")));
        }
        let p = softmax.get(r, class).max(CATEGORICAL_FLOOR);
        value -= p.ln();
        grad.set(r, class, -1.0 / (p * n));
    }
    Ok((value / n, grad))
}

/// The index of the single `1.0` in a one-hot row.
pub fn one_hot_class(row: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &v) in row.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    hot
}

/// Where a parameter lives inside a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamLocation {
    Weight {
        layer: usize,
        row: usize,
        col: usize,
    },
    Bias {
        layer: usize,
        index: usize,
    },
}

#[derive(Clone, Debug)]
pub struct GradientCheckReport {
    pub passed: bool,
    pub worst_relative_error: f64,
    pub worst_location: Option<ParamLocation>,
    pub checked: usize,
}

pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

/// Compares backprop gradients with central finite differences on every parameter.
pub fn gradient_check<L>(
    net: &Mlp,
    input: &Matrix,
    loss: L,
    tolerance: f64,
) -> Result<GradientCheckReport>
where
    L: Fn(&Matrix) -> Result<(f64, Matrix)>,
{
    let (out, cache) = net.forward(input)?;
    let (_, upstream) = loss(&out)?;
    let (grads, _) = net.backward(&cache, &upstream)?;
    compare_gradients(net, input, loss, &grads, tolerance)
}

/// Finite-difference comparison against caller-supplied analytic gradients.
pub fn compare_gradients<L>(
    net: &Mlp,
    input: &Matrix,
    loss: L,
    analytic: &Gradients,
    tolerance: f64,
) -> Result<GradientCheckReport>
where
    L: Fn(&Matrix) -> Result<(f64, Matrix)>,
{
    let eval = |n: &Mlp| -> Result<f64> { Ok(loss(&n.predict(input)?)?.0) };
    let mut probe = net.clone();
    let mut worst = 0.0;
    let mut worst_location = None;
    let mut checked = 0;
    let h = FINITE_DIFFERENCE_STEP;

    for li in 0..net.layers.len() {
        let (rows, cols) = net.layers[li].weight.shape();
        for r in 0..rows {
            for c in 0..cols {
                let orig = probe.layers[li].weight.get(r, c);
                probe.layers[li].weight.set(r, c, orig + h);
                let plus = eval(&probe)?;
                probe.layers[li].weight.set(r, c, orig - h);
                let minus = eval(&probe)?;
                probe.layers[li].weight.set(r, c, orig);
                let err = relative_error(
                    analytic.layers[li].weight.get(r, c),
                    (plus - minus) / (2.0 * h),
                );
                checked += 1;
                if err > worst {
                    worst = err;
                    worst_location = Some(ParamLocation::Weight {
                        layer: li,
                        row: r,
                        col: c,
                    });
                }
            }
        }
        for b in 0..net.layers[li].bias.len() {
            let orig = probe.layers[li].bias[b];
            probe.layers[li].bias[b] = orig + h;
            let plus = eval(&probe)?;
            probe.layers[li].bias[b] = orig - h;
            let minus = eval(&probe)?;
            probe.layers[li].bias[b] = orig;
            let err = relative_error(analytic.layers[li].bias[b], (plus - minus) / (2.0 * h));
            checked += 1;
            if err > worst {
                worst = err;
                worst_location = Some(ParamLocation::Bias {
                    layer: li,
                    index: b,
                });
            }
        }
    }
    Ok(GradientCheckReport {
        passed: worst < tolerance,
        worst_relative_error: worst,
        worst_location,
        checked,
    })
}

/// `|a - b| / max(|a|, |b|, 1e-6)`; the floor keeps vanishing gradients from
/// reporting roundoff as error.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn single(weight: Matrix, bias: Vec<f64>, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Dense::from_parts(weight, bias, act).unwrap()]).unwrap()
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let net = single(Matrix::identity(3), vec![0.0; 3], Activation::Linear);
        let v = Matrix::row_vector(&[1.5, -2.0, 0.25]);
        assert_eq!(net.predict(&v).unwrap(), v);
    }

    #[test]
    fn relu_clips_negatives() {
        let net = single(Matrix::identity(3), vec![0.0; 3], Activation::Relu);
        let out = net.predict(&Matrix::row_vector(&[-1.0, 0.0, 2.0])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn two_layer_net_matches_scalar_reevaluation() {
        // Hand-set weights evaluated scalar by scalar.
        let w1 = Matrix::from_rows(&[[0.5, -1.0], [2.0, 0.25], [-0.75, 1.5]]).unwrap();
        let b1 = vec![0.1, -0.2];
        let w2 = Matrix::from_rows(&[[1.0], [-3.0]]).unwrap();
        let b2 = vec![0.05];
        let net = Mlp::from_layers(vec![
            Dense::from_parts(w1.clone(), b1.clone(), Activation::Relu).unwrap(),
            Dense::from_parts(w2.clone(), b2.clone(), Activation::Sigmoid).unwrap(),
        ])
        .unwrap();
        let x = [0.3, -0.6, 0.9];
        let mut hidden = [0.0; 2];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut z = b1[j];
            for (i, xi) in x.iter().enumerate() {
                z += xi * w1.get(i, j);
            }
            *h = z.max(0.0);
        }
        let z = b2[0] + hidden[0] * w2.get(0, 0) + hidden[1] * w2.get(1, 0);
        let expected = 1.0 / (1.0 + (-z).exp());
        let out = net.predict(&Matrix::row_vector(&x)).unwrap();
        assert!((out.get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_width_naming_layer() {
        let mut rng = seeded(1);
        let net = Mlp::uniform(&[3, 4, 2], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let err = net.forward(&Matrix::zeros(2, 5)).unwrap_err();
        assert!(err.to_string().contains("layer 0"), "{err}");
    }

    #[test]
    fn linear_weight_gradient_is_input_column_sums() {
        let net = single(Matrix::zeros(3, 2), vec![0.0; 2], Activation::Linear);
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let (out, cache) = net.forward(&x).unwrap();
        let ones = Matrix::filled(out.rows(), out.cols(), 1.0);
        let (g, dx) = net.backward(&cache, &ones).unwrap();
        assert_eq!(g.layers[0].weight.data(), &[5.0, 5.0, 7.0, 7.0, 9.0, 9.0]);
        assert_eq!(g.layers[0].bias, vec![2.0, 2.0]);
        assert_eq!(dx.shape(), x.shape());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(3);
        let net = Mlp::uniform(
            &[4, 5, 3],
            Activation::Sigmoid,
            Activation::Softmax,
            &mut rng,
        )
        .unwrap();
        let x = Matrix::filled(2, 4, 0.3);
        let (out, cache) = net.forward(&x).unwrap();
        let (g, dx) = net
            .backward(&cache, &Matrix::zeros(out.rows(), out.cols()))
            .unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = seeded(4);
        let mut net =
            Mlp::uniform(&[2, 3, 1], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let (out, cache) = net.forward(&Matrix::filled(1, 2, 1.0)).unwrap();
        let grads = Gradients::zeros_like(&net);
        net.sgd_step(&grads, &SgdConfig::new(0.1, 0.0).unwrap())
            .unwrap();
        let err = net.backward(&cache, &out).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn mse_examples() {
        let p = Matrix::row_vector(&[0.0, 0.0]);
        let t = Matrix::row_vector(&[3.0, 4.0]);
        assert_eq!(loss_mse(&p, &t).unwrap().0, 25.0);
        assert_eq!(loss_mse(&t, &t).unwrap().0, 0.0);
        assert!(loss_mse(&p, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn bce_examples() {
        let (v, _) = loss_bce(&Matrix::filled(1, 1, 0.5), &[1.0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let (v, _) = loss_bce(&Matrix::filled(1, 1, 1.0), &[1.0]).unwrap();
        assert!(v > 0.0 && v < 2e-7);
        let (v, _) = loss_bce(&Matrix::filled(1, 1, 0.0), &[1.0]).unwrap();
        assert!((v - (-(BCE_EPSILON.ln()))).abs() < 1e-12);
    }

    #[test]
    fn categorical_examples() {
        let uniform = Matrix::filled(3, 4, 0.25);
        let labels = Matrix::from_rows(&[
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        let (v, _) = loss_categorical(&uniform, &labels).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-15);

        let sharp = Matrix::from_rows(&[[1.0 - 3e-12, 1e-12, 1e-12, 1e-12]]).unwrap();
        let (v, _) = loss_categorical(&sharp, &Matrix::row_vector(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(v < 1e-11);

        let bad = Matrix::row_vector(&[1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            loss_categorical(&Matrix::filled(1, 4, 0.25), &bad),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn sgd_examples() {
        let mut net = single(Matrix::filled(1, 1, 1.0), vec![0.0], Activation::Linear);
        let g = Gradients {
            layers: vec![LayerGradient {
                weight: Matrix::filled(1, 1, 2.0),
                bias: vec![0.0],
            }],
        };
        net.sgd_step(&g, &SgdConfig::new(0.1, 0.0).unwrap())
            .unwrap();
        assert!((net.layers()[0].weight.get(0, 0) - 0.8).abs() < 1e-15);

        // Two momentum steps on a fixed gradient: p - lr*g*(1 + (1 + mu)).
        let mut net = single(Matrix::filled(1, 1, 1.0), vec![0.0], Activation::Linear);
        let cfg = SgdConfig::new(0.1, 0.9).unwrap();
        net.sgd_step(&g, &cfg).unwrap();
        net.sgd_step(&g, &cfg).unwrap();
        let expected = 1.0 - 0.1 * 2.0 * (1.0 + 1.9);
        assert!((net.layers()[0].weight.get(0, 0) - expected).abs() < 1e-14);

        let before = net.clone();
        let zero = Gradients::zeros_like(&net);
        let mut fresh = single(Matrix::filled(1, 1, 1.0), vec![0.5], Activation::Linear);
        fresh.sgd_step(&zero, &cfg).unwrap();
        assert_eq!(fresh.layers()[0].weight.get(0, 0), 1.0);
        assert_eq!(fresh.layers()[0].bias[0], 0.5);
        drop(before);
    }

    #[test]
    fn sgd_rejects_non_finite_gradients() {
        let mut rng = seeded(9);
        let mut net =
            Mlp::uniform(&[2, 2, 1], Activation::Relu, Activation::Linear, &mut rng).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[1].bias[0] = f64::NAN;
        let before = net.checksum();
        let err = net
            .sgd_step(&g, &SgdConfig::new(0.1, 0.0).unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
        assert_eq!(net.checksum(), before);
    }

    #[test]
    fn corrupted_bias_gradient_is_located() {
        let mut rng = seeded(11);
        let net = Mlp::uniform(
            &[3, 4, 2],
            Activation::Sigmoid,
            Activation::Linear,
            &mut rng,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.4, 0.7], [0.5, 0.2, -0.3]]).unwrap();
        let target = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let loss = |p: &Matrix| loss_mse(p, &target);
        let (out, cache) = net.forward(&x).unwrap();
        let (mut g, _) = net.backward(&cache, &loss(&out).unwrap().1).unwrap();
        g.layers[0].bias[2] += 0.5;
        let report = compare_gradients(&net, &x, loss, &g, 1e-4).unwrap();
        assert!(!report.passed);
        assert_eq!(
            report.worst_location,
            Some(ParamLocation::Bias { layer: 0, index: 2 })
        );
    }

    #[test]
    fn empty_network_passes_vacuously() {
        let net = Mlp::from_layers(Vec::new()).unwrap();
        let x = Matrix::filled(2, 3, 1.0);
        let report = gradient_check(&net, &x, |p| loss_mse(p, &Matrix::zeros(2, 3)), 1e-4).unwrap();
        assert!(report.passed);
        assert_eq!(report.checked, 0);
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let mut rng = seeded(21);
        let net =
            Mlp::uniform(&[3, 5, 2], Activation::Relu, Activation::Softmax, &mut rng).unwrap();
        let ckpt = net.to_checkpoint(Some(21), serde_json::json!({"role": "test"}));
        let text = serde_json::to_string(&ckpt).unwrap();
        let back: MlpCheckpoint = serde_json::from_str(&text).unwrap();
        let restored = Mlp::from_checkpoint(&back).unwrap();
        assert_eq!(restored.checksum(), net.checksum());

        let mut wrong = back.clone();
        wrong.version = 9;
        assert!(Mlp::from_checkpoint(&wrong).is_err());
    }
}
