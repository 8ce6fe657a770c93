//! Small feed-forward classifier with hand-written backpropagation.

use std::io::{BufRead, Write};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("class index {0} out of range")]
    BadTarget(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NetError> = std::result::Result<T, E>;

/// Probability floor used by the cross-entropy loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Softmax,
}

/// Dense layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone)]
struct LayerGrad {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Network {
    /// Hidden layers must be ReLU; the last layer is a 2-way softmax.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let bad = |m: String| Err(NetError::InvalidNetwork(m));
        let Some(last) = layers.last() else {
            return bad("no layers".into());
        };
        if last.activation != Activation::Softmax || last.outputs != 2 {
            return bad("final layer must be a softmax over 2 outputs".into());
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return bad(format!("layer {i} has a zero dimension"));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return bad(format!("layer {i} parameter sizes do not match its shape"));
            }
            if i + 1 < layers.len() && l.activation != Activation::Relu {
                return bad(format!("hidden layer {i} must be ReLU"));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return bad(format!("layer {i} input does not chain"));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.affine(acts.last().unwrap());
            match layer.activation {
                Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Softmax => softmax_in_place(&mut z),
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).pop().unwrap())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Cross-entropy `-ln p(target)` with the probability floored at
    /// [`PROB_FLOOR`].
    pub fn loss(&self, x: &[f64], target: usize) -> Result<f64> {
        if target > 1 {
            return Err(NetError::BadTarget(target));
        }
        let p = self.forward(x)?;
        Ok(-p[target].max(PROB_FLOOR).ln())
    }

    /// Gradient of [`Network::loss`] with respect to the input vector.
    pub fn grad_input(&self, x: &[f64], target: usize) -> Result<Vec<f64>> {
        if target > 1 {
            return Err(NetError::BadTarget(target));
        }
        self.check_input(x)?;
        let acts = self.trace(x);
        Ok(self.backward(&acts, target, None))
    }

    /// Backpropagates from the output; accumulates parameter gradients into
    /// `param_grads` when given and returns the input gradient.
    fn backward(
        &self,
        acts: &[Vec<f64>],
        target: usize,
        mut param_grads: Option<&mut [LayerGrad]>,
    ) -> Vec<f64> {
        // Softmax + cross-entropy: dL/dz = p - onehot(target).
        let mut delta = acts.last().unwrap().clone();
        delta[target] -= 1.0;
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &acts[li];
            if let Some(grads) = param_grads.as_deref_mut() {
                let g = &mut grads[li];
                for (o, d) in delta.iter().enumerate() {
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, a) in row.iter_mut().zip(input) {
                        *w += d * a;
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (row, d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if li > 0 {
                // Gate by the previous layer's ReLU.
                for (p, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        delta
    }

    fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers
            .iter()
            .map(|l| LayerGrad {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect()
    }

    fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
    }

    /// Mean loss over a dataset and, optionally, the mean parameter gradient
    /// flattened in [`Network::flat_params`] order.
    fn batch_loss(&self, data: &Dataset, with_grad: bool) -> (f64, Option<Vec<f64>>) {
        let mut grads = with_grad.then(|| self.zero_grads());
        let mut total = 0.0;
        for (x, &y) in data.samples.iter().zip(&data.labels) {
            let acts = self.trace(x);
            total += -acts.last().unwrap()[y].max(PROB_FLOOR).ln();
            if let Some(g) = grads.as_deref_mut() {
                self.backward(&acts, y, Some(g));
            }
        }
        let n = data.len() as f64;
        let flat = grads.map(|g| {
            let mut out = Vec::with_capacity(self.param_count());
            for lg in g {
                out.extend(lg.weights.iter().map(|v| v / n));
                out.extend(lg.bias.iter().map(|v| v / n));
            }
            out
        });
        (total / n, flat)
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .samples
            .iter()
            .zip(&data.labels)
            .filter(|(x, &y)| argmax(&self.trace(x).pop().unwrap()) == y)
            .count();
        hits as f64 / data.len() as f64
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// One ReLU hidden layer and a 2-way softmax output. He-uniform weights for
/// the hidden layer, Glorot-uniform for the output, zero biases.
pub fn init_network(input_width: usize, hidden: usize, seed: u64) -> Result<Network> {
    if input_width == 0 || hidden == 0 {
        return Err(NetError::InvalidNetwork(
            "input width and hidden size must be >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform_layer = |inputs: usize, outputs: usize, limit: f64, act| {
        let dist = Uniform::new_inclusive(-limit, limit);
        let mut l = Layer::zeros(inputs, outputs, act);
        l.weights
            .iter_mut()
            .for_each(|w| *w = dist.sample(&mut rng));
        l
    };
    let he = (6.0 / input_width as f64).sqrt();
    let glorot = (6.0 / (hidden + 2) as f64).sqrt();
    let hidden_layer = uniform_layer(input_width, hidden, he, Activation::Relu);
    let output_layer = uniform_layer(hidden, 2, glorot, Activation::Softmax);
    Network::new(vec![hidden_layer, output_layer])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamParams {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamParams {
            learning_rate,
            ..Default::default()
        }
    }
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub params: AdamParams,
}

impl AdamState {
    pub fn new(len: usize, params: AdamParams) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            params,
        }
    }

    /// One bias-corrected Adam update of `params` in place (descent
    /// direction: parameters move against the gradient).
    pub fn step(&mut self, params: &mut [f64], gradient: &[f64]) -> Result<()> {
        for len in [params.len(), gradient.len()] {
            if len != self.m.len() {
                return Err(NetError::DimensionMismatch {
                    expected: self.m.len(),
                    got: len,
                });
            }
        }
        let AdamParams {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = gradient[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamParams,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamParams::default(),
            max_epochs: 500,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: usize,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Full-batch Adam training with early stopping on validation loss. The
/// network ends up holding the weights with the lowest validation loss seen.
pub fn train(
    net: &mut Network,
    train: &Dataset,
    val: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if train.is_empty() || val.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    for w in [train.width(), val.width()] {
        if w != net.input_width() {
            return Err(NetError::DimensionMismatch {
                expected: net.input_width(),
                got: w,
            });
        }
    }
    let mut params = net.flat_params();
    let mut adam = AdamState::new(params.len(), config.adam);
    let mut best = (net.batch_loss(val, false).0, params.clone(), 0usize);
    let mut stale = 0;
    let mut epochs = 0;
    while epochs < config.max_epochs {
        let (_, grad) = net.batch_loss(train, true);
        adam.step(&mut params, &grad.unwrap())?;
        net.set_flat_params(&params);
        epochs += 1;
        let val_loss = net.batch_loss(val, false).0;
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epochs);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    net.set_flat_params(&best.1);
    Ok(TrainReport {
        epochs,
        best_epoch: best.2,
        train_loss: net.batch_loss(train, false).0,
        val_loss: best.0,
        val_accuracy: net.accuracy(val),
    })
}

const MAGIC: &str = "cadex-network";
const VERSION: u32 = 1;

pub(crate) fn write_hex_row(w: &mut impl Write, tag: &str, values: &[f64]) -> std::io::Result<()> {
    write!(w, "{tag}")?;
    for v in values {
        write!(w, " {:016x}", v.to_bits())?;
    }
    writeln!(w)
}

pub(crate) fn parse_hex_row(line: &str, tag: &str, len: usize) -> Result<Vec<f64>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(tag) {
        return Err(NetError::Format(format!("expected {tag:?} row")));
    }
    let values = it
        .map(|h| {
            u64::from_str_radix(h, 16)
                .map(f64::from_bits)
                .map_err(|_| NetError::Format(format!("bad hex value {h:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != len {
        return Err(NetError::Format(format!(
            "{tag} row has {} values, expected {len}",
            values.len()
        )));
    }
    Ok(values)
}

impl Network {
    /// Line-oriented text format; every float is stored as its IEEE-754 bit
    /// pattern so a reload is bit-exact.
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MAGIC} {VERSION}")?;
        writeln!(w, "layers {}", self.layers.len())?;
        for l in &self.layers {
            let act = match l.activation {
                Activation::Relu => "relu",
                Activation::Softmax => "softmax",
            };
            writeln!(w, "layer {act} {} {}", l.outputs, l.inputs)?;
            write_hex_row(w, "w", &l.weights)?;
            write_hex_row(w, "b", &l.bias)?;
        }
        Ok(())
    }

    pub fn load(r: &mut impl BufRead) -> Result<Network> {
        let mut lines = r.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| NetError::Format("unexpected end of file".into()))
        };
        let head = next()?;
        match head.split_whitespace().collect::<Vec<_>>()[..] {
            [MAGIC, v] if v == VERSION.to_string() => {}
            [MAGIC, v] => return Err(NetError::Format(format!("unsupported version {v}"))),
            _ => return Err(NetError::Format("not a cadex network file".into())),
        }
        let count: usize = next()?
            .strip_prefix("layers ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| NetError::Format("bad layer count".into()))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let spec = next()?;
            let parts: Vec<&str> = spec.split_whitespace().collect();
            let (act, outputs, inputs) = match parts[..] {
                ["layer", act, o, i] => (act, o.parse::<usize>(), i.parse::<usize>()),
                _ => return Err(NetError::Format(format!("bad layer header {spec:?}"))),
            };
            let (Ok(outputs), Ok(inputs)) = (outputs, inputs) else {
                return Err(NetError::Format(format!("bad layer shape {spec:?}")));
            };
            let activation = match act {
                "relu" => Activation::Relu,
                "softmax" => Activation::Softmax,
                other => return Err(NetError::Format(format!("unknown activation {other:?}"))),
            };
            let weights = parse_hex_row(&next()?, "w", outputs * inputs)?;
            let bias = parse_hex_row(&next()?, "b", outputs)?;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
                activation,
            });
        }
        Network::new(layers)
    }
}
