//! Fully-connected network with hand-written backpropagation and Adam.
//!
//! Predicts the joint displacement between two image states from their
//! concatenated keypoint vectors. Inputs are standardized with statistics
//! stored alongside the weights.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Widths from input to output, e.g. `[4N, 64, 64, M]`.
    pub layer_sizes: Vec<usize>,
    /// Hidden-layer nonlinearity; the output layer is linear.
    pub activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    /// `[4N, 64, 64, M]` with tanh hidden units.
    pub fn displacement(keypoints: usize, joints: usize, seed: u64) -> Self {
        Self {
            layer_sizes: vec![4 * keypoints, 64, 64, joints],
            activation: Activation::Tanh,
            seed,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty layer sizes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Layer<T> {
    /// `out × in`, row-major.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

/// Per-dimension affine input normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    /// Population statistics; zero-variance dimensions get unit scale.
    pub fn fit(inputs: &[&[T]]) -> Self {
        let width = inputs.first().map_or(0, |x| x.len());
        let n = T::from_count(inputs.len().max(1));
        let mut mean = vec![T::zero(); width];
        for x in inputs {
            for (m, &v) in mean.iter_mut().zip(x.iter()) {
                *m = *m + v;
            }
        }
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![T::zero(); width];
        for x in inputs {
            for ((s, &v), &m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                *s = *s + (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > T::lit(1e-12) {
                    sd
                } else {
                    T::one()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply_into(&self, x: &[T], out: &mut [T]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.mean[i]) / self.std[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct Mlp<T> {
    pub spec: MlpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<Standardizer<T>>,
    pub layers: Vec<Layer<T>>,
}

/// Gradients mirroring [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
    pub loss: T,
}

/// Reusable activation buffers for one forward/backward pass.
struct Scratch<T> {
    acts: Vec<Vec<T>>,
    deltas: Vec<Vec<T>>,
}

impl<T: Real> Scratch<T> {
    fn new(spec: &MlpSpec) -> Self {
        Self {
            acts: spec.layer_sizes.iter().map(|&w| vec![T::zero(); w]).collect(),
            deltas: spec.layer_sizes.iter().map(|&w| vec![T::zero(); w]).collect(),
        }
    }
}

impl<T: Real> Mlp<T> {
    /// Glorot-uniform weights and zero biases drawn from the spec's seed.
    pub fn new(spec: MlpSpec) -> Result<Self> {
        if spec.layer_sizes.len() < 2 || spec.layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(
                "an MLP needs at least two non-empty layers".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| T::lit(rng.gen_range(-limit..limit)))
                    .collect();
                Layer {
                    weights: Matrix {
                        rows: fan_out,
                        cols: fan_in,
                        data,
                    },
                    bias: vec![T::zero(); fan_out],
                }
            })
            .collect();
        Ok(Self {
            spec,
            standardization: None,
            layers,
        })
    }

    pub fn zeroed(spec: MlpSpec) -> Result<Self> {
        let mut net = Self::new(spec)?;
        for l in &mut net.layers {
            l.weights.data.iter_mut().for_each(|w| *w = T::zero());
        }
        Ok(net)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data.len() + l.bias.len())
            .sum()
    }

    fn check_width(&self, x: &[T]) -> Result<()> {
        if x.len() != self.spec.input_width() {
            return Err(Error::Arity {
                expected: self.spec.input_width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn forward_into(&self, x: &[T], s: &mut Scratch<T>) {
        match &self.standardization {
            Some(st) => st.apply_into(x, &mut s.acts[0]),
            None => s.acts[0].copy_from_slice(x),
        }
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (head, tail) = s.acts.split_at_mut(li + 1);
            let input = &head[li];
            let out = &mut tail[0];
            let w = &layer.weights;
            for (j, o) in out.iter_mut().enumerate() {
                let row = &w.data[j * w.cols..(j + 1) * w.cols];
                let mut z = layer.bias[j];
                for (&wij, &xi) in row.iter().zip(input.iter()) {
                    z = z + wij * xi;
                }
                *o = if li == last {
                    z
                } else {
                    self.spec.activation.apply(z)
                };
            }
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_width(x)?;
        let mut s = Scratch::new(&self.spec);
        self.forward_into(x, &mut s);
        Ok(s.acts.last().expect("output layer").clone())
    }

    /// Forward pass over many inputs, each checked for width.
    pub fn forward_many(&self, xs: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        let mut s = Scratch::new(&self.spec);
        xs.iter()
            .map(|x| {
                self.check_width(x)?;
                self.forward_into(x, &mut s);
                Ok(s.acts.last().expect("output layer").clone())
            })
            .collect()
    }

    fn zero_gradients(&self) -> Vec<Layer<T>> {
        self.layers
            .iter()
            .map(|l| Layer {
                weights: Matrix::zeros(l.weights.rows, l.weights.cols),
                bias: vec![T::zero(); l.bias.len()],
            })
            .collect()
    }

    /// Accumulates `d(squared error)/dθ` for one sample; returns its squared error sum.
    fn accumulate(&self, x: &[T], y: &[T], s: &mut Scratch<T>, grads: &mut [Layer<T>]) -> T {
        self.forward_into(x, s);
        let last = self.layers.len();
        let mut sq = T::zero();
        {
            let out = &s.acts[last];
            let d = &mut s.deltas[last];
            for k in 0..out.len() {
                let r = out[k] - y[k];
                sq = sq + r * r;
                d[k] = r + r;
            }
        }
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let g = &mut grads[li];
            let (dh, dt) = s.deltas.split_at_mut(li + 1);
            let delta = &dt[0];
            let input = &s.acts[li];
            let cols = layer.weights.cols;
            for (j, &dj) in delta.iter().enumerate() {
                g.bias[j] = g.bias[j] + dj;
                let grow = &mut g.weights.data[j * cols..(j + 1) * cols];
                for (gw, &xi) in grow.iter_mut().zip(input.iter()) {
                    *gw = *gw + dj * xi;
                }
            }
            if li > 0 {
                let prev = &mut dh[li];
                prev.iter_mut().for_each(|p| *p = T::zero());
                for (j, &dj) in delta.iter().enumerate() {
                    let row = &layer.weights.data[j * cols..(j + 1) * cols];
                    for (p, &w) in prev.iter_mut().zip(row.iter()) {
                        *p = *p + dj * w;
                    }
                }
                for (p, &a) in prev.iter_mut().zip(input.iter()) {
                    *p = *p * self.spec.activation.derivative_from_output(a);
                }
            }
        }
        sq
    }

    /// Mean-squared-error loss and its gradient over `batch` of `(input, target)`.
    pub fn backward(&self, batch: &[(Vec<T>, Vec<T>)]) -> Result<Gradients<T>> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut s = Scratch::new(&self.spec);
        let mut grads = self.zero_gradients();
        let mut total = T::zero();
        for (x, y) in batch {
            self.check_width(x)?;
            if y.len() != self.spec.output_width() {
                return Err(Error::Arity {
                    expected: self.spec.output_width(),
                    got: y.len(),
                });
            }
            total = total + self.accumulate(x, y, &mut s, &mut grads);
        }
        let scale = T::one() / T::from_count(batch.len() * self.spec.output_width());
        for g in &mut grads {
            g.weights.data.iter_mut().for_each(|w| *w = *w * scale);
            g.bias.iter_mut().for_each(|b| *b = *b * scale);
        }
        Ok(Gradients {
            layers: grads,
            loss: total * scale,
        })
    }

    /// Mean squared error over a dataset.
    pub fn mse(&self, data: &[(Vec<T>, Vec<T>)]) -> Result<T> {
        let preds = self.forward_many(&data.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>())?;
        let mut sum = T::zero();
        for (p, (_, y)) in preds.iter().zip(data) {
            for (a, b) in p.iter().zip(y) {
                sum = sum + (*a - *b) * (*a - *b);
            }
        }
        Ok(sum / T::from_count(data.len().max(1) * self.spec.output_width()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrainConfig<T> {
    pub learning_rate: T,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl<T: Real> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            learning_rate: T::lit(0.005),
            batch_size: 32,
            epochs: 400,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            seed: 0,
        }
    }
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= T::zero()
            && self.batch_size > 0
            && self.beta1 >= T::zero()
            && self.beta1 < T::one()
            && self.beta2 >= T::zero()
            && self.beta2 < T::one()
            && self.epsilon > T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("invalid training hyperparameters".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct TrainReport<T> {
    pub initial_loss: T,
    /// Mean minibatch loss of each epoch.
    pub loss_history: Vec<T>,
    pub final_loss: T,
}

struct Adam<T> {
    m: Vec<Layer<T>>,
    v: Vec<Layer<T>>,
    t: i32,
}

impl<T: Real> Adam<T> {
    fn step(&mut self, net: &mut Mlp<T>, g: &[Layer<T>], cfg: &TrainConfig<T>) {
        self.t += 1;
        let bc1 = T::one() - cfg.beta1.powi(self.t);
        let bc2 = T::one() - cfg.beta2.powi(self.t);
        let upd = |p: &mut T, m: &mut T, v: &mut T, g: T| {
            *m = cfg.beta1 * *m + (T::one() - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (T::one() - cfg.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p = *p - cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        };
        for (((layer, ml), vl), gl) in net.layers.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(g) {
            for i in 0..layer.weights.data.len() {
                upd(
                    &mut layer.weights.data[i],
                    &mut ml.weights.data[i],
                    &mut vl.weights.data[i],
                    gl.weights.data[i],
                );
            }
            for i in 0..layer.bias.len() {
                upd(&mut layer.bias[i], &mut ml.bias[i], &mut vl.bias[i], gl.bias[i]);
            }
        }
    }
}

/// Minibatch Adam on mean squared error. Fits the input standardization from
/// `data` first when the network has none.
pub fn train<T: Real>(
    net: &mut Mlp<T>,
    data: &[(Vec<T>, Vec<T>)],
    cfg: &TrainConfig<T>,
) -> Result<TrainReport<T>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    if net.standardization.is_none() {
        let inputs: Vec<&[T]> = data.iter().map(|(x, _)| x.as_slice()).collect();
        net.standardization = Some(Standardizer::fit(&inputs));
    }
    let initial_loss = net.mse(data)?;
    let mut adam = Adam {
        m: net.zero_gradients(),
        v: net.zero_gradients(),
        t: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut scratch = Scratch::new(&net.spec);
    let mut grads = net.zero_gradients();
    let mut loss_history = Vec::with_capacity(cfg.epochs);
    let width = T::from_count(net.spec.output_width());
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = T::zero();
        for chunk in order.chunks(cfg.batch_size) {
            for g in &mut grads {
                g.weights.data.iter_mut().for_each(|w| *w = T::zero());
                g.bias.iter_mut().for_each(|b| *b = T::zero());
            }
            let mut sq = T::zero();
            for &i in chunk {
                let (x, y) = &data[i];
                sq = sq + net.accumulate(x, y, &mut scratch, &mut grads);
            }
            let scale = T::one() / (T::from_count(chunk.len()) * width);
            for g in &mut grads {
                g.weights.data.iter_mut().for_each(|w| *w = *w * scale);
                g.bias.iter_mut().for_each(|b| *b = *b * scale);
            }
            epoch_sum = epoch_sum + sq;
            adam.step(net, &grads, cfg);
        }
        let epoch_loss = epoch_sum / (T::from_count(data.len()) * width);
        if !epoch_loss.is_finite() || !net.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        loss_history.push(epoch_loss);
    }
    let final_loss = net.mse(data)?;
    Ok(TrainReport {
        initial_loss,
        loss_history,
        final_loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real", deserialize = "T: Real"))]
pub struct EvalReport<T> {
    pub rmse: T,
    pub mae: T,
    /// Mean of the defined per-output R² values; `None` when every target is constant.
    pub r2: Option<T>,
    pub r2_per_output: Vec<Option<T>>,
}

pub fn evaluate<T: Real>(net: &Mlp<T>, data: &[(Vec<T>, Vec<T>)]) -> Result<EvalReport<T>> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("no evaluation pairs".into()));
    }
    let preds = net.forward_many(&data.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>())?;
    let targets: Vec<&[T]> = data.iter().map(|(_, y)| y.as_slice()).collect();
    Ok(regression_report(&preds, &targets))
}

/// RMSE, MAE and per-output R² of predictions against targets.
pub fn regression_report<T: Real>(preds: &[Vec<T>], targets: &[&[T]]) -> EvalReport<T> {
    let outputs = targets.first().map_or(0, |t| t.len());
    let n = T::from_count(targets.len());
    let mut sq = T::zero();
    let mut abs = T::zero();
    let mut mean = vec![T::zero(); outputs];
    for (p, y) in preds.iter().zip(targets) {
        for k in 0..outputs {
            let r = p[k] - y[k];
            sq = sq + r * r;
            abs = abs + r.abs();
            mean[k] = mean[k] + y[k];
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / n);
    let mut ss_res = vec![T::zero(); outputs];
    let mut ss_tot = vec![T::zero(); outputs];
    for (p, y) in preds.iter().zip(targets) {
        for k in 0..outputs {
            ss_res[k] = ss_res[k] + (p[k] - y[k]) * (p[k] - y[k]);
            ss_tot[k] = ss_tot[k] + (y[k] - mean[k]) * (y[k] - mean[k]);
        }
    }
    let r2_per_output: Vec<Option<T>> = ss_res
        .iter()
        .zip(&ss_tot)
        .map(|(&r, &t)| (t > T::zero()).then(|| T::one() - r / t))
        .collect();
    let defined: Vec<T> = r2_per_output.iter().flatten().copied().collect();
    let r2 = (!defined.is_empty())
        .then(|| defined.iter().copied().sum::<T>() / T::from_count(defined.len()));
    let count = n * T::from_count(outputs.max(1));
    EvalReport {
        rmse: (sq / count).sqrt(),
        mae: abs / count,
        r2,
        r2_per_output,
    }
}
