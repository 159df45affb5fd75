//! Multilayer-perceptron classifier with hand-rolled forward/backward
//! passes and mini-batch SGD.
//!
//! Everything here is a pure function of its inputs and a seed: training
//! shuffles come from a ChaCha stream seeded with `cfg.seed ^ epoch`, and
//! there is no global RNG state anywhere. Losses are mean softmax
//! cross-entropy with the log-sum-exp stabilization.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::learner::params::{Layer, Layout, ParamVector};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture of the classifier: input width, hidden widths, class count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument("hidden dims must be positive".into()));
        }
        if self.output_dim < 2 {
            return Err(Error::InvalidArgument("output_dim must be at least 2".into()));
        }
        Ok(())
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims
    }

    pub fn layout(&self) -> Layout {
        let dims = self.dims();
        Layout::new(
            dims.windows(2)
                .map(|w| LayerShape {
                    fan_in: w[0],
                    fan_out: w[1],
                })
                .collect(),
        )
    }

    pub fn param_count(&self) -> usize {
        self.layout().param_count()
    }
}

/// Local SGD settings. `seed` drives the per-epoch shuffles; the round
/// engine derives it per client and round.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "learning_rate must be positive and finite".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::InvalidArgument("local_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

use crate::learner::params::LayerShape;

/// A validated MLP: the spec plus precomputed parameter offsets.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: MlpSpec,
    layout: Layout,
    /// (weight offset, bias offset) per layer into the flat vector.
    offsets: Vec<(usize, usize)>,
}

impl Mlp {
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.layout();
        let mut offsets = Vec::with_capacity(layout.layers().len());
        let mut off = 0;
        for shape in layout.layers() {
            offsets.push((off, off + shape.weight_count()));
            off += shape.param_count();
        }
        Ok(Mlp {
            spec,
            layout,
            offsets,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    fn layer_count(&self) -> usize {
        self.layout.layers().len()
    }

    fn layer<'a>(&self, params: &'a ParamVector, li: usize) -> Layer<'a> {
        let shape = self.layout.layers()[li];
        let (w_off, b_off) = self.offsets[li];
        Layer {
            weights: &params.values()[w_off..b_off],
            biases: &params.values()[b_off..b_off + shape.fan_out],
            shape,
        }
    }

    /// Fresh parameters: weights uniform in ±1/√fan_in, biases zero.
    /// Bitwise identical for identical seeds.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = seeded_rng(seed);
        let mut params = ParamVector::zeros(self.layout.clone());
        let offsets = self.offsets.clone();
        let values = params.values_mut();
        for (li, shape) in self.layout.layers().iter().enumerate() {
            let bound = 1.0 / (shape.fan_in as f64).sqrt();
            let (w_off, b_off) = offsets[li];
            for v in &mut values[w_off..b_off] {
                *v = rng.random_range(-bound..bound);
            }
            // biases stay zero
        }
        params
    }

    fn check_batch(&self, params: &ParamVector, features: &[f64], labels: &[usize]) -> Result<()> {
        if params.layout() != &self.layout {
            return Err(Error::LayoutMismatch(
                "parameters do not match this architecture".into(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if features.len() != labels.len() * self.spec.input_dim {
            return Err(Error::InvalidArgument(format!(
                "{} feature values for {} samples of dim {}",
                features.len(),
                labels.len(),
                self.spec.input_dim
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.spec.output_dim) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{}",
                self.spec.output_dim
            )));
        }
        Ok(())
    }

    fn apply_activation(&self, z: &mut [f64]) {
        match self.spec.activation {
            Activation::Relu => {
                for v in z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for v in z {
                    *v = v.tanh();
                }
            }
        }
    }

    /// Forward pass keeping each layer's post-activation output; the last
    /// entry holds raw logits.
    fn forward_acts(&self, params: &ParamVector, features: &[f64], batch: usize) -> Vec<Vec<f64>> {
        let layer_count = self.layer_count();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layer_count);
        for li in 0..layer_count {
            let layer = self.layer(params, li);
            let x: &[f64] = if li == 0 { features } else { &acts[li - 1] };
            let mut out = affine_forward(x, batch, &layer);
            if li + 1 < layer_count {
                self.apply_activation(&mut out);
            }
            acts.push(out);
        }
        acts
    }

    /// Mean cross-entropy of the batch and the raw logits (batch × classes).
    pub fn forward_loss(
        &self,
        params: &ParamVector,
        features: &[f64],
        labels: &[usize],
    ) -> Result<(f64, Vec<f64>)> {
        self.check_batch(params, features, labels)?;
        let batch = labels.len();
        let mut acts = self.forward_acts(params, features, batch);
        let logits = acts.pop().expect("at least one layer");
        let loss = mean_cross_entropy(&logits, labels, self.spec.output_dim);
        Ok((loss, logits))
    }

    /// Gradient of the mean batch loss with respect to every parameter.
    pub fn backward(
        &self,
        params: &ParamVector,
        features: &[f64],
        labels: &[usize],
    ) -> Result<ParamVector> {
        self.check_batch(params, features, labels)?;
        let batch = labels.len();
        let classes = self.spec.output_dim;
        let acts = self.forward_acts(params, features, batch);
        let logits = acts.last().expect("at least one layer");

        // dL/dlogits = (softmax - onehot) / batch
        let mut delta = vec![0.0; batch * classes];
        for i in 0..batch {
            let row = &logits[i * classes..(i + 1) * classes];
            let out = &mut delta[i * classes..(i + 1) * classes];
            softmax_into(row, out);
            out[labels[i]] -= 1.0;
            for v in out.iter_mut() {
                *v /= batch as f64;
            }
        }

        let mut grad = ParamVector::zeros(self.layout.clone());
        for li in (0..self.layer_count()).rev() {
            let shape = self.layout.layers()[li];
            let (w_off, b_off) = self.offsets[li];
            let a_prev: &[f64] = if li == 0 { features } else { &acts[li - 1] };

            {
                let gvals = grad.values_mut();
                let (dw, db) = gvals[w_off..b_off + shape.fan_out].split_at_mut(shape.weight_count());
                accumulate_layer_grad(a_prev, &delta, batch, shape, dw, db);
            }

            if li > 0 {
                let layer = self.layer(params, li);
                let mut dx = backprop_input(&delta, batch, &layer);
                // chain through the previous layer's activation
                match self.spec.activation {
                    Activation::Relu => {
                        for (d, &a) in dx.iter_mut().zip(a_prev) {
                            if a <= 0.0 {
                                *d = 0.0;
                            }
                        }
                    }
                    Activation::Tanh => {
                        for (d, &a) in dx.iter_mut().zip(a_prev) {
                            *d *= 1.0 - a * a;
                        }
                    }
                }
                delta = dx;
            }
        }
        Ok(grad)
    }

    /// Runs `local_epochs` epochs of mini-batch SGD over the given shard
    /// and returns the updated parameters; the input is untouched.
    /// A zero learning rate is tolerated and returns the input unchanged.
    pub fn local_train(
        &self,
        params: &ParamVector,
        data: &Dataset,
        shard: &[usize],
        cfg: &TrainConfig,
    ) -> Result<ParamVector> {
        if shard.is_empty() {
            return Err(Error::EmptyShard(usize::MAX));
        }
        if cfg.batch_size == 0 || cfg.local_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch_size and local_epochs must be at least 1".into(),
            ));
        }
        if !(cfg.learning_rate >= 0.0) || !cfg.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(
                "learning_rate must be non-negative and finite".into(),
            ));
        }
        if data.feature_dim() != self.spec.input_dim {
            return Err(Error::InvalidArgument(format!(
                "dataset feature dim {} does not match input dim {}",
                data.feature_dim(),
                self.spec.input_dim
            )));
        }
        let mut params = params.clone();
        let mut order = shard.to_vec();
        let mut feat = Vec::new();
        let mut lab = Vec::new();
        for epoch in 0..cfg.local_epochs {
            let mut rng = seeded_rng(cfg.seed ^ epoch as u64);
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                data.gather(chunk, &mut feat, &mut lab)?;
                let grad = self.backward(&params, &feat, &lab)?;
                params.axpy(-cfg.learning_rate, &grad)?;
            }
        }
        if !params.all_finite() {
            return Err(Error::NonFinite(
                "parameters diverged during local training".into(),
            ));
        }
        Ok(params)
    }

    /// Mean cross-entropy and argmax accuracy over the whole set.
    /// Argmax ties break toward the lowest class index.
    pub fn evaluate(&self, params: &ParamVector, data: &Dataset) -> Result<(f64, f64)> {
        if data.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        if data.feature_dim() != self.spec.input_dim {
            return Err(Error::InvalidArgument(format!(
                "dataset feature dim {} does not match input dim {}",
                data.feature_dim(),
                self.spec.input_dim
            )));
        }
        let classes = self.spec.output_dim;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut feat = Vec::new();
        let mut lab = Vec::new();
        let chunk_rows = 512;
        let all: Vec<usize> = (0..data.len()).collect();
        for chunk in all.chunks(chunk_rows) {
            data.gather(chunk, &mut feat, &mut lab)?;
            let (_, logits) = {
                // forward only; reuse forward_loss minus the mean
                self.check_batch(params, &feat, &lab)?;
                let mut acts = self.forward_acts(params, &feat, lab.len());
                let logits = acts.pop().expect("at least one layer");
                ((), logits)
            };
            for (i, &y) in lab.iter().enumerate() {
                let row = &logits[i * classes..(i + 1) * classes];
                loss_sum += cross_entropy_one(row, y);
                if argmax_lowest(row) == y {
                    correct += 1;
                }
            }
        }
        let n = data.len() as f64;
        Ok((loss_sum / n, correct as f64 / n))
    }
}

/// `out = x · W + b` for a batch of rows. Zero inputs are skipped, which
/// matters for sparse pixel data.
fn affine_forward(x: &[f64], batch: usize, layer: &Layer) -> Vec<f64> {
    let n_in = layer.shape.fan_in;
    let n_out = layer.shape.fan_out;
    let mut out = Vec::with_capacity(batch * n_out);
    for i in 0..batch {
        let row = &x[i * n_in..(i + 1) * n_in];
        let start = out.len();
        out.extend_from_slice(layer.biases);
        let orow = &mut out[start..];
        for (k, &xv) in row.iter().enumerate() {
            if xv != 0.0 {
                let wrow = &layer.weights[k * n_out..(k + 1) * n_out];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    out
}

/// `dW += aᵀ · δ`, `db += Σᵢ δᵢ`
fn accumulate_layer_grad(
    a_prev: &[f64],
    delta: &[f64],
    batch: usize,
    shape: LayerShape,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let n_in = shape.fan_in;
    let n_out = shape.fan_out;
    for i in 0..batch {
        let arow = &a_prev[i * n_in..(i + 1) * n_in];
        let drow = &delta[i * n_out..(i + 1) * n_out];
        for (d, &dv) in db.iter_mut().zip(drow) {
            *d += dv;
        }
        for (k, &av) in arow.iter().enumerate() {
            if av != 0.0 {
                let dwrow = &mut dw[k * n_out..(k + 1) * n_out];
                for (g, &dv) in dwrow.iter_mut().zip(drow) {
                    *g += av * dv;
                }
            }
        }
    }
}

/// `dx = δ · Wᵀ`
fn backprop_input(delta: &[f64], batch: usize, layer: &Layer) -> Vec<f64> {
    let n_in = layer.shape.fan_in;
    let n_out = layer.shape.fan_out;
    let mut dx = vec![0.0; batch * n_in];
    for i in 0..batch {
        let drow = &delta[i * n_out..(i + 1) * n_out];
        let xrow = &mut dx[i * n_in..(i + 1) * n_in];
        for (k, xv) in xrow.iter_mut().enumerate() {
            let wrow = &layer.weights[k * n_out..(k + 1) * n_out];
            let mut acc = 0.0;
            for (&wv, &dv) in wrow.iter().zip(drow) {
                acc += wv * dv;
            }
            *xv = acc;
        }
    }
    dx
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        let e = (l - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// log-sum-exp based cross-entropy of one sample.
fn cross_entropy_one(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&l| (l - max).exp()).sum();
    max + sum.ln() - logits[label]
}

fn mean_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> f64 {
    let mut sum = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        sum += cross_entropy_one(&logits[i * classes..(i + 1) * classes], y);
    }
    sum / labels.len() as f64
}

/// First index of the maximum, so ties go to the lowest class.
fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best = j;
            best_v = v;
        }
    }
    best
}
