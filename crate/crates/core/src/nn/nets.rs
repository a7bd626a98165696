//! The three trainable architectures: recurrent two-input net, feedforward
//! net and logistic regression. All read the same row layout, the `M` deltas
//! followed by the seven engineered features, and emit one logit per row.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, Lstm, Mlp};
use super::ops::{bce_with_logit, sigmoid_scalar};
use super::params::ParamStore;
use crate::featurizer::ENGINEERED_FEATURES;

/// A borrowed minibatch: row-major inputs and 0/1 labels.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: &'a [f64], labels: &'a [f64], cols: usize) -> Self {
        assert_eq!(
            inputs.len(),
            labels.len() * cols,
            "batch inputs and labels disagree"
        );
        Batch {
            inputs,
            labels,
            rows: labels.len(),
            cols,
        }
    }
}

/// Forward pass, loss and exact gradient of a fixed architecture.
pub trait Network {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn input_width(&self) -> usize;

    fn logits(&self, inputs: &[f64], rows: usize) -> Vec<f64>;

    /// Mean BCE over the batch plus any penalty, and its gradient.
    fn loss_and_grad(&self, batch: &Batch<'_>) -> (f64, ParamStore);

    /// Regularisation term added to the mean BCE.
    fn penalty(&self) -> f64 {
        0.0
    }

    /// On/off state of every ReLU unit for the batch.
    fn activation_pattern(&self, _inputs: &[f64], _rows: usize) -> Vec<bool> {
        Vec::new()
    }

    fn loss(&self, batch: &Batch<'_>) -> f64 {
        let z = self.logits(batch.inputs, batch.rows);
        mean_bce(&z, batch.labels) + self.penalty()
    }

    fn predict(&self, inputs: &[f64], rows: usize) -> Vec<f64> {
        self.logits(inputs, rows)
            .into_iter()
            .map(sigmoid_scalar)
            .collect()
    }
}

fn mean_bce(logits: &[f64], labels: &[f64]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_with_logit(z, y))
        .sum::<f64>()
        / logits.len() as f64
}

/// dL/dz of the mean BCE.
fn logit_grad(logits: &[f64], labels: &[f64]) -> Vec<f64> {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| (sigmoid_scalar(z) - y) / n)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnnNet {
    pub mlp: Mlp,
    pub params: ParamStore,
}

impl DnnNet {
    pub fn new<R: Rng + ?Sized>(inputs: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut params = ParamStore::new();
        let mlp = Mlp::register(&mut params, "dnn", inputs, hidden, rng);
        DnnNet { mlp, params }
    }
}

impl Network for DnnNet {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn input_width(&self) -> usize {
        self.mlp.input_width()
    }

    fn logits(&self, inputs: &[f64], rows: usize) -> Vec<f64> {
        self.mlp.forward(&self.params, inputs, rows).logits
    }

    fn loss_and_grad(&self, batch: &Batch<'_>) -> (f64, ParamStore) {
        let cache = self.mlp.forward(&self.params, batch.inputs, batch.rows);
        let loss = mean_bce(&cache.logits, batch.labels);
        let dz = logit_grad(&cache.logits, batch.labels);
        let mut grads = self.params.zeros_like();
        self.mlp
            .backward(&self.params, &cache, &dz, batch.rows, &mut grads, false);
        (loss, grads)
    }

    fn activation_pattern(&self, inputs: &[f64], rows: usize) -> Vec<bool> {
        let cache = self.mlp.forward(&self.params, inputs, rows);
        self.mlp.activation_pattern(&cache)
    }
}

/// Affine model with an L2 penalty `0.5 * lambda * |w|^2` on the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticNet {
    pub linear: Dense,
    pub l2_lambda: f64,
    pub params: ParamStore,
}

impl LogisticNet {
    /// Starts from all-zero parameters.
    pub fn new(inputs: usize, l2_lambda: f64) -> Self {
        let mut params = ParamStore::new();
        let linear = Dense {
            weight: params.push("lr.weight", vec![1, inputs], vec![0.0; inputs]),
            bias: params.push("lr.bias", vec![1], vec![0.0]),
            inputs,
            outputs: 1,
        };
        LogisticNet {
            linear,
            l2_lambda,
            params,
        }
    }

    pub fn weights(&self) -> &[f64] {
        self.params.values(self.linear.weight)
    }

    pub fn intercept(&self) -> f64 {
        self.params.values(self.linear.bias)[0]
    }
}

impl Network for LogisticNet {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn input_width(&self) -> usize {
        self.linear.inputs
    }

    fn logits(&self, inputs: &[f64], rows: usize) -> Vec<f64> {
        self.linear.forward(&self.params, inputs, rows)
    }

    fn penalty(&self) -> f64 {
        0.5 * self.l2_lambda * self.weights().iter().map(|w| w * w).sum::<f64>()
    }

    fn loss_and_grad(&self, batch: &Batch<'_>) -> (f64, ParamStore) {
        let z = self.logits(batch.inputs, batch.rows);
        let loss = mean_bce(&z, batch.labels) + self.penalty();
        let dz = logit_grad(&z, batch.labels);
        let mut grads = self.params.zeros_like();
        self.linear.backward(
            &self.params,
            batch.inputs,
            &dz,
            batch.rows,
            &mut grads,
            false,
        );
        let w = self.params.values(self.linear.weight);
        grads
            .values_mut(self.linear.weight)
            .iter_mut()
            .zip(w)
            .for_each(|(g, w)| *g += self.l2_lambda * w);
        (loss, grads)
    }
}

/// Two-input recurrent net: the delta window runs through an LSTM (one
/// scalar per step, oldest first), the engineered features through a ReLU
/// dense layer; the two outputs are concatenated and fed to a ReLU head
/// ending in a single logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub window: usize,
    pub lstm: Lstm,
    pub features: Dense,
    pub head: Mlp,
    pub params: ParamStore,
}

struct LstmNetCache {
    steps: Vec<Vec<f64>>,
    lstm: super::layers::LstmCache,
    feat_in: Vec<f64>,
    feat_out: Vec<f64>,
    head: super::layers::MlpCache,
}

impl LstmNet {
    pub fn new<R: Rng + ?Sized>(
        window: usize,
        lstm_hidden: usize,
        feature_dense: usize,
        head: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut params = ParamStore::new();
        let lstm = Lstm::register(&mut params, "lstm", 1, lstm_hidden, rng);
        let features = Dense::register(
            &mut params,
            "features",
            ENGINEERED_FEATURES,
            feature_dense,
            rng,
        );
        let head = Mlp::register(&mut params, "head", lstm_hidden + feature_dense, head, rng);
        LstmNet {
            window,
            lstm,
            features,
            head,
            params,
        }
    }

    fn cols(&self) -> usize {
        self.window + ENGINEERED_FEATURES
    }

    fn forward(&self, inputs: &[f64], rows: usize) -> LstmNetCache {
        let cols = self.cols();
        let steps: Vec<Vec<f64>> = (0..self.window)
            .map(|t| inputs.chunks_exact(cols).map(|r| r[t]).collect())
            .collect();
        let lstm = self.lstm.forward(&self.params, &steps, rows);

        let feat_in: Vec<f64> = inputs
            .chunks_exact(cols)
            .flat_map(|r| r[self.window..].iter().copied())
            .collect();
        let mut feat_out = self.features.forward(&self.params, &feat_in, rows);
        feat_out.iter_mut().for_each(|x| *x = x.max(0.0));

        let (hl, fw) = (self.lstm.hidden, self.features.outputs);
        let mut joined = Vec::with_capacity(rows * (hl + fw));
        for (h, f) in lstm
            .last_hidden()
            .chunks_exact(hl)
            .zip(feat_out.chunks_exact(fw))
        {
            joined.extend_from_slice(h);
            joined.extend_from_slice(f);
        }
        let head = self.head.forward(&self.params, &joined, rows);
        LstmNetCache {
            steps,
            lstm,
            feat_in,
            feat_out,
            head,
        }
    }
}

impl Network for LstmNet {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn input_width(&self) -> usize {
        self.cols()
    }

    fn logits(&self, inputs: &[f64], rows: usize) -> Vec<f64> {
        self.forward(inputs, rows).head.logits
    }

    fn loss_and_grad(&self, batch: &Batch<'_>) -> (f64, ParamStore) {
        let cache = self.forward(batch.inputs, batch.rows);
        let loss = mean_bce(&cache.head.logits, batch.labels);
        let dz = logit_grad(&cache.head.logits, batch.labels);
        let mut grads = self.params.zeros_like();
        let djoined = self
            .head
            .backward(&self.params, &cache.head, &dz, batch.rows, &mut grads, true)
            .expect("head returns its input gradient");

        let (hl, fw) = (self.lstm.hidden, self.features.outputs);
        let mut dh = Vec::with_capacity(batch.rows * hl);
        let mut dfeat = Vec::with_capacity(batch.rows * fw);
        for row in djoined.chunks_exact(hl + fw) {
            dh.extend_from_slice(&row[..hl]);
            dfeat.extend_from_slice(&row[hl..]);
        }
        dfeat.iter_mut().zip(&cache.feat_out).for_each(|(g, &a)| {
            if a <= 0.0 {
                *g = 0.0
            }
        });
        self.features.backward(
            &self.params,
            &cache.feat_in,
            &dfeat,
            batch.rows,
            &mut grads,
            false,
        );
        self.lstm
            .backward(&self.params, &cache.steps, &cache.lstm, &dh, &mut grads);
        (loss, grads)
    }

    fn activation_pattern(&self, inputs: &[f64], rows: usize) -> Vec<bool> {
        let cache = self.forward(inputs, rows);
        let mut pattern: Vec<bool> = cache.feat_out.iter().map(|&v| v > 0.0).collect();
        pattern.extend(self.head.activation_pattern(&cache.head));
        pattern
    }
}
