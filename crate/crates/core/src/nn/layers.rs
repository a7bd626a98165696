//! Batched layers with hand-written backward passes.
//!
//! Activations are row-major `rows x width` matrices. Every backward pass
//! accumulates into a gradient store laid out like the parameter store.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{gemm, sigmoid_scalar};
use super::params::ParamStore;
use crate::error::{Error, Result};

/// Glorot/Xavier uniform initialisation.
pub fn glorot_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
    len: usize,
) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// Fully connected layer, weight shape `[outputs, inputs]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let w = glorot_uniform(rng, inputs, outputs, inputs * outputs);
        let weight = store.push(format!("{name}.weight"), vec![outputs, inputs], w);
        let bias = store.push(format!("{name}.bias"), vec![outputs], vec![0.0; outputs]);
        Dense {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows * self.outputs];
        gemm(
            rows,
            self.inputs,
            self.outputs,
            x,
            false,
            store.values(self.weight),
            true,
            0.0,
            &mut y,
        );
        let b = store.values(self.bias);
        for row in y.chunks_exact_mut(self.outputs) {
            row.iter_mut().zip(b).for_each(|(v, b)| *v += b);
        }
        y
    }

    /// Accumulates weight and bias gradients; returns the input gradient when asked.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &[f64],
        dy: &[f64],
        rows: usize,
        grads: &mut ParamStore,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        gemm(
            self.outputs,
            rows,
            self.inputs,
            dy,
            true,
            x,
            false,
            1.0,
            grads.values_mut(self.weight),
        );
        let db = grads.values_mut(self.bias);
        for row in dy.chunks_exact(self.outputs) {
            db.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
        want_dx.then(|| {
            let mut dx = vec![0.0; rows * self.inputs];
            gemm(
                rows,
                self.outputs,
                self.inputs,
                dy,
                false,
                store.values(self.weight),
                false,
                0.0,
                &mut dx,
            );
            dx
        })
    }
}

fn relu_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes gradient entries whose ReLU output was not positive.
fn relu_backward(activated: &[f64], grad: &mut [f64]) {
    grad.iter_mut().zip(activated).for_each(|(g, &a)| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
}

/// Stack of ReLU dense layers ending in a single linear logit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Vec<Dense>,
    pub output: Dense,
}

pub struct MlpCache {
    /// Input of each layer; `inputs[0]` is the network input.
    inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

impl Mlp {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = inputs;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Dense::register(
                store,
                &format!("{name}.dense{i}"),
                width,
                h,
                rng,
            ));
            width = h;
        }
        let output = Dense::register(store, &format!("{name}.out"), width, 1, rng);
        Mlp {
            hidden: layers,
            output,
        }
    }

    pub fn input_width(&self) -> usize {
        self.hidden.first().unwrap_or(&self.output).inputs
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64], rows: usize) -> MlpCache {
        let mut inputs = Vec::with_capacity(self.hidden.len() + 1);
        let mut current = x.to_vec();
        for layer in &self.hidden {
            let mut next = layer.forward(store, &current, rows);
            relu_in_place(&mut next);
            inputs.push(std::mem::replace(&mut current, next));
        }
        let logits = self.output.forward(store, &current, rows);
        inputs.push(current);
        MlpCache { inputs, logits }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &MlpCache,
        dlogits: &[f64],
        rows: usize,
        grads: &mut ParamStore,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let last = cache.inputs.len() - 1;
        let need = want_dx || !self.hidden.is_empty();
        let mut grad = self
            .output
            .backward(store, &cache.inputs[last], dlogits, rows, grads, need);
        for (i, layer) in self.hidden.iter().enumerate().rev() {
            let mut g = grad.expect("hidden layers need their output gradient");
            relu_backward(&cache.inputs[i + 1], &mut g);
            grad = layer.backward(store, &cache.inputs[i], &g, rows, grads, want_dx || i > 0);
        }
        grad
    }

    /// ReLU on/off pattern of every hidden unit; used to detect finite
    /// differences that straddle a kink.
    pub fn activation_pattern(&self, cache: &MlpCache) -> Vec<bool> {
        cache.inputs[1..]
            .iter()
            .flat_map(|a| a.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// LSTM layer with gate order (input, forget, candidate, output).
///
/// `w_input` is `[4H, I]`, `w_recurrent` is `[4H, H]`, `bias` is `[4H]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lstm {
    pub w_input: usize,
    pub w_recurrent: usize,
    pub bias: usize,
    pub inputs: usize,
    pub hidden: usize,
}

pub struct LstmCache {
    rows: usize,
    /// Per step: activated gates `[rows, 4H]`.
    gates: Vec<Vec<f64>>,
    /// Cell states `c_0..c_T`, each `[rows, H]`.
    cells: Vec<Vec<f64>>,
    /// `tanh(c_t)` for `t = 1..T`.
    cell_tanh: Vec<Vec<f64>>,
    /// Hidden states `h_0..h_T`.
    pub hidden: Vec<Vec<f64>>,
}

impl LstmCache {
    pub fn last_hidden(&self) -> &[f64] {
        self.hidden.last().expect("h_0 is always present")
    }
}

impl Lstm {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let gates = 4 * hidden;
        let wi = glorot_uniform(rng, inputs, gates, gates * inputs);
        let wr = glorot_uniform(rng, hidden, gates, gates * hidden);
        let mut b = vec![0.0; gates];
        b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        Lstm {
            w_input: store.push(format!("{name}.w_input"), vec![gates, inputs], wi),
            w_recurrent: store.push(format!("{name}.w_recurrent"), vec![gates, hidden], wr),
            bias: store.push(format!("{name}.bias"), vec![gates], b),
            inputs,
            hidden,
        }
    }

    /// Runs the recurrence from zero state; `steps[t]` is the `[rows, I]` input at step `t`.
    pub fn forward(&self, store: &ParamStore, steps: &[Vec<f64>], rows: usize) -> LstmCache {
        let h = self.hidden;
        let g4 = 4 * h;
        let wi = store.values(self.w_input);
        let wr = store.values(self.w_recurrent);
        let bias = store.values(self.bias);

        let mut cache = LstmCache {
            rows,
            gates: Vec::with_capacity(steps.len()),
            cells: vec![vec![0.0; rows * h]],
            cell_tanh: Vec::with_capacity(steps.len()),
            hidden: vec![vec![0.0; rows * h]],
        };
        for x in steps {
            let mut z = vec![0.0; rows * g4];
            for row in z.chunks_exact_mut(g4) {
                row.copy_from_slice(bias);
            }
            if self.inputs == 1 {
                for (row, &xv) in z.chunks_exact_mut(g4).zip(x) {
                    row.iter_mut().zip(wi).for_each(|(zv, w)| *zv += w * xv);
                }
            } else {
                gemm(rows, self.inputs, g4, x, false, wi, true, 1.0, &mut z);
            }
            gemm(
                rows,
                h,
                g4,
                cache.last_hidden(),
                false,
                wr,
                true,
                1.0,
                &mut z,
            );

            let c_prev = cache.cells.last().expect("c_0 is always present");
            let mut c = vec![0.0; rows * h];
            let mut tc = vec![0.0; rows * h];
            let mut hn = vec![0.0; rows * h];
            for r in 0..rows {
                let zr = &mut z[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let i_g = sigmoid_scalar(zr[j]);
                    let f_g = sigmoid_scalar(zr[h + j]);
                    let c_g = zr[2 * h + j].tanh();
                    let o_g = sigmoid_scalar(zr[3 * h + j]);
                    zr[j] = i_g;
                    zr[h + j] = f_g;
                    zr[2 * h + j] = c_g;
                    zr[3 * h + j] = o_g;
                    let k = r * h + j;
                    c[k] = f_g * c_prev[k] + i_g * c_g;
                    tc[k] = c[k].tanh();
                    hn[k] = o_g * tc[k];
                }
            }
            cache.gates.push(z);
            cache.cells.push(c);
            cache.cell_tanh.push(tc);
            cache.hidden.push(hn);
        }
        cache
    }

    /// Backpropagation through time from a gradient on the final hidden state.
    pub fn backward(
        &self,
        store: &ParamStore,
        steps: &[Vec<f64>],
        cache: &LstmCache,
        d_last_hidden: &[f64],
        grads: &mut ParamStore,
    ) {
        let h = self.hidden;
        let g4 = 4 * h;
        let rows = cache.rows;
        let wr = store.values(self.w_recurrent);

        let mut dh = d_last_hidden.to_vec();
        let mut dc_next = vec![0.0; rows * h];
        let mut dz = vec![0.0; rows * g4];
        for t in (0..steps.len()).rev() {
            let gates = &cache.gates[t];
            let c_prev = &cache.cells[t];
            let tc = &cache.cell_tanh[t];
            for r in 0..rows {
                let gr = &gates[r * g4..(r + 1) * g4];
                let dzr = &mut dz[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let k = r * h + j;
                    let (i_g, f_g, c_g, o_g) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                    let d_o = dh[k] * tc[k];
                    let dc = dc_next[k] + dh[k] * o_g * (1.0 - tc[k] * tc[k]);
                    dc_next[k] = dc * f_g;
                    dzr[j] = dc * c_g * i_g * (1.0 - i_g);
                    dzr[h + j] = dc * c_prev[k] * f_g * (1.0 - f_g);
                    dzr[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
                    dzr[3 * h + j] = d_o * o_g * (1.0 - o_g);
                }
            }

            if self.inputs == 1 {
                let gwi = grads.values_mut(self.w_input);
                for (row, &xv) in dz.chunks_exact(g4).zip(&steps[t]) {
                    gwi.iter_mut().zip(row).for_each(|(g, d)| *g += d * xv);
                }
            } else {
                gemm(
                    g4,
                    rows,
                    self.inputs,
                    &dz,
                    true,
                    &steps[t],
                    false,
                    1.0,
                    grads.values_mut(self.w_input),
                );
            }
            gemm(
                g4,
                rows,
                h,
                &dz,
                true,
                &cache.hidden[t],
                false,
                1.0,
                grads.values_mut(self.w_recurrent),
            );
            let gb = grads.values_mut(self.bias);
            for row in dz.chunks_exact(g4) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            if t > 0 {
                gemm(rows, g4, h, &dz, false, wr, false, 0.0, &mut dh);
            }
        }
    }
}

/// Final hidden state of a single sequence, starting from zero state.
pub fn lstm_forward(sequence: &[Vec<f64>], store: &ParamStore, lstm: &Lstm) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::invalid("LSTM input sequence is empty"));
    }
    if let Some(bad) = sequence.iter().find(|x| x.len() != lstm.inputs) {
        return Err(Error::Shape(format!(
            "LSTM expects inputs of width {}, found {}",
            lstm.inputs,
            bad.len()
        )));
    }
    let cache = lstm.forward(store, sequence, 1);
    Ok(cache.last_hidden().to_vec())
}
