use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::nets::{Batch, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    /// `None` trains on the full set each step.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

/// Minibatch Adam on mean BCE. Rows are reshuffled every epoch; the final
/// partial batch is kept.
pub fn fit<N: Network>(
    net: &mut N,
    inputs: &[f64],
    labels: &[f64],
    options: &TrainOptions,
) -> Result<()> {
    let cols = net.input_width();
    let rows = labels.len();
    if rows == 0 {
        return Err(Error::invalid("cannot train on an empty set"));
    }
    if inputs.len() != rows * cols {
        return Err(Error::Shape(format!(
            "{} input values for {rows} rows of width {cols}",
            inputs.len()
        )));
    }

    let mut state = AdamState::new(net.params(), options.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let batch_size = options.batch_size.unwrap_or(rows).max(1);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut x = Vec::with_capacity(batch_size * cols);
    let mut y = Vec::with_capacity(batch_size);

    for epoch in 0..options.epochs {
        if batch_size < rows {
            order.shuffle(&mut rng);
        }
        for (batch_idx, chunk) in order.chunks(batch_size).enumerate() {
            let (loss, grads) = if chunk.len() == rows && batch_size >= rows {
                net.loss_and_grad(&Batch::new(inputs, labels, cols))
            } else {
                x.clear();
                y.clear();
                for &r in chunk {
                    x.extend_from_slice(&inputs[r * cols..(r + 1) * cols]);
                    y.push(labels[r]);
                }
                net.loss_and_grad(&Batch::new(&x, &y, cols))
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            adam_step(net.params_mut(), &grads, &mut state)?;
        }
    }
    Ok(())
}

/// Probabilities for many rows, evaluated in bounded chunks.
pub fn predict_rows<N: Network + ?Sized>(net: &N, inputs: &[f64], rows: usize) -> Vec<f64> {
    const CHUNK: usize = 512;
    let cols = net.input_width();
    let mut out = Vec::with_capacity(rows);
    for chunk in inputs[..rows * cols].chunks(CHUNK * cols) {
        out.extend(net.predict(chunk, chunk.len() / cols));
    }
    out
}
