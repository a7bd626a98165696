use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::nets::{Batch, Network};
use super::ops::sigmoid_scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Coordinates skipped because the perturbation flipped a ReLU.
    pub skipped_kinks: usize,
}

/// Compares analytic gradients with central differences on a random subset
/// of at most `per_tensor` coordinates of every parameter array.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`. A coordinate whose
/// `+h`/`-h` evaluations see a different ReLU on/off pattern is straddling a
/// kink, where the finite difference is not a derivative; those are skipped
/// and counted.
///
/// The loss difference is accumulated row by row from the logits rather than
/// by subtracting two rounded batch losses, which keeps the numeric estimate
/// accurate for coordinates with very small gradients.
pub fn finite_diff_check<N: Network>(
    net: &mut N,
    batch: &Batch<'_>,
    h: f64,
    per_tensor: usize,
    seed: u64,
) -> GradCheckReport {
    assert!(h > 0.0, "perturbation must be positive");
    let (_, analytic) = net.loss_and_grad(batch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    for t in 0..net.params().tensors().len() {
        let len = net.params().tensor(t).len();
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            let mut c = sample(&mut rng, len, per_tensor).into_vec();
            c.sort_unstable();
            c
        };
        for k in coords {
            let original = net.params().values(t)[k];
            net.params_mut().values_mut(t)[k] = original + h;
            let plus = net.logits(batch.inputs, batch.rows);
            let plus_penalty = net.penalty();
            let plus_pattern = net.activation_pattern(batch.inputs, batch.rows);
            net.params_mut().values_mut(t)[k] = original - h;
            let minus = net.logits(batch.inputs, batch.rows);
            let minus_penalty = net.penalty();
            let minus_pattern = net.activation_pattern(batch.inputs, batch.rows);
            net.params_mut().values_mut(t)[k] = original;

            if plus_pattern != minus_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let diff = bce_difference(&plus, &minus, batch.labels) + (plus_penalty - minus_penalty);
            let numeric = diff / (2.0 * h);
            let a = analytic.values(t)[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let err = (a - numeric).abs() / denom;
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((net.params().tensor(t).name.clone(), k));
            }
        }
    }
    report
}

/// `mean(l(a_i, y_i)) - mean(l(b_i, y_i))` for the logit-form BCE, using
/// `softplus(a) - softplus(b) = ln(1 + sigmoid(b) * (e^(a-b) - 1))`.
fn bce_difference(plus: &[f64], minus: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = plus
        .iter()
        .zip(minus)
        .zip(labels)
        .map(|((&a, &b), &y)| {
            let d = a - b;
            (sigmoid_scalar(b) * d.exp_m1()).ln_1p() - y * d
        })
        .sum();
    total / plus.len() as f64
}
