//! Elementwise activations, losses and the dense affine map.

use crate::error::{Error, Result};

/// Predictions are clamped to `[EPS, 1 - EPS]` before taking logarithms.
pub const BCE_EPS: f64 = 1e-12;

/// Logistic function; the negative branch avoids overflow and keeps tiny
/// probabilities representable instead of flushing them to zero.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Binary cross-entropy of a probability against a 0/1 label.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Binary cross-entropy evaluated on a logit, `softplus(z) - y z`.
#[inline]
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// `W x + b` for a row-major `outputs x inputs` weight matrix.
pub fn dense_forward(
    input: &[f64],
    weights: &[f64],
    outputs: usize,
    bias: &[f64],
) -> Result<Vec<f64>> {
    let inputs = input.len();
    if weights.len() != outputs * inputs || bias.len() != outputs {
        return Err(Error::Shape(format!(
            "dense layer {outputs}x{inputs} given {} weights and {} biases",
            weights.len(),
            bias.len()
        )));
    }
    Ok(weights
        .chunks_exact(inputs.max(1))
        .take(outputs)
        .zip(bias)
        .map(|(row, b)| row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b)
        .collect())
}

/// `C = op(A) op(B) + beta C`, all row-major; `op(A)` is `m x k`, `op(B)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x *= beta);
        return;
    }
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_examples() {
        let id = dense_forward(&[3.0, -2.0], &[1.0, 0.0, 0.0, 1.0], 2, &[0.0, 0.0]).unwrap();
        assert_eq!(id, vec![3.0, -2.0]);
        let y = dense_forward(&[1.0, 2.0], &[1.0, 1.0, 0.0, 1.0], 2, &[0.0, 1.0]).unwrap();
        assert_eq!(y, vec![3.0, 3.0]);
        assert!(dense_forward(&[1.0, 2.0, 3.0], &[1.0, 1.0, 0.0, 1.0], 2, &[0.0, 1.0]).is_err());
        assert!(dense_forward(&[1.0, 2.0], &[1.0, 1.0, 0.0, 1.0], 2, &[0.0]).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let tiny = sigmoid_scalar(-745.0);
        assert!(tiny > 0.0 && tiny <= 1e-300);
        let reference = (-745f64).exp() / (1.0 + (-745f64).exp());
        assert_eq!(tiny, reference);
        assert_eq!(sigmoid_scalar(800.0), 1.0);
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(1.0, 1.0) <= -(1.0 - 1e-12f64).ln() + 1e-18);
        assert!(bce_loss(0.0, 0.0) <= 1.1e-12);
        assert!((bce_loss(0.9, 0.0) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(bce_loss(0.0, 1.0).is_finite());
    }

    #[test]
    fn bce_decreases_toward_label() {
        let ps = [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99];
        for w in ps.windows(2) {
            assert!(bce_loss(w[1], 1.0) < bce_loss(w[0], 1.0));
            assert!(bce_loss(w[0], 0.0) < bce_loss(w[1], 0.0));
        }
    }

    #[test]
    fn logit_form_agrees_with_probability_form() {
        // within the range where the probability form is not clamped
        for &z in &[-10.0, -3.0, -0.2, 0.0, 0.7, 4.0, 10.0] {
            for &y in &[0.0, 1.0] {
                let a = bce_with_logit(z, y);
                let b = bce_loss(sigmoid_scalar(z), y);
                assert!((a - b).abs() < 1e-9 * (1.0 + a), "z={z} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gemm_transposes() {
        // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
        gemm(2, 2, 2, &a, false, &b, true, 1.0, &mut c);
        assert_eq!(c, [34.0, 46.0, 78.0, 106.0]);
    }
}
