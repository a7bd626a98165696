use serde::{Deserialize, Serialize};

use super::{DatasetItem, ENGINEERED_FEATURES};
use crate::error::{Error, Result};

/// Per-dimension standardization fitted on a training slice.
///
/// Time-valued dimensions (the deltas, f3 and f4) are first compressed with
/// `ln(1 + x)`. Dimensions that are constant on the fit slice are passed
/// through after that transform, without centering or scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub log_scaled: Vec<bool>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

fn log_scaled_dims(window: usize) -> Vec<bool> {
    let mut dims = vec![true; window];
    // f1..f7: only the two mean gaps are durations
    dims.extend([false, false, true, true, false, false, false]);
    dims
}

impl Normalizer {
    pub fn fit(items: &[DatasetItem]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cannot fit a normalizer on an empty slice"))?;
        let window = first.deltas.len();
        let dims = window + ENGINEERED_FEATURES;
        let log_scaled = log_scaled_dims(window);

        let mut rows = Vec::with_capacity(items.len());
        for item in items {
            if item.width() != dims {
                return Err(Error::Shape(format!(
                    "item width {} differs from {dims}",
                    item.width()
                )));
            }
            rows.push(Self::pre_transform(&log_scaled, &item.feature_vector()));
        }

        let n = rows.len() as f64;
        let mut mean = vec![0.0; dims];
        for row in &rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut var = vec![0.0; dims];
        for row in &rows {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let constant = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| *s <= 1e-12 * (1.0 + m.abs()))
            .collect();

        Ok(Normalizer {
            log_scaled,
            mean,
            std,
            constant,
        })
    }

    fn pre_transform(log_scaled: &[bool], raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(log_scaled)
            .map(|(&x, &log)| if log { x.ln_1p() } else { x })
            .collect()
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    /// Transforms a raw feature vector in place.
    pub fn transform_in_place(&self, row: &mut [f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::Shape(format!(
                "feature vector of width {} given to a normalizer of width {}",
                row.len(),
                self.width()
            )));
        }
        for (j, x) in row.iter_mut().enumerate() {
            if self.log_scaled[j] {
                *x = x.ln_1p();
            }
            if !self.constant[j] {
                *x = (*x - self.mean[j]) / self.std[j];
            }
        }
        Ok(())
    }

    pub fn apply(&self, item: &DatasetItem) -> Result<Vec<f64>> {
        let mut row = item.feature_vector();
        self.transform_in_place(&mut row)?;
        Ok(row)
    }

    /// Normalized row-major matrix of the given items.
    pub fn apply_all(&self, items: &[DatasetItem]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(items.len() * self.width());
        for item in items {
            let start = out.len();
            out.extend_from_slice(&item.deltas);
            out.extend_from_slice(&item.engineered);
            self.transform_in_place(&mut out[start..])?;
        }
        Ok(out)
    }
}
