//! Exact finite-dataset posterior denoiser.
//!
//! For a dataset {x⁽ⁱ⁾} under the forward corruption
//! `x_t = √α_t·x₀ + √(1−α_t)·ε`, the Bayes-optimal noise estimate is
//! available in closed form: weight each item by
//! `softmax_i(−‖x − √α_t·x⁽ⁱ⁾‖² / (2(1−α_t)))`, form the posterior mean
//! `x̂₀ = Σ w_i·x⁽ⁱ⁾`, and return `(x − √α_t·x̂₀)/√(1−α_t)`. This is the
//! exact minimizer of the noise-prediction objective on that dataset, which
//! makes it the ground-truth oracle for samplers and guidance algebra.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::predictors::Predictor;
use crate::schedule::NoiseSchedule;

/// Posterior denoiser over a fixed finite dataset, optionally labeled.
pub struct DatasetDenoiser {
    items: Vec<Field>,
    labels: Option<Vec<u32>>,
    schedule: NoiseSchedule,
}

impl DatasetDenoiser {
    /// Builds the denoiser. Items must be nonempty and share one shape;
    /// `labels`, when given, must pair up with `items`.
    pub fn new(
        items: Vec<Field>,
        labels: Option<Vec<u32>>,
        schedule: NoiseSchedule,
    ) -> Result<DatasetDenoiser> {
        if items.is_empty() {
            return Err(Error::InvalidDimension("dataset must be nonempty".into()));
        }
        for item in &items[1..] {
            if !item.same_shape(&items[0]) {
                return Err(Error::ShapeMismatch {
                    left: items[0].shape_string(),
                    right: item.shape_string(),
                });
            }
        }
        if let Some(l) = &labels {
            if l.len() != items.len() {
                return Err(Error::ShapeMismatch {
                    left: format!("{} items", items.len()),
                    right: format!("{} labels", l.len()),
                });
            }
        }
        Ok(DatasetDenoiser { items, labels, schedule })
    }

    pub fn items(&self) -> &[Field] {
        &self.items
    }

    fn class_indices(&self, cond: Option<u32>) -> Result<Vec<usize>> {
        match cond {
            None => Ok((0..self.items.len()).collect()),
            Some(label) => {
                let labels = self.labels.as_ref().ok_or(Error::UnknownCondition {
                    label,
                    known: "(none; this dataset is unlabeled)".into(),
                })?;
                let idx: Vec<usize> =
                    (0..self.items.len()).filter(|&i| labels[i] == label).collect();
                if idx.is_empty() {
                    let mut known: Vec<u32> = labels.clone();
                    known.sort_unstable();
                    known.dedup();
                    if known.contains(&label) {
                        return Err(Error::EmptyClassSubset(label));
                    }
                    return Err(Error::UnknownCondition {
                        label,
                        known: format!("{known:?}"),
                    });
                }
                Ok(idx)
            }
        }
    }

    /// Posterior mean `x̂₀ = Σ w_i·x⁽ⁱ⁾` with softmax weights, restricted to
    /// class `cond` when given. Log-sum-exp stabilized.
    pub fn posterior_x0(&self, x: &Field, t: usize, cond: Option<u32>) -> Result<Field> {
        if !x.same_shape(&self.items[0]) {
            return Err(Error::UnsupportedShape {
                got: x.shape_string(),
                family: self.shape_family(),
            });
        }
        let a = self.schedule.alpha(t)?;
        let idx = self.class_indices(cond)?;
        let sq_a = a.sqrt();
        let inv_two_var = 1.0 / (2.0 * (1.0 - a));
        // Log-weights, shifted by their maximum before exponentiation.
        let logw: Vec<f64> = idx
            .iter()
            .map(|&i| {
                let item = &self.items[i];
                let d2: f64 = x
                    .data()
                    .iter()
                    .zip(item.data())
                    .map(|(&xv, &iv)| {
                        let d = xv - sq_a * iv;
                        d * d
                    })
                    .sum();
                -d2 * inv_two_var
            })
            .collect();
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logw.iter().map(|&l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();

        let mut out = vec![0.0; x.numel()];
        for (&i, &wi) in idx.iter().zip(&w) {
            let coeff = wi / total;
            for (o, &v) in out.iter_mut().zip(self.items[i].data()) {
                *o += coeff * v;
            }
        }
        Field::from_vec(x.channels(), x.dims(), out)
    }
}

impl Predictor for DatasetDenoiser {
    fn predict(&self, x: &Field, t: usize, cond: Option<u32>) -> Result<Field> {
        let x0 = self.posterior_x0(x, t, cond)?;
        let a = self.schedule.alpha(t)?;
        // ε̂ = (x − √α·x̂₀)/√(1−α)
        let inv = 1.0 / (1.0 - a).sqrt();
        Field::linear_comb(inv, x, -a.sqrt() * inv, &x0)
    }

    fn shape_family(&self) -> String {
        format!("exactly {}", self.items[0].shape_string())
    }
}
