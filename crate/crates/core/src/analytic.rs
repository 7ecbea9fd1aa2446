//! Isotropic Gaussian-mixture targets with closed-form marginals and
//! marginal velocity.
//!
//! With `x0 ~ N(0, I)` and `x1 ~ N(mu_k, s_k^2 I)` on the straight path
//! `x_t = (1 - t) x0 + t x1`, each component stays Gaussian:
//! `x_t ~ N(t mu_k, ((1 - t)^2 + t^2 s_k^2) I)`. Conditioning `(x0, x1)` on
//! `x_t` per component gives
//!
//! ```text
//! E[x1 - x0 | x_t = x, k] = mu_k + (t s_k^2 - (1 - t)) / var_k(t) * (x - t mu_k)
//! ```
//!
//! and the marginal field is that expectation averaged under the component
//! posterior `r_k(x, t)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::VelocityField;
use crate::tensor::{ImageTensor, SeededRng, Shape};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    shape: Shape,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

/// Per-component Gaussian parameters of the time-`t` marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variance: f64,
}

/// On-disk JSON form. `shape` defaults to a flat vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 3]>,
}

impl GmmPrior {
    pub fn new(
        shape: Shape,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{k} weights but {} means and {} variances",
                means.len(),
                variances.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("variances must be finite and positive".into()));
        }
        for m in &means {
            if m.len() != shape.len() {
                return Err(Error::DimMismatch {
                    expected: shape.len(),
                    found: m.len(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "mixture mean".into(),
                });
            }
        }
        Ok(Self {
            shape,
            weights,
            means,
            variances,
        })
    }

    /// Scalar mixture on a 1x1x1 "image".
    pub fn scalar(weights: &[f64], means: &[f64], variances: &[f64]) -> Result<Self> {
        Self::new(
            Shape::vector(1)?,
            weights.to_vec(),
            means.iter().map(|&m| vec![m]).collect(),
            variances.to_vec(),
        )
    }

    pub fn from_spec(spec: GmmSpec) -> Result<Self> {
        let dim = spec.means.first().map_or(0, Vec::len);
        let shape = match spec.shape {
            Some([c, h, w]) => Shape::new(c, h, w)?,
            None => Shape::vector(dim)?,
        };
        Self::new(shape, spec.weights, spec.means, spec.variances)
    }

    pub fn to_spec(&self) -> GmmSpec {
        GmmSpec {
            weights: self.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.clone(),
            shape: Some([self.shape.channels, self.shape.height, self.shape.width]),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("spec serializes")
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean_tensor(&self, k: usize) -> ImageTensor {
        ImageTensor::from_f64(self.shape, &self.means[k]).expect("means are finite")
    }

    /// Draws a component index, then `mu_k + s_k * noise`.
    pub fn sample(&self, rng: &mut SeededRng) -> ImageTensor {
        let (_, x) = self.sample_labeled(rng);
        ImageTensor::from_f64(self.shape, &x).expect("finite sample")
    }

    /// Component index and the `f64` sample, before rounding.
    pub fn sample_labeled(&self, rng: &mut SeededRng) -> (usize, Vec<f64>) {
        let k = self.pick_component(rng.uniform());
        let sd = self.variances[k].sqrt();
        let x = self.means[k]
            .iter()
            .map(|&m| m + sd * rng.standard_normal())
            .collect();
        (k, x)
    }

    fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc && w > 0.0 {
                return k;
            }
        }
        // u landed in the rounding slack above the cumulative sum
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    pub fn marginal(&self, t: f64) -> Result<Vec<MarginalComponent>> {
        check_time(t)?;
        Ok((0..self.n_components())
            .map(|k| MarginalComponent {
                weight: self.weights[k],
                mean: self.means[k].iter().map(|&m| t * m).collect(),
                variance: self.marginal_variance(k, t),
            })
            .collect())
    }

    fn marginal_variance(&self, k: usize, t: f64) -> f64 {
        (1.0 - t).powi(2) + t * t * self.variances[k]
    }

    /// Per-component `ln w_k + ln N(x; t mu_k, var_k(t) I)`.
    fn component_log_terms(&self, x: &[f64], t: f64) -> Vec<f64> {
        let d = x.len() as f64;
        (0..self.n_components())
            .map(|k| {
                let var = self.marginal_variance(k, t);
                let sq: f64 = x
                    .iter()
                    .zip(&self.means[k])
                    .map(|(&xi, &m)| (xi - t * m).powi(2))
                    .sum();
                self.weights[k].ln() - 0.5 * d * (LN_2PI + var.ln()) - 0.5 * sq / var
            })
            .collect()
    }

    /// Component posterior `r_k(x, t)`, normalized in log space.
    pub fn responsibilities(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        check_time(t)?;
        self.check_len(x.len())?;
        let logs = self.component_log_terms(x, t);
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }

    /// `ln p_t(x)` by log-sum-exp over the marginal components.
    pub fn log_density(&self, x: &[f64], t: f64) -> Result<f64> {
        check_time(t)?;
        self.check_len(x.len())?;
        Ok(log_sum_exp(&self.component_log_terms(x, t)))
    }

    /// Marginal velocity `sum_k r_k v_k` evaluated in `f64`.
    pub fn velocity_f64(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let resp = self.responsibilities(x, t)?;
        let mut v = vec![0.0; x.len()];
        for (k, &r) in resp.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let var = self.marginal_variance(k, t);
            let coef = (t * self.variances[k] - (1.0 - t)) / var;
            for ((vi, &xi), &m) in v.iter_mut().zip(x).zip(&self.means[k]) {
                *vi += r * (m + coef * (xi - t * m));
            }
        }
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("mixture velocity at t = {t}"),
            });
        }
        Ok(v)
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    /// Four-component mixture of 1-channel `height x width` patterns in
    /// `[-1, 1]`: left/right halves, top/bottom halves, a centered disk and
    /// a coarse checkerboard. Equal weights, per-pixel variance 0.01.
    pub fn patterns(height: usize, width: usize) -> Result<Self> {
        let shape = Shape::new(1, height, width)?;
        let (h, w) = (height as f64, width as f64);
        let cell = (height.max(width) / 4).max(1);
        let pattern = |f: &dyn Fn(usize, usize) -> bool| -> Vec<f64> {
            let mut v = Vec::with_capacity(height * width);
            for y in 0..height {
                for x in 0..width {
                    v.push(if f(y, x) { 0.8 } else { -0.8 });
                }
            }
            v
        };
        let means = vec![
            pattern(&|_, x| (x as f64) < w / 2.0),
            pattern(&|y, _| (y as f64) < h / 2.0),
            pattern(&|y, x| {
                let dy = y as f64 + 0.5 - h / 2.0;
                let dx = x as f64 + 0.5 - w / 2.0;
                dy * dy + dx * dx < (h.min(w) * 0.3).powi(2)
            }),
            pattern(&|y, x| (y / cell + x / cell).is_multiple_of(2)),
        ];
        Self::new(shape, vec![0.25; 4], means, vec![0.01; 4])
    }
}

impl VelocityField for GmmPrior {
    fn velocity(&self, x: &ImageTensor, t: f64) -> Result<ImageTensor> {
        if x.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape,
                found: x.shape(),
            });
        }
        let v = self.velocity_f64(&x.to_f64(), t)?;
        ImageTensor::from_f64(self.shape, &v)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    Ok(())
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}
