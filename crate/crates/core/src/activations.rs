//! Normalizing maps from attention logits to the probability simplex.
//!
//! * [`softmax`] gives every entry positive mass.
//! * [`sparsemax`] is the Euclidean projection of the logits onto the simplex
//!   and assigns exact zeros to low logits.
//! * [`sparsegen`] runs sparsemax on temperature-scaled logits `z / (1 - gamma)`;
//!   larger `gamma` gives sparser outputs and `gamma = 0` is plain sparsemax.
//!
//! Each map has a backward pass that multiplies an upstream gradient by the
//! map's Jacobian. All of them are pure functions on `f64` slices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbVector {
    values: Vec<f64>,
}

impl ProbVector {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices carrying strictly positive mass.
    pub fn support(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn support_len(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.0).count()
    }
}

/// Sparsity knob for [`sparsegen`]; must be strictly below 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SparsegenParam(f64);

impl SparsegenParam {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma < 1.0 {
            Ok(SparsegenParam(gamma))
        } else {
            Err(Error::Parameter(format!("sparsegen gamma must be < 1, got {gamma}")))
        }
    }

    pub fn gamma(self) -> f64 {
        self.0
    }

    /// `1 / (1 - gamma)`.
    pub fn scale(self) -> f64 {
        1.0 / (1.0 - self.0)
    }
}

impl TryFrom<f64> for SparsegenParam {
    type Error = Error;

    fn try_from(gamma: f64) -> Result<Self> {
        SparsegenParam::new(gamma)
    }
}

impl From<SparsegenParam> for f64 {
    fn from(p: SparsegenParam) -> f64 {
        p.0
    }
}

/// Which normalizing map an attention layer uses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softmax,
    Sparsegen(SparsegenParam),
}

impl Activation {
    pub fn forward(self, z: &[f64]) -> ProbVector {
        match self {
            Activation::Softmax => softmax(z),
            Activation::Sparsegen(gamma) => sparsegen(z, gamma),
        }
    }

    pub fn backward(self, p: &ProbVector, upstream: &[f64]) -> Result<Vec<f64>> {
        match self {
            Activation::Softmax => softmax_backward(p, upstream),
            Activation::Sparsegen(gamma) => sparsegen_backward(p, upstream, gamma),
        }
    }
}

pub fn softmax(z: &[f64]) -> ProbVector {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut values: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = values.iter().sum();
    for v in &mut values {
        *v /= sum;
    }
    ProbVector { values }
}

/// Euclidean projection of `z` onto the probability simplex.
pub fn sparsemax(z: &[f64]) -> ProbVector {
    let tau = sparsemax_threshold(z);
    ProbVector {
        values: z.iter().map(|&v| (v - tau).max(0.0)).collect(),
    }
}

/// The threshold `tau` with `sparsemax(z)_i = max(z_i - tau, 0)`.
pub fn sparsemax_threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut support_sum = 0.0;
    let mut k_star = 0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k1 = (k + 1) as f64;
        if 1.0 + k1 * v > cumsum {
            k_star = k + 1;
            support_sum = cumsum;
        }
    }
    // k = 1 always satisfies the condition, so k_star >= 1 for nonempty input.
    (support_sum - 1.0) / k_star.max(1) as f64
}

pub fn sparsegen(z: &[f64], gamma: SparsegenParam) -> ProbVector {
    let scale = gamma.scale();
    let scaled: Vec<f64> = z.iter().map(|&v| v * scale).collect();
    sparsemax(&scaled)
}

fn check_dims(p: &ProbVector, upstream: &[f64]) -> Result<()> {
    if p.len() != upstream.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            got: upstream.len(),
        });
    }
    Ok(())
}

pub fn softmax_backward(p: &ProbVector, upstream: &[f64]) -> Result<Vec<f64>> {
    check_dims(p, upstream)?;
    let dot: f64 = p.values.iter().zip(upstream).map(|(a, b)| a * b).sum();
    Ok(p.values.iter().zip(upstream).map(|(&pi, &u)| pi * (u - dot)).collect())
}

/// Jacobian-vector product of sparsemax at output `p`: on the support the
/// upstream gradient is centered, off the support it is zero.
pub fn sparsemax_backward(p: &ProbVector, upstream: &[f64]) -> Result<Vec<f64>> {
    check_dims(p, upstream)?;
    let (sum, count) = p
        .values
        .iter()
        .zip(upstream)
        .filter(|(&pi, _)| pi > 0.0)
        .fold((0.0, 0usize), |(s, c), (_, &u)| (s + u, c + 1));
    let mean = sum / count.max(1) as f64;
    Ok(p.values
        .iter()
        .zip(upstream)
        .map(|(&pi, &u)| if pi > 0.0 { u - mean } else { 0.0 })
        .collect())
}

pub fn sparsegen_backward(p: &ProbVector, upstream: &[f64], gamma: SparsegenParam) -> Result<Vec<f64>> {
    let scale = gamma.scale();
    let mut out = sparsemax_backward(p, upstream)?;
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}
