//! Grade-prediction models and their analytic gradients.
//!
//! Every model keeps its trainable parameters in one flat `Vec<f64>` with a
//! fixed block layout, so the optimizer, regularizer, checkpointing, and the
//! finite-difference checks can treat all of them uniformly. Gradients are
//! accumulated into a [`SparseGrad`] that records which entries an instance
//! touched.

mod csr;
mod krm;
mod mf;
mod nak;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use csr::CsrParams;
pub use krm::{decay, KrmParams, Pooling};
pub use mf::MfParams;
pub use nak::{NakForward, NakParams};

use crate::activations::{Activation, SparsegenParam};
use crate::dataset::PredictionInstance;
use crate::error::{Error, Result};

/// Gradient accumulator over a flat parameter vector that remembers which
/// entries were written since the last [`clear`](SparseGrad::clear).
#[derive(Clone, Debug)]
pub struct SparseGrad {
    values: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
}

impl SparseGrad {
    pub fn new(len: usize) -> Self {
        SparseGrad {
            values: vec![0.0; len],
            touched: Vec::new(),
            mark: vec![false; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn add(&mut self, index: usize, value: f64) {
        if !self.mark[index] {
            self.mark[index] = true;
            self.touched.push(index);
        }
        self.values[index] += value;
    }

    /// Adds `scale * values` to the block starting at `offset`.
    #[inline]
    pub fn add_scaled(&mut self, offset: usize, values: &[f64], scale: f64) {
        for (k, &v) in values.iter().enumerate() {
            self.add(offset + k, scale * v);
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// Touched indices in first-touch order.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.touched.iter().map(|&i| (i, self.values[i]))
    }

    /// Dense copy, zero where untouched.
    pub fn to_dense(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.values[i] = 0.0;
            self.mark[i] = false;
        }
        self.touched.clear();
    }
}

/// Common surface of every model.
pub trait GradeModel {
    /// Predicted (relative) grade. Course and student handles must be in range;
    /// see [`Model::check_instance`].
    fn predict(&self, instance: &PredictionInstance) -> f64;

    /// Adds `scale * residual * d(prediction)/d(theta)` into `grad`, which is the
    /// gradient of `0.5 * scale * (prediction - actual)^2` when
    /// `residual = prediction - actual`.
    fn accumulate_gradient(&self, instance: &PredictionInstance, residual: f64, scale: f64, grad: &mut SparseGrad);

    fn values(&self) -> &[f64];

    fn values_mut(&mut self) -> &mut [f64];

    /// Gradient bundle of the per-instance squared error term.
    fn gradient(&self, instance: &PredictionInstance, residual: f64) -> SparseGrad {
        let mut grad = SparseGrad::new(self.values().len());
        self.accumulate_gradient(instance, residual, 1.0, &mut grad);
        grad
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Mf,
    Csr,
    KrmSum,
    KrmAvg,
    NakSoft,
    NakSparse,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Mf,
        ModelKind::Csr,
        ModelKind::KrmSum,
        ModelKind::KrmAvg,
        ModelKind::NakSoft,
        ModelKind::NakSparse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mf => "mf",
            ModelKind::Csr => "csr",
            ModelKind::KrmSum => "krm_sum",
            ModelKind::KrmAvg => "krm_avg",
            ModelKind::NakSoft => "nak_soft",
            ModelKind::NakSparse => "nak_sparse",
        }
    }

    /// Display label in report tables, e.g. `NAK(sparse)`.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Mf => "MF",
            ModelKind::Csr => "CSR",
            ModelKind::KrmSum => "KRM(sum)",
            ModelKind::KrmAvg => "KRM(avg)",
            ModelKind::NakSoft => "NAK(soft)",
            ModelKind::NakSparse => "NAK(sparse)",
        }
    }

    pub fn is_nak(self) -> bool {
        matches!(self, ModelKind::NakSoft | ModelKind::NakSparse)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown model kind `{s}`")))
    }
}

/// Shape and structural hyperparameters of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Architecture {
    pub kind: ModelKind,
    /// Embedding size.
    pub d: usize,
    /// Attention hidden size (NAK only).
    pub l: usize,
    /// Decay rate between terms (KRM only).
    pub lambda: f64,
    /// Sparsegen gamma (NAK(sparse) only).
    pub gamma: f64,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Parameter("d must be at least 1".into()));
        }
        if self.kind.is_nak() && self.l == 0 {
            return Err(Error::Parameter("l must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        SparsegenParam::new(self.gamma)?;
        Ok(())
    }
}

/// Half-width of the uniform initialization range for embedding size `d`.
pub fn init_range(d: usize) -> f64 {
    0.05 / (d as f64).sqrt()
}

pub(crate) fn fill_uniform(values: &mut [f64], half_width: f64, rng: &mut ChaCha8Rng) {
    for v in values {
        *v = rng.random_range(-half_width..=half_width);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Any of the supported models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Mf(MfParams),
    Csr(CsrParams),
    Krm(KrmParams),
    Nak(NakParams),
}

impl Model {
    /// Fresh parameters. Embeddings and attention weights are drawn uniformly
    /// from `[-0.05/sqrt(d), 0.05/sqrt(d)]`; biases start at zero. The training
    /// instances decide which students MF has seen and which pairs CSR weights.
    pub fn init(
        arch: &Architecture,
        n_students: usize,
        n_courses: usize,
        train: &[PredictionInstance],
        seed: u64,
    ) -> Result<Model> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match arch.kind {
            ModelKind::Mf => Model::Mf(MfParams::init(n_students, n_courses, arch.d, train, &mut rng)),
            ModelKind::Csr => Model::Csr(CsrParams::init(n_courses, train)),
            ModelKind::KrmSum | ModelKind::KrmAvg => {
                let pooling = if arch.kind == ModelKind::KrmSum {
                    Pooling::Sum
                } else {
                    Pooling::Avg
                };
                Model::Krm(KrmParams::init(n_courses, arch.d, pooling, arch.lambda, &mut rng))
            }
            ModelKind::NakSoft | ModelKind::NakSparse => {
                let activation = if arch.kind == ModelKind::NakSoft {
                    Activation::Softmax
                } else {
                    Activation::Sparsegen(SparsegenParam::new(arch.gamma)?)
                };
                Model::Nak(NakParams::init(n_courses, arch.d, arch.l, activation, &mut rng))
            }
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mf(_) => ModelKind::Mf,
            Model::Csr(_) => ModelKind::Csr,
            Model::Krm(p) => match p.pooling {
                Pooling::Sum => ModelKind::KrmSum,
                Pooling::Avg => ModelKind::KrmAvg,
            },
            Model::Nak(p) => match p.activation {
                Activation::Softmax => ModelKind::NakSoft,
                Activation::Sparsegen(_) => ModelKind::NakSparse,
            },
        }
    }

    fn inner(&self) -> &dyn GradeModel {
        match self {
            Model::Mf(p) => p,
            Model::Csr(p) => p,
            Model::Krm(p) => p,
            Model::Nak(p) => p,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn GradeModel {
        match self {
            Model::Mf(p) => p,
            Model::Csr(p) => p,
            Model::Krm(p) => p,
            Model::Nak(p) => p,
        }
    }

    pub fn n_courses(&self) -> usize {
        match self {
            Model::Mf(p) => p.n_courses(),
            Model::Csr(p) => p.n_courses(),
            Model::Krm(p) => p.n_courses(),
            Model::Nak(p) => p.n_courses(),
        }
    }

    /// Verifies every handle in the instance indexes into this model's tables.
    pub fn check_instance(&self, instance: &PredictionInstance) -> Result<()> {
        let n = self.n_courses();
        let out_of_range = |c: usize| Error::UnknownId {
            kind: "course",
            name: format!("#{c}"),
        };
        if instance.target_course.index() >= n {
            return Err(out_of_range(instance.target_course.index()));
        }
        if let Some(p) = instance.priors.iter().find(|p| p.course.index() >= n) {
            return Err(out_of_range(p.course.index()));
        }
        if let Model::Mf(p) = self {
            if instance.student.index() >= p.n_students() {
                return Err(Error::UnknownId {
                    kind: "student",
                    name: format!("#{}", instance.student.0),
                });
            }
        } else if instance.priors.is_empty() {
            return Err(Error::Empty("instance has no prior courses"));
        }
        Ok(())
    }

    pub fn as_nak(&self) -> Option<&NakParams> {
        match self {
            Model::Nak(p) => Some(p),
            _ => None,
        }
    }
}

impl GradeModel for Model {
    fn predict(&self, instance: &PredictionInstance) -> f64 {
        self.inner().predict(instance)
    }

    fn accumulate_gradient(&self, instance: &PredictionInstance, residual: f64, scale: f64, grad: &mut SparseGrad) {
        self.inner().accumulate_gradient(instance, residual, scale, grad)
    }

    fn values(&self) -> &[f64] {
        self.inner().values()
    }

    fn values_mut(&mut self) -> &mut [f64] {
        self.inner_mut().values_mut()
    }
}
