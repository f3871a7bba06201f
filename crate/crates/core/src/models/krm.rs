use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, fill_uniform, init_range, GradeModel, SparseGrad};
use crate::dataset::{PredictionInstance, Prior};
use crate::error::{Error, Result};
use crate::ids::CourseId;

/// How prior contributions are combined into the knowledge state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Sum,
    Avg,
}

/// Weight of a course taken `term_offset + 1` terms before the target.
pub fn decay(term_offset: u32, lambda: f64) -> f64 {
    (-lambda * term_offset as f64).exp()
}

/// Cumulative knowledge regression: the knowledge state is the decayed,
/// grade-weighted sum (or mean) of the priors' provided vectors, and the
/// prediction is `cb_j + k . r_j`.
///
/// Layout: `[course bias (n) | provided (n*d) | required (n*d)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrmParams {
    n_courses: usize,
    d: usize,
    pub pooling: Pooling,
    pub lambda: f64,
    values: Vec<f64>,
}

impl KrmParams {
    pub(crate) fn init(n_courses: usize, d: usize, pooling: Pooling, lambda: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = KrmParams::zeros(n_courses, d, pooling, lambda);
        fill_uniform(&mut p.values[n_courses..], init_range(d), rng);
        p
    }

    pub fn zeros(n_courses: usize, d: usize, pooling: Pooling, lambda: f64) -> Self {
        KrmParams {
            n_courses,
            d,
            pooling,
            lambda,
            values: vec![0.0; n_courses * (1 + 2 * d)],
        }
    }

    pub fn n_courses(&self) -> usize {
        self.n_courses
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn course_bias_offset(&self, c: CourseId) -> usize {
        c.index()
    }

    pub fn provided_offset(&self, c: CourseId) -> usize {
        self.n_courses + c.index() * self.d
    }

    pub fn required_offset(&self, c: CourseId) -> usize {
        self.n_courses * (1 + self.d) + c.index() * self.d
    }

    pub fn course_bias(&self, c: CourseId) -> f64 {
        self.values[c.index()]
    }

    pub fn provided(&self, c: CourseId) -> &[f64] {
        let o = self.provided_offset(c);
        &self.values[o..o + self.d]
    }

    pub fn required(&self, c: CourseId) -> &[f64] {
        let o = self.required_offset(c);
        &self.values[o..o + self.d]
    }

    /// Per-prior coefficient on `p_i`: decay times grade, divided by the
    /// prior count under mean pooling.
    fn coefficient(&self, prior: &Prior, count: usize) -> f64 {
        let w = decay(prior.term_offset, self.lambda) * prior.relative_grade;
        match self.pooling {
            Pooling::Sum => w,
            Pooling::Avg => w / count as f64,
        }
    }

    pub fn knowledge_state(&self, priors: &[Prior]) -> Result<Vec<f64>> {
        if priors.is_empty() {
            return Err(Error::Empty("knowledge state needs at least one prior"));
        }
        Ok(self.knowledge_state_unchecked(priors))
    }

    fn knowledge_state_unchecked(&self, priors: &[Prior]) -> Vec<f64> {
        let mut k = vec![0.0; self.d];
        for prior in priors {
            let coef = self.coefficient(prior, priors.len());
            for (kv, pv) in k.iter_mut().zip(self.provided(prior.course)) {
                *kv += coef * pv;
            }
        }
        k
    }
}

impl GradeModel for KrmParams {
    fn predict(&self, instance: &PredictionInstance) -> f64 {
        let j = instance.target_course;
        let k = self.knowledge_state_unchecked(&instance.priors);
        self.course_bias(j) + dot(&k, self.required(j))
    }

    fn accumulate_gradient(&self, instance: &PredictionInstance, residual: f64, scale: f64, grad: &mut SparseGrad) {
        let c = residual * scale;
        let j = instance.target_course;
        grad.add(self.course_bias_offset(j), c);
        let k = self.knowledge_state_unchecked(&instance.priors);
        grad.add_scaled(self.required_offset(j), &k, c);
        let r = self.required(j);
        for prior in &instance.priors {
            let coef = self.coefficient(prior, instance.priors.len());
            grad.add_scaled(self.provided_offset(prior.course), r, c * coef);
        }
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
