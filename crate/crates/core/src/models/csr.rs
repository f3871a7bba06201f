use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{GradeModel, SparseGrad};
use crate::dataset::PredictionInstance;
use crate::ids::CourseId;

/// Course-specific regression: `cb_j + sum_i w_{i,j} g_i` over the priors
/// that have a learned weight for target `j`.
///
/// Weights exist only for (prior, target) pairs co-observed in training.
/// Targets with no training instances predict the global training mean.
/// Layout: `[course bias (n) | pair weights (pairs.len())]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "CsrRepr", into = "CsrRepr")]
pub struct CsrParams {
    n_courses: usize,
    global_mean: f64,
    trained_targets: Vec<bool>,
    /// Sorted (prior, target) pairs; pair `k` lives at `n_courses + k`.
    pairs: Vec<(CourseId, CourseId)>,
    index: HashMap<(CourseId, CourseId), usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CsrRepr {
    n_courses: usize,
    global_mean: f64,
    trained_targets: Vec<bool>,
    pairs: Vec<(CourseId, CourseId)>,
    values: Vec<f64>,
}

impl From<CsrRepr> for CsrParams {
    fn from(r: CsrRepr) -> Self {
        CsrParams::from_parts(r.n_courses, r.global_mean, r.trained_targets, r.pairs, r.values)
    }
}

impl From<CsrParams> for CsrRepr {
    fn from(p: CsrParams) -> Self {
        CsrRepr {
            n_courses: p.n_courses,
            global_mean: p.global_mean,
            trained_targets: p.trained_targets,
            pairs: p.pairs,
            values: p.values,
        }
    }
}

impl CsrParams {
    /// Zero-initialized weights for every pair co-observed in `train`.
    pub fn init(n_courses: usize, train: &[PredictionInstance]) -> Self {
        let mut pairs = BTreeSet::new();
        let mut trained_targets = vec![false; n_courses];
        let mut sum = 0.0;
        for inst in train {
            trained_targets[inst.target_course.index()] = true;
            sum += inst.target_relative_grade;
            for p in &inst.priors {
                pairs.insert((p.course, inst.target_course));
            }
        }
        let global_mean = if train.is_empty() { 0.0 } else { sum / train.len() as f64 };
        let pairs: Vec<_> = pairs.into_iter().collect();
        let values = vec![0.0; n_courses + pairs.len()];
        CsrParams::from_parts(n_courses, global_mean, trained_targets, pairs, values)
    }

    fn from_parts(
        n_courses: usize,
        global_mean: f64,
        trained_targets: Vec<bool>,
        pairs: Vec<(CourseId, CourseId)>,
        values: Vec<f64>,
    ) -> Self {
        let index = pairs.iter().enumerate().map(|(k, &p)| (p, n_courses + k)).collect();
        CsrParams {
            n_courses,
            global_mean,
            trained_targets,
            pairs,
            index,
            values,
        }
    }

    pub fn n_courses(&self) -> usize {
        self.n_courses
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn pairs(&self) -> &[(CourseId, CourseId)] {
        &self.pairs
    }

    pub fn course_bias_offset(&self, c: CourseId) -> usize {
        c.index()
    }

    pub fn weight_offset(&self, prior: CourseId, target: CourseId) -> Option<usize> {
        self.index.get(&(prior, target)).copied()
    }

    pub fn weight(&self, prior: CourseId, target: CourseId) -> Option<f64> {
        self.weight_offset(prior, target).map(|o| self.values[o])
    }

    pub fn is_trained_target(&self, c: CourseId) -> bool {
        self.trained_targets[c.index()]
    }
}

impl GradeModel for CsrParams {
    fn predict(&self, instance: &PredictionInstance) -> f64 {
        let j = instance.target_course;
        if !self.is_trained_target(j) {
            return self.global_mean;
        }
        let mut out = self.values[self.course_bias_offset(j)];
        for p in &instance.priors {
            if let Some(o) = self.weight_offset(p.course, j) {
                out += self.values[o] * p.relative_grade;
            }
        }
        out
    }

    fn accumulate_gradient(&self, instance: &PredictionInstance, residual: f64, scale: f64, grad: &mut SparseGrad) {
        let j = instance.target_course;
        if !self.is_trained_target(j) {
            return;
        }
        let c = residual * scale;
        grad.add(self.course_bias_offset(j), c);
        for p in &instance.priors {
            if let Some(o) = self.weight_offset(p.course, j) {
                grad.add(o, c * p.relative_grade);
            }
        }
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
