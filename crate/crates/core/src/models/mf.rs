use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, fill_uniform, init_range, GradeModel, SparseGrad};
use crate::dataset::PredictionInstance;
use crate::ids::{CourseId, StudentId};

/// Biased matrix factorization: `mu + sb_s + cb_i + u_s . v_i`.
///
/// Layout: `[mu | student bias (m) | course bias (n) | student vecs (m*d) | course vecs (n*d)]`.
/// Students never seen in training predict with zero bias and a zero vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfParams {
    n_students: usize,
    n_courses: usize,
    d: usize,
    seen: Vec<bool>,
    values: Vec<f64>,
}

impl MfParams {
    pub(crate) fn init(
        n_students: usize,
        n_courses: usize,
        d: usize,
        train: &[PredictionInstance],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut p = MfParams::zeros(n_students, n_courses, d);
        for inst in train {
            if let Some(s) = p.seen.get_mut(inst.student.index()) {
                *s = true;
            }
        }
        let start = p.student_vec_offset(StudentId(0));
        fill_uniform(&mut p.values[start..], init_range(d), rng);
        p
    }

    /// All parameters zero, every student marked seen.
    pub fn zeros(n_students: usize, n_courses: usize, d: usize) -> Self {
        MfParams {
            n_students,
            n_courses,
            d,
            seen: vec![false; n_students],
            values: vec![0.0; 1 + n_students + n_courses + (n_students + n_courses) * d],
        }
    }

    pub fn n_students(&self) -> usize {
        self.n_students
    }

    pub fn n_courses(&self) -> usize {
        self.n_courses
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_seen(&self, s: StudentId) -> bool {
        self.seen[s.index()]
    }

    pub fn set_seen(&mut self, s: StudentId, seen: bool) {
        self.seen[s.index()] = seen;
    }

    pub const MU: usize = 0;

    pub fn student_bias_offset(&self, s: StudentId) -> usize {
        1 + s.index()
    }

    pub fn course_bias_offset(&self, c: CourseId) -> usize {
        1 + self.n_students + c.index()
    }

    pub fn student_vec_offset(&self, s: StudentId) -> usize {
        1 + self.n_students + self.n_courses + s.index() * self.d
    }

    pub fn course_vec_offset(&self, c: CourseId) -> usize {
        1 + self.n_students + self.n_courses + (self.n_students + c.index()) * self.d
    }

    pub fn mu(&self) -> f64 {
        self.values[Self::MU]
    }

    pub fn student_bias(&self, s: StudentId) -> f64 {
        self.values[self.student_bias_offset(s)]
    }

    pub fn course_bias(&self, c: CourseId) -> f64 {
        self.values[self.course_bias_offset(c)]
    }

    pub fn student_vec(&self, s: StudentId) -> &[f64] {
        let o = self.student_vec_offset(s);
        &self.values[o..o + self.d]
    }

    pub fn course_vec(&self, c: CourseId) -> &[f64] {
        let o = self.course_vec_offset(c);
        &self.values[o..o + self.d]
    }

    pub fn predict_pair(&self, s: StudentId, c: CourseId) -> f64 {
        let base = self.mu() + self.course_bias(c);
        if self.is_seen(s) {
            base + self.student_bias(s) + dot(self.student_vec(s), self.course_vec(c))
        } else {
            base
        }
    }
}

impl GradeModel for MfParams {
    fn predict(&self, instance: &PredictionInstance) -> f64 {
        self.predict_pair(instance.student, instance.target_course)
    }

    fn accumulate_gradient(&self, instance: &PredictionInstance, residual: f64, scale: f64, grad: &mut SparseGrad) {
        let c = residual * scale;
        let (s, i) = (instance.student, instance.target_course);
        grad.add(Self::MU, c);
        grad.add(self.course_bias_offset(i), c);
        if self.is_seen(s) {
            grad.add(self.student_bias_offset(s), c);
            grad.add_scaled(self.student_vec_offset(s), self.course_vec(i), c);
            grad.add_scaled(self.course_vec_offset(i), self.student_vec(s), c);
        }
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
