use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dot, fill_uniform, init_range, GradeModel, SparseGrad};
use crate::activations::{Activation, ProbVector};
use crate::dataset::{PredictionInstance, Prior};
use crate::ids::CourseId;

/// Neural attentive knowledge model.
///
/// Each prior `i` contributes `q_i = g_i * p_i` to the knowledge state with an
/// attention weight computed from the target's required vector `r_j`:
///
/// ```text
/// z_i = h . relu(W (q_i * r_j) + b)        (elementwise product inside)
/// a   = activation(z)                       (softmax or sparsegen)
/// k   = sum_i a_i q_i
/// g^  = cb_j + k . r_j
/// ```
///
/// Attention is normalized over the flattened list of all prior courses.
/// Layout: `[course bias (n) | provided (n*d) | required (n*d) | W (l*d, row-major) | b (l) | h (l)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NakParams {
    n_courses: usize,
    d: usize,
    l: usize,
    pub activation: Activation,
    values: Vec<f64>,
}

/// Intermediate values of one forward pass, reused by the backward pass.
#[derive(Clone, Debug)]
pub struct NakForward {
    /// `g_i * (p_i . r_j)` per prior.
    pub contributions: Vec<f64>,
    /// Hidden pre-activations, `l` per prior.
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub attention: ProbVector,
    pub prediction: f64,
}

impl NakParams {
    pub(crate) fn init(n_courses: usize, d: usize, l: usize, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let mut p = NakParams::zeros(n_courses, d, l, activation);
        let range = init_range(d);
        let (emb, w) = (p.provided_offset(CourseId(0)), p.w_offset());
        fill_uniform(&mut p.values[emb..w + l * d], range, rng);
        let h = p.h_offset();
        fill_uniform(&mut p.values[h..h + l], range, rng);
        p
    }

    pub fn zeros(n_courses: usize, d: usize, l: usize, activation: Activation) -> Self {
        NakParams {
            n_courses,
            d,
            l,
            activation,
            values: vec![0.0; n_courses * (1 + 2 * d) + l * d + 2 * l],
        }
    }

    pub fn n_courses(&self) -> usize {
        self.n_courses
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn hidden_dim(&self) -> usize {
        self.l
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

    pub fn w_offset(&self) -> usize {
        self.n_courses * (1 + 2 * self.d)
    }

    pub fn b_offset(&self) -> usize {
        self.w_offset() + self.l * self.d
    }

    pub fn h_offset(&self) -> usize {
        self.b_offset() + self.l
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

    /// Row `k` of `W`.
    pub fn w_row(&self, k: usize) -> &[f64] {
        let o = self.w_offset() + k * self.d;
        &self.values[o..o + self.d]
    }

    pub fn b(&self) -> &[f64] {
        let o = self.b_offset();
        &self.values[o..o + self.l]
    }

    pub fn h(&self) -> &[f64] {
        let o = self.h_offset();
        &self.values[o..o + self.l]
    }

    /// Writes the hidden pre-activations `W (q_i * r_j) + b` into `out` and
    /// returns the logit.
    fn logit_into(&self, prior: &Prior, r: &[f64], out: &mut [f64]) -> f64 {
        let p = self.provided(prior.course);
        let g = prior.relative_grade;
        let b = self.b();
        let h = self.h();
        let mut z = 0.0;
        for (k, slot) in out.iter_mut().enumerate() {
            let row = self.w_row(k);
            let mut pre = b[k];
            for m in 0..self.d {
                pre += row[m] * g * p[m] * r[m];
            }
            *slot = pre;
            if pre > 0.0 {
                z += h[k] * pre;
            }
        }
        z
    }

    /// One logit per prior.
    pub fn attention_logits(&self, instance: &PredictionInstance) -> Vec<f64> {
        let r = self.required(instance.target_course);
        let mut scratch = vec![0.0; self.l];
        instance
            .priors
            .iter()
            .map(|p| self.logit_into(p, r, &mut scratch))
            .collect()
    }

    pub fn forward(&self, instance: &PredictionInstance) -> NakForward {
        let j = instance.target_course;
        let r = self.required(j);
        let n = instance.priors.len();
        let mut hidden = vec![0.0; n * self.l];
        let mut logits = Vec::with_capacity(n);
        let mut contributions = Vec::with_capacity(n);
        for (i, prior) in instance.priors.iter().enumerate() {
            let slot = &mut hidden[i * self.l..(i + 1) * self.l];
            logits.push(self.logit_into(prior, r, slot));
            contributions.push(prior.relative_grade * dot(self.provided(prior.course), r));
        }
        let attention = self.activation.forward(&logits);
        let prediction = self.course_bias(j) + dot(attention.values(), &contributions);
        NakForward {
            contributions,
            hidden,
            logits,
            attention,
            prediction,
        }
    }

    /// Knowledge state `sum_i a_i g_i p_i` and the attention that built it.
    pub fn knowledge_state(&self, instance: &PredictionInstance) -> (Vec<f64>, ProbVector) {
        let attention = self.activation.forward(&self.attention_logits(instance));
        let k = self.pooled_state(&instance.priors, attention.values());
        (k, attention)
    }

    fn pooled_state(&self, priors: &[Prior], weights: &[f64]) -> Vec<f64> {
        let mut k = vec![0.0; self.d];
        for (prior, &a) in priors.iter().zip(weights) {
            let coef = a * prior.relative_grade;
            for (kv, pv) in k.iter_mut().zip(self.provided(prior.course)) {
                *kv += coef * pv;
            }
        }
        k
    }

    /// Prediction with externally supplied attention weights (one per prior).
    pub fn predict_with_attention(&self, instance: &PredictionInstance, weights: &[f64]) -> f64 {
        let j = instance.target_course;
        let k = self.pooled_state(&instance.priors, weights);
        self.course_bias(j) + dot(&k, self.required(j))
    }
}

impl GradeModel for NakParams {
    fn predict(&self, instance: &PredictionInstance) -> f64 {
        self.forward(instance).prediction
    }

    fn accumulate_gradient(&self, instance: &PredictionInstance, residual: f64, scale: f64, grad: &mut SparseGrad) {
        let c = residual * scale;
        let j = instance.target_course;
        let fwd = self.forward(instance);
        let (d, l) = (self.d, self.l);
        let r = self.required(j);
        let a = fwd.attention.values();

        grad.add(self.course_bias_offset(j), c);

        let upstream: Vec<f64> = fwd.contributions.iter().map(|&s| c * s).collect();
        let dz = self
            .activation
            .backward(&fwd.attention, &upstream)
            .expect("attention and upstream have one entry per prior");

        let h = self.h();
        let (w_off, b_off, h_off) = (self.w_offset(), self.b_offset(), self.h_offset());
        let mut dr = vec![0.0; d];
        let mut dp = vec![0.0; d];
        let mut dx = vec![0.0; d];
        let mut dpre = vec![0.0; l];
        for (i, prior) in instance.priors.iter().enumerate() {
            let g = prior.relative_grade;
            let p = self.provided(prior.course);
            // Direct path through the knowledge state.
            let direct = c * a[i] * g;
            for m in 0..d {
                dp[m] = direct * r[m];
                dr[m] += direct * p[m];
            }
            // Path through the attention logit.
            if dz[i] != 0.0 {
                let pre = &fwd.hidden[i * l..(i + 1) * l];
                for k in 0..l {
                    if pre[k] > 0.0 {
                        grad.add(h_off + k, dz[i] * pre[k]);
                        dpre[k] = dz[i] * h[k];
                    } else {
                        dpre[k] = 0.0;
                    }
                }
                dx.iter_mut().for_each(|v| *v = 0.0);
                for k in 0..l {
                    if dpre[k] == 0.0 {
                        continue;
                    }
                    grad.add(b_off + k, dpre[k]);
                    let row = self.w_row(k);
                    for m in 0..d {
                        let x = g * p[m] * r[m];
                        grad.add(w_off + k * d + m, dpre[k] * x);
                        dx[m] += row[m] * dpre[k];
                    }
                }
                for m in 0..d {
                    dp[m] += g * dx[m] * r[m];
                    dr[m] += g * dx[m] * p[m];
                }
            }
            grad.add_scaled(self.provided_offset(prior.course), &dp, 1.0);
        }
        grad.add_scaled(self.required_offset(j), &dr, 1.0);
    }

    fn values(&self) -> &[f64] {
        &self.values
    }

    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}
