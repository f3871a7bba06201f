//! Per-target attention tables for a student.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_instances, PredictionInstance, Prior, StudentTimeline};
use crate::ids::{CourseId, Interner};
use crate::models::{GradeModel, NakParams};

/// Attention weights below this are left out of printed tables.
pub const DISPLAY_FLOOR: f64 = 1e-4;

/// The instance for `target` in the student's history: the latest time they
/// took it, or, if they never did, a hypothetical enrollment in the term
/// after their last one with every course so far as a prior.
///
/// Hypothetical instances carry `NaN` target grades.
pub fn instance_for_target(timeline: &StudentTimeline, target: CourseId) -> PredictionInstance {
    if let Some(inst) = build_instances(timeline)
        .into_iter()
        .rev()
        .find(|i| i.target_course == target)
    {
        return inst;
    }
    let n = timeline.terms.len();
    let priors: Vec<Prior> = timeline
        .terms
        .iter()
        .enumerate()
        .flat_map(|(w, group)| {
            group.courses.iter().map(move |e| Prior {
                course: e.course,
                relative_grade: e.relative_grade,
                raw_grade: e.raw_grade,
                term_offset: (n - w - 1) as u32,
            })
        })
        .collect();
    let prior_mean = if priors.is_empty() {
        0.0
    } else {
        priors.iter().map(|p| p.raw_grade).sum::<f64>() / priors.len() as f64
    };
    let last = timeline.terms.last();
    PredictionInstance {
        student: timeline.student,
        target_course: target,
        target_term: last.map_or(1, |g| g.index + 1),
        calendar_term: last.map_or_else(|| "2000FA".parse().unwrap(), |g| g.term.next_regular()),
        target_relative_grade: f64::NAN,
        target_raw_grade: f64::NAN,
        prior_mean,
        priors,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub course: CourseId,
    pub term_offset: u32,
    /// The grade the model consumed for this prior.
    pub grade: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub target: CourseId,
    /// Absolute grade: the model output plus the instance's prior mean.
    pub predicted: f64,
    /// `None` when the student has not taken the target.
    pub actual: Option<f64>,
    pub attention_sum: f64,
    /// Every prior, by non-increasing weight.
    pub rows: Vec<AttentionRow>,
}

impl Explanation {
    /// Rows worth printing.
    pub fn shown(&self) -> impl Iterator<Item = &AttentionRow> {
        self.rows.iter().filter(|r| r.weight >= DISPLAY_FLOOR)
    }

    pub fn to_text(&self, courses: &Interner) -> String {
        let mut out = String::new();
        let actual = self.actual.map_or_else(|| "-".to_string(), |a| a.to_string());
        let _ = writeln!(
            out,
            "target={} predicted={} actual={} attention_sum={}",
            courses.name(self.target.0),
            self.predicted,
            actual,
            self.attention_sum
        );
        out.push_str("course,term_offset,grade,weight\n");
        for r in self.shown() {
            let _ = writeln!(
                out,
                "{},{},{:.3},{:.6}",
                courses.name(r.course.0),
                r.term_offset,
                r.grade,
                r.weight
            );
        }
        out
    }
}

/// Attention table for one instance, which must be in the model's grade space.
pub fn explain(params: &NakParams, instance: &PredictionInstance) -> Explanation {
    let (_, attention) = params.knowledge_state(instance);
    let mut rows: Vec<AttentionRow> = instance
        .priors
        .iter()
        .zip(attention.values())
        .map(|(p, &weight)| AttentionRow {
            course: p.course,
            term_offset: p.term_offset,
            grade: p.relative_grade,
            weight,
        })
        .collect();
    rows.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    let actual = instance.target_relative_grade + instance.prior_mean;
    Explanation {
        target: instance.target_course,
        predicted: params.predict(instance) + instance.prior_mean,
        actual: actual.is_finite().then_some(actual),
        attention_sum: attention.values().iter().sum(),
        rows,
    }
}
