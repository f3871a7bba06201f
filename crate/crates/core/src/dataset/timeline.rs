use serde::{Deserialize, Serialize};

use super::ingest::GradeRecord;
use crate::error::{Error, Result};
use crate::ids::{CourseId, StudentId, Term};

/// Relative grade used when a grade equals the student's prior average, and
/// for first-term courses, which have no prior average.
pub const RELATIVE_FALLBACK: f64 = 0.01;

/// Differences smaller than this count as zero when row-centering.
const ZERO_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Enrollment {
    pub course: CourseId,
    pub raw_grade: f64,
    pub relative_grade: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermGroup {
    /// Term number relative to the student, starting at 1.
    pub index: u32,
    pub term: Term,
    /// Mean raw grade over all earlier terms; `None` for the first term.
    pub prior_mean: Option<f64>,
    pub courses: Vec<Enrollment>,
}

/// A student's term-ordered course history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentTimeline {
    pub student: StudentId,
    pub terms: Vec<TermGroup>,
}

/// One course in an instance's history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub course: CourseId,
    pub relative_grade: f64,
    pub raw_grade: f64,
    /// Terms elapsed between this course and the target, minus one.
    pub term_offset: u32,
}

/// A target course together with everything the student took before it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionInstance {
    pub student: StudentId,
    pub target_course: CourseId,
    /// Relative term index of the target.
    pub target_term: u32,
    pub calendar_term: Term,
    pub target_relative_grade: f64,
    pub target_raw_grade: f64,
    /// Offset that turns a relative grade back into a raw one.
    ///
    /// This is the mean raw grade before the target term, except where the
    /// zero fallback fired; there it absorbs the fallback so that
    /// `target_relative_grade + prior_mean` gives back `target_raw_grade`,
    /// exactly whenever floating point allows it.
    pub prior_mean: f64,
    pub priors: Vec<Prior>,
}

impl PredictionInstance {
    /// Copy whose grades are the raw ones, for models that predict actual
    /// grades rather than row-centered ones.
    pub fn to_raw_space(&self) -> PredictionInstance {
        let mut out = self.clone();
        out.target_relative_grade = self.target_raw_grade;
        out.prior_mean = 0.0;
        for p in &mut out.priors {
            p.relative_grade = p.raw_grade;
        }
        out
    }
}

/// Groups records into per-student timelines (raw grades only; relative
/// grades are filled by [`row_center`]). Returns one timeline per student
/// handle `0..n_students`, possibly empty.
pub fn build_timelines(records: &[GradeRecord], n_students: usize) -> Result<Vec<StudentTimeline>> {
    let mut per_student: Vec<Vec<&GradeRecord>> = vec![Vec::new(); n_students];
    for r in records {
        per_student
            .get_mut(r.student.index())
            .ok_or(Error::Dimension {
                expected: n_students,
                got: r.student.index() + 1,
            })?
            .push(r);
    }
    per_student
        .into_iter()
        .enumerate()
        .map(|(s, mut recs)| {
            recs.sort_by(|a, b| a.term.cmp(&b.term).then(a.course.cmp(&b.course)));
            let mut terms: Vec<TermGroup> = Vec::new();
            for r in recs {
                match terms.last_mut() {
                    Some(group) if group.term == r.term => {
                        if group.courses.iter().any(|e| e.course == r.course) {
                            return Err(Error::Parameter(format!(
                                "student {s} has course {} twice in term {}",
                                r.course.0, r.term
                            )));
                        }
                        group.courses.push(Enrollment {
                            course: r.course,
                            raw_grade: r.grade_points,
                            relative_grade: r.grade_points,
                        });
                    }
                    _ => terms.push(TermGroup {
                        index: terms.len() as u32 + 1,
                        term: r.term,
                        prior_mean: None,
                        courses: vec![Enrollment {
                            course: r.course,
                            raw_grade: r.grade_points,
                            relative_grade: r.grade_points,
                        }],
                    }),
                }
            }
            Ok(StudentTimeline {
                student: StudentId(s as u32),
                terms,
            })
        })
        .collect()
}

/// Replaces every grade with its deviation from the student's mean grade over
/// all earlier terms. Zero deviations and first-term courses get
/// [`RELATIVE_FALLBACK`] so they still carry weight as priors.
pub fn row_center(timeline: &StudentTimeline) -> StudentTimeline {
    let mut sum = 0.0;
    let mut count = 0usize;
    let terms = timeline
        .terms
        .iter()
        .map(|group| {
            let prior_mean = (count > 0).then(|| sum / count as f64);
            let courses = group
                .courses
                .iter()
                .map(|e| {
                    let relative = match prior_mean {
                        Some(mean) => {
                            let diff = e.raw_grade - mean;
                            if diff.abs() < ZERO_TOLERANCE {
                                RELATIVE_FALLBACK
                            } else {
                                diff
                            }
                        }
                        None => RELATIVE_FALLBACK,
                    };
                    Enrollment {
                        relative_grade: relative,
                        ..*e
                    }
                })
                .collect();
            for e in &group.courses {
                sum += e.raw_grade;
                count += 1;
            }
            TermGroup {
                index: group.index,
                term: group.term,
                prior_mean,
                courses,
            }
        })
        .collect();
    StudentTimeline {
        student: timeline.student,
        terms,
    }
}

/// An `x` with `relative + x == raw` in floating point where one exists.
/// The plain difference can be off by an ulp; when `relative` and `x` are both
/// coarser-grained than `raw` no exact `x` exists and the result is within an
/// ulp of `x`'s magnitude.
fn exact_offset(relative: f64, raw: f64) -> f64 {
    let mut x = raw - relative;
    for _ in 0..8 {
        let sum = relative + x;
        if sum == raw {
            break;
        }
        x = if sum < raw { x.next_up() } else { x.next_down() };
    }
    x
}

/// One instance per course taken, with every strictly earlier course as a prior.
/// Expects row-centered timelines.
pub fn build_instances(timeline: &StudentTimeline) -> Vec<PredictionInstance> {
    let mut out = Vec::new();
    for (t, group) in timeline.terms.iter().enumerate() {
        let priors: Vec<Prior> = timeline.terms[..t]
            .iter()
            .enumerate()
            .flat_map(|(w, earlier)| {
                let offset = (t - w - 1) as u32;
                earlier.courses.iter().map(move |e| Prior {
                    course: e.course,
                    relative_grade: e.relative_grade,
                    raw_grade: e.raw_grade,
                    term_offset: offset,
                })
            })
            .collect();
        for e in &group.courses {
            out.push(PredictionInstance {
                student: timeline.student,
                target_course: e.course,
                target_term: group.index,
                calendar_term: group.term,
                target_relative_grade: e.relative_grade,
                target_raw_grade: e.raw_grade,
                prior_mean: exact_offset(e.relative_grade, e.raw_grade),
                priors: priors.clone(),
            });
        }
    }
    out
}
