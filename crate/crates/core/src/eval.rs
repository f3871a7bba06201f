//! Error metrics and evaluation reports.
//!
//! RMSE is computed on relative grades. Tick accuracy (PTA) first rebuilds
//! absolute grades by adding each instance's prior mean back, snaps both the
//! prediction and the actual grade to the nearest letter, and counts how many
//! letters apart they are.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::PredictionInstance;
use crate::error::{Error, Result};
use crate::grades::GradeScale;
use crate::ids::{CourseId, Interner, StudentId};
use crate::models::GradeModel;

/// One prediction with what is needed to put it back on the absolute scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionPair {
    pub predicted: f64,
    pub actual: f64,
    pub prior_mean: f64,
}

/// Percentages of predictions within 0, 1, and 2 ticks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickAccuracy {
    pub pta0: f64,
    pub pta1: f64,
    pub pta2: f64,
}

pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("rmse over zero predictions"));
    }
    let sq: f64 = pairs.iter().map(|(p, a)| (p - a).powi(2)).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// Letter-grade tick error of one prediction.
pub fn tick_error(pair: &PredictionPair, scale: &GradeScale) -> usize {
    let predicted = scale.nearest_index(pair.predicted + pair.prior_mean);
    let actual = scale.nearest_index(pair.actual + pair.prior_mean);
    predicted.abs_diff(actual)
}

pub fn pta(pairs: &[PredictionPair], scale: &GradeScale) -> Result<TickAccuracy> {
    if pairs.is_empty() {
        return Err(Error::Empty("tick accuracy over zero predictions"));
    }
    let mut within = [0usize; 3];
    for pair in pairs {
        let ticks = tick_error(pair, scale);
        for (k, slot) in within.iter_mut().enumerate() {
            if ticks <= k {
                *slot += 1;
            }
        }
    }
    let pct = |c: usize| 100.0 * c as f64 / pairs.len() as f64;
    Ok(TickAccuracy {
        pta0: pct(within[0]),
        pta1: pct(within[1]),
        pta2: pct(within[2]),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub student: StudentId,
    pub course: CourseId,
    pub predicted: f64,
    pub actual: f64,
    pub predicted_letter: String,
    pub actual_letter: String,
    pub tick_error: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub n: usize,
    pub rmse: f64,
    pub pta: TickAccuracy,
    pub rows: Vec<ResidualRow>,
}

impl EvalReport {
    pub fn squared_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| (r.predicted - r.actual).powi(2)).collect()
    }

    /// Key-value header followed by per-instance rows.
    pub fn to_text(&self, students: &Interner, courses: &Interner) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model={}", self.model);
        let _ = writeln!(out, "n={}", self.n);
        let _ = writeln!(out, "rmse={}", self.rmse);
        let _ = writeln!(out, "pta0={}", self.pta.pta0);
        let _ = writeln!(out, "pta1={}", self.pta.pta1);
        let _ = writeln!(out, "pta2={}", self.pta.pta2);
        out.push('\n');
        out.push_str("student,course,predicted,actual,predicted_letter,actual_letter,tick_error\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                students.name(r.student.0),
                courses.name(r.course.0),
                r.predicted,
                r.actual,
                r.predicted_letter,
                r.actual_letter,
                r.tick_error
            );
        }
        out
    }
}

/// Scores `model` on `instances`, which must already be in the grade space
/// the model was trained in.
pub fn evaluate<M: GradeModel + ?Sized>(
    label: &str,
    model: &M,
    instances: &[PredictionInstance],
    scale: &GradeScale,
) -> Result<EvalReport> {
    let pairs: Vec<PredictionPair> = instances
        .iter()
        .map(|i| PredictionPair {
            predicted: model.predict(i),
            actual: i.target_relative_grade,
            prior_mean: i.prior_mean,
        })
        .collect();
    let plain: Vec<(f64, f64)> = pairs.iter().map(|p| (p.predicted, p.actual)).collect();
    let rmse = rmse(&plain)?;
    let pta = pta(&pairs, scale)?;
    let rows = instances
        .iter()
        .zip(&pairs)
        .map(|(i, p)| ResidualRow {
            student: i.student,
            course: i.target_course,
            predicted: p.predicted,
            actual: p.actual,
            predicted_letter: scale.nearest_letter(p.predicted + p.prior_mean).to_string(),
            actual_letter: scale.nearest_letter(p.actual + p.prior_mean).to_string(),
            tick_error: tick_error(p, scale),
        })
        .collect();
    Ok(EvalReport {
        model: label.to_string(),
        n: instances.len(),
        rmse,
        pta,
        rows,
    })
}

/// Human-readable table with columns Model, RMSE, PTA0, PTA1, PTA2.
pub fn summary_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.model.len()).max().unwrap_or(0).max(5);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>5}  {:>5}  {:>5}\n",
        "Model", "RMSE", "PTA0", "PTA1", "PTA2"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6.3}  {:>5.1}  {:>5.1}  {:>5.1}",
            r.model, r.rmse, r.pta.pta0, r.pta.pta1, r.pta.pta2
        );
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
}

/// Student's paired t-test on per-instance values (typically squared errors
/// of two models on the same instances).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Empty("paired t-test needs at least two pairs"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let (t, p_value) = if se == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / se;
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Parameter(e.to_string()))?;
        (t, 2.0 * (1.0 - dist.cdf(t.abs())))
    };
    Ok(PairedTTest {
        n,
        mean_difference: mean,
        t,
        df,
        p_value,
    })
}
