use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grades::GradeScale;
use crate::ids::{CourseId, Interner, StudentId, Term};

pub const HEADER: &str = "student_id,course_id,term,grade";

/// Grade tokens that carry no point value (pass/fail, withdrawn, incomplete).
/// Rows with these are dropped and counted, unless the scale defines the token.
const UNGRADED_TOKENS: [&str; 6] = ["S", "N", "P", "NP", "W", "I"];

/// One observed grade.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub student: StudentId,
    pub course: CourseId,
    pub term: Term,
    pub grade_points: f64,
}

/// The output of ingestion: records plus the id tables they refer to.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Records {
    pub records: Vec<GradeRecord>,
    pub students: Interner,
    pub courses: Interner,
    /// Rows skipped because their grade was pass/fail or otherwise ungraded.
    pub dropped: usize,
}

struct RawRow<'a> {
    line: usize,
    student: &'a str,
    course: &'a str,
    term: Term,
    points: f64,
}

pub fn load_records(path: impl AsRef<Path>, scale: &GradeScale) -> Result<Records> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, scale)
}

/// Parses records, assigning fresh sorted handles for students and courses.
pub fn parse_records(text: &str, scale: &GradeScale) -> Result<Records> {
    let (rows, dropped) = parse_rows(text, scale)?;
    let students = Interner::from_names(rows.iter().map(|r| r.student));
    let courses = Interner::from_names(rows.iter().map(|r| r.course));
    let records = resolve(&rows, &students, &courses)?;
    Ok(Records {
        records,
        students,
        courses,
        dropped,
    })
}

/// Parses records against existing id tables; unknown names are errors.
pub fn parse_records_with(
    text: &str,
    scale: &GradeScale,
    students: &Interner,
    courses: &Interner,
) -> Result<Records> {
    let (rows, dropped) = parse_rows(text, scale)?;
    let records = resolve(&rows, students, courses)?;
    Ok(Records {
        records,
        students: students.clone(),
        courses: courses.clone(),
        dropped,
    })
}

fn resolve(rows: &[RawRow<'_>], students: &Interner, courses: &Interner) -> Result<Vec<GradeRecord>> {
    rows.iter()
        .map(|r| {
            let student = students.get(r.student).ok_or_else(|| Error::Ingest {
                line: r.line,
                message: format!("unknown student `{}`", r.student),
            })?;
            let course = courses.get(r.course).ok_or_else(|| Error::Ingest {
                line: r.line,
                message: format!("unknown course `{}`", r.course),
            })?;
            Ok(GradeRecord {
                student: StudentId(student),
                course: CourseId(course),
                term: r.term,
                grade_points: r.points,
            })
        })
        .collect()
}

fn parse_rows<'a>(text: &'a str, scale: &GradeScale) -> Result<(Vec<RawRow<'a>>, usize)> {
    let mut rows = Vec::new();
    let mut dropped = 0;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        None => return Ok((rows, 0)),
        Some((_, header)) => {
            let normalized: String = header.trim().split(',').map(str::trim).collect::<Vec<_>>().join(",");
            if !normalized.eq_ignore_ascii_case(HEADER) {
                return Err(Error::Ingest {
                    line: 1,
                    message: format!("expected header `{HEADER}`"),
                });
            }
        }
    }
    for (n, line) in lines {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim().trim_matches('"')).collect();
        if fields.len() != 4 {
            return Err(Error::Ingest {
                line: line_no,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Ingest {
                line: line_no,
                message: "empty student or course id".into(),
            });
        }
        let term: Term = fields[2].parse().map_err(|e: Error| Error::Ingest {
            line: line_no,
            message: e.to_string(),
        })?;
        let token = fields[3];
        let points = match grade_points(token, scale) {
            GradeToken::Points(p) => p,
            GradeToken::Ungraded => {
                dropped += 1;
                continue;
            }
            GradeToken::Invalid(message) => {
                return Err(Error::Ingest {
                    line: line_no,
                    message,
                })
            }
        };
        rows.push(RawRow {
            line: line_no,
            student: fields[0],
            course: fields[1],
            term,
            points,
        });
    }
    Ok((rows, dropped))
}

enum GradeToken {
    Points(f64),
    Ungraded,
    Invalid(String),
}

fn grade_points(token: &str, scale: &GradeScale) -> GradeToken {
    if let Ok(p) = scale.letter_to_points(token) {
        return GradeToken::Points(p);
    }
    if let Ok(p) = token.parse::<f64>() {
        let low = scale.entries().last().map_or(0.0, |e| e.points);
        return if p.is_finite() && p >= low && p <= scale.max_points() {
            GradeToken::Points(scale.snap(p))
        } else {
            GradeToken::Invalid(format!("grade {token} outside [{low}, {}]", scale.max_points()))
        };
    }
    if UNGRADED_TOKENS.iter().any(|t| t.eq_ignore_ascii_case(token)) {
        return GradeToken::Ungraded;
    }
    GradeToken::Invalid(Error::UnknownLetter(token.to_string()).to_string())
}

/// Serializes records in the ingestion format.
pub fn write_records<'a>(
    records: impl IntoIterator<Item = &'a GradeRecord>,
    students: &Interner,
    courses: &Interner,
) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            students.name(r.student.0),
            courses.name(r.course.0),
            r.term,
            r.grade_points
        ));
    }
    out
}
