use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::{parse_records_with, write_records, GradeRecord, Records};
use super::timeline::{build_instances, build_timelines, row_center, PredictionInstance, StudentTimeline};
use crate::error::{Error, Result};
use crate::grades::GradeScale;
use crate::ids::{CourseId, Interner, StudentId, Term};

/// Minimum number of prior courses for a validation or test target.
pub const MIN_EVAL_PRIORS: usize = 4;

/// Ingested records with their row-centered timelines.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<GradeRecord>,
    pub students: Interner,
    pub courses: Interner,
    pub dropped: usize,
    pub timelines: Vec<StudentTimeline>,
}

impl Dataset {
    pub fn from_records(records: Records) -> Result<Dataset> {
        let timelines = build_timelines(&records.records, records.students.len())?
            .iter()
            .map(row_center)
            .collect();
        Ok(Dataset {
            records: records.records,
            students: records.students,
            courses: records.courses,
            dropped: records.dropped,
            timelines,
        })
    }

    pub fn student(&self, name: &str) -> Result<StudentId> {
        self.students
            .get(name)
            .map(StudentId)
            .ok_or_else(|| Error::UnknownId {
                kind: "student",
                name: name.to_string(),
            })
    }

    pub fn course(&self, name: &str) -> Result<CourseId> {
        self.courses
            .get(name)
            .map(CourseId)
            .ok_or_else(|| Error::UnknownId {
                kind: "course",
                name: name.to_string(),
            })
    }
}

/// Inclusive calendar window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRange {
    pub start: Term,
    pub end: Term,
}

impl TermRange {
    pub fn new(start: Term, end: Term) -> Result<Self> {
        if start > end {
            return Err(Error::Parameter(format!("window {start}..{end} is reversed")));
        }
        Ok(TermRange { start, end })
    }

    pub fn contains(&self, term: Term) -> bool {
        self.start <= term && term <= self.end
    }
}

impl std::str::FromStr for TermRange {
    type Err = Error;

    /// Parses `START..END`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| Error::Parameter(format!("bad window `{s}` (expected START..END)")))?;
        TermRange::new(a.parse()?, b.parse()?)
    }
}

/// Calendar boundaries of a chronological split. Validation and test windows
/// may overlap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitWindows {
    pub train_end: Term,
    pub validation: TermRange,
    pub test: TermRange,
}

impl SplitWindows {
    pub fn new(train_end: Term, validation: TermRange, test: TermRange) -> Result<Self> {
        if validation.start <= train_end || test.start <= train_end {
            return Err(Error::Parameter(format!(
                "validation and test windows must start after the training end {train_end}"
            )));
        }
        Ok(SplitWindows {
            train_end,
            validation,
            test,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub records: usize,
    pub dropped_rows: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Evaluation targets removed for having fewer than four priors.
    pub excluded_few_priors: usize,
    /// Evaluation targets removed because the course never appears in training.
    pub excluded_unseen_course: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub windows: SplitWindows,
    pub train: Vec<PredictionInstance>,
    pub validation: Vec<PredictionInstance>,
    pub test: Vec<PredictionInstance>,
    /// Courses that are the target of at least one training instance.
    pub course_vocab: BTreeSet<CourseId>,
    pub students: Interner,
    pub courses: Interner,
    pub counts: SplitCounts,
}

impl Split {
    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_courses(&self) -> usize {
        self.courses.len()
    }
}

/// Assigns every instance to the splits whose window holds its target term.
///
/// Priors always include the student's full history before the target,
/// whatever window it falls in. Training targets need at least one prior;
/// evaluation targets need [`MIN_EVAL_PRIORS`] and a course seen as a training target.
pub fn chronological_split(data: &Dataset, windows: SplitWindows) -> Result<Split> {
    let instances: Vec<PredictionInstance> = data.timelines.iter().flat_map(build_instances).collect();
    let (train, validation, test, course_vocab, counts) = assign(&instances, &windows);
    if train.is_empty() {
        return Err(Error::Empty("training window holds no instances"));
    }
    Ok(Split {
        windows,
        train,
        validation,
        test,
        course_vocab,
        students: data.students.clone(),
        courses: data.courses.clone(),
        counts: SplitCounts {
            records: data.records.len(),
            dropped_rows: data.dropped,
            ..counts
        },
    })
}

type Assigned = (
    Vec<PredictionInstance>,
    Vec<PredictionInstance>,
    Vec<PredictionInstance>,
    BTreeSet<CourseId>,
    SplitCounts,
);

fn assign(instances: &[PredictionInstance], windows: &SplitWindows) -> Assigned {
    let train: Vec<PredictionInstance> = instances
        .iter()
        .filter(|i| i.calendar_term <= windows.train_end && !i.priors.is_empty())
        .cloned()
        .collect();
    let vocab: BTreeSet<CourseId> = train.iter().map(|i| i.target_course).collect();
    let mut counts = SplitCounts {
        train: train.len(),
        ..Default::default()
    };
    let mut pick = |range: &TermRange| -> Vec<PredictionInstance> {
        let mut out = Vec::new();
        for i in instances.iter().filter(|i| range.contains(i.calendar_term)) {
            if i.priors.len() < MIN_EVAL_PRIORS {
                counts.excluded_few_priors += 1;
            } else if !vocab.contains(&i.target_course) {
                counts.excluded_unseen_course += 1;
            } else {
                out.push(i.clone());
            }
        }
        out
    };
    let validation = pick(&windows.validation);
    let test = pick(&windows.test);
    counts.validation = validation.len();
    counts.test = test.len();
    (train, validation, test, vocab, counts)
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    windows: SplitWindows,
    counts: SplitCounts,
    scale: GradeScale,
    course_vocab: Vec<String>,
    students: Interner,
    courses: Interner,
}

const SPLIT_FILES: [&str; 3] = ["train.csv", "validation.csv", "test.csv"];
const MANIFEST: &str = "manifest.json";

/// Writes the split as three record files plus `manifest.json`.
///
/// Each file holds the complete history, up to the window's end, of every
/// student with at least one instance in that split, so the instances can be
/// rebuilt exactly from the file alone.
pub fn save_split(dir: impl AsRef<Path>, data: &Dataset, split: &Split, scale: &GradeScale) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ends = [
        split.windows.train_end,
        split.windows.validation.end,
        split.windows.test.end,
    ];
    let parts = [&split.train, &split.validation, &split.test];
    for ((name, end), part) in SPLIT_FILES.iter().zip(ends).zip(parts) {
        let students: BTreeSet<StudentId> = part.iter().map(|i| i.student).collect();
        let records = data
            .records
            .iter()
            .filter(|r| r.term <= end && students.contains(&r.student));
        let text = write_records(records, &data.students, &data.courses);
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = Manifest {
        windows: split.windows,
        counts: split.counts,
        scale: scale.clone(),
        course_vocab: split
            .course_vocab
            .iter()
            .map(|c| data.courses.name(c.0).to_string())
            .collect(),
        students: data.students.clone(),
        courses: data.courses.clone(),
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn read_part(dir: &Path, name: &str, manifest: &Manifest) -> Result<Dataset> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let records = parse_records_with(&text, &manifest.scale, &manifest.students, &manifest.courses)?;
    Dataset::from_records(records)
}

/// Rebuilds a split written by [`save_split`].
pub fn load_split(dir: impl AsRef<Path>) -> Result<Split> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let vocab: BTreeSet<CourseId> = manifest
        .course_vocab
        .iter()
        .map(|n| {
            manifest.courses.get(n).map(CourseId).ok_or_else(|| Error::UnknownId {
                kind: "course",
                name: n.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let w = manifest.windows;
    let mut parts: [Vec<PredictionInstance>; 3] = Default::default();
    for (k, name) in SPLIT_FILES.iter().enumerate() {
        let data = read_part(dir, name, &manifest)?;
        let keep = |i: &PredictionInstance| match k {
            0 => i.calendar_term <= w.train_end && !i.priors.is_empty(),
            1 | 2 => {
                let range = if k == 1 { w.validation } else { w.test };
                range.contains(i.calendar_term)
                    && i.priors.len() >= MIN_EVAL_PRIORS
                    && vocab.contains(&i.target_course)
            }
            _ => unreachable!(),
        };
        parts[k] = data.timelines.iter().flat_map(build_instances).filter(keep).collect();
    }
    let [train, validation, test] = parts;
    Ok(Split {
        windows: manifest.windows,
        train,
        validation,
        test,
        course_vocab: vocab,
        students: manifest.students,
        courses: manifest.courses,
        counts: manifest.counts,
    })
}

pub fn load_split_scale(dir: impl AsRef<Path>) -> Result<GradeScale> {
    Ok(read_manifest(dir.as_ref())?.scale)
}

/// All records stored in a split directory, merged into one dataset.
pub fn load_split_history(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for name in SPLIT_FILES {
        for r in read_part(dir, name, &manifest)?.records {
            if seen.insert((r.student, r.term, r.course)) {
                records.push(r);
            }
        }
    }
    Dataset::from_records(Records {
        records,
        students: manifest.students,
        courses: manifest.courses,
        dropped: 0,
    })
}
