//! Synthetic transcripts with a planted prerequisite graph.
//!
//! Courses are split into areas and levels. Every course above level 0 gets a
//! few prerequisites from lower levels (mostly in its own area) with positive
//! weights summing to one. A student can only enroll in a course once all of
//! its prerequisites are finished, so the planted edges always point backwards
//! in time. Grades follow
//!
//! ```text
//! root:     base + ability + aptitude + noise
//! non-root: base + ability + sum_p w_p (grade_p - base - ability) + noise
//! ```
//!
//! clipped to `[0, 4]` and then snapped to the nearest letter. Measuring the
//! prerequisite term from the student's own baseline keeps deviations from
//! compounding along long chains, and it makes the row-centered target an
//! exact weighted sum of the row-centered prerequisite grades (up to noise,
//! clipping and letter rounding).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{GradeRecord, PredictionInstance, Records};
use crate::error::{Error, Result};
use crate::grades::GradeScale;
use crate::ids::{CourseId, Interner, Season, StudentId, Term};
use crate::models::NakParams;

pub const DATA_FILE: &str = "grades.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TRUTH_HEADER: &str = "target_course,prior_course,weight";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_students: usize,
    pub n_courses: usize,
    pub n_terms: usize,
    pub courses_per_term: usize,
    pub min_prereqs: usize,
    pub max_prereqs: usize,
    pub noise_std: f64,
    /// Spread of the per-student offset shared by all of a student's grades.
    pub ability_std: f64,
    /// Spread of the per-(student, course) offset on level-0 courses.
    pub aptitude_std: f64,
    pub base_grade: f64,
    pub clip: bool,
    pub n_areas: usize,
    pub n_levels: usize,
    /// Areas each student prefers when picking courses.
    pub focus_areas: usize,
    /// Sampling weight multiplier for courses in a preferred area.
    pub focus_weight: f64,
    /// Sampling weight grows by this factor per level, which pulls advanced
    /// courses toward later terms.
    pub level_bias: f64,
    /// Chance that a prerequisite is drawn from another area.
    pub cross_area_prob: f64,
    pub first_year: i32,
    /// Students start in the fall of one of this many consecutive years.
    pub cohort_years: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_students: 2000,
            n_courses: 100,
            n_terms: 8,
            courses_per_term: 4,
            min_prereqs: 2,
            max_prereqs: 3,
            noise_std: 0.3,
            ability_std: 0.3,
            aptitude_std: 0.8,
            base_grade: 3.0,
            clip: true,
            n_areas: 10,
            n_levels: 5,
            focus_areas: 4,
            focus_weight: 8.0,
            level_bias: 8.0,
            cross_area_prob: 0.2,
            first_year: 2010,
            cohort_years: 4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_students", self.n_students),
            ("n_courses", self.n_courses),
            ("n_terms", self.n_terms),
            ("courses_per_term", self.courses_per_term),
            ("min_prereqs", self.min_prereqs),
            ("n_areas", self.n_areas),
            ("n_levels", self.n_levels),
            ("focus_areas", self.focus_areas),
            ("cohort_years", self.cohort_years),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("ability_std", self.ability_std),
            ("aptitude_std", self.aptitude_std),
            ("focus_weight", self.focus_weight),
            ("level_bias", self.level_bias),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.cross_area_prob) {
            return Err(Error::Config("cross_area_prob must lie in [0, 1]".into()));
        }
        if self.min_prereqs > self.max_prereqs {
            return Err(Error::Config("min_prereqs exceeds max_prereqs".into()));
        }
        if self.focus_areas > self.n_areas {
            return Err(Error::Config("focus_areas exceeds n_areas".into()));
        }
        if self.courses_per_term * self.n_terms > self.n_courses {
            return Err(Error::Infeasible(format!(
                "{} terms of {} courses need more than {} courses",
                self.n_terms, self.courses_per_term, self.n_courses
            )));
        }
        if self.n_levels > self.n_terms {
            return Err(Error::Infeasible(format!(
                "{} prerequisite levels cannot be completed in {} terms",
                self.n_levels, self.n_terms
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: SynthConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SynthConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    fn area(&self, c: usize) -> usize {
        c % self.n_areas
    }

    fn level(&self, c: usize) -> usize {
        let per_area = self.n_courses.div_ceil(self.n_areas);
        (c / self.n_areas) * self.n_levels / per_area
    }
}

/// Planted prerequisite weights, indexed by target course.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    prereqs: Vec<Vec<(CourseId, f64)>>,
}

impl PlantedTruth {
    pub fn new(prereqs: Vec<Vec<(CourseId, f64)>>) -> Self {
        PlantedTruth { prereqs }
    }

    pub fn n_courses(&self) -> usize {
        self.prereqs.len()
    }

    pub fn prereqs(&self, target: CourseId) -> &[(CourseId, f64)] {
        self.prereqs.get(target.index()).map_or(&[], Vec::as_slice)
    }

    /// Zero for anything that is not a planted prerequisite.
    pub fn weight(&self, target: CourseId, prior: CourseId) -> f64 {
        self.prereqs(target)
            .iter()
            .find(|(c, _)| *c == prior)
            .map_or(0.0, |(_, w)| *w)
    }

    pub fn is_prereq(&self, target: CourseId, prior: CourseId) -> bool {
        self.prereqs(target).iter().any(|(c, _)| *c == prior)
    }

    pub fn to_csv(&self, courses: &Interner) -> String {
        let mut out = format!("{TRUTH_HEADER}\n");
        for (t, row) in self.prereqs.iter().enumerate() {
            for (p, w) in row {
                let _ = writeln!(out, "{},{},{}", courses.name(t as u32), courses.name(p.0), w);
            }
        }
        out
    }

    pub fn parse(text: &str, courses: &Interner) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == TRUTH_HEADER => {}
            _ => {
                return Err(Error::Ingest {
                    line: 1,
                    message: format!("expected header `{TRUTH_HEADER}`"),
                })
            }
        }
        let mut prereqs = vec![Vec::new(); courses.len()];
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| Error::Ingest { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [target, prior, weight] = fields[..] else {
                return Err(bad(format!("expected 3 fields, got {}", fields.len())));
            };
            let lookup = |name: &str| {
                courses.get(name).ok_or_else(|| Error::UnknownId {
                    kind: "course",
                    name: name.to_string(),
                })
            };
            let weight: f64 = weight.parse().map_err(|_| bad(format!("bad weight `{weight}`")))?;
            prereqs[lookup(target)? as usize].push((CourseId(lookup(prior)?), weight));
        }
        Ok(PlantedTruth { prereqs })
    }
}

/// A generated grade before letter rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentGrade {
    pub student: StudentId,
    pub course: CourseId,
    pub term: Term,
    /// After clipping, before snapping to a letter.
    pub grade: f64,
}

#[derive(Clone, Debug)]
pub struct SynthData {
    /// Letter-snapped records, as ingestion would produce them.
    pub records: Records,
    pub truth: PlantedTruth,
    pub latent: Vec<LatentGrade>,
    pub abilities: Vec<f64>,
    pub levels: Vec<usize>,
}

impl SynthData {
    /// The dataset in the ingestion format, with letter grades.
    pub fn dataset_csv(&self, scale: &GradeScale) -> String {
        let mut out = String::from(crate::dataset::HEADER);
        out.push('\n');
        for r in &self.records.records {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.records.students.name(r.student.0),
                self.records.courses.name(r.course.0),
                r.term,
                scale.nearest_letter(r.grade_points)
            );
        }
        out
    }

    pub fn truth_csv(&self) -> String {
        self.truth.to_csv(&self.records.courses)
    }

    /// Writes the dataset and truth files into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>, scale: &GradeScale) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [(DATA_FILE, self.dataset_csv(scale)), (TRUTH_FILE, self.truth_csv())] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn padded_names(prefix: char, n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std == 0.0 {
        0.0
    } else {
        std * rng.sample::<f64, _>(StandardNormal)
    }
}

fn plant_prereqs(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<(CourseId, f64)>>> {
    let n = config.n_courses;
    let mut out = Vec::with_capacity(n);
    for c in 0..n {
        let level = config.level(c);
        if level == 0 {
            out.push(Vec::new());
            continue;
        }
        let lower: Vec<usize> = (0..n).filter(|&p| config.level(p) < level).collect();
        if lower.len() < config.min_prereqs {
            return Err(Error::Infeasible(format!(
                "course {c} needs {} prerequisites but only {} lower-level courses exist",
                config.min_prereqs,
                lower.len()
            )));
        }
        let k = rng.random_range(config.min_prereqs..=config.max_prereqs).min(lower.len());
        let (mut local, mut other): (Vec<usize>, Vec<usize>) =
            lower.into_iter().partition(|&p| config.area(p) == config.area(c));
        local.shuffle(rng);
        other.shuffle(rng);
        let mut chosen = Vec::with_capacity(k);
        while chosen.len() < k {
            let pick = if !other.is_empty() && (local.is_empty() || rng.random_bool(config.cross_area_prob)) {
                other.pop()
            } else {
                local.pop()
            };
            chosen.extend(pick);
        }
        chosen.sort_unstable();
        let raw: Vec<f64> = chosen.iter().map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        out.push(
            chosen
                .into_iter()
                .zip(raw)
                .map(|(p, w)| (CourseId(p as u32), w / total))
                .collect(),
        );
    }
    Ok(out)
}

pub fn generate(config: &SynthConfig, scale: &GradeScale) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prereqs = plant_prereqs(config, &mut rng)?;
    let levels: Vec<usize> = (0..config.n_courses).map(|c| config.level(c)).collect();
    let max_grade = scale.max_points();

    let mut records = Vec::new();
    let mut latent = Vec::new();
    let mut abilities = Vec::with_capacity(config.n_students);
    let areas: Vec<usize> = (0..config.n_areas).collect();
    for s in 0..config.n_students {
        let student = StudentId(s as u32);
        let ability = normal(&mut rng, config.ability_std);
        abilities.push(ability);
        let mut focus = vec![false; config.n_areas];
        for &a in areas.choose_multiple(&mut rng, config.focus_areas) {
            focus[a] = true;
        }
        let start_year = config.first_year + rng.random_range(0..config.cohort_years) as i32;
        let mut term = Term::new(start_year, Season::Fall);
        // Clipped latent grade of every finished course.
        let mut done: Vec<Option<f64>> = vec![None; config.n_courses];
        for _ in 0..config.n_terms {
            let eligible: Vec<usize> = (0..config.n_courses)
                .filter(|&c| done[c].is_none() && prereqs[c].iter().all(|(p, _)| done[p.index()].is_some()))
                .collect();
            let weight = |&c: &usize| {
                let f = if focus[config.area(c)] { config.focus_weight } else { 1.0 };
                f.max(1e-12) * config.level_bias.max(1e-12).powi(levels[c] as i32)
            };
            let take = config.courses_per_term.min(eligible.len());
            let mut chosen: Vec<usize> = eligible
                .choose_multiple_weighted(&mut rng, take, weight)
                .map_err(|e| Error::Config(format!("enrollment sampling failed: {e}")))?
                .copied()
                .collect();
            chosen.sort_unstable();
            let mut this_term = Vec::with_capacity(chosen.len());
            for c in chosen {
                let mean = if prereqs[c].is_empty() {
                    config.base_grade + ability + normal(&mut rng, config.aptitude_std)
                } else {
                    let carried: f64 = prereqs[c]
                        .iter()
                        .map(|(p, w)| w * (done[p.index()].unwrap() - config.base_grade - ability))
                        .sum();
                    config.base_grade + ability + carried
                };
                let mut grade = mean + normal(&mut rng, config.noise_std);
                if config.clip {
                    grade = grade.clamp(0.0, max_grade);
                }
                this_term.push((c, grade));
            }
            for (c, grade) in this_term {
                done[c] = Some(grade);
                let course = CourseId(c as u32);
                latent.push(LatentGrade {
                    student,
                    course,
                    term,
                    grade,
                });
                records.push(GradeRecord {
                    student,
                    course,
                    term,
                    grade_points: scale.snap(grade),
                });
            }
            term = term.next_regular();
        }
    }

    Ok(SynthData {
        records: Records {
            records,
            students: Interner::from_names(padded_names('S', config.n_students)),
            courses: Interner::from_names(padded_names('C', config.n_courses)),
            dropped: 0,
        },
        truth: PlantedTruth::new(prereqs),
        latent,
        abilities,
        levels,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecovery {
    /// Mean attention mass on planted prerequisites.
    pub score: f64,
    /// Mean of `k / P` over the same instances, which is what uniform
    /// attention would score.
    pub uniform_baseline: f64,
    pub evaluated: usize,
    /// Instances with no planted prerequisite among their priors.
    pub skipped: usize,
}

pub fn attention_recovery(
    params: &NakParams,
    truth: &PlantedTruth,
    instances: &[PredictionInstance],
) -> Result<AttentionRecovery> {
    let mut score = 0.0;
    let mut baseline = 0.0;
    let mut evaluated = 0;
    let mut skipped = 0;
    for inst in instances {
        let planted: Vec<bool> = inst
            .priors
            .iter()
            .map(|p| truth.is_prereq(inst.target_course, p.course))
            .collect();
        let k = planted.iter().filter(|&&b| b).count();
        if k == 0 {
            skipped += 1;
            continue;
        }
        let (_, attention) = params.knowledge_state(inst);
        score += attention
            .values()
            .iter()
            .zip(&planted)
            .filter(|(_, &b)| b)
            .map(|(a, _)| a)
            .sum::<f64>();
        baseline += k as f64 / inst.priors.len() as f64;
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::Empty("no instance has a planted prerequisite among its priors"));
    }
    Ok(AttentionRecovery {
        score: score / evaluated as f64,
        uniform_baseline: baseline / evaluated as f64,
        evaluated,
        skipped,
    })
}

/// Planted prerequisites grouped by target, keyed by name. Handy for reports.
pub fn truth_by_name(truth: &PlantedTruth, courses: &Interner) -> BTreeMap<String, Vec<(String, f64)>> {
    (0..truth.n_courses())
        .filter(|&t| !truth.prereqs(CourseId(t as u32)).is_empty())
        .map(|t| {
            let row = truth
                .prereqs(CourseId(t as u32))
                .iter()
                .map(|(p, w)| (courses.name(p.0).to_string(), *w))
                .collect();
            (courses.name(t as u32).to_string(), row)
        })
        .collect()
}
