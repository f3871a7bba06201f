//! Letter-grade scales and tick arithmetic.
//!
//! A [`GradeScale`] is an ordered list of letters with strictly decreasing
//! point values. Positions in that list define the *tick* distance between
//! two letters: `B+` and `B` are one tick apart, `A` and `B` three.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeEntry {
    pub letter: String,
    pub points: f64,
}

/// Ordered letter-grade scale, highest grade first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradeScale {
    entries: Vec<GradeEntry>,
}

const DEFAULT_SCALE: [(&str, f64); 12] = [
    ("A", 4.000),
    ("A-", 3.667),
    ("B+", 3.333),
    ("B", 3.000),
    ("B-", 2.667),
    ("C+", 2.333),
    ("C", 2.000),
    ("C-", 1.667),
    ("D+", 1.333),
    ("D", 1.000),
    ("D-", 0.667),
    ("F", 0.000),
];

impl Default for GradeScale {
    fn default() -> Self {
        let entries = DEFAULT_SCALE
            .iter()
            .map(|&(letter, points)| GradeEntry {
                letter: letter.to_string(),
                points,
            })
            .collect();
        GradeScale { entries }
    }
}

impl GradeScale {
    pub fn new(entries: Vec<GradeEntry>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::Scale("a scale needs at least two entries".into()));
        }
        for pair in entries.windows(2) {
            if pair[0].points.partial_cmp(&pair[1].points) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Scale(format!(
                    "points must strictly decrease: {} ({}) then {} ({})",
                    pair[0].letter, pair[0].points, pair[1].letter, pair[1].points
                )));
            }
        }
        for (i, entry) in entries.iter().enumerate() {
            if !entry.points.is_finite() {
                return Err(Error::Scale(format!("non-finite points for {}", entry.letter)));
            }
            if entry.letter.is_empty() || entry.letter.chars().any(char::is_whitespace) {
                return Err(Error::Scale(format!("bad letter `{}`", entry.letter)));
            }
            if entries[..i].iter().any(|e| e.letter == entry.letter) {
                return Err(Error::Scale(format!("duplicate letter `{}`", entry.letter)));
            }
        }
        if entries.iter().filter(|e| e.points == 0.0).count() != 1 {
            return Err(Error::Scale("exactly one entry must carry 0 points".into()));
        }
        Ok(GradeScale { entries })
    }

    /// Parses the override format: one `letter<TAB>points` line per entry,
    /// highest grade first. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (letter, points) = line.split_once('\t').ok_or_else(|| Error::Ingest {
                line: n + 1,
                message: "expected `letter<TAB>points`".into(),
            })?;
            let points: f64 = points.trim().parse().map_err(|_| Error::Ingest {
                line: n + 1,
                message: format!("bad point value `{}`", points.trim()),
            })?;
            entries.push(GradeEntry {
                letter: letter.trim().to_string(),
                points,
            });
        }
        GradeScale::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GradeScale::parse(&text)
    }

    pub fn to_file_string(&self) -> String {
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\n", e.letter, e.points))
            .collect()
    }

    pub fn entries(&self) -> &[GradeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_points(&self) -> f64 {
        self.entries[0].points
    }

    pub fn position(&self, letter: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.letter == letter)
    }

    pub fn letter_to_points(&self, letter: &str) -> Result<f64> {
        self.position(letter)
            .map(|i| self.entries[i].points)
            .ok_or_else(|| Error::UnknownLetter(letter.to_string()))
    }

    /// Index of the entry closest to `points`; ties go to the higher grade.
    pub fn nearest_index(&self, points: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, entry) in self.entries.iter().enumerate() {
            let dist = (points - entry.points).abs();
            // Entries run from high to low, so strict `<` keeps the higher one on ties.
            if dist < best_dist {
                best = i;
                best_dist = dist;
            }
        }
        best
    }

    pub fn nearest_letter(&self, points: f64) -> &str {
        &self.entries[self.nearest_index(points)].letter
    }

    /// Snaps a point value onto the scale.
    pub fn snap(&self, points: f64) -> f64 {
        self.entries[self.nearest_index(points)].points
    }

    pub fn tick_distance(&self, a: &str, b: &str) -> Result<usize> {
        let ia = self
            .position(a)
            .ok_or_else(|| Error::UnknownLetter(a.to_string()))?;
        let ib = self
            .position(b)
            .ok_or_else(|| Error::UnknownLetter(b.to_string()))?;
        Ok(ia.abs_diff(ib))
    }
}
