//! Dense integer handles for students and courses, and the calendar term type.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StudentId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CourseId(pub u32);

impl StudentId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl CourseId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Side table between external string identifiers and dense handles `0..n`.
///
/// Handles are assigned in sorted name order so that the same set of names
/// always yields the same numbering.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Interner {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Interner {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut names: Vec<String> = names.into_iter().map(Into::into).collect();
        names.sort();
        names.dedup();
        Interner::from(names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl From<Vec<String>> for Interner {
    /// Keeps the given order; callers are responsible for uniqueness.
    fn from(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Interner { names, index }
    }
}

impl From<Interner> for Vec<String> {
    fn from(interner: Interner) -> Self {
        interner.names
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Season {
    Spring = 0,
    Summer = 1,
    Fall = 2,
}

/// A calendar term. Ordering is chronological: Spring < Summer < Fall within a year.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Term {
    pub year: i32,
    pub season: Season,
}

impl Term {
    pub fn new(year: i32, season: Season) -> Self {
        Term { year, season }
    }

    /// Chronological integer index shared across all students.
    pub fn index(self) -> i64 {
        self.year as i64 * 3 + self.season as i64
    }

    pub fn from_index(index: i64) -> Self {
        let year = index.div_euclid(3) as i32;
        let season = match index.rem_euclid(3) {
            0 => Season::Spring,
            1 => Season::Summer,
            _ => Season::Fall,
        };
        Term { year, season }
    }

    /// The next term, skipping summer.
    pub fn next_regular(self) -> Self {
        match self.season {
            Season::Spring | Season::Summer => Term::new(self.year, Season::Fall),
            Season::Fall => Term::new(self.year + 1, Season::Spring),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = match self.season {
            Season::Spring => "SP",
            Season::Summer => "SU",
            Season::Fall => "FA",
        };
        write!(f, "{}{}", self.year, code)
    }
}

impl From<Term> for String {
    fn from(term: Term) -> Self {
        term.to_string()
    }
}

impl TryFrom<String> for Term {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Term {
    type Err = Error;

    /// Accepts `YYYYSP`, `YYYYSU`, `YYYYFA`, and the short forms `YYYYS` / `YYYYF`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parameter(format!("bad term `{s}` (expected YYYY[SP|SU|FA])"));
        if s.len() < 5 || !s.is_char_boundary(4) {
            return Err(bad());
        }
        let (year, code) = s.split_at(4);
        let year: i32 = year.parse().map_err(|_| bad())?;
        let season = match code.to_ascii_uppercase().as_str() {
            "SP" | "S" => Season::Spring,
            "SU" => Season::Summer,
            "FA" | "F" => Season::Fall,
            _ => return Err(bad()),
        };
        Ok(Term { year, season })
    }
}
