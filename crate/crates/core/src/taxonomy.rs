//! Pathology names, the default taxonomy and tri-state label values.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Words kept upper-case by [`normalize_name`].
const ACRONYMS: &[&str] = &["ILD"];

const DEFAULT_PATHOLOGIES: [&str; 18] = [
    "Atelectasis",
    "Consolidation",
    "Infiltration",
    "Pneumothorax",
    "Edema",
    "Emphysema",
    "Fibrosis",
    "Effusion",
    "Pneumonia",
    "Pleural Thickening",
    "Cardiomegaly",
    "Nodule",
    "Mass",
    "Hernia",
    "Lung Lesion",
    "Fracture",
    "Lung Opacity",
    "Enlarged Cardiomediastinum",
];

/// A canonical pathology (or attribute) name.
///
/// Construction always goes through [`normalize_name`], so two values compare
/// equal exactly when their canonical spellings match.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Pathology(String);

impl Pathology {
    pub fn new(raw: &str) -> Result<Self> {
        normalize_name(raw)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Pathology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Pathology {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        normalize_name(&value)
    }
}

impl From<Pathology> for String {
    fn from(p: Pathology) -> Self {
        p.0
    }
}

impl AsRef<str> for Pathology {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Canonicalize a raw pathology spelling.
///
/// Trims, turns underscores into spaces, collapses runs of whitespace and
/// title-cases each word (a letter is upper-cased when it follows a
/// non-alphanumeric character). Words on the acronym list stay upper-case.
pub fn normalize_name(raw: &str) -> Result<Pathology> {
    let spaced = raw.replace('_', " ");
    let words: Vec<String> = spaced.split_whitespace().map(title_case_word).collect();
    if words.is_empty() {
        return Err(Error::EmptyName);
    }
    Ok(Pathology(words.join(" ")))
}

fn title_case_word(word: &str) -> String {
    let upper = word.to_uppercase();
    if ACRONYMS.contains(&upper.as_str()) {
        return upper;
    }
    let mut out = String::with_capacity(word.len());
    let mut at_boundary = true;
    for c in word.chars() {
        if at_boundary {
            out.extend(c.to_uppercase());
        } else {
            out.extend(c.to_lowercase());
        }
        at_boundary = !c.is_alphanumeric();
    }
    out
}

/// A single label value: present, absent, or no information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriState {
    Absent,
    Present,
    Unknown,
}

impl TriState {
    /// Numeric encoding: 1, 0 or NaN.
    pub fn to_f64(self) -> f64 {
        match self {
            TriState::Absent => 0.0,
            TriState::Present => 1.0,
            TriState::Unknown => f64::NAN,
        }
    }

    /// Inverse of [`TriState::to_f64`]; anything other than 0 or 1 is unknown.
    pub fn from_f64(v: f64) -> Self {
        if v == 1.0 {
            TriState::Present
        } else if v == 0.0 {
            TriState::Absent
        } else {
            TriState::Unknown
        }
    }

    pub fn from_bool(v: bool) -> Self {
        if v {
            TriState::Present
        } else {
            TriState::Absent
        }
    }

    pub fn is_unknown(self) -> bool {
        self == TriState::Unknown
    }

    /// `Some(true)` for present, `Some(false)` for absent.
    pub fn as_bool(self) -> Option<bool> {
        match self {
            TriState::Absent => Some(false),
            TriState::Present => Some(true),
            TriState::Unknown => None,
        }
    }

    /// Text form used in manifests.
    pub fn as_csv(self) -> &'static str {
        match self {
            TriState::Absent => "0",
            TriState::Present => "1",
            TriState::Unknown => "NaN",
        }
    }

    /// Parse the manifest text form. Empty cells are unknown.
    pub fn parse_csv(s: &str) -> Option<Self> {
        match s.trim() {
            "1" | "1.0" => Some(TriState::Present),
            "0" | "0.0" => Some(TriState::Absent),
            "" | "NaN" | "nan" | "NAN" => Some(TriState::Unknown),
            _ => None,
        }
    }
}

/// An ordered list of distinct pathologies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Taxonomy(Vec<Pathology>);

impl Taxonomy {
    pub fn new(pathologies: Vec<Pathology>) -> Result<Self> {
        for (i, p) in pathologies.iter().enumerate() {
            if pathologies[..i].contains(p) {
                return Err(Error::DuplicatePathology(p.to_string()));
            }
        }
        Ok(Taxonomy(pathologies))
    }

    /// Normalize and validate a list of raw names.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let ps = names.iter().map(|n| normalize_name(n.as_ref())).collect::<Result<Vec<_>>>()?;
        Self::new(ps)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Pathology> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Pathology] {
        &self.0
    }

    pub fn get(&self, i: usize) -> Option<&Pathology> {
        self.0.get(i)
    }

    pub fn index_of(&self, p: &Pathology) -> Option<usize> {
        self.0.iter().position(|q| q == p)
    }

    /// Lookup by raw name; the name is normalized first.
    pub fn index_of_name(&self, name: &str) -> Option<usize> {
        let p = normalize_name(name).ok()?;
        self.index_of(&p)
    }

    pub fn contains(&self, p: &Pathology) -> bool {
        self.index_of(p).is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("string list always serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl TryFrom<Vec<String>> for Taxonomy {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Taxonomy::from_names(&v)
    }
}

impl From<Taxonomy> for Vec<String> {
    fn from(t: Taxonomy) -> Self {
        t.0.into_iter().map(String::from).collect()
    }
}

impl<'a> IntoIterator for &'a Taxonomy {
    type Item = &'a Pathology;
    type IntoIter = std::slice::Iter<'a, Pathology>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// The 18-class default taxonomy used by the bundled models.
pub fn default_taxonomy() -> Taxonomy {
    Taxonomy::from_names(&DEFAULT_PATHOLOGIES).expect("default taxonomy is valid")
}
