use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{LanguageCode, BUNDLED_PROFILES_CSV};
use crate::model::UnknownTag;

/// The five typological similarity features, each a cosine similarity to
/// English scaled to [0, 100].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Syn,
    Pho,
    Inv,
    Gen,
    Geo,
}

impl Feature {
    pub const ALL: [Feature; 5] = [Feature::Syn, Feature::Pho, Feature::Inv, Feature::Gen, Feature::Geo];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Syn => "syn",
            Feature::Pho => "pho",
            Feature::Inv => "inv",
            Feature::Gen => "gen",
            Feature::Geo => "geo",
        }
    }

    pub fn column(self) -> String {
        format!("{}_sim", self.as_str())
    }

    pub fn description(self) -> &'static str {
        match self {
            Feature::Syn => "syntactic",
            Feature::Pho => "phonological",
            Feature::Inv => "phonetic inventory",
            Feature::Gen => "genetic",
            Feature::Geo => "geographic",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s || f.column() == s)
            .ok_or_else(|| UnknownTag {
                what: "feature",
                tag: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LanguageProfile {
    pub lid: LanguageCode,
    pub language: String,
    pub family: String,
    similarities: [f64; 5],
}

impl LanguageProfile {
    pub fn new(lid: LanguageCode, language: String, family: String, similarities: [f64; 5]) -> Result<Self, f64> {
        match similarities.iter().find(|v| !(0.0..=100.0).contains(*v)) {
            Some(&bad) => Err(bad),
            None => Ok(LanguageProfile {
                lid,
                language,
                family,
                similarities,
            }),
        }
    }

    pub fn similarity(&self, feature: Feature) -> f64 {
        self.similarities[feature as usize]
    }
}

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("reading profiles: {0}")]
    Io(#[from] std::io::Error),
    #[error("profiles line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("profiles header is missing column {0}")]
    MissingColumn(String),
    #[error("profiles line {line}: {column} = {value} is outside [0, 100]")]
    OutOfRange { line: u64, column: String, value: f64 },
    #[error("profiles line {line}: duplicate lid {lid} (first on line {first})")]
    DuplicateLid { line: u64, lid: String, first: u64 },
    #[error("profiles line {line}: {message}")]
    BadLid { line: u64, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct ProfileRegistry {
    profiles: BTreeMap<LanguageCode, LanguageProfile>,
}

impl ProfileRegistry {
    pub fn get(&self, lid: &LanguageCode) -> Option<&LanguageProfile> {
        self.profiles.get(lid)
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LanguageProfile> {
        self.profiles.values()
    }
}

const TEXT_COLUMNS: [&str; 3] = ["lid", "language", "family"];

/// Parses the profile CSV. Columns are found by header name, so extra
/// columns and other orders are accepted.
pub fn parse_profiles(reader: impl Read) -> Result<ProfileRegistry, ProfileError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| ProfileError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ProfileError::MissingColumn(name.to_string()))
    };
    let text_cols: Vec<usize> = TEXT_COLUMNS.iter().map(|c| position(c)).collect::<Result<_, _>>()?;
    let feature_cols: Vec<(String, usize)> = Feature::ALL
        .iter()
        .map(|f| position(&f.column()).map(|i| (f.column(), i)))
        .collect::<Result<_, _>>()?;

    let mut registry = ProfileRegistry::default();
    let mut first_line: HashMap<String, u64> = HashMap::new();
    for record in csv.records() {
        let record = record.map_err(|e| ProfileError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let lid_text = field(text_cols[0]);
        if let Some(&first) = first_line.get(lid_text) {
            return Err(ProfileError::DuplicateLid {
                line,
                lid: lid_text.to_string(),
                first,
            });
        }
        first_line.insert(lid_text.to_string(), line);
        let lid = LanguageCode::new(lid_text).map_err(|e| ProfileError::BadLid {
            line,
            message: e.to_string(),
        })?;
        if lid.is_english() {
            return Err(ProfileError::BadLid {
                line,
                message: "English is the reference language and has no profile".into(),
            });
        }
        let mut sims = [0.0; 5];
        for (slot, (column, i)) in sims.iter_mut().zip(&feature_cols) {
            let raw = field(*i);
            let value: f64 = raw.parse().map_err(|_| ProfileError::Malformed {
                line,
                message: format!("{column} = {raw:?} is not a number"),
            })?;
            if !(0.0..=100.0).contains(&value) {
                return Err(ProfileError::OutOfRange {
                    line,
                    column: column.clone(),
                    value,
                });
            }
            *slot = value;
        }
        let profile = LanguageProfile::new(
            lid.clone(),
            field(text_cols[1]).into(),
            field(text_cols[2]).into(),
            sims,
        )
        .expect("range checked above");
        registry.profiles.insert(lid, profile);
    }
    Ok(registry)
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileRegistry, ProfileError> {
    parse_profiles(std::fs::File::open(path)?)
}

/// The profile table shipped with the crate.
pub fn bundled_profiles() -> ProfileRegistry {
    parse_profiles(BUNDLED_PROFILES_CSV.as_bytes()).expect("bundled profile table is valid")
}
