//! Language registry: English plus the 52 target languages of the bundled
//! similarity table.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// The bundled typological similarity table (one row per non-English language).
pub const BUNDLED_PROFILES_CSV: &str = include_str!("../data/languages.csv");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub code: String,
    pub name: String,
}

fn registry() -> &'static [RegistryEntry] {
    static REGISTRY: OnceLock<Vec<RegistryEntry>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut entries = vec![RegistryEntry {
            code: "en".into(),
            name: "English".into(),
        }];
        for line in BUNDLED_PROFILES_CSV.lines().skip(1) {
            let mut cols = line.split(',');
            if let (Some(code), Some(name)) = (cols.next(), cols.next()) {
                entries.push(RegistryEntry {
                    code: code.to_string(),
                    name: name.to_string(),
                });
            }
        }
        entries
    })
}

/// All registered codes, English first.
pub fn all_codes() -> impl Iterator<Item = &'static str> {
    registry().iter().map(|e| e.code.as_str())
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown language code {0:?}")]
pub struct UnknownLanguage(pub String);

/// A language tag that is guaranteed to be in the registry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LanguageCode(String);

impl LanguageCode {
    pub fn new(code: &str) -> Result<Self, UnknownLanguage> {
        let code = code.trim();
        if registry().iter().any(|e| e.code == code) {
            Ok(LanguageCode(code.to_string()))
        } else {
            Err(UnknownLanguage(code.to_string()))
        }
    }

    pub fn english() -> Self {
        LanguageCode("en".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_english(&self) -> bool {
        self.0 == "en"
    }

    pub fn name(&self) -> &'static str {
        registry()
            .iter()
            .find(|e| e.code == self.0)
            .map(|e| e.name.as_str())
            .unwrap_or("")
    }
}

impl std::str::FromStr for LanguageCode {
    type Err = UnknownLanguage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageCode::new(s)
    }
}

impl fmt::Display for LanguageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for LanguageCode {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for LanguageCode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        LanguageCode::new(&raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_53_languages() {
        assert_eq!(all_codes().count(), 53);
        assert_eq!(all_codes().next(), Some("en"));
    }

    #[test]
    fn only_zh_cn_has_a_hyphen() {
        let hyphenated: Vec<_> = all_codes().filter(|c| c.contains('-')).collect();
        assert_eq!(hyphenated, vec!["zh-cn"]);
        assert!(all_codes().all(|c| c.is_ascii()));
    }

    #[test]
    fn rejects_unregistered_codes() {
        assert!(LanguageCode::new("xx").is_err());
        assert!(LanguageCode::new("zh").is_err());
        assert_eq!(LanguageCode::new("de").unwrap().name(), "German");
    }

    #[test]
    fn serde_validates() {
        let ok: LanguageCode = serde_json::from_str("\"th\"").unwrap();
        assert_eq!(ok.as_str(), "th");
        assert!(serde_json::from_str::<LanguageCode>("\"klingon\"").is_err());
    }
}
