//! Answer normalization, token F1, exact match, and the probability-based
//! perplexity score (S) and magnitude (M). Everything reported is on a 0-100
//! scale; the per-pair functions return raw fractions.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

use crate::lang::LanguageCode;
use crate::model::{QueryKind, TaskId, UnknownTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    F1,
    EM,
    S,
    M,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::F1 => "F1",
            Metric::EM => "EM",
            Metric::S => "S",
            Metric::M => "M",
        }
    }

    /// Closed range a reported value must fall in.
    pub fn range(self) -> (f64, f64) {
        match self {
            Metric::M => (-100.0, 100.0),
            _ => (0.0, 100.0),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F1" => Ok(Metric::F1),
            "EM" => Ok(Metric::EM),
            "S" => Ok(Metric::S),
            "M" => Ok(Metric::M),
            _ => Err(UnknownTag {
                what: "metric",
                tag: s.to_string(),
            }),
        }
    }
}

/// Which metric pair applies to a (task, kind): S/M where the dataset gives
/// both an original and an updated answer, F1/EM otherwise.
pub struct MetricSelection;

impl MetricSelection {
    pub fn uses_probability(task: TaskId, kind: QueryKind) -> bool {
        use QueryKind::*;
        match task {
            TaskId::Zsre => false,
            TaskId::Counterfact => matches!(kind, Reliability | Generality | Locality),
            TaskId::Wfd => matches!(kind, Reliability | Generality),
        }
    }

    pub fn metrics(task: TaskId, kind: QueryKind) -> [Metric; 2] {
        if Self::uses_probability(task, kind) {
            [Metric::S, Metric::M]
        } else {
            [Metric::F1, Metric::EM]
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("probability {0} outside (0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("cannot aggregate an empty list")]
    Empty,
    #[error("mixed metric names in one aggregate ({0} and {1})")]
    MixedNames(Metric, Metric),
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// NFKC, lowercase, drop Unicode punctuation, collapse whitespace. Articles
/// are kept: stripping them is only meaningful for English.
pub fn normalize_answer(text: &str, _language: &LanguageCode) -> String {
    let folded: String = text
        .nfkc()
        .flat_map(char::to_lowercase)
        .filter(|c| !is_punctuation(*c))
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokenizer with a per-character fallback for scripts that do
/// not separate words with spaces.
#[derive(Debug, Clone)]
pub struct F1Tokenizer {
    char_fallback: BTreeSet<String>,
}

impl Default for F1Tokenizer {
    fn default() -> Self {
        F1Tokenizer::with_fallback(["zh-cn", "ja", "th"])
    }
}

impl F1Tokenizer {
    pub fn with_fallback<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        F1Tokenizer {
            char_fallback: codes.into_iter().map(Into::into).collect(),
        }
    }

    pub fn tokenize(&self, text: &str, language: &LanguageCode) -> Vec<String> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() == 1 && self.char_fallback.contains(language.as_str()) {
            words[0].chars().map(String::from).collect()
        } else {
            words.into_iter().map(String::from).collect()
        }
    }

    pub fn token_f1(&self, predicted: &str, gold: &str, language: &LanguageCode) -> f64 {
        let pred = normalize_answer(predicted, language);
        let gold = normalize_answer(gold, language);
        if pred == gold {
            return 1.0;
        }
        let pred_tokens = self.tokenize(&pred, language);
        let gold_tokens = self.tokenize(&gold, language);
        if pred_tokens.is_empty() || gold_tokens.is_empty() {
            return 0.0;
        }
        let mut gold_counts: HashMap<&str, usize> = HashMap::new();
        for t in &gold_tokens {
            *gold_counts.entry(t.as_str()).or_default() += 1;
        }
        let mut overlap = 0usize;
        for t in &pred_tokens {
            if let Some(n) = gold_counts.get_mut(t.as_str()) {
                if *n > 0 {
                    *n -= 1;
                    overlap += 1;
                }
            }
        }
        if overlap == 0 {
            return 0.0;
        }
        let precision = overlap as f64 / pred_tokens.len() as f64;
        let recall = overlap as f64 / gold_tokens.len() as f64;
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn tokenize_for_f1(text: &str, language: &LanguageCode) -> Vec<String> {
    F1Tokenizer::default().tokenize(text, language)
}

/// Multiset-overlap F1 in [0, 1] with the default tokenizer.
pub fn token_f1(predicted: &str, gold: &str, language: &LanguageCode) -> f64 {
    F1Tokenizer::default().token_f1(predicted, gold, language)
}

pub fn exact_match(predicted: &str, gold: &str, language: &LanguageCode) -> u8 {
    u8::from(normalize_answer(predicted, language) == normalize_answer(gold, language))
}

fn check_probability(p: f64) -> Result<f64, MetricError> {
    if p > 0.0 && p <= 1.0 {
        Ok(p)
    } else {
        Err(MetricError::ProbabilityOutOfRange(p))
    }
}

/// Item-level S: 100 when the updated answer is strictly more probable.
pub fn perplexity_score(p_new: f64, p_old: f64) -> Result<f64, MetricError> {
    let (p_new, p_old) = (check_probability(p_new)?, check_probability(p_old)?);
    Ok(if p_new > p_old { 100.0 } else { 0.0 })
}

/// Item-level M: 100 * (p_new - p_old).
pub fn magnitude(p_new: f64, p_old: f64) -> Result<f64, MetricError> {
    let (p_new, p_old) = (check_probability(p_new)?, check_probability(p_old)?);
    Ok(100.0 * (p_new - p_old))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: Metric,
    pub value: f64,
    pub count: usize,
}

/// Mean of item values for one metric.
pub fn aggregate(name: Metric, values: &[f64]) -> Result<MetricValue, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(MetricValue {
        name,
        value: values.iter().sum::<f64>() / values.len() as f64,
        count: values.len(),
    })
}

/// Mean of group means (each language weighs the same); `count` is the number
/// of groups.
pub fn macro_aggregate(groups: &[MetricValue]) -> Result<MetricValue, MetricError> {
    let first = groups.first().ok_or(MetricError::Empty)?;
    if let Some(other) = groups.iter().find(|g| g.name != first.name) {
        return Err(MetricError::MixedNames(first.name, other.name));
    }
    let means: Vec<f64> = groups.iter().map(|g| g.value).collect();
    Ok(MetricValue {
        count: groups.len(),
        ..aggregate(first.name, &means)?
    })
}

/// Item-weighted mean across groups. Reported only for comparison.
pub fn micro_aggregate(groups: &[MetricValue]) -> Result<MetricValue, MetricError> {
    let first = groups.first().ok_or(MetricError::Empty)?;
    if let Some(other) = groups.iter().find(|g| g.name != first.name) {
        return Err(MetricError::MixedNames(first.name, other.name));
    }
    let items: usize = groups.iter().map(|g| g.count).sum();
    if items == 0 {
        return Err(MetricError::Empty);
    }
    let total: f64 = groups.iter().map(|g| g.value * g.count as f64).sum();
    Ok(MetricValue {
        name: first.name,
        value: total / items as f64,
        count: items,
    })
}
