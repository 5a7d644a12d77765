//! Structural translation of unified entries into a target language.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonClient, RetryPolicy};
use crate::lang::LanguageCode;
use crate::model::{entry_id, parse_entry_id, UnifiedEntry};
use crate::text::nfc;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("translation failed after {attempts} attempt(s): {message}")]
pub struct TranslateError {
    pub message: String,
    pub attempts: u32,
    pub retryable: bool,
}

pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, source: &LanguageCode, target: &LanguageCode) -> Result<String, TranslateError>;
}

/// Returns every field unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _: &LanguageCode, _: &LanguageCode) -> Result<String, TranslateError> {
        Ok(text.to_string())
    }
}

/// Pseudo-localizer that reverses the characters of each field.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReverseTranslator;

impl Translator for ReverseTranslator {
    fn translate(&self, text: &str, _: &LanguageCode, _: &LanguageCode) -> Result<String, TranslateError> {
        Ok(text.chars().rev().collect())
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    q: &'a str,
    source: &'a str,
    target: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// Client for a `{"q","source","target"} -> {"text"}` translation endpoint.
pub struct HttpTranslator {
    endpoint: String,
    client: JsonClient,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Result<Self, HttpError> {
        Ok(HttpTranslator {
            endpoint: endpoint.into(),
            client: JsonClient::new(api_key, retry)?,
        })
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, source: &LanguageCode, target: &LanguageCode) -> Result<String, TranslateError> {
        let body = TranslateRequest {
            q: text,
            source: source.as_str(),
            target: target.as_str(),
        };
        self.client
            .post::<_, TranslateResponse>(&self.endpoint, &body)
            .map(|r| r.text)
            .map_err(|e| TranslateError {
                retryable: matches!(e, HttpError::Transport { .. }),
                attempts: e.attempts(),
                message: e.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationFailure {
    pub index: usize,
    pub id: String,
    pub field: String,
    pub error: TranslateError,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExpansionError {
    #[error("entry {0} is not an English base entry")]
    SourceNotEnglish(String),
    #[error("target language must differ from English")]
    TargetIsSource,
    #[error("{} entr(ies) failed to translate; nothing was emitted", .0.len())]
    Failed(Vec<TranslationFailure>),
}

fn translate_entry(
    entry: &UnifiedEntry,
    target: &LanguageCode,
    translator: &dyn Translator,
) -> Result<UnifiedEntry, (String, TranslateError)> {
    let en = LanguageCode::english();
    let tr = |field: &str, text: &str| {
        translator
            .translate(text, &en, target)
            .map(|t| nfc(&t))
            .map_err(|e| (field.to_string(), e))
    };
    let index = parse_entry_id(&entry.id).map(|p| p.index).unwrap_or_default();

    let mut out = entry.clone();
    out.id = entry_id(entry.task, index, target);
    out.language = target.clone();
    out.edit.language = target.clone();
    out.edit.query = tr("edit.query", &entry.edit.query)?;
    out.edit.new_answer = tr("edit.new_answer", &entry.edit.new_answer)?;
    if let Some(old) = &entry.edit.old_answer {
        out.edit.old_answer = Some(tr("edit.old_answer", old)?);
    }
    for (kind, test) in out.tests.iter_mut() {
        test.query = tr(&format!("tests.{kind}.query"), &test.query)?;
        test.expected_answer = tr(&format!("tests.{kind}.answer"), &test.expected_answer)?;
        if let Some(orig) = &test.original_answer {
            test.original_answer = Some(tr(&format!("tests.{kind}.original_answer"), orig)?);
        }
    }
    Ok(out)
}

/// Translates every text field of every entry independently; ids gain the
/// target suffix and structure is untouched. All-or-nothing: a single failed
/// entry withholds the whole batch. Output order equals input order.
pub fn expand_language(
    entries: &[UnifiedEntry],
    target: &LanguageCode,
    translator: &dyn Translator,
    max_concurrency: usize,
) -> Result<Vec<UnifiedEntry>, ExpansionError> {
    if target.is_english() {
        return Err(ExpansionError::TargetIsSource);
    }
    if let Some(e) = entries.iter().find(|e| !e.language.is_english()) {
        return Err(ExpansionError::SourceNotEnglish(e.id.clone()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_concurrency.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<_> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| translate_entry(e, target, translator))
            .collect()
    });

    let mut out = Vec::with_capacity(entries.len());
    let mut failures = Vec::new();
    for (index, (entry, result)) in entries.iter().zip(results).enumerate() {
        match result {
            Ok(e) => out.push(e),
            Err((field, error)) => failures.push(TranslationFailure {
                index,
                id: entry.id.clone(),
                field,
                error,
            }),
        }
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        Err(ExpansionError::Failed(failures))
    }
}
