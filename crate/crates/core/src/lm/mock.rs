//! Scripted offline model.
//!
//! Script files hold one JSON object per line, of three shapes:
//!
//! ```text
//! {"fingerprint": "<16 hex>", "response": "..."}
//! {"fingerprint": "<16 hex>", "continuation": "...", "logprobs": [-0.1, ...]}
//! {"default_response": "..."}
//! ```
//!
//! The fingerprint is FNV-1a 64 over the UTF-8 prompt text, lowercase hex.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{truncate_at_stop, ContinuationScore, GenerationParams, LanguageModel, LmError};
use crate::model::{ScoredCompletion, TokenLogprob};
use crate::prompting::AssembledPrompt;
use crate::text::{fnv1a64, Fingerprint};

/// What the mock does for prompts its script does not mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFallback {
    /// Generation returns `default_response`; scoring is refused.
    Strict,
    /// Generation returns `default_response`; scoring derives log-probs
    /// from a hash of (prompt fingerprint, token).
    #[default]
    Hashed,
    /// Generation picks, by prompt hash, one of the answers shown in the
    /// prompt or the last word of the live fact; scoring as `Hashed`.
    Guess,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockScript {
    pub responses: HashMap<Fingerprint, String>,
    pub token_scores: HashMap<(Fingerprint, String), Vec<f64>>,
    pub default_response: String,
    pub fallback: MockFallback,
}

#[derive(Debug, Error)]
pub enum MockScriptError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ScriptLine {
    Scores {
        fingerprint: String,
        continuation: String,
        logprobs: Vec<f64>,
    },
    Response {
        fingerprint: String,
        response: String,
    },
    Default {
        default_response: String,
    },
}

pub fn parse_mock_script(text: &str) -> Result<MockScript, MockScriptError> {
    let mut script = MockScript::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| MockScriptError::Line { line, message };
        let parsed: ScriptLine = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let fp = |hex: &str| Fingerprint::parse(hex).ok_or_else(|| err(format!("bad fingerprint {hex:?}")));
        match parsed {
            ScriptLine::Response { fingerprint, response } => {
                script.responses.insert(fp(&fingerprint)?, response);
            }
            ScriptLine::Scores {
                fingerprint,
                continuation,
                logprobs,
            } => {
                if logprobs.is_empty() {
                    return Err(err("empty logprobs".into()));
                }
                if let Some(bad) = logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
                    return Err(err(format!("log-probability {bad} > 0")));
                }
                script.token_scores.insert((fp(&fingerprint)?, continuation), logprobs);
            }
            ScriptLine::Default { default_response } => script.default_response = default_response,
        }
    }
    Ok(script)
}

pub fn read_mock_script(path: impl AsRef<Path>) -> Result<MockScript, MockScriptError> {
    let text = fs::read_to_string(path).map_err(|e| MockScriptError::Io(e.to_string()))?;
    parse_mock_script(&text)
}

/// Deterministic, stateless model backed by a [`MockScript`].
#[derive(Debug, Clone, Default)]
pub struct MockLm {
    script: MockScript,
}

impl MockLm {
    pub fn new(script: MockScript) -> Self {
        MockLm { script }
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn guess(text: &str, fp: Fingerprint) -> Option<String> {
        let mut candidates: Vec<String> = text
            .lines()
            .filter_map(|l| l.strip_prefix("Answer: "))
            .map(str::to_string)
            .collect();
        if let Some(fact) = text.lines().filter_map(|l| l.strip_prefix("New Fact: ")).next_back() {
            if let Some(word) = fact.split_whitespace().last() {
                candidates.push(word.to_string());
            }
        }
        (!candidates.is_empty()).then(|| candidates[(fp.0 % candidates.len() as u64) as usize].clone())
    }

    /// Splits on whitespace boundaries, keeping the leading space with each
    /// word, and gives each piece a log-prob in (-3, 0].
    fn hashed_scores(fp: Fingerprint, continuation: &str) -> Vec<TokenLogprob> {
        let mut pieces: Vec<String> = Vec::new();
        for (i, word) in continuation.split(' ').enumerate() {
            if i == 0 {
                pieces.push(word.to_string());
            } else {
                pieces.push(format!(" {word}"));
            }
        }
        pieces.retain(|p| !p.is_empty());
        pieces
            .into_iter()
            .map(|token| {
                let h = fnv1a64(&format!("{fp}\u{1f}{token}"));
                TokenLogprob {
                    logprob: -((h % 3000) as f64) / 1000.0,
                    token,
                }
            })
            .collect()
    }
}

impl LanguageModel for MockLm {
    fn generate(&self, prompt: &AssembledPrompt, params: &GenerationParams) -> Result<ScoredCompletion, LmError> {
        let fp = Fingerprint::of(&prompt.text);
        let text = match self.script.responses.get(&fp) {
            Some(r) => r.clone(),
            None => match self.script.fallback {
                MockFallback::Guess => {
                    Self::guess(&prompt.text, fp).unwrap_or_else(|| self.script.default_response.clone())
                }
                _ => self.script.default_response.clone(),
            },
        };
        Ok(ScoredCompletion::text_only(truncate_at_stop(
            &text,
            &params.stop_sequences,
        )))
    }

    fn score_continuation(&self, prompt_text: &str, continuation: &str) -> Result<ContinuationScore, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        let fp = Fingerprint::of(prompt_text);
        if let Some(lps) = self.script.token_scores.get(&(fp, continuation.to_string())) {
            let tokens = lps
                .iter()
                .enumerate()
                .map(|(i, &logprob)| TokenLogprob {
                    token: format!("<{i}>"),
                    logprob,
                })
                .collect();
            return ContinuationScore::from_tokens(tokens);
        }
        match self.script.fallback {
            MockFallback::Strict => Err(LmError::CapabilityUnsupported(format!(
                "no scripted scores for prompt {fp}"
            ))),
            _ => ContinuationScore::from_tokens(Self::hashed_scores(fp, continuation)),
        }
    }
}
