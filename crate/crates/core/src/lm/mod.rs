//! Black-box language model access: free generation and teacher-forced
//! continuation scoring.

mod http;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ScoredCompletion, TokenLogprob};
use crate::prompting::AssembledPrompt;

pub use http::{OpenAiCompatible, OpenAiConfig};
pub use mock::{parse_mock_script, read_mock_script, MockFallback, MockLm, MockScript, MockScriptError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    /// Context length of the model, prompt plus output.
    pub max_length: usize,
    /// Generation budget per answer.
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

fn default_max_new_tokens() -> usize {
    64
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.6,
            top_p: 0.9,
            max_length: 4096,
            max_new_tokens: default_max_new_tokens(),
            stop_sequences: vec!["\n".into()],
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature {} must be >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(format!("top_p {} must be in (0, 1]", self.top_p));
        }
        if self.max_length == 0 || self.max_new_tokens == 0 {
            return Err("max_length and max_new_tokens must be positive".into());
        }
        Ok(())
    }

    /// Greedy decoding with everything else unchanged.
    pub fn greedy(&self) -> Self {
        GenerationParams {
            temperature: 0.0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("context overflow: {0}")]
    ContextOverflow(String),
    #[error("backend cannot score continuations: {0}")]
    CapabilityUnsupported(String),
    #[error("continuation must be non-empty")]
    EmptyContinuation,
    #[error("log-probability list must be non-empty")]
    EmptyLogprobs,
    #[error("log-probability {0} is positive or not finite")]
    InvalidLogprob(f64),
    #[error("backend protocol error: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationScore {
    pub tokens: Vec<TokenLogprob>,
    pub total: f64,
}

impl ContinuationScore {
    pub fn from_tokens(tokens: Vec<TokenLogprob>) -> Result<Self, LmError> {
        if let Some(bad) = tokens.iter().find(|t| t.logprob.is_nan() || t.logprob > 0.0) {
            return Err(LmError::InvalidLogprob(bad.logprob));
        }
        let total = tokens.iter().map(|t| t.logprob).sum();
        Ok(ContinuationScore { tokens, total })
    }

    pub fn logprobs(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.logprob).collect()
    }
}

pub trait LanguageModel: Send + Sync {
    fn generate(&self, prompt: &AssembledPrompt, params: &GenerationParams) -> Result<ScoredCompletion, LmError>;

    /// Teacher-forced log-probability of `continuation` after `prompt_text`.
    fn score_continuation(&self, prompt_text: &str, continuation: &str) -> Result<ContinuationScore, LmError>;
}

/// Per-token geometric-mean probability, `exp(mean(logprobs))`.
pub fn normalized_probability(token_logprobs: &[f64]) -> Result<f64, LmError> {
    if token_logprobs.is_empty() {
        return Err(LmError::EmptyLogprobs);
    }
    if let Some(&bad) = token_logprobs.iter().find(|lp| lp.is_nan() || **lp > 0.0) {
        return Err(LmError::InvalidLogprob(bad));
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok(mean.exp())
}

/// Cuts `text` at the earliest stop sequence found after any leading
/// whitespace.
pub fn truncate_at_stop(text: &str, stops: &[String]) -> String {
    let start = text.len() - text.trim_start().len();
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text[start..].find(s.as_str()).map(|i| i + start))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// Bare answer span from a generation: first non-blank line, without an
/// echoed `Answer:` prefix or surrounding quotes.
pub fn extract_answer(generated: &str) -> String {
    let line = generated.trim_start().lines().next().unwrap_or("");
    let line = line.trim();
    let line = line.strip_prefix("Answer:").unwrap_or(line).trim();
    line.trim_matches(|c: char| c.is_whitespace() || "\"'“”‘’«»「」".contains(c))
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_probability_examples() {
        let p = normalized_probability(&[-0.2231, -0.1054]).unwrap();
        assert!((p - (-0.16425f64).exp()).abs() < 1e-12);
        assert!((p - 0.8485).abs() < 1e-3);
        assert_eq!(normalized_probability(&[0.0]).unwrap(), 1.0);
        assert!(normalized_probability(&[-1e9]).unwrap() < 1e-300);
        assert_eq!(normalized_probability(&[]), Err(LmError::EmptyLogprobs));
        assert_eq!(normalized_probability(&[0.1]), Err(LmError::InvalidLogprob(0.1)));
    }

    #[test]
    fn length_invariance() {
        for n in 1..20 {
            let p = normalized_probability(&vec![-0.7; n]).unwrap();
            assert!((p - (-0.7f64).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn continuation_total() {
        let s = ContinuationScore::from_tokens(vec![
            TokenLogprob {
                token: " Par".into(),
                logprob: -0.2231,
            },
            TokenLogprob {
                token: "is".into(),
                logprob: -0.1054,
            },
        ])
        .unwrap();
        assert!((s.total - -0.3285).abs() < 1e-12);
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer(" Paris\nQuestion: next"), "Paris");
        assert_eq!(extract_answer("Answer: \"Lyon\""), "Lyon");
        assert_eq!(extract_answer("\n\n  「東京」 "), "東京");
        assert_eq!(extract_answer(""), "");
    }

    #[test]
    fn stop_sequences() {
        let stops = vec!["\n".to_string(), "Question:".to_string()];
        assert_eq!(truncate_at_stop("Paris Question: x\ny", &stops), "Paris ");
        assert_eq!(truncate_at_stop("Paris", &stops), "Paris");
        assert_eq!(truncate_at_stop("Paris", &[String::new()]), "Paris");
        assert_eq!(truncate_at_stop("\n Paris\nx", &stops), "\n Paris");
    }

    #[test]
    fn default_params() {
        let p = GenerationParams::default();
        assert_eq!((p.temperature, p.top_p, p.max_length), (0.6, 0.9, 4096));
        p.validate().unwrap();
        assert_eq!(p.greedy().temperature, 0.0);
        assert!(GenerationParams {
            top_p: 0.0,
            ..p.clone()
        }
        .validate()
        .is_err());
    }
}
