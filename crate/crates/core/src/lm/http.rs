//! OpenAI-compatible completion endpoints.
//!
//! Generation goes to `/v1/chat/completions`; scoring uses
//! `/v1/completions` with `echo=true, logprobs=1, max_tokens=0` and falls
//! back to token-by-token scoring from top log-probs when echo is refused.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{truncate_at_stop, ContinuationScore, GenerationParams, LanguageModel, LmError};
use crate::http::{join_url, HttpError, JsonClient, RetryPolicy};
use crate::model::{ScoredCompletion, TokenLogprob};
use crate::prompting::AssembledPrompt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Upper bound on steps of the incremental scoring fallback.
    #[serde(default = "default_max_score_steps")]
    pub max_score_steps: usize,
}

fn default_max_score_steps() -> usize {
    128
}

pub struct OpenAiCompatible {
    config: OpenAiConfig,
    client: JsonClient,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChatLogprobs>,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatLogprobs {
    #[serde(default)]
    content: Option<Vec<ChatTokenLogprob>>,
}

#[derive(Deserialize)]
struct ChatTokenLogprob {
    token: String,
    logprob: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    logprobs: Option<CompletionLogprobs>,
}

#[derive(Deserialize)]
struct CompletionLogprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    text_offset: Vec<usize>,
    #[serde(default)]
    top_logprobs: Vec<Option<HashMap<String, f64>>>,
}

fn is_context_overflow(body: &str) -> bool {
    let b = body.to_lowercase();
    b.contains("context_length_exceeded")
        || (b.contains("context") && (b.contains("maximum") || b.contains("too long")))
}

fn map_http(e: HttpError) -> LmError {
    match e {
        HttpError::Transport { attempts, message } => LmError::Transport { attempts, message },
        HttpError::Status { status: 400, body } if is_context_overflow(&body) => LmError::ContextOverflow(body),
        HttpError::Status { status, body } => LmError::Protocol(format!("HTTP {status}: {body}")),
        HttpError::Decode(m) => LmError::Protocol(m),
    }
}

impl OpenAiCompatible {
    pub fn new(config: OpenAiConfig) -> Result<Self, LmError> {
        let client = JsonClient::new(config.api_key.clone(), config.retry).map_err(map_http)?;
        Ok(OpenAiCompatible { config, client })
    }

    fn url(&self, path: &str) -> String {
        join_url(&self.config.base_url, path)
    }

    fn echo_score(&self, prompt_text: &str, continuation: &str) -> Result<ContinuationScore, HttpError> {
        let body = json!({
            "model": self.config.model,
            "prompt": format!("{prompt_text}{continuation}"),
            "echo": true,
            "logprobs": 1,
            "max_tokens": 0,
            "temperature": 0,
        });
        let resp: CompletionResponse = self.client.post(&self.url("/v1/completions"), &body)?;
        let lp = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.logprobs)
            .ok_or_else(|| HttpError::Decode("no logprobs in echo response".into()))?;
        if lp.tokens.len() != lp.token_logprobs.len() || lp.tokens.len() != lp.text_offset.len() {
            return Err(HttpError::Decode("ragged logprob arrays".into()));
        }
        // Offsets count characters of the echoed text.
        let boundary = prompt_text.chars().count();
        let mut tokens = Vec::new();
        for ((token, logprob), offset) in lp.tokens.into_iter().zip(lp.token_logprobs).zip(lp.text_offset) {
            if offset + token.chars().count() <= boundary {
                continue;
            }
            let logprob = logprob.ok_or_else(|| HttpError::Decode("null logprob inside continuation".into()))?;
            tokens.push(TokenLogprob { token, logprob });
        }
        if tokens.is_empty() {
            return Err(HttpError::Decode("echo response covers no continuation tokens".into()));
        }
        ContinuationScore::from_tokens(tokens).map_err(|e| HttpError::Decode(e.to_string()))
    }

    /// Greedy walk: at each step ask for the top-20 next tokens and take the
    /// longest one that is a prefix of the remaining continuation.
    fn incremental_score(&self, prompt_text: &str, continuation: &str) -> Result<ContinuationScore, LmError> {
        let mut consumed = 0usize;
        let mut tokens = Vec::new();
        for _ in 0..self.config.max_score_steps {
            if consumed >= continuation.len() {
                return ContinuationScore::from_tokens(tokens);
            }
            let body = json!({
                "model": self.config.model,
                "prompt": format!("{prompt_text}{}", &continuation[..consumed]),
                "max_tokens": 1,
                "logprobs": 20,
                "temperature": 0,
            });
            let resp: CompletionResponse = self
                .client
                .post(&self.url("/v1/completions"), &body)
                .map_err(map_http)?;
            let top = resp
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.logprobs)
                .and_then(|l| l.top_logprobs.into_iter().next().flatten())
                .ok_or_else(|| LmError::CapabilityUnsupported("endpoint returns no top log-probs".into()))?;
            let rest = &continuation[consumed..];
            let (token, logprob) = top
                .into_iter()
                .filter(|(t, _)| !t.is_empty() && rest.starts_with(t.as_str()))
                .max_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| b.0.cmp(&a.0)))
                .ok_or_else(|| {
                    LmError::CapabilityUnsupported(format!(
                        "continuation token at byte {consumed} not among top log-probs"
                    ))
                })?;
            consumed += token.len();
            tokens.push(TokenLogprob { token, logprob });
        }
        Err(LmError::CapabilityUnsupported(
            "continuation longer than scoring step budget".into(),
        ))
    }
}

impl LanguageModel for OpenAiCompatible {
    fn generate(&self, prompt: &AssembledPrompt, params: &GenerationParams) -> Result<ScoredCompletion, LmError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
            "logprobs": true,
        });
        if !params.stop_sequences.is_empty() {
            body["stop"] = Value::from(params.stop_sequences.clone());
        }
        let resp: ChatResponse = self
            .client
            .post(&self.url("/v1/chat/completions"), &body)
            .map_err(map_http)?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| LmError::Protocol("no choices".into()))?;
        let raw = choice.message.content.unwrap_or_default();
        let text = truncate_at_stop(&raw, &params.stop_sequences);
        let mut tokens: Vec<TokenLogprob> = choice
            .logprobs
            .and_then(|l| l.content)
            .unwrap_or_default()
            .into_iter()
            .map(|t| TokenLogprob {
                token: t.token,
                logprob: t.logprob,
            })
            .collect();
        // Keep only tokens that fall inside the truncated text.
        let mut covered = 0usize;
        tokens.retain(|t| {
            let keep = covered < text.len();
            covered += t.token.len();
            keep
        });
        Ok(ScoredCompletion { text, tokens })
    }

    fn score_continuation(&self, prompt_text: &str, continuation: &str) -> Result<ContinuationScore, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        match self.echo_score(prompt_text, continuation) {
            Ok(s) => Ok(s),
            Err(HttpError::Status {
                status: 400 | 404 | 422 | 501,
                ..
            }) => self.incremental_score(prompt_text, continuation),
            Err(e) => Err(map_http(e)),
        }
    }
}
