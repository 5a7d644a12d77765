use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lang::LanguageCode;
use crate::lm::GenerationParams;
use crate::model::{TaskId, UnknownTag};
use crate::prompting::PromptConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Zero-shot: the new fact and the question, no demonstrations.
    #[serde(rename = "prompt")]
    PromptBaseline,
    MikeRandom,
    MikeSearch,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::PromptBaseline, Method::MikeRandom, Method::MikeSearch];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::PromptBaseline => "prompt",
            Method::MikeRandom => "mike_random",
            Method::MikeSearch => "mike_search",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = UnknownTag;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UnknownTag {
                what: "method",
                tag: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub task: TaskId,
    #[serde(default = "LanguageCode::english")]
    pub source_lang: LanguageCode,
    pub target_langs: Vec<LanguageCode>,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// Greedy decoding instead of the sampling parameters.
    #[serde(default)]
    pub deterministic: bool,
    /// Redraw the random demonstration set for every entry (ablation).
    #[serde(default)]
    pub redraw_per_entry: bool,
}

fn default_concurrency() -> usize {
    4
}

impl RunConfig {
    pub fn new(method: Method, task: TaskId, target_langs: Vec<LanguageCode>) -> Self {
        RunConfig {
            method,
            task,
            source_lang: LanguageCode::english(),
            target_langs,
            prompt: if method == Method::PromptBaseline {
                PromptConfig::zero_shot()
            } else {
                PromptConfig::default()
            },
            params: GenerationParams::default(),
            seed: 0,
            max_concurrency: default_concurrency(),
            deterministic: false,
            redraw_per_entry: false,
        }
    }

    /// All invariant violations, empty when the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.method == Method::PromptBaseline && self.prompt.num_demos != 0 {
            out.push(format!(
                "method prompt runs zero-shot but num_demos is {}",
                self.prompt.num_demos
            ));
        }
        if self.method != Method::PromptBaseline && self.prompt.num_demos == 0 {
            out.push(format!("method {} needs num_demos > 0", self.method));
        }
        if self.target_langs.is_empty() {
            out.push("target_langs is empty".into());
        }
        if self.target_langs.contains(&self.source_lang) {
            out.push(format!(
                "target_langs contains the source language {}",
                self.source_lang
            ));
        }
        let mut sorted = self.target_langs.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.target_langs.len() {
            out.push("target_langs has duplicates".into());
        }
        if let Err(e) = self.prompt.validate() {
            out.push(e.to_string());
        }
        if let Err(e) = self.params.validate() {
            out.push(e);
        }
        if self.max_concurrency == 0 {
            out.push("max_concurrency must be positive".into());
        }
        out
    }

    pub fn effective_params(&self) -> GenerationParams {
        if self.deterministic {
            self.params.greedy()
        } else {
            self.params.clone()
        }
    }
}
