//! The pipeline config file. Paths are resolved against the file's
//! directory; secrets come only from the environment.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use xlke::dataset::{HttpTranslator, IdentityTranslator, ReverseTranslator, Translator};
use xlke::http::RetryPolicy;
use xlke::lm::{GenerationParams, LanguageModel, MockFallback, MockLm, MockScript, OpenAiCompatible, OpenAiConfig};
use xlke::prompting::{PromptConfig, TemplateSet};
use xlke::retrieval::{EmbeddingProvider, HashEmbedder, HttpEmbedder};
use xlke::runner::{Method, RunConfig};
use xlke::{LanguageCode, TaskId};

pub const LM_KEY_VAR: &str = "XLKE_LM_API_KEY";
pub const EMBED_KEY_VAR: &str = "XLKE_EMBED_API_KEY";
pub const TRANSLATE_KEY_VAR: &str = "XLKE_TRANSLATE_API_KEY";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub run: RunSection,
    pub prompt: Option<PromptConfig>,
    #[serde(default)]
    pub params: GenerationParams,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub embedder: EmbedderSection,
    #[serde(default)]
    pub translator: TranslatorSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub task: Option<TaskId>,
    pub dataset: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// A built-in template id or a path to a template TOML file.
    pub templates: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub method: Option<Method>,
    pub source_lang: Option<LanguageCode>,
    #[serde(default)]
    pub target_langs: Vec<LanguageCode>,
    pub seed: Option<u64>,
    pub max_concurrency: Option<usize>,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub redraw_per_entry: bool,
    /// Parent directory for run directories.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LmBackend {
    #[default]
    Mock,
    Openai,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmSection {
    #[serde(default)]
    pub backend: LmBackend,
    pub mock_script: Option<PathBuf>,
    #[serde(default)]
    pub mock_fallback: MockFallback,
    pub base_url: Option<String>,
    pub model: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    pub max_score_steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderBackend {
    #[default]
    Hash,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderSection {
    #[serde(default)]
    pub backend: EmbedderBackend,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Vector store reused across runs.
    pub cache: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TranslatorBackend {
    #[default]
    Identity,
    Reverse,
    Http,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslatorSection {
    #[serde(default)]
    pub backend: TranslatorBackend,
    pub endpoint: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn secret(var: &str) -> Option<String> {
    std::env::var(var).ok().filter(|v| !v.is_empty())
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn require_path(&self, value: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        match value {
            Some(p) => Ok(self.resolve(p)),
            None => bail!("config key {key} is required"),
        }
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        let id = self.data.templates.as_deref().unwrap_or("mike-v1");
        match TemplateSet::builtin(id) {
            Ok(t) => Ok(t),
            Err(_) => {
                let path = self.resolve(Path::new(id));
                TemplateSet::load(&path).with_context(|| format!("loading templates {}", path.display()))
            }
        }
    }

    /// The run config with file values, before command-line overrides.
    pub fn run_config(&self, method: Option<Method>) -> Result<RunConfig> {
        let method = method
            .or(self.run.method)
            .context("no method given (config key run.method or --method)")?;
        let task = self.data.task.context("config key data.task is required")?;
        let mut config = RunConfig::new(method, task, self.run.target_langs.clone());
        if let Some(src) = &self.run.source_lang {
            config.source_lang = src.clone();
        }
        if method != Method::PromptBaseline {
            if let Some(p) = &self.prompt {
                config.prompt = p.clone();
            }
        } else if let Some(p) = &self.prompt {
            // The baseline keeps the layout settings but never takes demos.
            config.prompt.template_id = p.template_id.clone();
            config.prompt.context_limit = p.context_limit;
        }
        config.params = self.params.clone();
        config.seed = self.run.seed.unwrap_or(0);
        if let Some(c) = self.run.max_concurrency {
            config.max_concurrency = c;
        }
        config.deterministic = self.run.deterministic;
        config.redraw_per_entry = self.run.redraw_per_entry;
        Ok(config)
    }

    /// The model client and a label identifying it for run snapshots.
    pub fn language_model(&self) -> Result<(Box<dyn LanguageModel>, String)> {
        match self.lm.backend {
            LmBackend::Mock => {
                let (script, label) = match &self.lm.mock_script {
                    Some(p) => {
                        let path = self.resolve(p);
                        let text = std::fs::read_to_string(&path)
                            .with_context(|| format!("reading mock script {}", path.display()))?;
                        let script = xlke::lm::parse_mock_script(&text)
                            .with_context(|| format!("mock script {}", path.display()))?;
                        let label = format!("mock:{}", xlke::text::Fingerprint::of(&text));
                        (script, label)
                    }
                    None => (MockScript::default(), "mock:empty".to_string()),
                };
                let script = MockScript {
                    fallback: self.lm.mock_fallback,
                    ..script
                };
                let fallback = serde_json::to_value(self.lm.mock_fallback)?;
                let label = format!("{label}:{}", fallback.as_str().unwrap_or_default());
                Ok((Box::new(MockLm::new(script)), label))
            }
            LmBackend::Openai => {
                let base_url = self.lm.base_url.clone().context("config key lm.base_url is required")?;
                let model = self.lm.model.clone().context("config key lm.model is required")?;
                let label = format!("openai:{base_url}:{model}");
                let mut cfg = OpenAiConfig {
                    base_url,
                    model,
                    api_key: secret(LM_KEY_VAR),
                    retry: self.lm.retry,
                    max_score_steps: 128,
                };
                if let Some(s) = self.lm.max_score_steps {
                    cfg.max_score_steps = s;
                }
                Ok((Box::new(OpenAiCompatible::new(cfg)?), label))
            }
        }
    }

    pub fn embedder(&self, backend: Option<EmbedderBackend>) -> Result<Box<dyn EmbeddingProvider>> {
        match backend.unwrap_or(self.embedder.backend) {
            EmbedderBackend::Hash => Ok(Box::new(HashEmbedder)),
            EmbedderBackend::Http => {
                let endpoint = self
                    .embedder
                    .endpoint
                    .clone()
                    .context("config key embedder.endpoint is required")?;
                let model = self.embedder.model.clone().unwrap_or_default();
                Ok(Box::new(HttpEmbedder::new(
                    endpoint,
                    model,
                    secret(EMBED_KEY_VAR),
                    self.embedder.retry,
                )?))
            }
        }
    }

    pub fn translator(&self, backend: Option<TranslatorBackend>) -> Result<Box<dyn Translator>> {
        match backend.unwrap_or(self.translator.backend) {
            TranslatorBackend::Identity => Ok(Box::new(IdentityTranslator)),
            TranslatorBackend::Reverse => Ok(Box::new(ReverseTranslator)),
            TranslatorBackend::Http => {
                let endpoint = self
                    .translator
                    .endpoint
                    .clone()
                    .context("config key translator.endpoint is required")?;
                Ok(Box::new(HttpTranslator::new(
                    endpoint,
                    secret(TRANSLATE_KEY_VAR),
                    self.translator.retry,
                )?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[run]\nmethood = \"prompt\"\n").is_err());
        assert!(toml::from_str::<FileConfig>("[lm]\napi_key = \"sk-123\"\n").is_err());
    }

    #[test]
    fn baseline_ignores_demo_settings() {
        let cfg: FileConfig = toml::from_str(
            "[data]\ntask = \"zsre\"\n[run]\ntarget_langs = [\"de\"]\n\
             [prompt]\nnum_demos = 8\ntemplate_id = \"mike-v1\"\ncontext_limit = 2048\norder_policy = \"as_selected\"\n\
             [prompt.mix]\nreliability = 1\ngenerality = 3\nlocality = 2\nportability = 2\n",
        )
        .unwrap();
        let base = cfg.run_config(Some(Method::PromptBaseline)).unwrap();
        assert_eq!(base.prompt.num_demos, 0);
        assert_eq!(base.prompt.context_limit, 2048);
        let mike = cfg.run_config(Some(Method::MikeRandom)).unwrap();
        assert_eq!(mike.prompt.num_demos, 8);
    }
}
