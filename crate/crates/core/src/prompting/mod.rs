//! Cross-lingual prompt assembly: demonstrations of the four kinds in a
//! fixed mix, followed by the live block with the source-language fact and
//! the target-language question.

mod template;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::LanguageCode;
use crate::model::{base_id, Demonstration, KnowledgeFact, QueryKind, TaskId, UnifiedEntry};

pub use template::{PromptMode, TemplateSet, TemplateSetError, ANSWER_MARKER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Most similar demonstration last, next to the live block.
    SimilarityAscending,
    AsSelected,
}

/// Demonstrations per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoMix {
    pub reliability: usize,
    pub generality: usize,
    pub locality: usize,
    pub portability: usize,
}

impl Default for DemoMix {
    fn default() -> Self {
        DemoMix {
            reliability: 1,
            generality: 3,
            locality: 2,
            portability: 2,
        }
    }
}

impl DemoMix {
    pub fn zero() -> Self {
        DemoMix {
            reliability: 0,
            generality: 0,
            locality: 0,
            portability: 0,
        }
    }

    pub fn get(&self, kind: QueryKind) -> usize {
        match kind {
            QueryKind::Reliability => self.reliability,
            QueryKind::Generality => self.generality,
            QueryKind::Locality => self.locality,
            QueryKind::Portability => self.portability,
        }
    }

    pub fn total(&self) -> usize {
        QueryKind::ALL.iter().map(|&k| self.get(k)).sum()
    }

    pub fn histogram(kinds: impl IntoIterator<Item = QueryKind>) -> Self {
        let mut mix = DemoMix::zero();
        for k in kinds {
            *match k {
                QueryKind::Reliability => &mut mix.reliability,
                QueryKind::Generality => &mut mix.generality,
                QueryKind::Locality => &mut mix.locality,
                QueryKind::Portability => &mut mix.portability,
            } += 1;
        }
        mix
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub num_demos: usize,
    pub mix: DemoMix,
    pub order_policy: OrderPolicy,
    pub template_id: String,
    /// Context budget in estimated tokens (see [`estimate_tokens`]).
    pub context_limit: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            num_demos: 8,
            mix: DemoMix::default(),
            order_policy: OrderPolicy::SimilarityAscending,
            template_id: "mike-v1".into(),
            context_limit: 4096,
        }
    }
}

impl PromptConfig {
    pub fn zero_shot() -> Self {
        PromptConfig {
            num_demos: 0,
            mix: DemoMix::zero(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.mix.total() != self.num_demos {
            return Err(PromptError::MixMismatch {
                mix_total: self.mix.total(),
                num_demos: self.num_demos,
            });
        }
        if self.context_limit == 0 {
            return Err(PromptError::ZeroContextLimit);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledPrompt {
    pub text: String,
    pub demo_count: usize,
    pub mode: PromptMode,
    pub target_query: String,
    /// Kinds of the demonstrations that made it into `text`, in prompt order.
    pub demo_kinds: Vec<QueryKind>,
    /// Demonstrations removed to fit the context limit.
    pub dropped: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("demo mix sums to {mix_total} but num_demos is {num_demos}")]
    MixMismatch { mix_total: usize, num_demos: usize },
    #[error("context limit must be positive")]
    ZeroContextLimit,
    #[error("need {needed} demonstration entries, only {available} selected")]
    InsufficientDemos { needed: usize, available: usize },
    #[error("selected entry #{position} ({id}) has no {language} counterpart")]
    MissingCounterpart {
        position: usize,
        id: String,
        language: String,
    },
    #[error("counterpart {id} lacks a {kind} test")]
    MissingTest { id: String, kind: QueryKind },
    #[error("prompt needs ~{measured} tokens, limit is {limit}")]
    ContextOverflow { measured: usize, limit: usize },
    #[error(transparent)]
    Template(#[from] TemplateSetError),
}

/// Finds the same benchmark item in another language.
pub trait CounterpartLookup {
    fn counterpart(&self, base_id: &str, language: &LanguageCode) -> Option<&UnifiedEntry>;
}

/// Entries keyed by (base id, language).
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    by_key: HashMap<(String, LanguageCode), UnifiedEntry>,
}

impl CorpusIndex {
    pub fn new(entries: impl IntoIterator<Item = UnifiedEntry>) -> Self {
        let mut idx = CorpusIndex::default();
        idx.extend(entries);
        idx
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = UnifiedEntry>) {
        for e in entries {
            self.by_key.insert((base_id(&e.id).to_string(), e.language.clone()), e);
        }
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }
}

impl CounterpartLookup for CorpusIndex {
    fn counterpart(&self, base_id: &str, language: &LanguageCode) -> Option<&UnifiedEntry> {
        self.by_key.get(&(base_id.to_string(), language.clone()))
    }
}

/// Turns ranked corpus entries into demonstrations. Entries are taken in
/// rank order and assigned kinds round-robin (R, G, L, P, skipping kinds
/// whose quota is full) until every quota in `config.mix` is met. Output is
/// in rank order.
pub fn build_demonstrations(
    selected: &[&UnifiedEntry],
    config: &PromptConfig,
    source_lang: &LanguageCode,
    target_lang: &LanguageCode,
    corpus: &dyn CounterpartLookup,
) -> Result<Vec<Demonstration>, PromptError> {
    config.validate()?;
    let needed = config.num_demos;
    if selected.len() < needed {
        return Err(PromptError::InsufficientDemos {
            needed,
            available: selected.len(),
        });
    }
    let mut remaining: BTreeMap<QueryKind, usize> = QueryKind::ALL.iter().map(|&k| (k, config.mix.get(k))).collect();
    let mut cursor = 0usize;
    let mut demos = Vec::with_capacity(needed);

    for (position, entry) in selected.iter().enumerate().take(needed) {
        let kind = (0..4)
            .map(|step| QueryKind::ALL[(cursor + step) % 4])
            .find(|k| remaining[k] > 0)
            .expect("quota left while demos are still needed");
        *remaining.get_mut(&kind).unwrap() -= 1;
        cursor = (QueryKind::ALL.iter().position(|&k| k == kind).unwrap() + 1) % 4;

        let base = entry.base_id();
        let missing = |language: &LanguageCode| PromptError::MissingCounterpart {
            position,
            id: entry.id.clone(),
            language: language.to_string(),
        };
        let source = corpus
            .counterpart(base, source_lang)
            .ok_or_else(|| missing(source_lang))?;
        let target = corpus
            .counterpart(base, target_lang)
            .ok_or_else(|| missing(target_lang))?;
        let test = target.test(kind).ok_or_else(|| PromptError::MissingTest {
            id: target.id.clone(),
            kind,
        })?;
        demos.push(Demonstration {
            kind,
            fact: source.edit.clone(),
            query: test.query.clone(),
            answer: test.expected_answer.clone(),
            fact_id: source.id.clone(),
            query_id: target.id.clone(),
        });
    }
    Ok(demos)
}

/// Rough token count: UTF-8 bytes / 4, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

fn render(
    task: TaskId,
    fact: &KnowledgeFact,
    demos: &[&Demonstration],
    target_query: &str,
    templates: &TemplateSet,
) -> Result<String, PromptError> {
    let mode = if demos.is_empty() {
        PromptMode::ZeroShot
    } else {
        PromptMode::FewShot
    };
    let mut text = templates.preamble_for(task, mode)?.to_string();
    for d in demos {
        text.push_str(&template::fill(
            &templates.demo,
            &[
                ("{fact_query}", &d.fact.query),
                ("{fact_answer}", &d.fact.new_answer),
                ("{question}", &d.query),
                ("{answer}", &d.answer),
            ],
        ));
    }
    text.push_str(&template::fill(
        &templates.live,
        &[
            ("{fact_query}", &fact.query),
            ("{fact_answer}", &fact.new_answer),
            ("{question}", target_query),
        ],
    ));
    Ok(text)
}

/// Drop order when shrinking: most populous kind first, ties G, L, P, R.
const SHRINK_PRIORITY: [QueryKind; 4] = [
    QueryKind::Generality,
    QueryKind::Locality,
    QueryKind::Portability,
    QueryKind::Reliability,
];

/// Assembles the prompt. `demos` are in rank order (most similar first).
/// When the text exceeds the context limit, the lowest-ranked demonstration
/// of the most populous kind is dropped repeatedly before giving up.
pub fn assemble(
    task: TaskId,
    fact: &KnowledgeFact,
    demos: &[Demonstration],
    target_query: &str,
    config: &PromptConfig,
    templates: &TemplateSet,
) -> Result<AssembledPrompt, PromptError> {
    let mut kept: Vec<&Demonstration> = demos.iter().collect();
    let mut dropped = 0;
    loop {
        let ordered: Vec<&Demonstration> = match config.order_policy {
            OrderPolicy::SimilarityAscending => kept.iter().rev().copied().collect(),
            OrderPolicy::AsSelected => kept.clone(),
        };
        let text = render(task, fact, &ordered, target_query, templates)?;
        let measured = estimate_tokens(&text);
        if measured <= config.context_limit {
            return Ok(AssembledPrompt {
                text,
                demo_count: ordered.len(),
                mode: if ordered.is_empty() {
                    PromptMode::ZeroShot
                } else {
                    PromptMode::FewShot
                },
                target_query: target_query.to_string(),
                demo_kinds: ordered.iter().map(|d| d.kind).collect(),
                dropped,
            });
        }
        if kept.is_empty() {
            return Err(PromptError::ContextOverflow {
                measured,
                limit: config.context_limit,
            });
        }
        let counts = DemoMix::histogram(kept.iter().map(|d| d.kind));
        let victim_kind = SHRINK_PRIORITY
            .iter()
            .copied()
            .max_by_key(|&k| {
                (
                    counts.get(k),
                    std::cmp::Reverse(SHRINK_PRIORITY.iter().position(|&p| p == k)),
                )
            })
            .expect("non-empty");
        let victim = kept.iter().rposition(|d| d.kind == victim_kind).expect("kind present");
        kept.remove(victim);
        dropped += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::{lang, zsre_entry};

    fn corpus(n: usize, langs: &[&str]) -> (Vec<UnifiedEntry>, CorpusIndex) {
        let en: Vec<_> = (0..n).map(|i| zsre_entry(i, "en")).collect();
        let mut idx = CorpusIndex::new(en.clone());
        for code in langs {
            idx.extend((0..n).map(|i| zsre_entry(i, code)));
        }
        (en, idx)
    }

    #[test]
    fn default_mix_counts() {
        let (en, idx) = corpus(8, &["de"]);
        let selected: Vec<_> = en.iter().collect();
        let demos = build_demonstrations(&selected, &PromptConfig::default(), &lang("en"), &lang("de"), &idx).unwrap();
        let kinds: Vec<_> = demos.iter().map(|d| d.kind.letter()).collect();
        assert_eq!(kinds.iter().collect::<String>(), "RGLPGLPG");
        assert_eq!(DemoMix::histogram(demos.iter().map(|d| d.kind)), DemoMix::default());
        for d in &demos {
            assert!(!d.fact_id.ends_with("-de"));
            assert!(d.query_id.ends_with("-de"));
            assert_eq!(d.fact.language, lang("en"));
        }
    }

    #[test]
    fn reliability_only_mix() {
        let (en, idx) = corpus(2, &["fr"]);
        let config = PromptConfig {
            num_demos: 2,
            mix: DemoMix {
                reliability: 2,
                ..DemoMix::zero()
            },
            ..Default::default()
        };
        let selected: Vec<_> = en.iter().collect();
        let demos = build_demonstrations(&selected, &config, &lang("en"), &lang("fr"), &idx).unwrap();
        assert_eq!(demos.len(), 2);
        assert!(demos.iter().all(|d| d.kind == QueryKind::Reliability));
    }

    #[test]
    fn locality_demo_uses_unchanged_answer() {
        let (en, idx) = corpus(3, &["de"]);
        let selected: Vec<_> = en.iter().collect();
        let config = PromptConfig {
            num_demos: 3,
            mix: DemoMix {
                locality: 3,
                ..DemoMix::zero()
            },
            ..Default::default()
        };
        let demos = build_demonstrations(&selected, &config, &lang("en"), &lang("de"), &idx).unwrap();
        let target = idx.counterpart("zsre-000000", &lang("de")).unwrap();
        assert_eq!(
            demos[0].answer,
            target.test(QueryKind::Locality).unwrap().expected_answer
        );
    }

    #[test]
    fn missing_counterpart_is_named() {
        let en: Vec<_> = (0..8).map(|i| zsre_entry(i, "en")).collect();
        let mut idx = CorpusIndex::new(en.clone());
        idx.extend((0..8).filter(|&i| i != 3).map(|i| zsre_entry(i, "th")));
        let selected: Vec<_> = en.iter().collect();
        let err =
            build_demonstrations(&selected, &PromptConfig::default(), &lang("en"), &lang("th"), &idx).unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingCounterpart {
                position: 3,
                id: "zsre-000003".into(),
                language: "th".into()
            }
        );
    }

    #[test]
    fn insufficient_entries() {
        let (en, idx) = corpus(5, &["de"]);
        let selected: Vec<_> = en.iter().collect();
        assert_eq!(
            build_demonstrations(&selected, &PromptConfig::default(), &lang("en"), &lang("de"), &idx).unwrap_err(),
            PromptError::InsufficientDemos {
                needed: 8,
                available: 5
            }
        );
    }

    fn demos8() -> (KnowledgeFact, Vec<Demonstration>) {
        let (en, idx) = corpus(9, &["de"]);
        let selected: Vec<_> = en.iter().skip(1).collect();
        let demos = build_demonstrations(&selected, &PromptConfig::default(), &lang("en"), &lang("de"), &idx).unwrap();
        (en[0].edit.clone(), demos)
    }

    #[test]
    fn zero_shot_form() {
        let (fact, _) = demos8();
        let p = assemble(
            TaskId::Zsre,
            &fact,
            &[],
            "Wer?",
            &PromptConfig::zero_shot(),
            &TemplateSet::mike_v1(),
        )
        .unwrap();
        assert_eq!(p.mode, PromptMode::ZeroShot);
        assert_eq!(p.demo_count, 0);
        assert_eq!(p.text.matches("New Fact:").count(), 1);
        assert!(p.text.ends_with("Question: Wer?\nAnswer:"));
    }

    #[test]
    fn eight_demo_markers_and_determinism() {
        let (fact, demos) = demos8();
        let t = TemplateSet::mike_v1();
        let p = assemble(TaskId::Zsre, &fact, &demos, "Wer?", &PromptConfig::default(), &t).unwrap();
        assert_eq!(p.text.matches("New Fact:").count(), 9);
        assert_eq!(p.text.matches("Question:").count(), 9);
        assert_eq!(p.text.matches("Answer:").count(), 9);
        assert!(p.text.ends_with(ANSWER_MARKER));
        let again = assemble(TaskId::Zsre, &fact, &demos, "Wer?", &PromptConfig::default(), &t).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn ascending_order_puts_top_ranked_last() {
        let (fact, demos) = demos8();
        let t = TemplateSet::mike_v1();
        let asc = assemble(TaskId::Zsre, &fact, &demos, "q", &PromptConfig::default(), &t).unwrap();
        let first_block_end = asc.text.rfind("New Fact:").unwrap();
        let top = &demos[0];
        let pos_top = asc.text.find(&top.query).unwrap();
        let pos_last = asc.text.find(&demos[7].query).unwrap();
        assert!(pos_last < pos_top && pos_top < first_block_end);
        assert_eq!(asc.demo_kinds.first(), Some(&demos[7].kind));

        let config = PromptConfig {
            order_policy: OrderPolicy::AsSelected,
            ..Default::default()
        };
        let sel = assemble(TaskId::Zsre, &fact, &demos, "q", &config, &t).unwrap();
        assert!(sel.text.find(&demos[0].query).unwrap() < sel.text.find(&demos[7].query).unwrap());
    }

    #[test]
    fn overflow_drops_generality_first() {
        let (fact, demos) = demos8();
        let t = TemplateSet::mike_v1();
        let full = assemble(TaskId::Zsre, &fact, &demos, "q", &PromptConfig::default(), &t).unwrap();
        let one_less = estimate_tokens(&full.text) - 1;
        let config = PromptConfig {
            context_limit: one_less,
            ..Default::default()
        };
        let p = assemble(TaskId::Zsre, &fact, &demos, "q", &config, &t).unwrap();
        assert_eq!(p.dropped, 1);
        assert_eq!(p.demo_count, 7);
        assert_eq!(
            DemoMix::histogram(p.demo_kinds.iter().copied()),
            DemoMix {
                generality: 2,
                ..DemoMix::default()
            }
        );
        // The lowest-ranked generality demo (rank 7) is the one removed.
        assert!(!p.text.contains(&demos[7].query));

        let tiny = PromptConfig {
            context_limit: 5,
            ..Default::default()
        };
        assert!(matches!(
            assemble(TaskId::Zsre, &fact, &demos, "q", &tiny, &t),
            Err(PromptError::ContextOverflow { limit: 5, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = PromptConfig {
            num_demos: 7,
            ..Default::default()
        };
        assert_eq!(
            bad.validate(),
            Err(PromptError::MixMismatch {
                mix_total: 8,
                num_demos: 7
            })
        );
        PromptConfig::zero_shot().validate().unwrap();
    }
}
