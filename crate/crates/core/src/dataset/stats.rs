use serde::Serialize;
use thiserror::Error;

use crate::model::{QueryKind, TaskId, UnifiedEntry};

/// Summary row in the shape of the benchmark statistics table. Lengths are
/// mean whitespace-token counts of reliability queries and their answers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub task: TaskId,
    pub count: usize,
    pub q_len: f64,
    pub a_len: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus mixes tasks {0} and {1}")]
    MixedTasks(TaskId, TaskId),
    #[error("entry {0} has no reliability query")]
    MissingReliability(String),
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

pub fn corpus_stats(entries: &[UnifiedEntry]) -> Result<CorpusStats, StatsError> {
    let first = entries.first().ok_or(StatsError::EmptyCorpus)?;
    let (mut q_tokens, mut a_tokens) = (0usize, 0usize);
    for e in entries {
        if e.task != first.task {
            return Err(StatsError::MixedTasks(first.task, e.task));
        }
        let r = e
            .test(QueryKind::Reliability)
            .ok_or_else(|| StatsError::MissingReliability(e.id.clone()))?;
        q_tokens += r.query.split_whitespace().count();
        a_tokens += r.expected_answer.split_whitespace().count();
    }
    let n = entries.len() as f64;
    Ok(CorpusStats {
        task: first.task,
        count: entries.len(),
        q_len: round2(q_tokens as f64 / n),
        a_len: round2(a_tokens as f64 / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::zsre_entry;

    fn with_reliability(index: usize, q: &str, a: &str) -> UnifiedEntry {
        let mut e = zsre_entry(index, "en");
        let r = e.tests.get_mut(&QueryKind::Reliability).unwrap();
        r.query = q.into();
        r.expected_answer = a.into();
        e
    }

    #[test]
    fn hand_counted_means() {
        let entries = [
            with_reliability(0, "who wrote this book", "Smith"),
            with_reliability(1, "in which year was bridge opened", "nineteen oh three"),
        ];
        let s = corpus_stats(&entries).unwrap();
        assert_eq!(s.count, 2);
        assert_eq!(s.q_len, 5.0);
        assert_eq!(s.a_len, 2.0);
    }

    #[test]
    fn single_entry_and_rounding() {
        let s = corpus_stats(&[with_reliability(0, "a b c", "x y")]).unwrap();
        assert_eq!((s.q_len, s.a_len), (3.0, 2.0));
        let three = [
            with_reliability(0, "a", "x"),
            with_reliability(1, "a", "x"),
            with_reliability(2, "a b", "x"),
        ];
        assert_eq!(corpus_stats(&three).unwrap().q_len, 1.33);
    }

    #[test]
    fn errors() {
        assert_eq!(corpus_stats(&[]), Err(StatsError::EmptyCorpus));
        let mut other = zsre_entry(1, "en");
        other.task = TaskId::Wfd;
        assert_eq!(
            corpus_stats(&[zsre_entry(0, "en"), other]),
            Err(StatsError::MixedTasks(TaskId::Zsre, TaskId::Wfd))
        );
    }
}
