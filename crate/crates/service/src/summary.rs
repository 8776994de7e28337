//! Session summaries as a fold over the event log.

use std::collections::{BTreeMap, HashMap};

use glossmt_core::metrics::{evaluate, EvalInstance, EvalReport, Tokenization};
use glossmt_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::session::{start_of, ActionEvent, ActionKind, Condition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub instance_id: u64,
    pub condition: Condition,
    pub opened_ms: Option<u64>,
    pub submitted_ms: Option<u64>,
    /// Submit time minus open time.
    pub elapsed_ms: Option<u64>,
    pub elapsed_s: Option<f64>,
    pub word_searches: usize,
    pub corpus_searches: usize,
    pub llm_views: usize,
    pub edits: usize,
    /// Searches of either kind keyed by `kind:lang`.
    pub searches_by_lang: BTreeMap<String, usize>,
    pub translation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub submitted: usize,
    pub mean_elapsed_s: f64,
    pub mean_word_searches: f64,
    pub mean_corpus_searches: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub participant: String,
    pub started_ms: u64,
    pub instances: Vec<InstanceSummary>,
    pub submitted: usize,
    pub word_searches: usize,
    pub corpus_searches: usize,
    pub llm_views: usize,
    pub edits: usize,
    pub by_condition: BTreeMap<Condition, ConditionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
}

/// Folds a session's events into its summary. Fails when nothing has been submitted.
///
/// Counts include events logged before any instance was opened; per-instance counts only
/// cover events carrying that instance id. Only the first submit of an instance counts.
pub fn summarize(events: &[ActionEvent]) -> Result<SessionSummary> {
    let start = start_of(events)?;
    let first = &events[0];
    let mut rows: Vec<InstanceSummary> = start
        .assignments
        .iter()
        .map(|a| InstanceSummary {
            instance_id: a.instance_id,
            condition: a.condition,
            opened_ms: None,
            submitted_ms: None,
            elapsed_ms: None,
            elapsed_s: None,
            word_searches: 0,
            corpus_searches: 0,
            llm_views: 0,
            edits: 0,
            searches_by_lang: BTreeMap::new(),
            translation: None,
        })
        .collect();
    let index: HashMap<u64, usize> = rows.iter().enumerate().map(|(i, r)| (r.instance_id, i)).collect();

    let mut totals = [0usize; 4];
    for e in &events[1..] {
        if e.session_id != first.session_id {
            return Err(Error::Data(format!("event for session {} in log of {}", e.session_id, first.session_id)));
        }
        match e.kind {
            ActionKind::WordSearch => totals[0] += 1,
            ActionKind::CorpusSearch => totals[1] += 1,
            ActionKind::LlmView => totals[2] += 1,
            ActionKind::Edit => totals[3] += 1,
            _ => {}
        }
        let Some(row) = e.instance_id.and_then(|id| index.get(&id)).map(|&i| &mut rows[i]) else {
            continue;
        };
        match e.kind {
            ActionKind::InstanceOpen => {
                row.opened_ms.get_or_insert(e.ts_ms);
            }
            ActionKind::WordSearch | ActionKind::CorpusSearch => {
                if e.kind == ActionKind::WordSearch {
                    row.word_searches += 1;
                } else {
                    row.corpus_searches += 1;
                }
                let kind = if e.kind == ActionKind::WordSearch { "word" } else { "corpus" };
                let key = format!("{kind}:{}", e.lang.as_deref().unwrap_or("?"));
                *row.searches_by_lang.entry(key).or_insert(0) += 1;
            }
            ActionKind::LlmView => row.llm_views += 1,
            ActionKind::Edit => row.edits += 1,
            ActionKind::Submit if row.submitted_ms.is_none() => {
                row.submitted_ms = Some(e.ts_ms);
                row.translation = Some(e.payload.clone());
                if let Some(open) = row.opened_ms {
                    let ms = e.ts_ms.saturating_sub(open);
                    row.elapsed_ms = Some(ms);
                    row.elapsed_s = Some(ms as f64 / 1000.0);
                }
            }
            _ => {}
        }
    }

    let submitted = rows.iter().filter(|r| r.submitted_ms.is_some()).count();
    if submitted == 0 {
        return Err(Error::Data(format!("session {} has no submissions", first.session_id)));
    }

    let mut by_condition = BTreeMap::new();
    for cond in [Condition::HumanOnly, Condition::HumanLlm] {
        let done: Vec<&InstanceSummary> = rows
            .iter()
            .filter(|r| r.condition == cond && r.elapsed_ms.is_some())
            .collect();
        if done.is_empty() {
            continue;
        }
        let n = done.len() as f64;
        by_condition.insert(
            cond,
            ConditionSummary {
                submitted: done.len(),
                mean_elapsed_s: done.iter().filter_map(|r| r.elapsed_s).sum::<f64>() / n,
                mean_word_searches: done.iter().map(|r| r.word_searches as f64).sum::<f64>() / n,
                mean_corpus_searches: done.iter().map(|r| r.corpus_searches as f64).sum::<f64>() / n,
            },
        );
    }

    Ok(SessionSummary {
        session_id: first.session_id.clone(),
        participant: start.participant,
        started_ms: first.ts_ms,
        instances: rows,
        submitted,
        word_searches: totals[0],
        corpus_searches: totals[1],
        llm_views: totals[2],
        edits: totals[3],
        by_condition,
        report: None,
    })
}

/// Scores the submitted translations against `references`. Instances without a reference
/// are skipped; returns `None` when nothing is left to score.
pub fn score(summary: &SessionSummary, references: &HashMap<u64, String>, tok: Tokenization) -> Option<EvalReport> {
    let instances: Vec<EvalInstance> = summary
        .instances
        .iter()
        .filter_map(|r| {
            let hyp = r.translation.as_ref()?;
            let reference = references.get(&r.instance_id)?;
            Some(EvalInstance::new(hyp.clone(), reference.clone(), None))
        })
        .collect();
    if instances.is_empty() {
        return None;
    }
    evaluate(&instances, tok, false).ok()
}
