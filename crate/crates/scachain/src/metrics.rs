//! Evaluation statistics: completeness distributions, field accuracy against
//! gold annotations, and ROUGE scores.
//!
//! ROUGE tokenization is pinned so scores reproduce: lowercase, split on
//! whitespace, strip surrounding punctuation per token.

use crate::backends::similarity_fallback;
use crate::sca::{canonicalize, completeness, is_sentinel, ScaNode};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("gold references sentence {spec_id}/{clause_id}/{sentence_id} absent from extraction")]
    Alignment {
        spec_id: String,
        clause_id: String,
        sentence_id: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletenessDistribution {
    /// counts[k] holds the number of nodes with exactly k non-sentinel fields.
    pub counts: [u64; 5],
    pub percentages: [f64; 5],
    pub total: u64,
}

pub fn completeness_distribution(nodes: &[ScaNode]) -> CompletenessDistribution {
    let mut counts = [0u64; 5];
    for node in nodes {
        counts[completeness(node).fields_present as usize] += 1;
    }
    let total = nodes.len() as u64;
    let mut percentages = [0.0f64; 5];
    if total > 0 {
        for (p, c) in percentages.iter_mut().zip(counts.iter()) {
            *p = *c as f64 * 100.0 / total as f64;
        }
    }
    CompletenessDistribution {
        counts,
        percentages,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchMode {
    ExactCanonical,
    Similarity(f64),
}

impl MatchMode {
    pub fn label(&self) -> String {
        match self {
            MatchMode::ExactCanonical => "exact_canonical".to_string(),
            MatchMode::Similarity(t) => format!("similarity({t})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldAccuracyReport {
    pub start: f64,
    pub condition: f64,
    pub action: f64,
    pub end: f64,
    pub compared: u64,
    pub mode: String,
}

fn field_matches(extracted: &str, gold: &str, mode: MatchMode) -> bool {
    match (is_sentinel(extracted), is_sentinel(gold)) {
        (true, true) => true,
        (true, false) | (false, true) => false,
        (false, false) => match mode {
            MatchMode::ExactCanonical => canonicalize(extracted) == canonicalize(gold),
            MatchMode::Similarity(threshold) => similarity_fallback(extracted, gold) >= threshold,
        },
    }
}

/// Per-field accuracy of `extracted` against `gold`, aligned by source
/// sentence. Gold entries are the comparison universe; a gold entry with no
/// extracted counterpart is an alignment error, extra extracted nodes are
/// ignored.
pub fn field_accuracy(
    extracted: &[ScaNode],
    gold: &[ScaNode],
    mode: MatchMode,
) -> Result<FieldAccuracyReport, MetricsError> {
    let by_source: HashMap<(&str, &str, u64), &ScaNode> = extracted
        .iter()
        .map(|n| ((n.spec_id.as_str(), n.clause_id.as_str(), n.sentence_id), n))
        .collect();
    let mut matches = [0u64; 4];
    for g in gold {
        let e = by_source
            .get(&(g.spec_id.as_str(), g.clause_id.as_str(), g.sentence_id))
            .ok_or_else(|| MetricsError::Alignment {
                spec_id: g.spec_id.clone(),
                clause_id: g.clause_id.clone(),
                sentence_id: g.sentence_id,
            })?;
        for (slot, (ef, gf)) in e.fields().iter().zip(g.fields().iter()).enumerate() {
            if field_matches(ef, gf, mode) {
                matches[slot] += 1;
            }
        }
    }
    let compared = gold.len() as u64;
    let ratio = |m: u64| {
        if compared == 0 {
            0.0
        } else {
            m as f64 / compared as f64
        }
    };
    Ok(FieldAccuracyReport {
        start: ratio(matches[0]),
        condition: ratio(matches[1]),
        action: ratio(matches[2]),
        end: ratio(matches[3]),
        compared,
        mode: mode.label(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougePair {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougePair {
    const ZERO: RougePair = RougePair {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    fn from_counts(overlap: f64, candidate_units: usize, reference_units: usize) -> Self {
        if candidate_units == 0 || reference_units == 0 {
            return Self::ZERO;
        }
        let precision = overlap / candidate_units as f64;
        let recall = overlap / reference_units as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: RougePair,
    pub rouge2: RougePair,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougePair,
}

/// Lowercase whitespace tokens with surrounding punctuation stripped; empty
/// tokens drop out.
pub(crate) fn tokenize_words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Longest common subsequence length, rolling-row dynamic programming.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for item_a in a {
        for (j, item_b) in b.iter().enumerate() {
            cur[j + 1] = if item_a == item_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn clipped_ngram_overlap(candidate: &[String], reference: &[String], n: usize) -> (f64, usize, usize) {
    fn gram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
        let mut counts = HashMap::new();
        if tokens.len() >= n {
            for w in tokens.windows(n) {
                *counts.entry(w).or_insert(0) += 1;
            }
        }
        counts
    }
    let c = gram_counts(candidate, n);
    let r = gram_counts(reference, n);
    let overlap: usize = c
        .iter()
        .map(|(gram, count)| (*count).min(*r.get(*gram).unwrap_or(&0)))
        .sum();
    let cand_units = candidate.len().saturating_sub(n - 1);
    let ref_units = reference.len().saturating_sub(n - 1);
    (overlap as f64, cand_units, ref_units)
}

/// ROUGE-1/2 from clipped n-gram overlap and ROUGE-L from the LCS over word
/// tokens. Empty inputs score zero everywhere.
pub fn rouge(candidate: &str, reference: &str) -> RougeScores {
    let c = tokenize_words(candidate);
    let r = tokenize_words(reference);

    let (o1, c1, r1) = clipped_ngram_overlap(&c, &r, 1);
    let (o2, c2, r2) = clipped_ngram_overlap(&c, &r, 2);
    let lcs = lcs_len(&c, &r) as f64;

    RougeScores {
        rouge1: RougePair::from_counts(o1, c1, r1),
        rouge2: RougePair::from_counts(o2, c2, r2),
        rouge_l: RougePair::from_counts(lcs, c.len(), r.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca::{StateText, SENTINEL};

    fn node_with(id: u64, fields: [&str; 4]) -> ScaNode {
        ScaNode {
            node_id: id,
            spec_id: "TS 24.501".to_string(),
            clause_id: "5.4".to_string(),
            sentence_id: id,
            start_state: StateText::new(fields[0]),
            condition: fields[1].to_string(),
            action: fields[2].to_string(),
            end_state: StateText::new(fields[3]),
            references: vec![],
        }
    }

    #[test]
    fn distribution_counts_by_hand() {
        // Scores {4, 4, 0, 3} -> counts {0:1, 3:1, 4:2}.
        let nodes = vec![
            node_with(1, ["a", "b", "c", "d"]),
            node_with(2, ["a", "b", "c", "d"]),
            node_with(3, [SENTINEL, SENTINEL, SENTINEL, SENTINEL]),
            node_with(4, ["a", "b", "c", SENTINEL]),
        ];
        let dist = completeness_distribution(&nodes);
        assert_eq!(dist.counts, [1, 0, 0, 1, 2]);
        assert_eq!(dist.total, 4);
        assert!((dist.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn distribution_empty_corpus() {
        let dist = completeness_distribution(&[]);
        assert_eq!(dist.counts, [0; 5]);
        assert_eq!(dist.total, 0);
    }

    #[test]
    fn accuracy_identical_sets_is_one() {
        let nodes = vec![node_with(1, ["s", "c", "a", "e"])];
        let report = field_accuracy(&nodes, &nodes.clone(), MatchMode::ExactCanonical).unwrap();
        assert_eq!(
            (report.start, report.condition, report.action, report.end),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn accuracy_sentinel_matches_only_sentinel() {
        let extracted = vec![node_with(1, [SENTINEL, SENTINEL, SENTINEL, SENTINEL])];
        let gold = vec![node_with(1, ["s", "c", "a", SENTINEL])];
        let report = field_accuracy(&extracted, &gold, MatchMode::ExactCanonical).unwrap();
        assert_eq!(
            (report.start, report.condition, report.action, report.end),
            (0.0, 0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn accuracy_four_of_five_actions() {
        // Hand-matched fixture: five aligned pairs, the action differs in
        // exactly one of them under exact canonical matching.
        let extracted: Vec<ScaNode> = (1..=5)
            .map(|i| node_with(i, ["s", "c", "stop timer T3540", "e"]))
            .collect();
        let mut gold = extracted.clone();
        gold[2].action = "a different action".to_string();
        let report = field_accuracy(&extracted, &gold, MatchMode::ExactCanonical).unwrap();
        assert!((report.action - 0.8).abs() < 1e-12);
        assert_eq!(report.start, 1.0);
        assert_eq!(report.compared, 5);
    }

    #[test]
    fn accuracy_alignment_error() {
        let extracted = vec![node_with(1, ["s", "c", "a", "e"])];
        let mut gold = vec![node_with(1, ["s", "c", "a", "e"])];
        gold[0].sentence_id = 42;
        assert!(matches!(
            field_accuracy(&extracted, &gold, MatchMode::ExactCanonical),
            Err(MetricsError::Alignment { sentence_id: 42, .. })
        ));
    }

    #[test]
    fn rouge_identical_strings() {
        let scores = rouge("the UE shall proceed", "the UE shall proceed");
        for pair in [scores.rouge1, scores.rouge2, scores.rouge_l] {
            assert!((pair.precision - 1.0).abs() < 1e-12);
            assert!((pair.recall - 1.0).abs() < 1e-12);
            assert!((pair.f1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rouge_l_hand_computed() {
        // LCS("a c", "a b c") = 2; P = 1.0, R = 2/3, F1 = 0.8.
        let scores = rouge("a c", "a b c");
        assert!((scores.rouge_l.precision - 1.0).abs() < 1e-12);
        assert!((scores.rouge_l.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((scores.rouge_l.f1 - 0.8).abs() < 1e-9);
    }

    #[test]
    fn rouge_disjoint_strings() {
        let scores = rouge("alpha beta", "gamma delta");
        assert_eq!(scores.rouge1.f1, 0.0);
        assert_eq!(scores.rouge2.f1, 0.0);
        assert_eq!(scores.rouge_l.f1, 0.0);
    }

    #[test]
    fn rouge_empty_inputs_are_zero() {
        let scores = rouge("", "anything");
        assert_eq!(scores.rouge_l, RougePair::ZERO);
    }

    #[test]
    fn lcs_matches_textbook_cases() {
        let a: Vec<&str> = "a b c b d a b".split(' ').collect();
        let b: Vec<&str> = "b d c a b a".split(' ').collect();
        assert_eq!(lcs_len(&a, &b), 4);
        assert_eq!(lcs_len(&a, &[]), 0);
    }
}
