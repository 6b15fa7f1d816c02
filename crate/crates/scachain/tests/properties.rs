//! Property tests for the module invariants.

use proptest::prelude::*;
use scachain::backends::similarity_fallback;
use scachain::chains::{assemble_chains, ConnectionEdge, EdgeKind};
use scachain::corpus::{detect_references, sanitize, segment};
use scachain::metrics::{completeness_distribution, rouge};
use scachain::sca::{canonicalize, completeness, ScaNode, StateText, SENTINEL};
use scachain::vulntester::{parse_structured, render, Direction, RenderFormat, TestCase, TestStep, Verdict, ViolationKey};

/// Text made of spec-ish words, dirt, and reference phrases.
fn dirtyish_text() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        Just("the UE shall send".to_string()),
        Just("as specified in subclause 5.4".to_string()),
        Just("see subclause 5.5.1.3.2".to_string()),
        Just("timer T3540".to_string()),
        Just("()".to_string()),
        Just("- bullet".to_string()),
        Just("Table 5-1: caption".to_string()),
        Just("| a | b | c |".to_string()),
        Just("\u{2192}\u{25cf}".to_string()),
        Just("  ".to_string()),
        "[a-zA-Z0-9 .,;()|-]{0,12}",
    ];
    proptest::collection::vec(atom, 0..12).prop_map(|atoms| {
        let mut out = String::new();
        for (i, atom) in atoms.iter().enumerate() {
            out.push_str(atom);
            out.push(if i % 3 == 2 { '\n' } else { ' ' });
        }
        out
    })
}

fn word_string() -> impl Strategy<Value = String> {
    proptest::collection::vec("[a-z]{1,6}", 0..8).prop_map(|words| words.join(" "))
}

proptest! {
    #[test]
    fn sanitize_is_idempotent(raw in dirtyish_text()) {
        let once = sanitize(&raw);
        prop_assert_eq!(sanitize(&once), once);
    }

    #[test]
    fn detected_reference_spans_are_in_bounds_and_disjoint(text in dirtyish_text()) {
        let clean = sanitize(&text);
        let refs = detect_references(&clean);
        let mut last_end = 0usize;
        for r in &refs {
            let (start, end) = r.source_span;
            prop_assert!(start < end && end <= clean.len());
            prop_assert!(start >= last_end, "overlapping spans");
            last_end = end;
            // The source phrase appears verbatim at its span.
            prop_assert!(clean[start..end].to_lowercase().contains("clause")
                || clean[start..end].to_uppercase().contains("TS"));
        }
    }

    #[test]
    fn segment_sentence_ids_strictly_increase(body in dirtyish_text(), extra in dirtyish_text()) {
        let doc = format!("5\tGeneral\n{body}\n5.4\tProcedures\n{extra}\n");
        let outcome = segment("TS 0.000", &doc);
        let ids: Vec<u64> = outcome
            .document
            .to_records()
            .iter()
            .map(|r| r.sentence_id)
            .collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        for (_, sentence) in outcome.document.iter_sentences() {
            // Sentences are sanitized: no doubled whitespace, no line breaks.
            prop_assert!(!sentence.text.contains("  "));
            prop_assert!(!sentence.text.contains('\n'));
            prop_assert_eq!(sentence.text.trim(), sentence.text.as_str());
        }
    }

    #[test]
    fn similarity_is_symmetric_bounded_and_reflexive(a in word_string(), b in word_string()) {
        let ab = similarity_fallback(&a, &b);
        let ba = similarity_fallback(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        if !a.trim().is_empty() {
            prop_assert!((similarity_fallback(&a, &a) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn canonicalize_is_idempotent(s in "[A-Za-z0-9 _.,;()-]{0,40}") {
        let once = canonicalize(&s);
        prop_assert_eq!(canonicalize(&once), once);
    }

    #[test]
    fn completeness_distribution_sums_to_input_size(
        masks in proptest::collection::vec(proptest::array::uniform4(any::<bool>()), 0..40)
    ) {
        let nodes: Vec<ScaNode> = masks
            .iter()
            .enumerate()
            .map(|(i, mask)| {
                let field = |on: bool| if on { "text".to_string() } else { SENTINEL.to_string() };
                ScaNode {
                    node_id: i as u64 + 1,
                    spec_id: "TS 0.000".to_string(),
                    clause_id: "1".to_string(),
                    sentence_id: i as u64 + 1,
                    start_state: StateText::new(field(mask[0])),
                    condition: field(mask[1]),
                    action: field(mask[2]),
                    end_state: StateText::new(field(mask[3])),
                    references: vec![],
                }
            })
            .collect();
        let dist = completeness_distribution(&nodes);
        prop_assert_eq!(dist.counts.iter().sum::<u64>(), nodes.len() as u64);
        for node in &nodes {
            let k = completeness(node).fields_present;
            prop_assert!(k <= 4);
        }
        if !nodes.is_empty() {
            prop_assert!((dist.percentages.iter().sum::<f64>() - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rouge_scores_stay_in_unit_range_and_reflexive(a in word_string(), b in word_string()) {
        let scores = rouge(&a, &b);
        for pair in [scores.rouge1, scores.rouge2, scores.rouge_l] {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pair.precision));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pair.recall));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pair.f1));
        }
        // Swapping candidate and reference swaps P and R but keeps F1.
        let swapped = rouge(&b, &a);
        prop_assert!((scores.rouge_l.f1 - swapped.rouge_l.f1).abs() < 1e-12);
        prop_assert!((scores.rouge_l.precision - swapped.rouge_l.recall).abs() < 1e-12);
        if !a.trim().is_empty() {
            let self_scores = rouge(&a, &a);
            prop_assert!((self_scores.rouge_l.f1 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_assembly_ignores_edge_order(
        raw_edges in proptest::collection::vec((1u64..12, 1u64..12, 0u8..3), 0..24),
        seed in any::<u64>(),
    ) {
        let nodes: Vec<ScaNode> = (1..12u64)
            .map(|id| ScaNode {
                node_id: id,
                spec_id: "TS 0.000".to_string(),
                clause_id: "1".to_string(),
                sentence_id: id,
                start_state: StateText::sentinel(),
                condition: SENTINEL.to_string(),
                action: SENTINEL.to_string(),
                end_state: StateText::sentinel(),
                references: vec![],
            })
            .collect();
        let mut edges: Vec<ConnectionEdge> = raw_edges
            .iter()
            .filter(|(src, dst, _)| src != dst)
            .map(|&(src, dst, kind)| ConnectionEdge {
                src,
                dst,
                kind: match kind {
                    0 => EdgeKind::Temporal,
                    1 => EdgeKind::Semantic,
                    _ => EdgeKind::Causal,
                },
                via_reference: false,
                score: None,
            })
            .collect();
        edges.sort_by(|a, b| (a.src, a.dst, a.kind).cmp(&(b.src, b.dst, b.kind)));
        edges.dedup();
        let baseline = assemble_chains(&edges, &nodes);

        // Deterministic shuffle from the seed.
        let mut shuffled = edges.clone();
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state as usize) % (i + 1));
        }
        prop_assert_eq!(assemble_chains(&shuffled, &nodes), baseline.clone());

        for chain in &baseline {
            // Connectivity: every member reachable from the chain's first
            // node over undirected edges.
            let mut reach = std::collections::BTreeSet::new();
            let first = *chain.node_ids.iter().next().unwrap();
            reach.insert(first);
            loop {
                let before = reach.len();
                for e in &chain.edges {
                    if reach.contains(&e.src) || reach.contains(&e.dst) {
                        reach.insert(e.src);
                        reach.insert(e.dst);
                    }
                }
                if reach.len() == before {
                    break;
                }
            }
            prop_assert_eq!(&reach, &chain.node_ids);
            for e in &chain.edges {
                prop_assert!(chain.node_ids.contains(&e.src) && chain.node_ids.contains(&e.dst));
            }
        }
    }

    #[test]
    fn structured_test_case_round_trips(
        preamble in "[ -~]{0,40}",
        outcome in "[ -~]{0,40}",
        procedures in proptest::collection::vec("[ -~]{0,30}", 1..8),
    ) {
        let steps: Vec<TestStep> = procedures
            .iter()
            .enumerate()
            .map(|(i, procedure)| TestStep {
                step_no: i as u32 + 1,
                procedure: procedure.clone(),
                direction: match i % 3 {
                    0 => Direction::UeToNw,
                    1 => Direction::NwToUe,
                    _ => Direction::None,
                },
                message: if i % 2 == 0 { "REGISTRATION REQUEST".to_string() } else { "-".to_string() },
                parameter: "-".to_string(),
                verdict: if i + 1 == procedures.len() { Verdict::Fail } else { Verdict::None },
            })
            .collect();
        let case = TestCase {
            test_id: "tc-0001-00001-replay-service_integrity".to_string(),
            violation: ViolationKey {
                chain_id: 1,
                node_id: 1,
                action_id: scachain::oracle::AttackAction::Replay,
                property_id: "service_integrity".to_string(),
            },
            preamble,
            steps,
            expected_outcome: outcome,
        };
        let rendered = render(&case, RenderFormat::Structured);
        prop_assert_eq!(parse_structured(&rendered).unwrap(), case);
    }
}
