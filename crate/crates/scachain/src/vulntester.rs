//! Test-case synthesis from recorded security violations.
//!
//! A test case replays the violated node's chain context: a preamble step
//! establishing the initial state, one setup step per chain predecessor in
//! topological order, the attack-injection steps for the violation's action,
//! and a final observation step carrying the only verdict (Fail at the point
//! where compliant behaviour breaks).
//!
//! Direction convention: attacker steps carry the direction of the message
//! they act on.

use crate::chains::FunctionChain;
use crate::oracle::{detect_message, AttackAction, Violation};
use crate::sca::{is_sentinel, ScaNode};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("violation references node {node_id} absent from chain {chain_id}")]
    DanglingViolation { node_id: u64, chain_id: u64 },
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UE→NW")]
    UeToNw,
    #[serde(rename = "NW→UE")]
    NwToUe,
    #[serde(rename = "none")]
    None,
}

impl Direction {
    pub fn glyph(&self) -> &'static str {
        match self {
            Direction::UeToNw => "→",
            Direction::NwToUe => "←",
            Direction::None => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Fail,
    #[serde(rename = "-")]
    None,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "Pass",
            Verdict::Fail => "Fail",
            Verdict::None => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestStep {
    pub step_no: u32,
    pub procedure: String,
    pub direction: Direction,
    pub message: String,
    pub parameter: String,
    pub verdict: Verdict,
}

/// The violation tuple a test case was synthesized from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationKey {
    pub chain_id: u64,
    pub node_id: u64,
    pub action_id: AttackAction,
    pub property_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub test_id: String,
    pub violation: ViolationKey,
    pub preamble: String,
    pub steps: Vec<TestStep>,
    pub expected_outcome: String,
}

pub const TABLE_HEADER: &str = "Step | Procedure | U–M | Message | Parameter | Verdict";

const PREDECESSOR_DEPTH_LIMIT: usize = 6;

fn test_id(v: &Violation) -> String {
    format!(
        "tc-{:04}-{:05}-{}-{}",
        v.chain_id,
        v.node_id,
        v.action_id.id(),
        v.property_id
    )
}

/// Direction of the node's message, read from sender cues in its text.
fn infer_direction(node: &ScaNode) -> Direction {
    let text = format!("{} {}", node.condition, node.action).to_lowercase();
    if text.contains("ue shall send")
        || text.contains("ue sends")
        || text.contains("ue shall initiate")
        || text.contains("ue initiates")
    {
        Direction::UeToNw
    } else if text.contains("network sends")
        || (text.contains("upon receipt") && text.contains("from the network"))
    {
        Direction::NwToUe
    } else {
        Direction::None
    }
}

fn node_procedure(node: &ScaNode) -> String {
    let cond = (!is_sentinel(&node.condition)).then_some(node.condition.as_str());
    let act = (!is_sentinel(&node.action)).then_some(node.action.as_str());
    match (cond, act) {
        (Some(c), Some(a)) => format!("{c}, {a}."),
        (None, Some(a)) => format!("The UE proceeds: {a}."),
        (Some(c), None) => format!("{c}."),
        (None, None) => {
            if node.start_state.is_sentinel() && node.end_state.is_sentinel() {
                "No explicit behaviour is recorded for this step.".to_string()
            } else {
                format!(
                    "State moves from {} to {}.",
                    node.start_state.raw(),
                    node.end_state.raw()
                )
            }
        }
    }
}

/// Chain predecessors of `target` within the depth bound, in topological
/// order (ties broken by ascending node id; cycles broken at the minimum id).
fn ordered_predecessors(chain: &FunctionChain, target: u64) -> Vec<u64> {
    let mut reverse: HashMap<u64, Vec<u64>> = HashMap::new();
    let mut forward: HashMap<u64, Vec<u64>> = HashMap::new();
    for e in &chain.edges {
        reverse.entry(e.dst).or_default().push(e.src);
        forward.entry(e.src).or_default().push(e.dst);
    }

    let mut ancestors: BTreeSet<u64> = BTreeSet::new();
    let mut frontier = vec![target];
    for _ in 0..PREDECESSOR_DEPTH_LIMIT {
        let mut next = Vec::new();
        for id in frontier {
            for &p in reverse.get(&id).map(|v| v.as_slice()).unwrap_or(&[]) {
                if p != target && ancestors.insert(p) {
                    next.push(p);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }

    // Kahn over the induced subgraph, smallest node id first.
    let mut indegree: BTreeMap<u64, usize> = ancestors.iter().map(|&id| (id, 0)).collect();
    for &id in &ancestors {
        for &succ in forward.get(&id).map(|v| v.as_slice()).unwrap_or(&[]) {
            if ancestors.contains(&succ) {
                *indegree.get_mut(&succ).unwrap() += 1;
            }
        }
    }
    let mut order = Vec::with_capacity(ancestors.len());
    let mut remaining = indegree;
    while !remaining.is_empty() {
        let next_id = remaining
            .iter()
            .find(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            // All remaining nodes sit on a cycle; cut at the smallest id.
            .unwrap_or_else(|| *remaining.keys().next().unwrap());
        remaining.remove(&next_id);
        order.push(next_id);
        for &succ in forward.get(&next_id).map(|v| v.as_slice()).unwrap_or(&[]) {
            if let Some(d) = remaining.get_mut(&succ) {
                *d = d.saturating_sub(1);
            }
        }
    }
    order
}

/// Builds the test case for one violation.
pub fn synthesize(
    violation: &Violation,
    chain: &FunctionChain,
    nodes: &HashMap<u64, &ScaNode>,
) -> Result<TestCase, SynthesisError> {
    if !chain.node_ids.contains(&violation.node_id) {
        return Err(SynthesisError::DanglingViolation {
            node_id: violation.node_id,
            chain_id: violation.chain_id,
        });
    }
    let violated = nodes[&violation.node_id];
    let setup_ids = ordered_predecessors(chain, violation.node_id);

    let first_node = setup_ids.first().copied().unwrap_or(violation.node_id);
    let initial_state = nodes
        .get(&first_node)
        .filter(|n| !n.start_state.is_sentinel())
        .map(|n| format!(" Initial state: {}.", n.start_state.raw()))
        .unwrap_or_default();
    let preamble = format!("The UE is switched on.{initial_state}");

    let message = detect_message(violated);
    let message_column = message.clone().unwrap_or_else(|| "-".to_string());
    let message_phrase = message.unwrap_or_else(|| "message".to_string());
    let attack_direction = infer_direction(violated);

    let mut steps: Vec<TestStep> = Vec::new();
    let mut push = |procedure: String, direction: Direction, message: String, verdict: Verdict| {
        steps.push(TestStep {
            step_no: steps.len() as u32 + 1,
            procedure,
            direction,
            message,
            parameter: "-".to_string(),
            verdict,
        });
    };

    push(preamble.clone(), Direction::None, "-".to_string(), Verdict::None);
    for id in &setup_ids {
        let n = nodes[id];
        push(
            node_procedure(n),
            infer_direction(n),
            detect_message(n).unwrap_or_else(|| "-".to_string()),
            Verdict::None,
        );
    }

    match violation.action_id {
        AttackAction::Replay => {
            push(
                format!("The attacker captures the {message_phrase} in transit."),
                attack_direction,
                message_column.clone(),
                Verdict::None,
            );
            push(
                format!("The attacker replays the {message_phrase}."),
                attack_direction,
                message_column.clone(),
                Verdict::None,
            );
        }
        AttackAction::Drop => push(
            format!("The attacker drops the {message_phrase}."),
            attack_direction,
            message_column.clone(),
            Verdict::None,
        ),
        AttackAction::Modify => push(
            format!("The attacker modifies the contents of the {message_phrase}."),
            attack_direction,
            message_column.clone(),
            Verdict::None,
        ),
        AttackAction::Reject => push(
            format!("The attacker injects a reject response to the {message_phrase}."),
            attack_direction,
            message_column.clone(),
            Verdict::None,
        ),
    }

    let observation = match violation.action_id {
        AttackAction::Replay => {
            format!("Both the original and the replayed {message_phrase} are processed.")
        }
        AttackAction::Drop => {
            format!("The {message_phrase} never reaches its receiver and the procedure stalls.")
        }
        AttackAction::Modify => format!("The modified {message_phrase} is accepted as valid."),
        AttackAction::Reject => "The injected reject is processed as genuine.".to_string(),
    };
    push(observation, Direction::None, "-".to_string(), Verdict::Fail);

    let expected_outcome = format!(
        "{} is violated: {}",
        violation.property_id, violation.rationale
    );

    Ok(TestCase {
        test_id: test_id(violation),
        violation: ViolationKey {
            chain_id: violation.chain_id,
            node_id: violation.node_id,
            action_id: violation.action_id,
            property_id: violation.property_id.clone(),
        },
        preamble,
        steps,
        expected_outcome,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderFormat {
    TableText,
    Structured,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseHeader {
    test_id: String,
    violation: ViolationKey,
    preamble: String,
    expected_outcome: String,
}

/// Renders a test case. `TableText` is the fixed-column human table with the
/// bit-exact header; `Structured` emits one record line for the case plus one
/// per step and round-trips through [`parse_structured`].
pub fn render(test_case: &TestCase, format: RenderFormat) -> String {
    match format {
        RenderFormat::TableText => {
            let mut out = String::from(TABLE_HEADER);
            for s in &test_case.steps {
                out.push('\n');
                out.push_str(&format!(
                    "{} | {} | {} | {} | {} | {}",
                    s.step_no,
                    s.procedure,
                    s.direction.glyph(),
                    s.message,
                    s.parameter,
                    s.verdict.label()
                ));
            }
            out
        }
        RenderFormat::Structured => {
            let header = CaseHeader {
                test_id: test_case.test_id.clone(),
                violation: test_case.violation.clone(),
                preamble: test_case.preamble.clone(),
                expected_outcome: test_case.expected_outcome.clone(),
            };
            let mut out = serde_json::to_string(&header).expect("serialize case header");
            for s in &test_case.steps {
                out.push('\n');
                out.push_str(&serde_json::to_string(s).expect("serialize step"));
            }
            out
        }
    }
}

/// Parses the structured rendering back into a [`TestCase`].
pub fn parse_structured(input: &str) -> Result<TestCase, ParseError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (no, header_line) = lines.next().ok_or(ParseError::Empty)?;
    let header: CaseHeader = serde_json::from_str(header_line).map_err(|e| ParseError::Line {
        line: no + 1,
        message: e.to_string(),
    })?;
    let mut steps = Vec::new();
    for (no, line) in lines {
        steps.push(serde_json::from_str(line).map_err(|e| ParseError::Line {
            line: no + 1,
            message: e.to_string(),
        })?);
    }
    Ok(TestCase {
        test_id: header.test_id,
        violation: header.violation,
        preamble: header.preamble,
        steps,
        expected_outcome: header.expected_outcome,
    })
}
