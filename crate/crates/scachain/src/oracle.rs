//! Security sweep: every chain-member node is checked against the full
//! security-property × attack-action matrix.
//!
//! Properties live in a data-driven registry (bundled `properties.json`, or a
//! file named in config) so that new properties need no code changes. The
//! deterministic rule judge flags only what its rule table covers; a check
//! that fails because the service judge is unreachable is recorded as
//! *unchecked*, never as silently passed.

use crate::backends::{BackendError, PropertyJudge};
use crate::chains::FunctionChain;
use crate::sca::ScaNode;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("registry invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCheck {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityProperty {
    pub property_id: String,
    pub description: String,
    pub sub_checks: Vec<SubCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRegistry {
    pub properties: Vec<SecurityProperty>,
}

/// The ids of the nine core properties, in registry order.
pub const CORE_PROPERTY_IDS: [&str; 9] = [
    "authentication",
    "authorization",
    "service_integrity",
    "service_confidentiality",
    "privacy_protection",
    "availability_signaling",
    "interworking",
    "threat_detection_logging",
    "regulatory_compliance",
];

impl PropertyRegistry {
    pub fn bundled() -> Self {
        let registry: Self =
            serde_json::from_str(include_str!("../data/properties.json")).expect("bundled registry");
        registry.validate().expect("bundled registry valid");
        registry
    }

    pub fn from_file(path: &Path) -> Result<Self, RegistryError> {
        let data = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let registry: Self =
            serde_json::from_str(&data).map_err(|source| RegistryError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.properties {
            if p.property_id.is_empty() {
                return Err(RegistryError::Invalid("empty property_id".to_string()));
            }
            if !seen.insert(&p.property_id) {
                return Err(RegistryError::Invalid(format!(
                    "duplicate property_id '{}'",
                    p.property_id
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, property_id: &str) -> Option<&SecurityProperty> {
        self.properties.iter().find(|p| p.property_id == property_id)
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum AttackAction {
    Drop,
    Modify,
    Reject,
    Replay,
}

impl AttackAction {
    pub const ALL: [AttackAction; 4] = [
        AttackAction::Drop,
        AttackAction::Modify,
        AttackAction::Reject,
        AttackAction::Replay,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            AttackAction::Drop => "drop",
            AttackAction::Modify => "modify",
            AttackAction::Reject => "reject",
            AttackAction::Replay => "replay",
        }
    }
}

impl fmt::Display for AttackAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// One failed check: the chain, the node, the attack that breaks the
/// property, the judge's rationale, and the node's source citation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub chain_id: u64,
    pub node_id: u64,
    pub action_id: AttackAction,
    pub property_id: String,
    pub rationale: String,
    pub evidence: String,
}

/// A check that could not run (service judge unavailable); first-class in
/// the report so a backend outage never reads as a pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncheckedRecord {
    pub chain_id: u64,
    pub node_id: u64,
    pub action_id: AttackAction,
    pub property_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CheckMatrixReport {
    pub checks_executed: u64,
    pub unchecked: u64,
    pub violations: Vec<Violation>,
    pub unchecked_records: Vec<UncheckedRecord>,
    pub per_property_counts: BTreeMap<String, u64>,
    pub per_attack_counts: BTreeMap<String, u64>,
}

/// Chain context handed to judges: the node's 2-hop neighborhood summaries.
#[derive(Debug, Clone, Default)]
pub struct CheckContext {
    pub chain_id: u64,
    pub neighborhood: String,
}

static MESSAGE_NAME_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\b[A-Z][A-Z0-9]*(?:[ -][A-Z][A-Z0-9]*)+\b").unwrap());

const MESSAGE_TAIL_WORDS: &[&str] = &[
    "REQUEST",
    "ACCEPT",
    "REJECT",
    "RESPONSE",
    "COMMAND",
    "COMPLETE",
    "RELEASE",
    "SETUP",
    "RESUME",
    "SUSPEND",
    "PAGING",
    "NOTIFICATION",
    "TRANSPORT",
    "INDICATION",
    "FAILURE",
    "REPORT",
];

/// First NAS/RRC message name in the node's condition or action: an ALL-CAPS
/// multiword token ending in a message noun ("REGISTRATION REQUEST").
pub fn detect_message(node: &ScaNode) -> Option<String> {
    let text = format!("{} {}", node.condition, node.action);
    MESSAGE_NAME_RE
        .find_iter(&text)
        .map(|m| m.as_str())
        .find(|candidate| {
            candidate
                .rsplit([' ', '-'])
                .next()
                .is_some_and(|tail| MESSAGE_TAIL_WORDS.contains(&tail))
        })
        .map(|s| s.to_string())
}

fn lower_fields(node: &ScaNode) -> String {
    node.fields().join(" ").to_lowercase()
}

/// Attack applicability: drop/modify/replay need a message to act on; reject
/// needs a request/response exchange to reject.
fn action_applicable(node: &ScaNode, action: AttackAction) -> bool {
    let cond_action = format!("{} {}", node.condition, node.action);
    match action {
        AttackAction::Drop | AttackAction::Modify | AttackAction::Replay => {
            detect_message(node).is_some() || cond_action.to_lowercase().contains("message")
        }
        AttackAction::Reject => {
            cond_action.contains("REQUEST") || cond_action.to_lowercase().contains("respond")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTarget {
    pub property_id: String,
    pub actions: Vec<AttackAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRule {
    pub name: String,
    pub requires_message_transfer: bool,
    pub markers: Vec<String>,
    pub violates: Vec<RuleTarget>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<ViolationRule>,
}

impl RuleSet {
    pub fn bundled() -> Self {
        serde_json::from_str(include_str!("../data/rules.json")).expect("bundled rules")
    }

    pub fn from_file(path: &Path) -> Result<Self, RegistryError> {
        let data = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&data).map_err(|source| RegistryError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}

const TRANSFER_CUES: &[&str] = &[
    "send", "sent", "receiv", "receipt", "transmit", "respond", "accept", "forward",
];

/// Deterministic judge: flags a violation only when a configured rule's
/// markers and targets match. Properties and actions outside the rule table
/// are never flagged.
pub struct RuleJudge {
    rules: RuleSet,
}

impl RuleJudge {
    pub fn new(rules: RuleSet) -> Self {
        Self { rules }
    }
}

impl Default for RuleJudge {
    fn default() -> Self {
        Self::new(RuleSet::bundled())
    }
}

impl PropertyJudge for RuleJudge {
    fn check(
        &self,
        property: &SecurityProperty,
        node: &ScaNode,
        action: AttackAction,
        _ctx: &CheckContext,
    ) -> Result<Option<String>, BackendError> {
        if !action_applicable(node, action) {
            return Ok(None);
        }
        let text = lower_fields(node);
        let transfers = TRANSFER_CUES.iter().any(|cue| text.contains(cue));
        for rule in &self.rules.rules {
            let targets_this = rule.violates.iter().any(|t| {
                t.property_id == property.property_id && t.actions.contains(&action)
            });
            if !targets_this || (rule.requires_message_transfer && !transfers) {
                continue;
            }
            if let Some(marker) = rule.markers.iter().find(|m| text.contains(m.as_str())) {
                let message = detect_message(node).unwrap_or_else(|| "a message".to_string());
                let rationale = rule
                    .rationale
                    .replace("{marker}", marker)
                    .replace("{message}", &message)
                    .replace("{action}", action.id())
                    .replace("{property}", &property.property_id);
                return Ok(Some(rationale));
            }
        }
        Ok(None)
    }
}

/// Runs one cell of the check matrix.
pub fn check_violation(
    property: &SecurityProperty,
    node: &ScaNode,
    action: AttackAction,
    judge: &dyn PropertyJudge,
    ctx: &CheckContext,
) -> Result<Option<Violation>, BackendError> {
    Ok(judge.check(property, node, action, ctx)?.map(|rationale| Violation {
        chain_id: ctx.chain_id,
        node_id: node.node_id,
        action_id: action,
        property_id: property.property_id.clone(),
        rationale,
        evidence: node.source_citation(),
    }))
}

fn neighborhood_summary(chain: &FunctionChain, node_id: u64, nodes: &HashMap<u64, &ScaNode>) -> String {
    let mut adjacency: HashMap<u64, Vec<u64>> = HashMap::new();
    for e in &chain.edges {
        adjacency.entry(e.src).or_default().push(e.dst);
        adjacency.entry(e.dst).or_default().push(e.src);
    }
    let mut within: std::collections::BTreeSet<u64> = std::collections::BTreeSet::new();
    let mut frontier = vec![node_id];
    for _ in 0..2 {
        let mut next = Vec::new();
        for id in frontier {
            for &n in adjacency.get(&id).map(|v| v.as_slice()).unwrap_or(&[]) {
                if n != node_id && within.insert(n) {
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    within
        .iter()
        .filter_map(|id| nodes.get(id))
        .map(|n| {
            let mut line = format!("node {}: {} -> {}", n.node_id, n.condition, n.action);
            line.truncate(160);
            line
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Sweeps every (property, chain-member node, action) triple exactly once.
/// `checks_executed + unchecked` always equals
/// `|properties| × |actions| × chain-member node count`.
pub fn sweep(
    chains: &[FunctionChain],
    nodes: &[ScaNode],
    judge: &dyn PropertyJudge,
    registry: &PropertyRegistry,
) -> CheckMatrixReport {
    let by_id: HashMap<u64, &ScaNode> = nodes.iter().map(|n| (n.node_id, n)).collect();

    struct Cell {
        chain_id: u64,
        node_id: u64,
        property_idx: usize,
        action: AttackAction,
        neighborhood: String,
    }
    let mut cells = Vec::new();
    for chain in chains {
        for &node_id in &chain.node_ids {
            let neighborhood = neighborhood_summary(chain, node_id, &by_id);
            for (property_idx, _) in registry.properties.iter().enumerate() {
                for action in AttackAction::ALL {
                    cells.push(Cell {
                        chain_id: chain.chain_id,
                        node_id,
                        property_idx,
                        action,
                        neighborhood: neighborhood.clone(),
                    });
                }
            }
        }
    }

    enum Outcome {
        Pass,
        Violation(Violation),
        Unchecked(UncheckedRecord),
    }
    let outcomes: Vec<Outcome> = cells
        .par_iter()
        .map(|cell| {
            let property = &registry.properties[cell.property_idx];
            let node = by_id[&cell.node_id];
            let ctx = CheckContext {
                chain_id: cell.chain_id,
                neighborhood: cell.neighborhood.clone(),
            };
            match check_violation(property, node, cell.action, judge, &ctx) {
                Ok(Some(v)) => Outcome::Violation(v),
                Ok(None) => Outcome::Pass,
                Err(err) => Outcome::Unchecked(UncheckedRecord {
                    chain_id: cell.chain_id,
                    node_id: cell.node_id,
                    action_id: cell.action,
                    property_id: property.property_id.clone(),
                    reason: err.to_string(),
                }),
            }
        })
        .collect();

    let mut report = CheckMatrixReport::default();
    for p in &registry.properties {
        report.per_property_counts.insert(p.property_id.clone(), 0);
    }
    for a in AttackAction::ALL {
        report.per_attack_counts.insert(a.id().to_string(), 0);
    }
    for outcome in outcomes {
        match outcome {
            Outcome::Pass => report.checks_executed += 1,
            Outcome::Violation(v) => {
                report.checks_executed += 1;
                *report.per_property_counts.get_mut(&v.property_id).unwrap() += 1;
                *report
                    .per_attack_counts
                    .get_mut(v.action_id.id())
                    .unwrap() += 1;
                report.violations.push(v);
            }
            Outcome::Unchecked(u) => {
                report.unchecked += 1;
                report.unchecked_records.push(u);
            }
        }
    }
    report.violations.sort_by(|a, b| {
        (a.chain_id, a.node_id, a.action_id.id(), &a.property_id).cmp(&(
            b.chain_id,
            b.node_id,
            b.action_id.id(),
            &b.property_id,
        ))
    });
    report.unchecked_records.sort_by(|a, b| {
        (a.chain_id, a.node_id, a.action_id.id(), &a.property_id).cmp(&(
            b.chain_id,
            b.node_id,
            b.action_id.id(),
            &b.property_id,
        ))
    });
    report
}
