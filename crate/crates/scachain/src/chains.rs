//! Linking of SCA nodes into typed directed edges and function chains.
//!
//! Three connection kinds are discovered over a candidate pair scope:
//! temporal (identical canonical end/start states), semantic (states that
//! differ textually but score as equivalent), and causal (one node enabling
//! another). The scope is either exhaustive, restricted to nodes sharing a
//! subclause, or subclause-local plus pairs reached through explicit clause
//! references. At most one edge exists per ordered pair, with precedence
//! temporal > semantic > causal. A function chain is a weakly connected
//! component of the resulting directed graph.

use crate::backends::{BackendError, CausalJudge, SimilarityJudge};
use crate::corpus::ClauseTree;
use crate::sca::ScaNode;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Temporal,
    Semantic,
    Causal,
}

impl EdgeKind {
    pub fn id(&self) -> &'static str {
        match self {
            EdgeKind::Temporal => "temporal",
            EdgeKind::Semantic => "semantic",
            EdgeKind::Causal => "causal",
        }
    }
}

/// A typed directed edge between two SCA nodes. `via_reference` marks pairs
/// that entered the scope only through reference expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectionEdge {
    pub src: u64,
    pub dst: u64,
    pub kind: EdgeKind,
    pub via_reference: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeMode {
    Exhaustive,
    ClauseLocal,
    ReferenceGuided,
}

impl std::fmt::Display for ScopeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScopeMode::Exhaustive => "exhaustive",
            ScopeMode::ClauseLocal => "clause_local",
            ScopeMode::ReferenceGuided => "reference_guided",
        })
    }
}

/// Candidate ordered pairs for edge discovery. Pairs are unique, sorted, and
/// queryable; `via_reference` holds the pairs reachable only through
/// reference expansion.
#[derive(Debug, Clone, Default)]
pub struct LinkScope {
    pairs: Vec<(u64, u64)>,
    via_reference: HashSet<(u64, u64)>,
    pub unresolved_references: usize,
}

impl LinkScope {
    pub fn pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn contains(&self, src: u64, dst: u64) -> bool {
        self.pairs.binary_search(&(src, dst)).is_ok()
    }

    pub fn is_via_reference(&self, src: u64, dst: u64) -> bool {
        self.via_reference.contains(&(src, dst))
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScopeOptions {
    /// Truncate the clause-local grouping key to this many dotted components;
    /// 0 groups by the node's own (leaf) clause id.
    pub clause_local_depth: u32,
}

fn clause_key(clause_id: &str, depth: u32) -> String {
    if depth == 0 {
        return clause_id.to_string();
    }
    let mut end = 0;
    let mut seen = 0;
    for (i, c) in clause_id.char_indices() {
        if c == '.' {
            seen += 1;
            if seen == depth {
                end = i;
                break;
            }
        }
    }
    if end == 0 {
        clause_id.to_string()
    } else {
        clause_id[..end].to_string()
    }
}

/// Builds the candidate pair scope. All pairs stay within one specification;
/// cross-specification chain construction is out of scope, so references into
/// another spec (and whole-spec references with an empty target clause) are
/// not expanded. Unresolvable reference targets are counted and logged.
pub fn build_scope(
    nodes: &[ScaNode],
    mode: ScopeMode,
    trees: &HashMap<String, ClauseTree>,
    options: ScopeOptions,
) -> LinkScope {
    let mut pairs: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut base: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut unresolved = 0usize;

    let mut by_spec: BTreeMap<&str, Vec<&ScaNode>> = BTreeMap::new();
    for n in nodes {
        by_spec.entry(n.spec_id.as_str()).or_default().push(n);
    }

    for (spec_id, spec_nodes) in &by_spec {
        match mode {
            ScopeMode::Exhaustive => {
                for a in spec_nodes {
                    for b in spec_nodes {
                        if a.node_id != b.node_id {
                            pairs.insert((a.node_id, b.node_id));
                        }
                    }
                }
            }
            ScopeMode::ClauseLocal | ScopeMode::ReferenceGuided => {
                let mut groups: BTreeMap<String, Vec<u64>> = BTreeMap::new();
                for n in spec_nodes {
                    groups
                        .entry(clause_key(&n.clause_id, options.clause_local_depth))
                        .or_default()
                        .push(n.node_id);
                }
                for ids in groups.values() {
                    for &a in ids {
                        for &b in ids {
                            if a != b {
                                pairs.insert((a, b));
                            }
                        }
                    }
                }
                if mode == ScopeMode::ReferenceGuided {
                    base = pairs.clone();
                    let tree = trees.get(*spec_id);
                    for n in spec_nodes {
                        for reference in &n.references {
                            if reference.target_spec.is_some()
                                && reference.target_spec.as_deref() != Some(spec_id)
                            {
                                continue;
                            }
                            let target = reference.target_clause.as_str();
                            if target.is_empty() {
                                continue;
                            }
                            if !tree.map(|t| t.contains(target)).unwrap_or(false) {
                                unresolved += 1;
                                tracing::warn!(
                                    spec_id = %spec_id,
                                    node_id = n.node_id,
                                    target_clause = %target,
                                    "unresolved reference target; expansion skipped"
                                );
                                continue;
                            }
                            for m in spec_nodes {
                                if m.node_id != n.node_id
                                    && ClauseTree::is_within(&m.clause_id, target)
                                {
                                    pairs.insert((n.node_id, m.node_id));
                                    pairs.insert((m.node_id, n.node_id));
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let via_reference = pairs.difference(&base).copied().collect::<HashSet<_>>();
    LinkScope {
        pairs: pairs.into_iter().collect(),
        via_reference: if mode == ScopeMode::ReferenceGuided {
            via_reference
        } else {
            HashSet::new()
        },
        unresolved_references: unresolved,
    }
}

pub type NodeMap<'a> = HashMap<u64, &'a ScaNode>;

pub fn node_map(nodes: &[ScaNode]) -> NodeMap<'_> {
    nodes.iter().map(|n| (n.node_id, n)).collect()
}

fn temporal_match(src: &ScaNode, dst: &ScaNode) -> bool {
    !src.end_state.is_sentinel()
        && !dst.start_state.is_sentinel()
        && src.end_state.canonical() == dst.start_state.canonical()
}

/// Temporal edges: scoped pairs whose canonical end and start states are
/// identical and non-sentinel. Indexed by canonical start state rather than
/// scanning every pair; output sorted by (src, dst).
pub fn temporal_edges(nodes: &[ScaNode], scope: &LinkScope) -> Vec<ConnectionEdge> {
    let mut by_start: HashMap<&str, Vec<&ScaNode>> = HashMap::new();
    for n in nodes {
        if !n.start_state.is_sentinel() {
            by_start.entry(n.start_state.canonical()).or_default().push(n);
        }
    }
    let mut edges: Vec<ConnectionEdge> = Vec::new();
    for src in nodes {
        if src.end_state.is_sentinel() {
            continue;
        }
        if let Some(candidates) = by_start.get(src.end_state.canonical()) {
            for dst in candidates {
                if dst.node_id != src.node_id && scope.contains(src.node_id, dst.node_id) {
                    edges.push(ConnectionEdge {
                        src: src.node_id,
                        dst: dst.node_id,
                        kind: EdgeKind::Temporal,
                        via_reference: scope.is_via_reference(src.node_id, dst.node_id),
                        score: None,
                    });
                }
            }
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    edges
}

/// Semantic edges: scoped pairs whose states are not canonically equal (those
/// are temporal) but whose judge score reaches the threshold; when the judge
/// carries a verification stage, a pair additionally needs its YES.
pub fn semantic_edges(
    nodes: &[ScaNode],
    scope: &LinkScope,
    judge: &dyn SimilarityJudge,
    threshold: f64,
) -> Result<Vec<ConnectionEdge>, BackendError> {
    assert!(
        threshold > 0.0 && threshold <= 1.0,
        "semantic threshold must be in (0, 1], got {threshold}"
    );
    let map = node_map(nodes);
    let candidates: Vec<(u64, u64)> = scope
        .pairs()
        .filter(|&(a, b)| {
            let (src, dst) = (map[&a], map[&b]);
            !src.end_state.is_sentinel()
                && !dst.start_state.is_sentinel()
                && !temporal_match(src, dst)
        })
        .collect();
    let results: Vec<Result<Option<ConnectionEdge>, BackendError>> = candidates
        .par_iter()
        .map(|&(a, b)| {
            let (src, dst) = (map[&a], map[&b]);
            let score = judge.score(src.end_state.canonical(), dst.start_state.canonical())?;
            if score < threshold {
                return Ok(None);
            }
            if let Some(false) =
                judge.verify(src.end_state.canonical(), dst.start_state.canonical())?
            {
                return Ok(None);
            }
            Ok(Some(ConnectionEdge {
                src: a,
                dst: b,
                kind: EdgeKind::Semantic,
                via_reference: scope.is_via_reference(a, b),
                score: Some(score),
            }))
        })
        .collect();
    let mut edges = Vec::new();
    for r in results {
        if let Some(edge) = r? {
            edges.push(edge);
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    Ok(edges)
}

/// Causal edges: scoped pairs the judge affirms, skipping pairs already
/// linked temporally or semantically.
pub fn causal_edges(
    nodes: &[ScaNode],
    scope: &LinkScope,
    judge: &dyn CausalJudge,
    existing: &[ConnectionEdge],
) -> Result<Vec<ConnectionEdge>, BackendError> {
    let map = node_map(nodes);
    let taken: HashSet<(u64, u64)> = existing.iter().map(|e| (e.src, e.dst)).collect();
    let candidates: Vec<(u64, u64)> = scope
        .pairs()
        .filter(|pair| !taken.contains(pair))
        .collect();
    let results: Vec<Result<Option<ConnectionEdge>, BackendError>> = candidates
        .par_iter()
        .map(|&(a, b)| {
            if judge.causal(map[&a], map[&b])? {
                Ok(Some(ConnectionEdge {
                    src: a,
                    dst: b,
                    kind: EdgeKind::Causal,
                    via_reference: scope.is_via_reference(a, b),
                    score: None,
                }))
            } else {
                Ok(None)
            }
        })
        .collect();
    let mut edges = Vec::new();
    for r in results {
        if let Some(edge) = r? {
            edges.push(edge);
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst));
    Ok(edges)
}

/// Runs the three strategies with their precedence and returns the merged
/// edge list sorted by (src, dst, kind).
pub fn link_all(
    nodes: &[ScaNode],
    scope: &LinkScope,
    similarity: &dyn SimilarityJudge,
    causal: &dyn CausalJudge,
    semantic_threshold: f64,
) -> Result<Vec<ConnectionEdge>, BackendError> {
    let mut edges = temporal_edges(nodes, scope);
    edges.extend(semantic_edges(nodes, scope, similarity, semantic_threshold)?);
    let causal = causal_edges(nodes, scope, causal, &edges)?;
    edges.extend(causal);
    edges.sort_by_key(|e| (e.src, e.dst, e.kind));
    Ok(edges)
}

/// A weakly connected component of the edge graph; isolated nodes form no
/// chain. Chain ids are assigned by ascending minimum member node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionChain {
    pub chain_id: u64,
    pub node_ids: BTreeSet<u64>,
    pub edges: Vec<ConnectionEdge>,
}

struct UnionFind {
    parent: HashMap<u64, u64>,
}

impl UnionFind {
    fn new() -> Self {
        Self {
            parent: HashMap::new(),
        }
    }

    fn find(&mut self, x: u64) -> u64 {
        let p = *self.parent.entry(x).or_insert(x);
        if p == x {
            return x;
        }
        let root = self.find(p);
        self.parent.insert(x, root);
        root
    }

    fn union(&mut self, a: u64, b: u64) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent.insert(ra.max(rb), ra.min(rb));
        }
    }
}

/// Groups edges into weakly connected components. Output is invariant under
/// permutation of the edge list.
pub fn assemble_chains(edges: &[ConnectionEdge], nodes: &[ScaNode]) -> Vec<FunctionChain> {
    let known: HashSet<u64> = nodes.iter().map(|n| n.node_id).collect();
    let mut uf = UnionFind::new();
    for e in edges {
        debug_assert!(known.contains(&e.src) && known.contains(&e.dst));
        uf.union(e.src, e.dst);
    }
    let mut members: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for e in edges {
        for id in [e.src, e.dst] {
            let root = uf.find(id);
            members.entry(root).or_default().insert(id);
        }
    }
    let mut component_edges: BTreeMap<u64, Vec<ConnectionEdge>> = BTreeMap::new();
    for e in edges {
        let root = uf.find(e.src);
        component_edges.entry(root).or_default().push(e.clone());
    }

    // BTreeMap keyed by the union-find root; the root is always the minimum
    // node id of its component, so iteration order is the chain-id order.
    members
        .into_iter()
        .enumerate()
        .map(|(i, (root, node_ids))| {
            let mut edges = component_edges.remove(&root).unwrap_or_default();
            edges.sort_by_key(|e| (e.src, e.dst, e.kind));
            edges.dedup();
            FunctionChain {
                chain_id: (i + 1) as u64,
                node_ids,
                edges,
            }
        })
        .collect()
}

/// Serial cost of exhaustive pairwise analysis, in years, at the given
/// per-pair cost: n^2 * seconds / (3600 * 24 * 365).
pub fn estimated_serial_years(node_count: u64, seconds_per_pair: f64) -> f64 {
    let n = node_count as f64;
    n * n * seconds_per_pair / (3600.0 * 24.0 * 365.0)
}

/// Stats block reported by the linking stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub mode: ScopeMode,
    pub pair_count: u64,
    pub edges_by_kind: BTreeMap<String, u64>,
    pub chain_count: u64,
    pub largest_chain: u64,
    pub unresolved_references: u64,
}

pub fn link_stats(
    mode: ScopeMode,
    scope: &LinkScope,
    edges: &[ConnectionEdge],
    chains: &[FunctionChain],
) -> LinkStats {
    let mut edges_by_kind: BTreeMap<String, u64> = BTreeMap::new();
    for kind in [EdgeKind::Temporal, EdgeKind::Semantic, EdgeKind::Causal] {
        edges_by_kind.insert(kind.id().to_string(), 0);
    }
    for e in edges {
        *edges_by_kind.get_mut(e.kind.id()).unwrap() += 1;
    }
    LinkStats {
        mode,
        pair_count: scope.pair_count() as u64,
        edges_by_kind,
        chain_count: chains.len() as u64,
        largest_chain: chains.iter().map(|c| c.node_ids.len() as u64).max().unwrap_or(0),
        unresolved_references: scope.unresolved_references as u64,
    }
}
