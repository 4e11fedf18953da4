//! Event-skeleton extraction.
//!
//! Graphs are relabeled by node category and edge type, infrequent labels
//! are pruned, frequent subgraphs are mined with gSpan, and each document's
//! skeleton is the union of the node sets matched by the top-ranked
//! patterns.

mod dfs;
mod gspan;
mod matcher;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use dfs::{is_canonical, min_dfs_code, DfsCode, DfsEdge, Label, LabeledGraph};
pub use gspan::{gspan, FrequentPattern, GspanParams, SeedOrder};
pub use matcher::embedding_vertex_sets;

use crate::error::{Error, Result};
use crate::events::Category;
use crate::graph::{EdgeType, IntraRelationGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinerConfig {
    /// Absolute support threshold; `None` means 10% of the corpus, at least 2.
    pub min_support: Option<usize>,
    pub min_edges: usize,
    pub max_edges: usize,
    /// Labels present in fewer graphs are pruned before mining; `None`
    /// uses the resolved support threshold.
    pub label_frequency_floor: Option<usize>,
    pub top_m: usize,
    pub seed_order: SeedOrder,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            min_support: None,
            min_edges: 2,
            max_edges: 6,
            label_frequency_floor: None,
            top_m: 3,
            seed_order: SeedOrder::Ascending,
        }
    }
}

impl MinerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_support == Some(0) {
            return Err(Error::invalid("miner config", "min_support must be >= 1"));
        }
        if self.min_edges == 0 {
            return Err(Error::invalid("miner config", "min_edges must be >= 1"));
        }
        if self.min_edges > self.max_edges {
            return Err(Error::invalid(
                "miner config",
                format!(
                    "min_edges ({}) exceeds max_edges ({})",
                    self.min_edges, self.max_edges
                ),
            ));
        }
        Ok(())
    }

    pub fn resolved_min_support(&self, corpus_size: usize) -> usize {
        self.min_support
            .unwrap_or_else(|| (corpus_size as f64 * 0.1).ceil().max(2.0) as usize)
    }

    pub fn resolved_floor(&self, corpus_size: usize) -> usize {
        self.label_frequency_floor
            .unwrap_or_else(|| self.resolved_min_support(corpus_size))
    }
}

/// A frequent pattern over categories, with matches keyed by document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonPattern {
    pub code: DfsCode,
    pub support: usize,
    /// Sorted node-id sets per doc_id.
    pub matches: BTreeMap<String, Vec<Vec<usize>>>,
}

impl SkeletonPattern {
    pub fn edge_count(&self) -> usize {
        self.code.len()
    }

    pub fn graph(&self) -> LabeledGraph {
        self.code.to_graph()
    }
}

pub fn node_label(c: Category) -> Label {
    c.index() as Label
}

pub fn edge_label(t: EdgeType) -> Label {
    t.index() as Label
}

pub fn category_of(label: Label) -> Category {
    Category::ALL[label as usize]
}

pub fn edge_type_of(label: Label) -> EdgeType {
    EdgeType::all()[label as usize]
}

/// Category-labeled view of an intra-relation graph; vertex ids equal node ids.
pub fn labeled_view(g: &IntraRelationGraph) -> LabeledGraph {
    let mut lg = LabeledGraph::new(g.nodes.iter().map(|n| node_label(n.category)).collect());
    for e in &g.edges {
        lg.add_edge(e.u, e.v, edge_label(e.edge_type));
    }
    lg
}

/// Removes nodes whose category, and edges whose type, occur in fewer than
/// `floor` graphs. Remaining nodes are renumbered in order.
pub fn prune_infrequent(graphs: &[IntraRelationGraph], floor: usize) -> Vec<IntraRelationGraph> {
    if floor == 0 {
        return graphs.to_vec();
    }
    let mut node_df: HashMap<Category, usize> = HashMap::new();
    let mut edge_df: HashMap<EdgeType, usize> = HashMap::new();
    for g in graphs {
        let mut cats: Vec<Category> = g.nodes.iter().map(|n| n.category).collect();
        cats.sort();
        cats.dedup();
        for c in cats {
            *node_df.entry(c).or_default() += 1;
        }
        let mut types: Vec<EdgeType> = g.edges.iter().map(|e| e.edge_type).collect();
        types.sort();
        types.dedup();
        for t in types {
            *edge_df.entry(t).or_default() += 1;
        }
    }
    let node_ok = |c: Category| node_df.get(&c).copied().unwrap_or(0) >= floor;
    let edge_ok = |t: EdgeType| edge_df.get(&t).copied().unwrap_or(0) >= floor;
    graphs
        .iter()
        .map(|g| {
            let keep: Vec<bool> = g.nodes.iter().map(|n| node_ok(n.category)).collect();
            g.retain_edges(|e| edge_ok(e.edge_type)).induced(&keep)
        })
        .collect()
}

/// Mines frequent category patterns from `graphs` (already pruned).
/// Matches refer to node ids of the graphs passed in.
pub fn mine(graphs: &[IntraRelationGraph], cfg: &MinerConfig) -> Result<Vec<SkeletonPattern>> {
    cfg.validate()?;
    let labeled: Vec<LabeledGraph> = graphs.iter().map(labeled_view).collect();
    let params = GspanParams {
        min_support: cfg.resolved_min_support(graphs.len()),
        min_edges: cfg.min_edges,
        max_edges: cfg.max_edges,
        seed_order: cfg.seed_order,
    };
    Ok(gspan(&labeled, params)
        .into_iter()
        .map(|p| SkeletonPattern {
            code: p.code,
            support: p.support,
            matches: p
                .matches
                .into_iter()
                .map(|(gid, sets)| (graphs[gid].doc_id.clone(), sets))
                .collect(),
        })
        .collect())
}

/// Prunes, mines, and maps matches back to node ids of the input graphs
/// (surfaces are unique within a graph, so they identify nodes).
pub fn extract_skeletons(
    graphs: &[IntraRelationGraph],
    cfg: &MinerConfig,
) -> Result<Vec<SkeletonPattern>> {
    cfg.validate()?;
    let floor = cfg.resolved_floor(graphs.len());
    let pruned = prune_infrequent(graphs, floor);
    let cfg = MinerConfig {
        min_support: Some(cfg.resolved_min_support(graphs.len())),
        ..cfg.clone()
    };
    let mut patterns = mine(&pruned, &cfg)?;
    let by_doc: HashMap<&str, (&IntraRelationGraph, &IntraRelationGraph)> = graphs
        .iter()
        .zip(&pruned)
        .map(|(orig, pr)| (orig.doc_id.as_str(), (orig, pr)))
        .collect();
    for p in &mut patterns {
        for (doc, sets) in p.matches.iter_mut() {
            let (orig, pr) = by_doc[doc.as_str()];
            let ids: HashMap<&str, usize> = orig
                .nodes
                .iter()
                .map(|n| (n.surface.as_str(), n.node_id))
                .collect();
            for set in sets.iter_mut() {
                for v in set.iter_mut() {
                    *v = ids[pr.nodes[*v].surface.as_str()];
                }
                set.sort_unstable();
            }
            sets.sort();
        }
    }
    Ok(patterns)
}

/// Patterns ranked by support, then edge count (both descending), then code.
pub fn rank_patterns(patterns: &[SkeletonPattern]) -> Vec<&SkeletonPattern> {
    let mut ranked: Vec<&SkeletonPattern> = patterns.iter().collect();
    ranked.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.edge_count().cmp(&a.edge_count()))
            .then(a.code.cmp(&b.code))
    });
    ranked
}

/// Sets `in_skeleton` on every node covered by an embedding of one of the
/// `top_m` ranked patterns. Graphs with no covered node get every node
/// flagged.
pub fn mark_skeletons(
    graphs: &mut [IntraRelationGraph],
    patterns: &[SkeletonPattern],
    top_m: usize,
) {
    let top: Vec<LabeledGraph> = rank_patterns(patterns)
        .into_iter()
        .take(top_m)
        .map(SkeletonPattern::graph)
        .collect();
    for g in graphs.iter_mut() {
        let host = labeled_view(g);
        let mut flags = vec![false; g.node_count()];
        for pattern in &top {
            for set in embedding_vertex_sets(pattern, &host) {
                for v in set {
                    flags[v] = true;
                }
            }
        }
        if !flags.iter().any(|&f| f) {
            flags.iter_mut().for_each(|f| *f = true);
        }
        for (node, flag) in g.nodes.iter_mut().zip(flags) {
            node.in_skeleton = flag;
        }
    }
}

pub const PATTERN_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatternWire {
    code: Vec<(usize, usize, Category, EdgeType, Category)>,
    support: usize,
    matches: BTreeMap<String, Vec<Vec<usize>>>,
}

pub fn patterns_to_json(patterns: &[SkeletonPattern]) -> Result<String> {
    let wire: Vec<PatternWire> = patterns
        .iter()
        .map(|p| PatternWire {
            code: p
                .code
                .edges()
                .iter()
                .map(|e| {
                    (
                        e.from,
                        e.to,
                        category_of(e.from_label),
                        edge_type_of(e.edge_label),
                        category_of(e.to_label),
                    )
                })
                .collect(),
            support: p.support,
            matches: p.matches.clone(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&wire)?)
}

pub fn patterns_from_json(text: &str) -> Result<Vec<SkeletonPattern>> {
    let value: Value = serde_json::from_str(text)?;
    if !value.is_array() {
        return Err(Error::invalid(
            "pattern file",
            "expected a JSON array of patterns",
        ));
    }
    let wire: Vec<PatternWire> = serde_json::from_value(value)?;
    wire.into_iter()
        .enumerate()
        .map(|(i, w)| {
            let code = DfsCode(
                w.code
                    .iter()
                    .map(|&(a, b, la, le, lb)| {
                        DfsEdge::new(a, b, node_label(la), edge_label(le), node_label(lb))
                    })
                    .collect(),
            );
            if !code.is_well_formed() {
                return Err(Error::invalid(
                    "pattern file",
                    format!("pattern {i}: malformed DFS code"),
                ));
            }
            Ok(SkeletonPattern {
                code,
                support: w.support,
                matches: w.matches,
            })
        })
        .collect()
}

pub fn save_patterns(path: impl AsRef<Path>, patterns: &[SkeletonPattern]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, patterns_to_json(patterns)?).map_err(|e| Error::io(path, e))
}

pub fn load_patterns(path: impl AsRef<Path>) -> Result<Vec<SkeletonPattern>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    patterns_from_json(&text)
}

/// Human-readable pattern table, in rank order.
pub fn pattern_table(patterns: &[SkeletonPattern]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>4}  {:>7}  {:>5}  {:>4}  code",
        "rank", "support", "edges", "docs"
    );
    for (rank, p) in rank_patterns(patterns).into_iter().enumerate() {
        let code: Vec<String> = p
            .code
            .edges()
            .iter()
            .map(|e| {
                format!(
                    "({},{},{},{},{})",
                    e.from,
                    e.to,
                    category_of(e.from_label),
                    edge_type_of(e.edge_label),
                    category_of(e.to_label)
                )
            })
            .collect();
        let _ = writeln!(
            out,
            "{:>4}  {:>7}  {:>5}  {:>4}  {}",
            rank + 1,
            p.support,
            p.edge_count(),
            p.matches.len(),
            code.join(" ")
        );
    }
    out
}
