//! Per-document intra-relation graphs.
//!
//! Nodes are deduplicated event elements (one node per surface). Edges are
//! undirected and typed by the unordered pair of endpoint categories, which
//! gives six edge types. Three rules add edges:
//!
//! 1. subject–predicate and predicate–object inside each block;
//! 2. entity–entity for entities occurring in the same sentence;
//! 3. cross-block links between distinct elements whose similarity reaches
//!    the threshold `y`.
//!
//! Identical surfaces never link: they are the same node.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Category, EventBlock, EventElement};
use crate::vectors::WordVectors;

/// Unordered pair of endpoint categories, stored with `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeType {
    lo: Category,
    hi: Category,
}

impl EdgeType {
    pub fn between(a: Category, b: Category) -> Self {
        if a <= b {
            Self { lo: a, hi: b }
        } else {
            Self { lo: b, hi: a }
        }
    }

    pub fn endpoints(self) -> (Category, Category) {
        (self.lo, self.hi)
    }

    /// All six edge types in label order.
    pub fn all() -> Vec<EdgeType> {
        let mut out = Vec::with_capacity(6);
        for (i, &a) in Category::ALL.iter().enumerate() {
            for &b in &Category::ALL[i..] {
                out.push(EdgeType::between(a, b));
            }
        }
        out
    }

    pub fn index(self) -> usize {
        EdgeType::all().iter().position(|t| *t == self).unwrap()
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl FromStr for EdgeType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("bad edge type {s:?}, expected CATEGORY-CATEGORY"))?;
        Ok(EdgeType::between(a.parse()?, b.parse()?))
    }
}

impl Serialize for EdgeType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EdgeType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    #[serde(rename = "id")]
    pub node_id: usize,
    pub surface: String,
    pub category: Category,
    #[serde(skip)]
    pub in_skeleton: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntraRelationGraph {
    pub doc_id: String,
    pub nodes: Vec<Node>,
    /// Sorted by `(u, v)` with `u < v`.
    pub edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
}

impl IntraRelationGraph {
    /// Builds a graph from parts, validating endpoints, self-edges,
    /// duplicates and edge types. Node ids must be `0..n` in order.
    pub fn from_parts(
        doc_id: impl Into<String>,
        nodes: Vec<Node>,
        edges: Vec<Edge>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        for (i, node) in nodes.iter().enumerate() {
            if node.node_id != i {
                return Err(Error::invalid(
                    "graph",
                    format!(
                        "{doc_id}: node ids must be 0..n in order (found {} at {i})",
                        node.node_id
                    ),
                ));
            }
        }
        let mut set = BTreeSet::new();
        for e in &edges {
            for end in [e.u, e.v] {
                if end >= nodes.len() {
                    return Err(Error::DanglingEdge {
                        doc_id: doc_id.clone(),
                        node: end,
                    });
                }
            }
            if e.u == e.v {
                return Err(Error::invalid(
                    "graph",
                    format!("{doc_id}: self-edge on node {}", e.u),
                ));
            }
            let expected = EdgeType::between(nodes[e.u].category, nodes[e.v].category);
            if e.edge_type != expected {
                return Err(Error::invalid(
                    "graph",
                    format!(
                        "{doc_id}: edge {}-{} has type {} but endpoints imply {expected}",
                        e.u, e.v, e.edge_type
                    ),
                ));
            }
            if !set.insert((e.u.min(e.v), e.u.max(e.v))) {
                return Err(Error::invalid(
                    "graph",
                    format!("{doc_id}: duplicate edge {}-{}", e.u, e.v),
                ));
            }
        }
        Ok(Self::assemble(doc_id, nodes, set))
    }

    fn assemble(doc_id: String, nodes: Vec<Node>, pairs: BTreeSet<(usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); nodes.len()];
        let edges = pairs
            .into_iter()
            .map(|(u, v)| {
                neighbors[u].push(v);
                neighbors[v].push(u);
                Edge {
                    u,
                    v,
                    edge_type: EdgeType::between(nodes[u].category, nodes[v].category),
                }
            })
            .collect();
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Self {
            doc_id,
            nodes,
            edges,
            neighbors,
        }
    }

    pub fn empty(doc_id: impl Into<String>) -> Self {
        Self::assemble(doc_id.into(), Vec::new(), BTreeSet::new())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Dense symmetric 0/1 adjacency matrix without self-loops.
    pub fn adjacency(&self) -> Array2<f64> {
        let n = self.node_count();
        let mut a = Array2::zeros((n, n));
        for e in &self.edges {
            a[[e.u, e.v]] = 1.0;
            a[[e.v, e.u]] = 1.0;
        }
        a
    }

    pub fn skeleton_nodes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.in_skeleton)
            .map(|n| n.node_id)
            .collect()
    }

    /// Returns the subgraph induced by `keep` (node ids renumbered in order).
    pub fn induced(&self, keep: &[bool]) -> Self {
        let mut remap = vec![usize::MAX; self.node_count()];
        let mut nodes = Vec::new();
        for (old, node) in self.nodes.iter().enumerate() {
            if keep[old] {
                remap[old] = nodes.len();
                nodes.push(Node {
                    node_id: nodes.len(),
                    ..node.clone()
                });
            }
        }
        let pairs = self
            .edges
            .iter()
            .filter(|e| keep[e.u] && keep[e.v])
            .map(|e| (remap[e.u], remap[e.v]))
            .collect();
        Self::assemble(self.doc_id.clone(), nodes, pairs)
    }

    /// Keeps all nodes but only the edges accepted by `keep_edge`.
    pub fn retain_edges(&self, mut keep_edge: impl FnMut(&Edge) -> bool) -> Self {
        let pairs = self
            .edges
            .iter()
            .filter(|e| keep_edge(e))
            .map(|e| (e.u, e.v))
            .collect();
        Self::assemble(self.doc_id.clone(), self.nodes.clone(), pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMetric {
    ExactMatch,
    JaccardChar3gram,
    CosinePretrained,
}

impl FromStr for SimilarityMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact-match" => Ok(Self::ExactMatch),
            "jaccard-char-3gram" => Ok(Self::JaccardChar3gram),
            "cosine-pretrained" => Ok(Self::CosinePretrained),
            other => Err(format!("unknown similarity metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphBuildConfig {
    pub similarity_threshold_y: f64,
    pub similarity_metric: SimilarityMetric,
    pub pretrained_vectors: Option<PathBuf>,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        Self {
            similarity_threshold_y: 0.8,
            similarity_metric: SimilarityMetric::JaccardChar3gram,
            pretrained_vectors: None,
        }
    }
}

impl GraphBuildConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.similarity_threshold_y) {
            return Err(Error::invalid(
                "graph config",
                format!(
                    "similarity_threshold_y must be in [0,1], got {}",
                    self.similarity_threshold_y
                ),
            ));
        }
        if self.similarity_metric == SimilarityMetric::CosinePretrained
            && self.pretrained_vectors.is_none()
        {
            return Err(Error::invalid(
                "graph config",
                "cosine-pretrained similarity requires pretrained_vectors",
            ));
        }
        Ok(())
    }
}

/// Graph construction with its similarity backend resolved.
pub struct GraphBuilder {
    cfg: GraphBuildConfig,
    vectors: Option<WordVectors>,
}

impl GraphBuilder {
    pub fn new(cfg: GraphBuildConfig) -> Result<Self> {
        cfg.validate()?;
        let vectors = match (&cfg.similarity_metric, &cfg.pretrained_vectors) {
            (SimilarityMetric::CosinePretrained, Some(path)) => Some(WordVectors::load(path)?),
            _ => None,
        };
        Ok(Self { cfg, vectors })
    }

    /// Uses an in-memory vector table instead of `pretrained_vectors`.
    pub fn with_vectors(cfg: GraphBuildConfig, vectors: WordVectors) -> Result<Self> {
        GraphBuildConfig {
            pretrained_vectors: Some(PathBuf::new()),
            ..cfg.clone()
        }
        .validate()?;
        Ok(Self {
            cfg,
            vectors: Some(vectors),
        })
    }

    pub fn config(&self) -> &GraphBuildConfig {
        &self.cfg
    }

    pub fn similarity(&self, a: &EventElement, b: &EventElement) -> f64 {
        match self.cfg.similarity_metric {
            SimilarityMetric::ExactMatch => exact_match(&a.surface, &b.surface),
            SimilarityMetric::JaccardChar3gram => jaccard_char3(&a.surface, &b.surface),
            SimilarityMetric::CosinePretrained => {
                if a.surface == b.surface {
                    return 1.0;
                }
                match self
                    .vectors
                    .as_ref()
                    .and_then(|v| v.cosine(&a.surface, &b.surface))
                {
                    Some(c) => c,
                    None => {
                        log::debug!(
                            "out-of-vocabulary pair ({}, {}): falling back to jaccard",
                            a.surface,
                            b.surface
                        );
                        jaccard_char3(&a.surface, &b.surface)
                    }
                }
            }
        }
    }

    /// Builds the graph for one document's blocks.
    pub fn build(&self, doc_id: &str, blocks: &[EventBlock]) -> Result<IntraRelationGraph> {
        if let Some(b) = blocks.iter().find(|b| b.doc_id != doc_id) {
            return Err(Error::invalid(
                "event blocks",
                format!("block for {} passed while building {doc_id}", b.doc_id),
            ));
        }
        let mut nodes: Vec<Node> = Vec::new();
        let mut by_surface: HashMap<&str, usize> = HashMap::new();
        // node ids per block slot
        let mut block_nodes: Vec<[Option<usize>; 3]> = Vec::with_capacity(blocks.len());
        for block in blocks {
            let mut ids = [None; 3];
            for (slot, el) in block.elements.iter().enumerate() {
                let Some(el) = el else { continue };
                let id = *by_surface.entry(el.surface.as_str()).or_insert_with(|| {
                    nodes.push(Node {
                        node_id: nodes.len(),
                        surface: el.surface.clone(),
                        category: el.category,
                        in_skeleton: false,
                    });
                    nodes.len() - 1
                });
                ids[slot] = Some(id);
            }
            block_nodes.push(ids);
        }

        let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut link = |a: usize, b: usize| {
            if a != b {
                pairs.insert((a.min(b), a.max(b)));
            }
        };

        for ids in &block_nodes {
            if let (Some(s), Some(p)) = (ids[0], ids[1]) {
                link(s, p);
            }
            if let (Some(p), Some(o)) = (ids[1], ids[2]) {
                link(p, o);
            }
        }

        let mut sentence_entities: HashMap<usize, BTreeSet<usize>> = HashMap::new();
        for (block, ids) in blocks.iter().zip(&block_nodes) {
            for id in ids.iter().flatten() {
                if nodes[*id].category == Category::Entity {
                    sentence_entities
                        .entry(block.sentence_index)
                        .or_default()
                        .insert(*id);
                }
            }
        }
        for ents in sentence_entities.values() {
            let ents: Vec<_> = ents.iter().copied().collect();
            for (i, &a) in ents.iter().enumerate() {
                for &b in &ents[i + 1..] {
                    link(a, b);
                }
            }
        }

        // node -> blocks containing it
        let mut occurs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); nodes.len()];
        for (bi, ids) in block_nodes.iter().enumerate() {
            for id in ids.iter().flatten() {
                occurs[*id].insert(bi);
            }
        }
        let y = self.cfg.similarity_threshold_y;
        for a in 0..nodes.len() {
            for b in a + 1..nodes.len() {
                let cross_block = occurs[a]
                    .iter()
                    .any(|ba| occurs[b].iter().any(|bb| bb != ba));
                if !cross_block {
                    continue;
                }
                let ea = EventElement::new(nodes[a].surface.clone(), nodes[a].category);
                let eb = EventElement::new(nodes[b].surface.clone(), nodes[b].category);
                if self.similarity(&ea, &eb) >= y {
                    link(a, b);
                }
            }
        }

        Ok(IntraRelationGraph::assemble(
            doc_id.to_string(),
            nodes,
            pairs,
        ))
    }

    /// Groups blocks by doc_id (first-appearance order) and builds one graph per document.
    pub fn build_corpus(&self, blocks: &[EventBlock]) -> Result<Vec<IntraRelationGraph>> {
        let mut order: Vec<&str> = Vec::new();
        let mut groups: HashMap<&str, Vec<EventBlock>> = HashMap::new();
        for b in blocks {
            groups
                .entry(b.doc_id.as_str())
                .or_insert_with(|| {
                    order.push(b.doc_id.as_str());
                    Vec::new()
                })
                .push(b.clone());
        }
        order.iter().map(|id| self.build(id, &groups[id])).collect()
    }
}

pub fn build_graph(blocks: &[EventBlock], cfg: &GraphBuildConfig) -> Result<IntraRelationGraph> {
    let doc_id = blocks.first().map_or("", |b| b.doc_id.as_str());
    GraphBuilder::new(cfg.clone())?.build(doc_id, blocks)
}

pub fn element_similarity(
    a: &EventElement,
    b: &EventElement,
    cfg: &GraphBuildConfig,
) -> Result<f64> {
    Ok(GraphBuilder::new(cfg.clone())?.similarity(a, b))
}

fn exact_match(a: &str, b: &str) -> f64 {
    if a == b {
        1.0
    } else {
        0.0
    }
}

/// Character 3-gram set; words shorter than three characters map to
/// themselves.
fn char_trigrams(s: &str) -> BTreeSet<String> {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() < 3 {
        return std::iter::once(s.to_string()).collect();
    }
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

pub fn jaccard_char3(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let (x, y) = (char_trigrams(a), char_trigrams(b));
    let inter = x.intersection(&y).count();
    let union = x.union(&y).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GraphFileWire {
    version: u32,
    graphs: Vec<GraphWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphWire {
    doc_id: String,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

pub fn graphs_to_json(graphs: &[IntraRelationGraph]) -> Result<String> {
    let wire = GraphFileWire {
        version: GRAPH_FORMAT_VERSION,
        graphs: graphs
            .iter()
            .map(|g| GraphWire {
                doc_id: g.doc_id.clone(),
                nodes: g.nodes.clone(),
                edges: g.edges.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&wire)?)
}

pub fn graphs_from_json(text: &str) -> Result<Vec<IntraRelationGraph>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let version = value
        .get("version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::invalid("graph file", "missing `version`"))? as u32;
    if version != GRAPH_FORMAT_VERSION {
        return Err(Error::Version {
            what: "graph file",
            found: version,
            expected: GRAPH_FORMAT_VERSION,
        });
    }
    let wire: GraphFileWire = serde_json::from_value(value)?;
    wire.graphs
        .into_iter()
        .map(|g| IntraRelationGraph::from_parts(g.doc_id, g.nodes, g.edges))
        .collect()
}

pub fn save_graphs(path: impl AsRef<Path>, graphs: &[IntraRelationGraph]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, graphs_to_json(graphs)?).map_err(|e| Error::io(path, e))
}

pub fn load_graphs(path: impl AsRef<Path>) -> Result<Vec<IntraRelationGraph>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    graphs_from_json(&text)
}
