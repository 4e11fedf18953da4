//! DFS codes and the minimum-DFS-code canonical form.
//!
//! A DFS code lists the edges of a connected labeled graph in the order a
//! depth-first traversal discovers them. Each edge is
//! `(from, to, from_label, edge_label, to_label)` over discovery indices.
//! Forward edges (`from < to`) discover a new vertex; backward edges close
//! a cycle to a vertex on the rightmost path. Codes are compared edge by
//! edge with the DFS lexicographic order, and the smallest code of a graph
//! is its canonical form.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

pub type Label = u8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DfsEdge {
    pub from: usize,
    pub to: usize,
    pub from_label: Label,
    pub edge_label: Label,
    pub to_label: Label,
}

impl DfsEdge {
    pub fn new(
        from: usize,
        to: usize,
        from_label: Label,
        edge_label: Label,
        to_label: Label,
    ) -> Self {
        Self {
            from,
            to,
            from_label,
            edge_label,
            to_label,
        }
    }

    pub fn is_forward(&self) -> bool {
        self.from < self.to
    }

    fn labels(&self) -> (Label, Label, Label) {
        (self.from_label, self.edge_label, self.to_label)
    }
}

impl Ord for DfsEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        let (i1, j1, i2, j2) = (self.from, self.to, other.from, other.to);
        if (i1, j1) == (i2, j2) {
            return self.labels().cmp(&other.labels());
        }
        match (self.is_forward(), other.is_forward()) {
            (true, true) => j1.cmp(&j2).then(i2.cmp(&i1)),
            (false, false) => i1.cmp(&i2).then(j1.cmp(&j2)),
            (false, true) => {
                if i1 < j2 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
            (true, false) => {
                if j1 <= i2 {
                    Ordering::Less
                } else {
                    Ordering::Greater
                }
            }
        }
    }
}

impl PartialOrd for DfsEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// An ordered edge list; compared lexicographically by [`DfsEdge`] order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DfsCode(pub Vec<DfsEdge>);

impl DfsCode {
    pub fn edges(&self) -> &[DfsEdge] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.0
            .iter()
            .map(|e| e.from.max(e.to) + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn push(&mut self, e: DfsEdge) {
        self.0.push(e);
    }

    /// Vertex labels by discovery index.
    pub fn vertex_labels(&self) -> Vec<Label> {
        let mut labels = vec![0; self.vertex_count()];
        for e in &self.0 {
            labels[e.from] = e.from_label;
            labels[e.to] = e.to_label;
        }
        labels
    }

    /// Discovery indices on the rightmost path, from the rightmost vertex
    /// back to the root.
    pub fn rightmost_path(&self) -> Vec<usize> {
        let mut path = Vec::new();
        let mut current: Option<usize> = None;
        for e in self.0.iter().rev() {
            if !e.is_forward() {
                continue;
            }
            match current {
                None => {
                    path.push(e.to);
                    path.push(e.from);
                    current = Some(e.from);
                }
                Some(c) if e.to == c => {
                    path.push(e.from);
                    current = Some(e.from);
                }
                _ => {}
            }
        }
        path
    }

    /// Checks the structural rules of a DFS code: the first edge is
    /// `(0, 1)`, every forward edge discovers the next index from a vertex
    /// on the current rightmost path, and every backward edge leaves the
    /// rightmost vertex.
    pub fn is_well_formed(&self) -> bool {
        let Some(first) = self.0.first() else {
            return true;
        };
        if (first.from, first.to) != (0, 1) {
            return false;
        }
        let mut prefix = DfsCode(vec![*first]);
        let mut seen = std::collections::HashSet::new();
        seen.insert((0, 1));
        for e in &self.0[1..] {
            let rm = prefix.rightmost_path();
            let n = prefix.vertex_count();
            let ok = if e.is_forward() {
                e.to == n && rm.contains(&e.from)
            } else {
                e.from == rm[0] && rm.contains(&e.to) && e.to != e.from
            };
            if !ok || !seen.insert((e.from.min(e.to), e.from.max(e.to))) {
                return false;
            }
            prefix.push(*e);
        }
        true
    }

    pub fn to_graph(&self) -> LabeledGraph {
        let labels = self.vertex_labels();
        let mut g = LabeledGraph::new(labels);
        for e in &self.0 {
            g.add_edge(e.from, e.to, e.edge_label);
        }
        g
    }
}

impl fmt::Display for DfsCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, e) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(
                f,
                "({},{},{},{},{})",
                e.from, e.to, e.from_label, e.edge_label, e.to_label
            )?;
        }
        Ok(())
    }
}

/// Small undirected labeled graph used by the miner and the matcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    pub labels: Vec<Label>,
    /// `(neighbor, edge_label, edge_id)` per vertex.
    pub adj: Vec<Vec<(usize, Label, usize)>>,
    pub edge_count: usize,
}

impl LabeledGraph {
    pub fn new(labels: Vec<Label>) -> Self {
        let n = labels.len();
        Self {
            labels,
            adj: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    pub fn add_edge(&mut self, u: usize, v: usize, label: Label) {
        let id = self.edge_count;
        self.adj[u].push((v, label, id));
        self.adj[v].push((u, label, id));
        self.edge_count += 1;
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<(Label, usize)> {
        self.adj[u]
            .iter()
            .find(|(w, _, _)| *w == v)
            .map(|&(_, l, id)| (l, id))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(w, _, _) in &self.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// A partial mapping of a DFS code into a graph.
#[derive(Debug, Clone)]
pub(crate) struct Embedding {
    /// Graph vertex per discovery index.
    pub vertices: Vec<usize>,
    /// Graph edge ids already covered, in code order.
    pub edges: Vec<usize>,
}

impl Embedding {
    fn uses_edge(&self, id: usize) -> bool {
        self.edges.contains(&id)
    }

    fn extend(&self, e: &DfsEdge, target: usize, edge_id: usize) -> Self {
        let mut next = self.clone();
        if e.is_forward() {
            next.vertices.push(target);
        }
        next.edges.push(edge_id);
        next
    }
}

/// All rightmost-path extensions of `emb` inside `g`, for a code whose
/// rightmost path is `rmpath` (rightmost vertex first).
pub(crate) fn extensions(
    g: &LabeledGraph,
    emb: &Embedding,
    rmpath: &[usize],
) -> Vec<(DfsEdge, usize, usize)> {
    let mut out = Vec::new();
    let n = emb.vertices.len();
    let rm = rmpath[0];
    let rm_vertex = emb.vertices[rm];
    for &idx in rmpath.iter().skip(1) {
        let target = emb.vertices[idx];
        for &(w, el, id) in &g.adj[rm_vertex] {
            if w == target && !emb.uses_edge(id) {
                out.push((
                    DfsEdge::new(rm, idx, g.labels[rm_vertex], el, g.labels[target]),
                    target,
                    id,
                ));
            }
        }
    }
    for &idx in rmpath {
        let v = emb.vertices[idx];
        for &(w, el, id) in &g.adj[v] {
            if !emb.vertices.contains(&w) {
                out.push((DfsEdge::new(idx, n, g.labels[v], el, g.labels[w]), w, id));
            }
        }
    }
    out
}

/// Initial single-edge embeddings with their codes, oriented so that the
/// first vertex label does not exceed the second.
pub(crate) fn seed_edges(g: &LabeledGraph) -> Vec<(DfsEdge, Embedding)> {
    let mut out = Vec::new();
    for u in 0..g.vertex_count() {
        for &(v, el, id) in &g.adj[u] {
            if g.labels[u] <= g.labels[v] {
                out.push((
                    DfsEdge::new(0, 1, g.labels[u], el, g.labels[v]),
                    Embedding {
                        vertices: vec![u, v],
                        edges: vec![id],
                    },
                ));
            }
        }
    }
    out
}

/// Computes the minimum DFS code of a connected graph, stopping early and
/// returning `Err(k)` as soon as the minimum is known to differ from
/// `reference` at position `k`.
fn min_code_against(
    g: &LabeledGraph,
    reference: Option<&DfsCode>,
) -> std::result::Result<DfsCode, usize> {
    let mut code = DfsCode::default();
    let seeds = seed_edges(g);
    let Some(first) = seeds.iter().map(|(e, _)| *e).min() else {
        return Ok(code);
    };
    if let Some(r) = reference {
        if r.0.first() != Some(&first) {
            return Err(0);
        }
    }
    code.push(first);
    let mut projection: Vec<Embedding> = seeds
        .into_iter()
        .filter(|(e, _)| *e == first)
        .map(|(_, emb)| emb)
        .collect();

    while code.len() < g.edge_count {
        let rmpath = code.rightmost_path();
        let mut best: Option<DfsEdge> = None;
        let mut next = Vec::new();
        for emb in &projection {
            for (e, target, id) in extensions(g, emb, &rmpath) {
                match best.map(|b| e.cmp(&b)) {
                    None | Some(Ordering::Less) => {
                        best = Some(e);
                        next.clear();
                        next.push(emb.extend(&e, target, id));
                    }
                    Some(Ordering::Equal) => next.push(emb.extend(&e, target, id)),
                    Some(Ordering::Greater) => {}
                }
            }
        }
        let best = best.expect("connected graph always has an extension");
        if let Some(r) = reference {
            if r.0.get(code.len()) != Some(&best) {
                return Err(code.len());
            }
        }
        code.push(best);
        projection = next;
    }
    Ok(code)
}

/// The lexicographically smallest DFS code of a connected labeled graph.
pub fn min_dfs_code(g: &LabeledGraph) -> Result<DfsCode> {
    if !g.is_connected() {
        return Err(Error::Disconnected);
    }
    Ok(min_code_against(g, None).expect("no reference given"))
}

/// Whether `code` is the minimum DFS code of the graph it describes.
pub fn is_canonical(code: &DfsCode) -> bool {
    let g = code.to_graph();
    min_code_against(&g, Some(code)).is_ok()
}
