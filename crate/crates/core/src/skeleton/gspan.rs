//! gSpan frequent subgraph mining over a graph transaction database.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::dfs::{extensions, is_canonical, seed_edges, DfsCode, DfsEdge, Embedding, LabeledGraph};

/// Traversal order of the frequent single-edge seeds. It only affects the
/// order in which branches are explored; the returned pattern set is the
/// same either way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedOrder {
    /// Ascending DFS-code order, higher support first on ties.
    #[default]
    Ascending,
    /// Descending support, then descending code.
    Descending,
}

#[derive(Debug, Clone, Copy)]
pub struct GspanParams {
    pub min_support: usize,
    pub min_edges: usize,
    pub max_edges: usize,
    pub seed_order: SeedOrder,
}

/// A frequent pattern with every embedding found in the database.
#[derive(Debug, Clone)]
pub struct FrequentPattern {
    pub code: DfsCode,
    pub support: usize,
    /// `(graph index, distinct vertex sets)` for each supporting graph,
    /// ordered by graph index.
    pub matches: Vec<(usize, Vec<Vec<usize>>)>,
}

type Projection = Vec<(usize, Embedding)>;

fn support_of(projection: &Projection) -> usize {
    let mut gids: Vec<usize> = projection.iter().map(|(g, _)| *g).collect();
    gids.dedup();
    gids.len()
}

fn matches_of(projection: &Projection) -> Vec<(usize, Vec<Vec<usize>>)> {
    let mut per_graph: BTreeMap<usize, BTreeSet<Vec<usize>>> = BTreeMap::new();
    for (gid, emb) in projection {
        let mut vs = emb.vertices.clone();
        vs.sort_unstable();
        per_graph.entry(*gid).or_default().insert(vs);
    }
    per_graph
        .into_iter()
        .map(|(g, sets)| (g, sets.into_iter().collect()))
        .collect()
}

/// Mines every connected pattern with support `>= min_support` and an edge
/// count in `[min_edges, max_edges]`, each reported in minimum DFS code.
/// The result is sorted by code.
pub fn gspan(graphs: &[LabeledGraph], params: GspanParams) -> Vec<FrequentPattern> {
    if params.max_edges == 0 || graphs.is_empty() {
        return Vec::new();
    }
    let mut seeds: BTreeMap<DfsEdge, Projection> = BTreeMap::new();
    for (gid, g) in graphs.iter().enumerate() {
        for (e, emb) in seed_edges(g) {
            seeds.entry(e).or_default().push((gid, emb));
        }
    }
    let mut frequent: Vec<(DfsEdge, Projection, usize)> = seeds
        .into_iter()
        .filter_map(|(e, p)| {
            let s = support_of(&p);
            (s >= params.min_support).then_some((e, p, s))
        })
        .collect();
    match params.seed_order {
        SeedOrder::Ascending => frequent.sort_by(|a, b| a.0.cmp(&b.0).then(b.2.cmp(&a.2))),
        SeedOrder::Descending => frequent.sort_by(|a, b| b.2.cmp(&a.2).then(b.0.cmp(&a.0))),
    }

    let mut out: Vec<FrequentPattern> = frequent
        .into_par_iter()
        .flat_map_iter(|(edge, projection, support)| {
            let mut found = Vec::new();
            let code = DfsCode(vec![edge]);
            grow(graphs, &params, code, projection, support, &mut found);
            found
        })
        .collect();
    out.sort_by(|a, b| a.code.cmp(&b.code));
    out
}

fn grow(
    graphs: &[LabeledGraph],
    params: &GspanParams,
    code: DfsCode,
    projection: Projection,
    support: usize,
    out: &mut Vec<FrequentPattern>,
) {
    if code.len() >= params.min_edges {
        out.push(FrequentPattern {
            code: code.clone(),
            support,
            matches: matches_of(&projection),
        });
    }
    if code.len() >= params.max_edges {
        return;
    }
    let rmpath = code.rightmost_path();
    let mut children: BTreeMap<DfsEdge, Projection> = BTreeMap::new();
    for (gid, emb) in &projection {
        for (e, target, id) in extensions(&graphs[*gid], emb, &rmpath) {
            let mut next = emb.clone();
            if e.is_forward() {
                next.vertices.push(target);
            }
            next.edges.push(id);
            children.entry(e).or_default().push((*gid, next));
        }
    }
    for (e, child) in children {
        let s = support_of(&child);
        if s < params.min_support {
            continue;
        }
        let mut next_code = code.clone();
        next_code.push(e);
        if !is_canonical(&next_code) {
            continue;
        }
        grow(graphs, params, next_code, child, s, out);
    }
}
