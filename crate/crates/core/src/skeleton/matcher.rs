//! Backtracking label-preserving subgraph monomorphism search.

use std::collections::BTreeSet;

use super::dfs::LabeledGraph;

/// Distinct host vertex sets onto which `pattern` maps injectively with
/// matching vertex and edge labels (host may have extra edges).
pub fn embedding_vertex_sets(pattern: &LabeledGraph, host: &LabeledGraph) -> Vec<Vec<usize>> {
    let n = pattern.vertex_count();
    if n == 0 || n > host.vertex_count() {
        return Vec::new();
    }
    let order = search_order(pattern);
    let mut assignment = vec![usize::MAX; n];
    let mut used = vec![false; host.vertex_count()];
    let mut found = BTreeSet::new();
    extend(
        pattern,
        host,
        &order,
        0,
        &mut assignment,
        &mut used,
        &mut found,
    );
    found.into_iter().collect()
}

/// BFS order so every vertex after the first has an already-placed neighbor
/// (when the pattern is connected).
fn search_order(pattern: &LabeledGraph) -> Vec<usize> {
    let n = pattern.vertex_count();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        order.push(start);
        let mut head = order.len() - 1;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &(w, _, _) in &pattern.adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
    }
    order
}

fn extend(
    pattern: &LabeledGraph,
    host: &LabeledGraph,
    order: &[usize],
    depth: usize,
    assignment: &mut [usize],
    used: &mut [bool],
    found: &mut BTreeSet<Vec<usize>>,
) {
    if depth == order.len() {
        let mut set = assignment.to_vec();
        set.sort_unstable();
        found.insert(set);
        return;
    }
    let p = order[depth];
    for h in 0..host.vertex_count() {
        if used[h]
            || host.labels[h] != pattern.labels[p]
            || host.adj[h].len() < pattern.adj[p].len()
        {
            continue;
        }
        let consistent = pattern.adj[p].iter().all(|&(q, label, _)| {
            let hq = assignment[q];
            hq == usize::MAX || host.edge_between(h, hq).is_some_and(|(l, _)| l == label)
        });
        if !consistent {
            continue;
        }
        assignment[p] = h;
        used[h] = true;
        extend(pattern, host, order, depth + 1, assignment, used, found);
        used[h] = false;
        assignment[p] = usize::MAX;
    }
}
