#![allow(dead_code)]

pub mod checks;
pub mod props;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use segcl::events::Category;
use segcl::graph::{Edge, EdgeType, IntraRelationGraph, Node};
use segcl::skeleton::LabeledGraph;

/// Random graph with up to `max_nodes` nodes and `max_edges` edges; edge
/// types follow the endpoint categories. Not necessarily connected.
pub fn random_graph<R: Rng>(
    rng: &mut R,
    doc_id: &str,
    min_nodes: usize,
    max_nodes: usize,
    max_edges: usize,
) -> IntraRelationGraph {
    let n = rng.random_range(min_nodes..=max_nodes);
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            node_id: i,
            surface: format!("w{i}"),
            category: Category::ALL[rng.random_range(0..3)],
            in_skeleton: false,
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .collect();
    pairs.shuffle(rng);
    let m = rng.random_range(0..=max_edges.min(pairs.len()));
    let mut chosen = pairs[..m].to_vec();
    chosen.sort_unstable();
    let edges = chosen
        .into_iter()
        .map(|(u, v)| Edge {
            u,
            v,
            edge_type: EdgeType::between(nodes[u].category, nodes[v].category),
        })
        .collect();
    IntraRelationGraph::from_parts(doc_id, nodes, edges).expect("valid random graph")
}

/// Canonical form of a small labeled graph: vertex labels and sorted
/// `(i, j, edge_label)` triples under the lexicographically least ordering.
pub type Form = (Vec<u8>, Vec<(usize, usize, u8)>);

/// Exhaustive canonicalization. Vertices are first split into classes by
/// iterated neighborhood refinement; every ordering that respects the
/// classes is tried.
pub fn canonical_form(labels: &[u8], edges: &[(usize, usize, u8)]) -> Form {
    let n = labels.len();
    let mut adj: Vec<Vec<(usize, u8)>> = vec![Vec::new(); n];
    for &(u, v, l) in edges {
        adj[u].push((v, l));
        adj[v].push((u, l));
    }
    let mut color: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    loop {
        let sigs: Vec<(usize, Vec<(usize, u8)>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<(usize, u8)> = adj[v].iter().map(|&(w, l)| (color[w], l)).collect();
                nb.sort_unstable();
                (color[v], nb)
            })
            .collect();
        let distinct: BTreeSet<&(usize, Vec<(usize, u8)>)> = sigs.iter().collect();
        let rank: BTreeMap<&(usize, Vec<(usize, u8)>), usize> =
            distinct.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let next: Vec<usize> = sigs.iter().map(|s| rank[s]).collect();
        let before = color.iter().collect::<BTreeSet<_>>().len();
        let after = next.iter().collect::<BTreeSet<_>>().len();
        color = next;
        if after == before {
            break;
        }
    }
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        classes.entry(color[v]).or_default().push(v);
    }
    let classes: Vec<Vec<usize>> = classes.into_values().collect();

    let mut best: Option<Form> = None;
    let mut order = Vec::with_capacity(n);
    search(&classes, 0, &mut order, labels, edges, &mut best);
    best.expect("at least one ordering")
}

fn search(
    classes: &[Vec<usize>],
    k: usize,
    order: &mut Vec<usize>,
    labels: &[u8],
    edges: &[(usize, usize, u8)],
    best: &mut Option<Form>,
) {
    if k == classes.len() {
        let mut pos = vec![0; labels.len()];
        for (i, &v) in order.iter().enumerate() {
            pos[v] = i;
        }
        let form_labels: Vec<u8> = order.iter().map(|&v| labels[v]).collect();
        let mut form_edges: Vec<(usize, usize, u8)> = edges
            .iter()
            .map(|&(u, v, l)| (pos[u].min(pos[v]), pos[u].max(pos[v]), l))
            .collect();
        form_edges.sort_unstable();
        let form = (form_labels, form_edges);
        if best.as_ref().is_none_or(|b| form < *b) {
            *best = Some(form);
        }
        return;
    }
    permute(&classes[k].clone(), 0, &mut |perm| {
        let len = order.len();
        order.extend_from_slice(perm);
        search(classes, k + 1, order, labels, edges, best);
        order.truncate(len);
    });
}

fn permute(items: &[usize], start: usize, f: &mut dyn FnMut(&[usize])) {
    let mut items = items.to_vec();
    heap(&mut items, start, f);
}

fn heap(items: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        f(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        heap(items, k + 1, f);
        items.swap(k, i);
    }
}

pub fn form_of_labeled(g: &LabeledGraph) -> Form {
    let mut edges = Vec::new();
    for (u, list) in g.adj.iter().enumerate() {
        for &(v, l, _) in list {
            if u < v {
                edges.push((u, v, l));
            }
        }
    }
    canonical_form(&g.labels, &edges)
}

/// Support and per-document vertex sets of every connected subgraph with
/// `min_edges..=max_edges` edges, found by enumerating edge subsets.
pub fn brute_force_patterns(
    graphs: &[IntraRelationGraph],
    min_support: usize,
    min_edges: usize,
    max_edges: usize,
) -> BTreeMap<Form, BTreeMap<String, BTreeSet<Vec<usize>>>> {
    let mut all: BTreeMap<Form, BTreeMap<String, BTreeSet<Vec<usize>>>> = BTreeMap::new();
    for g in graphs {
        let edges: Vec<(usize, usize, u8)> = g
            .edges
            .iter()
            .map(|e| (e.u, e.v, e.edge_type.index() as u8))
            .collect();
        let m = edges.len();
        assert!(m <= 16, "brute force is exponential in edges");
        for mask in 1u32..(1 << m) {
            let k = mask.count_ones() as usize;
            if k < min_edges || k > max_edges {
                continue;
            }
            let subset: Vec<(usize, usize, u8)> = (0..m)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| edges[i])
                .collect();
            let verts: BTreeSet<usize> = subset.iter().flat_map(|&(u, v, _)| [u, v]).collect();
            let verts: Vec<usize> = verts.into_iter().collect();
            if !connected(&verts, &subset) {
                continue;
            }
            let local = |x: usize| verts.binary_search(&x).expect("vertex of subset");
            let labels: Vec<u8> = verts
                .iter()
                .map(|&v| g.nodes[v].category.index() as u8)
                .collect();
            let local_edges: Vec<(usize, usize, u8)> = subset
                .iter()
                .map(|&(u, v, l)| (local(u), local(v), l))
                .collect();
            let form = canonical_form(&labels, &local_edges);
            all.entry(form)
                .or_default()
                .entry(g.doc_id.clone())
                .or_default()
                .insert(verts);
        }
    }
    all.retain(|_, docs| docs.len() >= min_support);
    all
}

fn connected(verts: &[usize], edges: &[(usize, usize, u8)]) -> bool {
    let mut seen = BTreeSet::from([verts[0]]);
    let mut stack = vec![verts[0]];
    while let Some(x) = stack.pop() {
        for &(u, v, _) in edges {
            let other = if u == x {
                v
            } else if v == x {
                u
            } else {
                continue;
            };
            if seen.insert(other) {
                stack.push(other);
            }
        }
    }
    seen.len() == verts.len()
}
