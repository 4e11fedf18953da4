//! Strategies and property bodies shared by the property tests and the
//! acceptance run.

use ndarray::{Array2, Axis};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segcl::encoder::{
    event_embedding, gcn_forward_with_slope, mlp_forward, shuffle_negative, EmbeddingSet,
    EncoderConfig, ModelParams,
};
use segcl::graph::{Edge, IntraRelationGraph, Node};
use segcl::loss::{total_loss, LossConfig, UpperBoundMode};

fn d2(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Term values computed row by row, straight from the definitions.
pub fn loss_oracle(set: &EmbeddingSet, cfg: &LossConfig) -> (f64, f64, f64) {
    let n = set.anchor.nrows() as f64;
    let k = set.negatives.len() as f64;
    let (mut s, mut e, mut u) = (0.0, 0.0, 0.0);
    for neg in &set.negatives {
        for i in 0..set.anchor.nrows() {
            let h = set.anchor.row(i);
            let dn = d2(h, neg.row(i));
            let ds = d2(h, set.structural.row(i));
            let de = d2(h, set.event.row(0));
            s += (ds - dn + cfg.eta).max(0.0);
            e += (de - dn + cfg.eta).max(0.0);
            let hinge = (dn - ds - cfg.eta - cfg.theta).max(0.0);
            u += match cfg.upper_bound_sign {
                UpperBoundMode::Hinge => hinge,
                UpperBoundMode::PaperLiteral => -hinge,
            };
        }
    }
    (s / (n * k), e / (n * k), u / (n * k))
}

fn matrix(n: usize, d: usize, scale: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-scale..scale, n * d)
        .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

pub fn embedding_set() -> impl Strategy<Value = EmbeddingSet> {
    (2usize..7, 1usize..6, 1usize..4, any::<u64>(), 0.01f64..3.0).prop_flat_map(
        |(n, d, k, seed, scale)| {
            (
                matrix(n, d, scale),
                matrix(n, d, scale),
                matrix(1, d, scale),
            )
                .prop_map(move |(anchor, structural, event)| {
                    let negatives = shuffle_negative(&anchor, seed, k).unwrap();
                    EmbeddingSet {
                        anchor,
                        negatives,
                        structural,
                        event,
                    }
                })
        },
    )
}

pub fn loss_config() -> impl Strategy<Value = LossConfig> {
    (
        0.01f64..2.0,
        0.01f64..2.0,
        0.0f64..3.0,
        0.0f64..3.0,
        any::<bool>(),
    )
        .prop_map(|(eta, theta, w_e, w_s, literal)| LossConfig {
            eta,
            theta,
            w_e,
            w_s,
            upper_bound_sign: if literal {
                UpperBoundMode::PaperLiteral
            } else {
                UpperBoundMode::Hinge
            },
            ..LossConfig::default()
        })
}

pub fn terms_match_definitions(set: &EmbeddingSet, cfg: &LossConfig) -> Result<(), TestCaseError> {
    let r = total_loss(set, cfg).unwrap();
    let (s, e, u) = loss_oracle(set, cfg);
    let tol = 1e-12 * (1.0 + s.abs() + e.abs() + u.abs());
    prop_assert!((r.zeta_s - s).abs() <= tol, "zeta_s {} vs {}", r.zeta_s, s);
    prop_assert!((r.zeta_e - e).abs() <= tol, "zeta_e {} vs {}", r.zeta_e, e);
    prop_assert!((r.zeta_u - u).abs() <= tol, "zeta_u {} vs {}", r.zeta_u, u);
    let composed = cfg.w_e * r.zeta_e + cfg.w_s * r.zeta_s + r.zeta_u;
    prop_assert!(
        (r.zeta_total - composed).abs() <= 1e-12 * (1.0 + composed.abs()),
        "total {} vs composed {}",
        r.zeta_total,
        composed
    );
    Ok(())
}

pub fn hinge_nonnegative(set: &EmbeddingSet, cfg: &LossConfig) -> Result<(), TestCaseError> {
    let cfg = LossConfig {
        upper_bound_sign: UpperBoundMode::Hinge,
        ..cfg.clone()
    };
    let r = total_loss(set, &cfg).unwrap();
    prop_assert!(r.zeta_s >= 0.0 && r.zeta_e >= 0.0 && r.zeta_u >= 0.0 && r.zeta_total >= 0.0);
    Ok(())
}

/// Parameters of a constructed case where every margin holds.
#[derive(Debug, Clone)]
pub struct MarginCase {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub eta: f64,
    pub theta: f64,
    pub lambda: f64,
    pub mus: Vec<f64>,
    pub axes: Vec<usize>,
    pub shift: Vec<f64>,
    pub literal: bool,
}

pub fn margin_case() -> impl Strategy<Value = MarginCase> {
    (
        (2usize..7, 1usize..4, any::<u64>()),
        (0.01f64..2.0, 0.01f64..2.0, 0.05f64..0.95),
        prop::collection::vec(0.05f64..0.95, 6),
        prop::collection::vec(0usize..64, 6),
        prop::collection::vec(-5.0f64..5.0, 6),
        any::<bool>(),
    )
        .prop_map(
            |((n, k, seed), (eta, theta, lambda), mus, axes, shift, literal)| MarginCase {
                n,
                k,
                seed,
                eta,
                theta,
                lambda,
                mus,
                axes,
                shift,
                literal,
            },
        )
}

/// Anchors on a regular simplex have equal pairwise distances, so every
/// derangement gives the same negative distance. Positives are placed so
/// that `d⁺ + η ≤ d⁻ ≤ d⁺ + η + θ` holds for every row and negative.
pub fn satisfied_margins_give_zero(c: &MarginCase) -> Result<(), TestCaseError> {
    let n = c.n;
    // Pairwise squared distance D; the centroid sits at D(n-1)/(2n) from
    // every vertex, so D(n+1)/(2n) must lie in [η, η+θ].
    let big_d = 2.0 * n as f64 / (n as f64 + 1.0) * (c.eta + c.lambda * c.theta);
    let side = (big_d / 2.0).sqrt();
    let d = 2 * n;
    let mut anchor = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        anchor[[i, i]] = side;
        for j in 0..d {
            anchor[[i, j]] += c.shift[j % c.shift.len()];
        }
    }
    let event = anchor.mean_axis(Axis(0)).unwrap().insert_axis(Axis(0));
    // Structural positives: offset along a free axis by r with D - r in
    // [η, η+θ].
    let mut structural = anchor.clone();
    let room = ((big_d - c.eta) / c.theta).min(1.0);
    for i in 0..n {
        let r = big_d - c.eta - c.mus[i] * room * c.theta;
        structural[[i, n + c.axes[i] % n]] += r.max(0.0).sqrt();
    }
    let negatives = shuffle_negative(&anchor, c.seed, c.k).unwrap();
    let set = EmbeddingSet {
        anchor,
        negatives,
        structural,
        event,
    };
    let cfg = LossConfig {
        eta: c.eta,
        theta: c.theta,
        upper_bound_sign: if c.literal {
            UpperBoundMode::PaperLiteral
        } else {
            UpperBoundMode::Hinge
        },
        ..LossConfig::default()
    };
    let r = total_loss(&set, &cfg).unwrap();
    prop_assert_eq!(r.zeta_s, 0.0);
    prop_assert_eq!(r.zeta_e, 0.0);
    prop_assert_eq!(r.zeta_u, 0.0);
    prop_assert_eq!(r.zeta_total, 0.0);
    Ok(())
}

pub struct EncoderSetup {
    pub graph: IntraRelationGraph,
    pub x: Array2<f64>,
    pub params: ModelParams,
    pub slope: f64,
}

pub fn encoder_setup(seed: u64, rho: f64) -> EncoderSetup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = super::random_graph(&mut rng, "g", 1, 9, 14);
    for node in &mut graph.nodes {
        node.in_skeleton = rng.random_bool(0.5);
    }
    let enc = EncoderConfig {
        input_dim: 5,
        hidden_dim: 6,
        output_dim: 4,
        skeleton_weight: rho,
        ..EncoderConfig::default()
    };
    let params = ModelParams::init(&enc, seed ^ 0x55);
    let x = Array2::from_shape_fn((graph.node_count(), 5), |_| rng.random_range(-2.0..2.0));
    EncoderSetup {
        graph,
        x,
        params,
        slope: rng.random_range(0.0..0.3),
    }
}

/// The same graph with node `i` renamed `perm[i]`.
pub fn relabel(g: &IntraRelationGraph, perm: &[usize]) -> IntraRelationGraph {
    let mut nodes: Vec<Option<Node>> = vec![None; g.node_count()];
    for (i, node) in g.nodes.iter().enumerate() {
        nodes[perm[i]] = Some(Node {
            node_id: perm[i],
            ..node.clone()
        });
    }
    let mut edges: Vec<Edge> = g
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (perm[e.u], perm[e.v]);
            Edge {
                u: a.min(b),
                v: a.max(b),
                edge_type: e.edge_type,
            }
        })
        .collect();
    edges.sort();
    IntraRelationGraph::from_parts(
        g.doc_id.clone(),
        nodes.into_iter().map(Option::unwrap).collect(),
        edges,
    )
    .unwrap()
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn permutation_equivariance(seed: u64, rho: f64) -> Result<(), TestCaseError> {
    let s = encoder_setup(seed, rho);
    let n = s.graph.node_count();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.rotate_left(7)));
    let pg = relabel(&s.graph, &perm);
    let mut px = Array2::zeros(s.x.dim());
    for i in 0..n {
        px.row_mut(perm[i]).assign(&s.x.row(i));
    }
    let back = |m: &Array2<f64>| m.select(Axis(0), &perm);

    let h = mlp_forward(&s.x, &s.params).unwrap();
    let ph = mlp_forward(&px, &s.params).unwrap();
    prop_assert!(max_abs_diff(&back(&ph), &h) <= 1e-10);
    let g = gcn_forward_with_slope(&s.graph, &s.x, &s.params, s.slope).unwrap();
    let pgo = gcn_forward_with_slope(&pg, &px, &s.params, s.slope).unwrap();
    let diff = max_abs_diff(&back(&pgo), &g);
    prop_assert!(diff <= 1e-10, "gcn rows differ by {}", diff);
    let e = event_embedding(&g, &s.graph);
    let pe = event_embedding(&pgo, &pg);
    prop_assert!(max_abs_diff(&e, &pe) <= 1e-10);
    Ok(())
}

pub fn negatives_permute_rows(seed: u64, n: usize, k: usize) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = Array2::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
    let negs = shuffle_negative(&h, seed, k).unwrap();
    prop_assert_eq!(negs.len(), k);
    let key = |m: &Array2<f64>| {
        let mut rows: Vec<Vec<u64>> = m
            .rows()
            .into_iter()
            .map(|r| r.iter().map(|x| x.to_bits()).collect())
            .collect();
        rows.sort();
        rows
    };
    for neg in &negs {
        prop_assert_eq!(key(neg), key(&h));
        for i in 0..n {
            prop_assert_ne!(neg.row(i), h.row(i), "row {} kept its place", i);
        }
    }
    Ok(())
}

pub fn unit_weight_ignores_flags(seed: u64) -> Result<(), TestCaseError> {
    let s = encoder_setup(seed, 1.0);
    let mut flipped = s.graph.clone();
    for node in &mut flipped.nodes {
        node.in_skeleton = !node.in_skeleton;
    }
    let a = gcn_forward_with_slope(&s.graph, &s.x, &s.params, s.slope).unwrap();
    let b = gcn_forward_with_slope(&flipped, &s.x, &s.params, s.slope).unwrap();
    let bits = |m: &Array2<f64>| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    prop_assert_eq!(bits(&a), bits(&b));
    Ok(())
}
