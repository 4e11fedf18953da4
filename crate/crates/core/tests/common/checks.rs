//! Whole-criterion checks returning a one-line summary or the first failure.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segcl::encoder::{EncoderConfig, ModelParams};
use segcl::graph::IntraRelationGraph;
use segcl::loss::{LossConfig, UpperBoundMode};
use segcl::skeleton::{is_canonical, mine, MinerConfig};
use segcl::train::{graph_gradients, PassSeeds};

use super::props;
use super::{brute_force_patterns, form_of_labeled, random_graph, Form};

pub type Check = Result<String, String>;

type Found = BTreeMap<Form, BTreeMap<String, BTreeSet<Vec<usize>>>>;

pub fn mined_forms(graphs: &[IntraRelationGraph], cfg: &MinerConfig) -> Result<Found, String> {
    let mut out = Found::new();
    for p in mine(graphs, cfg).map_err(|e| e.to_string())? {
        if !is_canonical(&p.code) {
            return Err(format!("non-minimal code {}", p.code));
        }
        if p.support != p.matches.len() {
            return Err(format!(
                "support {} but {} matched documents",
                p.support,
                p.matches.len()
            ));
        }
        let form = form_of_labeled(&p.graph());
        let docs = p
            .matches
            .into_iter()
            .map(|(doc, sets)| (doc, sets.into_iter().collect()))
            .collect();
        if out.insert(form, docs).is_some() {
            return Err(format!("pattern {} reported twice", p.code));
        }
    }
    Ok(out)
}

/// `mine()` against exhaustive enumeration on seeded random corpora of
/// 10 graphs with at most 8 nodes and 10 edges.
pub fn gspan_vs_oracle(corpora: u64) -> Check {
    let start = Instant::now();
    let mut patterns = 0;
    for corpus in 0..corpora {
        let mut rng = ChaCha8Rng::seed_from_u64(corpus);
        let graphs: Vec<_> = (0..10)
            .map(|i| random_graph(&mut rng, &format!("d{i}"), 2, 8, 10))
            .collect();
        let min_support = 2 + (corpus % 2) as usize;
        let cfg = MinerConfig {
            min_support: Some(min_support),
            min_edges: 1,
            max_edges: 10,
            ..MinerConfig::default()
        };
        let expected = brute_force_patterns(&graphs, min_support, 1, 10);
        let got = mined_forms(&graphs, &cfg).map_err(|e| format!("corpus {corpus}: {e}"))?;
        let missing = expected.keys().filter(|k| !got.contains_key(*k)).count();
        let extra = got.keys().filter(|k| !expected.contains_key(*k)).count();
        if missing + extra > 0 {
            return Err(format!(
                "corpus {corpus}: {missing} missing and {extra} extra patterns"
            ));
        }
        if got != expected {
            return Err(format!(
                "corpus {corpus}: supports or matched node sets differ"
            ));
        }
        patterns += expected.len();
    }
    let secs = start.elapsed().as_secs_f64();
    if patterns <= 100 {
        return Err(format!(
            "only {patterns} frequent patterns; corpora too sparse"
        ));
    }
    if secs >= 60.0 {
        return Err(format!("took {secs:.1} s"));
    }
    Ok(format!(
        "{corpora} corpora, {patterns} patterns identical, {secs:.2} s"
    ))
}

pub const FD_STEP: f64 = 1e-6;
/// Relative tolerance where either gradient is at least `FD_FLOOR` in size.
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_FLOOR: f64 = 1e-5;
/// Absolute tolerance below the floor.
pub const FD_ABS_TOL: f64 = 1e-9;

pub struct GradCase {
    pub graph: IntraRelationGraph,
    pub params: ModelParams,
    pub features: Array2<f64>,
    pub enc: EncoderConfig,
    pub loss: LossConfig,
    pub reg: f64,
    pub seeds: PassSeeds,
}

impl GradCase {
    /// Random 5-node graph with small dimensions. Odd seeds spread the
    /// anchor rows and shrink the structural output so that negatives can
    /// sit beyond both margins, which activates the upper bound.
    pub fn random(seed: u64, dropout: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut graph = random_graph(&mut rng, "g", 5, 5, 10);
        for node in &mut graph.nodes {
            node.in_skeleton = rng.random_bool(0.6);
        }
        let enc = EncoderConfig {
            input_dim: 6,
            hidden_dim: 5,
            output_dim: 4,
            skeleton_weight: rng.random_range(1.0..3.0),
            ..EncoderConfig::default()
        };
        let mut params = ModelParams::init(&enc, seed);
        if seed % 2 == 1 {
            for layer in &mut params.mlp {
                layer.weight *= 10.0;
                layer.bias.fill(0.0);
            }
            for w in &mut params.gcn {
                *w *= 0.05;
            }
        }
        let features = Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.0..1.0));
        // Margins on the scale of the initial distances.
        let loss = LossConfig {
            eta: rng.random_range(1e-4..1e-2),
            theta: rng.random_range(1e-4..1e-2),
            w_e: rng.random_range(0.2..2.0),
            w_s: rng.random_range(0.2..2.0),
            k_negatives: rng.random_range(1..=3),
            upper_bound_sign: if rng.random_bool(0.5) {
                UpperBoundMode::Hinge
            } else {
                UpperBoundMode::PaperLiteral
            },
            ..LossConfig::default()
        };
        let (reg, drop) = if dropout {
            (1e-3, Some((0.3, seed ^ 0xd)))
        } else {
            (0.0, None)
        };
        Self {
            graph,
            params,
            features,
            enc,
            loss,
            reg,
            seeds: PassSeeds {
                negatives: seed ^ 0xa,
                dropout: drop,
            },
        }
    }

    fn objective(&self, params: &ModelParams, features: &Array2<f64>) -> f64 {
        graph_gradients(
            params,
            &self.graph,
            features,
            &self.enc,
            &self.loss,
            self.reg,
            self.seeds,
            false,
        )
        .unwrap()
        .objective
    }
}

fn compare(label: &str, analytic: f64, numeric: f64) -> Result<f64, String> {
    let scale = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if scale >= FD_FLOOR {
        let rel = diff / scale;
        if rel >= FD_REL_TOL {
            return Err(format!(
                "{label}: analytic {analytic:e} numeric {numeric:e} rel {rel:e}"
            ));
        }
        Ok(rel)
    } else if diff >= FD_ABS_TOL {
        Err(format!(
            "{label}: analytic {analytic:e} numeric {numeric:e} abs {diff:e}"
        ))
    } else {
        Ok(0.0)
    }
}

pub struct GradStats {
    pub worst_rel: f64,
    pub informative: usize,
    pub upper_active: bool,
}

/// Every parameter and input-feature gradient against central differences.
pub fn check_case(case: &GradCase) -> Result<GradStats, String> {
    let g = graph_gradients(
        &case.params,
        &case.graph,
        &case.features,
        &case.enc,
        &case.loss,
        case.reg,
        case.seeds,
        false,
    )
    .map_err(|e| e.to_string())?;
    if case.reg == 0.0 && g.objective != g.report.zeta_total {
        return Err("objective differs from zeta_total without a penalty".into());
    }
    let names: Vec<String> = case
        .params
        .named_tensors()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut stats = GradStats {
        worst_rel: 0.0,
        informative: 0,
        upper_active: g.report.zeta_u != 0.0,
    };
    for (t, name) in names.iter().enumerate() {
        let (rows, cols) = g.params[t].dim();
        for i in 0..rows {
            for j in 0..cols {
                let mut plus = case.params.clone();
                plus.tensors_mut()[t][[i, j]] += FD_STEP;
                let mut minus = case.params.clone();
                minus.tensors_mut()[t][[i, j]] -= FD_STEP;
                let numeric = (case.objective(&plus, &case.features)
                    - case.objective(&minus, &case.features))
                    / (2.0 * FD_STEP);
                let rel = compare(&format!("{name}[{i},{j}]"), g.params[t][[i, j]], numeric)?;
                stats.worst_rel = stats.worst_rel.max(rel);
                stats.informative += usize::from(numeric.abs() >= FD_FLOOR);
            }
        }
    }
    for i in 0..case.features.nrows() {
        for j in 0..case.features.ncols() {
            let mut plus = case.features.clone();
            plus[[i, j]] += FD_STEP;
            let mut minus = case.features.clone();
            minus[[i, j]] -= FD_STEP;
            let numeric = (case.objective(&case.params, &plus)
                - case.objective(&case.params, &minus))
                / (2.0 * FD_STEP);
            let rel = compare(&format!("x[{i},{j}]"), g.features[[i, j]], numeric)?;
            stats.worst_rel = stats.worst_rel.max(rel);
        }
    }
    Ok(stats)
}

/// Gradients of `zeta_total` on `graphs` random 5-node graphs.
pub fn gradients(graphs: u64) -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut informative = 0;
    let mut upper = 0;
    for seed in 0..graphs {
        let s =
            check_case(&GradCase::random(seed, false)).map_err(|e| format!("graph {seed}: {e}"))?;
        worst = worst.max(s.worst_rel);
        informative += s.informative;
        upper += usize::from(s.upper_active);
    }
    let secs = start.elapsed().as_secs_f64();
    if informative < 200 {
        return Err(format!("only {informative} non-negligible gradients"));
    }
    if upper == 0 {
        return Err("upper-bound term never active".into());
    }
    if secs >= 30.0 {
        return Err(format!("took {secs:.1} s"));
    }
    Ok(format!(
        "{graphs} graphs, worst relative error {worst:.2e}, upper bound active in {upper}, {secs:.2} s"
    ))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(
            proptest::test_runner::RngAlgorithm::ChaCha,
        ),
    )
}

fn run<S: Strategy>(
    cases: u32,
    name: &str,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), proptest::test_runner::TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| format!("{name}: {e}"))
}

pub fn loss_invariants(cases: u32) -> Check {
    let sets = || (props::embedding_set(), props::loss_config());
    run(cases, "hinge non-negativity", sets(), |(s, c)| {
        props::hinge_nonnegative(&s, &c)
    })?;
    run(cases, "composition", sets(), |(s, c)| {
        props::terms_match_definitions(&s, &c)
    })?;
    run(cases, "satisfied margins", props::margin_case(), |c| {
        props::satisfied_margins_give_zero(&c)
    })?;
    Ok(format!(
        "{cases} cases each: non-negative, zero under margins, composition to 1e-12"
    ))
}

pub fn encoder_invariants(cases: u32) -> Check {
    run(
        cases,
        "permutation equivariance",
        (any::<u64>(), 1.0f64..4.0),
        |(s, r)| props::permutation_equivariance(s, r),
    )?;
    run(
        cases,
        "negative row multisets",
        (any::<u64>(), 2usize..12, 1usize..5),
        |(s, n, k)| props::negatives_permute_rows(s, n, k),
    )?;
    run(
        cases,
        "unit weight flag independence",
        any::<u64>(),
        props::unit_weight_ignores_flags,
    )?;
    Ok(format!(
        "{cases} cases each: equivariant to 1e-10, row multisets kept, rho=1 bitwise"
    ))
}
