//! Anchor, negative, structural-positive and event-positive embeddings.
//!
//! * anchor `H`: a two-layer MLP with logistic activations applied to each
//!   node's input features independently;
//! * negatives `H⁻`: row derangements of the anchor;
//! * structural positive `H⁺_s`: a two-layer GCN whose layer input is each
//!   node's row concatenated with the mean of its neighbors' rows, skeleton
//!   rows scaled by `ρ`, propagated with the self-looped symmetric
//!   normalized adjacency and a LeakyReLU;
//! * event positive `H⁺_e`: the mean of the skeleton nodes' rows.
//!
//! All forward passes are recorded on a [`Tape`] so the trainer can
//! differentiate through them; the plain functions here run a throwaway
//! tape.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::PathBuf;
use std::str::FromStr;

use fnv::FnvHasher;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::IntraRelationGraph;
use crate::tape::{Tape, Var};
use crate::vectors::WordVectors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    OnehotHashed,
    Pretrained,
    RandomLearnable,
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "onehot-hashed" => Ok(Self::OnehotHashed),
            "pretrained" => Ok(Self::Pretrained),
            "random-learnable" => Ok(Self::RandomLearnable),
            other => Err(format!("unknown feature mode {other:?}")),
        }
    }
}

/// Which embedding feeds the event positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventSource {
    Structural,
    Anchor,
}

/// Which node embeddings the document readout averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Readout {
    Anchor,
    Structural,
    /// Anchor mean followed by structural mean.
    Concat,
}

impl FromStr for Readout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "anchor" => Ok(Self::Anchor),
            "structural" => Ok(Self::Structural),
            "concat" => Ok(Self::Concat),
            other => Err(format!("unknown readout {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub feature_mode: FeatureMode,
    /// Input feature dimension `d0`.
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub pretrained_vectors: Option<PathBuf>,
    pub leaky_slope: f64,
    /// Row scale `ρ` applied to skeleton nodes inside the GCN.
    pub skeleton_weight: f64,
    pub event_source: EventSource,
    pub readout: Readout,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_mode: FeatureMode::OnehotHashed,
            input_dim: 64,
            hidden_dim: 128,
            output_dim: 128,
            pretrained_vectors: None,
            leaky_slope: 0.01,
            skeleton_weight: 1.5,
            event_source: EventSource::Structural,
            readout: Readout::Anchor,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("encoder config", "dimensions must be >= 1"));
        }
        if !(self.skeleton_weight > 0.0 && self.skeleton_weight.is_finite()) {
            return Err(Error::invalid(
                "encoder config",
                "skeleton_weight must be a positive real",
            ));
        }
        if self.feature_mode == FeatureMode::Pretrained && self.pretrained_vectors.is_none() {
            return Err(Error::invalid(
                "encoder config",
                "pretrained feature mode requires pretrained_vectors",
            ));
        }
        Ok(())
    }
}

/// Node input features `H⁰` of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub trainable: bool,
}

fn surface_bucket(surface: &str, dim: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(surface.as_bytes());
    (h.finish() % dim as u64) as usize
}

fn doc_seed(seed: u64, doc_id: &str) -> u64 {
    let mut h = FnvHasher::with_key(seed);
    h.write(doc_id.as_bytes());
    h.finish()
}

/// Resolved feature initializer.
#[derive(Debug, Clone)]
pub struct FeatureInit {
    pub mode: FeatureMode,
    pub dim: usize,
    pub vectors: Option<WordVectors>,
    pub seed: u64,
}

impl FeatureInit {
    pub fn from_config(cfg: &EncoderConfig, seed: u64) -> Result<Self> {
        let vectors = match (cfg.feature_mode, &cfg.pretrained_vectors) {
            (FeatureMode::Pretrained, Some(path)) => {
                let v = WordVectors::load(path)?;
                if v.dim() != cfg.input_dim {
                    return Err(Error::invalid(
                        "encoder config",
                        format!(
                            "pretrained vectors have dim {} but input_dim is {}",
                            v.dim(),
                            cfg.input_dim
                        ),
                    ));
                }
                Some(v)
            }
            (FeatureMode::Pretrained, None) => {
                return Err(Error::invalid(
                    "encoder config",
                    "pretrained feature mode requires pretrained_vectors",
                ))
            }
            _ => None,
        };
        Ok(Self {
            mode: cfg.feature_mode,
            dim: cfg.input_dim,
            vectors,
            seed,
        })
    }

    pub fn features(&self, graph: &IntraRelationGraph) -> FeatureMatrix {
        let (n, d) = (graph.node_count(), self.dim);
        let mut values = Array2::zeros((n, d));
        match self.mode {
            FeatureMode::OnehotHashed => {
                for (i, node) in graph.nodes.iter().enumerate() {
                    values[[i, surface_bucket(&node.surface, d)]] = 1.0;
                }
            }
            FeatureMode::Pretrained => {
                for (i, node) in graph.nodes.iter().enumerate() {
                    match self.vectors.as_ref().and_then(|v| v.get(&node.surface)) {
                        Some(vec) => values.row_mut(i).assign(&Array1::from(vec.to_vec())),
                        None => values[[i, surface_bucket(&node.surface, d)]] = 1.0,
                    }
                }
            }
            FeatureMode::RandomLearnable => {
                let bound = 1.0 / (d as f64).sqrt();
                let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(self.seed, &graph.doc_id));
                values.mapv_inplace(|_| rng.random_range(-bound..bound));
            }
        }
        FeatureMatrix {
            values,
            trainable: self.mode == FeatureMode::RandomLearnable,
        }
    }
}

/// Features of a single graph; see [`FeatureInit`] for the seeding of the
/// random mode.
pub fn init_features(
    graph: &IntraRelationGraph,
    mode: FeatureMode,
    d0: usize,
    vectors: Option<&WordVectors>,
    seed: u64,
) -> Result<FeatureMatrix> {
    if d0 == 0 {
        return Err(Error::invalid("features", "d0 must be >= 1"));
    }
    if mode == FeatureMode::Pretrained && vectors.is_none() {
        return Err(Error::invalid(
            "features",
            "pretrained mode requires a vectors file",
        ));
    }
    Ok(FeatureInit {
        mode,
        dim: d0,
        vectors: vectors.cloned(),
        seed,
    }
    .features(graph))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `in × out`
    pub weight: Array2<f64>,
    /// `1 × out`
    pub bias: Array2<f64>,
}

/// All learnable tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mlp: Vec<DenseLayer>,
    /// Layer `l` maps `2·d_l` concatenated columns to `d_{l+1}`.
    pub gcn: Vec<Array2<f64>>,
    pub skeleton_weight: f64,
    /// Per-document input features, present in random-learnable mode.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, Array2<f64>>,
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl ModelParams {
    /// Uniform(−1/√fan_in, 1/√fan_in) initialization.
    pub fn init(cfg: &EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [cfg.input_dim, cfg.hidden_dim, cfg.output_dim];
        let mlp = dims
            .windows(2)
            .map(|w| DenseLayer {
                weight: uniform_matrix(&mut rng, w[0], w[1], w[0]),
                bias: uniform_matrix(&mut rng, 1, w[1], w[0]),
            })
            .collect();
        let gcn = dims
            .windows(2)
            .map(|w| uniform_matrix(&mut rng, 2 * w[0], w[1], 2 * w[0]))
            .collect();
        Self {
            mlp,
            gcn,
            skeleton_weight: cfg.skeleton_weight,
            features: BTreeMap::new(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.mlp.last().map_or(0, |l| l.weight.ncols())
    }

    /// Shape-chain and finiteness check.
    pub fn validate(&self) -> Result<()> {
        for pair in self.mlp.windows(2) {
            if pair[0].weight.ncols() != pair[1].weight.nrows() {
                return Err(Error::Shape {
                    context: "mlp layers",
                    expected: format!("{} rows", pair[0].weight.ncols()),
                    got: format!("{} rows", pair[1].weight.nrows()),
                });
            }
        }
        for layer in &self.mlp {
            if layer.bias.dim() != (1, layer.weight.ncols()) {
                return Err(Error::Shape {
                    context: "mlp bias",
                    expected: format!("1x{}", layer.weight.ncols()),
                    got: format!("{:?}", layer.bias.dim()),
                });
            }
        }
        for pair in self.gcn.windows(2) {
            if 2 * pair[0].ncols() != pair[1].nrows() {
                return Err(Error::Shape {
                    context: "gcn layers",
                    expected: format!("{} rows", 2 * pair[0].ncols()),
                    got: format!("{} rows", pair[1].nrows()),
                });
            }
        }
        let gcn_out = self.gcn.last().map_or(0, Array2::ncols);
        if gcn_out != self.output_dim() {
            return Err(Error::Shape {
                context: "encoder output",
                expected: format!("gcn output {}", self.output_dim()),
                got: gcn_out.to_string(),
            });
        }
        if let (Some(m), Some(g)) = (self.mlp.first(), self.gcn.first()) {
            if 2 * m.weight.nrows() != g.nrows() {
                return Err(Error::Shape {
                    context: "encoder input",
                    expected: format!("gcn input {}", 2 * m.weight.nrows()),
                    got: g.nrows().to_string(),
                });
            }
        }
        if !(self.skeleton_weight > 0.0) {
            return Err(Error::invalid(
                "model params",
                "skeleton_weight must be positive",
            ));
        }
        for (name, t) in self.named_tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(
                    "model params",
                    format!("{name} has non-finite values"),
                ));
            }
        }
        Ok(())
    }

    /// Encoder tensors (features excluded) in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for (i, l) in self.mlp.iter().enumerate() {
            out.push((format!("mlp.{i}.weight"), &l.weight));
            out.push((format!("mlp.{i}.bias"), &l.bias));
        }
        for (i, w) in self.gcn.iter().enumerate() {
            out.push((format!("gcn.{i}.weight"), w));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = Vec::new();
        for l in &mut self.mlp {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for w in &mut self.gcn {
            out.push(w);
        }
        out
    }
}

/// Tape handles for the encoder tensors, in [`ModelParams::named_tensors`] order.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub vars: Vec<Var>,
    mlp_layers: usize,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        let vars = params
            .named_tensors()
            .into_iter()
            .map(|(_, t)| tape.leaf(t.clone()))
            .collect();
        Self {
            vars,
            mlp_layers: params.mlp.len(),
        }
    }

    fn mlp(&self, layer: usize) -> (Var, Var) {
        (self.vars[2 * layer], self.vars[2 * layer + 1])
    }

    fn gcn(&self, layer: usize) -> Var {
        self.vars[2 * self.mlp_layers + layer]
    }

    fn gcn_layers(&self) -> usize {
        self.vars.len() - 2 * self.mlp_layers
    }
}

/// Inverted-dropout masks drawn from an RNG; `None` disables dropout.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn mask(&mut self, shape: (usize, usize)) -> Array2<f64> {
        let keep = 1.0 - self.rate;
        Array2::from_shape_fn(shape, |_| {
            if self.rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
    }
}

fn apply_dropout(tape: &mut Tape, x: Var, dropout: &mut Option<Dropout<'_>>) -> Var {
    match dropout {
        Some(d) if d.rate > 0.0 => {
            let mask = d.mask(tape.value(x).dim());
            tape.mul_const(x, mask)
        }
        _ => x,
    }
}

/// Records the anchor MLP on the tape. Dropout applies to hidden layers only.
pub fn mlp_on_tape(
    tape: &mut Tape,
    pv: &ParamVars,
    x: Var,
    mut dropout: Option<Dropout<'_>>,
) -> Var {
    let mut h = x;
    for layer in 0..pv.mlp_layers {
        let (w, b) = pv.mlp(layer);
        let z = tape.matmul(h, w);
        let z = tape.add_row(z, b);
        h = tape.sigmoid(z);
        if layer + 1 < pv.mlp_layers {
            h = apply_dropout(tape, h, &mut dropout);
        }
    }
    h
}

/// Per-graph constants of the structural encoder.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// `Ã · diag(s)` where `s_i = ρ` on skeleton nodes and 1 elsewhere.
    pub propagate: Array2<f64>,
    /// Row-stochastic neighbor-mean operator (zero rows for isolated nodes).
    pub neighbor_mean: Array2<f64>,
    pub skeleton: Vec<usize>,
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalized_adjacency(graph: &IntraRelationGraph) -> Array2<f64> {
    let n = graph.node_count();
    let a_hat = graph.adjacency() + Array2::<f64>::eye(n);
    let inv_sqrt: Array1<f64> = a_hat.sum_axis(Axis(1)).mapv(|d| 1.0 / d.sqrt());
    let mut out = a_hat;
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    out
}

impl GraphOperators {
    pub fn new(graph: &IntraRelationGraph, skeleton_weight: f64) -> Self {
        let n = graph.node_count();
        let mut propagate = normalized_adjacency(graph);
        for (j, node) in graph.nodes.iter().enumerate() {
            if node.in_skeleton {
                propagate
                    .column_mut(j)
                    .mapv_inplace(|v| v * skeleton_weight);
            }
        }
        let mut neighbor_mean = Array2::zeros((n, n));
        for i in 0..n {
            let nbrs = graph.neighbors(i);
            for &j in nbrs {
                neighbor_mean[[i, j]] = 1.0 / nbrs.len() as f64;
            }
        }
        let mut skeleton = graph.skeleton_nodes();
        if skeleton.is_empty() {
            skeleton = (0..n).collect();
        }
        Self {
            propagate,
            neighbor_mean,
            skeleton,
        }
    }
}

/// Records the structural GCN on the tape. Dropout applies between layers.
pub fn gcn_on_tape(
    tape: &mut Tape,
    pv: &ParamVars,
    ops: &GraphOperators,
    x: Var,
    slope: f64,
    mut dropout: Option<Dropout<'_>>,
) -> Var {
    let layers = pv.gcn_layers();
    let mut h = x;
    for layer in 0..layers {
        let agg = tape.left_mul(ops.neighbor_mean.clone(), h);
        let m = tape.concat_cols(h, agg);
        let mixed = tape.left_mul(ops.propagate.clone(), m);
        let z = tape.matmul(mixed, pv.gcn(layer));
        h = tape.leaky_relu(z, slope);
        if layer + 1 < layers {
            h = apply_dropout(tape, h, &mut dropout);
        }
    }
    h
}

fn check_input(x: &Array2<f64>, params: &ModelParams, rows: usize) -> Result<()> {
    let d0 = params.mlp.first().map_or(0, |l| l.weight.nrows());
    if x.ncols() != d0 {
        return Err(Error::Shape {
            context: "encoder input",
            expected: format!("{d0} columns"),
            got: format!("{} columns", x.ncols()),
        });
    }
    if x.nrows() != rows {
        return Err(Error::Shape {
            context: "encoder input",
            expected: format!("{rows} rows"),
            got: format!("{} rows", x.nrows()),
        });
    }
    Ok(())
}

/// Anchor embedding `H` (evaluation mode).
pub fn mlp_forward(x: &Array2<f64>, params: &ModelParams) -> Result<Array2<f64>> {
    params.validate()?;
    check_input(x, params, x.nrows())?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let xv = tape.leaf(x.clone());
    let h = mlp_on_tape(&mut tape, &pv, xv, None);
    Ok(tape.value(h).clone())
}

/// Structural embedding `H⁺_s` (evaluation mode, LeakyReLU slope 0.01).
pub fn gcn_forward(
    graph: &IntraRelationGraph,
    x: &Array2<f64>,
    params: &ModelParams,
) -> Result<Array2<f64>> {
    gcn_forward_with_slope(graph, x, params, 0.01)
}

pub fn gcn_forward_with_slope(
    graph: &IntraRelationGraph,
    x: &Array2<f64>,
    params: &ModelParams,
    slope: f64,
) -> Result<Array2<f64>> {
    params.validate()?;
    check_input(x, params, graph.node_count())?;
    if graph.node_count() == 0 {
        return Err(Error::invalid("gcn input", "graph has no nodes"));
    }
    let ops = GraphOperators::new(graph, params.skeleton_weight);
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let xv = tape.leaf(x.clone());
    let h = gcn_on_tape(&mut tape, &pv, &ops, xv, slope, None);
    Ok(tape.value(h).clone())
}

/// `k` row permutations of `0..n` without fixed points, uniform over
/// derangements (rejection sampling).
pub fn sample_derangements(n: usize, k: usize, rng: &mut impl Rng) -> Result<Vec<Vec<usize>>> {
    if n < 2 {
        return Err(Error::SingleNodeShuffle);
    }
    Ok((0..k)
        .map(|_| loop {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(rng);
            if p.iter().enumerate().all(|(i, &v)| i != v) {
                break p;
            }
        })
        .collect())
}

/// `k` negatives: the anchor's rows permuted by independent derangements.
pub fn shuffle_negative(h: &Array2<f64>, seed: u64, k: usize) -> Result<Vec<Array2<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_derangements(h.nrows(), k, &mut rng)?
        .into_iter()
        .map(|p| h.select(Axis(0), &p))
        .collect())
}

/// Mean of the skeleton rows of `source` as a `1×d` matrix; falls back to
/// all rows when no node is flagged.
pub fn event_embedding(source: &Array2<f64>, graph: &IntraRelationGraph) -> Array2<f64> {
    let mut rows = graph.skeleton_nodes();
    if rows.is_empty() {
        rows = (0..graph.node_count()).collect();
    }
    source
        .select(Axis(0), &rows)
        .mean_axis(Axis(0))
        .expect("non-empty skeleton")
        .insert_axis(Axis(0))
}

/// Column mean of the node embeddings; `None` for an empty matrix.
pub fn readout(h: &Array2<f64>) -> Option<Array1<f64>> {
    h.mean_axis(Axis(0))
}

/// The four embeddings of one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub anchor: Array2<f64>,
    pub negatives: Vec<Array2<f64>>,
    pub structural: Array2<f64>,
    /// `1 × d`
    pub event: Array2<f64>,
}

/// One document vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DocEmbedding {
    pub doc_id: String,
    pub vector: Vec<f64>,
    /// The graph had no nodes; the vector is all zeros.
    pub empty: bool,
}

/// Evaluation-mode encoder over resolved features.
pub struct Encoder<'a> {
    pub params: &'a ModelParams,
    pub cfg: &'a EncoderConfig,
    pub features: &'a FeatureInit,
}

impl Encoder<'_> {
    pub fn input(&self, graph: &IntraRelationGraph) -> Array2<f64> {
        match self.params.features.get(&graph.doc_id) {
            Some(learned) => learned.clone(),
            None => self.features.features(graph).values,
        }
    }

    pub fn embedding_set(
        &self,
        graph: &IntraRelationGraph,
        k: usize,
        seed: u64,
    ) -> Result<EmbeddingSet> {
        let x = self.input(graph);
        let anchor = mlp_forward(&x, self.params)?;
        let structural = gcn_forward_with_slope(graph, &x, self.params, self.cfg.leaky_slope)?;
        let negatives = shuffle_negative(&anchor, seed, k)?;
        let source = match self.cfg.event_source {
            EventSource::Structural => &structural,
            EventSource::Anchor => &anchor,
        };
        let event = event_embedding(source, graph);
        Ok(EmbeddingSet {
            anchor,
            negatives,
            structural,
            event,
        })
    }

    pub fn embed(&self, graph: &IntraRelationGraph) -> Result<DocEmbedding> {
        let d = self.params.output_dim();
        let width = if self.cfg.readout == Readout::Concat {
            2 * d
        } else {
            d
        };
        if graph.node_count() == 0 {
            return Ok(DocEmbedding {
                doc_id: graph.doc_id.clone(),
                vector: vec![0.0; width],
                empty: true,
            });
        }
        let x = self.input(graph);
        let anchor =
            || -> Result<Array1<f64>> { Ok(readout(&mlp_forward(&x, self.params)?).unwrap()) };
        let structural = || -> Result<Array1<f64>> {
            Ok(readout(&gcn_forward_with_slope(
                graph,
                &x,
                self.params,
                self.cfg.leaky_slope,
            )?)
            .unwrap())
        };
        let vector = match self.cfg.readout {
            Readout::Anchor => anchor()?.to_vec(),
            Readout::Structural => structural()?.to_vec(),
            Readout::Concat => anchor()?
                .iter()
                .chain(structural()?.iter())
                .copied()
                .collect(),
        };
        Ok(DocEmbedding {
            doc_id: graph.doc_id.clone(),
            vector,
            empty: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Category, EventBlock, EventElement};
    use crate::graph::{Edge, EdgeType, GraphBuildConfig, GraphBuilder, Node};
    use ndarray::array;

    fn node(id: usize, surface: &str, c: Category) -> Node {
        Node {
            node_id: id,
            surface: surface.into(),
            category: c,
            in_skeleton: false,
        }
    }

    fn path2() -> IntraRelationGraph {
        let nodes = vec![
            node(0, "a", Category::Entity),
            node(1, "b", Category::Predicate),
        ];
        let edges = vec![Edge {
            u: 0,
            v: 1,
            edge_type: EdgeType::between(Category::Entity, Category::Predicate),
        }];
        IntraRelationGraph::from_parts("p", nodes, edges).unwrap()
    }

    fn tiny_params(d0: usize, hidden: usize, out: usize, seed: u64) -> ModelParams {
        ModelParams::init(
            &EncoderConfig {
                input_dim: d0,
                hidden_dim: hidden,
                output_dim: out,
                ..Default::default()
            },
            seed,
        )
    }

    #[test]
    fn onehot_single_node() {
        let g =
            IntraRelationGraph::from_parts("x", vec![node(0, "apple", Category::Argument)], vec![])
                .unwrap();
        let f = init_features(&g, FeatureMode::OnehotHashed, 8, None, 0).unwrap();
        assert_eq!(f.values.dim(), (1, 8));
        assert_eq!(f.values.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(f.values.sum(), 1.0);
    }

    #[test]
    fn onehot_is_deterministic_across_graphs() {
        let g1 =
            IntraRelationGraph::from_parts("x", vec![node(0, "apple", Category::Argument)], vec![])
                .unwrap();
        let g2 = IntraRelationGraph::from_parts(
            "y",
            vec![
                node(0, "pear", Category::Argument),
                node(1, "apple", Category::Argument),
            ],
            vec![],
        )
        .unwrap();
        let f1 = init_features(&g1, FeatureMode::OnehotHashed, 16, None, 0).unwrap();
        let f2 = init_features(&g2, FeatureMode::OnehotHashed, 16, None, 0).unwrap();
        assert_eq!(f1.values.row(0), f2.values.row(1));
    }

    #[test]
    fn random_learnable_range() {
        let g = path2();
        let f = init_features(&g, FeatureMode::RandomLearnable, 16, None, 3).unwrap();
        assert!(f.trainable);
        let bound = 0.25;
        assert!(f.values.iter().all(|v| v.abs() < bound));
    }

    #[test]
    fn pretrained_requires_vectors() {
        assert!(init_features(&path2(), FeatureMode::Pretrained, 4, None, 0).is_err());
    }

    #[test]
    fn pretrained_lookup_with_hashed_fallback() {
        let vecs = WordVectors::from_pairs([("a".to_string(), vec![0.5, -0.5, 0.0, 1.0])]);
        let f = init_features(&path2(), FeatureMode::Pretrained, 4, Some(&vecs), 0).unwrap();
        assert_eq!(f.values.row(0), array![0.5, -0.5, 0.0, 1.0]);
        assert_eq!(f.values.row(1).sum(), 1.0);
    }

    #[test]
    fn zero_weights_give_half() {
        let mut p = tiny_params(3, 4, 2, 0);
        for l in &mut p.mlp {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        let h = mlp_forward(&array![[1.0, 2.0, 3.0], [0.0, -1.0, 4.0]], &p).unwrap();
        assert!(h.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn scalar_mlp_layer() {
        let p = ModelParams {
            mlp: vec![DenseLayer {
                weight: array![[1.0]],
                bias: array![[0.0]],
            }],
            gcn: vec![array![[0.0], [0.0]]],
            skeleton_weight: 1.0,
            features: BTreeMap::new(),
        };
        let h = mlp_forward(&array![[1.0]], &p).unwrap();
        assert!((h[[0, 0]] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn mlp_shape_mismatch() {
        let p = tiny_params(3, 4, 2, 0);
        assert!(matches!(
            mlp_forward(&array![[1.0, 2.0]], &p),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn isolated_node_gcn() {
        let g = IntraRelationGraph::from_parts("i", vec![node(0, "a", Category::Entity)], vec![])
            .unwrap();
        let p = ModelParams {
            mlp: vec![DenseLayer {
                weight: array![[1.0, 0.0]],
                bias: array![[0.0, 0.0]],
            }],
            gcn: vec![array![[2.0, -1.0], [5.0, 7.0]]],
            skeleton_weight: 1.0,
            features: BTreeMap::new(),
        };
        let out = gcn_forward(&g, &array![[3.0]], &p).unwrap();
        // [x | 0] · W = [6, -3]; LeakyReLU
        assert_eq!(out, array![[6.0, -0.03]]);
    }

    #[test]
    fn two_node_path_by_hand() {
        // A+I = [[1,1],[1,1]], degrees 2, so Ã = 0.5 everywhere.
        // x = [[1],[3]]; AGG = [[3],[1]]; M = [[1,3],[3,1]]
        // Ã·M = [[2,2],[2,2]]; with W = [[1],[-2]]: Ã·M·W = [[-2],[-2]]
        // LeakyReLU(0.01) → [[-0.02],[-0.02]]
        let g = path2();
        let p = ModelParams {
            mlp: vec![DenseLayer {
                weight: array![[1.0]],
                bias: array![[0.0]],
            }],
            gcn: vec![array![[1.0], [-2.0]]],
            skeleton_weight: 1.0,
            features: BTreeMap::new(),
        };
        let out = gcn_forward(&g, &array![[1.0], [3.0]], &p).unwrap();
        assert!((out[[0, 0]] + 0.02).abs() < 1e-15);
        assert!((out[[1, 0]] + 0.02).abs() < 1e-15);

        // ρ = 2 on node 1 only: Ã·S = [[0.5,1],[0.5,1]], S·M = [[1,3],[6,2]]
        // Ã·S·M = [[3.5,2.5],[3.5,2.5]] · W = [[-1.5],[-1.5]] → [[-0.015],[-0.015]]
        let mut g = path2();
        g.nodes[1].in_skeleton = true;
        let p2 = ModelParams {
            skeleton_weight: 2.0,
            ..p
        };
        let out = gcn_forward(&g, &array![[1.0], [3.0]], &p2).unwrap();
        assert!((out[[0, 0]] + 0.015).abs() < 1e-15);
    }

    #[test]
    fn rho_one_ignores_flags_bitwise() {
        let p = ModelParams {
            skeleton_weight: 1.0,
            ..tiny_params(4, 5, 3, 9)
        };
        let mut g = path2();
        let x = array![[0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.0]];
        let a = gcn_forward(&g, &x, &p).unwrap();
        g.nodes.iter_mut().for_each(|n| n.in_skeleton = true);
        let b = gcn_forward(&g, &x, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn derangements() {
        let h = array![[1.0, 0.0], [0.0, 1.0]];
        let negs = shuffle_negative(&h, 1, 3).unwrap();
        for n in &negs {
            assert_eq!(n, &array![[0.0, 1.0], [1.0, 0.0]]);
        }
        assert!(matches!(
            shuffle_negative(&array![[1.0]], 1, 1),
            Err(Error::SingleNodeShuffle)
        ));
        let h = Array2::from_shape_fn((7, 2), |(i, j)| (i * 2 + j) as f64);
        assert_eq!(
            shuffle_negative(&h, 5, 2).unwrap(),
            shuffle_negative(&h, 5, 2).unwrap()
        );
    }

    #[test]
    fn event_embedding_means() {
        let mut g = path2();
        g.nodes[0].in_skeleton = true;
        let src = array![[0.0, 2.0], [2.0, 0.0]];
        assert_eq!(event_embedding(&src, &g), array![[0.0, 2.0]]);
        g.nodes[1].in_skeleton = true;
        assert_eq!(event_embedding(&src, &g), array![[1.0, 1.0]]);
    }

    #[test]
    fn readout_examples() {
        assert_eq!(
            readout(&array![[0.0, 2.0], [2.0, 0.0]]).unwrap(),
            array![1.0, 1.0]
        );
        assert_eq!(readout(&array![[4.0, 5.0]]).unwrap(), array![4.0, 5.0]);
        assert!(readout(&Array2::<f64>::zeros((0, 3))).is_none());
    }

    #[test]
    fn empty_graph_embeds_to_flagged_zero() {
        let cfg = EncoderConfig {
            input_dim: 4,
            hidden_dim: 3,
            output_dim: 2,
            ..Default::default()
        };
        let params = ModelParams::init(&cfg, 0);
        let features = FeatureInit::from_config(&cfg, 0).unwrap();
        let enc = Encoder {
            params: &params,
            cfg: &cfg,
            features: &features,
        };
        let e = enc.embed(&IntraRelationGraph::empty("z")).unwrap();
        assert!(e.empty);
        assert_eq!(e.vector, vec![0.0, 0.0]);
    }

    #[test]
    fn embedding_set_shapes() {
        let b = GraphBuilder::new(GraphBuildConfig::default()).unwrap();
        let g = b
            .build(
                "d",
                &[EventBlock::new(
                    "d",
                    0,
                    Some(EventElement::new("peter", Category::Entity)),
                    EventElement::new("eats", Category::Predicate),
                    Some(EventElement::new("apple", Category::Argument)),
                )],
            )
            .unwrap();
        let cfg = EncoderConfig {
            input_dim: 8,
            hidden_dim: 6,
            output_dim: 5,
            ..Default::default()
        };
        let params = ModelParams::init(&cfg, 1);
        let features = FeatureInit::from_config(&cfg, 0).unwrap();
        let enc = Encoder {
            params: &params,
            cfg: &cfg,
            features: &features,
        };
        let set = enc.embedding_set(&g, 2, 7).unwrap();
        assert_eq!(set.anchor.dim(), (3, 5));
        assert_eq!(set.structural.dim(), (3, 5));
        assert_eq!(set.event.dim(), (1, 5));
        assert_eq!(set.negatives.len(), 2);
        assert!(set.anchor.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
