//! Mini-batch gradient descent on the contrastive objective.
//!
//! Each epoch visits the graphs in a seeded random order. Per-graph forward
//! and backward passes run in parallel; their gradients are collected in
//! batch order and summed sequentially, so results do not depend on the
//! thread count. Every random draw (graph order, negatives, dropout masks)
//! comes from a ChaCha stream keyed by `(seed, epoch, graph)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{
    gcn_on_tape, mlp_on_tape, sample_derangements, Dropout, EncoderConfig, EventSource,
    FeatureInit, GraphOperators, ModelParams, ParamVars,
};
use crate::error::{Error, Result};
use crate::graph::IntraRelationGraph;
use crate::loss::{loss_on_tape, LossConfig, LossReport, TermGradNorms};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Weight of the squared-norm penalty on the anchor and structural
    /// embeddings, divided by the node count.
    pub reg_factor: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once the relative change of the epoch loss over this many
    /// epochs falls below `convergence_tol`.
    pub convergence_window: usize,
    pub convergence_tol: f64,
    /// Also record the gradient norm of each loss term (three extra
    /// backward sweeps per graph).
    pub track_grad_norms: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            weight_decay: 1e-4,
            reg_factor: 1e-6,
            dropout: 0.4,
            max_epochs: 100,
            batch_size: 32,
            seed: 0,
            convergence_window: 10,
            convergence_tol: 1e-4,
            track_grad_norms: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "train config",
                "learning_rate must be a finite value >= 0",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("train config", "dropout must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 || self.reg_factor < 0.0 {
            return Err(Error::invalid(
                "train config",
                "weight_decay and reg_factor must be >= 0",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("train config", "batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub zeta_s: f64,
    pub zeta_e: f64,
    pub zeta_u: f64,
    pub zeta_total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norms: Option<TermGradNorms>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Graphs with fewer than two nodes cannot produce a negative and are
    /// left out of training.
    pub skipped: Vec<String>,
    pub converged_at: Option<usize>,
}

/// Everything fixed about one graph during training.
struct Prepared<'a> {
    graph: &'a IntraRelationGraph,
    ops: GraphOperators,
    features: Array2<f64>,
}

/// Objective value and gradients for one graph.
pub struct GraphGradients {
    pub report: LossReport,
    /// Full objective including the embedding penalty.
    pub objective: f64,
    /// In [`ModelParams::named_tensors`] order.
    pub params: Vec<Array2<f64>>,
    /// Gradient of the input features.
    pub features: Array2<f64>,
    pub term_norms: Option<TermGradNorms>,
}

/// Random state of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct PassSeeds {
    pub negatives: u64,
    pub dropout: Option<(f64, u64)>,
}

fn stream_rng(seed: u64, salt: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

const NEGATIVE_SALT: u64 = 0x6e65_6761_7469_7665;
const DROPOUT_SALT: u64 = 0x6472_6f70_6f75_7421;
const ORDER_SALT: u64 = 0x6f72_6465_7273_6565;

/// Forward and backward pass of the full objective on one graph.
#[allow(clippy::too_many_arguments)]
pub fn graph_gradients(
    params: &ModelParams,
    graph: &IntraRelationGraph,
    features: &Array2<f64>,
    enc: &EncoderConfig,
    loss: &LossConfig,
    reg_factor: f64,
    seeds: PassSeeds,
    track_norms: bool,
) -> Result<GraphGradients> {
    let ops = GraphOperators::new(graph, params.skeleton_weight);
    pass(
        params,
        graph,
        &ops,
        features,
        enc,
        loss,
        reg_factor,
        seeds,
        track_norms,
    )
}

#[allow(clippy::too_many_arguments)]
fn pass(
    params: &ModelParams,
    graph: &IntraRelationGraph,
    ops: &GraphOperators,
    features: &Array2<f64>,
    enc: &EncoderConfig,
    loss: &LossConfig,
    reg_factor: f64,
    seeds: PassSeeds,
    track_norms: bool,
) -> Result<GraphGradients> {
    let n = graph.node_count();
    let mut neg_rng = ChaCha8Rng::seed_from_u64(seeds.negatives);
    let perms = sample_derangements(n, loss.k_negatives, &mut neg_rng)?;

    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let x = tape.leaf(features.clone());
    let mut drop_rng = seeds.dropout.map(|(_, s)| ChaCha8Rng::seed_from_u64(s));
    let rate = seeds.dropout.map_or(0.0, |(r, _)| r);
    let anchor = mlp_on_tape(
        &mut tape,
        &pv,
        x,
        drop_rng.as_mut().map(|rng| Dropout { rate, rng }),
    );
    let structural = gcn_on_tape(
        &mut tape,
        &pv,
        ops,
        x,
        enc.leaky_slope,
        drop_rng.as_mut().map(|rng| Dropout { rate, rng }),
    );
    let negatives: Vec<_> = perms
        .into_iter()
        .map(|perm| tape.gather_rows(anchor, perm))
        .collect();
    let source = match enc.event_source {
        EventSource::Structural => structural,
        EventSource::Anchor => anchor,
    };
    let event = tape.mean_of_rows(source, ops.skeleton.clone());
    let vars = loss_on_tape(&mut tape, anchor, &negatives, structural, event, loss)?;
    let mut objective = vars.total;
    if reg_factor > 0.0 {
        let ha = tape.sum_squares(anchor);
        let hs = tape.sum_squares(structural);
        let norms = tape.add(ha, hs);
        let penalty = tape.scale(norms, reg_factor / n as f64);
        objective = tape.add(objective, penalty);
    }
    let report = vars.report(&tape);
    let objective_value = tape.scalar(objective);
    if !objective_value.is_finite() {
        return Err(Error::Diverged {
            epoch: 0,
            detail: format!("non-finite objective on graph {}", graph.doc_id),
        });
    }
    let grads = tape.backward(objective);
    let names = params.named_tensors();
    let mut param_grads = Vec::with_capacity(pv.vars.len());
    for (&v, (name, t)) in pv.vars.iter().zip(&names) {
        let g = grads.get_or_zeros(v, t.dim());
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient {
                param: name.clone(),
            });
        }
        param_grads.push(g);
    }
    let feature_grad = grads.get_or_zeros(x, features.dim());

    let term_norms = track_norms.then(|| {
        let norm = |term: Option<crate::tape::Var>| {
            term.map_or(0.0, |t| {
                let g = tape.backward(t);
                pv.vars
                    .iter()
                    .zip(&names)
                    .map(|(&v, (_, t))| {
                        g.get_or_zeros(v, t.dim())
                            .iter()
                            .map(|x| x * x)
                            .sum::<f64>()
                    })
                    .sum::<f64>()
                    .sqrt()
            })
        };
        TermGradNorms {
            zeta_s: norm(vars.zeta_s),
            zeta_e: norm(vars.zeta_e),
            zeta_u: norm(vars.zeta_u),
        }
    });

    Ok(GraphGradients {
        report,
        objective: objective_value,
        params: param_grads,
        features: feature_grad,
        term_norms,
    })
}

/// Trains from `params`, which is updated in place only through the
/// returned outcome.
pub fn train(
    graphs: &[IntraRelationGraph],
    mut params: ModelParams,
    enc: &EncoderConfig,
    features: &FeatureInit,
    loss: &LossConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    loss.validate()?;
    params.validate()?;

    let mut skipped = Vec::new();
    let mut prepared = Vec::new();
    for g in graphs {
        if g.node_count() < 2 {
            skipped.push(g.doc_id.clone());
            continue;
        }
        let init = features.features(g);
        if init.trainable && !params.features.contains_key(&g.doc_id) {
            params
                .features
                .insert(g.doc_id.clone(), init.values.clone());
        }
        prepared.push(Prepared {
            graph: g,
            ops: GraphOperators::new(g, params.skeleton_weight),
            features: init.values,
        });
    }
    if !skipped.is_empty() {
        log::warn!(
            "skipping {} graph(s) with fewer than two nodes",
            skipped.len()
        );
    }
    if prepared.is_empty() {
        return Err(Error::invalid(
            "training set",
            "no graph has two or more nodes",
        ));
    }

    let dropout = (cfg.dropout > 0.0).then_some(cfg.dropout);
    let mut history: Vec<EpochRecord> = Vec::new();
    let mut converged_at = None;
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let mut order_rng = stream_rng(cfg.seed, ORDER_SALT, epoch, 0);
        order.sort_unstable();
        order.shuffle(&mut order_rng);

        let mut sums = [0.0f64; 4];
        let mut norm_sums = TermGradNorms::default();
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<GraphGradients>> = batch
                .par_iter()
                .map(|&gi| {
                    let item = &prepared[gi];
                    let x = params
                        .features
                        .get(&item.graph.doc_id)
                        .unwrap_or(&item.features);
                    let seeds = PassSeeds {
                        negatives: {
                            let mut r = stream_rng(cfg.seed, NEGATIVE_SALT, epoch, gi);
                            rand::Rng::random(&mut r)
                        },
                        dropout: dropout.map(|rate| {
                            let mut r = stream_rng(cfg.seed, DROPOUT_SALT, epoch, gi);
                            (rate, rand::Rng::random(&mut r))
                        }),
                    };
                    pass(
                        &params,
                        item.graph,
                        &item.ops,
                        x,
                        enc,
                        loss,
                        cfg.reg_factor,
                        seeds,
                        cfg.track_grad_norms,
                    )
                })
                .collect();

            let mut acc: Option<Vec<Array2<f64>>> = None;
            let mut feature_updates: BTreeMap<String, Array2<f64>> = BTreeMap::new();
            for (res, &gi) in results.into_iter().zip(batch) {
                let gg = res.map_err(|e| match e {
                    Error::Diverged { detail, .. } => Error::Diverged { epoch, detail },
                    other => other,
                })?;
                let r = gg.report;
                sums[0] += r.zeta_s;
                sums[1] += r.zeta_e;
                sums[2] += r.zeta_u;
                sums[3] += r.zeta_total;
                if let Some(n) = gg.term_norms {
                    norm_sums.zeta_s += n.zeta_s;
                    norm_sums.zeta_e += n.zeta_e;
                    norm_sums.zeta_u += n.zeta_u;
                }
                match &mut acc {
                    Some(a) => a.iter_mut().zip(&gg.params).for_each(|(a, g)| *a += g),
                    None => acc = Some(gg.params),
                }
                let doc = &prepared[gi].graph.doc_id;
                if params.features.contains_key(doc) {
                    feature_updates.insert(doc.clone(), gg.features);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let lr = cfg.learning_rate;
            let wd = cfg.weight_decay;
            for (p, g) in params
                .tensors_mut()
                .into_iter()
                .zip(acc.expect("non-empty batch"))
            {
                ndarray::Zip::from(p)
                    .and(&g)
                    .for_each(|p, &g| *p -= lr * (g * scale + wd * *p));
            }
            for (doc, g) in feature_updates {
                let p = params.features.get_mut(&doc).expect("registered feature");
                ndarray::Zip::from(p)
                    .and(&g)
                    .for_each(|p, &g| *p -= lr * (g * scale + wd * *p));
            }
        }

        let m = prepared.len() as f64;
        let record = EpochRecord {
            epoch,
            zeta_s: sums[0] / m,
            zeta_e: sums[1] / m,
            zeta_u: sums[2] / m,
            zeta_total: sums[3] / m,
            grad_norms: cfg.track_grad_norms.then_some(TermGradNorms {
                zeta_s: norm_sums.zeta_s / m,
                zeta_e: norm_sums.zeta_e / m,
                zeta_u: norm_sums.zeta_u / m,
            }),
        };
        if !record.zeta_total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("epoch loss is {}", record.zeta_total),
            });
        }
        log::debug!(
            "epoch {epoch}: zeta_s={:.6} zeta_e={:.6} zeta_u={:.6} total={:.6}",
            record.zeta_s,
            record.zeta_e,
            record.zeta_u,
            record.zeta_total
        );
        history.push(record);

        let w = cfg.convergence_window;
        if w > 0 && history.len() > w {
            let now = history[history.len() - 1].zeta_total;
            let then = history[history.len() - 1 - w].zeta_total;
            let rel = (now - then).abs() / then.abs().max(1e-12);
            if rel < cfg.convergence_tol {
                converged_at = Some(epoch);
                log::info!("converged at epoch {epoch} (relative change {rel:.2e})");
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params,
        history,
        skipped,
        converged_at,
    })
}

pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,zeta_s,zeta_e,zeta_u,zeta_total")?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.epoch, r.zeta_s, r.zeta_e, r.zeta_u, r.zeta_total
        )?;
    }
    Ok(())
}

pub fn save_history_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_history_csv(&mut buf, history).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters and the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: ck.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        ck.params.validate()?;
        Ok(ck)
    }
}
