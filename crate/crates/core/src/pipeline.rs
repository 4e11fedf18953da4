//! Stage functions shared by the command-line tool and the tests.

use std::collections::{BTreeMap, HashSet};

use crate::config::{CorpusConfig, PipelineConfig};
use crate::encoder::{DocEmbedding, Encoder, FeatureInit, ModelParams};
use crate::error::{Error, Result};
use crate::events::{
    default_stopwords, filter_vocabulary, load_word_list, Corpus, EventBlock, HeuristicExtractor,
};
use crate::graph::{GraphBuilder, IntraRelationGraph};
use crate::probe::{evaluate, LabeledVector, MetricsReport};
use crate::skeleton::{extract_skeletons, mark_skeletons, SkeletonPattern};
use crate::train::{train, TrainOutcome};
use crate::vectors::WordVectors;

/// Seed offsets so the stages draw from unrelated streams.
const PARAM_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

pub fn stopwords(cfg: &CorpusConfig) -> Result<HashSet<String>> {
    match &cfg.stopwords {
        Some(path) => load_word_list(path),
        None => Ok(default_stopwords()),
    }
}

pub fn extractor(cfg: &CorpusConfig) -> Result<HeuristicExtractor> {
    let mut ex = HeuristicExtractor::new(stopwords(cfg)?);
    if let Some(path) = &cfg.entities {
        ex = ex.with_entities(load_word_list(path)?);
    }
    Ok(ex)
}

/// Vocabulary filtering followed by heuristic extraction, in document order.
pub fn extract(corpus: &Corpus, cfg: &CorpusConfig) -> Result<Vec<EventBlock>> {
    let ex = extractor(cfg)?;
    let filtered = filter_vocabulary(corpus, &ex.stopwords, cfg.min_freq);
    Ok(filtered
        .documents
        .iter()
        .flat_map(|d| ex.extract(d))
        .collect())
}

pub fn graph_builder(cfg: &PipelineConfig) -> Result<GraphBuilder> {
    match &cfg.graph.pretrained_vectors {
        Some(path) => GraphBuilder::with_vectors(cfg.graph.clone(), WordVectors::load(path)?),
        None => GraphBuilder::new(cfg.graph.clone()),
    }
}

pub fn build(blocks: &[EventBlock], cfg: &PipelineConfig) -> Result<Vec<IntraRelationGraph>> {
    graph_builder(cfg)?.build_corpus(blocks)
}

/// Mines patterns and flags skeleton nodes in place.
pub fn mine(
    graphs: &mut [IntraRelationGraph],
    cfg: &PipelineConfig,
) -> Result<Vec<SkeletonPattern>> {
    let patterns = extract_skeletons(graphs, &cfg.miner)?;
    mark_skeletons(graphs, &patterns, cfg.miner.top_m);
    Ok(patterns)
}

/// Initial parameters for a run seed.
pub fn initial_params(cfg: &PipelineConfig, seed: u64) -> ModelParams {
    ModelParams::init(&cfg.encoder, seed.wrapping_add(PARAM_SEED_OFFSET))
}

pub fn features(cfg: &PipelineConfig, seed: u64) -> Result<FeatureInit> {
    FeatureInit::from_config(&cfg.encoder, seed)
}

/// Trains with `cfg.train.seed` replaced by `seed`.
pub fn fit(graphs: &[IntraRelationGraph], cfg: &PipelineConfig, seed: u64) -> Result<TrainOutcome> {
    let train_cfg = crate::train::TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    train(
        graphs,
        initial_params(cfg, seed),
        &cfg.encoder,
        &features(cfg, seed)?,
        &cfg.loss,
        &train_cfg,
    )
}

pub fn embed(
    graphs: &[IntraRelationGraph],
    params: &ModelParams,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<DocEmbedding>> {
    let features = features(cfg, seed)?;
    let encoder = Encoder {
        params,
        cfg: &cfg.encoder,
        features: &features,
    };
    graphs.iter().map(|g| encoder.embed(g)).collect()
}

/// Joins embeddings with corpus labels. Unlabeled or missing documents
/// are reported in the second list.
pub fn labeled(
    embeddings: &[DocEmbedding],
    labels: &BTreeMap<String, String>,
) -> (Vec<LabeledVector>, Vec<String>) {
    let by_id: BTreeMap<&str, &DocEmbedding> =
        embeddings.iter().map(|e| (e.doc_id.as_str(), e)).collect();
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for (doc, label) in labels {
        match by_id.get(doc.as_str()) {
            Some(e) => out.push(LabeledVector {
                doc_id: doc.clone(),
                label: label.clone(),
                vector: e.vector.clone(),
            }),
            None => missing.push(doc.clone()),
        }
    }
    (out, missing)
}

pub fn corpus_labels(corpus: &Corpus) -> Result<BTreeMap<String, String>> {
    corpus
        .documents
        .iter()
        .map(|d| {
            d.label
                .clone()
                .map(|l| (d.doc_id.clone(), l))
                .ok_or_else(|| {
                    Error::invalid(
                        "evaluation corpus",
                        format!("document {} has no label", d.doc_id),
                    )
                })
        })
        .collect()
}

/// Everything produced by one in-memory run.
pub struct RunResult {
    pub blocks: Vec<EventBlock>,
    pub graphs: Vec<IntraRelationGraph>,
    pub patterns: Vec<SkeletonPattern>,
    pub outcome: TrainOutcome,
    pub embeddings: Vec<DocEmbedding>,
    pub metrics: MetricsReport,
}

/// Extracted, built and skeleton-marked graphs.
pub fn prepare(
    corpus: &Corpus,
    cfg: &PipelineConfig,
) -> Result<(
    Vec<EventBlock>,
    Vec<IntraRelationGraph>,
    Vec<SkeletonPattern>,
)> {
    let blocks = extract(corpus, &cfg.corpus)?;
    let mut graphs = build(&blocks, cfg)?;
    let patterns = mine(&mut graphs, cfg)?;
    Ok((blocks, graphs, patterns))
}

/// Probe metrics for embeddings of labeled graphs.
pub fn probe(
    embeddings: &[DocEmbedding],
    corpus: &Corpus,
    cfg: &PipelineConfig,
) -> Result<MetricsReport> {
    let (data, missing) = labeled(embeddings, &corpus_labels(corpus)?);
    if !missing.is_empty() {
        log::warn!(
            "{} labeled document(s) have no embedding and are left out",
            missing.len()
        );
    }
    evaluate(&data, &cfg.probe)
}

/// The whole pipeline without touching the filesystem.
pub fn run_in_memory(corpus: &Corpus, cfg: &PipelineConfig, seed: u64) -> Result<RunResult> {
    cfg.validate()?;
    let (blocks, graphs, patterns) = prepare(corpus, cfg)?;
    let outcome = fit(&graphs, cfg, seed)?;
    let embeddings = embed(&graphs, &outcome.params, cfg, seed)?;
    let metrics = probe(&embeddings, corpus, cfg)?;
    Ok(RunResult {
        blocks,
        graphs,
        patterns,
        outcome,
        embeddings,
        metrics,
    })
}
