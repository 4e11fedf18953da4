//! File-to-file pipeline stages with run manifests.
//!
//! Every stage reads only the paths it is given, writes one artifact, and
//! records a manifest next to it (`<artifact>.manifest.json`) holding the
//! effective configuration, its hash, the seed, input and output digests,
//! and timings. A stage refuses an upstream artifact that is missing, or
//! whose own recorded inputs have changed since it was written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, PipelineConfig};
use crate::error::{Error, Result};
use crate::events::{load_corpus, load_events, save_events, EventBlock};
use crate::graph::{load_graphs, save_graphs, IntraRelationGraph};
use crate::loss::{Ablation, LossConfig};
use crate::pipeline;
use crate::probe::MetricsReport;
use crate::skeleton::{
    load_patterns, mark_skeletons, pattern_table, save_patterns, SkeletonPattern,
};
use crate::train::{save_history_csv, Checkpoint, TrainOutcome, CHECKPOINT_VERSION};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config_hash: String,
    /// Effective configuration (TOML).
    pub config: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub timings_ms: BTreeMap<String, f64>,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.to_path_buf(),
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Version {
                what: "manifest",
                found: m.version,
                expected: MANIFEST_VERSION,
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn config(&self) -> Result<PipelineConfig> {
        PipelineConfig::from_toml_str(&self.config)
    }
}

/// Run-wide settings shared by every stage.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub seed: u64,
    pub threads: Option<usize>,
    pub args: Vec<String>,
}

impl Context {
    pub fn new(config: PipelineConfig, seed: Option<u64>) -> Self {
        let seed = seed.unwrap_or(config.train.seed);
        Self {
            config,
            seed,
            threads: None,
            args: Vec::new(),
        }
    }

    fn finish(
        &self,
        command: &str,
        inputs: &[&Path],
        outputs: &[&Path],
        timings: BTreeMap<String, f64>,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: self.args.clone(),
            seed: self.seed,
            threads: self.threads,
            config_hash: self.config.hash(),
            config: self.config.to_toml(),
            inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
            timings_ms: timings,
        };
        manifest.save(manifest_path(outputs[0]))?;
        Ok(manifest)
    }
}

/// Checks that an upstream artifact exists and is current.
pub fn require_artifact(path: &Path, command: &'static str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Artifact {
            path: path.to_path_buf(),
            command,
            reason: "missing".into(),
        });
    }
    let mpath = manifest_path(path);
    if !mpath.exists() {
        log::debug!(
            "{} has no manifest; skipping staleness check",
            path.display()
        );
        return Ok(());
    }
    let manifest = Manifest::load(&mpath)?;
    let stale = |reason: String| Error::Artifact {
        path: path.to_path_buf(),
        command,
        reason,
    };
    if let Some(own) = manifest.outputs.iter().find(|d| d.path == path) {
        if digest(path)?.sha256 != own.sha256 {
            return Err(stale(format!(
                "stale (modified after `segcl {}` wrote it)",
                manifest.command
            )));
        }
    }
    for input in &manifest.inputs {
        match digest(&input.path) {
            Ok(now) if now.sha256 != input.sha256 => {
                return Err(stale(format!(
                    "stale ({} changed since it was produced)",
                    input.path.display()
                )));
            }
            _ => {}
        }
    }
    Ok(())
}

fn timed<T>(
    timings: &mut BTreeMap<String, f64>,
    name: &str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    timings.insert(name.to_string(), start.elapsed().as_secs_f64() * 1e3);
    Ok(out)
}

/// Where the extract stage gets its blocks from.
#[derive(Debug, Clone)]
pub enum ExtractSource {
    /// Heuristic extraction from a corpus file.
    Heuristic(PathBuf),
    /// Pre-extracted blocks in the events format, validated and copied.
    FromJson(PathBuf),
}

pub fn extract(ctx: &Context, source: &ExtractSource, output: &Path) -> Result<Vec<EventBlock>> {
    let mut t = BTreeMap::new();
    let (input, blocks) = match source {
        ExtractSource::Heuristic(corpus) => {
            let c = timed(&mut t, "load", || {
                load_corpus(corpus, ctx.config.corpus.format)
            })?;
            let blocks = timed(&mut t, "extract", || {
                pipeline::extract(&c, &ctx.config.corpus)
            })?;
            (corpus, blocks)
        }
        ExtractSource::FromJson(events) => (events, timed(&mut t, "load", || load_events(events))?),
    };
    timed(&mut t, "write", || save_events(output, &blocks))?;
    let mut inputs = vec![input.as_path()];
    let extra: Vec<&Path> = [&ctx.config.corpus.stopwords, &ctx.config.corpus.entities]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect();
    inputs.extend(extra);
    ctx.finish("extract", &inputs, &[output], t)?;
    Ok(blocks)
}

pub fn build(ctx: &Context, events: &Path, output: &Path) -> Result<Vec<IntraRelationGraph>> {
    require_artifact(events, "extract")?;
    let mut t = BTreeMap::new();
    let blocks = timed(&mut t, "load", || load_events(events))?;
    let graphs = timed(&mut t, "build", || pipeline::build(&blocks, &ctx.config))?;
    timed(&mut t, "write", || save_graphs(output, &graphs))?;
    ctx.finish("build", &[events], &[output], t)?;
    Ok(graphs)
}

/// Returns the patterns and their printable table.
pub fn mine(ctx: &Context, graphs: &Path, output: &Path) -> Result<(Vec<SkeletonPattern>, String)> {
    require_artifact(graphs, "build")?;
    let mut t = BTreeMap::new();
    let mut gs = timed(&mut t, "load", || load_graphs(graphs))?;
    let patterns = timed(&mut t, "mine", || pipeline::mine(&mut gs, &ctx.config))?;
    timed(&mut t, "write", || save_patterns(output, &patterns))?;
    ctx.finish("mine", &[graphs], &[output], t)?;
    Ok((patterns.clone(), pattern_table(&patterns)))
}

/// Graphs with skeleton flags from a pattern file.
pub fn load_marked(
    graphs: &Path,
    patterns: &Path,
    top_m: usize,
) -> Result<Vec<IntraRelationGraph>> {
    require_artifact(graphs, "build")?;
    require_artifact(patterns, "mine")?;
    let mut gs = load_graphs(graphs)?;
    let ps = load_patterns(patterns)?;
    mark_skeletons(&mut gs, &ps, top_m);
    Ok(gs)
}

/// Default loss-history path for a checkpoint path.
pub fn history_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("loss.csv")
}

fn ablated(loss: &LossConfig, ablations: &[Ablation]) -> LossConfig {
    ablations.iter().fold(loss.clone(), |acc, &a| acc.ablate(a))
}

pub fn train(
    ctx: &Context,
    graphs: &Path,
    patterns: &Path,
    ablations: &[Ablation],
    output: &Path,
    history: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut t = BTreeMap::new();
    let gs = timed(&mut t, "load", || {
        load_marked(graphs, patterns, ctx.config.miner.top_m)
    })?;
    let mut cfg = ctx.config.clone();
    cfg.loss = ablated(&cfg.loss, ablations);
    let outcome = timed(&mut t, "train", || pipeline::fit(&gs, &cfg, ctx.seed))?;
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        encoder: cfg.encoder.clone(),
        loss: cfg.loss.clone(),
        train: crate::train::TrainConfig {
            seed: ctx.seed,
            ..cfg.train.clone()
        },
        params: outcome.params.clone(),
    };
    let history = history.map_or_else(|| history_path(output), Path::to_path_buf);
    timed(&mut t, "write", || {
        checkpoint.save(output)?;
        save_history_csv(&history, &outcome.history)
    })?;
    let run_ctx = Context {
        config: cfg,
        ..ctx.clone()
    };
    run_ctx.finish("train", &[graphs, patterns], &[output, &history], t)?;
    Ok(outcome)
}

/// Hyperparameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eta,
    Theta,
    We,
    Ws,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "eta" => Ok(Self::Eta),
            "theta" => Ok(Self::Theta),
            "we" => Ok(Self::We),
            "ws" => Ok(Self::Ws),
            other => Err(format!(
                "unknown sweep parameter {other:?} (allowed: eta, theta, we, ws)"
            )),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eta => "eta",
            Self::Theta => "theta",
            Self::We => "we",
            Self::Ws => "ws",
        }
    }

    /// `0.1..=0.9` for the margins, `10^-3..=10^3` for the weights.
    pub fn grid(self) -> Vec<f64> {
        match self {
            Self::Eta | Self::Theta => (1..=9).map(|i| i as f64 / 10.0).collect(),
            Self::We | Self::Ws => vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
        }
    }

    pub fn apply(self, loss: &mut LossConfig, value: f64) {
        match self {
            Self::Eta => loss.eta = value,
            Self::Theta => loss.theta = value,
            Self::We => loss.w_e = value,
            Self::Ws => loss.w_s = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub metrics: MetricsReport,
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{},precision_mean,f1_mean,precision_best,f1_best\n",
        param.name()
    );
    for r in rows {
        let m = &r.metrics;
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.value, m.precision_mean, m.f1_mean, m.precision_best, m.f1_best
        ));
    }
    s
}

/// Trains, embeds and evaluates once per grid value of `param`.
pub fn sweep_in_memory(
    graphs: &[IntraRelationGraph],
    corpus: &crate::events::Corpus,
    cfg: &PipelineConfig,
    seed: u64,
    param: SweepParam,
    ablations: &[Ablation],
) -> Result<Vec<SweepRow>> {
    param
        .grid()
        .into_iter()
        .map(|value| {
            let mut run = cfg.clone();
            run.loss = ablated(&run.loss, ablations);
            param.apply(&mut run.loss, value);
            let outcome = pipeline::fit(graphs, &run, seed)?;
            let emb = pipeline::embed(graphs, &outcome.params, &run, seed)?;
            let metrics = pipeline::probe(&emb, corpus, &run)?;
            Ok(SweepRow { value, metrics })
        })
        .collect()
}

pub fn sweep(
    ctx: &Context,
    graphs: &Path,
    patterns: &Path,
    corpus: &Path,
    param: SweepParam,
    ablations: &[Ablation],
    output: &Path,
) -> Result<Vec<SweepRow>> {
    let mut t = BTreeMap::new();
    let gs = timed(&mut t, "load", || {
        load_marked(graphs, patterns, ctx.config.miner.top_m)
    })?;
    let c = load_corpus(corpus, ctx.config.corpus.format)?;
    let rows = timed(&mut t, "sweep", || {
        sweep_in_memory(&gs, &c, &ctx.config, ctx.seed, param, ablations)
    })?;
    std::fs::write(output, sweep_csv(param, &rows)).map_err(|e| Error::io(output, e))?;
    ctx.finish("train", &[graphs, patterns, corpus], &[output], t)?;
    Ok(rows)
}

/// Embeds every graph with a trained checkpoint. The readout comes from
/// the current configuration; everything else from the checkpoint.
pub fn embed(
    ctx: &Context,
    graphs: &Path,
    patterns: &Path,
    checkpoint: &Path,
    output: &Path,
) -> Result<Vec<crate::encoder::DocEmbedding>> {
    require_artifact(checkpoint, "train")?;
    let mut t = BTreeMap::new();
    let ck = timed(&mut t, "load", || Checkpoint::load(checkpoint))?;
    let gs = load_marked(graphs, patterns, ctx.config.miner.top_m)?;
    let mut cfg = ctx.config.clone();
    cfg.encoder = crate::encoder::EncoderConfig {
        readout: ctx.config.encoder.readout,
        ..ck.encoder.clone()
    };
    let emb = timed(&mut t, "embed", || {
        pipeline::embed(&gs, &ck.params, &cfg, ck.train.seed)
    })?;
    let empty = emb.iter().filter(|e| e.empty).count();
    if empty > 0 {
        log::warn!("{empty} document(s) have empty graphs and were given zero vectors");
    }
    timed(&mut t, "write", || crate::export::save(output, &emb))?;
    let side = crate::export::sidecar_path(output);
    ctx.finish(
        "embed",
        &[graphs, patterns, checkpoint],
        &[output, &side],
        t,
    )?;
    Ok(emb)
}

pub fn eval(
    ctx: &Context,
    embeddings: &Path,
    corpus: &Path,
    output: &Path,
) -> Result<MetricsReport> {
    require_artifact(embeddings, "embed")?;
    let mut t = BTreeMap::new();
    let emb = timed(&mut t, "load", || crate::export::load(embeddings))?;
    let c = load_corpus(corpus, ctx.config.corpus.format)?;
    let report = timed(&mut t, "probe", || pipeline::probe(&emb, &c, &ctx.config))?;
    report.check()?;
    std::fs::write(output, report.to_csv()).map_err(|e| Error::io(output, e))?;
    ctx.finish("eval", &[embeddings, corpus], &[output], t)?;
    Ok(report)
}
