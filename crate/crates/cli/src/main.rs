use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segcl::config::PipelineConfig;
use segcl::loss::Ablation;
use segcl::stages::{self, Context, ExtractSource, Manifest, SweepParam};
use segcl::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "segcl",
    version,
    about = "Event-skeleton graph contrastive text embeddings"
)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 gives bitwise-reproducible runs.
    #[arg(long, global = true, env = "SEGCL_THREADS")]
    threads: Option<usize>,

    /// Debug-level logging and the effective configuration on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Corpus → event blocks (JSON Lines).
    Extract(ExtractArgs),
    /// Event blocks → intra-relation graphs.
    Build {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Graphs → frequent skeleton patterns; prints the pattern table.
    Mine {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Graphs and patterns → trained checkpoint and loss history.
    Train(TrainArgs),
    /// Checkpoint → one vector per document.
    Embed {
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Linear-probe evaluation of embeddings against corpus labels.
    Eval {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// F1 averaging (macro or micro).
        #[arg(long)]
        f1: Option<segcl::probe::F1Mode>,
    },
    /// Writes the two-class synthetic corpus (labeled TSV).
    Synth {
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 200)]
        documents: usize,
        #[arg(long, default_value_t = 1)]
        distractors: usize,
    },
    /// Re-runs the stage recorded in a manifest and checks its outputs.
    Replay { manifest: PathBuf },
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Corpus file (format from `corpus.format` or `--format`).
    #[arg(long, short, required_unless_present = "from_json")]
    input: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
    /// Rule-based SVO extraction (the default).
    #[arg(long, conflicts_with = "from_json")]
    heuristic: bool,
    /// Validate and import pre-extracted blocks instead.
    #[arg(long, value_name = "EVENTS")]
    from_json: Option<PathBuf>,
    #[arg(long)]
    format: Option<segcl::events::CorpusFormat>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    min_freq: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    patterns: PathBuf,
    /// Checkpoint path, or the sweep CSV with `--sweep`.
    #[arg(long, short)]
    output: PathBuf,
    /// Loss history CSV (default: `<output stem>.loss.csv`).
    #[arg(long)]
    history: Option<PathBuf>,
    /// Drop a loss term: structure, event or upper_bound (repeatable).
    #[arg(long)]
    ablate: Vec<Ablation>,
    /// Sweep eta, theta, we or ws and report probe metrics per value.
    #[arg(long, requires = "corpus")]
    sweep: Option<SweepParam>,
    /// Labeled corpus for `--sweep`.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    match &cli.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
}

fn run(cli: Cli, args: Vec<String>) -> Result<()> {
    let mut config = load_config(&cli)?;
    if let Command::Extract(a) = &cli.command {
        if let Some(f) = a.format {
            config.corpus.format = f;
        }
        if let Some(p) = &a.stopwords {
            config.corpus.stopwords = Some(p.clone());
        }
        if let Some(p) = &a.entities {
            config.corpus.entities = Some(p.clone());
        }
        if let Some(n) = a.min_freq {
            config.corpus.min_freq = n;
        }
    }
    if let Command::Eval { f1: Some(mode), .. } = &cli.command {
        config.probe.f1 = *mode;
    }
    config.validate()?;
    if cli.verbose {
        eprintln!("# effective configuration\n{}", config.to_toml());
    }
    let mut ctx = Context::new(config, cli.seed);
    ctx.threads = cli.threads;
    ctx.args = args;
    init_threads(cli.threads);
    dispatch(&ctx, &cli.command)
}

fn dispatch(ctx: &Context, command: &Command) -> Result<()> {
    match command {
        Command::Extract(a) => {
            let source = match (&a.from_json, &a.input) {
                (Some(events), _) => ExtractSource::FromJson(events.clone()),
                (None, Some(input)) => ExtractSource::Heuristic(input.clone()),
                (None, None) => unreachable!("clap requires one of --input and --from-json"),
            };
            let blocks = stages::extract(ctx, &source, &a.output)?;
            let docs: std::collections::BTreeSet<&str> =
                blocks.iter().map(|b| b.doc_id.as_str()).collect();
            println!(
                "{} blocks from {} documents -> {}",
                blocks.len(),
                docs.len(),
                a.output.display()
            );
        }
        Command::Build { events, output } => {
            let graphs = stages::build(ctx, events, output)?;
            let edges: usize = graphs.iter().map(|g| g.edge_count()).sum();
            println!(
                "{} graphs, {} edges -> {}",
                graphs.len(),
                edges,
                output.display()
            );
        }
        Command::Mine { graphs, output } => {
            let (patterns, table) = stages::mine(ctx, graphs, output)?;
            print!("{table}");
            println!("{} patterns -> {}", patterns.len(), output.display());
        }
        Command::Train(a) => match (a.sweep, &a.corpus) {
            (Some(param), Some(corpus)) => {
                let rows = stages::sweep(
                    ctx,
                    &a.graphs,
                    &a.patterns,
                    corpus,
                    param,
                    &a.ablate,
                    &a.output,
                )?;
                print!("{}", stages::sweep_csv(param, &rows));
            }
            _ => {
                let out = stages::train(
                    ctx,
                    &a.graphs,
                    &a.patterns,
                    &a.ablate,
                    &a.output,
                    a.history.as_deref(),
                )?;
                if let Some(last) = out.history.last() {
                    println!(
                        "{} epochs, final zeta_total {:.6} -> {}",
                        out.history.len(),
                        last.zeta_total,
                        a.output.display()
                    );
                }
            }
        },
        Command::Embed {
            graphs,
            patterns,
            checkpoint,
            output,
        } => {
            let emb = stages::embed(ctx, graphs, patterns, checkpoint, output)?;
            println!("{} embeddings -> {}", emb.len(), output.display());
        }
        Command::Eval {
            embeddings,
            corpus,
            output,
            ..
        } => {
            let report = stages::eval(ctx, embeddings, corpus, output)?;
            print!("{}", report.to_table());
        }
        Command::Synth {
            output,
            documents,
            distractors,
        } => {
            let cfg = segcl::synth::SynthConfig {
                documents: *documents,
                distractors: *distractors,
                seed: ctx.seed,
            };
            let text = segcl::synth::labeled_tsv(&cfg)?;
            std::fs::write(output, text).map_err(|e| Error::Io {
                path: output.clone(),
                source: e,
            })?;
            println!("{documents} documents -> {}", output.display());
        }
        Command::Replay { manifest } => replay(manifest)?,
    }
    Ok(())
}

/// Runs the recorded command with the recorded configuration and seed,
/// then compares output digests.
fn replay(path: &Path) -> Result<()> {
    let manifest = Manifest::load(path)?;
    let config = manifest.config()?;
    let mut argv = vec!["segcl".to_string()];
    argv.extend(manifest.args.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| Error::Config(format!("manifest arguments: {e}")))?;
    let mut ctx = Context::new(config, Some(manifest.seed));
    ctx.threads = manifest.threads;
    ctx.args = manifest.args.clone();
    init_threads(manifest.threads);
    dispatch(&ctx, &cli.command)?;
    let mut differ = Vec::new();
    for out in &manifest.outputs {
        if stages::digest(&out.path)?.sha256 != out.sha256 {
            differ.push(out.path.display().to_string());
        }
    }
    if differ.is_empty() {
        println!("replay reproduced {} output(s)", manifest.outputs.len());
        Ok(())
    } else {
        Err(Error::Config(format!(
            "replay produced different output: {}",
            differ.join(", ")
        )))
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .parse_env("SEGCL_LOG")
        .init();
    match run(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
