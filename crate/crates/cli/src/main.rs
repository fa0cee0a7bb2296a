mod config;
mod stages;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use metaid::idgen::Strategy;
use metaid::ingest::{compute_stats, generate_synthetic, SyntheticConfig};
use metaid::promptgen::{build_id_trie, IdTrie};

use config::{PipelineConfig, RawConfig};
use stages::{Failure, Kind, Stage, Workspace};

#[derive(Parser)]
#[command(name = "metaid", version, about = "Build and evaluate META ID identifier artifacts")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// key = value config file with [section] headers
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set walk.length=32
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Rerun stages even when their inputs are unchanged
    #[arg(long, global = true)]
    force: bool,
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the input file into index.json
    Ingest,
    /// Print dataset statistics
    Stats,
    /// Build the rating-typed bipartite graph into graph.json
    Graph,
    /// Sample meta-path walks into walks.txt
    Walk,
    /// Train skip-gram embeddings into embeddings.bin
    Embed,
    /// Cluster embeddings into clusters.json
    Cluster,
    /// Assign identifiers (vocab.tsv, f_init.bin, id_map.json)
    AssignIds {
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Compute diversity and memorization scores into metrics.json
    Metrics,
    /// Emit the instruction corpus and trie
    Prompts,
    /// Build trie.json and optionally list valid continuations of a prefix
    Trie {
        /// Space-separated token prefix
        #[arg(long, allow_hyphen_values = true)]
        prefix: Option<String>,
    },
    /// Write a block-structured synthetic dataset as JSON lines
    Synth {
        #[arg(long, default_value_t = 2)]
        blocks: usize,
        #[arg(long, default_value_t = 50)]
        users_per_block: usize,
        #[arg(long, default_value_t = 50)]
        items_per_block: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage, skipping those that are up to date
    Pipeline,
}

fn load_config(global: &GlobalArgs, command: &Command) -> anyhow::Result<PipelineConfig> {
    let mut raw = match &global.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    for pair in &global.overrides {
        raw.set_pair(pair)?;
    }
    if let Some(p) = &global.input {
        raw.set("input.path", &p.to_string_lossy())?;
    }
    if let Some(p) = &global.workdir {
        raw.set("pipeline.workdir", &p.to_string_lossy())?;
    }
    if let Some(s) = global.seed {
        raw.set("pipeline.seed", &s.to_string())?;
    }
    if let Some(w) = global.workers {
        raw.set("pipeline.workers", &w.to_string())?;
    }
    if let Command::AssignIds { strategy: Some(s) } = command {
        raw.set("ids.strategy", &s.to_string())?;
    }
    PipelineConfig::from_raw(&raw)
}

fn synth(cfg: &PipelineConfig, command: &Command) -> anyhow::Result<()> {
    let Command::Synth {
        blocks,
        users_per_block,
        items_per_block,
        noise,
        out,
    } = command
    else {
        unreachable!()
    };
    let records = generate_synthetic(&SyntheticConfig {
        blocks: *blocks,
        users_per_block: *users_per_block,
        items_per_block: *items_per_block,
        cross_block_noise: *noise,
        seed: cfg.seed,
    })?;
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for r in &records {
        let mut obj = Map::new();
        obj.insert("user".into(), json!(r.user_key));
        obj.insert("item".into(), json!(r.item_key));
        obj.insert("rating".into(), json!(r.rating));
        obj.insert("timestamp".into(), json!(r.timestamp));
        for (k, v) in [
            ("review", &r.review_text),
            ("summary", &r.summary),
            ("explanation", &r.explanation),
            ("feature", &r.feature_word),
        ] {
            if let Some(v) = v {
                obj.insert(k.into(), json!(v));
            }
        }
        serde_json::to_writer(&mut sink, &Value::Object(obj))?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    log::info!(target: "synth", "{} interactions", records.len());
    Ok(())
}

fn stats(cfg: &PipelineConfig) -> Result<(), Failure> {
    let ws = Workspace::new(cfg).map_err(Failure::usage)?;
    let index = match ws.load_index() {
        Ok(index) => index,
        Err(_) => {
            stages::run(cfg, &[Stage::Ingest], false)?;
            ws.load_index().map_err(Failure::usage)?
        }
    };
    print!("{}", compute_stats(&index));
    Ok(())
}

fn trie(cfg: &PipelineConfig, prefix: Option<&str>) -> anyhow::Result<()> {
    let ws = Workspace::new(cfg)?;
    let path = ws.dir.join(stages::TRIE);
    let trie = if path.exists() {
        IdTrie::from_json(&serde_json::from_reader(BufReader::new(File::open(&path)?))?)?
    } else {
        let index = ws.load_index()?;
        let trie = build_id_trie(&ws.load_assignment(&index)?)?;
        let partial = ws.dir.join(format!("{}.partial", stages::TRIE));
        trie.write_json(BufWriter::new(File::create(&partial)?))?;
        std::fs::rename(partial, &path)?;
        trie
    };
    log::info!(target: "trie", "{} item ids, {} nodes", trie.paths().len(), trie.node_count());
    if let Some(prefix) = prefix {
        let tokens: Vec<&str> = prefix.split_whitespace().collect();
        let mut out = std::io::stdout().lock();
        for t in trie.valid_continuations(&tokens) {
            writeln!(out, "{t}")?;
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli.global, &cli.command).map_err(Failure::usage)?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.into()))?;
    }
    let single = |stage: Stage| stages::run(&cfg, &[stage], true).map(drop);
    let data = |e: anyhow::Error| Failure {
        stage: None,
        kind: Kind::Data,
        error: e,
    };
    match &cli.command {
        Command::Ingest => single(Stage::Ingest),
        Command::Stats => stats(&cfg),
        Command::Graph => single(Stage::Graph),
        Command::Walk => single(Stage::Walk),
        Command::Embed => single(Stage::Embed),
        Command::Cluster => single(Stage::Cluster),
        Command::AssignIds { .. } => single(Stage::Idgen),
        Command::Metrics => single(Stage::Metrics),
        Command::Prompts => single(Stage::Promptgen),
        Command::Trie { prefix } => trie(&cfg, prefix.as_deref()).map_err(data),
        cmd @ Command::Synth { .. } => synth(&cfg, cmd).map_err(data),
        Command::Pipeline => stages::run(&cfg, &Stage::ALL, cli.global.force).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format(|buf, record| {
            let target = record.target();
            let stage = target.rsplit("::").next().unwrap_or(target);
            writeln!(buf, "[{stage}] {}: {}", record.level(), record.args())
        })
        .init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!(target: f.stage.map_or("metaid", Stage::name), "{f}");
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
