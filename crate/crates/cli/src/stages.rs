//! Pipeline stages, artifact IO and the resumable manifest.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use metaid::cluster::{kmeans_cosine, rank_within_cluster, ClusterError};
use metaid::embed::{read_matrix, train_skipgram, EmbeddingTable};
use metaid::graph::build_graph;
use metaid::idgen::{assign_meta_ids, assign_rid, assign_sid, build_f_init, read_vocab_tsv, IdAssignment, IdMap, Strategy};
use metaid::ingest::{
    build_index, compute_stats, parse_interactions, split_leave_one_out, split_random, ColumnFormat, DatasetIndex,
    InputFormat, IngestError,
};
use metaid::metrics::{build_similarity_oracle, evaluate, item_representations, MetricError, TokenTable};
use metaid::promptgen::{build_id_trie, emit_corpus, Templates};
use metaid::rng::derive_seed_labeled;
use metaid::walker::{sample_walks, WalkCorpus, WalkError};
use metaid::{ClusterModelF64, EmbeddingTableF64, Real};

use crate::config::{FileFormat, PipelineConfig, SplitChoice};

pub const INDEX: &str = "index.json";
pub const GRAPH: &str = "graph.json";
pub const WALKS: &str = "walks.txt";
pub const EMBEDDINGS: &str = "embeddings.bin";
pub const CLUSTERS: &str = "clusters.json";
pub const VOCAB: &str = "vocab.tsv";
pub const F_INIT: &str = "f_init.bin";
pub const ID_MAP: &str = "id_map.json";
pub const METRICS: &str = "metrics.json";
pub const CORPUS: &str = "corpus.jsonl";
pub const TRIE: &str = "trie.json";
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Graph,
    Walk,
    Embed,
    Cluster,
    Idgen,
    Metrics,
    Promptgen,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Graph,
        Stage::Walk,
        Stage::Embed,
        Stage::Cluster,
        Stage::Idgen,
        Stage::Metrics,
        Stage::Promptgen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Walk => "walk",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Idgen => "idgen",
            Stage::Metrics => "metrics",
            Stage::Promptgen => "promptgen",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Data,
    Internal,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 1,
            Kind::Data => 2,
            Kind::Internal => 3,
        }
    }
}

/// Stage-tagged error carrying its exit class.
#[derive(Debug)]
pub struct Failure {
    pub stage: Option<Stage>,
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: anyhow::Error) -> Self {
        Failure {
            stage: None,
            kind: Kind::Usage,
            error,
        }
    }

    fn at(stage: Stage, error: anyhow::Error) -> Self {
        let kind = classify(&error);
        Failure {
            stage: Some(stage),
            kind,
            error,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "{s}: {:#}", self.error),
            None => write!(f, "{:#}", self.error),
        }
    }
}

/// An upstream artifact the stage needs has not been produced.
#[derive(Debug)]
struct MissingArtifact(PathBuf);

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} not found; run the earlier stages first", self.0.display())
    }
}

impl std::error::Error for MissingArtifact {}

/// The input file named by the config is absent or unreadable.
#[derive(Debug)]
struct BadInput(String);

impl fmt::Display for BadInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

fn classify(error: &anyhow::Error) -> Kind {
    for cause in error.chain() {
        if cause.is::<MissingArtifact>() {
            return Kind::Usage;
        }
        if cause.is::<BadInput>() || cause.is::<IngestError>() {
            return Kind::Data;
        }
        if let Some(e) = cause.downcast_ref::<WalkError>() {
            if matches!(e, WalkError::EmptyGraph) {
                return Kind::Data;
            }
        }
        if let Some(ClusterError::TooFewDistinct { .. }) = cause.downcast_ref::<ClusterError>() {
            return Kind::Data;
        }
        if let Some(MetricError::AllUndefined | MetricError::TooFew(_)) = cause.downcast_ref::<MetricError>() {
            return Kind::Data;
        }
    }
    Kind::Internal
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    /// Digest over the stage's settings and upstream artifact digests.
    pub input_digest: String,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: Vec<StageEntry>,
}

impl Manifest {
    fn load(dir: &Path) -> Manifest {
        let path = dir.join(MANIFEST);
        File::open(&path)
            .ok()
            .and_then(|f| serde_json::from_reader(BufReader::new(f)).ok())
            .unwrap_or_default()
    }

    fn entry(&self, stage: Stage) -> Option<&StageEntry> {
        self.stages.iter().find(|e| e.stage == stage.name())
    }

    fn record(&mut self, entry: StageEntry) {
        match self.stages.iter_mut().find(|e| e.stage == entry.stage) {
            Some(e) => *e = entry,
            None => self.stages.push(entry),
        }
        let order = |name: &str| Stage::ALL.iter().position(|s| s.name() == name).unwrap_or(usize::MAX);
        self.stages.sort_by_key(|e| order(&e.stage));
    }
}

pub struct Workspace<'a> {
    pub cfg: &'a PipelineConfig,
    pub dir: PathBuf,
}

impl<'a> Workspace<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&cfg.workdir).with_context(|| format!("creating {}", cfg.workdir.display()))?;
        Ok(Workspace {
            cfg,
            dir: cfg.workdir.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn open(&self, name: &str) -> anyhow::Result<BufReader<File>> {
        let path = self.path(name);
        if !path.exists() {
            return Err(MissingArtifact(path).into());
        }
        Ok(BufReader::new(File::open(&path).with_context(|| format!("opening {}", path.display()))?))
    }

    fn digest(&self, name: &str) -> anyhow::Result<String> {
        let path = self.path(name);
        if !path.exists() {
            return Err(MissingArtifact(path).into());
        }
        Ok(sha256_file(&path)?)
    }

    /// Writes `name.partial`, then renames it into place. A failed write leaves
    /// the partial file behind for inspection.
    fn write<F>(&self, name: &str, body: F) -> anyhow::Result<ArtifactEntry>
    where
        F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
    {
        let final_path = self.path(name);
        let partial = self.path(&format!("{name}.partial"));
        let mut out = BufWriter::new(File::create(&partial).with_context(|| format!("creating {}", partial.display()))?);
        body(&mut out).with_context(|| format!("writing {name}"))?;
        out.flush()?;
        drop(out);
        std::fs::rename(&partial, &final_path)?;
        Ok(ArtifactEntry {
            file: name.to_string(),
            sha256: sha256_file(&final_path)?,
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> anyhow::Result<ArtifactEntry> {
        self.write(name, |out| {
            serde_json::to_writer(&mut *out, value)?;
            out.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn load_index(&self) -> anyhow::Result<DatasetIndex> {
        Ok(serde_json::from_reader(self.open(INDEX)?).context("parsing index.json")?)
    }

    pub fn load_assignment(&self, index: &DatasetIndex) -> anyhow::Result<IdAssignment> {
        let map: IdMap = serde_json::from_reader(self.open(ID_MAP)?).context("parsing id_map.json")?;
        Ok(IdAssignment::from_id_map(&map, index)?)
    }

    fn input_format(&self) -> anyhow::Result<InputFormat> {
        let input = &self.cfg.input;
        let delimited = |delim: char| -> anyhow::Result<InputFormat> {
            let mut fmt = ColumnFormat::from_order(&input.columns, delim)?;
            fmt.has_header = input.header;
            Ok(InputFormat::Delimited(fmt))
        };
        match input.format {
            FileFormat::Jsonl => Ok(InputFormat::JsonLines),
            FileFormat::Csv => delimited(','),
            FileFormat::Tsv => delimited('\t'),
        }
    }

    fn input_path(&self) -> anyhow::Result<&Path> {
        let path = self.cfg.input.path.as_deref().ok_or_else(|| BadInput("no input path configured".into()))?;
        if !path.is_file() {
            return Err(BadInput(format!("input {} does not exist", path.display())).into());
        }
        Ok(path)
    }

    /// Digest over the settings and upstream artifacts a stage consumes.
    fn input_digest(&self, stage: Stage) -> anyhow::Result<String> {
        let cfg = self.cfg;
        let upstream = |names: &[&str]| -> anyhow::Result<Vec<String>> { names.iter().map(|n| self.digest(n)).collect() };
        let parts = match stage {
            Stage::Ingest => json!({
                "input": cfg.input,
                "file": sha256_file(self.input_path()?)?,
            }),
            Stage::Graph => json!({ "up": upstream(&[INDEX])? }),
            Stage::Walk => json!({ "walk": cfg.walk, "up": upstream(&[INDEX, GRAPH])? }),
            Stage::Embed => json!({ "embed": cfg.embed, "up": upstream(&[INDEX, WALKS])? }),
            Stage::Cluster => json!({ "cluster": cfg.cluster, "up": upstream(&[INDEX, EMBEDDINGS])? }),
            Stage::Idgen => {
                let up = match cfg.strategy {
                    Strategy::Meta => upstream(&[INDEX, CLUSTERS])?,
                    _ => upstream(&[INDEX])?,
                };
                json!({ "strategy": cfg.strategy, "alpha": cfg.alpha, "seed": cfg.seed, "up": up })
            }
            Stage::Metrics => {
                let up = match cfg.strategy {
                    Strategy::Meta => upstream(&[INDEX, ID_MAP, VOCAB, F_INIT])?,
                    _ => upstream(&[INDEX, ID_MAP])?,
                };
                json!({ "metrics": cfg.metrics, "dim": cfg.embed.dim, "up": up })
            }
            Stage::Promptgen => {
                let templates = match &cfg.prompts.templates {
                    Some(p) => Some(sha256_file(p).with_context(|| format!("reading templates {}", p.display()))?),
                    None => None,
                };
                json!({ "prompts": cfg.prompts, "templates": templates, "up": upstream(&[INDEX, ID_MAP])? })
            }
        };
        let mut hasher = Sha256::new();
        hasher.update(stage.name().as_bytes());
        hasher.update(serde_json::to_vec(&parts)?);
        Ok(hex::encode(hasher.finalize()))
    }

    fn up_to_date(&self, entry: &StageEntry) -> bool {
        entry
            .artifacts
            .iter()
            .all(|a| sha256_file(&self.path(&a.file)).map(|d| d == a.sha256).unwrap_or(false))
    }

    fn execute(&self, stage: Stage) -> anyhow::Result<Vec<ArtifactEntry>> {
        let cfg = self.cfg;
        let target = stage.name();
        match stage {
            Stage::Ingest => {
                let path = self.input_path()?;
                let file = File::open(path).map_err(|e| BadInput(format!("opening {}: {e}", path.display())))?;
                let records = parse_interactions(BufReader::new(file), &self.input_format()?)?;
                let index = build_index(&records)?;
                let stats = compute_stats(&index);
                info!(target: target, "{} users, {} items, {} interactions, sparsity {:.4}%",
                    stats.users, stats.items, stats.reviews, stats.sparsity_percent);
                Ok(vec![self.write_json(INDEX, &index)?])
            }
            Stage::Graph => {
                let graph = build_graph(&self.load_index()?);
                info!(target: target, "{} edges over {} nodes", graph.total_edges(), graph.node_count());
                Ok(vec![self.write_json(GRAPH, &graph.dump())?])
            }
            Stage::Walk => {
                let index = self.load_index()?;
                let corpus = sample_walks(&build_graph(&index), &cfg.walk)?;
                info!(target: target, "{} walks, {} tokens", corpus.walks.len(), corpus.token_count());
                Ok(vec![self.write(WALKS, |out| Ok(corpus.write_text(out)?))?])
            }
            Stage::Embed => {
                let index = self.load_index()?;
                let corpus = WalkCorpus::read_text(self.open(WALKS)?, index.user_count(), index.item_count())?;
                let trained = train_skipgram::<Real>(&corpus, &cfg.embed)?;
                if let Some(last) = trained.epoch_loss.last() {
                    info!(target: target, "final epoch loss {last:.6}");
                }
                Ok(vec![self.write(EMBEDDINGS, |out| Ok(trained.table.write_binary(out)?))?])
            }
            Stage::Cluster => {
                let table: EmbeddingTableF64 = EmbeddingTable::read_binary(self.open(EMBEDDINGS)?)?;
                let model = rank_within_cluster(kmeans_cosine(&table, &cfg.cluster)?, &table);
                info!(target: target, "{} groups after {} iterations ({:?}), largest {}",
                    model.groups(), model.iterations, model.stop, model.max_cluster_size());
                Ok(vec![self.write_json(CLUSTERS, &model)?])
            }
            Stage::Idgen => {
                let index = self.load_index()?;
                let seed = derive_seed_labeled(cfg.seed, "idgen");
                match cfg.strategy {
                    Strategy::Meta => {
                        let model: ClusterModelF64 =
                            serde_json::from_reader(self.open(CLUSTERS)?).context("parsing clusters.json")?;
                        let (assignment, vocab) = assign_meta_ids(&model, &index)?;
                        let vocab = build_f_init(&model, vocab, cfg.alpha, seed)?;
                        let size = vocab.size();
                        info!(target: target, "vocabulary {} = {} prefix + {} coarse + {} fine",
                            size.total, size.prefix, size.coarse, size.fine);
                        Ok(vec![
                            self.write(VOCAB, |out| Ok(vocab.write_tsv(out)?))?,
                            self.write(F_INIT, |out| Ok(vocab.write_f_init(out)?))?,
                            self.write_json(ID_MAP, &assignment.to_id_map(&index))?,
                        ])
                    }
                    other => {
                        let assignment = if other == Strategy::Rid { assign_rid(&index, seed) } else { assign_sid(&index) };
                        info!(target: target, "{other} ids for {} users and {} items",
                            assignment.user_count(), assignment.item_count());
                        Ok(vec![self.write_json(ID_MAP, &assignment.to_id_map(&index))?])
                    }
                }
            }
            Stage::Metrics => {
                let index = self.load_index()?;
                let assignment = self.load_assignment(&index)?;
                let table = match cfg.strategy {
                    Strategy::Meta => {
                        let tokens = read_vocab_tsv(self.open(VOCAB)?)?;
                        let m = read_matrix(self.open(F_INIT)?)?;
                        let surfaces = tokens.into_iter().map(|t| t.surface).collect();
                        let data = m.data.iter().map(|&x| x as Real).collect();
                        TokenTable::from_rows(surfaces, m.dim as usize, data)?
                    }
                    _ => TokenTable::random_for(&assignment, cfg.embed.dim, derive_seed_labeled(cfg.seed, "token-table")),
                };
                let reps = item_representations(&assignment, &table)?;
                let oracle = build_similarity_oracle(&index);
                let report = evaluate(&reps, &oracle, &cfg.metrics)?;
                info!(target: target, "DS {:.6}, MS {:.6} ({} pairs skipped)", report.ds, report.ms, report.ms_pairs_skipped);
                let out = json!({ "strategy": cfg.strategy, "report": report });
                Ok(vec![self.write_json(METRICS, &out)?])
            }
            Stage::Promptgen => {
                let index = self.load_index()?;
                let assignment = self.load_assignment(&index)?;
                let templates = match &cfg.prompts.templates {
                    Some(p) => Templates::load(BufReader::new(
                        File::open(p).with_context(|| format!("opening templates {}", p.display()))?,
                    ))?,
                    None => Templates::default(),
                };
                let seed = derive_seed_labeled(cfg.seed, "split");
                let splits = match cfg.prompts.split {
                    SplitChoice::Random => split_random(&index, cfg.prompts.ratios, seed)?,
                    SplitChoice::LeaveOneOut => match split_leave_one_out(&index) {
                        Ok(s) => s,
                        Err(IngestError::NoEligibleUsers) => {
                            warn!(target: target, "no user has 3 interactions; using a random split instead");
                            split_random(&index, cfg.prompts.ratios, seed)?
                        }
                        Err(e) => return Err(e.into()),
                    },
                };
                let tasks: &BTreeSet<_> = &cfg.prompts.tasks;
                let mut counts = None;
                let corpus = self.write(CORPUS, |out| {
                    counts = Some(emit_corpus(&index, &splits, &assignment, &templates, tasks, out)?);
                    Ok(())
                })?;
                for (task, n) in counts.unwrap_or_default() {
                    info!(target: target, "{task}: {n} examples");
                }
                let trie = build_id_trie(&assignment)?;
                Ok(vec![corpus, self.write(TRIE, |out| Ok(trie.write_json(out)?))?])
            }
        }
    }
}

/// Runs `stages` in order. Without `force`, a stage whose input digest and
/// artifacts match the manifest is skipped.
pub fn run(cfg: &PipelineConfig, stages: &[Stage], force: bool) -> Result<Manifest, Failure> {
    let ws = Workspace::new(cfg).map_err(Failure::usage)?;
    let mut manifest = Manifest::load(&ws.dir);
    for &stage in stages {
        let digest = ws.input_digest(stage).map_err(|e| Failure::at(stage, e))?;
        if !force {
            if let Some(entry) = manifest.entry(stage) {
                if entry.input_digest == digest && ws.up_to_date(entry) {
                    info!(target: stage.name(), "up to date, skipping");
                    continue;
                }
            }
        }
        info!(target: stage.name(), "running");
        let artifacts = ws.execute(stage).map_err(|e| Failure::at(stage, e))?;
        manifest.record(StageEntry {
            stage: stage.name().to_string(),
            input_digest: digest,
            artifacts,
        });
        ws.write_json(MANIFEST, &manifest).map_err(|e| Failure::at(stage, e))?;
    }
    Ok(manifest)
}
