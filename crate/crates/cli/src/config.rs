//! `key = value` configuration with `[section]` headers.
//!
//! Keys are addressed as `section.key`. The file is read first, then
//! `--set section.key=value` overrides and the dedicated flags, so the command
//! line always wins.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use serde::Serialize;

use metaid::cluster::ClusterConfig;
use metaid::embed::SgConfig;
use metaid::idgen::{Strategy, DEFAULT_ALPHA};
use metaid::metrics::{MetricConfig, SimilarityMode};
use metaid::promptgen::Task;
use metaid::rng::derive_seed_labeled;
use metaid::walker::WalkConfig;

const KEYS: &[&str] = &[
    "input.path",
    "input.format",
    "input.columns",
    "input.header",
    "pipeline.workdir",
    "pipeline.seed",
    "pipeline.workers",
    "walk.length",
    "walk.rounds",
    "embed.dim",
    "embed.window",
    "embed.negatives",
    "embed.learning_rate",
    "embed.epochs",
    "embed.deterministic",
    "cluster.groups",
    "cluster.max_iters",
    "cluster.tol",
    "ids.strategy",
    "ids.alpha",
    "metrics.pair_samples",
    "metrics.item_samples",
    "metrics.trials",
    "metrics.temperature",
    "metrics.similarity",
    "prompts.tasks",
    "prompts.split",
    "prompts.ratios",
    "prompts.templates",
];

#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", k + 1))?;
            let key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            raw.set(&key, value.trim()).with_context(|| format!("config line {}", k + 1))?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        if !KEYS.contains(&key) {
            bail!("unknown config key `{key}`");
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> anyhow::Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{pair}` is not key=value"))?;
        self.set(k.trim(), v.trim())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> anyhow::Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            Some(v) => v.parse().map_err(|e| anyhow!("bad value `{v}` for {key}: {e}")),
            None => Ok(default),
        }
    }

    fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Tsv,
    Csv,
    Jsonl,
}

#[derive(Clone, Debug, Serialize)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub format: FileFormat,
    pub columns: String,
    pub header: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitChoice {
    LeaveOneOut,
    Random,
}

#[derive(Clone, Debug, Serialize)]
pub struct PromptConfig {
    pub tasks: BTreeSet<Task>,
    pub split: SplitChoice,
    pub ratios: (f64, f64, f64),
    pub templates: Option<PathBuf>,
}

/// Typed pipeline settings. Stage seeds are derived from `seed` and the
/// stage name, so changing one stage never reshuffles another.
#[derive(Clone, Debug, Serialize)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub workdir: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub walk: WalkConfig,
    pub embed: SgConfig,
    pub cluster: ClusterConfig,
    pub strategy: Strategy,
    pub alpha: f64,
    pub metrics: MetricConfig,
    pub prompts: PromptConfig,
}

impl PipelineConfig {
    pub fn from_raw(raw: &RawConfig) -> anyhow::Result<Self> {
        let seed: u64 = raw.get("pipeline.seed", 0)?;
        let path = raw.get_str("input.path").map(PathBuf::from);
        let format = match raw.get_str("input.format") {
            Some("tsv") => FileFormat::Tsv,
            Some("csv") => FileFormat::Csv,
            Some("jsonl") => FileFormat::Jsonl,
            Some(other) => bail!("unknown input.format `{other}`"),
            None => match path.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("jsonl" | "json") => FileFormat::Jsonl,
                Some("csv") => FileFormat::Csv,
                _ => FileFormat::Tsv,
            },
        };
        let walk = WalkConfig {
            walk_length: raw.get("walk.length", 64)?,
            rounds_per_node: raw.get("walk.rounds", 32)?,
            seed: derive_seed_labeled(seed, "walk"),
        };
        walk.validate()?;
        let d = SgConfig::default();
        let embed = SgConfig {
            dim: raw.get("embed.dim", d.dim)?,
            window: raw.get("embed.window", d.window)?,
            negatives: raw.get("embed.negatives", d.negatives)?,
            learning_rate: raw.get("embed.learning_rate", d.learning_rate)?,
            epochs: raw.get("embed.epochs", d.epochs)?,
            seed: derive_seed_labeled(seed, "embed"),
            deterministic: raw.get("embed.deterministic", d.deterministic)?,
        };
        embed.validate()?;
        let c = ClusterConfig::default();
        let cluster = ClusterConfig {
            groups: raw.get("cluster.groups", c.groups)?,
            max_iters: raw.get("cluster.max_iters", c.max_iters)?,
            tol: raw.get("cluster.tol", c.tol)?,
            seed: derive_seed_labeled(seed, "cluster"),
        };
        let m = MetricConfig::default();
        let similarity = match raw.get_str("metrics.similarity") {
            None | Some("fast") => SimilarityMode::Fast,
            Some("exact") => SimilarityMode::Exact,
            Some(other) => bail!("unknown metrics.similarity `{other}`"),
        };
        let metrics = MetricConfig {
            pair_samples: raw.get("metrics.pair_samples", m.pair_samples)?,
            item_samples: raw.get("metrics.item_samples", m.item_samples)?,
            trials: raw.get("metrics.trials", m.trials)?,
            seed: derive_seed_labeled(seed, "metrics"),
            softmax_temperature: raw.get("metrics.temperature", m.softmax_temperature)?,
            similarity,
        };
        let tasks = match raw.get_str("prompts.tasks") {
            None | Some("all") => Task::ALL.into_iter().collect(),
            Some("") | Some("none") => BTreeSet::new(),
            Some(list) => list
                .split(',')
                .map(|t| t.trim().parse::<Task>().map_err(|e| anyhow!(e)))
                .collect::<anyhow::Result<_>>()?,
        };
        let split = match raw.get_str("prompts.split") {
            None | Some("leave-one-out") => SplitChoice::LeaveOneOut,
            Some("random") => SplitChoice::Random,
            Some(other) => bail!("unknown prompts.split `{other}`"),
        };
        let ratios = match raw.get_str("prompts.ratios") {
            None => (0.8, 0.1, 0.1),
            Some(text) => {
                let parts: Vec<f64> = text
                    .split(',')
                    .map(|p| p.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| anyhow!("bad prompts.ratios `{text}`: {e}"))?;
                match parts[..] {
                    [a, b, c] => (a, b, c),
                    _ => bail!("prompts.ratios needs three values"),
                }
            }
        };
        let strategy = match raw.get_str("ids.strategy") {
            None => Strategy::Meta,
            Some(s) => s.parse().map_err(|e: String| anyhow!(e))?,
        };
        let workers: usize = raw.get("pipeline.workers", 0)?;
        Ok(PipelineConfig {
            input: InputConfig {
                path,
                format,
                columns: raw.get_str("input.columns").unwrap_or("user,item,rating,timestamp").to_string(),
                header: raw.get("input.header", false)?,
            },
            workdir: raw.get_str("pipeline.workdir").map_or_else(|| PathBuf::from("work"), PathBuf::from),
            seed,
            workers: (workers > 0).then_some(workers),
            walk,
            embed,
            cluster,
            strategy,
            alpha: raw.get("ids.alpha", DEFAULT_ALPHA)?,
            metrics,
            prompts: PromptConfig {
                tasks,
                split,
                ratios,
                templates: raw.get_str("prompts.templates").map(PathBuf::from),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let mut raw = RawConfig::parse("# demo\n[walk]\nlength = 16\n\n[ids]\nstrategy = rid\n").unwrap();
        raw.set_pair("walk.length=8").unwrap();
        let cfg = PipelineConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.walk.walk_length, 8);
        assert_eq!(cfg.strategy, Strategy::Rid);
        assert_eq!(cfg.walk.rounds_per_node, 32);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(RawConfig::parse("[walk]\nspeed = 3\n").is_err());
        assert!(RawConfig::parse("walk.length 3\n").is_err());
        let raw = RawConfig::parse("[walk]\nlength = many\n").unwrap();
        assert!(PipelineConfig::from_raw(&raw).is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let cfg = PipelineConfig::from_raw(&RawConfig::default()).unwrap();
        assert_ne!(cfg.walk.seed, cfg.embed.seed);
        assert_ne!(cfg.embed.seed, cfg.cluster.seed);
    }
}
