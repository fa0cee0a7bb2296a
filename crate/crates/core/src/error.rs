use thiserror::Error;

use crate::{cluster, embed, graph, idgen, ingest, metrics, promptgen, walker};

/// Union of the per-stage errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] ingest::IngestError),
    #[error(transparent)]
    Graph(#[from] graph::GraphError),
    #[error(transparent)]
    Walk(#[from] walker::WalkError),
    #[error(transparent)]
    Embed(#[from] embed::EmbedError),
    #[error(transparent)]
    Cluster(#[from] cluster::ClusterError),
    #[error(transparent)]
    Id(#[from] idgen::IdError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Prompt(#[from] promptgen::PromptError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
