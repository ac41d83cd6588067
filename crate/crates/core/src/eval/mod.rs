//! Clustering, cluster-quality indices and the per-cluster analyses run on
//! every embedding.

mod kmeans;
mod metrics;
mod pca;
mod similarity;
mod spectra;

pub use kmeans::{canonicalize_labels, kmeans, kmeans_single, ClusterAssignment, DEFAULT_MAX_ITER, DEFAULT_N_INIT};
pub use metrics::{
    adjusted_rand_index, calinski_harabasz, centroids, davies_bouldin, silhouette, silhouette_with, Distance,
};
pub use pca::{pca_2d, Pca};
pub use similarity::{nearest_neighbors, self_cosine, similarity_stats, Neighbor, SimilarityStats};
pub use spectra::{cluster_chrom_load, cluster_spectra, top_genes_by_cluster, GeneCount, Overlap, TopGenes};

use crate::contrastive::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::ingest::CohortDataset;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize, Serializer};

pub const DEFAULT_TOP_NEIGHBORS: usize = 3;
pub const DEFAULT_TOP_GENES: usize = 20;

/// Serialises `+∞` as the string `"inf"` instead of JSON `null`.
pub fn serialize_metric<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QualityMetrics {
    pub silhouette: f64,
    /// `None` when some embedding row has zero norm.
    pub silhouette_cosine: Option<f64>,
    pub davies_bouldin: f64,
    #[serde(serialize_with = "serialize_metric")]
    pub calinski_harabasz: f64,
}

/// Silhouette (Euclidean and cosine), Davies–Bouldin and Calinski–Harabasz.
pub fn quality_metrics(x: &Tensor, labels: &[usize]) -> Result<QualityMetrics> {
    Ok(QualityMetrics {
        silhouette: silhouette(x, labels)?,
        silhouette_cosine: match silhouette_with(x, labels, Distance::Cosine) {
            Ok(v) => Some(v),
            Err(Error::ZeroNorm { .. }) => None,
            Err(e) => return Err(e),
        },
        davies_bouldin: davies_bouldin(x, labels)?,
        calinski_harabasz: calinski_harabasz(x, labels)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub top_neighbors: usize,
    pub top_genes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 2,
            n_init: DEFAULT_N_INIT,
            max_iter: DEFAULT_MAX_ITER,
            seed: 42,
            top_neighbors: DEFAULT_TOP_NEIGHBORS,
            top_genes: DEFAULT_TOP_GENES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CohortNeighbors {
    pub cohort: String,
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub tag: String,
    pub k: usize,
    pub names: Vec<String>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub silhouette: f64,
    pub silhouette_cosine: Option<f64>,
    pub davies_bouldin: f64,
    #[serde(serialize_with = "serialize_metric")]
    pub calinski_harabasz: f64,
    pub within: Vec<Option<f64>>,
    pub between: Option<f64>,
    pub prototypes: Vec<String>,
    /// Cohort indices in the row order of `cosine_matrix`.
    pub cluster_order: Vec<usize>,
    #[serde(skip)]
    pub cosine_matrix: Tensor,
    pub neighbors: Vec<CohortNeighbors>,
    #[serde(skip)]
    pub pca: Tensor,
    pub pca_variances: Vec<f64>,
    /// Present when the raw views were supplied.
    pub spectra: Option<Vec<Vec<f64>>>,
    pub chrom_load: Option<Vec<Vec<f64>>>,
    pub top_genes: Option<TopGenes>,
    /// Agreement with reference labels, when supplied.
    pub ari: Option<f64>,
}

impl ClusterReport {
    pub fn metrics(&self) -> QualityMetrics {
        QualityMetrics {
            silhouette: self.silhouette,
            silhouette_cosine: self.silhouette_cosine,
            davies_bouldin: self.davies_bouldin,
            calinski_harabasz: self.calinski_harabasz,
        }
    }

    /// JSON with keys in sorted order.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

/// Runs the full analysis: k-means, quality indices, similarity structure,
/// neighbours, PCA and, when `dataset` is given, spectra and top genes.
pub fn evaluate(
    e: &EmbeddingMatrix,
    dataset: Option<&CohortDataset>,
    reference: Option<&[usize]>,
    cfg: &EvalConfig,
) -> Result<ClusterReport> {
    if cfg.k < 2 {
        return Err(Error::invalid("evaluation needs k >= 2"));
    }
    if let Some(d) = dataset {
        if d.names() != e.names {
            return Err(Error::invalid("embedding cohorts do not match the feature cohorts"));
        }
    }
    let assignment = kmeans(&e.vectors, cfg.k, cfg.n_init, cfg.max_iter, cfg.seed)?;
    if assignment.degenerate {
        return Err(Error::Numerical(format!(
            "k-means found fewer than {} distinct clusters",
            cfg.k
        )));
    }
    let labels = assignment.labels.clone();
    let m = quality_metrics(&e.vectors, &labels)?;
    let sim = similarity_stats(e, &labels)?;
    let top = cfg.top_neighbors.min(e.len().saturating_sub(1));
    let neighbors = nearest_neighbors(e, top)?
        .into_iter()
        .zip(&e.names)
        .map(|(neighbors, cohort)| CohortNeighbors {
            cohort: cohort.clone(),
            neighbors,
        })
        .collect();
    let pca = pca_2d(&e.vectors)?;
    let (spectra, chrom_load, top_genes) = match dataset {
        Some(d) => (
            Some(cluster_spectra(d, &labels)?.into_iter().map(|r| r.to_vec()).collect()),
            Some(cluster_chrom_load(d, &labels)?.into_iter().map(|r| r.to_vec()).collect()),
            Some(top_genes_by_cluster(d, &labels, cfg.top_genes)?),
        ),
        None => (None, None, None),
    };
    let ari = reference.map(|r| adjusted_rand_index(r, &labels)).transpose()?;
    Ok(ClusterReport {
        tag: e.tag.clone(),
        k: cfg.k,
        names: e.names.clone(),
        labels,
        inertia: assignment.inertia,
        silhouette: m.silhouette,
        silhouette_cosine: m.silhouette_cosine,
        davies_bouldin: m.davies_bouldin,
        calinski_harabasz: m.calinski_harabasz,
        within: sim.within,
        between: sim.between,
        prototypes: sim.prototypes,
        cluster_order: sim.order,
        cosine_matrix: sim.ordered_matrix,
        neighbors,
        pca: pca.coords,
        pca_variances: pca.variances,
        spectra,
        chrom_load,
        top_genes,
        ari,
    })
}
