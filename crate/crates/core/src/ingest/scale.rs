use super::views::{ChromosomeView, GeneView, CHROM_FEATURES, GENE_FEATURES};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Chromosome rates are multiplied by this before `log1p`.
pub const CHROM_PRESCALE: f64 = 1e6;
/// Features whose population std is at or below this are set to 0.
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub name: String,
    pub gene: GeneView,
    pub chrom: ChromosomeView,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub recipe: String,
    pub chrom_prescale: f64,
    pub std_eps: f64,
    pub gene: Vec<FeatureScale>,
    pub chrom: Vec<FeatureScale>,
}

/// Per-cohort views plus their standardised feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    pub cohorts: Vec<Cohort>,
    pub scaled_gene: Tensor,
    pub scaled_chrom: Tensor,
    pub scaling: ScalingParams,
}

impl CohortDataset {
    pub fn len(&self) -> usize {
        self.cohorts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cohorts.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.cohorts.iter().map(|c| c.name.clone()).collect()
    }

    /// `log1p` of gene counts, before standardisation.
    pub fn log_gene(&self) -> Tensor {
        log_matrix(self.cohorts.iter().map(|c| c.gene.flat()), GENE_FEATURES, 1.0)
    }

    /// `log1p(rate × 10⁶)`, before standardisation.
    pub fn log_chrom(&self) -> Tensor {
        log_matrix(self.cohorts.iter().map(|c| c.chrom.flat()), CHROM_FEATURES, CHROM_PRESCALE)
    }

    /// Returns the same dataset with cohorts in `order`, rescaled.
    pub fn reordered(&self, order: &[usize]) -> Result<CohortDataset> {
        scale_features(order.iter().map(|&i| self.cohorts[i].clone()).collect())
    }
}

fn log_matrix(rows: impl Iterator<Item = Vec<f64>>, cols: usize, prescale: f64) -> Tensor {
    let data: Vec<f64> = rows.flat_map(|r| r.into_iter().map(|v| (v * prescale).ln_1p())).collect();
    let n = data.len() / cols;
    Tensor::from_vec(n, cols, data).expect("views have fixed width")
}

/// Column-wise z-score with population std. Returns the per-column
/// parameters; columns with std ≤ [`STD_EPS`] become exactly zero.
fn standardize(x: &mut Tensor) -> Vec<FeatureScale> {
    let (n, d) = x.shape();
    let mut params = Vec::with_capacity(d);
    for j in 0..d {
        let mean = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        for i in 0..n {
            let z = if std <= STD_EPS { 0.0 } else { (x.get(i, j) - mean) / std };
            x.set(i, j, z);
        }
        params.push(FeatureScale { mean, std });
    }
    params
}

/// Gene counts: `log1p` then z-score. Chromosome rates: `×10⁶`, `log1p`,
/// then z-score. Needs at least two cohorts with unique names.
pub fn scale_features(cohorts: Vec<Cohort>) -> Result<CohortDataset> {
    if cohorts.len() < 2 {
        return Err(Error::invalid("cannot standardize one sample"));
    }
    let mut seen = BTreeSet::new();
    for c in &cohorts {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::invalid(format!("duplicate cohort name `{}`", c.name)));
        }
    }
    let mut dataset = CohortDataset {
        cohorts,
        scaled_gene: Tensor::zeros(0, 0),
        scaled_chrom: Tensor::zeros(0, 0),
        scaling: ScalingParams {
            recipe: "gene: log1p then z-score; chrom: x1e6, log1p, then z-score; population std".into(),
            chrom_prescale: CHROM_PRESCALE,
            std_eps: STD_EPS,
            gene: Vec::new(),
            chrom: Vec::new(),
        },
    };
    let mut gene = dataset.log_gene();
    let mut chrom = dataset.log_chrom();
    dataset.scaling.gene = standardize(&mut gene);
    dataset.scaling.chrom = standardize(&mut chrom);
    gene.ensure_finite("gene scaling")?;
    chrom.ensure_finite("chromosome scaling")?;
    dataset.scaled_gene = gene;
    dataset.scaled_chrom = chrom;
    Ok(dataset)
}
