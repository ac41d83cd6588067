//! Comparison methods. All of them read the concatenated 588-column feature
//! matrix and return rows in dataset order.

mod mlp;
mod nmf;
mod ward;

pub use mlp::{
    ae_train, deepcluster_train, feature_dropout, simclr_mlp_train, AeFit, DeepClusterFit, DeepClusterParams,
    SimclrFit, SimclrParams, TrainParams,
};
pub use nmf::{nmf_fit, NmfFit};
pub use ward::{hierarchical_labels, WardFit};

use crate::contrastive::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::ingest::CohortDataset;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Nmf,
    Ae,
    #[serde(rename = "simclr")]
    SimclrMlp,
    #[serde(rename = "deepcluster")]
    DeepCluster,
    Hierarchical,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Nmf,
        Method::Hierarchical,
        Method::Ae,
        Method::SimclrMlp,
        Method::DeepCluster,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nmf => "nmf",
            Method::Ae => "ae",
            Method::SimclrMlp => "simclr",
            Method::DeepCluster => "deepcluster",
            Method::Hierarchical => "hierarchical",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub method: Method,
    pub seed: u64,
    /// NMF rank.
    pub rank: usize,
    pub nmf_iters: usize,
    /// Embedding width of the neural baselines.
    pub latent: usize,
    /// Hidden width of the SimCLR and DeepCluster encoders.
    pub hidden: usize,
    pub projection: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub temperature: f64,
    /// Feature-dropout probability of the SimCLR views.
    pub mask_prob: f64,
    pub k_pseudo: usize,
    /// Number of clusters for the hierarchical cut.
    pub k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            method: Method::Ae,
            seed: 42,
            rank: 2,
            nmf_iters: 500,
            latent: 64,
            hidden: 256,
            projection: 64,
            epochs: 100,
            batch_size: 8,
            lr: 1e-3,
            temperature: 0.5,
            mask_prob: 0.1,
            k_pseudo: 2,
            k: 2,
        }
    }
}

impl BaselineConfig {
    pub fn for_method(method: Method, seed: u64) -> Self {
        BaselineConfig {
            method,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::invalid(format!("{}: {name} must be positive", self.method)))
            } else {
                Ok(())
            }
        };
        let neural = || -> Result<()> {
            positive("epochs", self.epochs)?;
            positive("latent", self.latent)?;
            if self.batch_size < 2 {
                return Err(Error::invalid(format!("{}: batch_size must be at least 2", self.method)));
            }
            if !(self.lr >= 0.0 && self.lr.is_finite()) {
                return Err(Error::invalid(format!("{}: learning rate must be non-negative", self.method)));
            }
            Ok(())
        };
        match self.method {
            Method::Nmf => {
                positive("rank", self.rank)?;
                positive("nmf_iters", self.nmf_iters)
            }
            Method::Hierarchical => positive("k", self.k),
            Method::Ae => neural(),
            Method::SimclrMlp => {
                neural()?;
                positive("hidden", self.hidden)?;
                positive("projection", self.projection)?;
                if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
                    return Err(Error::invalid(format!(
                        "simclr: mask probability must lie in (0, 1), got {}",
                        self.mask_prob
                    )));
                }
                if !(self.temperature > 0.0 && self.temperature.is_finite()) {
                    return Err(Error::invalid("simclr: temperature must be positive"));
                }
                Ok(())
            }
            Method::DeepCluster => {
                neural()?;
                positive("hidden", self.hidden)?;
                if self.k_pseudo < 2 {
                    return Err(Error::invalid("deepcluster: k_pseudo must be at least 2"));
                }
                Ok(())
            }
        }
    }

    fn train_params(&self) -> TrainParams {
        TrainParams {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
        }
    }
}

/// `[scaled gene ‖ scaled chromosome]`, one row per cohort.
pub fn concat_features(dataset: &CohortDataset) -> Result<Tensor> {
    dataset.scaled_gene.hstack(&dataset.scaled_chrom)
}

/// Non-negative counterpart of [`concat_features`]: the `log1p` features
/// before standardisation.
pub fn nonnegative_features(dataset: &CohortDataset) -> Result<Tensor> {
    dataset.log_gene().hstack(&dataset.log_chrom())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRun {
    pub method: Method,
    /// Representation the method is evaluated in. For hierarchical
    /// clustering this is the input feature matrix.
    pub embedding: EmbeddingMatrix,
    /// Labels produced directly by the method, bypassing k-means.
    pub labels: Option<Vec<usize>>,
    /// Per-epoch loss, or per-iteration objective for NMF.
    pub history: Vec<f64>,
}

pub fn run_baseline(dataset: &CohortDataset, cfg: &BaselineConfig) -> Result<BaselineRun> {
    cfg.validate()?;
    let names = dataset.names();
    let tag = cfg.method.name();
    let x = concat_features(dataset)?;
    let (vectors, labels, history) = match cfg.method {
        Method::Nmf => {
            let fit = nmf_fit(&nonnegative_features(dataset)?, cfg.rank, cfg.nmf_iters, cfg.seed)?;
            (fit.w, None, fit.objective)
        }
        Method::Hierarchical => {
            let fit = hierarchical_labels(&x, cfg.k)?;
            (x, Some(fit.labels), fit.heights)
        }
        Method::Ae => {
            let fit = ae_train(&x, cfg.latent, cfg.train_params())?;
            (fit.embedding, None, fit.loss_history)
        }
        Method::SimclrMlp => {
            let sp = SimclrParams {
                hidden: cfg.hidden,
                latent: cfg.latent,
                projection: cfg.projection,
                mask_prob: cfg.mask_prob,
                temperature: cfg.temperature,
            };
            let fit = simclr_mlp_train(&x, sp, cfg.train_params())?;
            (fit.embedding, None, fit.loss_history)
        }
        Method::DeepCluster => {
            let dp = DeepClusterParams {
                hidden: cfg.hidden,
                latent: cfg.latent,
                k_pseudo: cfg.k_pseudo,
            };
            let fit = deepcluster_train(&x, dp, cfg.train_params())?;
            (fit.embedding, None, fit.loss_history)
        }
    };
    Ok(BaselineRun {
        method: cfg.method,
        embedding: EmbeddingMatrix::new(names, vectors, tag)?,
        labels,
        history,
    })
}
