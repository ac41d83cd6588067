//! Joint contrastive training of the gene-view and chromosome-view encoders.
//!
//! Each batch of `N` cohorts yields `2N` projections ordered
//! `[gene_1..gene_N, chrom_1..chrom_N]`; the positive of view `i` is `i ± N`.

use crate::error::{Error, Result};
use crate::ingest::CohortDataset;
use crate::rng;
use crate::tabnet::{TabNetConfig, TabNetEncoder};
use crate::tensor::{l2_normalize_rows, AdamConfig, AdamState, Mode, Tape, Tensor};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use crate::tensor::Denominator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Elementwise mean of the two L2-normalised latents.
    #[default]
    Mean,
    /// Concatenation of the two L2-normalised latents.
    Concat,
}

/// Which encoder output is used for downstream embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedSpace {
    /// Encoder latent, before the projection head.
    #[default]
    Latent,
    /// Projection-head output, the space the loss sees.
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub temperature: f64,
    pub seed: u64,
    pub denominator: Denominator,
    pub fusion: Fusion,
    pub embed_space: EmbedSpace,
    /// Architecture shared by both encoders; `input_dim` is set per view.
    pub encoder: TabNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr: 1e-3,
            temperature: 0.5,
            seed: 42,
            denominator: Denominator::ExcludeSelf,
            fusion: Fusion::Mean,
            embed_space: EmbedSpace::Latent,
            encoder: TabNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        TabNetConfig {
            input_dim: 1,
            ..self.encoder.clone()
        }
        .validate()
    }

    fn encoder_config(&self, input_dim: usize) -> TabNetConfig {
        TabNetConfig {
            input_dim,
            ..self.encoder.clone()
        }
    }
}

/// NT-Xent of `2N` embeddings ordered `[a_1..a_N, b_1..b_N]`.
pub fn nt_xent_loss(embeddings: &Tensor, temperature: f64, denominator: Denominator) -> Result<f64> {
    if embeddings.rows() < 2 || !embeddings.rows().is_multiple_of(2) {
        return Err(Error::shape(
            "nt_xent_loss",
            format!("need an even number of rows, got {}", embeddings.rows()),
        ));
    }
    let mut tape = Tape::new();
    let z = tape.leaf(embeddings.clone())?;
    let loss = tape.nt_xent(z, temperature, denominator)?;
    Ok(tape.value(loss).get(0, 0))
}

/// Seeded partition of `0..n_cohorts` into consecutive chunks of
/// `batch_size`. A final chunk of one is merged into the previous batch.
pub fn make_batches(n_cohorts: usize, batch_size: usize, epoch: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if n_cohorts < 2 {
        return Err(Error::invalid(format!("need at least 2 cohorts to batch, got {n_cohorts}")));
    }
    if batch_size < 2 {
        return Err(Error::invalid(format!("batch_size must be at least 2, got {batch_size}")));
    }
    Ok(shuffled_batches(n_cohorts, batch_size, &mut rng::stream(seed, &format!("batches/epoch-{epoch}"))))
}

pub(crate) fn shuffled_batches<R: rand::Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

/// Both trained encoders and the per-epoch mean loss.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub gene: TabNetEncoder,
    pub chrom: TabNetEncoder,
    pub loss_history: Vec<f64>,
}

pub fn train(dataset: &CohortDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let n = dataset.len();
    let gene_x = &dataset.scaled_gene;
    let chrom_x = &dataset.scaled_chrom;
    let mut gene = TabNetEncoder::new(cfg.encoder_config(gene_x.cols()), cfg.seed, "ms-contab/gene-encoder")?;
    let mut chrom = TabNetEncoder::new(cfg.encoder_config(chrom_x.cols()), cfg.seed, "ms-contab/chrom-encoder")?;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut gene_opt = AdamState::new(adam, gene.params().values());
    let mut chrom_opt = AdamState::new(adam, chrom.params().values());

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let batches = make_batches(n, cfg.batch_size, epoch, cfg.seed)?;
        let mut epoch_loss = 0.0;
        for (b, idx) in batches.iter().enumerate() {
            let diverged = |loss: f64| Error::Diverged { epoch: epoch + 1, batch: b + 1, loss };
            let mut tape = Tape::new();
            let bound_g = gene.params().bind(&mut tape)?;
            let bound_c = chrom.params().bind(&mut tape)?;
            let step = (|| {
                let xg = tape.leaf(gene_x.select_rows(idx))?;
                let xc = tape.leaf(chrom_x.select_rows(idx))?;
                let og = gene.forward(&mut tape, &bound_g, xg, Mode::Train)?;
                let oc = chrom.forward(&mut tape, &bound_c, xc, Mode::Train)?;
                let z = tape.vstack(og.projected, oc.projected)?;
                let loss = tape.nt_xent(z, cfg.temperature, cfg.denominator)?;
                Ok::<_, Error>((loss, og.batch_stats, oc.batch_stats))
            })();
            let (loss, stats_g, stats_c) = match step {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN)),
                Err(e) => return Err(e),
            };
            let loss_value = tape.value(loss).get(0, 0);
            if !loss_value.is_finite() {
                return Err(diverged(loss_value));
            }
            let grads = tape.backward(loss)?;
            let grads_g = gene.params().collect_grads(&tape, &grads, &bound_g);
            let grads_c = chrom.params().collect_grads(&tape, &grads, &bound_c);
            gene_opt.step(gene.params_mut().values_mut(), &grads_g)?;
            chrom_opt.step(chrom.params_mut().values_mut(), &grads_c)?;
            gene.apply_batch_stats(&stats_g);
            chrom.apply_batch_stats(&stats_c);
            epoch_loss += loss_value;
        }
        let mean = epoch_loss / batches.len() as f64;
        log::debug!("epoch {:>3}: loss {mean:.6}", epoch + 1);
        history.push(mean);
    }
    Ok(TrainedModel {
        gene,
        chrom,
        loss_history: history,
    })
}

/// Per-cohort vectors, rows in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub names: Vec<String>,
    pub vectors: Tensor,
    /// Free-form tag describing how the vectors were produced.
    pub tag: String,
}

impl EmbeddingMatrix {
    pub fn new(names: Vec<String>, vectors: Tensor, tag: impl Into<String>) -> Result<Self> {
        if names.len() != vectors.rows() {
            return Err(Error::shape(
                "embedding matrix",
                format!("{} names for {} rows", names.len(), vectors.rows()),
            ));
        }
        vectors.ensure_finite("embedding")?;
        Ok(EmbeddingMatrix {
            names,
            vectors,
            tag: tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }
}

/// Fuses two per-view representations after L2-normalising each row.
pub fn fuse(gene: &Tensor, chrom: &Tensor, fusion: Fusion) -> Result<Tensor> {
    let g = l2_normalize_rows(gene)?;
    let c = l2_normalize_rows(chrom)?;
    match fusion {
        Fusion::Mean => {
            if g.shape() != c.shape() {
                return Err(Error::shape("fuse", format!("{:?} vs {:?}", g.shape(), c.shape())));
            }
            Ok(g.zip_map(&c, |a, b| (a + b) / 2.0))
        }
        Fusion::Concat => g.hstack(&c),
    }
}

/// Eval-mode embeddings for every cohort.
pub fn embed_cohorts(
    model: &TrainedModel,
    dataset: &CohortDataset,
    fusion: Fusion,
    space: EmbedSpace,
) -> Result<EmbeddingMatrix> {
    let (gl, gp, _) = model.gene.encode(&dataset.scaled_gene)?;
    let (cl, cp, _) = model.chrom.encode(&dataset.scaled_chrom)?;
    let (g, c) = match space {
        EmbedSpace::Latent => (gl, cl),
        EmbedSpace::Projection => (gp, cp),
    };
    let fused = fuse(&g, &c, fusion)?;
    let tag = format!(
        "ms-contab/{}/{}",
        serde_json::to_value(space)?.as_str().unwrap_or_default(),
        serde_json::to_value(fusion)?.as_str().unwrap_or_default()
    );
    EmbeddingMatrix::new(dataset.names(), fused, tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_for_43() {
        let b = make_batches(43, 8, 0, 42).unwrap();
        let sizes: Vec<usize> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![8, 8, 8, 8, 8, 3]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..43).collect::<Vec<_>>());
    }

    #[test]
    fn singleton_tail_is_merged() {
        let b = make_batches(41, 8, 3, 1).unwrap();
        let sizes: Vec<usize> = b.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![8, 8, 8, 8, 9]);
    }

    #[test]
    fn batches_are_seeded() {
        assert_eq!(make_batches(20, 8, 5, 42).unwrap(), make_batches(20, 8, 5, 42).unwrap());
        assert_ne!(make_batches(20, 8, 5, 42).unwrap(), make_batches(20, 8, 6, 42).unwrap());
        assert!(make_batches(1, 8, 0, 42).is_err());
    }

    #[test]
    fn uniform_similarity_gives_log_2n_minus_1() {
        for n in [2usize, 4, 8] {
            let z = Tensor::filled(2 * n, 5, 0.3);
            for tau in [0.1, 0.5, 2.0] {
                let loss = nt_xent_loss(&z, tau, Denominator::ExcludeSelf).unwrap();
                assert!((loss - ((2 * n - 1) as f64).ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fusion_modes() {
        let a = Tensor::from_rows(&[[3.0, 4.0], [1.0, 0.0]]).unwrap();
        let mean = fuse(&a, &a, Fusion::Mean).unwrap();
        assert_eq!(mean, l2_normalize_rows(&a).unwrap());
        let cat = fuse(&a, &a, Fusion::Concat).unwrap();
        assert_eq!(cat.shape(), (2, 4));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.temperature = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            batch_size: 1,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
