//! Multi-view contrastive embeddings for cohort-level clustering of somatic
//! mutation signatures.
//!
//! The pipeline has four stages:
//!
//! 1. [`ingest`] turns mutation exports into two per-cohort views: a gene view
//!    (top-25 genes × 12 substitutions) and a chromosome view (24 chromosomes ×
//!    12 substitutions, length-normalised), then standardises them.
//! 2. [`tabnet`] encodes each view with an attentive tabular encoder built on the
//!    small reverse-mode engine in [`tensor`].
//! 3. [`contrastive`] trains both encoders jointly with NT-Xent over the
//!    (gene, chromosome) pairs and fuses the latents into one embedding.
//! 4. [`eval`] clusters and scores embeddings, and [`baselines`] provides the
//!    comparison methods evaluated with the same pipeline.
//!
//! [`pipeline`] and [`report`] wire the stages to files on disk.

pub mod baselines;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod tabnet;
pub mod tensor;

pub use error::{Error, Result};
