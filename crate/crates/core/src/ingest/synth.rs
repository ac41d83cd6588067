//! Planted two-cluster cohorts for end-to-end verification.
//!
//! Cluster A carries a higher mutation load, elevated C>T/G>A, and extra load
//! on chromosomes 1, 7, 9 and 19. Cluster B has the base load and a G>T
//! excess. Each cluster also prefers its own half of the gene universe. All
//! contrasts scale with `separation`, and `separation = 0` makes both
//! clusters draw from one distribution.

use super::genome::{ChromosomeId, ChromosomeLengths, SubstitutionType, N_CHROMOSOMES, N_SUBSTITUTIONS};
use super::scale::{scale_features, Cohort, CohortDataset};
use super::views::{ChromosomeView, GeneView};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use std::collections::BTreeMap;

/// Genes in the synthetic universe; the first half favours cluster A.
pub const SYNTH_GENES: usize = 80;
/// Expected gene-level mutations per cohort in cluster B.
pub const BASE_GENE_LOAD: f64 = 400.0;
/// Genome-wide mutations per gene-level mutation.
pub const CHROM_LOAD_FACTOR: f64 = 50.0;
const LOAD_JITTER: f64 = 0.15;
const HOT_CHROMOSOMES: [usize; 4] = [0, 6, 8, 18];

#[derive(Debug, Clone)]
pub struct SyntheticCohorts {
    pub dataset: CohortDataset,
    /// Planted cluster per cohort: 0 = A, 1 = B.
    pub labels: Vec<usize>,
}

/// Substitution probabilities for a cluster.
pub fn cluster_spectrum(cluster: usize, separation: f64) -> [f64; N_SUBSTITUTIONS] {
    use SubstitutionType::*;
    let mut p = [0.05; N_SUBSTITUTIONS];
    p[CT.index()] = 0.2;
    p[GA.index()] = 0.2;
    p[GT.index()] = 0.06;
    if cluster == 0 {
        p[CT.index()] *= 1.0 + separation;
        p[GA.index()] *= 1.0 + separation;
    } else {
        p[GT.index()] *= 1.0 + separation;
    }
    let total: f64 = p.iter().sum();
    p.map(|v| v / total)
}

/// Expected gene-level load before per-cohort jitter.
pub fn cluster_load(cluster: usize, separation: f64) -> f64 {
    if cluster == 0 {
        BASE_GENE_LOAD * (1.0 + separation)
    } else {
        BASE_GENE_LOAD
    }
}

fn gene_weights(cluster: usize, separation: f64) -> Vec<f64> {
    let half = SYNTH_GENES / 2;
    let w: Vec<f64> = (0..SYNTH_GENES)
        .map(|g| {
            let base = 1.0 / (1.0 + (g % half) as f64).powf(0.7);
            let favoured = (g < half) == (cluster == 0);
            if favoured {
                base * (1.0 + separation)
            } else {
                base
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn chromosome_weights(cluster: usize, separation: f64, lengths: &ChromosomeLengths) -> Vec<f64> {
    let w: Vec<f64> = ChromosomeId::all()
        .map(|c| {
            let len = lengths.get(c) as f64;
            if cluster == 0 && HOT_CHROMOSOMES.contains(&c.index()) {
                len * (1.0 + separation)
            } else {
                len
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
}

/// Gene names of the synthetic universe.
pub fn synthetic_gene_name(g: usize) -> String {
    format!("SYN{:03}", g + 1)
}

pub fn generate_synthetic_cohorts(n_cohorts: usize, seed: u64, separation: f64) -> Result<SyntheticCohorts> {
    if n_cohorts < 4 || !n_cohorts.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "synthetic cohort count must be even and at least 4, got {n_cohorts}"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::invalid(format!("separation must be finite and non-negative, got {separation}")));
    }
    let lengths = ChromosomeLengths::default();
    let mut label_rng = rng::stream(seed, "synth/labels");
    let mut labels: Vec<usize> = (0..n_cohorts).map(|i| i % 2).collect();
    labels.shuffle(&mut label_rng);

    let mut count_rng = rng::stream(seed, "synth/counts");
    let params: Vec<_> = (0..2)
        .map(|k| {
            (
                cluster_spectrum(k, separation),
                gene_weights(k, separation),
                chromosome_weights(k, separation, &lengths),
            )
        })
        .collect();

    let mut cohorts = Vec::with_capacity(n_cohorts);
    for (i, &k) in labels.iter().enumerate() {
        let (spectrum, genes, chroms) = &params[k];
        let load = cluster_load(k, separation) * (1.0 + count_rng.random_range(-LOAD_JITTER..LOAD_JITTER));

        let mut tallies: BTreeMap<String, [u64; N_SUBSTITUTIONS]> = BTreeMap::new();
        for (g, &wg) in genes.iter().enumerate() {
            let mut row = [0u64; N_SUBSTITUTIONS];
            for (s, &ps) in spectrum.iter().enumerate() {
                row[s] = poisson(&mut count_rng, load * wg * ps);
            }
            tallies.insert(synthetic_gene_name(g), row);
        }

        let genome_load = load * CHROM_LOAD_FACTOR;
        let mut counts = [[0u64; N_SUBSTITUTIONS]; N_CHROMOSOMES];
        for (c, &wc) in chroms.iter().enumerate() {
            for (s, &ps) in spectrum.iter().enumerate() {
                counts[c][s] = poisson(&mut count_rng, genome_load * wc * ps);
            }
        }

        cohorts.push(Cohort {
            name: format!("cohort_{i:02}"),
            gene: GeneView::from_tallies(&tallies),
            chrom: ChromosomeView::from_counts(&counts, &lengths),
        });
    }
    Ok(SyntheticCohorts {
        dataset: scale_features(cohorts)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_a_seed() {
        let a = generate_synthetic_cohorts(40, 7, 3.0).unwrap();
        let b = generate_synthetic_cohorts(40, 7, 3.0).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.dataset, b.dataset);
        let c = generate_synthetic_cohorts(40, 8, 3.0).unwrap();
        assert_ne!(a.dataset.scaled_gene, c.dataset.scaled_gene);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(generate_synthetic_cohorts(41, 7, 3.0).is_err());
        assert!(generate_synthetic_cohorts(2, 7, 3.0).is_err());
        assert!(generate_synthetic_cohorts(8, 7, -1.0).is_err());
    }

    #[test]
    fn balanced_labels() {
        let s = generate_synthetic_cohorts(40, 7, 3.0).unwrap();
        assert_eq!(s.labels.iter().filter(|&&l| l == 0).count(), 20);
    }

    #[test]
    fn cluster_a_carries_more_load() {
        let s = generate_synthetic_cohorts(40, 7, 3.0).unwrap();
        let mean_total = |k: usize| {
            let totals: Vec<f64> = s
                .dataset
                .cohorts
                .iter()
                .zip(&s.labels)
                .filter(|(_, &l)| l == k)
                .map(|(c, _)| c.gene.total() as f64)
                .collect();
            totals.iter().sum::<f64>() / totals.len() as f64
        };
        assert!(mean_total(0) > mean_total(1));
        assert!(cluster_load(0, 3.0) > cluster_load(1, 3.0));
    }

    #[test]
    fn zero_separation_shares_parameters() {
        assert_eq!(cluster_spectrum(0, 0.0), cluster_spectrum(1, 0.0));
        assert_eq!(cluster_load(0, 0.0), cluster_load(1, 0.0));
        assert_eq!(gene_weights(0, 0.0), gene_weights(1, 0.0));
    }
}
