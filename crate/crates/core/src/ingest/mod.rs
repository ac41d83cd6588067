//! Mutation exports to per-cohort gene and chromosome views.

mod genome;
mod parse;
mod scale;
mod synth;
mod views;

pub use genome::{
    ChromosomeId, ChromosomeLengths, SubstitutionType, GRCH38_LENGTHS, N_CHROMOSOMES, N_SUBSTITUTIONS,
};
pub use parse::{
    parse_mutations, MutationRecord, ParseOutput, ParseSchema, RejectTally, REJECT_ALT_TRANSCRIPT,
    REJECT_CHROMOSOME, REJECT_MALFORMED, REJECT_MISSING_COHORT, REJECT_MISSING_GENE, REJECT_NOT_SUBSTITUTION,
};
pub use scale::{scale_features, Cohort, CohortDataset, FeatureScale, ScalingParams, CHROM_PRESCALE, STD_EPS};
pub use synth::{
    cluster_load, cluster_spectrum, generate_synthetic_cohorts, synthetic_gene_name, SyntheticCohorts,
    SYNTH_GENES,
};
pub use views::{
    build_chromosome_view, build_gene_view, group_by_cohort, ChromosomeView, GeneView, CHROM_FEATURES,
    GENE_FEATURES, TOP_GENES,
};

use crate::error::Result;

/// Builds both views for every cohort in `records` (cohorts in name order).
pub fn build_cohorts(records: &[MutationRecord], lengths: &ChromosomeLengths) -> Result<Vec<Cohort>> {
    group_by_cohort(records)
        .into_iter()
        .map(|(name, recs)| {
            Ok(Cohort {
                gene: build_gene_view(&recs)?,
                chrom: build_chromosome_view(&recs, lengths)?,
                name,
            })
        })
        .collect()
}
