mod common;

use common::fixture;
use contab::error::Error;
use contab::ingest::{
    build_cohorts, generate_synthetic_cohorts, parse_mutations, scale_features, ChromosomeLengths, ParseSchema,
    CHROM_FEATURES, GENE_FEATURES, GRCH38_LENGTHS, REJECT_ALT_TRANSCRIPT, REJECT_NOT_SUBSTITUTION,
};
use proptest::prelude::*;
use std::fs;

// Substitution order: A>C A>G A>T C>A C>G C>T G>A G>C G>T T>A T>C T>G
const C_T: usize = 5;
const G_A: usize = 6;
const G_T: usize = 8;
const T_G: usize = 11;

/// Hand tally of hand_counted.tsv: 9 rows, two alternative-transcript
/// rows and one deletion dropped.
///   TP53 (chr17): C>T ×1, G>A ×2
///   KRAS (chr12): G>T ×2
///   EGFR (chr7):  T>G ×1
#[test]
fn hand_counted_fixture_gives_exact_vectors() {
    let bytes = fs::read(fixture("hand_counted.tsv")).unwrap();
    let parsed = parse_mutations(bytes.as_slice(), &ParseSchema::default()).unwrap();
    assert_eq!(parsed.total_rows, 9);
    assert_eq!(parsed.records.len(), 6);
    assert_eq!(parsed.rejects.get(REJECT_ALT_TRANSCRIPT), 2);
    assert_eq!(parsed.rejects.get(REJECT_NOT_SUBSTITUTION), 1);
    assert_eq!(parsed.rejects.total(), 3);

    let cohorts = build_cohorts(&parsed.records, &ChromosomeLengths::default()).unwrap();
    assert_eq!(cohorts.len(), 1);
    let c = &cohorts[0];
    assert_eq!(c.name, "lung");

    let mut gene = vec![0.0; GENE_FEATURES];
    gene[C_T] = 1.0;
    gene[G_A] = 2.0;
    gene[12 + G_T] = 2.0;
    gene[24 + T_G] = 1.0;
    assert_eq!(c.gene.flat(), gene);
    assert_eq!(&c.gene.gene_names[..4], &["TP53", "KRAS", "EGFR", ""]);

    let mut chrom = vec![0.0; CHROM_FEATURES];
    chrom[16 * 12 + C_T] = 1.0 / 83_257_441.0;
    chrom[16 * 12 + G_A] = 2.0 / 83_257_441.0;
    chrom[11 * 12 + G_T] = 2.0 / 133_275_309.0;
    chrom[6 * 12 + T_G] = 1.0 / 159_345_973.0;
    let got = c.chrom.flat();
    assert_eq!(got.len(), 288);
    for (i, (a, b)) in got.iter().zip(&chrom).enumerate() {
        if *b == 0.0 {
            assert_eq!(*a, 0.0, "index {i}");
        } else {
            assert!(((a - b) / b).abs() <= 1e-15, "index {i}: {a} vs {b}");
        }
    }
    assert_eq!(GRCH38_LENGTHS[16], 83_257_441);
}

#[test]
fn three_cohort_fixture_builds_three_rows() {
    let bytes = fs::read(fixture("three_cohorts.tsv")).unwrap();
    let parsed = parse_mutations(bytes.as_slice(), &ParseSchema::default()).unwrap();
    assert_eq!(parsed.records.len() + parsed.rejects.total(), parsed.total_rows);
    let cohorts = build_cohorts(&parsed.records, &ChromosomeLengths::default()).unwrap();
    let names: Vec<&str> = cohorts.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["breast", "lung", "skin"]);
    let ds = scale_features(cohorts).unwrap();
    assert_eq!(ds.scaled_gene.shape(), (3, 300));
    assert_eq!(ds.scaled_chrom.shape(), (3, 288));
    for j in 0..300 {
        let mean: f64 = (0..3).map(|i| ds.scaled_gene.get(i, j)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
    }
}

#[test]
fn missing_column_is_named() {
    let tsv = "GENE_SYMBOL\tPRIMARY_SITE\tMUTATION_CDS\nTP53\tlung\tc.1A>G\n";
    match parse_mutations(tsv.as_bytes(), &ParseSchema::default()) {
        Err(Error::MissingColumn(c)) => assert_eq!(c, "CHROMOSOME"),
        other => panic!("expected a missing column, got {other:?}"),
    }
}

#[test]
fn ref_alt_columns_and_custom_schema() {
    let tsv = "gene\tchr\tsite\tref\talt\nBRAF\tchr7\tskin\tT\tA\nBRAF\tchr7\tskin\tT\tTA\n";
    let schema: ParseSchema =
        serde_json::from_str(r#"{"gene":"gene","chromosome":"chr","cohort":"site","ref_allele":"ref","alt_allele":"alt","mutation_cds":null}"#)
            .unwrap();
    let parsed = parse_mutations(tsv.as_bytes(), &schema).unwrap();
    assert_eq!(parsed.records.len(), 1);
    assert_eq!(parsed.rejects.get(REJECT_NOT_SUBSTITUTION), 1);
}

#[test]
fn synthetic_generator_is_seeded() {
    let a = generate_synthetic_cohorts(10, 1, 3.0).unwrap();
    let b = generate_synthetic_cohorts(10, 1, 3.0).unwrap();
    let c = generate_synthetic_cohorts(10, 2, 3.0).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.labels, b.labels);
    assert_ne!(a.dataset.scaled_gene, c.dataset.scaled_gene);
    assert_eq!(a.labels.iter().filter(|&&l| l == 0).count(), 5);
}

proptest! {
    #[test]
    fn every_row_is_a_record_or_a_reject(rows in prop::collection::vec(
        (prop::sample::select(vec!["TP53", "KRAS", "X_ENST1", ""]),
         prop::sample::select(vec!["1", "chrX", "MT", "7"]),
         prop::sample::select(vec!["lung", "skin", ""]),
         prop::sample::select(vec!["c.1A>G", "c.5del", "c.7C>T", "c.2G>G"])), 0..40)) {
        let mut tsv = String::from("GENE_SYMBOL\tCHROMOSOME\tPRIMARY_SITE\tMUTATION_CDS\n");
        for (g, c, s, m) in &rows {
            tsv.push_str(&format!("{g}\t{c}\t{s}\t{m}\n"));
        }
        let parsed = parse_mutations(tsv.as_bytes(), &ParseSchema::default()).unwrap();
        prop_assert_eq!(parsed.total_rows, rows.len());
        prop_assert_eq!(parsed.records.len() + parsed.rejects.total(), rows.len());
        let cohorts = build_cohorts(&parsed.records, &ChromosomeLengths::default()).unwrap();
        let total: u64 = cohorts.iter().map(|c| c.gene.total()).sum();
        prop_assert_eq!(total as usize, parsed.records.len());
    }
}
