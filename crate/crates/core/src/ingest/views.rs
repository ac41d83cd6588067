use super::genome::{ChromosomeId, ChromosomeLengths, SubstitutionType, N_CHROMOSOMES, N_SUBSTITUTIONS};
use super::parse::MutationRecord;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

pub const TOP_GENES: usize = 25;
pub const GENE_FEATURES: usize = TOP_GENES * N_SUBSTITUTIONS;
pub const CHROM_FEATURES: usize = N_CHROMOSOMES * N_SUBSTITUTIONS;

/// Substitution counts of the 25 most mutated genes of one cohort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneView {
    /// Descending total count, ties by symbol; padding rows are `""` and last.
    pub gene_names: Vec<String>,
    pub counts: Vec<[u64; N_SUBSTITUTIONS]>,
    /// Set when the cohort had no records at all.
    pub empty: bool,
}

impl GeneView {
    /// Picks the top genes from per-gene tallies.
    pub fn from_tallies(tallies: &BTreeMap<String, [u64; N_SUBSTITUTIONS]>) -> Self {
        let mut genes: Vec<(&String, &[u64; N_SUBSTITUTIONS], u64)> = tallies
            .iter()
            .map(|(g, c)| (g, c, c.iter().sum::<u64>()))
            .filter(|(_, _, total)| *total > 0)
            .collect();
        genes.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(b.0)));
        genes.truncate(TOP_GENES);

        let mut gene_names: Vec<String> = genes.iter().map(|(g, _, _)| (*g).clone()).collect();
        let mut counts: Vec<[u64; N_SUBSTITUTIONS]> = genes.iter().map(|(_, c, _)| **c).collect();
        let empty = gene_names.is_empty();
        gene_names.resize(TOP_GENES, String::new());
        counts.resize(TOP_GENES, [0; N_SUBSTITUTIONS]);
        GeneView { gene_names, counts, empty }
    }

    /// Gene-major, substitution-minor: `flat[i*12 + j] = counts[i][j]`.
    pub fn flat(&self) -> Vec<f64> {
        self.counts.iter().flat_map(|row| row.iter().map(|&c| c as f64)).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Column sums over genes: one count per substitution type.
    pub fn substitution_totals(&self) -> [f64; N_SUBSTITUTIONS] {
        let mut out = [0.0; N_SUBSTITUTIONS];
        for row in &self.counts {
            for (o, &c) in out.iter_mut().zip(row) {
                *o += c as f64;
            }
        }
        out
    }

    /// Non-padding gene symbols.
    pub fn genes(&self) -> impl Iterator<Item = &str> {
        self.gene_names.iter().filter(|g| !g.is_empty()).map(String::as_str)
    }

    /// Feature names for the flattened vector, by rank slot (`g01|A>C` ...).
    pub fn feature_names() -> Vec<String> {
        (1..=TOP_GENES)
            .flat_map(|g| SubstitutionType::ALL.iter().map(move |s| format!("g{g:02}|{s}")))
            .collect()
    }
}

/// Substitution counts per base pair for each chromosome.
#[derive(Debug, Clone, PartialEq)]
pub struct ChromosomeView {
    pub rates: Vec<[f64; N_SUBSTITUTIONS]>,
}

impl ChromosomeView {
    pub fn from_counts(counts: &[[u64; N_SUBSTITUTIONS]; N_CHROMOSOMES], lengths: &ChromosomeLengths) -> Self {
        let rates = ChromosomeId::all()
            .map(|c| {
                let len = lengths.get(c) as f64;
                counts[c.index()].map(|n| n as f64 / len)
            })
            .collect();
        ChromosomeView { rates }
    }

    /// Chromosome-major, substitution-minor.
    pub fn flat(&self) -> Vec<f64> {
        self.rates.iter().flatten().copied().collect()
    }

    /// Per-chromosome sum over substitution types.
    pub fn loads(&self) -> [f64; N_CHROMOSOMES] {
        let mut out = [0.0; N_CHROMOSOMES];
        for (o, row) in out.iter_mut().zip(&self.rates) {
            *o = row.iter().sum();
        }
        out
    }

    pub fn feature_names() -> Vec<String> {
        ChromosomeId::all()
            .flat_map(|c| SubstitutionType::ALL.iter().map(move |s| format!("{c}|{s}")))
            .collect()
    }
}

fn single_cohort(records: &[MutationRecord]) -> Result<()> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.cohort != first.cohort) {
            return Err(Error::invalid(format!(
                "records span cohorts `{}` and `{}`",
                first.cohort, other.cohort
            )));
        }
    }
    Ok(())
}

/// Top-25 gene × 12 substitution counts for one cohort. An empty input
/// yields an all-zero view with [`GeneView::empty`] set.
pub fn build_gene_view(records: &[MutationRecord]) -> Result<GeneView> {
    single_cohort(records)?;
    let mut tallies: BTreeMap<String, [u64; N_SUBSTITUTIONS]> = BTreeMap::new();
    for r in records {
        tallies.entry(r.gene_symbol.clone()).or_default()[r.substitution.index()] += 1;
    }
    let view = GeneView::from_tallies(&tallies);
    if view.empty {
        log::warn!("gene view built from zero records");
    }
    Ok(view)
}

/// Length-normalised substitution counts per chromosome for one cohort.
pub fn build_chromosome_view(records: &[MutationRecord], lengths: &ChromosomeLengths) -> Result<ChromosomeView> {
    single_cohort(records)?;
    let mut counts = [[0u64; N_SUBSTITUTIONS]; N_CHROMOSOMES];
    for r in records {
        counts[r.chromosome.index()][r.substitution.index()] += 1;
    }
    Ok(ChromosomeView::from_counts(&counts, lengths))
}

/// Splits records by cohort, keeping cohorts in name order.
pub fn group_by_cohort(records: &[MutationRecord]) -> BTreeMap<String, Vec<MutationRecord>> {
    let mut groups: BTreeMap<String, Vec<MutationRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.cohort.clone()).or_default().push(r.clone());
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use SubstitutionType::*;

    fn rec(gene: &str, chrom: &str, s: SubstitutionType) -> MutationRecord {
        MutationRecord {
            gene_symbol: gene.into(),
            chromosome: ChromosomeId::parse(chrom).unwrap(),
            substitution: s,
            cohort: "c".into(),
        }
    }

    #[test]
    fn hand_counted_gene_view() {
        let records = vec![
            rec("TP53", "17", CT),
            rec("KRAS", "12", GT),
            rec("TP53", "17", CT),
            rec("TP53", "17", GA),
            rec("KRAS", "12", GT),
            rec("TP53", "17", CT),
        ];
        let view = build_gene_view(&records).unwrap();
        assert_eq!(&view.gene_names[..3], &["TP53", "KRAS", ""]);
        let flat = view.flat();
        assert_eq!(flat.len(), GENE_FEATURES);
        assert_eq!(flat[CT.index()], 3.0);
        assert_eq!(flat[GA.index()], 1.0);
        assert_eq!(flat[12 + GT.index()], 2.0);
        assert_eq!(flat.iter().sum::<f64>(), 6.0);
        assert!(!view.empty);
    }

    #[test]
    fn empty_gene_view_is_flagged() {
        let view = build_gene_view(&[]).unwrap();
        assert!(view.empty);
        assert!(view.flat().iter().all(|&v| v == 0.0));
        assert_eq!(view.flat().len(), 300);
    }

    #[test]
    fn ties_break_by_symbol() {
        let view = build_gene_view(&[rec("BBB", "1", AG), rec("AAA", "1", AG)]).unwrap();
        assert_eq!(&view.gene_names[..2], &["AAA", "BBB"]);
    }

    #[test]
    fn only_top_25_kept() {
        let mut records = Vec::new();
        for g in 0..30 {
            for _ in 0..=g {
                records.push(rec(&format!("G{g:02}"), "1", AC));
            }
        }
        let view = build_gene_view(&records).unwrap();
        assert_eq!(view.gene_names[0], "G29");
        assert_eq!(view.gene_names[24], "G05");
        assert!(view.total() < records.len() as u64);
    }

    #[test]
    fn mixed_cohorts_rejected() {
        let mut b = rec("A", "1", AC);
        b.cohort = "other".into();
        assert!(build_gene_view(&[rec("A", "1", AC), b]).is_err());
    }

    #[test]
    fn chr1_rate() {
        let view = build_chromosome_view(&[rec("A", "1", CT), rec("B", "1", CT)], &ChromosomeLengths::default()).unwrap();
        let r = view.rates[0][CT.index()];
        assert_eq!(r, 2.0 / 248_956_422.0);
        assert!((r - 8.034e-9).abs() < 1e-12);
        assert_eq!(view.flat().iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn chr_y_all_types() {
        let records: Vec<_> = SubstitutionType::ALL.iter().map(|&s| rec("G", "Y", s)).collect();
        let view = build_chromosome_view(&records, &ChromosomeLengths::default()).unwrap();
        let expected = 1.0 / 57_227_415.0;
        for (c, row) in view.rates.iter().enumerate() {
            for &v in row {
                assert_eq!(v, if c == 23 { expected } else { 0.0 });
            }
        }
        let empty = build_chromosome_view(&[], &ChromosomeLengths::default()).unwrap();
        assert_eq!(empty.flat(), vec![0.0; 288]);
    }

    #[test]
    fn feature_names_shape() {
        let g = GeneView::feature_names();
        assert_eq!(g.len(), 300);
        assert_eq!(g[0], "g01|A>C");
        let c = ChromosomeView::feature_names();
        assert_eq!(c.len(), 288);
        assert_eq!(c[18 * 12 + 6], "chr19|G>A");
    }
}
