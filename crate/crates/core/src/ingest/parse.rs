use super::genome::{ChromosomeId, SubstitutionType};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Read;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationRecord {
    pub gene_symbol: String,
    pub chromosome: ChromosomeId,
    pub substitution: SubstitutionType,
    pub cohort: String,
}

/// Column names for the logical fields. Alleles come either from a REF/ALT
/// pair or from a coding-sequence change string such as `c.215C>G`; the pair
/// wins when both are present in the header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseSchema {
    pub gene: String,
    pub chromosome: String,
    pub cohort: String,
    pub ref_allele: Option<String>,
    pub alt_allele: Option<String>,
    pub mutation_cds: Option<String>,
}

impl Default for ParseSchema {
    fn default() -> Self {
        ParseSchema {
            gene: "GENE_SYMBOL".into(),
            chromosome: "CHROMOSOME".into(),
            cohort: "PRIMARY_SITE".into(),
            ref_allele: Some("REF".into()),
            alt_allele: Some("ALT".into()),
            mutation_cds: Some("MUTATION_CDS".into()),
        }
    }
}

pub const REJECT_MALFORMED: &str = "malformed row";
pub const REJECT_MISSING_GENE: &str = "missing gene";
pub const REJECT_MISSING_COHORT: &str = "missing cohort";
pub const REJECT_ALT_TRANSCRIPT: &str = "alternative transcript";
pub const REJECT_NOT_SUBSTITUTION: &str = "not a substitution";
pub const REJECT_CHROMOSOME: &str = "non-canonical chromosome";

/// Per-reason counts of rows that were not turned into records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectTally(pub BTreeMap<String, usize>);

impl RejectTally {
    pub fn add(&mut self, reason: &str) {
        *self.0.entry(reason.to_string()).or_default() += 1;
    }

    pub fn get(&self, reason: &str) -> usize {
        self.0.get(reason).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    /// Order-independent merge of tallies from separate shards.
    pub fn merge(&mut self, other: &RejectTally) {
        for (k, v) in &other.0 {
            *self.0.entry(k.clone()).or_default() += v;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutput {
    pub records: Vec<MutationRecord>,
    pub rejects: RejectTally,
    /// Data rows seen, excluding the header.
    pub total_rows: usize,
}

impl ParseOutput {
    pub fn merge(&mut self, other: ParseOutput) {
        self.records.extend(other.records);
        self.rejects.merge(&other.rejects);
        self.total_rows += other.total_rows;
    }
}

enum Alleles {
    Pair(usize, usize),
    Cds(usize),
}

struct Columns {
    gene: usize,
    chromosome: usize,
    cohort: usize,
    alleles: Alleles,
    width: usize,
}

fn resolve_columns(header: &csv::StringRecord, schema: &ParseSchema) -> Result<Columns> {
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let require = |name: &str| find(name).ok_or_else(|| Error::MissingColumn(name.to_string()));
    let gene = require(&schema.gene)?;
    let chromosome = require(&schema.chromosome)?;
    let cohort = require(&schema.cohort)?;
    let pair = match (&schema.ref_allele, &schema.alt_allele) {
        (Some(r), Some(a)) => find(r).zip(find(a)),
        _ => None,
    };
    let alleles = match (pair, &schema.mutation_cds) {
        (Some((r, a)), _) => Alleles::Pair(r, a),
        (None, Some(cds)) => match find(cds) {
            Some(i) => Alleles::Cds(i),
            None => {
                let missing = match (&schema.ref_allele, &schema.alt_allele) {
                    (Some(r), Some(a)) => format!("{r}/{a} or {cds}"),
                    _ => cds.clone(),
                };
                return Err(Error::MissingColumn(missing));
            }
        },
        (None, None) => {
            let r = schema.ref_allele.clone().unwrap_or_else(|| "REF".into());
            let a = schema.alt_allele.clone().unwrap_or_else(|| "ALT".into());
            let name = if find(&r).is_none() { r } else { a };
            return Err(Error::MissingColumn(name));
        }
    };
    Ok(Columns {
        gene,
        chromosome,
        cohort,
        alleles,
        width: header.len(),
    })
}

/// Extracts the bases from a coding change like `c.215C>G`. Anything that is
/// not a single-base substitution gives `None`.
fn cds_bases(s: &str) -> Option<(char, char)> {
    let b = s.trim().as_bytes();
    let n = b.len();
    if n < 4 || b[n - 2] != b'>' || !b[n - 4].is_ascii_digit() {
        return None;
    }
    Some((b[n - 3] as char, b[n - 1] as char))
}

fn single_base(s: &str) -> Option<char> {
    let s = s.trim();
    let mut chars = s.chars();
    let c = chars.next()?;
    chars.next().is_none().then_some(c)
}

/// Reads a tab-separated mutation export with a header row.
///
/// Every data row ends up either as a record or in the rejects tally, so
/// `records.len() + rejects.total() == total_rows`.
pub fn parse_mutations<R: Read>(source: R, schema: &ParseSchema) -> Result<ParseOutput> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .flexible(true)
        .quoting(false)
        .from_reader(source);
    let header = reader.headers()?.clone();
    let cols = resolve_columns(&header, schema)?;

    let mut out = ParseOutput::default();
    let mut raw = csv::ByteRecord::new();
    loop {
        match reader.read_byte_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
            Err(_) => {
                out.total_rows += 1;
                out.rejects.add(REJECT_MALFORMED);
                continue;
            }
        }
        out.total_rows += 1;
        match classify(&raw, &cols) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejects.add(reason),
        }
    }
    Ok(out)
}

fn classify(raw: &csv::ByteRecord, cols: &Columns) -> std::result::Result<MutationRecord, &'static str> {
    if raw.len() != cols.width {
        return Err(REJECT_MALFORMED);
    }
    let field = |i: usize| std::str::from_utf8(&raw[i]).map_err(|_| REJECT_MALFORMED);
    let gene = field(cols.gene)?.trim();
    if gene.is_empty() {
        return Err(REJECT_MISSING_GENE);
    }
    if gene.contains("_ENST") {
        return Err(REJECT_ALT_TRANSCRIPT);
    }
    let bases = match cols.alleles {
        Alleles::Pair(r, a) => single_base(field(r)?).zip(single_base(field(a)?)),
        Alleles::Cds(c) => cds_bases(field(c)?),
    };
    let substitution = bases
        .and_then(|(r, a)| SubstitutionType::from_bases(r, a))
        .ok_or(REJECT_NOT_SUBSTITUTION)?;
    let chromosome = ChromosomeId::parse(field(cols.chromosome)?).ok_or(REJECT_CHROMOSOME)?;
    let cohort = field(cols.cohort)?.trim();
    if cohort.is_empty() {
        return Err(REJECT_MISSING_COHORT);
    }
    Ok(MutationRecord {
        gene_symbol: gene.to_string(),
        chromosome,
        substitution,
        cohort: cohort.to_string(),
    })
}
