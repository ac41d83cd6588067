use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// One of the 12 single-nucleotide substitutions, ordered alphabetically by
/// reference base then alternate base. That order fixes every flattened
/// feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubstitutionType {
    AC,
    AG,
    AT,
    CA,
    CG,
    CT,
    GA,
    GC,
    GT,
    TA,
    TC,
    TG,
}

pub const N_SUBSTITUTIONS: usize = 12;
pub const N_CHROMOSOMES: usize = 24;

impl SubstitutionType {
    pub const ALL: [SubstitutionType; N_SUBSTITUTIONS] = [
        Self::AC,
        Self::AG,
        Self::AT,
        Self::CA,
        Self::CG,
        Self::CT,
        Self::GA,
        Self::GC,
        Self::GT,
        Self::TA,
        Self::TC,
        Self::TG,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// `None` unless both bases are one of `ACGT` and they differ.
    pub fn from_bases(reference: char, alternate: char) -> Option<Self> {
        let base = |c: char| match c.to_ascii_uppercase() {
            'A' => Some(0usize),
            'C' => Some(1),
            'G' => Some(2),
            'T' => Some(3),
            _ => None,
        };
        let (r, a) = (base(reference)?, base(alternate)?);
        if r == a {
            return None;
        }
        // three alternates per reference, skipping the reference itself
        let alt_slot = if a > r { a - 1 } else { a };
        Some(Self::ALL[r * 3 + alt_slot])
    }

    pub fn label(self) -> &'static str {
        const LABELS: [&str; N_SUBSTITUTIONS] = [
            "A>C", "A>G", "A>T", "C>A", "C>G", "C>T", "G>A", "G>C", "G>T", "T>A", "T>C", "T>G",
        ];
        LABELS[self.index()]
    }
}

impl fmt::Display for SubstitutionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Canonical chromosome: 1–22, X, Y (index 0–23).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChromosomeId(u8);

impl ChromosomeId {
    pub fn all() -> impl Iterator<Item = ChromosomeId> {
        (0..N_CHROMOSOMES as u8).map(ChromosomeId)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < N_CHROMOSOMES).then_some(ChromosomeId(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Accepts `7`, `chr7`, `X`, `chrY`, and the numeric codes `23` (X) and
    /// `24` (Y). Mitochondrial and unplaced contigs are rejected.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let s = s
            .strip_prefix("chr")
            .or_else(|| s.strip_prefix("CHR"))
            .or_else(|| s.strip_prefix("Chr"))
            .unwrap_or(s);
        match s {
            "X" | "x" => Some(ChromosomeId(22)),
            "Y" | "y" => Some(ChromosomeId(23)),
            _ => {
                if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.starts_with('0') {
                    return None;
                }
                let n: usize = s.parse().ok()?;
                (1..=24).contains(&n).then(|| ChromosomeId(n as u8 - 1))
            }
        }
    }

    pub fn label(self) -> String {
        match self.0 {
            22 => "X".into(),
            23 => "Y".into(),
            n => (n + 1).to_string(),
        }
    }
}

impl fmt::Display for ChromosomeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chr{}", self.label())
    }
}

/// GRCh38 primary-assembly lengths in base pairs, chr1..chr22, chrX, chrY.
pub const GRCH38_LENGTHS: [u64; N_CHROMOSOMES] = [
    248_956_422,
    242_193_529,
    198_295_559,
    190_214_555,
    181_538_259,
    170_805_979,
    159_345_973,
    145_138_636,
    138_394_717,
    133_797_422,
    135_086_622,
    133_275_309,
    114_364_328,
    107_043_718,
    101_991_189,
    90_338_345,
    83_257_441,
    80_373_285,
    58_617_616,
    64_444_167,
    46_709_983,
    50_818_468,
    156_040_895,
    57_227_415,
];

/// Length table used to normalise chromosome counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, u64>", into = "BTreeMap<String, u64>")]
pub struct ChromosomeLengths([u64; N_CHROMOSOMES]);

impl Default for ChromosomeLengths {
    fn default() -> Self {
        ChromosomeLengths(GRCH38_LENGTHS)
    }
}

impl ChromosomeLengths {
    pub fn new(lengths: [u64; N_CHROMOSOMES]) -> Result<Self> {
        if let Some(i) = lengths.iter().position(|&l| l == 0) {
            return Err(Error::invalid(format!(
                "chromosome {} has zero length",
                ChromosomeId(i as u8)
            )));
        }
        Ok(ChromosomeLengths(lengths))
    }

    pub fn get(&self, c: ChromosomeId) -> u64 {
        self.0[c.index()]
    }

    /// Loads a JSON object mapping chromosome names (`"chr1"`, `"X"`, ...)
    /// to lengths. All 24 chromosomes must be present.
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl TryFrom<BTreeMap<String, u64>> for ChromosomeLengths {
    type Error = Error;

    fn try_from(map: BTreeMap<String, u64>) -> Result<Self> {
        let mut lengths = [0u64; N_CHROMOSOMES];
        let mut seen = [false; N_CHROMOSOMES];
        for (name, len) in map {
            let c = ChromosomeId::parse(&name)
                .ok_or_else(|| Error::invalid(format!("unknown chromosome `{name}` in length table")))?;
            lengths[c.index()] = len;
            seen[c.index()] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "length table is missing {}",
                ChromosomeId(i as u8)
            )));
        }
        ChromosomeLengths::new(lengths)
    }
}

impl From<ChromosomeLengths> for BTreeMap<String, u64> {
    fn from(l: ChromosomeLengths) -> Self {
        ChromosomeId::all().map(|c| (c.to_string(), l.get(c))).collect()
    }
}
