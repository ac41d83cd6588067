//! File outputs: CSV and JSON writers, the cosine heatmap, run manifests and
//! the method comparison table.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a written value gives back the identical `f64`. Every file is written to a
//! temporary sibling and renamed into place.

use crate::error::{Error, Result};
use crate::eval::{serialize_metric, ClusterReport, QualityMetrics};
use crate::ingest::RejectTally;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

pub const TOOL_NAME: &str = "contab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{v}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json_string(value)?.as_bytes())
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| Error::Invalid(format!("csv buffer: {e}")))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, &csv_bytes(header, rows)?)
}

/// One row per entry of `row_names`, first column `index_name`.
pub fn write_matrix_csv(
    path: &Path,
    index_name: &str,
    col_names: &[String],
    row_names: &[String],
    m: &Tensor,
) -> Result<()> {
    if m.rows() != row_names.len() || m.cols() != col_names.len() {
        return Err(Error::shape(
            "write_matrix_csv",
            format!("{:?} vs {} × {} names", m.shape(), row_names.len(), col_names.len()),
        ));
    }
    let header: Vec<String> = std::iter::once(index_name.to_string()).chain(col_names.iter().cloned()).collect();
    let rows: Vec<Vec<String>> = row_names
        .iter()
        .zip(m.iter_rows())
        .map(|(name, r)| std::iter::once(name.clone()).chain(r.iter().map(|&v| fmt_f64(v))).collect())
        .collect();
    write_csv(path, &header, &rows)
}

/// Labelled numeric matrix read back from a CSV written by
/// [`write_matrix_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    pub index_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<String>,
    pub values: Tensor,
}

pub fn read_matrix_csv(path: &Path) -> Result<NamedMatrix> {
    let text = read_to_string(path)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let Some((index_name, columns)) = header.split_first() else {
        return Err(Error::invalid(format!("{}: empty header", path.display())));
    };
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::invalid(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                line + 1,
                rec.len(),
                header.len()
            )));
        }
        rows.push(rec[0].to_string());
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::invalid(format!("{}: row {}: `{field}` is not a number", path.display(), line + 1))
            })?;
            data.push(v);
        }
    }
    let values = Tensor::from_vec(rows.len(), columns.len(), data)?;
    Ok(NamedMatrix {
        index_name: index_name.clone(),
        columns: columns.to_vec(),
        rows,
        values,
    })
}

/// Diverging ramp over `[-1, 1]`: blue at −1, white at 0, red at +1.
pub fn diverging_color(v: f64) -> String {
    let t = v.clamp(-1.0, 1.0);
    let (from, to, s) = if t < 0.0 {
        ([59.0, 76.0, 192.0], [247.0, 247.0, 247.0], t + 1.0)
    } else {
        ([247.0, 247.0, 247.0], [180.0, 4.0, 38.0], t)
    };
    let c: Vec<u8> = (0..3).map(|i| (from[i] + (to[i] - from[i]) * s).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

const CELL: usize = 12;
const MARGIN: usize = 160;
const LEGEND: usize = 60;

/// Square heatmap of `matrix` with one `<rect class="cell">` per entry.
/// `names` label rows and columns in matrix order; `boundaries` are the
/// indices where a new cluster block starts.
pub fn heatmap_svg(matrix: &Tensor, names: &[String], boundaries: &[usize]) -> Result<String> {
    let n = matrix.rows();
    if matrix.cols() != n || names.len() != n {
        return Err(Error::shape("heatmap_svg", format!("{:?} with {} names", matrix.shape(), names.len())));
    }
    let side = MARGIN + n * CELL;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{side}" viewBox="0 0 {w} {side}" font-family="sans-serif" font-size="9">"#,
        w = side + LEGEND
    );
    let _ = writeln!(s, r#"<g id="cells">"#);
    for i in 0..n {
        for j in 0..n {
            let v = matrix.get(i, j);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{}"><title>{} / {}: {}</title></rect>"#,
                MARGIN + j * CELL,
                MARGIN + i * CELL,
                diverging_color(v),
                xml_escape(&names[i]),
                xml_escape(&names[j]),
                fmt_f64(v)
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="labels">"#);
    for (i, name) in names.iter().enumerate() {
        let c = MARGIN + i * CELL + CELL / 2 + 3;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{c}" text-anchor="end">{}</text>"#,
            MARGIN - 4,
            xml_escape(name)
        );
        let _ = writeln!(
            s,
            r#"<text x="{c}" y="{}" text-anchor="start" transform="rotate(-90 {c} {})">{}</text>"#,
            MARGIN - 4,
            MARGIN - 4,
            xml_escape(name)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="clusters" stroke="black" stroke-width="1.5">"#);
    for &b in boundaries.iter().filter(|&&b| b > 0 && b < n) {
        let p = MARGIN + b * CELL;
        let _ = writeln!(s, r#"<line x1="{MARGIN}" y1="{p}" x2="{side}" y2="{p}"/>"#);
        let _ = writeln!(s, r#"<line x1="{p}" y1="{MARGIN}" x2="{p}" y2="{side}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="legend">"#);
    let steps = 20;
    let x = side + 15;
    let h = (n * CELL).max(steps * 4);
    for k in 0..steps {
        let v = 1.0 - 2.0 * (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="{}" fill="{}"/>"#,
            MARGIN + k * h / steps,
            h / steps + 1,
            diverging_color(v)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">1</text>"#, x + 15, MARGIN + 8);
    let _ = writeln!(s, r#"<text x="{}" y="{}">-1</text>"#, x + 15, MARGIN + h);
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

/// Provenance of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// SHA-256 over the input files, in `inputs` order.
    pub input_digest: String,
    pub inputs: BTreeMap<String, String>,
    /// Fully expanded configuration, defaults included.
    pub config: serde_json::Value,
    pub seed: u64,
    pub created_unix: u64,
    pub cohort_count: usize,
    pub rejects: Option<RejectTally>,
    /// SHA-256 of every file written by the command except the manifest.
    pub outputs: BTreeMap<String, String>,
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time.
pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, cohort_count: usize) -> Self {
        RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: command.into(),
            input_digest: sha256_hex(b""),
            inputs: BTreeMap::new(),
            config,
            seed,
            created_unix: timestamp(),
            cohort_count,
            rejects: None,
            outputs: BTreeMap::new(),
        }
    }

    /// Records input files by label and recomputes the combined digest.
    pub fn add_input(&mut self, label: &str, bytes: &[u8]) {
        self.inputs.insert(label.to_string(), sha256_hex(bytes));
        let mut h = Sha256::new();
        for (k, v) in &self.inputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        self.input_digest = hex::encode(h.finalize());
    }

    /// Hashes every regular file under `dir` except `manifest.json`.
    pub fn record_outputs(&mut self, dir: &Path) -> Result<()> {
        self.outputs.clear();
        for path in list_files(dir)? {
            let rel = path.strip_prefix(dir).unwrap_or(&path).to_string_lossy().replace('\\', "/");
            if rel == "manifest.json" {
                continue;
            }
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            self.outputs.insert(rel, sha256_hex(&bytes));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        Ok(serde_json::from_str(&read_to_string(&path)?)?)
    }
}

fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.file_name().is_some_and(|n| n.to_string_lossy().starts_with('.')) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub method: String,
    pub silhouette: f64,
    pub silhouette_cosine: Option<f64>,
    pub davies_bouldin: f64,
    #[serde(serialize_with = "serialize_metric")]
    pub calinski_harabasz: f64,
    /// Against reference labels, when available.
    pub ari: Option<f64>,
}

impl ComparisonRow {
    pub fn new(method: &str, m: &QualityMetrics, ari: Option<f64>) -> Self {
        ComparisonRow {
            method: method.into(),
            silhouette: m.silhouette,
            silhouette_cosine: m.silhouette_cosine,
            davies_bouldin: m.davies_bouldin,
            calinski_harabasz: m.calinski_harabasz,
            ari,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub method: &'static str,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub calinski_harabasz: f64,
    pub note: &'static str,
}

/// Published MS-ConTab row on the original COSMIC cohorts. Carried as
/// metadata only; it cannot be reproduced without that data.
pub const PAPER_REFERENCE: ReferenceRow = ReferenceRow {
    method: "ms-contab",
    silhouette: 0.561,
    davies_bouldin: 0.655,
    calinski_harabasz: 43.106,
    note: "published values on 43 COSMIC cohorts; reference only",
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub space: String,
    pub k: usize,
    pub rows: Vec<ComparisonRow>,
    pub paper_reference: ReferenceRow,
}

impl ComparisonTable {
    pub fn new(k: usize, rows: Vec<ComparisonRow>) -> Self {
        ComparisonTable {
            space: "original-embeddings".into(),
            k,
            rows,
            paper_reference: PAPER_REFERENCE,
        }
    }

    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Fixed-width summary for terminal output.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        let mut s = format!(
            "{:<14} {:>10} {:>10} {:>12} {:>6}\n",
            "method", "silhouette", "db", "ch", "ari"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<14} {:>10.3} {:>10.3} {:>12.3} {:>6}\n",
                r.method,
                r.silhouette,
                r.davies_bouldin,
                r.calinski_harabasz,
                opt(r.ari)
            ));
        }
        let p = &self.paper_reference;
        s.push_str(&format!(
            "reference {:<4} {:>10.3} {:>10.3} {:>12.3}",
            "", p.silhouette, p.davies_bouldin, p.calinski_harabasz
        ));
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let header: Vec<String> = ["method", "silhouette", "silhouette_cosine", "davies_bouldin", "calinski_harabasz", "ari"]
            .map(String::from)
            .to_vec();
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    fmt_f64(r.silhouette),
                    opt(r.silhouette_cosine),
                    fmt_f64(r.davies_bouldin),
                    fmt_f64(r.calinski_harabasz),
                    opt(r.ari),
                ]
            })
            .collect();
        write_csv(&dir.join("comparison.csv"), &header, &rows)?;
        write_json(&dir.join("comparison.json"), self)
    }
}

/// Writes report.json, the CSV tables and heatmap.svg for one report.
pub fn write_cluster_report(dir: &Path, report: &ClusterReport) -> Result<()> {
    write_atomic(&dir.join("report.json"), format!("{}\n", report.to_json()?).as_bytes())?;

    let label_rows: Vec<Vec<String>> = report
        .names
        .iter()
        .zip(&report.labels)
        .map(|(n, l)| vec![n.clone(), l.to_string()])
        .collect();
    write_csv(&dir.join("labels.csv"), &["cohort".into(), "cluster".into()], &label_rows)?;

    let ordered: Vec<String> = report.cluster_order.iter().map(|&i| report.names[i].clone()).collect();
    write_matrix_csv(&dir.join("cosine_matrix.csv"), "cohort", &ordered, &ordered, &report.cosine_matrix)?;

    let mut boundaries = Vec::new();
    let ordered_labels: Vec<usize> = report.cluster_order.iter().map(|&i| report.labels[i]).collect();
    for i in 1..ordered_labels.len() {
        if ordered_labels[i] != ordered_labels[i - 1] {
            boundaries.push(i);
        }
    }
    write_atomic(
        &dir.join("heatmap.svg"),
        heatmap_svg(&report.cosine_matrix, &ordered, &boundaries)?.as_bytes(),
    )?;

    let neighbor_rows: Vec<Vec<String>> = report
        .neighbors
        .iter()
        .flat_map(|c| {
            c.neighbors.iter().enumerate().map(move |(rank, nb)| {
                vec![c.cohort.clone(), (rank + 1).to_string(), nb.name.clone(), fmt_f64(nb.similarity)]
            })
        })
        .collect();
    write_csv(
        &dir.join("neighbors.csv"),
        &["cohort", "rank", "neighbor", "cosine"].map(String::from),
        &neighbor_rows,
    )?;

    write_matrix_csv(
        &dir.join("pca2.csv"),
        "cohort",
        &["pc1".into(), "pc2".into()],
        &report.names,
        &report.pca,
    )?;

    let cluster_names: Vec<String> = (0..report.k).map(|c| format!("cluster_{c}")).collect();
    if let Some(spectra) = &report.spectra {
        let m = Tensor::from_rows(spectra)?;
        let cols: Vec<String> = crate::ingest::SubstitutionType::ALL.iter().map(|s| s.to_string()).collect();
        write_matrix_csv(&dir.join("spectra.csv"), "cluster", &cols, &cluster_names, &m)?;
    }
    if let Some(load) = &report.chrom_load {
        let m = Tensor::from_rows(load)?;
        let cols: Vec<String> = crate::ingest::ChromosomeId::all().map(|c| c.to_string()).collect();
        write_matrix_csv(&dir.join("chrom_load.csv"), "cluster", &cols, &cluster_names, &m)?;
    }
    if let Some(top) = &report.top_genes {
        for (c, table) in top.tables.iter().enumerate() {
            let rows: Vec<Vec<String>> = table
                .iter()
                .enumerate()
                .map(|(r, g)| vec![(r + 1).to_string(), g.gene.clone(), g.cohorts.to_string()])
                .collect();
            write_csv(
                &dir.join(format!("top_genes_{c}.csv")),
                &["rank", "gene", "cohorts"].map(String::from),
                &rows,
            )?;
        }
    }
    Ok(())
}
