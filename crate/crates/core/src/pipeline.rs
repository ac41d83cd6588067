//! The command implementations behind the CLI. Every command reads and
//! writes directories and leaves a `manifest.json` describing the run.

use crate::baselines::{run_baseline, BaselineConfig, Method};
use crate::contrastive::{embed_cohorts, train, EmbeddingMatrix, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, kmeans, quality_metrics, adjusted_rand_index, EvalConfig};
use crate::ingest::{
    build_cohorts, generate_synthetic_cohorts, parse_mutations, scale_features, ChromosomeLengths,
    ChromosomeView, Cohort, CohortDataset, GeneView, ParseSchema, RejectTally, N_CHROMOSOMES, N_SUBSTITUTIONS,
    TOP_GENES,
};
use crate::report::{
    fmt_f64, read_matrix_csv, read_to_string, write_cluster_report, write_csv, write_json, write_matrix_csv,
    ComparisonRow, ComparisonTable, RunManifest,
};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides the configured root seed.
pub const SEED_ENV: &str = "CONTAB_SEED";
pub const MS_CONTAB: &str = "ms-contab";

/// Methods run by `compare` when none are requested.
pub fn default_methods() -> Vec<String> {
    std::iter::once(MS_CONTAB.to_string())
        .chain(Method::ALL.iter().map(|m| m.name().to_string()))
        .collect()
}

/// Configuration shared by `train`, `evaluate` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Root seed; it replaces the seeds inside `train`, `baseline` and `eval`.
    pub seed: u64,
    pub train: TrainConfig,
    /// Settings for every baseline; `method` is filled in per run.
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub methods: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 42,
            train: TrainConfig::default(),
            baseline: BaselineConfig::default(),
            eval: EvalConfig::default(),
            methods: default_methods(),
        }
    }
}

impl RunConfig {
    /// Parses a config file, or the `config` object of a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let value = match value.get("tool").zip(value.get("config")) {
            Some((_, config)) => config.clone(),
            None => value,
        };
        let cfg: RunConfig = serde_json::from_value(value)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "unsupported config schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            Some(p) => Self::from_json(&read_to_string(p)?)?,
            None => Self::default(),
        };
        cfg.resolved()
    }

    /// Applies `CONTAB_SEED` and propagates the root seed.
    pub fn resolved(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        let seed = self.seed;
        let cfg = self.with_seed(seed);
        cfg.train.validate()?;
        cfg.baseline.validate()?;
        Ok(cfg)
    }

    /// Sets the root seed and every component seed, ignoring the environment.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.train.seed = seed;
        self.baseline.seed = seed;
        self.eval.seed = seed;
        self
    }
}

/// Feature directory contents, loaded back into memory.
#[derive(Debug, Clone)]
pub struct Features {
    pub dataset: CohortDataset,
    /// Planted labels, present for synthetic data.
    pub labels: Option<Vec<usize>>,
}

fn gene_slot_names() -> Vec<String> {
    (1..=TOP_GENES).map(|g| format!("g{g:02}")).collect()
}

/// Writes gene.csv, chrom.csv (scaled), gene_raw.csv, gene_names.csv,
/// chrom_raw.csv (rates) and scaling.json.
pub fn write_features(dir: &Path, dataset: &CohortDataset, rejects: Option<&RejectTally>) -> Result<()> {
    let names = dataset.names();
    let gene_cols = GeneView::feature_names();
    let chrom_cols = ChromosomeView::feature_names();
    write_matrix_csv(&dir.join("gene.csv"), "cohort", &gene_cols, &names, &dataset.scaled_gene)?;
    write_matrix_csv(&dir.join("chrom.csv"), "cohort", &chrom_cols, &names, &dataset.scaled_chrom)?;
    let raw_gene = Tensor::from_rows(&dataset.cohorts.iter().map(|c| c.gene.flat()).collect::<Vec<_>>())?;
    let raw_chrom = Tensor::from_rows(&dataset.cohorts.iter().map(|c| c.chrom.flat()).collect::<Vec<_>>())?;
    write_matrix_csv(&dir.join("gene_raw.csv"), "cohort", &gene_cols, &names, &raw_gene)?;
    write_matrix_csv(&dir.join("chrom_raw.csv"), "cohort", &chrom_cols, &names, &raw_chrom)?;
    let header: Vec<String> = std::iter::once("cohort".to_string()).chain(gene_slot_names()).collect();
    let rows: Vec<Vec<String>> = dataset
        .cohorts
        .iter()
        .map(|c| std::iter::once(c.name.clone()).chain(c.gene.gene_names.iter().cloned()).collect())
        .collect();
    write_csv(&dir.join("gene_names.csv"), &header, &rows)?;
    #[derive(Serialize)]
    struct Sidecar<'a> {
        scaling: &'a crate::ingest::ScalingParams,
        rejects: Option<&'a RejectTally>,
    }
    write_json(
        &dir.join("scaling.json"),
        &Sidecar {
            scaling: &dataset.scaling,
            rejects,
        },
    )
}

fn write_labels(path: &Path, names: &[String], labels: &[usize], column: &str) -> Result<()> {
    let rows: Vec<Vec<String>> = names.iter().zip(labels).map(|(n, l)| vec![n.clone(), l.to_string()]).collect();
    write_csv(path, &["cohort".to_string(), column.to_string()], &rows)
}

fn read_labels(path: &Path, names: &[String]) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 || names.get(i).map(String::as_str) != Some(&rec[0]) {
            return Err(Error::invalid(format!("{}: row {} does not match the cohorts", path.display(), i + 1)));
        }
        out.push(
            rec[1]
                .parse()
                .map_err(|_| Error::invalid(format!("{}: bad label `{}`", path.display(), &rec[1])))?,
        );
    }
    if out.len() != names.len() {
        return Err(Error::invalid(format!("{}: expected {} labels", path.display(), names.len())));
    }
    Ok(out)
}

fn require_columns(path: &Path, got: &[String], want: &[String]) -> Result<()> {
    if got != want {
        let missing = want.iter().find(|w| !got.contains(w)).cloned().unwrap_or_else(|| "order".into());
        return Err(Error::invalid(format!("{}: unexpected columns (first problem: {missing})", path.display())));
    }
    Ok(())
}

/// Rebuilds the dataset from the raw views of a features directory.
pub fn load_features(dir: &Path) -> Result<Features> {
    let gene_path = dir.join("gene_raw.csv");
    let chrom_path = dir.join("chrom_raw.csv");
    let gene = read_matrix_csv(&gene_path)?;
    let chrom = read_matrix_csv(&chrom_path)?;
    require_columns(&gene_path, &gene.columns, &GeneView::feature_names())?;
    require_columns(&chrom_path, &chrom.columns, &ChromosomeView::feature_names())?;
    if gene.rows != chrom.rows {
        return Err(Error::invalid("gene_raw.csv and chrom_raw.csv list different cohorts"));
    }
    let names_path = dir.join("gene_names.csv");
    let text = read_to_string(&names_path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut gene_names = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        gene_names.push(rec.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
    }
    if gene_names.len() != gene.rows.len() || gene_names.iter().any(|g| g.len() != TOP_GENES) {
        return Err(Error::invalid(format!("{}: malformed gene name table", names_path.display())));
    }
    let mut cohorts = Vec::with_capacity(gene.rows.len());
    for (i, name) in gene.rows.iter().enumerate() {
        let counts: Vec<[u64; N_SUBSTITUTIONS]> = gene
            .values
            .row(i)
            .chunks(N_SUBSTITUTIONS)
            .map(|c| {
                let mut row = [0u64; N_SUBSTITUTIONS];
                for (o, &v) in row.iter_mut().zip(c) {
                    if v < 0.0 || v.fract() != 0.0 {
                        return Err(Error::invalid(format!("gene_raw.csv: `{v}` is not a count")));
                    }
                    *o = v as u64;
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let rates: Vec<[f64; N_SUBSTITUTIONS]> = chrom
            .values
            .row(i)
            .chunks(N_SUBSTITUTIONS)
            .map(|c| c.try_into().expect("12 columns"))
            .collect();
        debug_assert_eq!(rates.len(), N_CHROMOSOMES);
        let empty = counts.iter().flatten().all(|&c| c == 0);
        cohorts.push(Cohort {
            name: name.clone(),
            gene: GeneView {
                gene_names: gene_names[i].clone(),
                counts,
                empty,
            },
            chrom: ChromosomeView { rates },
        });
    }
    let dataset = scale_features(cohorts)?;
    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path, &dataset.names())?)
    } else {
        None
    };
    Ok(Features { dataset, labels })
}

fn features_digest(manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    for f in ["gene_raw.csv", "chrom_raw.csv", "gene_names.csv", "labels.csv"] {
        let p = dir.join(f);
        if p.exists() {
            manifest.add_input(f, &fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
    }
    Ok(())
}

fn finish(mut manifest: RunManifest, out: &Path) -> Result<RunManifest> {
    manifest.record_outputs(out)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Options for [`cmd_featurize`].
#[derive(Debug, Clone)]
pub struct FeaturizeArgs<'a> {
    pub input: &'a Path,
    pub schema: Option<&'a Path>,
    pub lengths: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn cmd_featurize(args: &FeaturizeArgs<'_>) -> Result<RunManifest> {
    let schema: ParseSchema = match args.schema {
        Some(p) => serde_json::from_str(&read_to_string(p)?)?,
        None => ParseSchema::default(),
    };
    let lengths = match args.lengths {
        Some(p) => ChromosomeLengths::from_json(&read_to_string(p)?)?,
        None => ChromosomeLengths::default(),
    };
    let bytes = fs::read(args.input).map_err(|e| Error::io(args.input, e))?;
    let parsed = parse_mutations(bytes.as_slice(), &schema)?;
    log::info!(
        "parsed {} rows: {} records, {} rejected",
        parsed.total_rows,
        parsed.records.len(),
        parsed.rejects.total()
    );
    let dataset = scale_features(build_cohorts(&parsed.records, &lengths)?)?;
    write_features(args.out, &dataset, Some(&parsed.rejects))?;
    let config = serde_json::json!({
        "schema": schema,
        "chromosome_lengths": lengths,
        "scaling_recipe": dataset.scaling.recipe,
    });
    let mut manifest = RunManifest::new("featurize", config, 0, dataset.len());
    manifest.add_input("input", &bytes);
    manifest.rejects = Some(parsed.rejects);
    finish(manifest, args.out)
}

/// Writes a planted two-cluster dataset as a features directory.
pub fn cmd_synth(n_cohorts: usize, seed: u64, separation: f64, out: &Path) -> Result<RunManifest> {
    let syn = generate_synthetic_cohorts(n_cohorts, seed, separation)?;
    write_features(out, &syn.dataset, None)?;
    write_labels(&out.join("labels.csv"), &syn.dataset.names(), &syn.labels, "label")?;
    let config = serde_json::json!({
        "n_cohorts": n_cohorts,
        "separation": separation,
        "scaling_recipe": syn.dataset.scaling.recipe,
    });
    finish(RunManifest::new("synth", config, seed, n_cohorts), out)
}

fn embedding_columns(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("e{i:02}")).collect()
}

pub fn write_embeddings(path: &Path, e: &EmbeddingMatrix) -> Result<()> {
    write_matrix_csv(path, "cohort", &embedding_columns(e.dim()), &e.names, &e.vectors)
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let m = read_matrix_csv(path)?;
    let tag = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingMatrix::new(m.rows, m.values, tag)
}

fn write_history(path: &Path, column: &str, history: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = history
        .iter()
        .enumerate()
        .map(|(i, v)| vec![(i + 1).to_string(), fmt_f64(*v)])
        .collect();
    write_csv(path, &["step".to_string(), column.to_string()], &rows)
}

fn config_value(cfg: &RunConfig) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(cfg)?)
}

pub fn cmd_train(features: &Path, config: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let cfg = RunConfig::load(config)?;
    let f = load_features(features)?;
    let model = train(&f.dataset, &cfg.train)?;
    let e = embed_cohorts(&model, &f.dataset, cfg.train.fusion, cfg.train.embed_space)?;
    write_embeddings(&out.join("embeddings.csv"), &e)?;
    write_history(&out.join("loss.csv"), "loss", &model.loss_history)?;
    crate::report::write_atomic(&out.join("model/gene_encoder.json"), model.gene.to_snapshot()?.to_json()?.as_bytes())?;
    crate::report::write_atomic(
        &out.join("model/chrom_encoder.json"),
        model.chrom.to_snapshot()?.to_json()?.as_bytes(),
    )?;
    let mut manifest = RunManifest::new("train", config_value(&cfg)?, cfg.seed, f.dataset.len());
    features_digest(&mut manifest, features)?;
    finish(manifest, out)
}

pub fn cmd_evaluate(
    embeddings: &Path,
    features: Option<&Path>,
    config: Option<&Path>,
    k: Option<usize>,
    out: &Path,
) -> Result<RunManifest> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(k) = k {
        cfg.eval.k = k;
    }
    let e = read_embeddings(embeddings)?;
    if cfg.eval.k > e.len() {
        return Err(Error::invalid(format!("k = {} exceeds the number of cohorts ({})", cfg.eval.k, e.len())));
    }
    let f = features.map(load_features).transpose()?;
    let report = evaluate(
        &e,
        f.as_ref().map(|f| &f.dataset),
        f.as_ref().and_then(|f| f.labels.as_deref()),
        &cfg.eval,
    )?;
    write_cluster_report(out, &report)?;
    let mut manifest = RunManifest::new("evaluate", config_value(&cfg)?, cfg.seed, e.len());
    manifest.add_input(
        "embeddings",
        &fs::read(embeddings).map_err(|err| Error::io(embeddings, err))?,
    );
    if let Some(dir) = features {
        features_digest(&mut manifest, dir)?;
    }
    finish(manifest, out)
}

/// Outcome of one method inside [`cmd_compare`].
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: String,
    pub embedding: EmbeddingMatrix,
    pub labels: Vec<usize>,
    pub history: Vec<f64>,
    pub row: ComparisonRow,
}

/// Runs one method and scores it with k-means in its own output space.
/// Hierarchical clustering keeps its own labels.
pub fn run_method(method: &str, f: &Features, cfg: &RunConfig) -> Result<MethodResult> {
    let (embedding, direct, history) = if method == MS_CONTAB {
        let model = train(&f.dataset, &cfg.train)?;
        let e = embed_cohorts(&model, &f.dataset, cfg.train.fusion, cfg.train.embed_space)?;
        (e, None, model.loss_history)
    } else {
        let m: Method = method.parse()?;
        let bcfg = BaselineConfig {
            method: m,
            ..cfg.baseline.clone()
        };
        let run = run_baseline(&f.dataset, &bcfg)?;
        (run.embedding, run.labels, run.history)
    };
    let labels = match direct {
        Some(l) => l,
        None => {
            let a = kmeans(&embedding.vectors, cfg.eval.k, cfg.eval.n_init, cfg.eval.max_iter, cfg.eval.seed)?;
            if a.degenerate {
                return Err(Error::Numerical(format!("{method}: k-means found fewer than {} clusters", cfg.eval.k)));
            }
            a.labels
        }
    };
    let metrics = quality_metrics(&embedding.vectors, &labels)?;
    let ari = f.labels.as_deref().map(|r| adjusted_rand_index(r, &labels)).transpose()?;
    Ok(MethodResult {
        method: method.to_string(),
        row: ComparisonRow::new(method, &metrics, ari),
        embedding,
        labels,
        history,
    })
}

fn parse_methods(methods: &[String]) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    for m in methods {
        let m = m.trim().to_ascii_lowercase();
        if m != MS_CONTAB {
            m.parse::<Method>()?;
        }
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no methods requested"));
    }
    Ok(out)
}

/// Runs every requested method concurrently and writes the comparison
/// table plus each method's embeddings, labels and training history.
pub fn cmd_compare(
    features: &Path,
    config: Option<&Path>,
    methods: Option<&[String]>,
    out: &Path,
) -> Result<(ComparisonTable, RunManifest)> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(m) = methods {
        cfg.methods = m.to_vec();
    }
    cfg.methods = parse_methods(&cfg.methods)?;
    let f = load_features(features)?;
    if cfg.eval.k > f.dataset.len() {
        return Err(Error::invalid(format!(
            "k = {} exceeds the number of cohorts ({})",
            cfg.eval.k,
            f.dataset.len()
        )));
    }
    let results: Vec<Result<MethodResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .methods
            .iter()
            .map(|m| {
                let (f, cfg) = (&f, &cfg);
                s.spawn(move || run_method(m, f, cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::invalid("method thread panicked"))))
            .collect()
    });
    let results: Vec<MethodResult> = results.into_iter().collect::<Result<_>>()?;
    for r in &results {
        let dir = out.join(&r.method);
        write_embeddings(&dir.join("embeddings.csv"), &r.embedding)?;
        write_labels(&dir.join("labels.csv"), &r.embedding.names, &r.labels, "cluster")?;
        write_history(&dir.join("history.csv"), "value", &r.history)?;
    }
    let table = ComparisonTable::new(cfg.eval.k, results.into_iter().map(|r| r.row).collect());
    table.write(out)?;
    let mut manifest = RunManifest::new("compare", config_value(&cfg)?, cfg.seed, f.dataset.len());
    features_digest(&mut manifest, features)?;
    let manifest = finish(manifest, out)?;
    Ok((table, manifest))
}
