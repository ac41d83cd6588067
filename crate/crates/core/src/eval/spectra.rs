//! Per-cluster summaries of the raw (unscaled) views.

use crate::error::{Error, Result};
use crate::ingest::{CohortDataset, N_CHROMOSOMES, N_SUBSTITUTIONS};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

fn cluster_members(dataset: &CohortDataset, labels: &[usize], k: usize) -> Result<Vec<Vec<usize>>> {
    if labels.len() != dataset.len() {
        return Err(Error::shape(
            "labels",
            format!("{} labels for {} cohorts", labels.len(), dataset.len()),
        ));
    }
    let members: Vec<Vec<usize>> = (0..k)
        .map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect())
        .collect();
    if let Some(c) = members.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("cluster {c} is empty")));
    }
    Ok(members)
}

fn n_clusters(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |&m| m + 1)
}

fn cluster_means<const D: usize>(members: &[Vec<usize>], row: impl Fn(usize) -> [f64; D]) -> Vec<[f64; D]> {
    members
        .iter()
        .map(|m| {
            let mut out = [0.0; D];
            for &i in m {
                out.iter_mut().zip(row(i)).for_each(|(o, v)| *o += v);
            }
            out.iter_mut().for_each(|o| *o /= m.len() as f64);
            out
        })
        .collect()
}

/// Mean per-substitution count (summed over a cohort's top genes).
pub fn cluster_spectra(dataset: &CohortDataset, labels: &[usize]) -> Result<Vec<[f64; N_SUBSTITUTIONS]>> {
    let members = cluster_members(dataset, labels, n_clusters(labels))?;
    Ok(cluster_means(&members, |i| dataset.cohorts[i].gene.substitution_totals()))
}

/// Mean length-normalised load per chromosome.
pub fn cluster_chrom_load(dataset: &CohortDataset, labels: &[usize]) -> Result<Vec<[f64; N_CHROMOSOMES]>> {
    let members = cluster_members(dataset, labels, n_clusters(labels))?;
    Ok(cluster_means(&members, |i| dataset.cohorts[i].chrom.loads()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneCount {
    pub gene: String,
    /// Cohorts of the cluster with this gene in their top-25 list.
    pub cohorts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub shared: usize,
    pub unique_1: usize,
    pub unique_2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopGenes {
    pub tables: Vec<Vec<GeneCount>>,
    /// Only defined for two clusters.
    pub overlap: Option<Overlap>,
}

pub fn top_genes_by_cluster(dataset: &CohortDataset, labels: &[usize], top_n: usize) -> Result<TopGenes> {
    let members = cluster_members(dataset, labels, n_clusters(labels))?;
    let mut tables = Vec::with_capacity(members.len());
    let mut sets: Vec<BTreeSet<String>> = Vec::with_capacity(members.len());
    for m in &members {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in m {
            for g in dataset.cohorts[i].gene.genes() {
                *counts.entry(g).or_default() += 1;
            }
        }
        sets.push(counts.keys().map(|g| g.to_string()).collect());
        let mut ranked: Vec<GeneCount> = counts
            .into_iter()
            .map(|(gene, cohorts)| GeneCount {
                gene: gene.to_string(),
                cohorts,
            })
            .collect();
        // BTreeMap order is lexicographic, so a stable sort keeps ties in name order
        ranked.sort_by(|a, b| b.cohorts.cmp(&a.cohorts));
        ranked.truncate(top_n);
        tables.push(ranked);
    }
    let overlap = (sets.len() == 2).then(|| Overlap {
        shared: sets[0].intersection(&sets[1]).count(),
        unique_1: sets[0].difference(&sets[1]).count(),
        unique_2: sets[1].difference(&sets[0]).count(),
    });
    Ok(TopGenes { tables, overlap })
}
