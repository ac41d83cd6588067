//! Internal cluster-quality indices and the adjusted Rand index.

use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`.
    Cosine,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_labels(x: &Tensor, labels: &[usize]) -> Result<usize> {
    if labels.len() != x.rows() {
        return Err(Error::shape(
            "cluster metric",
            format!("{} labels for {} points", labels.len(), x.rows()),
        ));
    }
    Ok(labels.iter().max().map_or(0, |&m| m + 1))
}

fn cluster_sizes(labels: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    sizes
}

fn require_two_clusters(sizes: &[usize]) -> Result<()> {
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::invalid("cluster metric needs at least 2 non-empty clusters"));
    }
    Ok(())
}

/// Per-cluster centroids. Empty clusters give `None`.
pub fn centroids(x: &Tensor, labels: &[usize], k: usize) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; x.cols()]; k];
    let sizes = cluster_sizes(labels, k);
    for (i, &l) in labels.iter().enumerate() {
        sums[l].iter_mut().zip(x.row(i)).for_each(|(s, &v)| *s += v);
    }
    sums.into_iter()
        .zip(sizes)
        .map(|(s, n)| (n > 0).then(|| s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// Mean silhouette with Euclidean distance.
pub fn silhouette(x: &Tensor, labels: &[usize]) -> Result<f64> {
    silhouette_with(x, labels, Distance::Euclidean)
}

/// Mean over points of `(b − a) / max(a, b)`. Points in singleton clusters
/// score 0, and so does a point with `a = b = 0`.
pub fn silhouette_with(x: &Tensor, labels: &[usize], distance: Distance) -> Result<f64> {
    let k = check_labels(x, labels)?;
    let sizes = cluster_sizes(labels, k);
    require_two_clusters(&sizes)?;
    let n = x.rows();
    let dist: Box<dyn Fn(usize, usize) -> f64> = match distance {
        Distance::Euclidean => Box::new(|i, j| euclid(x.row(i), x.row(j))),
        Distance::Cosine => {
            let norms: Vec<f64> = (0..n).map(|i| norm(x.row(i))).collect();
            if let Some(row) = norms.iter().position(|&v| v == 0.0) {
                return Err(Error::ZeroNorm { row });
            }
            Box::new(move |i, j| (1.0 - dot(x.row(i), x.row(j)) / (norms[i] * norms[j])).max(0.0))
        }
    };
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(i, j);
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// `(1/k) Σ_i max_{j≠i} (s_i + s_j) / d(c_i, c_j)` with `s_i` the mean
/// distance of cluster `i`'s points to its centroid.
pub fn davies_bouldin(x: &Tensor, labels: &[usize]) -> Result<f64> {
    let k = check_labels(x, labels)?;
    let sizes = cluster_sizes(labels, k);
    require_two_clusters(&sizes)?;
    if sizes.contains(&0) {
        return Err(Error::invalid("davies-bouldin needs every cluster non-empty"));
    }
    let cents: Vec<Vec<f64>> = centroids(x, labels, k).into_iter().map(|c| c.expect("non-empty")).collect();
    let mut scatter = vec![0.0; k];
    for (i, &l) in labels.iter().enumerate() {
        scatter[l] += euclid(x.row(i), &cents[l]);
    }
    for (s, &n) in scatter.iter_mut().zip(&sizes) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let d = euclid(&cents[i], &cents[j]);
            if d == 0.0 {
                return Err(Error::Numerical("degenerate centroids".into()));
            }
            worst = worst.max((scatter[i] + scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// `[B/(k−1)] / [W/(n−k)]`; `+∞` when the within-cluster scatter is zero.
pub fn calinski_harabasz(x: &Tensor, labels: &[usize]) -> Result<f64> {
    let k = check_labels(x, labels)?;
    let sizes = cluster_sizes(labels, k);
    require_two_clusters(&sizes)?;
    if sizes.contains(&0) {
        return Err(Error::invalid("calinski-harabasz needs every cluster non-empty"));
    }
    let n = x.rows();
    if n <= k {
        return Err(Error::invalid("calinski-harabasz needs more points than clusters"));
    }
    let cents: Vec<Vec<f64>> = centroids(x, labels, k).into_iter().map(|c| c.expect("non-empty")).collect();
    let overall: Vec<f64> = (0..x.cols())
        .map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let between: f64 = cents
        .iter()
        .zip(&sizes)
        .map(|(c, &m)| m as f64 * euclid(c, &overall).powi(2))
        .sum();
    let within: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| euclid(x.row(i), &cents[l]).powi(2))
        .sum();
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((between / (k - 1) as f64) / (within / (n - k) as f64))
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index. Label values are arbitrary.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("adjusted_rand_index", format!("{} vs {} labels", a.len(), b.len())));
    }
    let ka = a.iter().max().map_or(0, |&m| m + 1);
    let kb = b.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let index: f64 = table.iter().flatten().map(|&c| choose2(c)).sum();
    let rows: f64 = table.iter().map(|r| choose2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2(table.iter().map(|r| r[j]).sum())).sum();
    let total = choose2(a.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        // both labelings trivial in the same way, e.g. both constant
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}
