use crate::error::{Error, Result};
use crate::eval::canonicalize_labels;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct WardFit {
    pub labels: Vec<usize>,
    /// Ward merge costs of the full dendrogram, in merge order.
    pub heights: Vec<f64>,
}

/// Agglomerative Ward clustering cut at `k` clusters.
///
/// Dissimilarities start as squared Euclidean distances and are updated
/// with Lance–Williams:
/// `d(k, i∪j) = [(n_i+n_k) d(k,i) + (n_j+n_k) d(k,j) − n_k d(i,j)] / (n_i+n_j+n_k)`.
/// Ties go to the pair with the smallest indices.
pub fn hierarchical_labels(x: &Tensor, k: usize) -> Result<WardFit> {
    let n = x.rows();
    if k < 1 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the number of points ({n})")));
    }
    x.ensure_finite("hierarchical input")?;
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let sq: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i][j] = sq;
            d[j][i] = sq;
        }
    }
    let mut size = vec![1usize; n];
    let mut active: Vec<bool> = vec![true; n];
    let mut cluster_of: Vec<usize> = (0..n).collect();
    let mut heights = Vec::with_capacity(n.saturating_sub(1));
    let mut labels_at_k = (k == n).then(|| cluster_of.clone());
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if best.is_none_or(|(b, _, _)| d[i][j] < b) {
                    best = Some((d[i][j], i, j));
                }
            }
        }
        let (h, a, b) = best.expect("two active clusters");
        heights.push(h);
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for c in (0..n).filter(|&c| active[c] && c != a && c != b) {
            let nc = size[c] as f64;
            let v = ((na + nc) * d[c][a] + (nb + nc) * d[c][b] - nc * d[a][b]) / (na + nb + nc);
            d[c][a] = v;
            d[a][c] = v;
        }
        active[b] = false;
        size[a] += size[b];
        cluster_of.iter_mut().filter(|c| **c == b).for_each(|c| *c = a);
        if n - (step + 1) == k {
            labels_at_k = Some(cluster_of.clone());
        }
    }
    Ok(WardFit {
        labels: canonicalize_labels(&labels_at_k.expect("cut reached")),
        heights,
    })
}
