//! Cosine-similarity structure of an embedding.

use crate::contrastive::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::tensor::{cosine_matrix, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    /// Mean off-diagonal cosine inside each cluster; `None` for singletons.
    pub within: Vec<Option<f64>>,
    /// Mean cosine over all cross-cluster pairs; `None` with one cluster.
    pub between: Option<f64>,
    /// Cohort with the highest mean cosine to the rest of its cluster.
    pub prototypes: Vec<String>,
    /// Row and column order of `ordered_matrix`: cluster by cluster,
    /// dataset order inside a cluster.
    pub order: Vec<usize>,
    #[serde(skip)]
    pub ordered_matrix: Tensor,
}

/// Pairwise cosine similarities with an exact unit diagonal.
pub fn self_cosine(x: &Tensor) -> Result<Tensor> {
    let mut s = cosine_matrix(x, x)?;
    for i in 0..x.rows() {
        s.set(i, i, 1.0);
    }
    Ok(s)
}

fn validate_labels(n: usize, labels: &[usize]) -> Result<usize> {
    if labels.len() != n {
        return Err(Error::shape("labels", format!("{} labels for {n} cohorts", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |&m| m + 1);
    for c in 0..k {
        if !labels.contains(&c) {
            return Err(Error::invalid(format!("cluster {c} is empty")));
        }
    }
    Ok(k)
}

pub fn similarity_stats(e: &EmbeddingMatrix, labels: &[usize]) -> Result<SimilarityStats> {
    let n = e.len();
    let k = validate_labels(n, labels)?;
    let s = self_cosine(&e.vectors)?;
    let members: Vec<Vec<usize>> = (0..k).map(|c| (0..n).filter(|&i| labels[i] == c).collect()).collect();

    let mut within = Vec::with_capacity(k);
    let mut prototypes = Vec::with_capacity(k);
    for m in &members {
        if m.len() < 2 {
            within.push(None);
            prototypes.push(e.names[m[0]].clone());
            continue;
        }
        let mut total = 0.0;
        let mut best: Option<(f64, usize)> = None;
        for &i in m {
            let row: f64 = m.iter().filter(|&&j| j != i).map(|&j| s.get(i, j)).sum();
            total += row;
            let mean = row / (m.len() - 1) as f64;
            let better = match best {
                None => true,
                Some((b, bi)) => mean > b || (mean == b && e.names[i] < e.names[bi]),
            };
            if better {
                best = Some((mean, i));
            }
        }
        within.push(Some(total / (m.len() * (m.len() - 1)) as f64));
        prototypes.push(e.names[best.expect("non-empty").1].clone());
    }

    let (mut cross, mut pairs) = (0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            if labels[i] != labels[j] {
                cross += s.get(i, j);
                pairs += 1;
            }
        }
    }
    let between = (pairs > 0).then(|| cross / pairs as f64);

    let order: Vec<usize> = members.concat();
    let mut ordered_matrix = Tensor::zeros(n, n);
    for (a, &i) in order.iter().enumerate() {
        for (b, &j) in order.iter().enumerate() {
            ordered_matrix.set(a, b, s.get(i, j));
        }
    }
    Ok(SimilarityStats {
        within,
        between,
        prototypes,
        order,
        ordered_matrix,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub name: String,
    pub similarity: f64,
}

/// The `top_k` most cosine-similar other cohorts of every cohort. Ties go
/// to the lexicographically smaller name.
pub fn nearest_neighbors(e: &EmbeddingMatrix, top_k: usize) -> Result<Vec<Vec<Neighbor>>> {
    let n = e.len();
    if top_k >= n {
        return Err(Error::invalid(format!("top_k = {top_k} needs more than {n} cohorts")));
    }
    let s = self_cosine(&e.vectors)?;
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                s.get(i, b)
                    .total_cmp(&s.get(i, a))
                    .then_with(|| e.names[a].cmp(&e.names[b]))
            });
            others
                .into_iter()
                .take(top_k)
                .map(|j| Neighbor {
                    name: e.names[j].clone(),
                    similarity: s.get(i, j),
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(rows: &[[f64; 2]]) -> EmbeddingMatrix {
        let names = (0..rows.len()).map(|i| format!("c{i}")).collect();
        EmbeddingMatrix::new(names, Tensor::from_rows(rows).unwrap(), "t").unwrap()
    }

    #[test]
    fn identical_embeddings() {
        let e = emb(&[[1.0, 2.0]; 4]);
        let st = similarity_stats(&e, &[0, 1, 0, 1]).unwrap();
        for w in st.within {
            assert!((w.unwrap() - 1.0).abs() < 1e-15);
        }
        assert!((st.between.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_blocks() {
        let e = emb(&[[1.0, 0.0], [0.0, 2.0], [3.0, 0.0], [0.0, 1.0]]);
        let st = similarity_stats(&e, &[0, 1, 0, 1]).unwrap();
        assert_eq!(st.within, vec![Some(1.0), Some(1.0)]);
        assert_eq!(st.between, Some(0.0));
        assert_eq!(st.order, vec![0, 2, 1, 3]);
        assert_eq!(st.prototypes, vec!["c0", "c1"]);
        assert_eq!(st.ordered_matrix.get(0, 1), 1.0);
        assert_eq!(st.ordered_matrix.get(1, 2), 0.0);
    }

    #[test]
    fn singleton_within_is_none() {
        let e = emb(&[[1.0, 0.0], [0.0, 2.0], [0.1, 1.0]]);
        let st = similarity_stats(&e, &[0, 1, 1]).unwrap();
        assert_eq!(st.within[0], None);
        assert_eq!(st.prototypes[0], "c0");
    }

    #[test]
    fn neighbor_ties_are_lexicographic() {
        let names = vec!["b".to_string(), "a".to_string(), "c".to_string()];
        let x = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let e = EmbeddingMatrix::new(names, x, "t").unwrap();
        let nn = nearest_neighbors(&e, 2).unwrap();
        let got: Vec<&str> = nn[0].iter().map(|n| n.name.as_str()).collect();
        assert_eq!(got, vec!["a", "c"]);
        let got: Vec<&str> = nn[1].iter().map(|n| n.name.as_str()).collect();
        assert_eq!(got, vec!["b", "c"]);
        assert!(nn.iter().flatten().all(|n| n.similarity == 0.0));
    }

    #[test]
    fn duplicate_is_first_neighbor() {
        let e = emb(&[[1.0, 0.3], [0.2, 1.0], [1.0, 0.3], [-1.0, 0.5]]);
        let nn = nearest_neighbors(&e, 3).unwrap();
        assert_eq!(nn[0][0].name, "c2");
        assert!((nn[0][0].similarity - 1.0).abs() < 1e-12);
        assert!(nearest_neighbors(&e, 4).is_err());
    }
}
