use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Canonical labels: clusters are numbered by first occurrence.
    pub labels: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
    /// Some cluster ended up empty (fewer distinct points than `k`).
    pub degenerate: bool,
}

pub const DEFAULT_N_INIT: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Relabels so that clusters are numbered in order of first appearance.
pub fn canonicalize_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len();
                map.push((l, to));
                to
            }
        })
        .collect()
}

fn kmeans_pp<R: Rng + ?Sized>(x: &Tensor, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut centroids: Vec<Vec<f64>> = vec![x.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // guard against rounding leaving a zero-distance pick
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(x: &Tensor, centroids: &[Vec<f64>], labels: &mut [usize], dists: &mut [f64]) -> bool {
    let mut changed = false;
    for i in 0..x.rows() {
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, cen)| (c, sq_dist(x.row(i), cen)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        if labels[i] != best {
            labels[i] = best;
            changed = true;
        }
        dists[i] = d;
    }
    changed
}

/// Means of the assigned points. Empty clusters are reseeded with the point
/// farthest from its centroid, which is moved into the empty cluster.
fn update(x: &Tensor, k: usize, labels: &mut [usize], dists: &mut [f64], centroids: &mut [Vec<f64>]) -> bool {
    let d = x.cols();
    let mut reseeded = false;
    for c in 0..k {
        if !labels.contains(&c) {
            let far = (0..x.rows())
                .filter(|&i| labels.iter().filter(|&&l| l == labels[i]).count() > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                });
            if let Some(i) = far {
                labels[i] = c;
                dists[i] = 0.0;
                reseeded = true;
            }
        }
    }
    for (c, centroid) in centroids.iter_mut().enumerate() {
        let members: Vec<usize> = (0..x.rows()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for &i in &members {
            mean.iter_mut().zip(x.row(i)).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        *centroid = mean;
    }
    reseeded
}

/// One k-means++ initialisation followed by Lloyd iterations.
pub fn kmeans_single<R: Rng + ?Sized>(x: &Tensor, k: usize, max_iter: usize, rng: &mut R) -> Result<ClusterAssignment> {
    let n = x.rows();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the number of points ({n})")));
    }
    x.ensure_finite("kmeans input")?;
    let mut centroids = kmeans_pp(x, k, rng);
    let mut labels = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    assign(x, &centroids, &mut labels, &mut dists);
    for _ in 0..max_iter {
        let reseeded = update(x, k, &mut labels, &mut dists, &mut centroids);
        let changed = assign(x, &centroids, &mut labels, &mut dists);
        if !changed && !reseeded {
            break;
        }
    }
    let inertia: f64 = (0..n).map(|i| sq_dist(x.row(i), &centroids[labels[i]])).sum();
    let distinct = {
        let mut l = labels.clone();
        l.sort_unstable();
        l.dedup();
        l.len()
    };
    Ok(ClusterAssignment {
        labels: canonicalize_labels(&labels),
        k,
        inertia,
        degenerate: distinct < k,
    })
}

/// Best of `n_init` seeded restarts by inertia; earlier restarts win ties.
pub fn kmeans(x: &Tensor, k: usize, n_init: usize, max_iter: usize, seed: u64) -> Result<ClusterAssignment> {
    let mut best: Option<ClusterAssignment> = None;
    for r in 0..n_init.max(1) {
        let mut stream = rng::stream(seed, &format!("kmeans/init-{r}"));
        let run = kmeans_single(x, k, max_iter, &mut stream)?;
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Tensor {
        Tensor::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap()
    }

    #[test]
    fn line_fixture() {
        let a = kmeans(&line(), 2, DEFAULT_N_INIT, DEFAULT_MAX_ITER, 42).unwrap();
        assert_eq!(a.labels, vec![0, 0, 1, 1]);
        assert!((a.inertia - 0.01).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_inertia_is_total_scatter() {
        let x = Tensor::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.0, 0.0], [4.0, 5.0]]).unwrap();
        let a = kmeans(&x, 1, 3, 100, 1).unwrap();
        let mean = [2.0, 1.5];
        let scatter: f64 = x.iter_rows().map(|r| sq_dist(r, &mean)).sum();
        assert!((a.inertia - scatter).abs() < 1e-12);
        assert_eq!(a.labels, vec![0; 4]);
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let x = Tensor::from_rows(&[[1.0], [5.0], [2.0], [9.0], [-3.0]]).unwrap();
        let a = kmeans(&x, 5, 10, 300, 7).unwrap();
        assert_eq!(a.inertia, 0.0);
        assert_eq!(a.labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn k_greater_than_n_fails() {
        assert!(kmeans(&line(), 5, 10, 300, 1).is_err());
        assert!(kmeans(&line(), 0, 10, 300, 1).is_err());
    }

    #[test]
    fn duplicates_flag_degenerate() {
        let x = Tensor::from_rows(&[[1.0], [1.0], [1.0]]).unwrap();
        let a = kmeans(&x, 2, 2, 50, 1).unwrap();
        assert_eq!(a.inertia, 0.0);
        assert!(!a.labels.is_empty());
    }

    #[test]
    fn canonical_labels() {
        assert_eq!(canonicalize_labels(&[2, 2, 0, 1, 0]), vec![0, 0, 1, 2, 1]);
    }
}
