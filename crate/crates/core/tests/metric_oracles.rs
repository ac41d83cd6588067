mod common;

use common::{dist, partitions, random_tensor, sq_dist, sse};
use contab::eval::{
    adjusted_rand_index, calinski_harabasz, davies_bouldin, kmeans, pca_2d, silhouette, silhouette_with, Distance,
};
use contab::tensor::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};

fn members(labels: &[usize], c: usize) -> Vec<usize> {
    (0..labels.len()).filter(|&i| labels[i] == c).collect()
}

fn mean_of(x: &Tensor, idx: &[usize]) -> Vec<f64> {
    (0..x.cols()).map(|j| idx.iter().map(|&i| x.get(i, j)).sum::<f64>() / idx.len() as f64).collect()
}

fn n_clusters(labels: &[usize]) -> usize {
    labels.iter().max().unwrap() + 1
}

fn silhouette_reference(x: &Tensor, labels: &[usize], d: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let k = n_clusters(labels);
    let n = x.rows();
    let mut total = 0.0;
    for i in 0..n {
        let own = members(labels, labels[i]);
        if own.len() == 1 {
            continue;
        }
        let a = own.iter().filter(|&&j| j != i).map(|&j| d(x.row(i), x.row(j))).sum::<f64>() / (own.len() - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i])
            .map(|c| {
                let m = members(labels, c);
                m.iter().map(|&j| d(x.row(i), x.row(j))).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        if a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

fn db_reference(x: &Tensor, labels: &[usize]) -> f64 {
    let k = n_clusters(labels);
    let cents: Vec<Vec<f64>> = (0..k).map(|c| mean_of(x, &members(labels, c))).collect();
    let scatter: Vec<f64> = (0..k)
        .map(|c| {
            let m = members(labels, c);
            m.iter().map(|&i| dist(x.row(i), &cents[c])).sum::<f64>() / m.len() as f64
        })
        .collect();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (scatter[i] + scatter[j]) / dist(&cents[i], &cents[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

fn ch_reference(x: &Tensor, labels: &[usize]) -> f64 {
    let (n, k) = (x.rows(), n_clusters(labels));
    let all: Vec<usize> = (0..n).collect();
    let grand = mean_of(x, &all);
    let between: f64 = (0..k)
        .map(|c| {
            let m = members(labels, c);
            m.len() as f64 * sq_dist(&mean_of(x, &m), &grand)
        })
        .sum();
    let within = sse(x, labels);
    (between / (k - 1) as f64) / (within / (n - k) as f64)
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

#[test]
fn line_fixture_matches_direct_evaluation() {
    let x = Tensor::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap();
    let labels = [0, 0, 1, 1];
    let s = silhouette(&x, &labels).unwrap();
    assert!((s - silhouette_reference(&x, &labels, dist)).abs() < 1e-6);
    let per_point = ((10.05 - 0.1) / 10.05 + (9.95 - 0.1) / 9.95) / 2.0;
    assert!((s - per_point).abs() < 1e-12);
    assert!((davies_bouldin(&x, &labels).unwrap() - 0.01).abs() < 1e-6);
    assert!((calinski_harabasz(&x, &labels).unwrap() - 20000.0).abs() < 1e-6);
}

#[test]
fn indices_match_reference_on_random_partitions() {
    for seed in 0..20u64 {
        let n = 6 + (seed as usize % 7);
        let x = random_tensor(n, 3, seed, "metric-oracle");
        let k = 2 + (seed as usize % 3);
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let s = silhouette(&x, &labels).unwrap();
        assert!((s - silhouette_reference(&x, &labels, dist)).abs() < 1e-12, "seed {seed}");
        let sc = silhouette_with(&x, &labels, Distance::Cosine).unwrap();
        assert!((sc - silhouette_reference(&x, &labels, cosine_distance)).abs() < 1e-12, "seed {seed}");
        let db = davies_bouldin(&x, &labels).unwrap();
        assert!((db - db_reference(&x, &labels)).abs() < 1e-10 * db.max(1.0), "seed {seed}");
        let ch = calinski_harabasz(&x, &labels).unwrap();
        assert!((ch - ch_reference(&x, &labels)).abs() < 1e-10 * ch.max(1.0), "seed {seed}");
    }
}

#[test]
fn singleton_clusters_score_zero_silhouette() {
    let x = Tensor::from_rows(&[[0.0], [1.0], [1.2], [5.0]]).unwrap();
    let labels = [0, 1, 1, 2];
    let s = silhouette(&x, &labels).unwrap();
    assert!((s - silhouette_reference(&x, &labels, dist)).abs() < 1e-12);
}

#[test]
fn zero_within_scatter_gives_infinite_ch() {
    let x = Tensor::from_rows(&[[1.0, 1.0], [1.0, 1.0], [4.0, 0.0], [4.0, 0.0]]).unwrap();
    assert_eq!(calinski_harabasz(&x, &[0, 0, 1, 1]).unwrap(), f64::INFINITY);
}

#[test]
fn kmeans_finds_the_exhaustive_optimum_on_small_fixtures() {
    let mut fixtures = vec![
        Tensor::from_rows(&[[0.0], [0.1], [10.0], [10.1]]).unwrap(),
        Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [6.0, 5.0], [5.0, 6.0]]).unwrap(),
        Tensor::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0], [5.0], [6.0], [7.0]]).unwrap(),
    ];
    for seed in 0..12u64 {
        let n = 3 + (seed as usize % 6);
        fixtures.push(random_tensor(n, 2, seed, "kmeans-exhaustive"));
    }
    for (f, x) in fixtures.iter().enumerate() {
        assert!(x.rows() <= 8);
        for k in 2..=3.min(x.rows()) {
            let best = partitions(x.rows(), k).iter().map(|p| sse(x, p)).fold(f64::INFINITY, f64::min);
            let got = kmeans(x, k, 10, 300, 42).unwrap();
            assert!(got.inertia >= best - 1e-12);
            if k == 2 {
                assert!(
                    (got.inertia - best).abs() <= 1e-9 * best.max(1.0),
                    "fixture {f}: {} vs optimum {best}",
                    got.inertia
                );
            }
            assert!((sse(x, &got.labels) - got.inertia).abs() < 1e-9);
        }
    }
}

fn pairs_together(labels: &[usize]) -> Vec<bool> {
    let n = labels.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push(labels[i] == labels[j]);
        }
    }
    out
}

/// Chance-corrected pair agreement computed by enumerating pairs.
fn ari_reference(a: &[usize], b: &[usize]) -> f64 {
    let (pa, pb) = (pairs_together(a), pairs_together(b));
    let total = pa.len() as f64;
    let both = pa.iter().zip(&pb).filter(|(x, y)| **x && **y).count() as f64;
    let sa = pa.iter().filter(|&&x| x).count() as f64;
    let sb = pb.iter().filter(|&&x| x).count() as f64;
    let expected = sa * sb / total;
    let max = (sa + sb) / 2.0;
    (both - expected) / (max - expected)
}

#[test]
fn ari_matches_pair_counting() {
    for seed in 0..30u64 {
        let x = random_tensor(1, 14, seed, "ari");
        let a: Vec<usize> = x.as_slice().iter().map(|v| ((v + 1.0) * 1.5) as usize).collect();
        let b: Vec<usize> = x.as_slice().iter().rev().map(|v| ((v + 1.0) * 2.0) as usize).collect();
        let got = adjusted_rand_index(&a, &b).unwrap();
        let want = ari_reference(&a, &b);
        if want.is_finite() {
            assert!((got - want).abs() < 1e-12, "seed {seed}: {got} vs {want}");
        }
    }
    assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
}

#[test]
fn pca_matches_nalgebra_eigendecomposition() {
    let x = random_tensor(10, 5, 11, "pca-oracle");
    let pca = pca_2d(&x).unwrap();

    let m = DMatrix::from_row_slice(10, 5, x.as_slice());
    let mean = m.row_mean();
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= &mean;
    }
    let cov = c.transpose() * &c / 9.0;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..5).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    for (p, &e) in order.iter().take(2).enumerate() {
        assert!((pca.variances[p] - eig.eigenvalues[e]).abs() < 1e-6, "variance {p}");
        let v = eig.eigenvectors.column(e);
        let sign = if v.dot(&nalgebra::DVector::from_row_slice(&pca.components[p])) < 0.0 { -1.0 } else { 1.0 };
        for j in 0..5 {
            assert!((pca.components[p][j] - sign * v[j]).abs() < 1e-6, "component {p}, {j}");
        }
        let scores = &c * v;
        for i in 0..10 {
            assert!((pca.coords.get(i, p) - sign * scores[i]).abs() < 1e-6, "score {i}, {p}");
        }
    }
}
