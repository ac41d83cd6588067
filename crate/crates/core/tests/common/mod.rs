#![allow(dead_code)]

use contab::rng;
use contab::tensor::Tensor;
use rand::Rng;
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn random_tensor(rows: usize, cols: usize, seed: u64, label: &str) -> Tensor {
    let mut r = rng::stream(seed, label);
    let data = (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn random_nonneg(rows: usize, cols: usize, seed: u64, label: &str) -> Tensor {
    random_tensor(rows, cols, seed, label).map(f64::abs)
}

/// Every assignment of `n` points to `k` labels with all labels used,
/// canonical (first occurrence order) so each partition appears once.
pub fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, k: usize, used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        if k - used > n - i {
            return;
        }
        for l in 0..=used.min(k - 1) {
            cur.push(l);
            go(i + 1, n, k, used.max(l + 1), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, 0, &mut Vec::new(), &mut out);
    out
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn sse(x: &Tensor, labels: &[usize]) -> f64 {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&[f64]> = (0..x.rows()).filter(|&i| labels[i] == c).map(|i| x.row(i)).collect();
        if members.is_empty() {
            continue;
        }
        let d = x.cols();
        let mean: Vec<f64> = (0..d).map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64).collect();
        total += members.iter().map(|r| sq_dist(r, &mean)).sum::<f64>();
    }
    total
}
