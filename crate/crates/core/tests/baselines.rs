mod common;

use common::{random_nonneg, random_tensor, sq_dist};
use contab::baselines::{
    deepcluster_train, hierarchical_labels, nmf_fit, run_baseline, simclr_mlp_train, BaselineConfig,
    DeepClusterParams, Method, SimclrParams, TrainParams,
};
use contab::eval::{adjusted_rand_index, canonicalize_labels};
use contab::ingest::generate_synthetic_cohorts;
use contab::tensor::Tensor;

#[test]
fn nmf_objective_never_increases() {
    for seed in 0..10u64 {
        let (n, m) = (8 + seed as usize, 6 + (seed as usize % 4));
        let x = random_nonneg(n, m, seed, "nmf-monotone");
        let rank = 1 + seed as usize % 4;
        let fit = nmf_fit(&x, rank, 300, seed).unwrap();
        assert_eq!(fit.objective.len(), 300);
        for (t, w) in fit.objective.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-10, "seed {seed}, step {t}: {} -> {}", w[0], w[1]);
        }
        assert!(fit.w.as_slice().iter().chain(fit.h.as_slice()).all(|&v| v >= 0.0));
    }
}

#[test]
fn nmf_keeps_zero_columns_zero() {
    let mut x = random_nonneg(6, 4, 3, "nmf-zero-col");
    for r in 0..6 {
        x.set(r, 2, 0.0);
    }
    let fit = nmf_fit(&x, 2, 200, 1).unwrap();
    let wh = fit.w.matmul(&fit.h).unwrap();
    assert!((0..6).all(|r| wh.get(r, 2) < 1e-6));
}

/// Greedy Ward agglomeration recomputed from cluster centroids at every
/// step: merge the pair with the smallest SSE increase.
fn ward_reference(x: &Tensor, k: usize) -> (Vec<usize>, Vec<f64>) {
    let n = x.rows();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut heights = Vec::new();
    let mut cut = None;
    let centroid = |c: &[usize]| -> Vec<f64> {
        (0..x.cols()).map(|j| c.iter().map(|&i| x.get(i, j)).sum::<f64>() / c.len() as f64).collect()
    };
    while clusters.len() > 1 {
        if clusters.len() == k {
            cut = Some(clusters.clone());
        }
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (na, nb) = (clusters[a].len() as f64, clusters[b].len() as f64);
                let cost = na * nb / (na + nb) * sq_dist(&centroid(&clusters[a]), &centroid(&clusters[b]));
                if cost < best.0 {
                    best = (cost, a, b);
                }
            }
        }
        heights.push(2.0 * best.0);
        let merged = clusters.remove(best.2);
        clusters[best.1].extend(merged);
    }
    let cut = cut.unwrap_or(clusters);
    let mut labels = vec![0; n];
    for (c, members) in cut.iter().enumerate() {
        for &i in members {
            labels[i] = c;
        }
    }
    (canonicalize_labels(&labels), heights)
}

#[test]
fn ward_matches_centroid_recomputation() {
    for seed in 0..10u64 {
        let n = 5 + seed as usize;
        let x = random_tensor(n, 3, seed, "ward");
        for k in 1..=4 {
            let fit = hierarchical_labels(&x, k).unwrap();
            let (labels, heights) = ward_reference(&x, k);
            assert_eq!(fit.labels, labels, "seed {seed}, k={k}");
            assert_eq!(fit.heights.len(), heights.len());
            for (a, b) in fit.heights.iter().zip(&heights) {
                assert!((a - b).abs() < 1e-9 * b.max(1.0), "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn ward_separates_planted_blocks() {
    let syn = generate_synthetic_cohorts(24, 5, 3.0).unwrap();
    let cfg = BaselineConfig::for_method(Method::Hierarchical, 5);
    let run = run_baseline(&syn.dataset, &cfg).unwrap();
    let labels = run.labels.unwrap();
    assert_eq!(adjusted_rand_index(&labels, &syn.labels).unwrap(), 1.0);
}

fn quick(seed: u64) -> TrainParams {
    TrainParams {
        epochs: 8,
        batch_size: 8,
        lr: 1e-3,
        seed,
    }
}

#[test]
fn deepcluster_heads_are_fresh_each_epoch_and_runs_reproduce() {
    let x = random_tensor(20, 10, 9, "deepcluster");
    let dp = DeepClusterParams {
        hidden: 16,
        latent: 8,
        k_pseudo: 2,
    };
    let a = deepcluster_train(&x, dp, quick(3)).unwrap();
    let b = deepcluster_train(&x, dp, quick(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.head_checksums.len(), 8);
    let mut distinct = a.head_checksums.clone();
    distinct.sort_unstable();
    distinct.dedup();
    assert_eq!(distinct.len(), 8);
    assert!(a.pseudo_labels.iter().all(|l| l.len() == 20));
    let c = deepcluster_train(&x, dp, quick(4)).unwrap();
    assert_ne!(a.embedding, c.embedding);
}

#[test]
fn deepcluster_recovers_separated_blobs() {
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    let noise = random_tensor(30, 6, 1, "blobs");
    for i in 0..30 {
        let c = i % 2;
        truth.push(c);
        rows.push((0..6).map(|j| noise.get(i, j) * 0.2 + if c == 0 { 3.0 } else { -3.0 }).collect::<Vec<_>>());
    }
    let x = Tensor::from_rows(&rows).unwrap();
    let fit = deepcluster_train(
        &x,
        DeepClusterParams {
            hidden: 16,
            latent: 8,
            k_pseudo: 2,
        },
        quick(2),
    )
    .unwrap();
    assert_eq!(adjusted_rand_index(fit.pseudo_labels.last().unwrap(), &truth).unwrap(), 1.0);
}

#[test]
fn simclr_near_zero_masking_sees_identical_views() {
    let x = random_tensor(12, 6, 5, "simclr");
    let sp = SimclrParams {
        hidden: 16,
        latent: 8,
        projection: 8,
        mask_prob: 1e-9,
        temperature: 0.5,
    };
    let fit = simclr_mlp_train(&x, sp, quick(1)).unwrap();
    assert_eq!(fit.embedding.shape(), (12, 8));
    assert!(fit.loss_history.iter().all(|l| l.is_finite()));
    let again = simclr_mlp_train(&x, sp, quick(1)).unwrap();
    assert_eq!(fit, again);
    for p in [0.0, 1.0] {
        assert!(simclr_mlp_train(&x, SimclrParams { mask_prob: p, ..sp }, quick(1)).is_err());
    }
}

#[test]
fn baseline_streams_are_independent_of_each_other() {
    let syn = generate_synthetic_cohorts(12, 3, 3.0).unwrap();
    let mut cfg = BaselineConfig::for_method(Method::Ae, 7);
    cfg.epochs = 3;
    cfg.hidden = 16;
    let alone = run_baseline(&syn.dataset, &cfg).unwrap();
    let mut other = BaselineConfig::for_method(Method::SimclrMlp, 7);
    other.epochs = 3;
    other.hidden = 16;
    run_baseline(&syn.dataset, &other).unwrap();
    let again = run_baseline(&syn.dataset, &cfg).unwrap();
    assert_eq!(alone.embedding, again.embedding);
}

#[test]
fn unknown_method_is_rejected() {
    assert!("kmeans".parse::<Method>().is_err());
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
}
