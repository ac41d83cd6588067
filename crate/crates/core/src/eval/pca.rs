use crate::error::{Error, Result};
use crate::tensor::{dot, norm, Tensor};

const POWER_ITERS: usize = 10_000;
const POWER_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `n × 2` scores.
    pub coords: Tensor,
    /// Unit principal axes, one per row.
    pub components: Vec<Vec<f64>>,
    /// Covariance eigenvalues (divided by `n − 1`).
    pub variances: Vec<f64>,
}

fn covariance(xc: &Tensor) -> Tensor {
    let mut c = xc.t_matmul(xc).expect("same rows");
    let denom = (xc.rows() - 1) as f64;
    c.as_mut_slice().iter_mut().for_each(|v| *v /= denom);
    c
}

fn mat_vec(a: &Tensor, v: &[f64]) -> Vec<f64> {
    a.iter_rows().map(|r| dot(r, v)).collect()
}

/// Dominant eigenpair of a symmetric PSD matrix. The start vector is
/// deterministic: all ones, with a small index ramp to break symmetry.
fn power_iteration(a: &Tensor) -> (Vec<f64>, f64) {
    let d = a.rows();
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 / (d as f64 * 7.0)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    for _ in 0..POWER_ITERS {
        let mut w = mat_vec(a, &v);
        let nw = norm(&w);
        if nw == 0.0 {
            return (v, 0.0);
        }
        w.iter_mut().for_each(|x| *x /= nw);
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        if delta < POWER_TOL {
            break;
        }
    }
    let av = mat_vec(a, &v);
    let rayleigh = dot(&v, &av);
    (v, rayleigh)
}

fn fix_sign(v: &mut [f64]) {
    let big = v
        .iter()
        .enumerate()
        .fold(0, |b, (i, x)| if x.abs() > v[b].abs() { i } else { b });
    if v[big] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Centres the columns, then projects onto the top two principal axes found
/// by power iteration with deflation. Each axis is signed so its
/// largest-magnitude loading is positive.
pub fn pca_2d(x: &Tensor) -> Result<Pca> {
    let (n, d) = x.shape();
    if n < 3 {
        return Err(Error::invalid(format!("pca_2d needs at least 3 rows, got {n}")));
    }
    x.ensure_finite("pca input")?;
    let means: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
    let xc = Tensor::from_vec(
        n,
        d,
        x.iter_rows().flat_map(|r| r.iter().zip(&means).map(|(v, m)| v - m)).collect(),
    )?;
    let mut cov = covariance(&xc);
    let mut components = Vec::with_capacity(2);
    let mut variances = Vec::with_capacity(2);
    for k in 0..2.min(d) {
        let (mut v, lambda) = power_iteration(&cov);
        if k == 0 && lambda <= 0.0 {
            return Err(Error::Numerical("pca_2d on a rank-0 matrix".into()));
        }
        if lambda <= 0.0 {
            v = vec![0.0; d];
        } else {
            fix_sign(&mut v);
        }
        for i in 0..d {
            for j in 0..d {
                cov.set(i, j, cov.get(i, j) - lambda * v[i] * v[j]);
            }
        }
        components.push(v);
        variances.push(lambda.max(0.0));
    }
    while components.len() < 2 {
        components.push(vec![0.0; d]);
        variances.push(0.0);
    }
    let mut coords = Tensor::zeros(n, 2);
    for i in 0..n {
        for (k, c) in components.iter().enumerate() {
            coords.set(i, k, dot(xc.row(i), c));
        }
    }
    Ok(Pca {
        coords,
        components,
        variances,
    })
}
