use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfFit {
    pub w: Tensor,
    pub h: Tensor,
    /// `‖X − WH‖_F²` after each iteration.
    pub objective: Vec<f64>,
}

fn frob2(x: &Tensor, w: &Tensor, h: &Tensor) -> f64 {
    let wh = w.matmul(h).expect("conforming factors");
    x.as_slice().iter().zip(wh.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `target ⊙ num / den` in place; entries with a zero denominator are kept.
fn multiplicative(target: &mut Tensor, num: &Tensor, den: &Tensor) {
    for ((t, &n), &d) in target.as_mut_slice().iter_mut().zip(num.as_slice()).zip(den.as_slice()) {
        if d > 0.0 {
            *t *= n / d;
        }
    }
}

/// Lee–Seung multiplicative updates for `min ‖X − WH‖_F²` with `W, H ≥ 0`.
/// Factors start uniform on `(0, 1]`.
pub fn nmf_fit(x: &Tensor, rank: usize, iters: usize, seed: u64) -> Result<NmfFit> {
    let (n, m) = x.shape();
    if x.as_slice().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("nmf input has negative entries"));
    }
    x.ensure_finite("nmf input")?;
    if rank == 0 || rank > n.min(m) {
        return Err(Error::invalid(format!("nmf rank {rank} outside 1..={}", n.min(m))));
    }
    let mut stream = rng::stream(seed, "nmf/init");
    let mut uniform = |r, c| {
        let data = (0..r * c).map(|_| 1.0 - stream.random::<f64>()).collect();
        Tensor::from_vec(r, c, data).expect("sized")
    };
    let mut w = uniform(n, rank);
    let mut h = uniform(rank, m);
    let mut objective = Vec::with_capacity(iters);
    for _ in 0..iters {
        let num = w.t_matmul(x)?;
        let den = w.t_matmul(&w)?.matmul(&h)?;
        multiplicative(&mut h, &num, &den);
        let num = x.matmul_t(&h)?;
        let den = w.matmul(&h.matmul_t(&h)?)?;
        multiplicative(&mut w, &num, &den);
        let obj = frob2(x, &w, &h);
        if !obj.is_finite() {
            return Err(Error::NonFinite("nmf objective".into()));
        }
        objective.push(obj);
    }
    Ok(NmfFit { w, h, objective })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_matrix() {
        let fit = nmf_fit(&Tensor::zeros(5, 4), 2, 20, 3).unwrap();
        assert!(fit.objective.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn rank_one_recovery() {
        let w = [1.0, 2.0, 0.5, 3.0, 1.5];
        let h = [0.2, 1.0, 4.0, 0.7];
        let x = Tensor::from_vec(5, 4, w.iter().flat_map(|a| h.iter().map(move |b| a * b)).collect()).unwrap();
        let fit = nmf_fit(&x, 1, 500, 42).unwrap();
        let rel = fit.objective.last().unwrap().sqrt() / x.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rel < 1e-3, "relative error {rel}");
    }

    #[test]
    fn rejects_bad_input() {
        let mut x = Tensor::filled(3, 3, 1.0);
        assert!(nmf_fit(&x, 4, 10, 1).is_err());
        assert!(nmf_fit(&x, 0, 10, 1).is_err());
        x.set(0, 0, -1.0);
        assert!(nmf_fit(&x, 1, 10, 1).is_err());
    }
}
