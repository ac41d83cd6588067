use super::{dot, norm, Tensor};
use crate::error::{Error, Result};

/// Euclidean projection of one row onto the probability simplex.
///
/// Entries with `allowed[j] == false` are held at zero and do not take part in
/// the projection. Returns the threshold `τ`; the output is `max(z - τ, 0)` on
/// the allowed entries.
pub fn sparsemax_row(z: &[f64], allowed: Option<&[bool]>, out: &mut [f64]) -> Result<f64> {
    let is_allowed = |j: usize| allowed.is_none_or(|a| a[j]);
    let mut sorted: Vec<f64> = (0..z.len()).filter(|&j| is_allowed(j)).map(|j| z[j]).collect();
    if sorted.is_empty() {
        return Err(Error::invalid("sparsemax of an empty row"));
    }
    sorted.sort_by(|a, b| b.total_cmp(a));

    // support size K = max{k : 1 + k·z_(k) > Σ_{j≤k} z_(j)}
    let mut cumsum = 0.0;
    let mut support_sum = sorted[0];
    let mut support = 1usize;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let k = (i + 1) as f64;
        if 1.0 + k * v > cumsum {
            support = i + 1;
            support_sum = cumsum;
        }
    }
    let tau = (support_sum - 1.0) / support as f64;
    for (j, o) in out.iter_mut().enumerate() {
        *o = if is_allowed(j) { (z[j] - tau).max(0.0) } else { 0.0 };
    }
    Ok(tau)
}

/// Row-wise sparsemax.
pub fn sparsemax(logits: &Tensor) -> Result<Tensor> {
    if logits.cols() == 0 {
        return Err(Error::invalid("sparsemax of an empty row"));
    }
    logits.ensure_finite("sparsemax input")?;
    let mut out = Tensor::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        sparsemax_row(logits.row(r), None, out.row_mut(r))?;
    }
    Ok(out)
}

/// Scales each row to unit Euclidean norm.
pub fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let n = norm(x.row(r));
        if n == 0.0 {
            return Err(Error::ZeroNorm { row: r });
        }
        out.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

/// `out[i][j] = ⟨a_i, b_j⟩ / (‖a_i‖‖b_j‖)`, clamped to `[-1, 1]`.
pub fn cosine_matrix(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(Error::shape(
            "cosine_matrix",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let na = l2_normalize_rows(a)?;
    let nb = l2_normalize_rows(b)?;
    let mut out = Tensor::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            out.set(i, j, dot(na.row(i), nb.row(j)).clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}
