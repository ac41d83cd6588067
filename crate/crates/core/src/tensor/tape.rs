//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so the recording order is a
//! topological order and [`Tape::backward`] simply walks it in reverse,
//! visiting every node once.

use super::ops::sparsemax_row;
use super::{dot, norm, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which views are left out of the NT-Xent denominator for anchor `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// Sum over every `k ≠ i`; the positive stays in the denominator.
    #[default]
    ExcludeSelf,
    /// Sum over every `k ∉ {i, pos(i)}`, the indicator as literally printed.
    ExcludePositive,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine { x: Var, scale: f64 },
    Sigmoid(Var),
    Relu(Var),
    SliceCols { x: Var, start: usize },
    VStack(Var, Var),
    Sparsemax { x: Var, taus: Vec<f64>, allowed: Option<Vec<bool>> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Tensor, inv_std: Vec<f64>, train: bool },
    L2NormRows { x: Var, norms: Vec<f64> },
    Sum(Var),
    /// Scalar loss whose gradient w.r.t. `x` was computed in the forward pass.
    Loss { x: Var, local_grad: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Gradients are accumulated for every leaf; callers
    /// that treat a leaf as a constant simply ignore its gradient.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul_t(self.value(b))?;
        self.push(v, Op::MatMulT(a, b), "matmul_t")
    }

    /// Adds the `1×c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.rows() != 1 || b.cols() != x.cols() {
            return Err(Error::shape("add_row", format!("{:?} + {:?}", x.shape(), b.shape())));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            out.row_mut(r).iter_mut().zip(b.as_slice()).for_each(|(o, &bv)| *o += bv);
        }
        self.push(out, Op::AddRow(a, bias), "add_row")
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b), "mul")
    }

    /// `scale · x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let v = self.value(x).map(|e| scale * e + shift);
        self.push(v, Op::Affine { x, scale }, "affine")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x), "sigmoid")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).map(|e| e.max(0.0));
        self.push(v, Op::Relu(x), "relu")
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let src = self.value(x);
        if start > end || end > src.cols() {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {:?}", src.shape())));
        }
        let mut out = Tensor::zeros(src.rows(), end - start);
        for r in 0..src.rows() {
            out.row_mut(r).copy_from_slice(&src.row(r)[start..end]);
        }
        self.push(out, Op::SliceCols { x, start }, "slice_cols")
    }

    /// Stacks `b` below `a`.
    pub fn vstack(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(Error::shape("vstack", format!("{:?} over {:?}", ta.shape(), tb.shape())));
        }
        let mut data = ta.as_slice().to_vec();
        data.extend_from_slice(tb.as_slice());
        let v = Tensor::from_vec(ta.rows() + tb.rows(), ta.cols(), data)?;
        self.push(v, Op::VStack(a, b), "vstack")
    }

    /// Row-wise sparsemax. `allowed`, when given, is a row-major mask; masked
    /// entries are forced to zero and excluded from the projection.
    pub fn sparsemax(&mut self, x: Var, allowed: Option<Vec<bool>>) -> Result<Var> {
        let z = self.value(x);
        if z.cols() == 0 {
            return Err(Error::invalid("sparsemax of an empty row"));
        }
        if let Some(mask) = &allowed {
            if mask.len() != z.len() {
                return Err(Error::shape("sparsemax", "mask length does not match input"));
            }
        }
        let cols = z.cols();
        let mut out = Tensor::zeros(z.rows(), cols);
        let mut taus = Vec::with_capacity(z.rows());
        for r in 0..z.rows() {
            let mask = allowed.as_deref().map(|m| &m[r * cols..(r + 1) * cols]);
            taus.push(sparsemax_row(z.row(r), mask, out.row_mut(r))?);
        }
        self.push(out, Op::Sparsemax { x, taus, allowed }, "sparsemax")
    }

    /// Batch normalisation with batch statistics (population variance).
    /// Returns the output together with the batch mean and variance.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let xv = self.value(x);
        let (n, c) = xv.shape();
        if n < 2 {
            return Err(Error::invalid("batch norm in train mode needs at least 2 rows"));
        }
        self.check_bn_params(c, gamma, beta)?;
        let mut mean = vec![0.0; c];
        for row in xv.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, &v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for row in xv.iter_rows() {
            for j in 0..c {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let (var_out, mean_out) = (var.clone(), mean.clone());
        let out = self.bn_forward(x, gamma, beta, &mean, &var, eps, true)?;
        Ok((out, mean_out, var_out))
    }

    /// Batch normalisation with fixed statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let c = self.value(x).cols();
        self.check_bn_params(c, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::shape("batch_norm", "running statistics width mismatch"));
        }
        self.bn_forward(x, gamma, beta, mean, var, eps, false)
    }

    fn check_bn_params(&self, c: usize, gamma: Var, beta: Var) -> Result<()> {
        for p in [gamma, beta] {
            if self.value(p).shape() != (1, c) {
                return Err(Error::shape(
                    "batch_norm",
                    format!("parameter {:?} for {c} columns", self.value(p).shape()),
                ));
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn bn_forward(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
        train: bool,
    ) -> Result<Var> {
        let xv = self.value(x);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = xv.clone();
        for r in 0..xhat.rows() {
            for (j, e) in xhat.row_mut(r).iter_mut().enumerate() {
                *e = (*e - mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (self.value(gamma).as_slice(), self.value(beta).as_slice());
        let mut out = xhat.clone();
        for r in 0..out.rows() {
            for (j, e) in out.row_mut(r).iter_mut().enumerate() {
                *e = g[j] * *e + b[j];
            }
        }
        self.push(out, Op::BatchNorm { x, gamma, beta, xhat, inv_std, train }, "batch_norm")
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let mut out = xv.clone();
        let mut norms = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let n = norm(xv.row(r));
            if n == 0.0 {
                return Err(Error::ZeroNorm { row: r });
            }
            out.row_mut(r).iter_mut().for_each(|v| *v /= n);
            norms.push(n);
        }
        self.push(out, Op::L2NormRows { x, norms }, "l2_normalize_rows")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::row_vector(&[s]), Op::Sum(x), "sum")
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, x: Var, target: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape() != target.shape() {
            return Err(Error::shape("mse", format!("{:?} vs {:?}", xv.shape(), target.shape())));
        }
        let n = xv.len() as f64;
        let diff = xv.zip_map(target, |a, b| a - b);
        let loss = diff.as_slice().iter().map(|d| d * d).sum::<f64>() / n;
        let local_grad = diff.map(|d| 2.0 * d / n);
        self.push(Tensor::row_vector(&[loss]), Op::Loss { x, local_grad }, "mse")
    }

    /// Mean softmax cross-entropy of `logits` rows against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != labels.len() || lv.rows() == 0 {
            return Err(Error::shape(
                "softmax_cross_entropy",
                format!("{} labels for {:?} logits", labels.len(), lv.shape()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lv.cols()) {
            return Err(Error::invalid(format!("label {bad} out of range for {} classes", lv.cols())));
        }
        let n = lv.rows() as f64;
        let mut grad = Tensor::zeros(lv.rows(), lv.cols());
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = lv.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            loss += denom.ln() + max - row[label];
            for (j, g) in grad.row_mut(r).iter_mut().enumerate() {
                let p = (row[j] - max).exp() / denom;
                *g = (p - if j == label { 1.0 } else { 0.0 }) / n;
            }
        }
        self.push(
            Tensor::row_vector(&[loss / n]),
            Op::Loss { x: logits, local_grad: grad },
            "softmax_cross_entropy",
        )
    }

    /// NT-Xent over a `2N×2N` cosine-similarity matrix whose views are ordered
    /// `[a_1..a_N, b_1..b_N]`, so the positive of view `i` is `i ± N`.
    /// Returns the mean of the per-anchor losses.
    pub fn nt_xent_from_similarity(&mut self, sim: Var, tau: f64, denominator: Denominator) -> Result<Var> {
        let s = self.value(sim);
        let m = s.rows();
        if s.cols() != m || m == 0 || !m.is_multiple_of(2) {
            return Err(Error::shape("nt_xent", format!("similarity matrix {:?}", s.shape())));
        }
        if tau.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
        }
        let n = m / 2;
        if denominator == Denominator::ExcludePositive && n < 2 {
            return Err(Error::invalid("exclude-positive denominator needs at least 2 pairs"));
        }
        let mut grad = Tensor::zeros(m, m);
        let mut total = 0.0;
        let mut logits = vec![0.0; m];
        for i in 0..m {
            let pos = (i + n) % m;
            let in_denominator =
                |k: usize| k != i && !(denominator == Denominator::ExcludePositive && k == pos);
            let row = s.row(i);
            for k in 0..m {
                logits[k] = row[k] / tau;
            }
            let max = (0..m)
                .filter(|&k| in_denominator(k))
                .map(|k| logits[k])
                .fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..m).filter(|&k| in_denominator(k)).map(|k| (logits[k] - max).exp()).sum();
            total += denom.ln() + max - logits[pos];
            let g = grad.row_mut(i);
            for k in (0..m).filter(|&k| in_denominator(k)) {
                g[k] += (logits[k] - max).exp() / denom / tau / m as f64;
            }
            g[pos] -= 1.0 / tau / m as f64;
        }
        self.push(
            Tensor::row_vector(&[total / m as f64]),
            Op::Loss { x: sim, local_grad: grad },
            "nt_xent",
        )
    }

    /// Full NT-Xent on raw `2N×d` embeddings: normalise rows, take pairwise
    /// cosines, then [`Tape::nt_xent_from_similarity`].
    pub fn nt_xent(&mut self, z: Var, tau: f64, denominator: Denominator) -> Result<Var> {
        let zn = self.l2_normalize_rows(z)?;
        let sim = self.matmul_t(zn, zn)?;
        self.nt_xent_from_similarity(sim, tau, denominator)
    }

    /// Smallest distance `|z - τ|` between an allowed sparsemax input and its
    /// row threshold, over every sparsemax node on the tape. Finite
    /// differences are only trustworthy when this exceeds the step size.
    pub fn min_sparsemax_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            if let Op::Sparsemax { x, taus, allowed } = &node.op {
                let z = self.value(*x);
                for (r, &tau) in taus.iter().enumerate() {
                    for (j, &v) in z.row(r).iter().enumerate() {
                        if allowed.as_ref().is_none_or(|a| a[r * z.cols() + j]) {
                            margin = margin.min((v - tau).abs());
                        }
                    }
                }
            }
        }
        margin
    }

    /// Gradients of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    // C = A·Bᵀ: dA = dC·B, dB = dCᵀ·A
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.t_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        gb.as_mut_slice().iter_mut().zip(row).for_each(|(s, &v)| *s += v);
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Affine { x, scale } => {
                    let s = *scale;
                    accumulate(&mut grads, *x, g.map(|v| v * s));
                }
                Op::Sigmoid(x) => {
                    let gx = g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Relu(x) => {
                    let gx = g.zip_map(self.value(*x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                    accumulate(&mut grads, *x, gx);
                }
                Op::SliceCols { x, start } => {
                    let src = self.value(*x);
                    let mut gx = Tensor::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::VStack(a, b) => {
                    let ra = self.value(*a).rows();
                    let cols = g.cols();
                    let (top, bottom) = g.as_slice().split_at(ra * cols);
                    accumulate(&mut grads, *a, Tensor::from_vec(ra, cols, top.to_vec())?);
                    accumulate(&mut grads, *b, Tensor::from_vec(g.rows() - ra, cols, bottom.to_vec())?);
                }
                Op::Sparsemax { x, .. } => {
                    // On the support S: g - mean_S(g); zero elsewhere.
                    let out = &node.value;
                    let mut gx = Tensor::zeros(out.rows(), out.cols());
                    for r in 0..out.rows() {
                        let (mut sum, mut count) = (0.0, 0usize);
                        for (&o, &gv) in out.row(r).iter().zip(g.row(r)) {
                            if o > 0.0 {
                                sum += gv;
                                count += 1;
                            }
                        }
                        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
                        for ((d, &o), &gv) in gx.row_mut(r).iter_mut().zip(out.row(r)).zip(g.row(r)) {
                            if o > 0.0 {
                                *d = gv - mean;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::BatchNorm { x, gamma, beta, xhat, inv_std, train } => {
                    let (n, c) = xhat.shape();
                    let gam = self.value(*gamma).as_slice();
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    for r in 0..n {
                        for j in 0..c {
                            dgamma[j] += g.get(r, j) * xhat.get(r, j);
                            dbeta[j] += g.get(r, j);
                        }
                    }
                    let mut gx = Tensor::zeros(n, c);
                    if *train {
                        // dx = inv_std/n · (n·dxhat - Σdxhat - xhat·Σ(dxhat·xhat))
                        for j in 0..c {
                            let (mut s1, mut s2) = (0.0, 0.0);
                            for r in 0..n {
                                let d = g.get(r, j) * gam[j];
                                s1 += d;
                                s2 += d * xhat.get(r, j);
                            }
                            for r in 0..n {
                                let d = g.get(r, j) * gam[j];
                                let v = inv_std[j] / n as f64 * (n as f64 * d - s1 - xhat.get(r, j) * s2);
                                gx.set(r, j, v);
                            }
                        }
                    } else {
                        for r in 0..n {
                            for j in 0..c {
                                gx.set(r, j, g.get(r, j) * gam[j] * inv_std[j]);
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gamma, Tensor::row_vector(&dgamma));
                    accumulate(&mut grads, *beta, Tensor::row_vector(&dbeta));
                }
                Op::L2NormRows { x, norms } => {
                    // dx = (g - y·⟨y, g⟩) / ‖x‖
                    let y = &node.value;
                    let mut gx = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let yg = dot(y.row(r), g.row(r));
                        for ((d, &yv), &gv) in gx.row_mut(r).iter_mut().zip(y.row(r)).zip(g.row(r)) {
                            *d = (gv - yv * yg) / norms[r];
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, Tensor::filled(r, c, g.get(0, 0)));
                }
                Op::Loss { x, local_grad } => {
                    let s = g.get(0, 0);
                    accumulate(&mut grads, *x, local_grad.map(|v| v * s));
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .for_each(|(e, &x)| *e += x),
        slot => *slot = Some(g),
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, or `None` if `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`] but returns zeros shaped like `v` when absent.
    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            Tensor::zeros(r, c)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(&[1.0, 2.0])).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row_vector(&[1.0, 2.0])).unwrap();
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut tape = Tape::new();
        assert!(matches!(
            tape.leaf(Tensor::row_vector(&[f64::NAN])),
            Err(Error::NonFinite(_))
        ));
        let x = tape.leaf(Tensor::row_vector(&[1e308])).unwrap();
        assert!(tape.affine(x, 10.0, 0.0).is_err());
    }

    #[test]
    fn batch_norm_hand_values() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[1.0], [3.0]]).unwrap()).unwrap();
        let gamma = tape.leaf(Tensor::filled(1, 1, 1.0)).unwrap();
        let beta = tape.leaf(Tensor::zeros(1, 1)).unwrap();
        let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
        assert_eq!(mean, vec![2.0]);
        assert_eq!(var, vec![1.0]);
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((tape.value(y).get(0, 0) + expected).abs() < 1e-15);
        assert!((tape.value(y).get(1, 0) - expected).abs() < 1e-15);
        // within ε of the exact [-1, 1]
        assert!((tape.value(y).get(1, 0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn batch_norm_zero_gamma_gives_beta() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[1.0, -4.0], [3.0, 7.0], [0.5, 2.0]]).unwrap()).unwrap();
        let gamma = tape.leaf(Tensor::zeros(1, 2)).unwrap();
        let beta = tape.leaf(Tensor::row_vector(&[0.25, -1.5])).unwrap();
        let (y, _, _) = tape.batch_norm_train(x, gamma, beta, 1e-5).unwrap();
        for row in tape.value(y).iter_rows() {
            assert_eq!(row, &[0.25, -1.5]);
        }
    }

    #[test]
    fn batch_norm_single_row_train_fails() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(1, 3)).unwrap();
        let gamma = tape.leaf(Tensor::filled(1, 3, 1.0)).unwrap();
        let beta = tape.leaf(Tensor::zeros(1, 3)).unwrap();
        assert!(tape.batch_norm_train(x, gamma, beta, 1e-5).is_err());
    }

    #[test]
    fn nt_xent_closed_forms() {
        // N = 1, exclude-self: the positive is the only denominator term.
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::from_rows(&[[0.3, -2.0, 1.0], [5.0, 0.1, 0.0]]).unwrap()).unwrap();
        let loss = tape.nt_xent(z, 0.5, Denominator::ExcludeSelf).unwrap();
        assert!(tape.value(loss).get(0, 0).abs() < 1e-15);

        // N = 2, identical positives, orthogonal pairs: -log(e²/(e²+2)).
        let mut tape = Tape::new();
        let z = tape
            .leaf(Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).unwrap())
            .unwrap();
        let loss = tape.nt_xent(z, 0.5, Denominator::ExcludeSelf).unwrap();
        let e2 = 2f64.exp();
        let expected = -(e2 / (e2 + 2.0)).ln();
        assert!((tape.value(loss).get(0, 0) - expected).abs() < 1e-12);
        assert!((expected - 0.23954).abs() < 1e-5);
    }

    #[test]
    fn exclude_positive_needs_two_pairs() {
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap()).unwrap();
        assert!(tape.nt_xent(z, 0.5, Denominator::ExcludePositive).is_err());
    }
}
