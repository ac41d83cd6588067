use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors, kept in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Records every parameter as a leaf; the returned handles are indexed by
    /// [`ParamId`].
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.values.iter().map(|v| tape.leaf(v.clone())).collect()
    }

    /// Gradients for every bound parameter, zeros where a parameter did not
    /// reach the loss.
    pub fn collect_grads(&self, tape: &Tape, grads: &super::Gradients, bound: &[Var]) -> Vec<Tensor> {
        bound.iter().map(|&v| grads.get_or_zeros(tape, v)).collect()
    }

    /// Order-sensitive checksum of all parameter bits.
    pub fn checksum(&self) -> u64 {
        use std::hash::Hasher;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in &self.values {
            for x in v.as_slice() {
                h.write_u64(x.to_bits());
            }
        }
        h.finish()
    }
}

/// `x·W + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add(format!("{name}.weight"), Tensor::glorot(in_dim, out_dim, rng));
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(1, out_dim));
        Linear { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var> {
        let h = tape.matmul(x, bound[self.weight.0])?;
        tape.add_row(h, bound[self.bias.0])
    }
}

/// Gated linear unit: the affine output `[a ‖ g]` is split in half and the
/// result is `a ⊙ σ(g)`.
pub fn glu(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let width = tape.value(weight).cols();
    if !width.is_multiple_of(2) {
        return Err(Error::invalid(format!("GLU needs an even affine width, got {width}")));
    }
    let h = tape.matmul(x, weight)?;
    let h = tape.add_row(h, bias)?;
    let a = tape.slice_cols(h, 0, width / 2)?;
    let g = tape.slice_cols(h, width / 2, width)?;
    let gate = tape.sigmoid(g)?;
    tape.mul(a, gate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Plain batch normalisation with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    /// Weight kept on the old running value at each update.
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub const EPS: f64 = 1e-5;
    pub const MOMENTUM: f64 = 0.9;

    pub fn new(params: &mut ParamSet, name: &str, dim: usize) -> Self {
        let gamma = params.add(format!("{name}.gamma"), Tensor::filled(1, dim, 1.0));
        let beta = params.add(format!("{name}.beta"), Tensor::zeros(1, dim));
        BatchNorm {
            gamma,
            beta,
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
        }
    }

    /// In train mode the batch statistics are returned so the caller can fold
    /// them into the running estimates with [`BatchNorm::update`].
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[Var],
        x: Var,
        mode: Mode,
    ) -> Result<(Var, Option<BatchStats>)> {
        let (gamma, beta) = (bound[self.gamma.0], bound[self.beta.0]);
        match mode {
            Mode::Train => {
                let (y, mean, var) = tape.batch_norm_train(x, gamma, beta, self.eps)?;
                Ok((y, Some(BatchStats { mean, var })))
            }
            Mode::Eval => {
                let y = tape.batch_norm_eval(x, gamma, beta, &self.running_mean, &self.running_var, self.eps)?;
                Ok((y, None))
            }
        }
    }

    pub fn update(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.iter_mut().zip(&stats.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&stats.var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn glu_with_zero_gate_halves() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap()).unwrap();
        // identity on the a-half, zeros on the g-half
        let w = tape
            .leaf(Tensor::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]).unwrap())
            .unwrap();
        let b = tape.leaf(Tensor::zeros(1, 4)).unwrap();
        let y = glu(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.value(y), &tape.value(x).map(|v| v / 2.0));
    }

    #[test]
    fn glu_saturated_gate_passes_through() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[[1.5, -2.0]]).unwrap()).unwrap();
        let w = tape
            .leaf(Tensor::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]).unwrap())
            .unwrap();
        let b = tape.leaf(Tensor::row_vector(&[0.0, 0.0, 40.0, 40.0])).unwrap();
        let y = glu(&mut tape, x, w, b).unwrap();
        assert!(tape.value(y).max_abs_diff(tape.value(x)) < 1e-15);
    }

    #[test]
    fn glu_rejects_odd_width() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(1, 2)).unwrap();
        let w = tape.leaf(Tensor::zeros(2, 3)).unwrap();
        let b = tape.leaf(Tensor::zeros(1, 3)).unwrap();
        assert!(glu(&mut tape, x, w, b).is_err());
    }

    #[test]
    fn running_stats_momentum() {
        let mut params = ParamSet::new();
        let mut bn = BatchNorm::new(&mut params, "bn", 1);
        bn.update(&BatchStats { mean: vec![10.0], var: vec![3.0] });
        assert!((bn.running_mean[0] - 1.0).abs() < 1e-15);
        assert!((bn.running_var[0] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn eval_mode_uses_running_stats() {
        let mut params = ParamSet::new();
        let mut bn = BatchNorm::new(&mut params, "bn", 2);
        bn.running_mean = vec![1.0, -1.0];
        bn.running_var = vec![4.0, 0.25];
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape).unwrap();
        let x = tape.leaf(Tensor::from_rows(&[[3.0, 0.0]]).unwrap()).unwrap();
        let (y, stats) = bn.forward(&mut tape, &bound, x, Mode::Eval).unwrap();
        assert!(stats.is_none());
        let out = tape.value(y);
        assert!((out.get(0, 0) - 2.0 / (4.0f64 + 1e-5).sqrt()).abs() < 1e-15);
        assert!((out.get(0, 1) - 1.0 / (0.25f64 + 1e-5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn linear_shapes() {
        let mut params = ParamSet::new();
        let mut r = rng::stream(1, "t");
        let lin = Linear::new(&mut params, "fc", 3, 5, &mut r);
        assert_eq!(params.count(), 3 * 5 + 5);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape).unwrap();
        let x = tape.leaf(Tensor::zeros(4, 3)).unwrap();
        let y = lin.forward(&mut tape, &bound, x).unwrap();
        assert_eq!(tape.value(y).shape(), (4, 5));
    }
}
