//! Attentive tabular encoder with sequential sparsemax feature selection.
//!
//! Each decision step computes a feature mask from the previous step's
//! attention features, masks the (batch-normalised) input, and passes it
//! through shared then step-specific GLU blocks. The first half of the block
//! output is the step's decision contribution; the second half feeds the next
//! step's attention. A prior scale `P ← P ⊙ (γ − M)` discourages reusing
//! features across steps.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{
    glu, BatchNorm, BatchStats, Linear, Mode, NamedTensor, ParamSet, Snapshot, Tape, Tensor, Var,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabNetConfig {
    pub input_dim: usize,
    pub n_steps: usize,
    /// Decision width.
    pub n_d: usize,
    /// Attention width.
    pub n_a: usize,
    /// Relaxation of the prior scale; 1 forbids any reuse of a fully
    /// selected feature.
    pub gamma: f64,
    pub n_shared: usize,
    pub n_independent: usize,
    pub latent_dim: usize,
    pub projection_dim: usize,
}

impl Default for TabNetConfig {
    fn default() -> Self {
        TabNetConfig {
            input_dim: 300,
            n_steps: 3,
            n_d: 64,
            n_a: 64,
            gamma: 1.3,
            n_shared: 2,
            n_independent: 2,
            latent_dim: 64,
            projection_dim: 64,
        }
    }
}

impl TabNetConfig {
    pub fn with_input_dim(input_dim: usize) -> Self {
        TabNetConfig {
            input_dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("n_steps", self.n_steps),
            ("n_d", self.n_d),
            ("n_a", self.n_a),
            ("latent_dim", self.latent_dim),
            ("projection_dim", self.projection_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("tabnet {name} must be positive")));
        }
        if self.n_shared + self.n_independent == 0 {
            return Err(Error::invalid("tabnet needs at least one GLU layer per step"));
        }
        if self.latent_dim != self.n_d {
            return Err(Error::invalid(format!(
                "latent_dim ({}) must equal n_d ({})",
                self.latent_dim, self.n_d
            )));
        }
        if !(self.gamma >= 1.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("relaxation gamma must be >= 1, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Per-step masks, decision outputs and prior scales from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// `M_t`, batch × input_dim.
    pub masks: Vec<Tensor>,
    /// ReLU decision outputs, batch × n_d.
    pub decisions: Vec<Tensor>,
    /// Prior scale after each step.
    pub priors: Vec<Tensor>,
}

pub struct EncodeOutput {
    pub latent: Var,
    pub projected: Var,
    pub trace: StepTrace,
    /// Batch statistics in train mode, in [`TabNetEncoder::apply_batch_stats`] order.
    pub batch_stats: Vec<BatchStats>,
}

#[derive(Debug, Clone, PartialEq)]
struct AttentiveTransformer {
    fc: Linear,
    bn: BatchNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabNetEncoder {
    config: TabNetConfig,
    params: ParamSet,
    input_bn: BatchNorm,
    shared: Vec<Linear>,
    /// Index 0 feeds the first attention step; index `t + 1` belongs to step `t`.
    specific: Vec<Vec<Linear>>,
    attentive: Vec<AttentiveTransformer>,
    final_fc: Linear,
    head_hidden: Linear,
    head_out: Linear,
}

impl TabNetEncoder {
    /// Glorot-initialised encoder; weights are drawn from the named stream
    /// `label` under `seed`.
    pub fn new(config: TabNetConfig, seed: u64, label: &str) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, label);
        let mut params = ParamSet::new();
        let hidden = config.n_d + config.n_a;

        let input_bn = BatchNorm::new(&mut params, "input_bn", config.input_dim);
        let shared = (0..config.n_shared)
            .map(|i| {
                let in_dim = if i == 0 { config.input_dim } else { hidden };
                Linear::new(&mut params, &format!("shared.{i}"), in_dim, 2 * hidden, &mut rng)
            })
            .collect();
        let specific = (0..=config.n_steps)
            .map(|s| {
                (0..config.n_independent)
                    .map(|i| {
                        let in_dim = if i == 0 && config.n_shared == 0 { config.input_dim } else { hidden };
                        Linear::new(&mut params, &format!("step{s}.glu{i}"), in_dim, 2 * hidden, &mut rng)
                    })
                    .collect()
            })
            .collect();
        let attentive = (0..config.n_steps)
            .map(|t| AttentiveTransformer {
                fc: Linear::new(&mut params, &format!("att{t}.fc"), config.n_a, config.input_dim, &mut rng),
                bn: BatchNorm::new(&mut params, &format!("att{t}.bn"), config.input_dim),
            })
            .collect();
        let final_fc = Linear::new(&mut params, "final", config.n_d, config.latent_dim, &mut rng);
        let head_hidden = Linear::new(&mut params, "head.0", config.latent_dim, config.projection_dim, &mut rng);
        let head_out = Linear::new(&mut params, "head.1", config.projection_dim, config.projection_dim, &mut rng);

        Ok(TabNetEncoder {
            config,
            params,
            input_bn,
            shared,
            specific,
            attentive,
            final_fc,
            head_hidden,
            head_out,
        })
    }

    pub fn config(&self) -> &TabNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        std::iter::once(&self.input_bn).chain(self.attentive.iter().map(|a| &a.bn))
    }

    fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm> {
        std::iter::once(&mut self.input_bn).chain(self.attentive.iter_mut().map(|a| &mut a.bn))
    }

    /// Folds train-mode batch statistics into the running estimates.
    pub fn apply_batch_stats(&mut self, stats: &[BatchStats]) {
        for (bn, s) in self.batch_norms_mut().zip(stats) {
            bn.update(s);
        }
    }

    /// Shared then step-specific GLU layers; every layer after the first is
    /// residual, `h ← (h + glu(h))·√½`.
    fn feature_transformer(&self, tape: &mut Tape, bound: &[Var], x: Var, stack: usize) -> Result<Var> {
        let mut h = x;
        let layers = self.shared.iter().chain(&self.specific[stack]);
        for (i, layer) in layers.enumerate() {
            let g = glu(tape, h, bound[layer.weight.0], bound[layer.bias.0])?;
            h = if i == 0 {
                g
            } else {
                let sum = tape.add(h, g)?;
                tape.affine(sum, std::f64::consts::FRAC_1_SQRT_2, 0.0)?
            };
        }
        Ok(h)
    }

    /// Forward pass on a tape. `bound` comes from binding [`Self::params`]
    /// onto the same tape.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var, mode: Mode) -> Result<EncodeOutput> {
        let cfg = &self.config;
        let (batch, width) = tape.value(x).shape();
        if width != cfg.input_dim {
            return Err(Error::shape(
                "tabnet encode",
                format!("input has {width} columns, encoder expects {}", cfg.input_dim),
            ));
        }
        let hidden = cfg.n_d + cfg.n_a;
        let mut batch_stats = Vec::new();

        let (xb, stats) = self.input_bn.forward(tape, bound, x, mode)?;
        batch_stats.extend(stats);
        let first = self.feature_transformer(tape, bound, xb, 0)?;
        let mut att = tape.slice_cols(first, cfg.n_d, hidden)?;

        let mut prior = tape.leaf(Tensor::filled(batch, cfg.input_dim, 1.0))?;
        let mut aggregate: Option<Var> = None;
        let mut trace = StepTrace {
            masks: Vec::with_capacity(cfg.n_steps),
            decisions: Vec::with_capacity(cfg.n_steps),
            priors: Vec::with_capacity(cfg.n_steps),
        };

        for (t, at) in self.attentive.iter().enumerate() {
            let a = at.fc.forward(tape, bound, att)?;
            let (a, stats) = at.bn.forward(tape, bound, a, mode)?;
            batch_stats.extend(stats);
            let logits = tape.mul(a, prior)?;
            // features with zero prior are out of the running entirely
            let allowed: Vec<bool> = tape.value(prior).as_slice().iter().map(|&p| p > 0.0).collect();
            let mask = tape.sparsemax(logits, Some(allowed))?;
            let relax = tape.affine(mask, -1.0, cfg.gamma)?;
            prior = tape.mul(prior, relax)?;

            let masked = tape.mul(mask, xb)?;
            let out = self.feature_transformer(tape, bound, masked, t + 1)?;
            let d = tape.slice_cols(out, 0, cfg.n_d)?;
            let d = tape.relu(d)?;
            aggregate = Some(match aggregate {
                None => d,
                Some(acc) => tape.add(acc, d)?,
            });
            att = tape.slice_cols(out, cfg.n_d, hidden)?;

            trace.masks.push(tape.value(mask).clone());
            trace.decisions.push(tape.value(d).clone());
            trace.priors.push(tape.value(prior).clone());
        }

        let aggregate = aggregate.expect("n_steps > 0");
        let latent = self.final_fc.forward(tape, bound, aggregate)?;
        let h = self.head_hidden.forward(tape, bound, latent)?;
        let h = tape.relu(h)?;
        let projected = self.head_out.forward(tape, bound, h)?;
        Ok(EncodeOutput {
            latent,
            projected,
            trace,
            batch_stats,
        })
    }

    /// Eval-mode forward pass returning plain values:
    /// `(latent, projected, trace)`.
    pub fn encode(&self, x: &Tensor) -> Result<(Tensor, Tensor, StepTrace)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let xv = tape.leaf(x.clone())?;
        let out = self.forward(&mut tape, &bound, xv, Mode::Eval)?;
        Ok((
            tape.value(out.latent).clone(),
            tape.value(out.projected).clone(),
            out.trace,
        ))
    }

    pub fn to_snapshot(&self) -> Result<Snapshot> {
        let mut tensors: Vec<NamedTensor> = self
            .params
            .names()
            .iter()
            .zip(self.params.values())
            .map(|(n, v)| NamedTensor::new(n.clone(), v))
            .collect();
        for (i, bn) in self.batch_norms().enumerate() {
            tensors.push(NamedTensor::new(format!("bn{i}.running_mean"), &Tensor::row_vector(&bn.running_mean)));
            tensors.push(NamedTensor::new(format!("bn{i}.running_var"), &Tensor::row_vector(&bn.running_var)));
        }
        Ok(Snapshot::new(serde_json::json!({ "tabnet": self.config }), tensors))
    }

    /// Rebuilds an encoder from [`Self::to_snapshot`] output.
    pub fn from_snapshot(snap: &Snapshot) -> Result<Self> {
        let config: TabNetConfig = serde_json::from_value(
            snap.meta
                .get("tabnet")
                .cloned()
                .ok_or_else(|| Error::invalid("snapshot has no tabnet config"))?,
        )?;
        let mut enc = TabNetEncoder::new(config, 0, "snapshot")?;
        let lookup = |name: &str| -> Result<Tensor> {
            snap.get(name)
                .ok_or_else(|| Error::invalid(format!("snapshot is missing `{name}`")))?
                .to_tensor()
        };
        let names = enc.params.names().to_vec();
        for (name, slot) in names.iter().zip(enc.params.values_mut()) {
            let t = lookup(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::shape("snapshot", format!("`{name}` is {:?}, expected {:?}", t.shape(), slot.shape())));
            }
            *slot = t;
        }
        for (i, bn) in enc.batch_norms_mut().enumerate() {
            bn.running_mean = lookup(&format!("bn{i}.running_mean"))?.into_vec();
            bn.running_var = lookup(&format!("bn{i}.running_var"))?.into_vec();
        }
        Ok(enc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportances {
    /// Non-negative, sums to 1.
    pub weights: Vec<f64>,
    /// Set when every decision contribution was zero and the weights fell
    /// back to uniform.
    pub uniform_fallback: bool,
}

/// Global feature importances: masks weighted per sample by that step's total
/// ReLU decision output, averaged over the batch and normalised.
pub fn feature_importances(trace: &StepTrace) -> Result<FeatureImportances> {
    let first = trace
        .masks
        .first()
        .ok_or_else(|| Error::invalid("trace has no decision steps"))?;
    let (batch, width) = first.shape();
    let mut weights = vec![0.0; width];
    for (mask, decision) in trace.masks.iter().zip(&trace.decisions) {
        for b in 0..batch {
            let eta: f64 = decision.row(b).iter().sum();
            for (w, &m) in weights.iter_mut().zip(mask.row(b)) {
                *w += eta * m / batch as f64;
            }
        }
    }
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(FeatureImportances {
            weights,
            uniform_fallback: false,
        })
    } else {
        log::warn!("all decision contributions are zero; importances are uniform");
        Ok(FeatureImportances {
            weights: vec![1.0 / width as f64; width],
            uniform_fallback: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(input_dim: usize) -> TabNetConfig {
        TabNetConfig {
            input_dim,
            n_steps: 3,
            n_d: 8,
            n_a: 8,
            gamma: 1.3,
            n_shared: 2,
            n_independent: 2,
            latent_dim: 8,
            projection_dim: 8,
        }
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Tensor {
        use rand::Rng;
        let mut r = rng::stream(seed, "input");
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn default_shapes() {
        let enc = TabNetEncoder::new(TabNetConfig::with_input_dim(300), 42, "g").unwrap();
        let x = random_input(5, 300, 1);
        let mut tape = Tape::new();
        let bound = enc.params().bind(&mut tape).unwrap();
        let xv = tape.leaf(x).unwrap();
        let out = enc.forward(&mut tape, &bound, xv, Mode::Train).unwrap();
        assert_eq!(tape.value(out.latent).shape(), (5, 64));
        assert_eq!(tape.value(out.projected).shape(), (5, 64));
        assert_eq!(out.trace.masks.len(), 3);
        assert_eq!(out.batch_stats.len(), 4);
    }

    #[test]
    fn masks_on_simplex_and_prior_identity() {
        let cfg = small_config(20);
        let enc = TabNetEncoder::new(cfg.clone(), 3, "enc").unwrap();
        let (_, _, trace) = enc.encode(&random_input(6, 20, 2)).unwrap();
        let mut expected = Tensor::filled(6, 20, 1.0);
        for (mask, prior) in trace.masks.iter().zip(&trace.priors) {
            for row in mask.iter_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&v| v >= 0.0));
            }
            expected = expected.zip_map(mask, |p, m| p * (cfg.gamma - m));
            assert_eq!(&expected, prior);
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let enc = TabNetEncoder::new(small_config(10), 3, "enc").unwrap();
        assert!(enc.encode(&Tensor::zeros(2, 11)).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(10);
        c.latent_dim = 4;
        assert!(c.validate().is_err());
        let mut c = small_config(10);
        c.gamma = 0.5;
        assert!(c.validate().is_err());
        let mut c = small_config(10);
        c.n_steps = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let enc = TabNetEncoder::new(small_config(12), 9, "enc").unwrap();
        let json = enc.to_snapshot().unwrap().to_json().unwrap();
        let back = TabNetEncoder::from_snapshot(&Snapshot::from_json(&json).unwrap()).unwrap();
        assert_eq!(back, enc);
    }

    #[test]
    fn importances_single_step_single_sample() {
        let trace = StepTrace {
            masks: vec![Tensor::from_rows(&[[0.2, 0.0, 0.8]]).unwrap()],
            decisions: vec![Tensor::from_rows(&[[0.5, 1.5]]).unwrap()],
            priors: vec![],
        };
        let imp = feature_importances(&trace).unwrap();
        assert!(!imp.uniform_fallback);
        for (a, b) in imp.weights.iter().zip([0.2, 0.0, 0.8]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn importances_fall_back_to_uniform() {
        let trace = StepTrace {
            masks: vec![Tensor::from_rows(&[[1.0, 0.0]]).unwrap()],
            decisions: vec![Tensor::zeros(1, 3)],
            priors: vec![],
        };
        let imp = feature_importances(&trace).unwrap();
        assert!(imp.uniform_fallback);
        assert_eq!(imp.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn importances_are_normalized() {
        let enc = TabNetEncoder::new(small_config(15), 5, "enc").unwrap();
        let (_, _, trace) = enc.encode(&random_input(7, 15, 4)).unwrap();
        let imp = feature_importances(&trace).unwrap();
        assert!((imp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(imp.weights.iter().all(|&w| w >= 0.0));
    }
}
