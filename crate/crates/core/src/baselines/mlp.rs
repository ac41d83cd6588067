//! Neural baselines on the concatenated feature matrix.

use crate::contrastive::shuffled_batches;
use crate::error::{Error, Result};
use crate::eval::kmeans;
use crate::rng;
use crate::tensor::{AdamConfig, AdamState, Denominator, Linear, ParamSet, Tape, Tensor, Var};
use rand::Rng;

/// `in → hidden (ReLU) → out`.
#[derive(Debug, Clone)]
pub(crate) struct Mlp {
    pub params: ParamSet,
    first: Linear,
    second: Linear,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(name: &str, dims: [usize; 3], rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        let first = Linear::new(&mut params, &format!("{name}.0"), dims[0], dims[1], rng);
        let second = Linear::new(&mut params, &format!("{name}.1"), dims[1], dims[2], rng);
        Mlp { params, first, second }
    }

    /// Returns `(hidden activations, output)`.
    pub fn forward(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<(Var, Var)> {
        let h = self.first.forward(tape, bound, x)?;
        let h = tape.relu(h)?;
        let out = self.second.forward(tape, bound, h)?;
        Ok((h, out))
    }

    pub fn eval(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let xv = tape.leaf(x.clone())?;
        let (h, out) = self.forward(&mut tape, &bound, xv)?;
        Ok((tape.value(h).clone(), tape.value(out).clone()))
    }
}

fn adam(lr: f64, params: &ParamSet) -> AdamState {
    AdamState::new(AdamConfig { lr, ..AdamConfig::default() }, params.values())
}

fn check_loss(method: &str, epoch: usize, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{method}: non-finite loss in epoch {}", epoch + 1)))
    }
}

/// Maps tape failures from non-finite values to a numerical error.
fn numerical<T>(method: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(what) => Error::Numerical(format!("{method}: non-finite {what}")),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeFit {
    /// Bottleneck activations, one row per input row.
    pub embedding: Tensor,
    pub loss_history: Vec<f64>,
}

/// Autoencoder `d → hidden (ReLU) → d` trained on mean squared error.
pub fn ae_train(x: &Tensor, hidden: usize, tp: TrainParams) -> Result<AeFit> {
    let d = x.cols();
    let mut net = Mlp::new("ae", [d, hidden, d], &mut rng::stream(tp.seed, "ae/init"));
    let mut opt = adam(tp.lr, &net.params);
    let mut history = Vec::with_capacity(tp.epochs);
    for epoch in 0..tp.epochs {
        let batches = shuffled_batches(
            x.rows(),
            tp.batch_size,
            &mut rng::stream(tp.seed, &format!("ae/batches/epoch-{epoch}")),
        );
        let mut total = 0.0;
        for idx in &batches {
            let batch = x.select_rows(idx);
            let mut tape = Tape::new();
            let bound = net.params.bind(&mut tape)?;
            let (loss, grads) = numerical("ae", (|| {
                let xv = tape.leaf(batch.clone())?;
                let (_, recon) = net.forward(&mut tape, &bound, xv)?;
                let loss = tape.mse(recon, &batch)?;
                let grads = tape.backward(loss)?;
                Ok((tape.value(loss).get(0, 0), grads))
            })())?;
            check_loss("ae", epoch, loss)?;
            let g = net.params.collect_grads(&tape, &grads, &bound);
            opt.step(net.params.values_mut(), &g)?;
            total += loss;
        }
        history.push(total / batches.len() as f64);
    }
    let (embedding, _) = net.eval(x)?;
    Ok(AeFit {
        embedding,
        loss_history: history,
    })
}

/// Zeroes each entry independently with probability `p`.
pub fn feature_dropout<R: Rng + ?Sized>(x: &Tensor, p: f64, rng: &mut R) -> Tensor {
    let data = x.as_slice().iter().map(|&v| if rng.random::<f64>() < p { 0.0 } else { v }).collect();
    Tensor::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimclrParams {
    pub hidden: usize,
    pub latent: usize,
    pub projection: usize,
    pub mask_prob: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimclrFit {
    /// Encoder latents of the un-augmented input.
    pub embedding: Tensor,
    pub loss_history: Vec<f64>,
}

/// Single-view SimCLR: two feature-dropout views per row, MLP encoder plus a
/// linear projection, NT-Xent excluding self-similarities.
pub fn simclr_mlp_train(x: &Tensor, sp: SimclrParams, tp: TrainParams) -> Result<SimclrFit> {
    if !(sp.mask_prob > 0.0 && sp.mask_prob < 1.0) {
        return Err(Error::invalid(format!("mask probability must lie in (0, 1), got {}", sp.mask_prob)));
    }
    let mut init = rng::stream(tp.seed, "simclr/init");
    let mut enc = Mlp::new("simclr.encoder", [x.cols(), sp.hidden, sp.latent], &mut init);
    let proj = Linear::new(&mut enc.params, "simclr.projection", sp.latent, sp.projection, &mut init);
    let mut opt = adam(tp.lr, &enc.params);
    let mut history = Vec::with_capacity(tp.epochs);
    for epoch in 0..tp.epochs {
        let batches = shuffled_batches(
            x.rows(),
            tp.batch_size,
            &mut rng::stream(tp.seed, &format!("simclr/batches/epoch-{epoch}")),
        );
        let mut aug = rng::stream(tp.seed, &format!("simclr/augment/epoch-{epoch}"));
        let mut total = 0.0;
        for idx in &batches {
            let batch = x.select_rows(idx);
            let (v1, v2) = (feature_dropout(&batch, sp.mask_prob, &mut aug), feature_dropout(&batch, sp.mask_prob, &mut aug));
            let mut tape = Tape::new();
            let bound = enc.params.bind(&mut tape)?;
            let (loss, grads) = numerical("simclr", (|| {
                let a = tape.leaf(v1)?;
                let b = tape.leaf(v2)?;
                let (_, za) = enc.forward(&mut tape, &bound, a)?;
                let (_, zb) = enc.forward(&mut tape, &bound, b)?;
                let pa = proj.forward(&mut tape, &bound, za)?;
                let pb = proj.forward(&mut tape, &bound, zb)?;
                let z = tape.vstack(pa, pb)?;
                let loss = tape.nt_xent(z, sp.temperature, Denominator::ExcludeSelf)?;
                let grads = tape.backward(loss)?;
                Ok((tape.value(loss).get(0, 0), grads))
            })())?;
            check_loss("simclr", epoch, loss)?;
            let g = enc.params.collect_grads(&tape, &grads, &bound);
            opt.step(enc.params.values_mut(), &g)?;
            total += loss;
        }
        history.push(total / batches.len() as f64);
    }
    let (_, embedding) = enc.eval(x)?;
    Ok(SimclrFit {
        embedding,
        loss_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeepClusterParams {
    pub hidden: usize,
    pub latent: usize,
    pub k_pseudo: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepClusterFit {
    pub embedding: Tensor,
    pub loss_history: Vec<f64>,
    /// k-means pseudo-labels computed at the start of each epoch.
    pub pseudo_labels: Vec<Vec<usize>>,
    /// Checksum of the freshly initialised classifier head, per epoch.
    pub head_checksums: Vec<u64>,
}

/// Alternates k-means pseudo-labelling of the current latents with one
/// epoch of cross-entropy training through a newly initialised linear head.
pub fn deepcluster_train(x: &Tensor, dp: DeepClusterParams, tp: TrainParams) -> Result<DeepClusterFit> {
    if dp.k_pseudo < 2 {
        return Err(Error::invalid(format!("k_pseudo must be at least 2, got {}", dp.k_pseudo)));
    }
    if dp.k_pseudo > x.rows() {
        return Err(Error::invalid(format!(
            "k_pseudo = {} exceeds the number of rows ({})",
            dp.k_pseudo,
            x.rows()
        )));
    }
    let mut enc = Mlp::new(
        "deepcluster.encoder",
        [x.cols(), dp.hidden, dp.latent],
        &mut rng::stream(tp.seed, "deepcluster/init"),
    );
    let mut enc_opt = adam(tp.lr, &enc.params);
    let mut fit = DeepClusterFit {
        embedding: Tensor::default(),
        loss_history: Vec::with_capacity(tp.epochs),
        pseudo_labels: Vec::with_capacity(tp.epochs),
        head_checksums: Vec::with_capacity(tp.epochs),
    };
    for epoch in 0..tp.epochs {
        let (_, latent) = enc.eval(x)?;
        let km_seed = rng::stream(tp.seed, &format!("deepcluster/kmeans/epoch-{epoch}")).random();
        let labels = kmeans(&latent, dp.k_pseudo, 10, 300, km_seed)?.labels;

        let mut head_params = ParamSet::new();
        let head = Linear::new(
            &mut head_params,
            "deepcluster.head",
            dp.latent,
            dp.k_pseudo,
            &mut rng::stream(tp.seed, &format!("deepcluster/head/epoch-{epoch}")),
        );
        fit.head_checksums.push(head_params.checksum());
        let mut head_opt = adam(tp.lr, &head_params);

        let batches = shuffled_batches(
            x.rows(),
            tp.batch_size,
            &mut rng::stream(tp.seed, &format!("deepcluster/batches/epoch-{epoch}")),
        );
        let mut total = 0.0;
        for idx in &batches {
            let batch = x.select_rows(idx);
            let targets: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let mut tape = Tape::new();
            let bound_enc = enc.params.bind(&mut tape)?;
            let bound_head = head_params.bind(&mut tape)?;
            let (loss, grads) = numerical("deepcluster", (|| {
                let xv = tape.leaf(batch)?;
                let (_, z) = enc.forward(&mut tape, &bound_enc, xv)?;
                let logits = head.forward(&mut tape, &bound_head, z)?;
                let loss = tape.softmax_cross_entropy(logits, &targets)?;
                let grads = tape.backward(loss)?;
                Ok((tape.value(loss).get(0, 0), grads))
            })())?;
            check_loss("deepcluster", epoch, loss)?;
            let g = enc.params.collect_grads(&tape, &grads, &bound_enc);
            enc_opt.step(enc.params.values_mut(), &g)?;
            let g = head_params.collect_grads(&tape, &grads, &bound_head);
            head_opt.step(head_params.values_mut(), &g)?;
            total += loss;
        }
        fit.loss_history.push(total / batches.len() as f64);
        fit.pseudo_labels.push(labels);
    }
    fit.embedding = enc.eval(x)?.1;
    Ok(fit)
}
