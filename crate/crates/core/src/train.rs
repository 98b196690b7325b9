//! Mini-batch training driver: encode -> forward -> loss -> backward ->
//! update, with the sparsity probe fed from the stored records.
//!
//! Images in a batch are processed in parallel; per-image weight gradients
//! are reduced in index order and probe tallies merge commutatively, so
//! results are identical for any thread count under a fixed seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KvConfig;
use crate::encode::{image_seed, poisson_encode};
use crate::error::{Error, Result};
use crate::lif::LifParams;
use crate::mnist::Dataset;
use crate::network::{LayerSpec, NetworkSpec};
use crate::parallel::{map_indexed, Parallelism};
use crate::probe::{SparsityProbe, TensorKind};
use crate::snn::{
    apply_sgd, backward_pass, forward_pass, softmax_cross_entropy, GradientRecord, LayerRecord,
    SgdState, Weights,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub timesteps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let tc = TrainConfig {
            timesteps: cfg.require_usize("timesteps")?,
            lr: cfg.require_f64("lr")?,
            momentum: cfg.get_f64("momentum")?.unwrap_or(0.0),
            weight_decay: cfg.get_f64("weight_decay")?.unwrap_or(0.0),
            epochs: cfg.get_usize("epochs")?.unwrap_or(1),
            batch_size: cfg.get_usize("batch_size")?.unwrap_or(32),
            seed: cfg.get_f64("seed")?.unwrap_or(0.0) as u64,
        };
        tc.validate()?;
        Ok(tc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.timesteps == 0 {
            return Err(Error::Validation("timesteps must be >= 1".into()));
        }
        // lr = 0 is allowed: it turns an epoch into a pure measurement pass
        if self.lr < 0.0 {
            return Err(Error::Validation("lr must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
    pub images: usize,
}

/// Probe row for each network layer: row 0 is the encoded input, conv/FC
/// layers follow in order, pool layers have no row.
pub fn probe_layer_names(net: &NetworkSpec) -> Vec<String> {
    let mut names = vec!["inp".to_string()];
    names.extend(net.conv_fc_dims().into_iter().map(|d| d.name));
    names
}

fn probe_rows(net: &NetworkSpec) -> Vec<Option<usize>> {
    let mut rows = Vec::with_capacity(net.layers.len());
    let mut next = 1usize;
    for layer in &net.layers {
        match layer {
            LayerSpec::Conv { .. } | LayerSpec::Fc { .. } => {
                rows.push(Some(next));
                next += 1;
            }
            LayerSpec::Pool { .. } => rows.push(None),
        }
    }
    rows
}

fn record_sparsity(
    shard: &mut SparsityProbe,
    net: &NetworkSpec,
    rec: &crate::snn::ForwardRecord,
    grads: &GradientRecord,
) -> Result<()> {
    for t in 0..rec.timesteps {
        shard.record_step(0, TensorKind::Spikes, rec.input_spikes[t].data())?;
    }
    let rows = probe_rows(net);
    for (idx, layer_rec) in rec.layers.iter().enumerate() {
        let Some(row) = rows[idx] else { continue };
        match layer_rec {
            LayerRecord::Lif { u, s } => {
                for t in 0..rec.timesteps {
                    shard.record_step(row, TensorKind::Spikes, s[t].data())?;
                    shard.record_step(row, TensorKind::GradFMask, u[t].data())?;
                    shard.record_step(row, TensorKind::GradU, grads.du[idx][t].data())?;
                }
            }
            LayerRecord::Output => {
                for t in 0..rec.timesteps {
                    shard.record_step(row, TensorKind::GradU, grads.du[idx][t].data())?;
                }
            }
            LayerRecord::Pool { .. } => {}
        }
    }
    Ok(())
}

struct ImageResult {
    loss: f64,
    correct: bool,
    dw: Vec<Option<Tensor>>,
    shard: SparsityProbe,
}

fn process_image(
    net: &NetworkSpec,
    weights: &Weights,
    lif: &LifParams,
    cfg: &TrainConfig,
    probe: &SparsityProbe,
    epoch: usize,
    index: usize,
    image: &Tensor,
    label: usize,
) -> Result<ImageResult> {
    let spikes = poisson_encode(image, cfg.timesteps, image_seed(cfg.seed, epoch, index))?;
    let rec = forward_pass(net, weights, &spikes, lif)?;
    let (loss, dlogits) = softmax_cross_entropy(&rec.logits, label);
    let grads = backward_pass(&rec, &dlogits, net, weights, lif, true)?;
    let correct = argmax(&rec.logits) == label;
    let mut shard = probe.shard();
    record_sparsity(&mut shard, net, &rec, &grads)?;
    Ok(ImageResult {
        loss,
        correct,
        dw: grads.dw,
        shard,
    })
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Runs one epoch over the dataset, updating `weights` in place and feeding
/// every spike/window/gradient tensor to `probe`.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    net: &NetworkSpec,
    weights: &mut Weights,
    state: &mut SgdState,
    data: &Dataset,
    cfg: &TrainConfig,
    lif: &LifParams,
    probe: &mut SparsityProbe,
    epoch: usize,
    par: Parallelism,
) -> Result<EpochMetrics> {
    if data.is_empty() {
        return Err(Error::Validation("train_epoch: empty dataset".into()));
    }
    cfg.validate()?;

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(image_seed(cfg.seed, epoch, usize::MAX));
    order.shuffle(&mut rng);

    let mut total_loss = 0.0;
    let mut total_correct = 0usize;
    for batch in order.chunks(cfg.batch_size) {
        let results = map_indexed(batch, par, |_, &idx| {
            process_image(
                net,
                weights,
                lif,
                cfg,
                probe,
                epoch,
                idx,
                &data.images[idx],
                data.labels[idx] as usize,
            )
        });
        // fixed-order reduction: batch index order regardless of thread count
        let mut dw_sum: Vec<Option<Tensor>> = vec![None; net.layers.len()];
        let mut n = 0usize;
        for result in results {
            let r = result?;
            total_loss += r.loss;
            total_correct += r.correct as usize;
            probe.merge(&r.shard);
            for (slot, grad) in dw_sum.iter_mut().zip(r.dw.into_iter()) {
                match (slot.as_mut(), grad) {
                    (None, Some(g)) => *slot = Some(g),
                    (Some(acc), Some(g)) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    _ => {}
                }
            }
            n += 1;
        }
        let scale = 1.0 / n as f64;
        for slot in dw_sum.iter_mut().flatten() {
            for v in slot.data_mut() {
                *v *= scale;
            }
        }
        apply_sgd(weights, &dw_sum, cfg.lr, cfg.momentum, cfg.weight_decay, state)?;
    }

    Ok(EpochMetrics {
        epoch,
        mean_loss: total_loss / data.len() as f64,
        accuracy: total_correct as f64 / data.len() as f64,
        images: data.len(),
    })
}

/// Classification accuracy over a dataset, encoding with a fixed seed tag so
/// repeated evaluations are deterministic.
pub fn evaluate(
    net: &NetworkSpec,
    weights: &Weights,
    data: &Dataset,
    timesteps: usize,
    seed: u64,
    lif: &LifParams,
    par: Parallelism,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Validation("evaluate: empty dataset".into()));
    }
    const EVAL_TAG: usize = usize::MAX - 1;
    let indices: Vec<usize> = (0..data.len()).collect();
    let results = map_indexed(&indices, par, |_, &idx| -> Result<bool> {
        let spikes = poisson_encode(&data.images[idx], timesteps, image_seed(seed, EVAL_TAG, idx))?;
        let rec = forward_pass(net, weights, &spikes, lif)?;
        Ok(argmax(&rec.logits) == data.labels[idx] as usize)
    });
    let mut correct = 0usize;
    for r in results {
        correct += r? as usize;
    }
    Ok(correct as f64 / data.len() as f64)
}
