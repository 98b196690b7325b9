//! Reference forward and backward passes for rate-coded LIF networks,
//! unrolled over time.
//!
//! Hidden conv/FC layers integrate-and-fire each timestep; the final FC
//! layer accumulates potential across all timesteps without leaking or
//! firing, and its accumulated potentials are the logits.
//!
//! The backward pass iterates timesteps last-to-first and layers deep-to-
//! shallow. The potential gradient recurrence is
//! `du_t = du_{t+1} * alpha * (1 - s_t) + ds_t * f'(u_t)` with
//! `ds_t = du_{t+1} * (-alpha * u_t) + dh_t`, where `dh` is the gradient
//! arriving from the layer above through the transposed filters, and
//! `du_{T+1} = 0`. In sparse mode, elements with `f'(u_t) = 0` take the
//! specialized path `du_t = alpha * du_{t+1} * (1 - s_t)` (the spike-gradient
//! term is exactly zero there) and the transposed convolution skips output
//! positions whose `du` row is entirely zero. Both eliding rules remove only
//! exact zeros, so sparse and dense modes produce bit-identical `du`, `dh`,
//! and weight gradients; skipped `ds` entries are left as 0.0 rather than
//! materialized.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::layers::{self, ConvDims};
use crate::lif::{surrogate_grad, LifParams};
use crate::network::{LayerSpec, NetworkSpec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    /// `[C][R][R][K]` filters.
    Conv(Tensor),
    /// `[IN][OUT]` matrix.
    Fc(Tensor),
    Pool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<LayerWeights>,
}

impl Weights {
    /// He-style normal init, scaled by fan-in. No bias terms anywhere.
    pub fn init(net: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = net
            .layers
            .iter()
            .map(|layer| match layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                } => {
                    let fan_in = in_channels * kernel * kernel;
                    let std = (2.0 / fan_in as f64).sqrt();
                    let normal = Normal::new(0.0, std).unwrap();
                    let len = in_channels * kernel * kernel * out_channels;
                    let data: Vec<f64> = (0..len).map(|_| normal.sample(&mut rng)).collect();
                    LayerWeights::Conv(
                        Tensor::from_vec(&[*in_channels, *kernel, *kernel, *out_channels], data)
                            .unwrap(),
                    )
                }
                LayerSpec::Fc {
                    in_features,
                    out_features,
                } => {
                    let std = (2.0 / *in_features as f64).sqrt();
                    let normal = Normal::new(0.0, std).unwrap();
                    let data: Vec<f64> = (0..in_features * out_features)
                        .map(|_| normal.sample(&mut rng))
                        .collect();
                    LayerWeights::Fc(
                        Tensor::from_vec(&[*in_features, *out_features], data).unwrap(),
                    )
                }
                LayerSpec::Pool { .. } => LayerWeights::Pool,
            })
            .collect();
        Weights { layers }
    }
}

#[derive(Debug, Clone)]
pub enum LayerRecord {
    /// Hidden LIF layer: stored potentials and spikes for every timestep.
    Lif { u: Vec<Tensor>, s: Vec<Tensor> },
    /// Pool layer: pooled spikes and argmax routing indices per timestep.
    Pool { s: Vec<Tensor>, argmax: Vec<Vec<u32>> },
    /// Output accumulator; the logits live on the record.
    Output,
}

#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub input_spikes: Vec<Tensor>,
    pub layers: Vec<LayerRecord>,
    pub logits: Vec<f64>,
    pub timesteps: usize,
}

#[derive(Debug, Clone)]
pub struct GradientRecord {
    /// Potential gradients per layer per timestep. For the output layer this
    /// is the loss gradient at the logits, repeated each timestep; empty for
    /// pool layers.
    pub du: Vec<Vec<Tensor>>,
    /// Spike gradients for hidden LIF layers. In sparse mode, entries where
    /// `f'(u) = 0` are skipped and left 0.0.
    pub ds: Vec<Vec<Tensor>>,
    /// Gradients arriving from the layer above, per hidden LIF layer.
    pub dh: Vec<Vec<Tensor>>,
    /// Weight gradients per layer (None for pool layers).
    pub dw: Vec<Option<Tensor>>,
}

fn conv_dims(layer: &LayerSpec) -> ConvDims {
    match layer {
        LayerSpec::Conv {
            in_channels,
            in_size,
            out_channels,
            out_size,
            kernel,
            stride,
            pad,
        } => ConvDims {
            c: *in_channels,
            h: *in_size,
            k: *out_channels,
            e: *out_size,
            r: *kernel,
            stride: *stride,
            pad: *pad,
        },
        _ => unreachable!("conv_dims on non-conv layer"),
    }
}

/// Runs the unrolled forward pass, storing potentials and spikes for every
/// layer and timestep (the BPTT storage requirement).
pub fn forward_pass(
    net: &NetworkSpec,
    weights: &Weights,
    input_spikes: &[Tensor],
    lif: &LifParams,
) -> Result<ForwardRecord> {
    let t_steps = input_spikes.len();
    if t_steps == 0 {
        return Err(Error::Validation("forward_pass: empty spike input".into()));
    }
    let expect = net.input_size * net.input_size * net.input_channels;
    for s in input_spikes {
        if s.len() != expect {
            return Err(Error::Validation(format!(
                "input spike tensor has {} elements, expected {expect}",
                s.len()
            )));
        }
        if !s.is_binary() {
            return Err(Error::Validation("input spikes are not binary".into()));
        }
    }
    if weights.layers.len() != net.layers.len() {
        return Err(Error::Validation(format!(
            "weights have {} layers, network has {}",
            weights.layers.len(),
            net.layers.len()
        )));
    }

    let output_idx = net.output_layer();
    let mut layers_rec: Vec<LayerRecord> = Vec::with_capacity(net.layers.len());
    let mut logits: Vec<f64> = Vec::new();
    // spikes of the previous layer, per timestep
    let mut prev: Vec<Tensor> = input_spikes.to_vec();

    for (idx, layer) in net.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv { .. } => {
                let d = conv_dims(layer);
                let w = match &weights.layers[idx] {
                    LayerWeights::Conv(w) => w,
                    _ => return Err(Error::Validation(format!("layer {idx}: weight kind mismatch"))),
                };
                let mut u_hist = Vec::with_capacity(t_steps);
                let mut s_hist = Vec::with_capacity(t_steps);
                let shape = [d.e, d.e, d.k];
                let mut u_state = Tensor::zeros(&shape);
                let mut s_state = Tensor::zeros(&shape);
                for t in 0..t_steps {
                    let mut weighted = Tensor::zeros(&shape);
                    layers::conv_forward(prev[t].data(), w.data(), &d, weighted.data_mut());
                    let mut u_t = Tensor::zeros(&shape);
                    let mut s_t = Tensor::zeros(&shape);
                    crate::lif::lif_step_slices(
                        u_state.data(),
                        s_state.data(),
                        weighted.data(),
                        lif,
                        u_t.data_mut(),
                        s_t.data_mut(),
                    );
                    u_state = u_t.clone();
                    s_state = s_t.clone();
                    u_hist.push(u_t);
                    s_hist.push(s_t);
                }
                prev = s_hist.clone();
                layers_rec.push(LayerRecord::Lif { u: u_hist, s: s_hist });
            }
            LayerSpec::Pool {
                channels,
                in_size,
                out_size,
                window,
                stride,
            } => {
                let mut s_hist = Vec::with_capacity(t_steps);
                let mut argmax_hist = Vec::with_capacity(t_steps);
                for t in 0..t_steps {
                    let mut out = Tensor::zeros(&[*out_size, *out_size, *channels]);
                    let mut argmax = vec![0u32; out.len()];
                    layers::maxpool_forward(
                        prev[t].data(),
                        *channels,
                        *in_size,
                        *window,
                        *stride,
                        out.data_mut(),
                        &mut argmax,
                    );
                    s_hist.push(out);
                    argmax_hist.push(argmax);
                }
                prev = s_hist.clone();
                layers_rec.push(LayerRecord::Pool { s: s_hist, argmax: argmax_hist });
            }
            LayerSpec::Fc {
                in_features,
                out_features,
            } => {
                let w = match &weights.layers[idx] {
                    LayerWeights::Fc(w) => w,
                    _ => return Err(Error::Validation(format!("layer {idx}: weight kind mismatch"))),
                };
                if prev[0].len() != *in_features {
                    return Err(Error::Validation(format!(
                        "fc layer {idx}: input has {} elements, expected {in_features}",
                        prev[0].len()
                    )));
                }
                if idx == output_idx {
                    // non-leaky, non-firing accumulator
                    let mut acc = vec![0.0; *out_features];
                    for t in 0..t_steps {
                        layers::fc_forward(prev[t].data(), w.data(), *out_features, &mut acc);
                    }
                    logits = acc;
                    layers_rec.push(LayerRecord::Output);
                } else {
                    let shape = [*out_features];
                    let mut u_hist = Vec::with_capacity(t_steps);
                    let mut s_hist = Vec::with_capacity(t_steps);
                    let mut u_state = Tensor::zeros(&shape);
                    let mut s_state = Tensor::zeros(&shape);
                    for t in 0..t_steps {
                        let mut weighted = Tensor::zeros(&shape);
                        layers::fc_forward(
                            prev[t].data(),
                            w.data(),
                            *out_features,
                            weighted.data_mut(),
                        );
                        let mut u_t = Tensor::zeros(&shape);
                        let mut s_t = Tensor::zeros(&shape);
                        crate::lif::lif_step_slices(
                            u_state.data(),
                            s_state.data(),
                            weighted.data(),
                            lif,
                            u_t.data_mut(),
                            s_t.data_mut(),
                        );
                        u_state = u_t.clone();
                        s_state = s_t.clone();
                        u_hist.push(u_t);
                        s_hist.push(s_t);
                    }
                    prev = s_hist.clone();
                    layers_rec.push(LayerRecord::Lif { u: u_hist, s: s_hist });
                }
            }
        }
    }

    Ok(ForwardRecord {
        input_spikes: input_spikes.to_vec(),
        layers: layers_rec,
        logits,
        timesteps: t_steps,
    })
}

/// Spikes feeding layer `idx` at timestep `t`.
fn input_of<'a>(record: &'a ForwardRecord, idx: usize, t: usize) -> Result<&'a Tensor> {
    if idx == 0 {
        return Ok(&record.input_spikes[t]);
    }
    match &record.layers[idx - 1] {
        LayerRecord::Lif { s, .. } => Ok(&s[t]),
        LayerRecord::Pool { s, .. } => Ok(&s[t]),
        LayerRecord::Output => Err(Error::Validation(
            "layer below is the output accumulator".into(),
        )),
    }
}

/// Runs BPTT from the loss gradient at the logits. See the module docs for
/// the sparse-mode semantics.
pub fn backward_pass(
    record: &ForwardRecord,
    loss_grad_at_output: &[f64],
    net: &NetworkSpec,
    weights: &Weights,
    lif: &LifParams,
    sparse_mode: bool,
) -> Result<GradientRecord> {
    let t_steps = record.timesteps;
    if record.layers.len() != net.layers.len() {
        return Err(Error::Validation(format!(
            "record has {} layers, network has {}",
            record.layers.len(),
            net.layers.len()
        )));
    }
    for (idx, rec) in record.layers.iter().enumerate() {
        let len = match rec {
            LayerRecord::Lif { u, s } => u.len().min(s.len()),
            LayerRecord::Pool { s, .. } => s.len(),
            LayerRecord::Output => t_steps,
        };
        if len < t_steps {
            return Err(Error::Validation(format!(
                "record for layer {idx} covers {len} timesteps, expected {t_steps}"
            )));
        }
    }

    let n_layers = net.layers.len();
    let output_idx = net.output_layer();
    let mut du: Vec<Vec<Tensor>> = vec![Vec::new(); n_layers];
    let mut ds: Vec<Vec<Tensor>> = vec![Vec::new(); n_layers];
    let mut dh: Vec<Vec<Tensor>> = vec![Vec::new(); n_layers];
    let mut dw: Vec<Option<Tensor>> = vec![None; n_layers];

    // gradient w.r.t. the output spikes of the layer below the one being
    // processed, per timestep
    let mut grad_below: Vec<Tensor>;

    // output layer: du_t = loss gradient at the logits, every timestep
    {
        let w = match &weights.layers[output_idx] {
            LayerWeights::Fc(w) => w,
            _ => return Err(Error::Validation("output layer weights must be fc".into())),
        };
        let out_dim = loss_grad_at_output.len();
        let in_dim = w.len() / out_dim;
        let dlogits = Tensor::from_vec(&[out_dim], loss_grad_at_output.to_vec())?;
        du[output_idx] = vec![dlogits; t_steps];
        let mut dw_out = Tensor::zeros(&[in_dim, out_dim]);
        for t in 0..t_steps {
            layers::fc_weight_grad(
                input_of(record, output_idx, t)?.data(),
                loss_grad_at_output,
                dw_out.data_mut(),
            );
        }
        dw[output_idx] = Some(dw_out);
        // same incoming gradient at every timestep
        let mut below = Tensor::zeros(&[in_dim]);
        layers::fc_input_grad(loss_grad_at_output, w.data(), in_dim, sparse_mode, below.data_mut());
        grad_below = vec![below; t_steps];
    }

    for idx in (0..output_idx).rev() {
        match &net.layers[idx] {
            LayerSpec::Pool { .. } => {
                let argmax = match &record.layers[idx] {
                    LayerRecord::Pool { argmax, .. } => argmax,
                    _ => return Err(Error::Validation(format!("layer {idx}: record kind mismatch"))),
                };
                let in_len = input_of(record, idx, 0)?.len();
                let mut routed = Vec::with_capacity(t_steps);
                for t in 0..t_steps {
                    let mut dprev = Tensor::zeros(&[in_len]);
                    layers::maxpool_backward(grad_below[t].data(), &argmax[t], dprev.data_mut());
                    routed.push(dprev);
                }
                grad_below = routed;
            }
            layer @ (LayerSpec::Conv { .. } | LayerSpec::Fc { .. }) => {
                let (u_hist, s_hist) = match &record.layers[idx] {
                    LayerRecord::Lif { u, s } => (u, s),
                    _ => return Err(Error::Validation(format!("layer {idx}: record kind mismatch"))),
                };
                // gradient arriving at this layer's spikes from above
                let incoming = std::mem::take(&mut grad_below);
                let n = u_hist[0].len();
                let mut du_l: Vec<Tensor> = vec![Tensor::zeros(&[0]); t_steps];
                let mut ds_l: Vec<Tensor> = vec![Tensor::zeros(&[0]); t_steps];
                for t in (0..t_steps).rev() {
                    let dh_t = &incoming[t];
                    if dh_t.len() != n {
                        return Err(Error::Validation(format!(
                            "layer {idx}: incoming gradient has {} elements, expected {n}",
                            dh_t.len()
                        )));
                    }
                    let mut ds_t = Tensor::zeros(&[n]);
                    let mut du_t = Tensor::zeros(&[n]);
                    {
                        let u = u_hist[t].data();
                        let s = s_hist[t].data();
                        let dh_s = dh_t.data();
                        let du_next_owned;
                        let du_next: &[f64] = if t + 1 < t_steps {
                            du_l[t + 1].data()
                        } else {
                            du_next_owned = vec![0.0; n];
                            &du_next_owned
                        };
                        let ds_d = ds_t.data_mut();
                        let du_d = du_t.data_mut();
                        for i in 0..n {
                            let fp = surrogate_grad(u[i], lif);
                            let leak = if s[i] != 0.0 {
                                0.0
                            } else {
                                lif.alpha * du_next[i]
                            };
                            if sparse_mode && fp == 0.0 {
                                // specialized path: the spike-gradient term is
                                // exactly zero; ds is not materialized
                                du_d[i] = leak;
                            } else {
                                let ds_i = du_next[i] * (-lif.alpha * u[i]) + dh_s[i];
                                ds_d[i] = ds_i;
                                du_d[i] = leak + ds_i * fp;
                            }
                        }
                    }
                    ds_l[t] = ds_t;
                    du_l[t] = du_t;
                }

                // weight gradient: sum over timesteps of input-spike x du
                match layer {
                    LayerSpec::Conv { .. } => {
                        let d = conv_dims(layer);
                        let w = match &weights.layers[idx] {
                            LayerWeights::Conv(w) => w,
                            _ => {
                                return Err(Error::Validation(format!(
                                    "layer {idx}: weight kind mismatch"
                                )))
                            }
                        };
                        let mut dw_l = Tensor::zeros(&[d.c, d.r, d.r, d.k]);
                        for t in 0..t_steps {
                            layers::conv_weight_grad(
                                input_of(record, idx, t)?.data(),
                                du_l[t].data(),
                                &d,
                                dw_l.data_mut(),
                            );
                        }
                        dw[idx] = Some(dw_l);
                        // gradient to the layer below through transposed filters
                        if idx > 0 {
                            let mut routed = Vec::with_capacity(t_steps);
                            for du_t in du_l.iter().take(t_steps) {
                                let mut dprev = Tensor::zeros(&[d.h * d.h * d.c]);
                                layers::conv_input_grad(
                                    du_t.data(),
                                    w.data(),
                                    &d,
                                    sparse_mode,
                                    dprev.data_mut(),
                                );
                                routed.push(dprev);
                            }
                            grad_below = routed;
                        }
                    }
                    LayerSpec::Fc {
                        in_features,
                        out_features,
                    } => {
                        let w = match &weights.layers[idx] {
                            LayerWeights::Fc(w) => w,
                            _ => {
                                return Err(Error::Validation(format!(
                                    "layer {idx}: weight kind mismatch"
                                )))
                            }
                        };
                        let mut dw_l = Tensor::zeros(&[*in_features, *out_features]);
                        for t in 0..t_steps {
                            layers::fc_weight_grad(
                                input_of(record, idx, t)?.data(),
                                du_l[t].data(),
                                dw_l.data_mut(),
                            );
                        }
                        dw[idx] = Some(dw_l);
                        if idx > 0 {
                            let mut routed = Vec::with_capacity(t_steps);
                            for du_t in du_l.iter().take(t_steps) {
                                let mut dprev = Tensor::zeros(&[*in_features]);
                                layers::fc_input_grad(
                                    du_t.data(),
                                    w.data(),
                                    *in_features,
                                    sparse_mode,
                                    dprev.data_mut(),
                                );
                                routed.push(dprev);
                            }
                            grad_below = routed;
                        }
                    }
                    LayerSpec::Pool { .. } => unreachable!(),
                }
                dh[idx] = incoming;
                du[idx] = du_l;
                ds[idx] = ds_l;
            }
        }
    }

    Ok(GradientRecord { du, ds, dh, dw })
}

/// SGD momentum state, one slot per layer.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: Vec<Option<Tensor>>,
}

impl SgdState {
    pub fn new(n_layers: usize) -> Self {
        SgdState {
            velocity: vec![None; n_layers],
        }
    }
}

/// Applies one SGD step with momentum and L2 weight decay:
/// `g = dw + wd * w; v = m * v + g; w -= lr * v`.
pub fn apply_sgd(
    weights: &mut Weights,
    dw: &[Option<Tensor>],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    state: &mut SgdState,
) -> Result<()> {
    if dw.len() != weights.layers.len() {
        return Err(Error::Validation("gradient list length mismatch".into()));
    }
    for (idx, grad) in dw.iter().enumerate() {
        let Some(grad) = grad else { continue };
        let w = match &mut weights.layers[idx] {
            LayerWeights::Conv(w) | LayerWeights::Fc(w) => w,
            LayerWeights::Pool => continue,
        };
        if grad.len() != w.len() {
            return Err(Error::Validation(format!(
                "layer {idx}: gradient length {} mismatches weights {}",
                grad.len(),
                w.len()
            )));
        }
        let v = state.velocity[idx].get_or_insert_with(|| Tensor::zeros(w.shape()));
        let wd = w.data_mut();
        let vd = v.data_mut();
        let gd = grad.data();
        for i in 0..wd.len() {
            let g = gd[i] + weight_decay * wd[i];
            vd[i] = momentum * vd[i] + g;
            wd[i] -= lr * vd[i];
        }
    }
    Ok(())
}

/// Applies Eq-style weight update from a single gradient record.
pub fn weight_update(
    weights: &mut Weights,
    grads: &GradientRecord,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    state: &mut SgdState,
) -> Result<()> {
    apply_sgd(weights, &grads.dw, lr, momentum, weight_decay, state)
}

/// Softmax cross-entropy over the accumulated output potentials. Returns the
/// loss and its gradient at the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = -(logits[label] - max - sum.ln());
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KvConfig;

    fn tiny_net() -> NetworkSpec {
        let cfg = KvConfig::parse("name = tiny\ninput = 1 4\nlayer = conv 2 3 1 1\nlayer = fc 3\n")
            .unwrap();
        NetworkSpec::from_config(&cfg).unwrap()
    }

    fn lif() -> LifParams {
        LifParams::new(0.94, 0.75, 2.5).unwrap()
    }

    #[test]
    fn zero_input_stays_silent() {
        let net = tiny_net();
        let w = Weights::init(&net, 3);
        let input = vec![Tensor::zeros(&[4, 4, 1]); 4];
        let rec = forward_pass(&net, &w, &input, &lif()).unwrap();
        match &rec.layers[0] {
            LayerRecord::Lif { u, s } => {
                assert!(u.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
                assert!(s.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
            }
            _ => panic!("expected lif record"),
        }
        assert!(rec.logits.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn single_neuron_period_two_spiking() {
        // constant drive 0.4: u = 0.4, 0.776 -> spike, 0.4, 0.776 -> spike
        let p = lif();
        let mut u = 0.0;
        let mut s = 0.0;
        let mut got = Vec::new();
        for _ in 0..4 {
            let (nu, ns) = crate::lif::lif_step_scalar(u, s, 0.4, &p);
            got.push((nu, ns));
            u = nu;
            s = ns;
        }
        assert!((got[0].0 - 0.4).abs() < 1e-12 && got[0].1 == 0.0);
        assert!((got[1].0 - 0.776).abs() < 1e-12 && got[1].1 == 1.0);
        assert!((got[2].0 - 0.4).abs() < 1e-12 && got[2].1 == 0.0);
        assert!((got[3].0 - 0.776).abs() < 1e-12 && got[3].1 == 1.0);
    }

    #[test]
    fn spikes_stay_binary_for_random_input() {
        let net = tiny_net();
        let w = Weights::init(&net, 11);
        let img = Tensor::from_vec(&[4, 4, 1], (0..16).map(|i| (i % 3) as f64 / 2.0).collect())
            .unwrap();
        let input = crate::encode::poisson_encode(&img, 5, 9).unwrap();
        let rec = forward_pass(&net, &w, &input, &lif()).unwrap();
        for layer in &rec.layers {
            if let LayerRecord::Lif { s, .. } = layer {
                assert!(s.iter().all(|t| t.is_binary()));
            }
        }
    }

    #[test]
    fn backward_boundary_and_substitution_values() {
        // dU_t = dU_{t+1} * alpha * (1 - S) + dS * f' on scalars
        let p = lif();
        let du_next = 0.2;
        let s_t = 0.0;
        let ds_t = 0.5;
        let fp = 0.4;
        let du = du_next * p.alpha * (1.0 - s_t) + ds_t * fp;
        assert!((du - 0.388).abs() < 1e-12);
        // dS_t = dU_{t+1} * (-alpha * U_t) + dH
        let u_t = 0.5;
        let dh = 0.1;
        let ds = du_next * (-p.alpha * u_t) + dh;
        assert!((ds - 0.006).abs() < 1e-12);
    }

    #[test]
    fn grad_record_shapes_match_and_last_step_uses_boundary() {
        let net = tiny_net();
        let w = Weights::init(&net, 5);
        let img = Tensor::from_vec(&[4, 4, 1], vec![0.8; 16]).unwrap();
        let input = crate::encode::poisson_encode(&img, 3, 2).unwrap();
        let rec = forward_pass(&net, &w, &input, &lif()).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&rec.logits, 1);
        let grads = backward_pass(&rec, &dlogits, &net, &w, &lif(), false).unwrap();
        assert_eq!(grads.du[0].len(), 3);
        // at t = T the first term of dU vanishes: dU_T = dS_T * f'(U_T)
        let (u_hist, _) = match &rec.layers[0] {
            LayerRecord::Lif { u, s } => (u, s),
            _ => unreachable!(),
        };
        let t_last = 2;
        for i in 0..grads.du[0][t_last].len() {
            let fp = surrogate_grad(u_hist[t_last].data()[i], &lif());
            let want = grads.ds[0][t_last].data()[i] * fp;
            let got = grads.du[0][t_last].data()[i];
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn lr_zero_update_leaves_weights_unchanged() {
        let net = tiny_net();
        let mut w = Weights::init(&net, 5);
        let before = w.clone();
        let img = Tensor::from_vec(&[4, 4, 1], vec![0.8; 16]).unwrap();
        let input = crate::encode::poisson_encode(&img, 3, 2).unwrap();
        let rec = forward_pass(&net, &w, &input, &lif()).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&rec.logits, 0);
        let grads = backward_pass(&rec, &dlogits, &net, &w, &lif(), false).unwrap();
        let mut state = SgdState::new(net.layers.len());
        weight_update(&mut w, &grads, 0.0, 0.0, 0.0, &mut state).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn scalar_weight_update_matches_hand_value() {
        // T=1 scalar: lr 0.001, dU 0.388, S 1 -> dW = 0.388, step -3.88e-4
        let lr = 0.001;
        let mut w = 0.5f64;
        let dw = 0.388 * 1.0;
        w -= lr * dw;
        assert!((w - (0.5 - 3.88e-4)).abs() < 1e-15);
    }

    #[test]
    fn all_zero_spikes_give_zero_weight_grads() {
        let net = tiny_net();
        let w = Weights::init(&net, 7);
        let input = vec![Tensor::zeros(&[4, 4, 1]); 2];
        let rec = forward_pass(&net, &w, &input, &lif()).unwrap();
        let (_, dlogits) = softmax_cross_entropy(&rec.logits, 0);
        let grads = backward_pass(&rec, &dlogits, &net, &w, &lif(), false).unwrap();
        // output-layer dW is zero because its input spikes are all zero
        let dw_out = grads.dw[grads.dw.len() - 1].as_ref().unwrap();
        assert!(dw_out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_record_timesteps_is_state_error() {
        let net = tiny_net();
        let w = Weights::init(&net, 5);
        let img = Tensor::from_vec(&[4, 4, 1], vec![0.8; 16]).unwrap();
        let input = crate::encode::poisson_encode(&img, 3, 2).unwrap();
        let mut rec = forward_pass(&net, &w, &input, &lif()).unwrap();
        if let LayerRecord::Lif { u, .. } = &mut rec.layers[0] {
            u.pop();
        }
        let (_, dlogits) = softmax_cross_entropy(&rec.logits, 1);
        assert!(backward_pass(&rec, &dlogits, &net, &w, &lif(), false).is_err());
    }
}
