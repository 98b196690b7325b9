//! Reverse-mode tape over the explicitly unrolled computation graph, used as
//! an independent oracle for the BPTT gradients. The graph is built node by
//! node from the layer equations (leak-multiply form, surrogate-relaxed
//! spike nodes, max-select pooling, log-softmax loss) and differentiated by
//! plain adjoint accumulation; it shares no code with the library's backward
//! pass. Summation follows the same fold order as the library kernels so
//! that forward spike decisions agree bitwise.

use snncost_core::lif::LifParams;
use snncost_core::network::{LayerSpec, NetworkSpec};
use snncost_core::snn::{LayerWeights, Weights};
use snncost_core::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Spike { u: usize, u_th: f64, beta: f64 },
    Exp(usize),
    Ln(usize),
}

pub struct Tape {
    ops: Vec<Op>,
    values: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        self.ops.push(op);
        self.values.push(value);
        Var(self.ops.len() - 1)
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] + self.values[b.0];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.values[a.0] * self.values[b.0];
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.values[a.0];
        self.push(Op::Neg(a.0), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = c * self.values[a.0];
        self.push(Op::Scale(a.0, c), v)
    }

    pub fn spike(&mut self, u: Var, p: &LifParams) -> Var {
        let v = if self.values[u.0] > p.u_th { 1.0 } else { 0.0 };
        self.push(
            Op::Spike {
                u: u.0,
                u_th: p.u_th,
                beta: p.beta,
            },
            v,
        )
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.values[a.0].exp();
        self.push(Op::Exp(a.0), v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.values[a.0].ln();
        self.push(Op::Ln(a.0), v)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    /// Adjoint sweep from `root`; returns one gradient per node.
    pub fn backward(&self, root: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.ops.len()];
        adj[root.0] = 1.0;
        for i in (0..self.ops.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    adj[a] += g;
                    adj[b] += g;
                }
                Op::Mul(a, b) => {
                    adj[a] += g * self.values[b];
                    adj[b] += g * self.values[a];
                }
                Op::Neg(a) => adj[a] -= g,
                Op::Scale(a, c) => adj[a] += g * c,
                Op::Spike { u, u_th, beta } => {
                    let fp = if (self.values[u] - u_th).abs() < beta / 2.0 {
                        1.0 / beta
                    } else {
                        0.0
                    };
                    adj[u] += g * fp;
                }
                Op::Exp(a) => adj[a] += g * self.values[i],
                Op::Ln(a) => adj[a] += g / self.values[a],
            }
        }
        adj
    }

    pub fn grad(&self, adj: &[f64], v: Var) -> f64 {
        adj[v.0]
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

pub struct OracleResult {
    pub loss: f64,
    pub logits: Vec<f64>,
    /// Weight gradients per network layer (None for pool layers).
    pub dw: Vec<Option<Tensor>>,
}

/// Unrolls the whole training computation for one image onto the tape and
/// differentiates the cross-entropy loss with respect to every weight.
pub fn oracle_gradients(
    net: &NetworkSpec,
    weights: &Weights,
    input_spikes: &[Tensor],
    lif: &LifParams,
    label: usize,
) -> OracleResult {
    let t_steps = input_spikes.len();
    let mut tape = Tape::new();

    // weight leaves, same flat layouts as the library
    let w_vars: Vec<Option<Vec<Var>>> = weights
        .layers
        .iter()
        .map(|lw| match lw {
            LayerWeights::Conv(t) | LayerWeights::Fc(t) => {
                Some(t.data().iter().map(|&v| tape.leaf(v)).collect())
            }
            LayerWeights::Pool => None,
        })
        .collect();

    // input spike leaves per timestep
    let mut prev: Vec<Vec<Var>> = input_spikes
        .iter()
        .map(|s| s.data().iter().map(|&v| tape.leaf(v)).collect())
        .collect();

    let output_idx = net.output_layer();
    let mut logits_vars: Vec<Var> = Vec::new();

    for (idx, layer) in net.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv {
                in_channels,
                in_size,
                out_channels,
                out_size,
                kernel,
                stride,
                pad,
            } => {
                let (c_dim, h, k_dim, e, r) = (*in_channels, *in_size, *out_channels, *out_size, *kernel);
                let w = w_vars[idx].as_ref().unwrap();
                let mut s_hist: Vec<Vec<Var>> = Vec::with_capacity(t_steps);
                let mut u_hist: Vec<Vec<Var>> = Vec::with_capacity(t_steps);
                for t in 0..t_steps {
                    // weighted input, fold order (ry, rx, c) with c fastest
                    let mut win: Vec<Var> = Vec::with_capacity(e * e * k_dim);
                    for ey in 0..e {
                        for ex in 0..e {
                            for k in 0..k_dim {
                                let mut acc = tape.leaf(0.0);
                                for ry in 0..r {
                                    let iy_num = ey * stride + ry;
                                    if iy_num < *pad || iy_num - pad >= h {
                                        continue;
                                    }
                                    let iy = iy_num - pad;
                                    for rx in 0..r {
                                        let ix_num = ex * stride + rx;
                                        if ix_num < *pad || ix_num - pad >= h {
                                            continue;
                                        }
                                        let ix = ix_num - pad;
                                        for c in 0..c_dim {
                                            let s = prev[t][(iy * h + ix) * c_dim + c];
                                            let wv = w[((c * r + ry) * r + rx) * k_dim + k];
                                            let term = tape.mul(wv, s);
                                            acc = tape.add(acc, term);
                                        }
                                    }
                                }
                                win.push(acc);
                            }
                        }
                    }
                    let (u_t, s_t) = lif_chain(
                        &mut tape,
                        &win,
                        u_hist.last(),
                        s_hist.last(),
                        lif,
                    );
                    u_hist.push(u_t);
                    s_hist.push(s_t);
                }
                prev = s_hist;
            }
            LayerSpec::Pool {
                channels,
                in_size,
                out_size,
                window,
                stride,
            } => {
                let mut pooled: Vec<Vec<Var>> = Vec::with_capacity(t_steps);
                for s_t in prev.iter().take(t_steps) {
                    let mut out = Vec::with_capacity(out_size * out_size * channels);
                    for py in 0..*out_size {
                        for px in 0..*out_size {
                            for c in 0..*channels {
                                // first maximum in window scan order
                                let mut best: Option<Var> = None;
                                let mut best_val = f64::NEG_INFINITY;
                                for wy in 0..*window {
                                    for wx in 0..*window {
                                        let iy = py * stride + wy;
                                        let ix = px * stride + wx;
                                        let v = s_t[(iy * in_size + ix) * channels + c];
                                        if tape.value(v) > best_val {
                                            best_val = tape.value(v);
                                            best = Some(v);
                                        }
                                    }
                                }
                                out.push(best.unwrap());
                            }
                        }
                    }
                    pooled.push(out);
                }
                prev = pooled;
            }
            LayerSpec::Fc {
                in_features,
                out_features,
            } => {
                let w = w_vars[idx].as_ref().unwrap();
                if idx == output_idx {
                    // non-leaky accumulator across all timesteps
                    let mut acc: Vec<Var> = (0..*out_features).map(|_| tape.leaf(0.0)).collect();
                    for s_t in prev.iter().take(t_steps) {
                        for (i, s) in s_t.iter().enumerate().take(*in_features) {
                            for (k, slot) in acc.iter_mut().enumerate() {
                                let term = tape.mul(w[i * out_features + k], *s);
                                *slot = tape.add(*slot, term);
                            }
                        }
                    }
                    logits_vars = acc;
                } else {
                    let mut s_hist: Vec<Vec<Var>> = Vec::with_capacity(t_steps);
                    let mut u_hist: Vec<Vec<Var>> = Vec::with_capacity(t_steps);
                    for t in 0..t_steps {
                        let mut win = Vec::with_capacity(*out_features);
                        for k in 0..*out_features {
                            let mut acc = tape.leaf(0.0);
                            for i in 0..*in_features {
                                let term = tape.mul(w[i * out_features + k], prev[t][i]);
                                acc = tape.add(acc, term);
                            }
                            win.push(acc);
                        }
                        let (u_t, s_t) =
                            lif_chain(&mut tape, &win, u_hist.last(), s_hist.last(), lif);
                        u_hist.push(u_t);
                        s_hist.push(s_t);
                    }
                    prev = s_hist;
                }
            }
        }
    }

    // log-softmax cross entropy with a detached max shift
    let logits: Vec<f64> = logits_vars.iter().map(|v| tape.value(*v)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let neg_max = tape.leaf(-max);
    let shifted: Vec<Var> = logits_vars.iter().map(|v| tape.add(*v, neg_max)).collect();
    let mut sum = tape.leaf(0.0);
    for s in &shifted {
        let e = tape.exp(*s);
        sum = tape.add(sum, e);
    }
    let lse = tape.ln(sum);
    let neg_lse = tape.neg(lse);
    let inner = tape.add(shifted[label], neg_lse);
    let loss = tape.neg(inner);

    let adj = tape.backward(loss);
    let dw = weights
        .layers
        .iter()
        .zip(&w_vars)
        .map(|(lw, vars)| match (lw, vars) {
            (LayerWeights::Conv(t) | LayerWeights::Fc(t), Some(vars)) => {
                let grads: Vec<f64> = vars.iter().map(|v| tape.grad(&adj, *v)).collect();
                Some(Tensor::from_vec(t.shape(), grads).unwrap())
            }
            _ => None,
        })
        .collect();

    OracleResult {
        loss: tape.value(loss),
        logits,
        dw,
    }
}

/// LIF recurrence in leak-multiply form:
/// `u_t = (alpha * u_{t-1}) * (1 - s_{t-1}) + win`, `s_t = spike(u_t)`.
fn lif_chain(
    tape: &mut Tape,
    win: &[Var],
    u_prev: Option<&Vec<Var>>,
    s_prev: Option<&Vec<Var>>,
    lif: &LifParams,
) -> (Vec<Var>, Vec<Var>) {
    let mut u_out = Vec::with_capacity(win.len());
    let mut s_out = Vec::with_capacity(win.len());
    for i in 0..win.len() {
        let u = match (u_prev, s_prev) {
            (Some(u_prev), Some(s_prev)) => {
                let one = tape.leaf(1.0);
                let neg_s = tape.neg(s_prev[i]);
                let om = tape.add(one, neg_s);
                let au = tape.scale(u_prev[i], lif.alpha);
                let leak = tape.mul(au, om);
                tape.add(leak, win[i])
            }
            _ => win[i],
        };
        let s = tape.spike(u, lif);
        u_out.push(u);
        s_out.push(s);
    }
    (u_out, s_out)
}
