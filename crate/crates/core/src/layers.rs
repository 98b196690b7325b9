//! Conv / max-pool / fully-connected kernels used by the reference trainer.
//!
//! Layout conventions (all tensors flat, row-major):
//! - activations and spikes: `[H][W][C]`, index `(y*W + x)*C + c`
//! - conv filters: `[C][R][R][K]`, index `((c*R + ry)*R + rx)*K + k`
//! - conv outputs and their gradients: `[E][E][K]`
//! - FC weights: `[IN][OUT]`, index `in*OUT + out`
//!
//! The forward and weight-gradient kernels iterate only the nonzero input
//! spikes (binary inputs make the MAC an add), which is exact: skipped terms
//! are exactly zero. For a fixed output element, contributions accumulate in
//! `(ry, rx, c)` order with `c` fastest; the gradient-oracle test mirrors
//! this fold order so forward spike decisions agree bitwise.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvDims {
    pub c: usize,
    pub h: usize,
    pub k: usize,
    pub e: usize,
    pub r: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvDims {
    pub fn input_len(&self) -> usize {
        self.h * self.h * self.c
    }
    pub fn output_len(&self) -> usize {
        self.e * self.e * self.k
    }
    pub fn weight_len(&self) -> usize {
        self.c * self.r * self.r * self.k
    }
}

/// Spike convolution: `out[ey][ex][k] += sum w[c][ry][rx][k]` over nonzero
/// input spikes. `out` must be zeroed by the caller.
pub fn conv_forward(spikes: &[f64], w: &[f64], d: &ConvDims, out: &mut [f64]) {
    debug_assert_eq!(spikes.len(), d.input_len());
    debug_assert_eq!(w.len(), d.weight_len());
    debug_assert_eq!(out.len(), d.output_len());
    let (c_dim, h, k_dim, e, r) = (d.c, d.h, d.k, d.e, d.r);
    for iy in 0..h {
        for ix in 0..h {
            let row = (iy * h + ix) * c_dim;
            for c in 0..c_dim {
                if spikes[row + c] == 0.0 {
                    continue;
                }
                for ry in 0..r {
                    let ey_num = iy + d.pad;
                    if ey_num < ry {
                        continue;
                    }
                    let ey_num = ey_num - ry;
                    if ey_num % d.stride != 0 {
                        continue;
                    }
                    let ey = ey_num / d.stride;
                    if ey >= e {
                        continue;
                    }
                    for rx in 0..r {
                        let ex_num = ix + d.pad;
                        if ex_num < rx {
                            continue;
                        }
                        let ex_num = ex_num - rx;
                        if ex_num % d.stride != 0 {
                            continue;
                        }
                        let ex = ex_num / d.stride;
                        if ex >= e {
                            continue;
                        }
                        let w_row = &w[((c * r + ry) * r + rx) * k_dim..][..k_dim];
                        let out_row = &mut out[(ey * e + ex) * k_dim..][..k_dim];
                        for k in 0..k_dim {
                            out_row[k] += w_row[k];
                        }
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the conv input:
/// `dprev[iy][ix][c] = sum_{ry,rx,k} w[c][ry][rx][k] * dout[ey][ex][k]`.
///
/// With `skip_zero_positions`, output positions whose entire `dout` row is
/// zero are skipped; the skipped contributions are exactly zero, so the
/// result is bit-identical to the dense evaluation.
pub fn conv_input_grad(dout: &[f64], w: &[f64], d: &ConvDims, skip_zero_positions: bool, dprev: &mut [f64]) {
    debug_assert_eq!(dout.len(), d.output_len());
    debug_assert_eq!(w.len(), d.weight_len());
    debug_assert_eq!(dprev.len(), d.input_len());
    let (c_dim, h, k_dim, e, r) = (d.c, d.h, d.k, d.e, d.r);
    let mut nonzero = Vec::new();
    if skip_zero_positions {
        nonzero = (0..e * e)
            .map(|pos| dout[pos * k_dim..][..k_dim].iter().any(|&v| v != 0.0))
            .collect();
    }
    for iy in 0..h {
        for ix in 0..h {
            let base = (iy * h + ix) * c_dim;
            for ry in 0..r {
                let ey_num = iy + d.pad;
                if ey_num < ry {
                    continue;
                }
                let ey_num = ey_num - ry;
                if ey_num % d.stride != 0 {
                    continue;
                }
                let ey = ey_num / d.stride;
                if ey >= e {
                    continue;
                }
                for rx in 0..r {
                    let ex_num = ix + d.pad;
                    if ex_num < rx {
                        continue;
                    }
                    let ex_num = ex_num - rx;
                    if ex_num % d.stride != 0 {
                        continue;
                    }
                    let ex = ex_num / d.stride;
                    if ex >= e {
                        continue;
                    }
                    let pos = ey * e + ex;
                    if skip_zero_positions && !nonzero[pos] {
                        continue;
                    }
                    let dout_row = &dout[pos * k_dim..][..k_dim];
                    for c in 0..c_dim {
                        let w_row = &w[((c * r + ry) * r + rx) * k_dim..][..k_dim];
                        let mut acc = 0.0;
                        for k in 0..k_dim {
                            acc += w_row[k] * dout_row[k];
                        }
                        dprev[base + c] += acc;
                    }
                }
            }
        }
    }
}

/// Gradient w.r.t. the conv filters:
/// `dw[c][ry][rx][k] += spikes[iy][ix][c] * dout[ey][ex][k]`, iterating only
/// nonzero spikes. Accumulates into `dw`.
pub fn conv_weight_grad(spikes: &[f64], dout: &[f64], d: &ConvDims, dw: &mut [f64]) {
    debug_assert_eq!(spikes.len(), d.input_len());
    debug_assert_eq!(dout.len(), d.output_len());
    debug_assert_eq!(dw.len(), d.weight_len());
    let (c_dim, h, k_dim, e, r) = (d.c, d.h, d.k, d.e, d.r);
    for iy in 0..h {
        for ix in 0..h {
            let row = (iy * h + ix) * c_dim;
            for c in 0..c_dim {
                let s = spikes[row + c];
                if s == 0.0 {
                    continue;
                }
                for ry in 0..r {
                    let ey_num = iy + d.pad;
                    if ey_num < ry {
                        continue;
                    }
                    let ey_num = ey_num - ry;
                    if ey_num % d.stride != 0 {
                        continue;
                    }
                    let ey = ey_num / d.stride;
                    if ey >= e {
                        continue;
                    }
                    for rx in 0..r {
                        let ex_num = ix + d.pad;
                        if ex_num < rx {
                            continue;
                        }
                        let ex_num = ex_num - rx;
                        if ex_num % d.stride != 0 {
                            continue;
                        }
                        let ex = ex_num / d.stride;
                        if ex >= e {
                            continue;
                        }
                        let dout_row = &dout[(ey * e + ex) * k_dim..][..k_dim];
                        let dw_row = &mut dw[((c * r + ry) * r + rx) * k_dim..][..k_dim];
                        for k in 0..k_dim {
                            dw_row[k] += dout_row[k];
                        }
                    }
                }
            }
        }
    }
}

/// Per-timestep max pool over spike values. Ties resolve to the lowest flat
/// input index (first maximum in window scan order). Returns the argmax flat
/// indices for gradient routing.
pub fn maxpool_forward(
    input: &[f64],
    channels: usize,
    in_size: usize,
    window: usize,
    stride: usize,
    out: &mut [f64],
    argmax: &mut [u32],
) {
    let out_size = (in_size - window) / stride + 1;
    debug_assert_eq!(input.len(), in_size * in_size * channels);
    debug_assert_eq!(out.len(), out_size * out_size * channels);
    debug_assert_eq!(argmax.len(), out.len());
    for py in 0..out_size {
        for px in 0..out_size {
            for c in 0..channels {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0u32;
                for wy in 0..window {
                    for wx in 0..window {
                        let iy = py * stride + wy;
                        let ix = px * stride + wx;
                        let idx = (iy * in_size + ix) * channels + c;
                        if input[idx] > best {
                            best = input[idx];
                            best_idx = idx as u32;
                        }
                    }
                }
                let o = (py * out_size + px) * channels + c;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
}

/// Routes pooled gradients back to the selected input elements. `dprev` must
/// be zeroed by the caller.
pub fn maxpool_backward(dout: &[f64], argmax: &[u32], dprev: &mut [f64]) {
    debug_assert_eq!(dout.len(), argmax.len());
    for (i, &g) in dout.iter().enumerate() {
        dprev[argmax[i] as usize] += g;
    }
}

/// FC forward over binary inputs: `out[k] += w[in][k]` for nonzero inputs.
/// `out` must be zeroed by the caller.
pub fn fc_forward(input: &[f64], w: &[f64], out_dim: usize, out: &mut [f64]) {
    debug_assert_eq!(w.len(), input.len() * out_dim);
    debug_assert_eq!(out.len(), out_dim);
    for (i, &s) in input.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let w_row = &w[i * out_dim..][..out_dim];
        for k in 0..out_dim {
            out[k] += w_row[k];
        }
    }
}

/// Gradient w.r.t. the FC input. With `skip_zeros`, terms whose `dout`
/// element is exactly zero are skipped (bit-identical to dense).
pub fn fc_input_grad(dout: &[f64], w: &[f64], in_dim: usize, skip_zeros: bool, dprev: &mut [f64]) {
    let out_dim = dout.len();
    debug_assert_eq!(w.len(), in_dim * out_dim);
    debug_assert_eq!(dprev.len(), in_dim);
    for i in 0..in_dim {
        let w_row = &w[i * out_dim..][..out_dim];
        let mut acc = 0.0;
        for k in 0..out_dim {
            if skip_zeros && dout[k] == 0.0 {
                continue;
            }
            acc += w_row[k] * dout[k];
        }
        dprev[i] += acc;
    }
}

/// Gradient w.r.t. the FC weights, iterating only nonzero inputs.
pub fn fc_weight_grad(input: &[f64], dout: &[f64], dw: &mut [f64]) {
    let out_dim = dout.len();
    debug_assert_eq!(dw.len(), input.len() * out_dim);
    for (i, &s) in input.iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let dw_row = &mut dw[i * out_dim..][..out_dim];
        for k in 0..out_dim {
            dw_row[k] += dout[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense gather reference for conv_forward, with real-valued inputs.
    fn conv_forward_reference(input: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
        let mut out = vec![0.0; d.output_len()];
        for ey in 0..d.e {
            for ex in 0..d.e {
                for k in 0..d.k {
                    let mut acc = 0.0;
                    for ry in 0..d.r {
                        for rx in 0..d.r {
                            let iy = ey * d.stride + ry;
                            let ix = ex * d.stride + rx;
                            if iy < d.pad || ix < d.pad {
                                continue;
                            }
                            let (iy, ix) = (iy - d.pad, ix - d.pad);
                            if iy >= d.h || ix >= d.h {
                                continue;
                            }
                            for c in 0..d.c {
                                acc += input[(iy * d.h + ix) * d.c + c]
                                    * w[((c * d.r + ry) * d.r + rx) * d.k + k];
                            }
                        }
                    }
                    out[(ey * d.e + ex) * d.k + k] += acc;
                }
            }
        }
        out
    }

    fn rng_vec(len: usize, seed: u64, binary: bool) -> Vec<f64> {
        // small xorshift; avoids pulling rand into kernel tests
        let mut state = seed.wrapping_mul(2685821657736338717).wrapping_add(1);
        (0..len)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                let u = (state >> 11) as f64 / (1u64 << 53) as f64;
                if binary {
                    if u < 0.4 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    u * 2.0 - 1.0
                }
            })
            .collect()
    }

    #[test]
    fn conv_forward_matches_dense_reference() {
        for (seed, stride, pad) in [(1u64, 1usize, 1usize), (2, 1, 0), (3, 2, 1)] {
            let h = 6;
            let r = 3;
            let e = (h + 2 * pad - r) / stride + 1;
            let d = ConvDims { c: 3, h, k: 4, e, r, stride, pad };
            let spikes = rng_vec(d.input_len(), seed, true);
            let w = rng_vec(d.weight_len(), seed + 10, false);
            let mut out = vec![0.0; d.output_len()];
            conv_forward(&spikes, &w, &d, &mut out);
            let want = conv_forward_reference(&spikes, &w, &d);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn conv_input_grad_matches_transposed_reference() {
        let d = ConvDims { c: 2, h: 5, k: 3, e: 5, r: 3, stride: 1, pad: 1 };
        let dout = rng_vec(d.output_len(), 5, false);
        let w = rng_vec(d.weight_len(), 6, false);
        let mut got = vec![0.0; d.input_len()];
        conv_input_grad(&dout, &w, &d, false, &mut got);
        // reference: accumulate through the forward index map
        let mut want = vec![0.0; d.input_len()];
        for ey in 0..d.e {
            for ex in 0..d.e {
                for ry in 0..d.r {
                    for rx in 0..d.r {
                        let iy = ey * d.stride + ry;
                        let ix = ex * d.stride + rx;
                        if iy < d.pad || ix < d.pad {
                            continue;
                        }
                        let (iy, ix) = (iy - d.pad, ix - d.pad);
                        if iy >= d.h || ix >= d.h {
                            continue;
                        }
                        for c in 0..d.c {
                            for k in 0..d.k {
                                want[(iy * d.h + ix) * d.c + c] += w
                                    [((c * d.r + ry) * d.r + rx) * d.k + k]
                                    * dout[(ey * d.e + ex) * d.k + k];
                            }
                        }
                    }
                }
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_input_grad_zero_skip_is_bit_identical() {
        let d = ConvDims { c: 2, h: 6, k: 3, e: 6, r: 3, stride: 1, pad: 1 };
        let mut dout = rng_vec(d.output_len(), 9, false);
        // zero out most positions to exercise the skip path
        for (i, v) in dout.iter_mut().enumerate() {
            if i % 3 != 0 {
                *v = 0.0;
            }
        }
        let w = rng_vec(d.weight_len(), 4, false);
        let mut dense = vec![0.0; d.input_len()];
        let mut sparse = vec![0.0; d.input_len()];
        conv_input_grad(&dout, &w, &d, false, &mut dense);
        conv_input_grad(&dout, &w, &d, true, &mut sparse);
        for (a, b) in dense.iter().zip(&sparse) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn conv_weight_grad_matches_reference() {
        let d = ConvDims { c: 2, h: 5, k: 3, e: 5, r: 3, stride: 1, pad: 1 };
        let spikes = rng_vec(d.input_len(), 11, true);
        let dout = rng_vec(d.output_len(), 12, false);
        let mut got = vec![0.0; d.weight_len()];
        conv_weight_grad(&spikes, &dout, &d, &mut got);
        let mut want = vec![0.0; d.weight_len()];
        for ey in 0..d.e {
            for ex in 0..d.e {
                for ry in 0..d.r {
                    for rx in 0..d.r {
                        let iy = ey * d.stride + ry;
                        let ix = ex * d.stride + rx;
                        if iy < d.pad || ix < d.pad {
                            continue;
                        }
                        let (iy, ix) = (iy - d.pad, ix - d.pad);
                        if iy >= d.h || ix >= d.h {
                            continue;
                        }
                        for c in 0..d.c {
                            for k in 0..d.k {
                                want[((c * d.r + ry) * d.r + rx) * d.k + k] += spikes
                                    [(iy * d.h + ix) * d.c + c]
                                    * dout[(ey * d.e + ex) * d.k + k];
                            }
                        }
                    }
                }
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn maxpool_picks_first_max_and_routes_back() {
        // 2x2 window over a 2x2 input, one channel, with a tie
        let input = vec![1.0, 0.0, 1.0, 0.0];
        let mut out = vec![0.0; 1];
        let mut argmax = vec![0u32; 1];
        maxpool_forward(&input, 1, 2, 2, 2, &mut out, &mut argmax);
        assert_eq!(out[0], 1.0);
        assert_eq!(argmax[0], 0, "tie must resolve to the lowest flat index");
        let mut dprev = vec![0.0; 4];
        maxpool_backward(&[0.7], &argmax, &mut dprev);
        assert_eq!(dprev, vec![0.7, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn fc_kernels_match_dense_math() {
        let in_dim = 6;
        let out_dim = 4;
        let input = rng_vec(in_dim, 3, true);
        let w = rng_vec(in_dim * out_dim, 8, false);
        let mut out = vec![0.0; out_dim];
        fc_forward(&input, &w, out_dim, &mut out);
        for k in 0..out_dim {
            let want: f64 = (0..in_dim).map(|i| input[i] * w[i * out_dim + k]).sum();
            assert!((out[k] - want).abs() < 1e-12);
        }
        let dout = rng_vec(out_dim, 13, false);
        let mut dprev = vec![0.0; in_dim];
        fc_input_grad(&dout, &w, in_dim, false, &mut dprev);
        for i in 0..in_dim {
            let want: f64 = (0..out_dim).map(|k| w[i * out_dim + k] * dout[k]).sum();
            assert!((dprev[i] - want).abs() < 1e-12);
        }
        let mut dw = vec![0.0; in_dim * out_dim];
        fc_weight_grad(&input, &dout, &mut dw);
        for i in 0..in_dim {
            for k in 0..out_dim {
                assert!((dw[i * out_dim + k] - input[i] * dout[k]).abs() < 1e-12);
            }
        }
    }
}
