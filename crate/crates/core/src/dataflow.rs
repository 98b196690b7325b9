//! Tile-level simulator of the temporal weight-stationary dataflow. Walks
//! the schedule layer by layer and counts every buffer transfer it implies,
//! giving an independent route to the analytic memory counts.
//!
//! Accounting conventions (matching the analytic table's abstraction):
//! - every DRAM transfer passes the GLB once in and once out (2x);
//! - scratchpad traffic is unique-word fill + drain; per-use re-reads inside
//!   a PE are not counted, but the reads *elided* by zero-operand gating are
//!   reported separately (`elided_spad_reads`);
//! - spikes move packed `bitwidth` bits per word, gradients and potentials
//!   move one word per element;
//! - filters are loaded once per layer and stay resident (weight
//!   stationarity), with their backward-stage accesses attributed to the
//!   weight-update stage.
//!
//! The forward walk reproduces the analytic DRAM/GLB/scratchpad counts
//! exactly. The backward walk mirrors the forward schedule with transposed
//! filters, which is an assumption: it moves unpacked gradient words, so the
//! packed term and the 7x / 2(1+T) constants in the analytic backward and
//! weight-update formulas are flagged in the crosscheck rather than forced.

use crate::counts::{ArchParams, LayerCounts, OpCounts, Stage};
use crate::error::{Error, Result};
use crate::network::LayerDims;

#[derive(Debug, Clone, PartialEq)]
pub struct PeArrayConfig {
    pub pe_count: usize,
    pub pgu_count: usize,
    pub filter_spad_bytes: usize,
    pub input_spad_bytes: usize,
    pub psum_spad_bytes: usize,
    pub bitwidth: u32,
}

impl Default for PeArrayConfig {
    fn default() -> Self {
        PeArrayConfig {
            pe_count: 128,
            pgu_count: 128,
            filter_spad_bytes: 1152,
            input_spad_bytes: 1152,
            psum_spad_bytes: 1152,
            bitwidth: 8,
        }
    }
}

impl PeArrayConfig {
    pub fn from_arch(arch: &ArchParams) -> Self {
        PeArrayConfig {
            pe_count: arch.pe_count,
            pgu_count: arch.pgu_count,
            filter_spad_bytes: arch.filter_spad_bytes,
            input_spad_bytes: arch.input_spad_bytes,
            psum_spad_bytes: arch.psum_spad_bytes,
            bitwidth: arch.bitwidth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pe_count == 0 || self.pgu_count == 0 {
            return Err(Error::Validation("pe_count and pgu_count must be >= 1".into()));
        }
        if self.filter_spad_bytes == 0 {
            return Err(Error::Validation("filter spad capacity must be positive".into()));
        }
        if self.bitwidth == 0 {
            return Err(Error::Validation("bitwidth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Iteration plan for one layer: output positions fetch `C x T` receptive
/// fields once and broadcast them to the PEs of the active channel group;
/// filters stay resident for the whole layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TileSchedule {
    pub dims: LayerDims,
    pub stride: usize,
    pub pad: usize,
    pub timesteps: u32,
    pub bitwidth: u32,
    /// Ceil(K / pe_count) output-channel groups.
    pub channel_passes: usize,
    /// For FC layers whose weight vector exceeds the scratchpad, the number
    /// of sequential chunk residencies (traffic-neutral).
    pub fc_chunks: usize,
    pub is_fc: bool,
}

/// Builds the schedule. Conv layers must fit one output channel's full
/// `C x R x R` filter block in the per-PE scratchpad; FC layers stream their
/// weight vector in chunks.
pub fn schedule_layer(
    dims: &LayerDims,
    stride: usize,
    pad: usize,
    arch: &PeArrayConfig,
    timesteps: u32,
) -> Result<TileSchedule> {
    arch.validate()?;
    if dims.c == 0 || dims.h == 0 || dims.k == 0 || dims.e == 0 || dims.r == 0 {
        return Err(Error::Validation(format!(
            "layer `{}` has a zero dimension",
            dims.name
        )));
    }
    if stride == 0 {
        return Err(Error::Validation("stride must be >= 1".into()));
    }
    let is_fc = dims.h == 1 && dims.e == 1 && dims.r == 1;
    let word_bytes = (arch.bitwidth as usize).div_ceil(8);
    let filter_block_bytes = dims.c * dims.r * dims.r * word_bytes;
    let mut fc_chunks = 1;
    if is_fc {
        fc_chunks = filter_block_bytes.div_ceil(arch.filter_spad_bytes);
    } else if filter_block_bytes > arch.filter_spad_bytes {
        return Err(Error::Capacity {
            what: format!("filter block of layer `{}`", dims.name),
            required_bytes: filter_block_bytes,
            available_bytes: arch.filter_spad_bytes,
        });
    }
    Ok(TileSchedule {
        dims: dims.clone(),
        stride,
        pad,
        timesteps,
        bitwidth: arch.bitwidth,
        channel_passes: dims.k.div_ceil(arch.pe_count),
        fc_chunks,
        is_fc,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficTrace {
    pub dram_reads: u64,
    pub dram_writes: u64,
    pub glb_reads: u64,
    pub glb_writes: u64,
    pub spad_reads: u64,
    pub spad_writes: u64,
    /// Scratchpad reads saved by zero-operand gating (0 without masks).
    pub elided_spad_reads: u64,
    /// Subset of `dram_reads` that moved filters.
    pub filter_dram_reads: u64,
}

impl TrafficTrace {
    pub fn dram_total(&self) -> u64 {
        self.dram_reads + self.dram_writes
    }

    pub fn glb_total(&self) -> u64 {
        self.glb_reads + self.glb_writes
    }

    pub fn spad_total(&self) -> u64 {
        self.spad_reads + self.spad_writes
    }
}

/// In-bounds input coordinate for an output position and kernel offset, or
/// None for padding.
#[inline]
fn input_coord(e_pos: usize, r_off: usize, stride: usize, pad: usize, h: usize) -> Option<usize> {
    let num = e_pos * stride + r_off;
    if num < pad {
        return None;
    }
    let i = num - pad;
    if i < h {
        Some(i)
    } else {
        None
    }
}

/// Unique packed input words touched by the receptive fields of all output
/// positions, packing the `C*H*H` one-bit tensor in channel-last flat order.
fn touched_input_words(s: &TileSchedule) -> u64 {
    let d = &s.dims;
    let total_bits = d.c * d.h * d.h;
    let b = s.bitwidth as usize;
    let n_words = total_bits.div_ceil(b);
    let mut touched = vec![false; n_words];
    for ey in 0..d.e {
        for ex in 0..d.e {
            for ry in 0..d.r {
                let Some(iy) = input_coord(ey, ry, s.stride, s.pad, d.h) else { continue };
                for rx in 0..d.r {
                    let Some(ix) = input_coord(ex, rx, s.stride, s.pad, d.h) else { continue };
                    let base = (iy * d.h + ix) * d.c;
                    for c in 0..d.c {
                        touched[(base + c) / b] = true;
                    }
                }
            }
        }
    }
    touched.iter().filter(|&&t| t).count() as u64
}

/// Valid (in-bounds) kernel-offset pairs per output position.
fn valid_offsets_per_position(s: &TileSchedule) -> Vec<u64> {
    let d = &s.dims;
    let mut out = vec![0u64; d.e * d.e];
    for ey in 0..d.e {
        for ex in 0..d.e {
            let mut n = 0u64;
            for ry in 0..d.r {
                if input_coord(ey, ry, s.stride, s.pad, d.h).is_none() {
                    continue;
                }
                for rx in 0..d.r {
                    if input_coord(ex, rx, s.stride, s.pad, d.h).is_some() {
                        n += 1;
                    }
                }
            }
            out[ey * d.e + ex] = n;
        }
    }
    out
}

/// Counts every buffer access implied by the schedule for one stage.
///
/// `masks` supplies per-timestep gating operands: input spikes
/// (`C*H*H`, channel-last) for the forward and weight-update stages, or a
/// binary validity mask over the layer outputs (`E*E*K`) for the backward
/// stage. Gating elides the per-MAC filter-scratchpad read wherever the
/// operand is zero; it never changes the fill/drain word traffic.
pub fn simulate_traffic(
    schedule: &TileSchedule,
    stage: Stage,
    masks: Option<&[Vec<f64>]>,
) -> Result<TrafficTrace> {
    let d = &schedule.dims;
    let t = schedule.timesteps as u64;
    let mut trace = TrafficTrace::default();
    if t == 0 {
        return Ok(trace);
    }
    let filter_words = (d.k * d.c * d.r * d.r) as u64;
    let out_words = (d.k * d.e * d.e) as u64;
    let in_words = touched_input_words(schedule);

    if let Some(masks) = masks {
        if masks.len() != schedule.timesteps as usize {
            return Err(Error::Validation(format!(
                "expected {} mask tensors, got {}",
                schedule.timesteps,
                masks.len()
            )));
        }
        let expect = match stage {
            Stage::Fwd | Stage::Wup => d.c * d.h * d.h,
            Stage::Bwd => d.k * d.e * d.e,
        };
        for m in masks {
            if m.len() != expect {
                return Err(Error::Validation(format!(
                    "mask tensor has {} elements, expected {expect}",
                    m.len()
                )));
            }
        }
    }

    match stage {
        Stage::Fwd => {
            // filters: DRAM -> GLB -> scratchpads, once per layer
            trace.dram_reads += filter_words;
            trace.filter_dram_reads += filter_words;
            trace.glb_writes += filter_words;
            trace.glb_reads += filter_words;
            trace.spad_writes += filter_words;
            trace.spad_reads += filter_words;
            // input spikes: unique packed words once per timestep
            trace.dram_reads += t * in_words;
            trace.glb_writes += t * in_words;
            trace.glb_reads += t * in_words;
            trace.spad_writes += t * in_words;
            trace.spad_reads += t * in_words;
            // output potentials: written back once per neuron per timestep
            trace.glb_writes += t * out_words;
            trace.glb_reads += t * out_words;
            trace.dram_writes += t * out_words;
            if let Some(masks) = masks {
                trace.elided_spad_reads += elided_input_gating(schedule, masks);
            }
        }
        Stage::Bwd => {
            // transposed filters come from the GLB (their DRAM traffic is
            // attributed to the weight-update stage)
            trace.glb_reads += filter_words;
            trace.spad_writes += filter_words;
            // this layer's potential gradients in, one word per element
            trace.dram_reads += t * out_words;
            trace.glb_writes += t * out_words;
            trace.glb_reads += t * out_words;
            trace.spad_reads += t * out_words;
            // propagated gradients out: unpacked words (the analytic table
            // packs this term; the walk moves b-bit gradients)
            let grad_out_words = (d.c * d.h * d.h) as u64;
            trace.dram_writes += t * grad_out_words;
            trace.glb_writes += t * grad_out_words;
            trace.glb_reads += t * grad_out_words;
            if let Some(masks) = masks {
                trace.elided_spad_reads += elided_output_gating(schedule, masks);
            }
        }
        Stage::Wup => {
            // weight round trip: old filters in, updated filters out
            trace.dram_reads += filter_words;
            trace.filter_dram_reads += filter_words;
            trace.dram_writes += filter_words;
            trace.glb_writes += filter_words;
            trace.glb_reads += filter_words;
            // per-timestep partial weight-gradient accumulation in the GLB
            trace.glb_writes += t * filter_words;
            trace.glb_reads += t * filter_words;
            // stored spikes and potential gradients re-read each timestep
            trace.glb_reads += t * in_words;
            trace.glb_reads += t * out_words;
            // scratchpad view: operand fills/drains plus partial psums
            trace.spad_writes += t * (in_words + out_words + filter_words);
            trace.spad_reads += t * (in_words + out_words + filter_words);
            trace.spad_writes += filter_words;
            trace.spad_reads += filter_words;
            if let Some(masks) = masks {
                trace.elided_spad_reads += elided_input_gating(schedule, masks);
            }
        }
    }
    Ok(trace)
}

/// Filter reads elided by input-spike gating: one per PE of the output
/// channel group for every scheduled MAC whose in-bounds spike operand is
/// zero.
fn elided_input_gating(s: &TileSchedule, masks: &[Vec<f64>]) -> u64 {
    let d = &s.dims;
    let mut elided = 0u64;
    for mask in masks {
        for ey in 0..d.e {
            for ex in 0..d.e {
                for ry in 0..d.r {
                    let Some(iy) = input_coord(ey, ry, s.stride, s.pad, d.h) else { continue };
                    for rx in 0..d.r {
                        let Some(ix) = input_coord(ex, rx, s.stride, s.pad, d.h) else { continue };
                        let base = (iy * d.h + ix) * d.c;
                        for c in 0..d.c {
                            if mask[base + c] == 0.0 {
                                elided += d.k as u64;
                            }
                        }
                    }
                }
            }
        }
    }
    elided
}

/// Filter reads elided by gradient gating in the backward stage: every MAC
/// whose output-side operand is masked off skips its filter read.
fn elided_output_gating(s: &TileSchedule, masks: &[Vec<f64>]) -> u64 {
    let d = &s.dims;
    let valid = valid_offsets_per_position(s);
    let mut elided = 0u64;
    for mask in masks {
        for ey in 0..d.e {
            for ex in 0..d.e {
                let pos = ey * d.e + ex;
                let zero_k = mask[pos * d.k..][..d.k].iter().filter(|&&v| v == 0.0).count() as u64;
                elided += zero_k * valid[pos] * d.c as u64;
            }
        }
    }
    elided
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosscheckRow {
    pub layer: String,
    pub stage: Stage,
    pub field: &'static str,
    pub analytic: f64,
    pub simulated: f64,
    pub delta: f64,
    pub rel_delta: f64,
    /// True where the analytic expression carries constants the walk does
    /// not derive (the backward 7x / packed terms and weight-update
    /// scratchpad mirror rule).
    pub assumption: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrosscheckReport {
    pub rows: Vec<CrosscheckRow>,
}

impl CrosscheckReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,stage,field,analytic,simulated,delta,rel_delta,assumption\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.0},{:.0},{:.0},{:.6},{}\n",
                r.layer,
                r.stage.name(),
                r.field,
                r.analytic,
                r.simulated,
                r.delta,
                r.rel_delta,
                r.assumption
            ));
        }
        out
    }

    /// Rows that the analytic table derives exactly (no assumption flag).
    pub fn exact_rows(&self) -> impl Iterator<Item = &CrosscheckRow> {
        self.rows.iter().filter(|r| !r.assumption)
    }
}

/// Compares one layer's simulated traces against its analytic counts.
/// Refuses mismatched layer names.
pub fn crosscheck_layer(
    layer_counts: &LayerCounts,
    traces: &[(Stage, TrafficTrace)],
    layer_name: &str,
) -> Result<Vec<CrosscheckRow>> {
    if layer_counts.name != layer_name {
        return Err(Error::Validation(format!(
            "crosscheck refused: counts are for `{}`, trace is for `{layer_name}`",
            layer_counts.name
        )));
    }
    let mut rows = Vec::new();
    for (stage, trace) in traces {
        let counts = layer_counts.stage(*stage);
        let fields: [(&'static str, f64, f64, bool); 3] = [
            ("dram", counts.n_dram, trace.dram_total() as f64, *stage == Stage::Bwd),
            ("glb", counts.n_glb, trace.glb_total() as f64, *stage == Stage::Bwd),
            (
                "spad",
                counts.n_spad,
                trace.spad_total() as f64,
                *stage != Stage::Fwd,
            ),
        ];
        for (field, analytic, simulated, assumption) in fields {
            let delta = simulated - analytic;
            let rel = if analytic != 0.0 {
                delta / analytic
            } else if simulated == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            rows.push(CrosscheckRow {
                layer: layer_name.to_string(),
                stage: *stage,
                field,
                analytic,
                simulated,
                delta,
                rel_delta: rel,
                assumption,
            });
        }
    }
    Ok(rows)
}

/// Runs the full schedule-simulate-compare pipeline for a network.
pub fn crosscheck_network(
    dims: &[LayerDims],
    strides_pads: &[(usize, usize)],
    arch: &ArchParams,
    counts: &OpCounts,
) -> Result<CrosscheckReport> {
    if dims.len() != counts.layers.len() || dims.len() != strides_pads.len() {
        return Err(Error::Validation("crosscheck: layer list mismatch".into()));
    }
    let pe_cfg = PeArrayConfig::from_arch(arch);
    let mut report = CrosscheckReport::default();
    for (i, d) in dims.iter().enumerate() {
        let (stride, pad) = strides_pads[i];
        let schedule = schedule_layer(d, stride, pad, &pe_cfg, arch.timesteps)?;
        let traces: Vec<(Stage, TrafficTrace)> = Stage::ALL
            .iter()
            .map(|&stage| Ok((stage, simulate_traffic(&schedule, stage, None)?)))
            .collect::<Result<_>>()?;
        report
            .rows
            .extend(crosscheck_layer(&counts.layers[i], &traces, &d.name)?);
    }
    Ok(report)
}
