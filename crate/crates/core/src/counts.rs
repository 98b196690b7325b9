//! Analytic operation and memory-access counts for one image of training on
//! the weight-stationary spiking accelerator, per layer and per stage
//! (forward, backward, weight update).
//!
//! Counts are expectation-level (sparsity-scaled) real values, reported to
//! one count of precision. Spike tensors move packed `b` one-bit values per
//! word; the packed word count for a `C x H x H` tensor is
//! `ceil(C*H^2 / b)`, which equals the plain `1/b` scaling whenever `b`
//! divides the element count (it does for every layer of the reference
//! networks) and matches the traffic simulator exactly in all cases.
//!
//! Sparsity attribution: a layer's forward and weight-update MACs are gated
//! by the sparsity of its *input* activations (the operand that enables the
//! MAC), its backward MACs by the layer's own potential-gradient sparsity,
//! and its spike-gradient computations by its own firing-window sparsity.

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::network::LayerDims;
use crate::probe::SparsityProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct ArchParams {
    /// Maximum operand bitwidth; also the spike packing factor.
    pub bitwidth: u32,
    pub timesteps: u32,
    pub pe_count: usize,
    pub pgu_count: usize,
    pub filter_spad_bytes: usize,
    pub input_spad_bytes: usize,
    pub psum_spad_bytes: usize,
    pub glb_w_bytes: usize,
    /// Capacity of the potential buffer; the gradient buffer mirrors it.
    pub glb_u_bytes: usize,
    pub glb_s_bytes: usize,
}

impl Default for ArchParams {
    fn default() -> Self {
        // 128-PE / 128-PGU configuration with buffers sized for the VGG5
        // working set: 144 KB filters, 256 KB potentials, 32 KB spikes,
        // 1.125 KB scratchpads.
        ArchParams {
            bitwidth: 8,
            timesteps: 8,
            pe_count: 128,
            pgu_count: 128,
            filter_spad_bytes: 1152,
            input_spad_bytes: 1152,
            psum_spad_bytes: 1152,
            glb_w_bytes: 147_456,
            glb_u_bytes: 262_144,
            glb_s_bytes: 32_768,
        }
    }
}

impl ArchParams {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = ArchParams::default();
        let get = |key: &str, dflt: usize| -> Result<usize> {
            Ok(cfg.get_usize(key)?.unwrap_or(dflt))
        };
        let arch = ArchParams {
            bitwidth: get("bitwidth", d.bitwidth as usize)? as u32,
            timesteps: get("timesteps", d.timesteps as usize)? as u32,
            pe_count: get("pe_count", d.pe_count)?,
            pgu_count: get("pgu_count", d.pgu_count)?,
            filter_spad_bytes: get("filter_spad_bytes", d.filter_spad_bytes)?,
            input_spad_bytes: get("input_spad_bytes", d.input_spad_bytes)?,
            psum_spad_bytes: get("psum_spad_bytes", d.psum_spad_bytes)?,
            glb_w_bytes: get("glb_w_bytes", d.glb_w_bytes)?,
            glb_u_bytes: get("glb_u_bytes", d.glb_u_bytes)?,
            glb_s_bytes: get("glb_s_bytes", d.glb_s_bytes)?,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bitwidth == 0 || self.timesteps == 0 {
            return Err(Error::Validation("bitwidth and timesteps must be >= 1".into()));
        }
        if self.pe_count == 0
            || self.filter_spad_bytes == 0
            || self.glb_w_bytes == 0
            || self.glb_u_bytes == 0
            || self.glb_s_bytes == 0
        {
            return Err(Error::Validation("capacities must be positive".into()));
        }
        Ok(())
    }

    pub fn with_timesteps(&self, t: u32) -> Self {
        let mut out = self.clone();
        out.timesteps = t;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Fwd,
    Bwd,
    Wup,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Fwd, Stage::Bwd, Stage::Wup];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Fwd => "fwd",
            Stage::Bwd => "bwd",
            Stage::Wup => "wup",
        }
    }
}

/// Counts for one layer and stage. `*_dense` fields hold the sparsity-free
/// counterparts needed by the overhead-aware energy accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageCounts {
    pub n_mac: f64,
    pub n_mac_dense: f64,
    pub n_lif: f64,
    pub n_grad_u: f64,
    pub n_grad_s: f64,
    pub n_grad_s_dense: f64,
    pub n_dram: f64,
    pub n_glb: f64,
    pub n_spad: f64,
}

impl StageCounts {
    fn add(&mut self, other: &StageCounts) {
        self.n_mac += other.n_mac;
        self.n_mac_dense += other.n_mac_dense;
        self.n_lif += other.n_lif;
        self.n_grad_u += other.n_grad_u;
        self.n_grad_s += other.n_grad_s;
        self.n_grad_s_dense += other.n_grad_s_dense;
        self.n_dram += other.n_dram;
        self.n_glb += other.n_glb;
        self.n_spad += other.n_spad;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCounts {
    pub name: String,
    pub fwd: StageCounts,
    pub bwd: StageCounts,
    pub wup: StageCounts,
}

impl LayerCounts {
    pub fn stage(&self, stage: Stage) -> &StageCounts {
        match stage {
            Stage::Fwd => &self.fwd,
            Stage::Bwd => &self.bwd,
            Stage::Wup => &self.wup,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpCounts {
    pub layers: Vec<LayerCounts>,
}

impl OpCounts {
    pub fn stage_total(&self, stage: Stage) -> StageCounts {
        let mut total = StageCounts::default();
        for layer in &self.layers {
            total.add(layer.stage(stage));
        }
        total
    }

    /// CSV with the documented column order:
    /// `layer,stage,n_mac,n_lif,n_grad_s,n_grad_u,n_dram,n_glb,n_spad`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,stage,n_mac,n_lif,n_grad_s,n_grad_u,n_dram,n_glb,n_spad\n");
        for layer in &self.layers {
            for stage in Stage::ALL {
                let c = layer.stage(stage);
                out.push_str(&format!(
                    "{},{},{:.0},{:.0},{:.0},{:.0},{:.0},{:.0},{:.0}\n",
                    layer.name,
                    stage.name(),
                    c.n_mac,
                    c.n_lif,
                    c.n_grad_s,
                    c.n_grad_u,
                    c.n_dram,
                    c.n_glb,
                    c.n_spad
                ));
            }
        }
        out
    }
}

/// Resolved per-layer sparsity inputs for the count formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSparsity {
    /// Zero rate of the layer's input activations (gates fwd/wup MACs).
    pub sp_in: f64,
    /// Zero rate of the firing-function derivative window.
    pub sp_gf: f64,
    /// Zero rate of the layer's potential gradients (gates bwd MACs).
    pub sp_gu: f64,
}

impl LayerSparsity {
    pub const DENSE: LayerSparsity = LayerSparsity {
        sp_in: 0.0,
        sp_gf: 0.0,
        sp_gu: 0.0,
    };
}

fn check_profile_alignment(dims: &[LayerDims], profile: &SparsityProfile) -> Result<()> {
    if profile.layers.len() != dims.len() + 1 {
        return Err(Error::Validation(format!(
            "profile has {} rows, expected {} (inp + one per conv/fc layer)",
            profile.layers.len(),
            dims.len() + 1
        )));
    }
    if profile.layers[0].name != "inp" {
        return Err(Error::Validation(format!(
            "profile row 0 must be `inp`, found `{}`",
            profile.layers[0].name
        )));
    }
    Ok(())
}

/// Maps an SNN profile onto the formula inputs. Layer `l`'s input sparsity
/// comes from the previous profile row (the `inp` row for the first layer);
/// pooling between rows is absorbed into the recorded rates. Missing window
/// or gradient rates are treated as dense.
pub fn resolve_snn_sparsity(
    dims: &[LayerDims],
    profile: &SparsityProfile,
) -> Result<Vec<LayerSparsity>> {
    check_profile_alignment(dims, profile)?;
    let mut out = Vec::with_capacity(dims.len());
    for l in 0..dims.len() {
        let input_row = &profile.layers[l];
        let own_row = &profile.layers[l + 1];
        let sp_in = input_row.sp_s.ok_or_else(|| {
            Error::Validation(format!(
                "profile row `{}` lacks sp_s needed as input sparsity of `{}`",
                input_row.name, own_row.name
            ))
        })?;
        out.push(LayerSparsity {
            sp_in,
            sp_gf: own_row.sp_gf.unwrap_or(0.0),
            sp_gu: own_row.sp_gu.unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// Maps an ANN profile (activation / masked-gradient rates) onto the same
/// formula inputs: `sp_z` plays the role of input sparsity, `sp_gz` gates
/// the backward MACs.
pub fn resolve_ann_sparsity(
    dims: &[LayerDims],
    profile: &SparsityProfile,
) -> Result<Vec<LayerSparsity>> {
    check_profile_alignment(dims, profile)?;
    let mut out = Vec::with_capacity(dims.len());
    for l in 0..dims.len() {
        let input_row = &profile.layers[l];
        let own_row = &profile.layers[l + 1];
        let sp_in = input_row.sp_z.ok_or_else(|| {
            Error::Validation(format!(
                "profile row `{}` lacks sp_z needed as input sparsity of `{}`",
                input_row.name, own_row.name
            ))
        })?;
        out.push(LayerSparsity {
            sp_in,
            sp_gf: 0.0,
            sp_gu: own_row.sp_gz.unwrap_or(0.0),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CountOptions {
    /// Apply the scratchpad read elision (off to match the published
    /// dense-scratchpad accounting).
    pub sparse_spad: bool,
    /// Count LIF / potential-gradient / spike-gradient operations (disabled
    /// for the ANN specialization).
    pub no_lif_terms: bool,
    /// Spike packing factor override; `None` uses the arch bitwidth. The ANN
    /// specialization moves whole activations (factor 1).
    pub pack_override: Option<u32>,
}

/// Packed word count for a `C x H x H` one-bit tensor.
fn packed_words(c: usize, h: usize, pack: f64) -> f64 {
    ((c * h * h) as f64 / pack).ceil()
}

fn layer_counts(d: &LayerDims, arch: &ArchParams, sp: &LayerSparsity, opts: &CountOptions) -> LayerCounts {
    let t = arch.timesteps as f64;
    let pack = opts.pack_override.unwrap_or(arch.bitwidth) as f64;
    let lif = !opts.no_lif_terms;

    let cr2ke2 = (d.c * d.r * d.r * d.k * d.e * d.e) as f64;
    let cr2kh2 = (d.c * d.r * d.r * d.k * d.h * d.h) as f64;
    let ke2 = (d.k * d.e * d.e) as f64;
    let kcr2 = (d.k * d.c * d.r * d.r) as f64;
    let in_words = packed_words(d.c, d.h, pack);

    let fwd_mac_dense = t * cr2ke2;
    let fwd = StageCounts {
        n_mac: (1.0 - sp.sp_in) * fwd_mac_dense,
        n_mac_dense: fwd_mac_dense,
        n_lif: if lif { t * ke2 } else { 0.0 },
        n_dram: kcr2 + t * (ke2 + in_words),
        n_glb: 2.0 * (kcr2 + t * (ke2 + in_words)),
        n_spad: if opts.sparse_spad {
            kcr2 * (1.0 + (1.0 - sp.sp_in)) + 2.0 * t * in_words
        } else {
            2.0 * (kcr2 + t * in_words)
        },
        ..StageCounts::default()
    };

    let bwd_mac_dense = t * cr2kh2;
    let grad_s_dense = if lif { t * ke2 } else { 0.0 };
    let bwd = StageCounts {
        n_mac: (1.0 - sp.sp_gu) * bwd_mac_dense,
        n_mac_dense: bwd_mac_dense,
        n_grad_u: if lif { t * ke2 } else { 0.0 },
        n_grad_s: (1.0 - sp.sp_gf) * grad_s_dense,
        n_grad_s_dense: grad_s_dense,
        n_dram: t * (ke2 + in_words),
        n_glb: 7.0 * t * ke2 + 2.0 * t * in_words + kcr2,
        n_spad: if opts.sparse_spad {
            (1.0 - sp.sp_gf) * kcr2 + t * ke2
        } else {
            kcr2 + t * ke2
        },
        ..StageCounts::default()
    };

    let wup_glb = 2.0 * (1.0 + t) * kcr2 + t * (in_words + ke2);
    let wup = StageCounts {
        n_mac: (1.0 - sp.sp_in) * fwd_mac_dense,
        n_mac_dense: fwd_mac_dense,
        n_dram: 2.0 * kcr2,
        n_glb: wup_glb,
        n_spad: if opts.sparse_spad {
            wup_glb + t * kcr2 * (1.0 + (1.0 - sp.sp_in))
        } else {
            wup_glb + 2.0 * t * kcr2
        },
        ..StageCounts::default()
    };

    LayerCounts {
        name: d.name.clone(),
        fwd,
        bwd,
        wup,
    }
}

/// Evaluates every count formula for all layers.
pub fn count_ops(
    dims: &[LayerDims],
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    opts: &CountOptions,
) -> Result<OpCounts> {
    if dims.len() != sparsity.len() {
        return Err(Error::Validation(format!(
            "{} layers but {} sparsity entries",
            dims.len(),
            sparsity.len()
        )));
    }
    arch.validate()?;
    Ok(OpCounts {
        layers: dims
            .iter()
            .zip(sparsity)
            .map(|(d, sp)| layer_counts(d, arch, sp, opts))
            .collect(),
    })
}

/// Compute-operation counts only (MAC / LIF / gradient ops).
pub fn compute_compute_counts(
    dims: &[LayerDims],
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    opts: &CountOptions,
) -> Result<OpCounts> {
    let mut counts = count_ops(dims, arch, sparsity, opts)?;
    for layer in &mut counts.layers {
        for stage in [&mut layer.fwd, &mut layer.bwd, &mut layer.wup] {
            stage.n_dram = 0.0;
            stage.n_glb = 0.0;
            stage.n_spad = 0.0;
        }
    }
    Ok(counts)
}

/// Memory-access counts only (DRAM / GLB / scratchpad).
pub fn compute_memory_counts(
    dims: &[LayerDims],
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    opts: &CountOptions,
) -> Result<OpCounts> {
    let mut counts = count_ops(dims, arch, sparsity, opts)?;
    for layer in &mut counts.layers {
        for stage in [&mut layer.fwd, &mut layer.bwd, &mut layer.wup] {
            stage.n_mac = 0.0;
            stage.n_mac_dense = 0.0;
            stage.n_lif = 0.0;
            stage.n_grad_u = 0.0;
            stage.n_grad_s = 0.0;
            stage.n_grad_s_dense = 0.0;
        }
    }
    Ok(counts)
}

pub fn vgg5_dims() -> Vec<LayerDims> {
    // 64C3-MP2-128C3-128C3-MP2-1024FC-10FC on 3x32x32 input
    vec![
        LayerDims { name: "cov1".into(), c: 3, h: 32, k: 64, e: 32, r: 3 },
        LayerDims { name: "cov2".into(), c: 64, h: 16, k: 128, e: 16, r: 3 },
        LayerDims { name: "cov3".into(), c: 128, h: 16, k: 128, e: 16, r: 3 },
        LayerDims { name: "lin4".into(), c: 8192, h: 1, k: 1024, e: 1, r: 1 },
        LayerDims { name: "lin5".into(), c: 1024, h: 1, k: 10, e: 1, r: 1 },
    ]
}
