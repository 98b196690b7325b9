//! Energy model: per-stage compute and memory energy for one image, plus
//! the hypothetical timestep and gradient-sparsity sweeps.
//!
//! Every energy is normalized to one forward MAC of the ANN baseline. The
//! published per-operation values cover the three compute paths
//! (fwd MAC 0.146, bwd MAC 1.003/1.120, potential-gradient op 0.952/1.078);
//! per-access memory energies and the LIF op are not published, so the
//! defaults here are a documented calibration chosen to reproduce the
//! reported memory-energy structure (filter DRAM traffic ~78% of memory
//! energy, DRAM+GLB ~96% of memory energy) at Eyeriss-like access-cost
//! ratios. Ratio-style results are meaningful under this calibration;
//! absolute values are not.
//!
//! Overhead accounting for a sparsity-gated term follows
//! `N(sp) * E_with + N_dense * (E_with - E_without)`: every potential
//! operation pays the sparsity-check overhead, executed operations pay the
//! full datapath cost. Terms without a sparsity gate take `N * E_with` in
//! overhead mode (their with/without values coincide unless the unit
//! carries checking hardware).

use crate::config::KvConfig;
use crate::counts::{count_ops, ArchParams, CountOptions, LayerSparsity, OpCounts, Stage, StageCounts};
use crate::error::{Error, Result};
use crate::network::LayerDims;
use crate::parallel::{map_indexed, Parallelism};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpEnergy {
    pub without_overhead: f64,
    pub with_overhead: f64,
}

impl OpEnergy {
    pub fn flat(value: f64) -> Self {
        OpEnergy {
            without_overhead: value,
            with_overhead: value,
        }
    }

    fn overhead(&self) -> f64 {
        self.with_overhead - self.without_overhead
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    pub e_mac_fwd: OpEnergy,
    pub e_mac_bwd: OpEnergy,
    pub e_mac_wup: OpEnergy,
    pub e_lif: OpEnergy,
    pub e_grad_u: OpEnergy,
    pub e_dram: f64,
    pub e_glb: f64,
    pub e_spad: f64,
    pub e_ctrl: f64,
}

impl EnergyTable {
    /// Spiking-accelerator table: published compute energies plus the
    /// documented memory/LIF calibration.
    pub fn default_snn() -> Self {
        EnergyTable {
            e_mac_fwd: OpEnergy::flat(0.146),
            e_mac_bwd: OpEnergy {
                without_overhead: 1.003,
                with_overhead: 1.120,
            },
            // weight update reuses the forward (accumulate-only) datapath
            e_mac_wup: OpEnergy::flat(0.146),
            e_lif: OpEnergy::flat(1.0),
            e_grad_u: OpEnergy {
                without_overhead: 0.952,
                with_overhead: 1.078,
            },
            e_dram: 260.0,
            e_glb: 5.3,
            e_spad: 1.0,
            e_ctrl: 0.0,
        }
    }

    /// Baseline-ANN table: full multiply-accumulate in every stage, same
    /// memory hierarchy costs.
    pub fn default_ann() -> Self {
        EnergyTable {
            e_mac_fwd: OpEnergy::flat(1.0),
            e_mac_bwd: OpEnergy::flat(1.0),
            e_mac_wup: OpEnergy::flat(1.0),
            e_lif: OpEnergy::flat(0.0),
            e_grad_u: OpEnergy::flat(0.0),
            e_dram: 260.0,
            e_glb: 5.3,
            e_spad: 1.0,
            e_ctrl: 0.0,
        }
    }

    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        let d = EnergyTable::default_snn();
        let op = |base: OpEnergy, key: &str| -> Result<OpEnergy> {
            let ovh_key = format!("{key}_ovh");
            Ok(match (cfg.get_f64(key)?, cfg.get_f64(&ovh_key)?) {
                (None, None) => base,
                (Some(w), None) => OpEnergy::flat(w),
                (None, Some(o)) => OpEnergy {
                    without_overhead: base.without_overhead,
                    with_overhead: o,
                },
                (Some(w), Some(o)) => OpEnergy {
                    without_overhead: w,
                    with_overhead: o,
                },
            })
        };
        let table = EnergyTable {
            e_mac_fwd: op(d.e_mac_fwd, "e_mac_fwd")?,
            e_mac_bwd: op(d.e_mac_bwd, "e_mac_bwd")?,
            e_mac_wup: op(d.e_mac_wup, "e_mac_wup")?,
            e_lif: op(d.e_lif, "e_lif")?,
            e_grad_u: op(d.e_grad_u, "e_grad_u")?,
            e_dram: cfg.get_f64("e_dram")?.unwrap_or(d.e_dram),
            e_glb: cfg.get_f64("e_glb")?.unwrap_or(d.e_glb),
            e_spad: cfg.get_f64("e_spad")?.unwrap_or(d.e_spad),
            e_ctrl: cfg.get_f64("e_ctrl")?.unwrap_or(d.e_ctrl),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, op) in [
            ("e_mac_fwd", &self.e_mac_fwd),
            ("e_mac_bwd", &self.e_mac_bwd),
            ("e_mac_wup", &self.e_mac_wup),
            ("e_lif", &self.e_lif),
            ("e_grad_u", &self.e_grad_u),
        ] {
            if op.without_overhead < 0.0 || op.with_overhead < op.without_overhead {
                return Err(Error::Validation(format!(
                    "{name}: need 0 <= without ({}) <= with ({})",
                    op.without_overhead, op.with_overhead
                )));
            }
        }
        for (name, v) in [
            ("e_dram", self.e_dram),
            ("e_glb", self.e_glb),
            ("e_spad", self.e_spad),
            ("e_ctrl", self.e_ctrl),
        ] {
            if v < 0.0 {
                return Err(Error::Validation(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let s = |op: &OpEnergy| OpEnergy {
            without_overhead: op.without_overhead * factor,
            with_overhead: op.with_overhead * factor,
        };
        EnergyTable {
            e_mac_fwd: s(&self.e_mac_fwd),
            e_mac_bwd: s(&self.e_mac_bwd),
            e_mac_wup: s(&self.e_mac_wup),
            e_lif: s(&self.e_lif),
            e_grad_u: s(&self.e_grad_u),
            e_dram: self.e_dram * factor,
            e_glb: self.e_glb * factor,
            e_spad: self.e_spad * factor,
            e_ctrl: self.e_ctrl * factor,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageEnergy {
    pub compute: f64,
    pub dram: f64,
    pub glb: f64,
    pub spad: f64,
}

impl StageEnergy {
    pub fn memory(&self) -> f64 {
        self.dram + self.glb + self.spad
    }

    pub fn total(&self) -> f64 {
        self.compute + self.memory()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub fwd: StageEnergy,
    pub bwd: StageEnergy,
    pub wup: StageEnergy,
    pub e_ctrl: f64,
    pub total: f64,
}

impl EnergyReport {
    pub fn compute_total(&self) -> f64 {
        self.fwd.compute + self.bwd.compute + self.wup.compute
    }

    pub fn memory_total(&self) -> f64 {
        self.fwd.memory() + self.bwd.memory() + self.wup.memory()
    }

    pub fn dram_total(&self) -> f64 {
        self.fwd.dram + self.bwd.dram + self.wup.dram
    }

    pub fn glb_total(&self) -> f64 {
        self.fwd.glb + self.bwd.glb + self.wup.glb
    }

    pub fn spad_total(&self) -> f64 {
        self.fwd.spad + self.bwd.spad + self.wup.spad
    }

    pub fn stage(&self, stage: Stage) -> &StageEnergy {
        match stage {
            Stage::Fwd => &self.fwd,
            Stage::Bwd => &self.bwd,
            Stage::Wup => &self.wup,
        }
    }

    /// The report stores `total` as the sum of its parts; this re-derives it
    /// and checks the decomposition to 1e-9 relative.
    pub fn check_consistency(&self) -> Result<()> {
        let recomputed = self.compute_total() + self.memory_total() + self.e_ctrl;
        let tol = 1e-9 * recomputed.abs().max(1.0);
        if (recomputed - self.total).abs() > tol {
            return Err(Error::Validation(format!(
                "energy report inconsistent: total {} vs parts {}",
                self.total, recomputed
            )));
        }
        Ok(())
    }

    /// CSV rows `(stage, component, energy)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,component,energy\n");
        for stage in Stage::ALL {
            let s = self.stage(stage);
            out.push_str(&format!("{},compute,{:.6}\n", stage.name(), s.compute));
            out.push_str(&format!("{},dram,{:.6}\n", stage.name(), s.dram));
            out.push_str(&format!("{},glb,{:.6}\n", stage.name(), s.glb));
            out.push_str(&format!("{},spad,{:.6}\n", stage.name(), s.spad));
        }
        out.push_str(&format!("ctrl,ctrl,{:.6}\n", self.e_ctrl));
        out.push_str(&format!("total,total,{:.6}\n", self.total));
        out
    }

    /// Single-line machine-readable summary.
    pub fn summary_line(&self) -> String {
        format!(
            "total={:.6} compute={:.6} memory={:.6} fwd={:.6} bwd={:.6} wup={:.6} ctrl={:.6}",
            self.total,
            self.compute_total(),
            self.memory_total(),
            self.fwd.total(),
            self.bwd.total(),
            self.wup.total(),
            self.e_ctrl
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyOptions {
    pub overhead_mode: bool,
    pub sparse_spad: bool,
}

/// One sparsity-gated (or flat) compute term.
fn compute_term(n_sparse: f64, n_dense: f64, e: &OpEnergy, overhead_mode: bool) -> f64 {
    if overhead_mode {
        n_sparse * e.with_overhead + n_dense * e.overhead()
    } else {
        n_sparse * e.without_overhead
    }
}

/// Energy of one stage from its aggregated counts.
pub fn stage_energy(
    counts: &StageCounts,
    stage: Stage,
    table: &EnergyTable,
    overhead_mode: bool,
) -> StageEnergy {
    let compute = match stage {
        Stage::Fwd => {
            compute_term(counts.n_mac, counts.n_mac_dense, &table.e_mac_fwd, overhead_mode)
                + compute_term(counts.n_lif, counts.n_lif, &table.e_lif, overhead_mode)
        }
        Stage::Bwd => {
            compute_term(counts.n_mac, counts.n_mac_dense, &table.e_mac_bwd, overhead_mode)
                + compute_term(counts.n_grad_u, counts.n_grad_u, &table.e_grad_u, overhead_mode)
        }
        Stage::Wup => compute_term(counts.n_mac, counts.n_mac_dense, &table.e_mac_wup, overhead_mode),
    };
    StageEnergy {
        compute,
        dram: counts.n_dram * table.e_dram,
        glb: counts.n_glb * table.e_glb,
        spad: counts.n_spad * table.e_spad,
    }
}

/// Assembles the full report from per-layer counts.
pub fn report_from_counts(counts: &OpCounts, table: &EnergyTable, overhead_mode: bool) -> EnergyReport {
    let fwd = stage_energy(&counts.stage_total(Stage::Fwd), Stage::Fwd, table, overhead_mode);
    let bwd = stage_energy(&counts.stage_total(Stage::Bwd), Stage::Bwd, table, overhead_mode);
    let wup = stage_energy(&counts.stage_total(Stage::Wup), Stage::Wup, table, overhead_mode);
    let total = fwd.total() + bwd.total() + wup.total() + table.e_ctrl;
    EnergyReport {
        fwd,
        bwd,
        wup,
        e_ctrl: table.e_ctrl,
        total,
    }
}

/// Composes the op counter and the stage energies.
pub fn total_energy(
    dims: &[LayerDims],
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    table: &EnergyTable,
    opts: &EnergyOptions,
) -> Result<(OpCounts, EnergyReport)> {
    table.validate()?;
    let counts = count_ops(
        dims,
        arch,
        sparsity,
        &CountOptions {
            sparse_spad: opts.sparse_spad,
            ..CountOptions::default()
        },
    )?;
    let report = report_from_counts(&counts, table, opts.overhead_mode);
    Ok((counts, report))
}

/// Per-layer compute energy by stage, for layerwise breakdowns.
pub fn layer_compute_energy(
    counts: &OpCounts,
    table: &EnergyTable,
    overhead_mode: bool,
) -> Vec<(String, [f64; 3])> {
    counts
        .layers
        .iter()
        .map(|layer| {
            let mut per_stage = [0.0; 3];
            for (i, stage) in Stage::ALL.iter().enumerate() {
                per_stage[i] = stage_energy(layer.stage(*stage), *stage, table, overhead_mode).compute;
            }
            (layer.name.clone(), per_stage)
        })
        .collect()
}

// --- timestep sweep with the optional capacity-spill model ---------------

/// Smallest T at which some per-layer stored tensor (potentials, potential
/// gradients, or spikes, each held for all timesteps) no longer fits its
/// global buffer.
pub fn spill_threshold(dims: &[LayerDims], arch: &ArchParams) -> f64 {
    let mut threshold = f64::INFINITY;
    let byte_rate_u = arch.bitwidth as f64 / 8.0;
    for d in dims {
        let ke2 = d.output_elems() as f64;
        // U and its mirror gradient buffer, b-bit elements per timestep
        threshold = threshold.min(arch.glb_u_bytes as f64 / (ke2 * byte_rate_u));
        // spike buffer, one bit per element per timestep
        threshold = threshold.min(arch.glb_s_bytes as f64 / (ke2 / 8.0));
    }
    threshold
}

/// Extra DRAM energy once a stored tensor overflows its buffer: the
/// overflowed words round-trip to DRAM instead of staying in the GLB, with a
/// re-fetch multiplicity growing with the oversubscription ratio. Zero below
/// the threshold; grows quadratically in T above it.
pub fn spill_energy(dims: &[LayerDims], arch: &ArchParams, table: &EnergyTable) -> f64 {
    let t = arch.timesteps as f64;
    let premium = (table.e_dram - table.e_glb).max(0.0);
    let word_bytes = arch.bitwidth as f64 / 8.0;
    let mut energy = 0.0;
    for d in dims {
        let ke2 = d.output_elems() as f64;
        // potentials and potential gradients, one mirrored buffer each
        let req_u = ke2 * t * word_bytes;
        let cap_u = arch.glb_u_bytes as f64;
        if req_u > cap_u {
            let overflow_words = (req_u - cap_u) / word_bytes;
            energy += 2.0 * 2.0 * overflow_words * (req_u / cap_u) * premium;
        }
        // spikes, packed
        let req_s = ke2 * t / 8.0;
        let cap_s = arch.glb_s_bytes as f64;
        if req_s > cap_s {
            let overflow_words = (req_s - cap_s) * 8.0 / arch.bitwidth as f64;
            energy += 2.0 * overflow_words * (req_s / cap_s) * premium;
        }
    }
    energy
}

/// Total energy across a list of timestep values. With `spill` the capacity
/// model above is added; otherwise the curve is affine in T.
#[allow(clippy::too_many_arguments)]
pub fn sweep_timesteps(
    dims: &[LayerDims],
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    table: &EnergyTable,
    t_list: &[u32],
    opts: &EnergyOptions,
    spill: bool,
    par: Parallelism,
) -> Result<Vec<(u32, f64)>> {
    if t_list.iter().any(|&t| t == 0) {
        return Err(Error::Validation("timestep values must be >= 1".into()));
    }
    let points = map_indexed(t_list, par, |_, &t| -> Result<(u32, f64)> {
        let arch_t = arch.with_timesteps(t);
        let (_, report) = total_energy(dims, &arch_t, sparsity, table, opts)?;
        let mut total = report.total;
        if spill {
            total += spill_energy(dims, &arch_t, table);
        }
        Ok((t, total))
    });
    points.into_iter().collect()
}

// --- potential-gradient sparsity sweep ------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradUSweepPoint {
    pub scale: f64,
    pub snn_compute: f64,
    pub ann_compute: f64,
}

/// Scales the layerwise potential-gradient sparsity by each factor (clamped
/// to [0, 1]), recomputing the SNN compute energy against a fixed ANN
/// compute energy. Returns the curve and the break-even scale where the two
/// cross, if any (linear interpolation between scan points).
#[allow(clippy::too_many_arguments)]
pub fn sweep_grad_u_scale(
    dims: &[LayerDims],
    arch: &ArchParams,
    base: &[LayerSparsity],
    table: &EnergyTable,
    ann_compute: f64,
    scales: &[f64],
    opts: &EnergyOptions,
    par: Parallelism,
) -> Result<(Vec<GradUSweepPoint>, Option<f64>)> {
    let points = map_indexed(scales, par, |_, &scale| -> Result<GradUSweepPoint> {
        let scaled: Vec<LayerSparsity> = base
            .iter()
            .map(|sp| LayerSparsity {
                sp_gu: (sp.sp_gu * scale).clamp(0.0, 1.0),
                ..*sp
            })
            .collect();
        let (_, report) = total_energy(dims, arch, &scaled, table, opts)?;
        Ok(GradUSweepPoint {
            scale,
            snn_compute: report.compute_total(),
            ann_compute,
        })
    });
    let points: Vec<GradUSweepPoint> = points.into_iter().collect::<Result<_>>()?;
    let mut breakeven = None;
    for pair in points.windows(2) {
        let d0 = pair[0].snn_compute - pair[0].ann_compute;
        let d1 = pair[1].snn_compute - pair[1].ann_compute;
        if d0 == 0.0 {
            breakeven = Some(pair[0].scale);
            break;
        }
        if d0 * d1 < 0.0 {
            let frac = d0 / (d0 - d1);
            breakeven = Some(pair[0].scale + frac * (pair[1].scale - pair[0].scale));
            break;
        }
    }
    if breakeven.is_none() {
        if let Some(last) = points.last() {
            if last.snn_compute == last.ann_compute {
                breakeven = Some(last.scale);
            }
        }
    }
    Ok((points, breakeven))
}
