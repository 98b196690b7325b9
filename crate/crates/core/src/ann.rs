//! Baseline op counts and comparison reporting for standard-backprop ANN
//! training on the same weight-stationary dataflow.
//!
//! The ANN counts are the strict specialization of the spiking formulas:
//! one timestep, no LIF or potential-gradient terms, activations moved as
//! whole words (no one-bit packing), with ReLU-mask traffic added on top
//! (masks are written during the forward pass and read back during
//! backprop, packed `bitwidth` bits per word, through the dedicated mask
//! buffer at GLB level). Activation sparsity gates forward/weight-update
//! MACs exactly as spike sparsity does; masked-gradient sparsity gates the
//! backward MACs exactly as potential-gradient sparsity does.

use crate::counts::{count_ops, ArchParams, CountOptions, LayerSparsity, OpCounts};
use crate::energy::EnergyReport;
use crate::error::Result;
use crate::network::LayerDims;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnCountOptions {
    pub sparse_spad: bool,
    /// ReLU bit-mask buffer traffic; disable to get the pure T=1
    /// specialization of the spiking formulas.
    pub mask_traffic: bool,
}

impl Default for AnnCountOptions {
    fn default() -> Self {
        AnnCountOptions {
            sparse_spad: false,
            mask_traffic: true,
        }
    }
}

/// Op and access counts for one image of BP training on the ANN baseline.
pub fn ann_counts(
    dims: &[LayerDims],
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    opts: &AnnCountOptions,
) -> Result<OpCounts> {
    let arch_t1 = arch.with_timesteps(1);
    let mut counts = count_ops(
        dims,
        &arch_t1,
        sparsity,
        &CountOptions {
            sparse_spad: opts.sparse_spad,
            no_lif_terms: true,
            pack_override: Some(1),
        },
    )?;
    if opts.mask_traffic {
        for (layer, d) in counts.layers.iter_mut().zip(dims) {
            let mask_words = ((d.c * d.h * d.h) as f64 / arch.bitwidth as f64).ceil();
            layer.fwd.n_glb += mask_words;
            layer.bwd.n_glb += mask_words;
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: Option<f64>,
}

impl Ratio {
    fn of(numerator: f64, denominator: f64) -> Self {
        if denominator == 0.0 {
            Ratio { value: None }
        } else {
            Ratio {
                value: Some(numerator / denominator),
            }
        }
    }

    fn fmt(&self) -> String {
        match self.value {
            Some(v) => format!("{v:.6}"),
            None => "degenerate".to_string(),
        }
    }
}

/// Named energy ratios between two reports (first / second), matching the
/// comparison categories of the energy figures.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioReport {
    pub total: Ratio,
    pub compute: Ratio,
    pub memory: Ratio,
    pub fwd_compute: Ratio,
    pub bwd_compute: Ratio,
    pub wup_compute: Ratio,
    pub fwd_total: Ratio,
    pub bwd_total: Ratio,
    pub wup_total: Ratio,
    pub dram: Ratio,
    pub glb: Ratio,
    pub spad: Ratio,
    /// Set when the two reports were built from tables with different
    /// memory-access energies (units are not comparable).
    pub unit_mismatch: bool,
}

impl RatioReport {
    /// Fields whose denominator was zero.
    pub fn degenerate_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for (name, ratio) in self.named() {
            if ratio.value.is_none() {
                out.push(name);
            }
        }
        out
    }

    pub fn named(&self) -> [(&'static str, Ratio); 12] {
        [
            ("total", self.total),
            ("compute", self.compute),
            ("memory", self.memory),
            ("fwd_compute", self.fwd_compute),
            ("bwd_compute", self.bwd_compute),
            ("wup_compute", self.wup_compute),
            ("fwd_total", self.fwd_total),
            ("bwd_total", self.bwd_total),
            ("wup_total", self.wup_total),
            ("dram", self.dram),
            ("glb", self.glb),
            ("spad", self.spad),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("ratio,value\n");
        for (name, ratio) in self.named() {
            out.push_str(&format!("{name},{}\n", ratio.fmt()));
        }
        out.push_str(&format!("unit_mismatch,{}\n", self.unit_mismatch));
        out
    }
}

/// Ratios of the first report's energies to the second's. Degenerate
/// denominators flag as such instead of producing infinities.
pub fn compare_reports(first: &EnergyReport, second: &EnergyReport) -> RatioReport {
    RatioReport {
        total: Ratio::of(first.total, second.total),
        compute: Ratio::of(first.compute_total(), second.compute_total()),
        memory: Ratio::of(first.memory_total(), second.memory_total()),
        fwd_compute: Ratio::of(first.fwd.compute, second.fwd.compute),
        bwd_compute: Ratio::of(first.bwd.compute, second.bwd.compute),
        wup_compute: Ratio::of(first.wup.compute, second.wup.compute),
        fwd_total: Ratio::of(first.fwd.total(), second.fwd.total()),
        bwd_total: Ratio::of(first.bwd.total(), second.bwd.total()),
        wup_total: Ratio::of(first.wup.total(), second.wup.total()),
        dram: Ratio::of(first.dram_total(), second.dram_total()),
        glb: Ratio::of(first.glb_total(), second.glb_total()),
        spad: Ratio::of(first.spad_total(), second.spad_total()),
        unit_mismatch: false,
    }
}

/// Like [`compare_reports`] but flags the result when the two energy tables
/// price the shared memory hierarchy differently.
pub fn compare_reports_with_tables(
    first: &EnergyReport,
    first_table: &crate::energy::EnergyTable,
    second: &EnergyReport,
    second_table: &crate::energy::EnergyTable,
) -> RatioReport {
    let mut report = compare_reports(first, second);
    report.unit_mismatch = first_table.e_dram != second_table.e_dram
        || first_table.e_glb != second_table.e_glb
        || first_table.e_spad != second_table.e_spad;
    report
}
