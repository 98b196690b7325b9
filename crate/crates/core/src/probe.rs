//! Sparsity measurement: tallies zero elements per layer for the three SNN
//! sparsity families (spikes S, firing-function gradient window, potential
//! gradients) plus ANN activation/gradient sparsity, averaged per image per
//! timestep, and the JSON profile format that persists them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lif::{outside_surrogate_window, LifParams};

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    /// Binary spikes; zeros are non-firing elements.
    Spikes,
    /// Pass the potential tensor; elements outside the surrogate window
    /// (zero firing-function derivative) count as sparse.
    GradFMask,
    /// Potential gradients; exact zeros count as sparse (an epsilon can be
    /// configured).
    GradU,
    /// ANN post-ReLU activations.
    Act,
    /// ANN masked activation gradients.
    GradAct,
}

impl TensorKind {
    fn slot(self) -> usize {
        match self {
            TensorKind::Spikes => 0,
            TensorKind::GradFMask => 1,
            TensorKind::GradU => 2,
            TensorKind::Act => 3,
            TensorKind::GradAct => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub zeros: u64,
    pub total: u64,
}

impl Tally {
    pub fn rate(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.zeros as f64 / self.total as f64)
        }
    }
}

/// Accumulates zero/total tallies across images and timesteps. Shards from
/// parallel workers merge with commutative integer addition.
#[derive(Debug, Clone)]
pub struct SparsityProbe {
    layer_names: Vec<String>,
    lif: LifParams,
    grad_u_epsilon: f64,
    tallies: Vec<[Tally; 5]>,
}

impl SparsityProbe {
    pub fn new(layer_names: Vec<String>, lif: LifParams) -> Self {
        let tallies = vec![[Tally::default(); 5]; layer_names.len()];
        SparsityProbe {
            layer_names,
            lif,
            grad_u_epsilon: 0.0,
            tallies,
        }
    }

    /// Threshold below which a potential gradient counts as zero. Defaults
    /// to exact zero, which is how the zeros arise structurally.
    pub fn with_grad_u_epsilon(mut self, eps: f64) -> Self {
        self.grad_u_epsilon = eps;
        self
    }

    pub fn layer_names(&self) -> &[String] {
        &self.layer_names
    }

    /// A blank probe with the same configuration, for parallel shards.
    pub fn shard(&self) -> Self {
        SparsityProbe {
            layer_names: self.layer_names.clone(),
            lif: self.lif,
            grad_u_epsilon: self.grad_u_epsilon,
            tallies: vec![[Tally::default(); 5]; self.layer_names.len()],
        }
    }

    pub fn record_step(&mut self, layer: usize, kind: TensorKind, data: &[f64]) -> Result<()> {
        if layer >= self.layer_names.len() {
            return Err(Error::Validation(format!(
                "probe: unknown layer id {layer} (have {})",
                self.layer_names.len()
            )));
        }
        let zeros = match kind {
            TensorKind::Spikes | TensorKind::Act | TensorKind::GradAct => {
                data.iter().filter(|v| **v == 0.0).count()
            }
            TensorKind::GradFMask => data
                .iter()
                .filter(|u| outside_surrogate_window(**u, &self.lif))
                .count(),
            TensorKind::GradU => {
                let eps = self.grad_u_epsilon;
                data.iter().filter(|v| v.abs() <= eps).count()
            }
        };
        let t = &mut self.tallies[layer][kind.slot()];
        t.zeros += zeros as u64;
        t.total += data.len() as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &SparsityProbe) {
        debug_assert_eq!(self.layer_names.len(), other.layer_names.len());
        for (mine, theirs) in self.tallies.iter_mut().zip(&other.tallies) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                a.zeros += b.zeros;
                a.total += b.total;
            }
        }
    }

    pub fn tally(&self, layer: usize, kind: TensorKind) -> Tally {
        self.tallies[layer][kind.slot()]
    }

    /// Folds the tallies into a profile. Errors if any layer has no data at
    /// all.
    pub fn finalize_profile(&self, meta: ProfileMeta) -> Result<SparsityProfile> {
        let mut layers = Vec::with_capacity(self.layer_names.len());
        for (idx, name) in self.layer_names.iter().enumerate() {
            let t = &self.tallies[idx];
            if t.iter().all(|t| t.total == 0) {
                return Err(Error::Validation(format!(
                    "incomplete profile: no data recorded for layer `{name}`"
                )));
            }
            layers.push(ProfileLayer {
                name: name.clone(),
                sp_s: t[TensorKind::Spikes.slot()].rate(),
                sp_gf: t[TensorKind::GradFMask.slot()].rate(),
                sp_gu: t[TensorKind::GradU.slot()].rate(),
                sp_z: t[TensorKind::Act.slot()].rate(),
                sp_gz: t[TensorKind::GradAct.slot()].rate(),
            });
        }
        let profile = SparsityProfile {
            schema_version: PROFILE_SCHEMA_VERSION,
            network: meta.network,
            dataset: meta.dataset,
            timesteps: meta.timesteps,
            epoch: meta.epoch,
            averaging_scope: "per-image-per-timestep".to_string(),
            kind: meta.kind,
            layers,
        };
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone)]
pub struct ProfileMeta {
    pub network: String,
    pub dataset: String,
    pub timesteps: u32,
    pub epoch: u32,
    /// `"snn"` or `"ann"`.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileLayer {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp_gf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp_gu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp_gz: Option<f64>,
}

/// Per-layer sparsity rates with recording metadata. The layer list holds an
/// `inp` row for the encoded input followed by one row per conv/FC layer, in
/// network order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub schema_version: u32,
    pub network: String,
    pub dataset: String,
    pub timesteps: u32,
    pub epoch: u32,
    pub averaging_scope: String,
    pub kind: String,
    pub layers: Vec<ProfileLayer>,
}

impl SparsityProfile {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PROFILE_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "profile schema_version {} unsupported (expected {PROFILE_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::Validation("profile has no layers".into()));
        }
        for layer in &self.layers {
            for (field, value) in [
                ("sp_s", layer.sp_s),
                ("sp_gf", layer.sp_gf),
                ("sp_gu", layer.sp_gu),
                ("sp_z", layer.sp_z),
                ("sp_gz", layer.sp_gz),
            ] {
                if let Some(v) = value {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Validation(format!(
                            "layer `{}`: {field} = {v} outside [0, 1]",
                            layer.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Schema(format!("profile serialization failed: {e}")))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let profile: SparsityProfile = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        profile.validate()?;
        Ok(profile)
    }

    /// All-dense profile (every rate zero) over the given layer names, with
    /// an `inp` row prepended.
    pub fn dense(kind: &str, layer_names: &[String], timesteps: u32) -> Self {
        let is_snn = kind == "snn";
        let mut layers = vec![ProfileLayer {
            name: "inp".to_string(),
            sp_s: if is_snn { Some(0.0) } else { None },
            sp_gf: None,
            sp_gu: None,
            sp_z: if is_snn { None } else { Some(0.0) },
            sp_gz: None,
        }];
        for name in layer_names {
            layers.push(ProfileLayer {
                name: name.clone(),
                sp_s: if is_snn { Some(0.0) } else { None },
                sp_gf: if is_snn { Some(0.0) } else { None },
                sp_gu: if is_snn { Some(0.0) } else { None },
                sp_z: if is_snn { None } else { Some(0.0) },
                sp_gz: if is_snn { None } else { Some(0.0) },
            });
        }
        SparsityProfile {
            schema_version: PROFILE_SCHEMA_VERSION,
            network: "dense".to_string(),
            dataset: "none".to_string(),
            timesteps,
            epoch: 0,
            averaging_scope: "per-image-per-timestep".to_string(),
            kind: kind.to_string(),
            layers,
        }
    }
}
