use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spt::ShiftSpec;

/// Layer-norm epsilon used everywhere in the model.
pub const LN_EPS: f64 = 1e-6;

/// Finite stand-in for −∞ on the masked attention diagonal.
pub const MASK_SENTINEL: f64 = -1e9;

/// Hyper-parameters of one model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VtrConfig {
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub patch: usize,
    pub num_shifts: usize,
    pub shift_magnitude: usize,
    pub hidden_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
}

impl VtrConfig {
    /// Square single-channel image with the default four diagonal shifts of
    /// 2 pixels and an MLP ratio of 4.
    pub fn square(
        image: usize,
        patch: usize,
        hidden_dim: usize,
        depth: usize,
        heads: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            image_height: image,
            image_width: image,
            channels: 1,
            patch,
            num_shifts: 4,
            shift_magnitude: 2,
            hidden_dim,
            depth,
            heads,
            mlp_ratio: 4,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.image_height == 0 || self.image_width == 0 || self.channels == 0 {
            return bad("image dimensions must be positive".into());
        }
        if self.patch == 0
            || self.image_height % self.patch != 0
            || self.image_width % self.patch != 0
        {
            return bad(format!(
                "patch {} must divide {}x{}",
                self.patch, self.image_height, self.image_width
            ));
        }
        if self.num_shifts > 4 {
            return bad(format!("at most 4 diagonal shifts, got {}", self.num_shifts));
        }
        if self.num_shifts > 0 && self.shift_magnitude >= self.image_height.min(self.image_width) {
            return bad(format!("shift magnitude {} too large", self.shift_magnitude));
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return bad(format!(
                "heads {} must divide hidden dim {}",
                self.heads, self.hidden_dim
            ));
        }
        if self.mlp_ratio == 0 || self.num_classes == 0 {
            return bad("mlp_ratio and num_classes must be positive".into());
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but also requires at least one
    /// encoder layer.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        if self.depth == 0 {
            return Err(Error::InvalidConfig("depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn num_tokens(&self) -> usize {
        (self.image_height / self.patch) * (self.image_width / self.patch)
    }

    /// Tokens including the class token.
    pub fn seq_len(&self) -> usize {
        self.num_tokens() + 1
    }

    pub fn stacked_channels(&self) -> usize {
        self.channels * (self.num_shifts + 1)
    }

    pub fn raw_dim(&self) -> usize {
        self.patch * self.patch * self.stacked_channels()
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        self.mlp_ratio * self.hidden_dim
    }

    pub fn shift_spec(&self) -> ShiftSpec {
        ShiftSpec::diagonal_prefix(self.shift_magnitude as u32, self.num_shifts)
    }
}

/// Datasets whose model grids are tabulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Mstar,
    SynthWake,
    Gbsar,
}

impl Dataset {
    pub const ALL: [Dataset; 3] = [Dataset::Mstar, Dataset::SynthWake, Dataset::Gbsar];

    pub fn image_size(self) -> usize {
        match self {
            Dataset::Mstar | Dataset::Gbsar => 88,
            Dataset::SynthWake => 128,
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Dataset::Mstar | Dataset::SynthWake => 10,
            Dataset::Gbsar => 7,
        }
    }

    /// Patch sizes paired with the hidden dimensions explored for them.
    pub fn patch_sizes(self) -> [usize; 2] {
        match self {
            Dataset::Mstar | Dataset::Gbsar => [8, 11],
            Dataset::SynthWake => [8, 16],
        }
    }

    pub fn hidden_dims(self) -> [usize; 2] {
        match self {
            Dataset::Mstar | Dataset::Gbsar => [44, 88],
            Dataset::SynthWake => [48, 96],
        }
    }

    pub fn config(self, patch: usize, hidden_dim: usize, depth: usize, heads: usize) -> VtrConfig {
        VtrConfig::square(
            self.image_size(),
            patch,
            hidden_dim,
            depth,
            heads,
            self.num_classes(),
        )
    }

    /// The 32 configurations (patch × hidden × depth × heads) for this dataset.
    pub fn grid(self) -> Vec<VtrConfig> {
        let mut out = Vec::with_capacity(32);
        for patch in self.patch_sizes() {
            for dim in self.hidden_dims() {
                for depth in [4, 6, 8, 12] {
                    for heads in [2, 4] {
                        out.push(self.config(patch, dim, depth, heads));
                    }
                }
            }
        }
        out
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "mstar" => Some(Dataset::Mstar),
            "synthwake" | "synthwakesar" => Some(Dataset::SynthWake),
            "gbsar" => Some(Dataset::Gbsar),
            _ => None,
        }
    }
}

/// Every tabulated configuration across the three datasets (96 in total).
pub fn table_grid() -> Vec<(Dataset, VtrConfig)> {
    Dataset::ALL
        .iter()
        .flat_map(|&d| d.grid().into_iter().map(move |c| (d, c)))
        .collect()
}

/// Best-scoring MSTAR model: patch 8, hidden 88, depth 12, 4 heads.
pub fn best_mstar() -> VtrConfig {
    Dataset::Mstar.config(8, 88, 12, 4)
}
