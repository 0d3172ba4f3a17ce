//! Analytic parameter and multiply-accumulate counts.
//!
//! Parameters (full variant), with `R` raw token dim, `D` hidden, `r` MLP
//! ratio, `T` tokens + 1, `K` classes:
//!
//! ```text
//! embedding  2R + R·D + D + D (class token) + T·D (positions)
//! per layer  2D + 3(D² + D) + 1 + (D² + D) + 2D + (D·rD + rD) + (rD·D + D)
//! head       2D + D·K + K
//! ```
//!
//! The paper-comparable variant drops the class token, positional embeddings
//! and the three QKV bias vectors.
//!
//! MACs, with `N` patch tokens:
//!
//! ```text
//! embedding  N·R·D
//! per layer  3·T·D² + 2·T²·D + T·D² + 2r·T·D²
//! head       D·K
//! ```

use serde::Serialize;

use super::VtrConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamVariant {
    /// Every scalar of the weight set.
    Full,
    /// Excludes class token, positional embeddings, and QKV biases.
    PaperComparable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParamBreakdown {
    pub embedding: u64,
    pub class_and_position: u64,
    pub per_layer: u64,
    pub qkv_bias_per_layer: u64,
    pub depth: u64,
    pub head: u64,
}

impl ParamBreakdown {
    pub fn total(&self, variant: ParamVariant) -> u64 {
        let full = self.embedding
            + self.class_and_position
            + self.depth * self.per_layer
            + self.head;
        match variant {
            ParamVariant::Full => full,
            ParamVariant::PaperComparable => {
                full - self.class_and_position - self.depth * self.qkv_bias_per_layer
            }
        }
    }
}

pub fn param_breakdown(cfg: &VtrConfig) -> ParamBreakdown {
    let r = cfg.raw_dim() as u64;
    let d = cfg.hidden_dim as u64;
    let m = cfg.mlp_hidden() as u64;
    let t = cfg.seq_len() as u64;
    let k = cfg.num_classes as u64;
    ParamBreakdown {
        embedding: 2 * r + r * d + d,
        class_and_position: d + t * d,
        per_layer: 2 * d + 3 * (d * d + d) + 1 + (d * d + d) + 2 * d + (d * m + m) + (m * d + d),
        qkv_bias_per_layer: 3 * d,
        depth: cfg.depth as u64,
        head: 2 * d + d * k + k,
    }
}

pub fn count_params(cfg: &VtrConfig, variant: ParamVariant) -> u64 {
    param_breakdown(cfg).total(variant)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MacBreakdown {
    pub embedding: u64,
    pub qkv: u64,
    pub attention: u64,
    pub projection: u64,
    pub mlp: u64,
    pub depth: u64,
    pub head: u64,
}

impl MacBreakdown {
    pub fn per_layer(&self) -> u64 {
        self.qkv + self.attention + self.projection + self.mlp
    }

    pub fn total(&self) -> u64 {
        self.embedding + self.depth * self.per_layer() + self.head
    }
}

pub fn mac_breakdown(cfg: &VtrConfig) -> MacBreakdown {
    let n = cfg.num_tokens() as u64;
    let t = cfg.seq_len() as u64;
    let r = cfg.raw_dim() as u64;
    let d = cfg.hidden_dim as u64;
    let ratio = cfg.mlp_ratio as u64;
    MacBreakdown {
        embedding: n * r * d,
        qkv: 3 * t * d * d,
        attention: 2 * t * t * d,
        projection: t * d * d,
        mlp: 2 * ratio * t * d * d,
        depth: cfg.depth as u64,
        head: d * cfg.num_classes as u64,
    }
}

pub fn count_macs(cfg: &VtrConfig) -> u64 {
    mac_breakdown(cfg).total()
}

/// Human-readable statement of the MAC formula.
pub const MAC_FORMULA: &str = "N*R*D + L*(3*T*D^2 + 2*T^2*D + T*D^2 + 2*r*T*D^2) + D*K \
     (N patches, T=N+1, R raw token dim, D hidden, r MLP ratio, L depth, K classes)";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{random_init, Dataset};

    #[test]
    fn per_layer_hidden_44() {
        let c = Dataset::Mstar.config(8, 44, 4, 2);
        let b = param_breakdown(&c);
        // paper-comparable per-layer count
        assert_eq!(b.per_layer - b.qkv_bias_per_layer, 23_673);
    }

    #[test]
    fn mac_examples() {
        let c = Dataset::Mstar.config(8, 44, 4, 2);
        assert_eq!(count_macs(&c), 18_280_504);
        let mut z = c;
        z.depth = 0;
        assert_eq!(count_macs(&z), 121 * 320 * 44 + 44 * 10);
        let mut d8 = c;
        d8.depth = 8;
        let per = mac_breakdown(&c).per_layer();
        assert_eq!(count_macs(&d8) - count_macs(&c), 4 * per);
    }

    #[test]
    fn full_count_matches_materialized_weights() {
        for (_, c) in crate::model::table_grid().into_iter().step_by(7) {
            let w = random_init::<f32>(&c, 1);
            assert_eq!(w.element_count() as u64, count_params(&c, ParamVariant::Full));
        }
    }
}
