use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-tile timing model of one processing element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    /// A PE retires `p_pe²` MACs every cycle: `b³ / p_pe²` cycles per tile pass.
    #[default]
    Ideal,
    /// [`CostModel::Ideal`] plus `2·p_pe` cycles of pipeline fill and drain
    /// per tile pass.
    FillDrain,
}

impl CostModel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ideal" => Some(CostModel::Ideal),
            "fill-drain" | "filldrain" => Some(CostModel::FillDrain),
            _ => None,
        }
    }
}

/// Accelerator geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccelConfig {
    /// Head compute units (`p_h`).
    pub hcus: usize,
    /// PE rows per HCU, token axis (`p_t`).
    pub pe_rows: usize,
    /// PE columns per HCU, embedding axis (`p_c`).
    pub pe_cols: usize,
    /// Systolic array side inside each PE (`p_pe`).
    pub pe_size: usize,
    /// Tile side `b`.
    pub block: usize,
    pub clock_hz: f64,
    pub cost_model: CostModel,
}

impl Default for AccelConfig {
    /// 4 HCUs of 12×2 PEs, 8×8 systolic arrays, 16-wide tiles, 300 MHz.
    fn default() -> Self {
        Self {
            hcus: 4,
            pe_rows: 12,
            pe_cols: 2,
            pe_size: 8,
            block: 16,
            clock_hz: 300e6,
            cost_model: CostModel::Ideal,
        }
    }
}

impl AccelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidAccelConfig(m));
        if self.hcus == 0 || self.pe_rows == 0 || self.pe_cols == 0 || self.pe_size == 0 {
            return bad("HCU and PE counts must be at least 1".into());
        }
        if self.block == 0 || self.block % self.pe_size != 0 {
            return bad(format!(
                "block size {} must be a positive multiple of the PE array side {}",
                self.block, self.pe_size
            ));
        }
        if !(self.clock_hz.is_finite() && self.clock_hz > 0.0) {
            return bad(format!("clock must be positive, got {}", self.clock_hz));
        }
        Ok(())
    }

    /// PEs per HCU.
    pub fn pes_per_hcu(&self) -> usize {
        self.pe_rows * self.pe_cols
    }

    /// Element lanes across the whole array; the ECU retires this many
    /// element operations per cycle.
    pub fn lanes(&self) -> u64 {
        (self.hcus * self.pe_rows * self.pe_cols * self.pe_size * self.pe_size) as u64
    }

    pub fn peak_macs_per_cycle(&self) -> u64 {
        self.lanes()
    }

    /// Cycles one PE spends on one `b × b × b` tile product.
    pub fn block_mult_cycles(&self) -> u64 {
        block_mult_cycles(self.block, self.pe_size, self.cost_model)
    }
}

pub fn block_mult_cycles(block: usize, pe_size: usize, model: CostModel) -> u64 {
    let (b, p) = (block as u64, pe_size as u64);
    let ideal = (b * b * b).div_ceil(p * p);
    match model {
        CostModel::Ideal => ideal,
        CostModel::FillDrain => ideal + 2 * p,
    }
}

/// Peak MAC rate in MACs per second: `p_h·p_t·p_c·p_pe² × clock`.
pub fn peak_throughput(cfg: &AccelConfig) -> f64 {
    cfg.peak_macs_per_cycle() as f64 * cfg.clock_hz
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_peak() {
        let c = AccelConfig::default();
        assert_eq!(c.peak_macs_per_cycle(), 6144);
        assert!((peak_throughput(&c) - 1.8432e12).abs() < 1.0);
    }

    #[test]
    fn unit_peak_and_linearity() {
        let c = AccelConfig {
            hcus: 1,
            pe_rows: 1,
            pe_cols: 1,
            pe_size: 1,
            block: 1,
            clock_hz: 1.0,
            cost_model: CostModel::Ideal,
        };
        assert_eq!(peak_throughput(&c), 1.0);
        let d = AccelConfig::default();
        let d2 = AccelConfig { hcus: 8, ..d };
        assert_eq!(peak_throughput(&d2), 2.0 * peak_throughput(&d));
    }

    #[test]
    fn validation() {
        assert!(AccelConfig::default().validate().is_ok());
        assert!(AccelConfig { pe_size: 7, ..Default::default() }.validate().is_err());
        assert!(AccelConfig { hcus: 0, ..Default::default() }.validate().is_err());
        assert!(AccelConfig { clock_hz: 0.0, ..Default::default() }.validate().is_err());
        assert!(AccelConfig { block: 32, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn tile_cycles() {
        assert_eq!(block_mult_cycles(16, 8, CostModel::Ideal), 64);
        assert_eq!(block_mult_cycles(16, 8, CostModel::FillDrain), 80);
        assert_eq!(block_mult_cycles(32, 8, CostModel::Ideal), 512);
    }
}
