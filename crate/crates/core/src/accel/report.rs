use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use super::AccelConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Unit {
    #[serde(rename = "HPPU")]
    Hppu,
    #[serde(rename = "ECU")]
    Ecu,
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Unit::Hppu => "HPPU",
            Unit::Ecu => "ECU",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageKind {
    /// Model matrix product; its MACs count toward the model total.
    Matmul,
    /// Multiply-by-ones reduction (row sums for layer norm and softmax).
    Aggregation,
    /// Element-wise arithmetic or activation.
    Elementwise,
    /// Reduction or vector pass costed at ECU rate (row max, reciprocal).
    Reduction,
    /// Operand re-layout costed as an ECU copy.
    Relayout,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub unit: Unit,
    pub kind: StageKind,
    pub cycles: u64,
    /// Logical MACs (HPPU stages) or logical elements (ECU stages).
    pub ops: u64,
    pub waves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub accel: AccelConfig,
    pub stages: Vec<StageRecord>,
    /// Analytic model MACs for the simulated configuration.
    pub model_macs: u64,
    pub assumptions: Vec<String>,
}

impl SimReport {
    pub fn total_cycles(&self) -> u64 {
        self.stages.iter().map(|s| s.cycles).sum()
    }

    pub fn cycles_on(&self, unit: Unit) -> u64 {
        self.stages
            .iter()
            .filter(|s| s.unit == unit)
            .map(|s| s.cycles)
            .sum()
    }

    /// MACs of the model matrix products executed on the HPPU.
    pub fn hppu_model_macs(&self) -> u64 {
        self.stages
            .iter()
            .filter(|s| s.unit == Unit::Hppu && s.kind == StageKind::Matmul)
            .map(|s| s.ops)
            .sum()
    }

    pub fn latency_seconds(&self) -> f64 {
        self.total_cycles() as f64 / self.accel.clock_hz
    }

    /// Model MACs over the MACs the array could have retired in the
    /// modeled time.
    pub fn utilization(&self) -> f64 {
        let capacity = self.accel.peak_macs_per_cycle() as f64 * self.total_cycles() as f64;
        if capacity == 0.0 {
            0.0
        } else {
            self.model_macs as f64 / capacity
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut cumulative = 0u64;
        let stages: Vec<_> = self
            .stages
            .iter()
            .map(|s| {
                cumulative += s.cycles;
                json!({
                    "stage": s.stage,
                    "unit": s.unit,
                    "kind": s.kind,
                    "cycles": s.cycles,
                    "ops": s.ops,
                    "waves": s.waves,
                    "cumulative_latency_s": cumulative as f64 / self.accel.clock_hz,
                })
            })
            .collect();
        json!({
            "accel": self.accel,
            "clock_hz": self.accel.clock_hz,
            "peak_macs_per_cycle": self.accel.peak_macs_per_cycle(),
            "model_macs": self.model_macs,
            "hppu_model_macs": self.hppu_model_macs(),
            "total_cycles": self.total_cycles(),
            "hppu_cycles": self.cycles_on(Unit::Hppu),
            "ecu_cycles": self.cycles_on(Unit::Ecu),
            "latency_s": self.latency_seconds(),
            "utilization": self.utilization(),
            "assumptions": self.assumptions,
            "stages": stages,
        })
    }

    /// One line per stage followed by totals.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let width = self.stages.iter().map(|r| r.stage.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(
            s,
            "{:<width$}  {:<4}  {:<11}  {:>12}  {:>14}  {:>14}",
            "stage", "unit", "kind", "cycles", "ops", "cum_latency_us"
        );
        let mut cumulative = 0u64;
        for r in &self.stages {
            cumulative += r.cycles;
            let kind = serde_json::to_value(r.kind)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "{:<width$}  {:<4}  {:<11}  {:>12}  {:>14}  {:>14.3}",
                r.stage,
                r.unit,
                kind,
                r.cycles,
                r.ops,
                cumulative as f64 / self.accel.clock_hz * 1e6
            );
        }
        let _ = writeln!(s, "total cycles      {}", self.total_cycles());
        let _ = writeln!(s, "  HPPU cycles     {}", self.cycles_on(Unit::Hppu));
        let _ = writeln!(s, "  ECU cycles      {}", self.cycles_on(Unit::Ecu));
        let _ = writeln!(s, "model MACs        {}", self.model_macs);
        let _ = writeln!(
            s,
            "modeled latency   {:.6} ms @ {:.1} MHz",
            self.latency_seconds() * 1e3,
            self.accel.clock_hz / 1e6
        );
        let _ = writeln!(s, "utilization       {:.4}", self.utilization());
        for a in &self.assumptions {
            let _ = writeln!(s, "note: {a}");
        }
        s
    }
}
