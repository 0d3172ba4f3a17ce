//! Functional and timing model of the accelerator: a head-parallel DBMM
//! array (HPPU) and an element-wise unit (ECU).

mod config;
pub mod ecu;
pub mod hppu;
mod report;
mod sim;

pub use config::{block_mult_cycles, peak_throughput, AccelConfig, CostModel};
pub use ecu::{ecu_cycles, ecu_op};
pub use hppu::{
    balanced_groups, column_groups, hppu_batched, hppu_dbmm, map_fictitious_heads, HcuJob,
    HppuCost, Schedule, TileAssignment,
};
pub use report::{SimReport, StageKind, StageRecord, Unit};
pub use sim::{
    latency_lower_bound, sim_layer_norm, simulate_forward, LayerNormCost, Simulator,
    SIM_ASSUMPTIONS,
};
