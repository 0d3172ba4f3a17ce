//! The model: configuration, weights, encoder kernels, forward pass, and
//! analytic counters.

mod config;
mod count;
mod forward;
pub mod layers;
mod weights;

pub use config::{best_mstar, table_grid, Dataset, VtrConfig, LN_EPS, MASK_SENTINEL};
pub use count::{
    count_macs, count_params, mac_breakdown, param_breakdown, MacBreakdown, ParamBreakdown,
    ParamVariant, MAC_FORMULA,
};
pub use forward::{
    embed, forward, forward_traced, logits_relative_error, stage, ActivationTrace, Logits,
};
pub use layers::{encoder_layer, layer_norm, lsa_attention, mlp_block};
pub use weights::{
    random_dense, random_init, tensor_specs, EncoderWeights, LayerNormParams, Linear, NamedTensor,
    WeightSet,
};
