//! Scheduling of the full model onto the HPPU and ECU.
//!
//! Every primitive computes its result functionally and appends a
//! [`StageRecord`]. Stages run strictly one after another.
//!
//! Mapping:
//! - linear layers: DBMM with the weight's block columns split into
//!   fictitious heads, then an ECU bias add (fused with GELU for `fc1`);
//! - layer norm: HPPU row sums (multiply by ones) for mean and variance,
//!   ECU for centering, squaring, scaling and the affine step;
//! - attention: per-head `Q_h K_hᵀ` and `S_h V_h` as one HCU job per head,
//!   right operands re-laid-out on the fly; softmax as ECU scale + mask,
//!   ECU row max, ECU `exp(x − max)`, HPPU row sum, ECU reciprocal scale.

use super::ecu::{ecu_cycles, ecu_op};
use super::hppu::{hppu_batched, hppu_dbmm, map_fictitious_heads};
use super::report::{SimReport, StageKind, StageRecord, Unit};
use super::{peak_throughput, AccelConfig};
use crate::error::{Error, Result};
use crate::model::{
    count_macs, EncoderWeights, LayerNormParams, Linear, Logits, VtrConfig, WeightSet, LN_EPS,
    MASK_SENTINEL,
};
use crate::scalar::Scalar;
use crate::spt::{spt_transform, tokenize, Image};
use crate::tensor::{from_blocked, to_blocked, Activation, Matrix, Orientation};

/// Assumptions recorded in every report.
pub const SIM_ASSUMPTIONS: [&str; 5] = [
    "HPPU and ECU stages execute sequentially; buffer traffic is not timed",
    "softmax: ECU scale+mask, ECU row max, ECU exp(x - max), HPPU row sum, ECU reciprocal scale",
    "row max, reciprocal and 1/sqrt are ECU-rate vector passes",
    "right operands of activation-activation products are re-laid-out at ECU copy rate",
    "diagonal mask applied as an ECU add of a per-head sentinel matrix",
];

/// Cycle costs of the three parts of a simulated layer norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LayerNormCost {
    /// HPPU row sum + ECU scale + ECU centering.
    pub mean: u64,
    /// ECU square + HPPU row sum + ECU variance/rstd pass.
    pub variance: u64,
    /// ECU normalize + ECU affine.
    pub affine: u64,
}

impl LayerNormCost {
    pub fn total(&self) -> u64 {
        self.mean + self.variance + self.affine
    }
}

/// Stateful scheduler accumulating stage records.
pub struct Simulator<'a> {
    cfg: &'a AccelConfig,
    stages: Vec<StageRecord>,
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a AccelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            stages: Vec::new(),
        })
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    pub fn into_stages(self) -> Vec<StageRecord> {
        self.stages
    }

    fn push(&mut self, stage: String, unit: Unit, kind: StageKind, cycles: u64, ops: u64, waves: usize) -> u64 {
        self.stages.push(StageRecord {
            stage,
            unit,
            kind,
            cycles,
            ops,
            waves,
        });
        cycles
    }

    /// `a · w` on the HPPU with fictitious heads over `w`'s block columns.
    pub fn matmul<T: Scalar>(
        &mut self,
        name: String,
        a: &Matrix<T>,
        w: &Matrix<T>,
        kind: StageKind,
    ) -> Result<(Matrix<T>, u64)> {
        let b = self.cfg.block;
        let ab = to_blocked(a, b, Orientation::BlockRowMajor);
        let wb = to_blocked(w, b, Orientation::BlockColMajor);
        let groups = map_fictitious_heads(&wb, self.cfg.hcus);
        let (out, cost) = hppu_dbmm(&ab, &wb, &groups, self.cfg)?;
        let c = self.push(name, Unit::Hppu, kind, cost.cycles, cost.macs, cost.waves);
        Ok((from_blocked(&out), c))
    }

    /// Row sums via multiplication by a ones vector.
    pub fn row_sums<T: Scalar>(&mut self, name: String, x: &Matrix<T>) -> Result<(Matrix<T>, u64)> {
        let ones = Matrix::filled(x.cols(), 1, T::one());
        self.matmul(name, x, &ones, StageKind::Aggregation)
    }

    pub fn ecu<T: Scalar>(
        &mut self,
        name: String,
        f: Activation,
        a: &Matrix<T>,
        mul: Option<&Matrix<T>>,
        add: Option<&Matrix<T>>,
    ) -> Result<(Matrix<T>, u64)> {
        let (out, cycles) = ecu_op(f, a, mul, add, self.cfg)?;
        let c = self.push(name, Unit::Ecu, StageKind::Elementwise, cycles, a.data().len() as u64, 1);
        Ok((out, c))
    }

    /// Cost-only ECU-rate pass over a `rows × cols` operand.
    pub fn ecu_pass(&mut self, name: String, kind: StageKind, rows: usize, cols: usize) -> Result<u64> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyOperand("ecu pass"));
        }
        let cycles = ecu_cycles(rows, cols, self.cfg);
        Ok(self.push(name, Unit::Ecu, kind, cycles, (rows * cols) as u64, 1))
    }

    pub fn layer_norm<T: Scalar>(
        &mut self,
        name: &str,
        x: &Matrix<T>,
        p: &LayerNormParams<T>,
        eps: T,
    ) -> Result<(Matrix<T>, LayerNormCost)> {
        let (rows, cols) = x.shape();
        if p.gamma.len() != cols || p.beta.len() != cols {
            return Err(Error::dims("sim_layer_norm", "parameter length differs from width"));
        }
        let mut cost = LayerNormCost::default();
        let neg_inv_n = Matrix::filled(rows, 1, -(T::one() / T::of(cols as f64)));

        let (sums, c) = self.row_sums(format!("{name}.mean_sum"), x)?;
        cost.mean += c;
        let (neg_mean, c) = self.ecu(format!("{name}.mean_scale"), Activation::Identity, &sums, Some(&neg_inv_n), None)?;
        cost.mean += c;
        let neg_mean_b = Matrix::broadcast_col(neg_mean.data(), cols);
        let (xc, c) = self.ecu(format!("{name}.center"), Activation::Identity, x, None, Some(&neg_mean_b))?;
        cost.mean += c;

        let (sq, c) = self.ecu(format!("{name}.square"), Activation::Identity, &xc, Some(&xc), None)?;
        cost.variance += c;
        let (sq_sums, c) = self.row_sums(format!("{name}.var_sum"), &sq)?;
        cost.variance += c;
        let inv_n = T::one() / T::of(cols as f64);
        let rstd: Vec<T> = sq_sums
            .data()
            .iter()
            .map(|&s| T::one() / (s * inv_n + eps).sqrt())
            .collect();
        cost.variance += self.ecu_pass(format!("{name}.rstd"), StageKind::Reduction, rows, 1)?;

        let rstd_b = Matrix::broadcast_col(&rstd, cols);
        let (normed, c) = self.ecu(format!("{name}.normalize"), Activation::Identity, &xc, Some(&rstd_b), None)?;
        cost.affine += c;
        let gamma = Matrix::broadcast_row(&p.gamma, rows);
        let beta = Matrix::broadcast_row(&p.beta, rows);
        let (y, c) = self.ecu(format!("{name}.affine"), Activation::Identity, &normed, Some(&gamma), Some(&beta))?;
        cost.affine += c;
        Ok((y, cost))
    }

    /// DBMM followed by an ECU bias add (optionally fused with `f`).
    pub fn linear<T: Scalar>(
        &mut self,
        name: &str,
        x: &Matrix<T>,
        lin: &Linear<T>,
        f: Activation,
    ) -> Result<Matrix<T>> {
        if lin.bias.len() != lin.out_dim() {
            return Err(Error::dims("sim linear", "bias length differs from output width"));
        }
        let (y, _) = self.matmul(format!("{name}.dbmm"), x, &lin.weight, StageKind::Matmul)?;
        let bias = Matrix::broadcast_row(&lin.bias, x.rows());
        let (y, _) = self.ecu(format!("{name}.bias"), f, &y, None, Some(&bias))?;
        Ok(y)
    }

    fn attention<T: Scalar>(
        &mut self,
        name: &str,
        z: &Matrix<T>,
        layer: &EncoderWeights<T>,
        mcfg: &VtrConfig,
        layer_index: usize,
    ) -> Result<Matrix<T>> {
        if !(layer.temperature > T::zero()) {
            return Err(Error::NonPositiveTemperature {
                layer: layer_index,
                value: layer.temperature.as_f64(),
            });
        }
        let b = self.cfg.block;
        let t = z.rows();
        let (heads, dk) = (mcfg.heads, mcfg.head_dim());
        let q = self.linear(&format!("{name}.q"), z, &layer.wq, Activation::Identity)?;
        let k = self.linear(&format!("{name}.k"), z, &layer.wk, Activation::Identity)?;
        let v = self.linear(&format!("{name}.v"), z, &layer.wv, Activation::Identity)?;

        // Q_h K_hᵀ, one HCU per head
        let q_heads: Vec<_> = (0..heads)
            .map(|h| to_blocked(&q.col_slice(h * dk, (h + 1) * dk), b, Orientation::BlockRowMajor))
            .collect();
        let kt_heads: Vec<_> = (0..heads)
            .map(|h| to_blocked(&k.col_slice(h * dk, (h + 1) * dk).transpose(), b, Orientation::BlockColMajor))
            .collect();
        self.ecu_pass(format!("{name}.kt_relayout"), StageKind::Relayout, heads * dk, t)?;
        let pairs: Vec<_> = q_heads.iter().zip(&kt_heads).collect();
        let (scores, cost) = hppu_batched(&pairs, self.cfg)?;
        self.push(format!("{name}.qk"), Unit::Hppu, StageKind::Matmul, cost.cycles, cost.macs, cost.waves);
        let raw = Matrix::vcat(&scores.iter().map(from_blocked).collect::<Vec<_>>())?;

        // softmax
        let rows = raw.rows();
        let inv_lambda = Matrix::filled(rows, t, T::one() / layer.temperature);
        let sentinel = T::of(MASK_SENTINEL);
        let mask = Matrix::from_fn(rows, t, |r, c| if r % t == c { sentinel } else { T::zero() });
        let (scaled, _) = self.ecu(format!("{name}.scale_mask"), Activation::Identity, &raw, Some(&inv_lambda), Some(&mask))?;
        let neg_max: Vec<T> = (0..rows)
            .map(|r| -scaled.row(r).iter().fold(T::neg_infinity(), |a, &x| a.max(x)))
            .collect();
        self.ecu_pass(format!("{name}.row_max"), StageKind::Reduction, rows, t)?;
        let neg_max_b = Matrix::broadcast_col(&neg_max, t);
        let (e, _) = self.ecu(format!("{name}.exp"), Activation::Exp, &scaled, None, Some(&neg_max_b))?;
        let (sums, _) = self.row_sums(format!("{name}.exp_sum"), &e)?;
        let recip: Vec<T> = sums.data().iter().map(|&s| T::one() / s).collect();
        self.ecu_pass(format!("{name}.reciprocal"), StageKind::Reduction, rows, 1)?;
        let recip_b = Matrix::broadcast_col(&recip, t);
        let (s, _) = self.ecu(format!("{name}.normalize"), Activation::Identity, &e, Some(&recip_b), None)?;

        // S_h V_h, one HCU per head
        let s_heads: Vec<_> = (0..heads)
            .map(|h| to_blocked(&s.row_slice(h * t, (h + 1) * t), b, Orientation::BlockRowMajor))
            .collect();
        let v_heads: Vec<_> = (0..heads)
            .map(|h| to_blocked(&v.col_slice(h * dk, (h + 1) * dk), b, Orientation::BlockColMajor))
            .collect();
        self.ecu_pass(format!("{name}.v_relayout"), StageKind::Relayout, t, heads * dk)?;
        let pairs: Vec<_> = s_heads.iter().zip(&v_heads).collect();
        let (outs, cost) = hppu_batched(&pairs, self.cfg)?;
        self.push(format!("{name}.sv"), Unit::Hppu, StageKind::Matmul, cost.cycles, cost.macs, cost.waves);
        let o = Matrix::hcat(&outs.iter().map(from_blocked).collect::<Vec<_>>())?;

        self.linear(&format!("{name}.proj"), &o, &layer.proj, Activation::Identity)
    }

    fn encoder_layer<T: Scalar>(
        &mut self,
        i: usize,
        z: &Matrix<T>,
        layer: &EncoderWeights<T>,
        mcfg: &VtrConfig,
    ) -> Result<Matrix<T>> {
        let eps = T::of(LN_EPS);
        let p = format!("layer{i}");
        let (ln1, _) = self.layer_norm(&format!("{p}.ln1"), z, &layer.ln1, eps)?;
        let msa = self.attention(&format!("{p}.attn"), &ln1, layer, mcfg, i)?;
        let (res1, _) = self.ecu(format!("{p}.res1"), Activation::Identity, z, None, Some(&msa))?;
        let (ln2, _) = self.layer_norm(&format!("{p}.ln2"), &res1, &layer.ln2, eps)?;
        let h = self.linear(&format!("{p}.fc1"), &ln2, &layer.fc1, Activation::Gelu)?;
        let mlp = self.linear(&format!("{p}.fc2"), &h, &layer.fc2, Activation::Identity)?;
        let (out, _) = self.ecu(format!("{p}.res2"), Activation::Identity, &res1, None, Some(&mlp))?;
        Ok(out)
    }
}

/// Layer norm decomposed onto the HPPU and ECU.
pub fn sim_layer_norm<T: Scalar>(
    x: &Matrix<T>,
    p: &LayerNormParams<T>,
    eps: T,
    cfg: &AccelConfig,
) -> Result<(Matrix<T>, LayerNormCost)> {
    Simulator::new(cfg)?.layer_norm("ln", x, p, eps)
}

/// Run the whole model through the simulator.
///
/// Shifting and tokenization run on the host and are not timed.
pub fn simulate_forward<T: Scalar>(
    img: &Image<T>,
    w: &WeightSet<T>,
    mcfg: &VtrConfig,
    acfg: &AccelConfig,
) -> Result<(Logits<T>, SimReport)> {
    mcfg.validate()?;
    if img.height() != mcfg.image_height
        || img.width() != mcfg.image_width
        || img.channels() != mcfg.channels
    {
        return Err(Error::dims("simulate_forward", "image does not match model config"));
    }
    w.check_shapes(mcfg)?;
    let mut sim = Simulator::new(acfg)?;
    let eps = T::of(LN_EPS);

    let stack = spt_transform(img, &mcfg.shift_spec())?;
    let tokens = tokenize(&stack, mcfg.patch)?;
    let (ln, _) = sim.layer_norm("embed.ln", &tokens.matrix, &w.embed_ln, eps)?;
    let lin = sim.linear("embed.linear", &ln, &w.embed_linear, Activation::Identity)?;
    let with_cls = Matrix::vcat(&[Matrix::row_vector(&w.cls_token), lin])?;
    sim.ecu_pass("embed.cls_concat".into(), StageKind::Relayout, with_cls.rows(), with_cls.cols())?;
    let (mut z, _) = sim.ecu("embed.pos".into(), Activation::Identity, &with_cls, None, Some(&w.pos_embed))?;

    for (i, layer) in w.layers.iter().enumerate() {
        z = sim.encoder_layer(i, &z, layer, mcfg)?;
    }

    let cls = z.row_slice(0, 1);
    let (head_ln, _) = sim.layer_norm("head.ln", &cls, &w.head_ln, eps)?;
    let logits = sim.linear("head.linear", &head_ln, &w.head, Activation::Identity)?;

    let report = SimReport {
        accel: *acfg,
        stages: sim.into_stages(),
        model_macs: count_macs(mcfg),
        assumptions: SIM_ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
    };
    Ok((
        Logits {
            values: logits.into_vec(),
        },
        report,
    ))
}

/// Roofline floor: analytic MACs at peak rate.
pub fn latency_lower_bound(mcfg: &VtrConfig, acfg: &AccelConfig) -> f64 {
    count_macs(mcfg) as f64 / peak_throughput(acfg)
}
