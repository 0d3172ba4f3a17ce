use serde::Serialize;

use super::layers::{add, encoder_layer, layer_norm, linear};
use super::{VtrConfig, WeightSet, LN_EPS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spt::{spt_transform, tokenize, Image, TokenMatrix};
use crate::tensor::Matrix;

/// Stage names recorded in an [`ActivationTrace`].
///
/// Grammar: `spt`, `tokens`, `embed`,
/// `layer{i}.{ln1|attn_scores|msa_out|res1|ln2|mlp_out|out}`, `head_ln`,
/// `logits`.
pub mod stage {
    pub const SPT: &str = "spt";
    pub const TOKENS: &str = "tokens";
    pub const EMBED: &str = "embed";
    pub const HEAD_LN: &str = "head_ln";
    pub const LOGITS: &str = "logits";
    pub const LAYER_STAGES: [&str; 7] =
        ["ln1", "attn_scores", "msa_out", "res1", "ln2", "mlp_out", "out"];

    pub fn layer(i: usize, sub: &str) -> String {
        format!("layer{i}.{sub}")
    }

    /// Every stage name for a model of the given depth, in execution order.
    pub fn all(depth: usize) -> Vec<String> {
        let mut v = vec![SPT.to_string(), TOKENS.to_string(), EMBED.to_string()];
        for i in 0..depth {
            v.extend(LAYER_STAGES.iter().map(|s| layer(i, s)));
        }
        v.push(HEAD_LN.into());
        v.push(LOGITS.into());
        v
    }

    /// True when `name` matches the grammar.
    pub fn is_valid(name: &str) -> bool {
        if [SPT, TOKENS, EMBED, HEAD_LN, LOGITS].contains(&name) {
            return true;
        }
        let Some(rest) = name.strip_prefix("layer") else {
            return false;
        };
        let Some((idx, sub)) = rest.split_once('.') else {
            return false;
        };
        !idx.is_empty()
            && idx.bytes().all(|b| b.is_ascii_digit())
            && LAYER_STAGES.contains(&sub)
    }
}

/// Named intermediates of one forward pass, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivationTrace<T = f32> {
    entries: Vec<(String, Matrix<T>)>,
}

impl<T: Scalar> ActivationTrace<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn record(&mut self, name: impl Into<String>, m: Matrix<T>) {
        self.entries.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<T>)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Class scores; the prediction is the argmax.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Logits<T = f32> {
    pub values: Vec<T>,
}

impl<T: Scalar> Logits<T> {
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Softmax of the logits, computed in f64.
    pub fn probabilities(&self) -> Vec<f64> {
        let m = self
            .values
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = self.values.iter().map(|v| (v.as_f64() - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_matrix(&self) -> Matrix<T> {
        Matrix::row_vector(&self.values)
    }
}

/// ‖a − b‖_∞ / ‖b‖_∞ between two logit vectors.
pub fn logits_relative_error<T: Scalar>(a: &Logits<T>, b: &Logits<T>) -> f64 {
    crate::tensor::relative_max_error(&a.as_matrix(), &b.as_matrix())
}

/// `concat(x_CLS, Linear(LN(tokens))) + pos_embed`.
pub fn embed<T: Scalar>(tokens: &TokenMatrix<T>, w: &WeightSet<T>) -> Result<Matrix<T>> {
    let x = &tokens.matrix;
    if x.cols() != w.embed_linear.in_dim() {
        return Err(Error::dims(
            "embed",
            format!("token width {} vs embedding input {}", x.cols(), w.embed_linear.in_dim()),
        ));
    }
    if w.pos_embed.rows() != x.rows() + 1 || w.pos_embed.cols() != w.embed_linear.out_dim() {
        return Err(Error::dims(
            "embed",
            format!("positional table {:?} for {} tokens", w.pos_embed.shape(), x.rows()),
        ));
    }
    if w.cls_token.len() != w.embed_linear.out_dim() {
        return Err(Error::dims("embed", "class token width"));
    }
    let ln = layer_norm(x, &w.embed_ln, T::of(LN_EPS))?;
    let lin = linear(&ln, &w.embed_linear)?;
    let z = Matrix::vcat(&[Matrix::row_vector(&w.cls_token), lin])?;
    add(&z, &w.pos_embed)
}

fn check_image<T: Scalar>(img: &Image<T>, cfg: &VtrConfig) -> Result<()> {
    if img.height() != cfg.image_height
        || img.width() != cfg.image_width
        || img.channels() != cfg.channels
    {
        return Err(Error::dims(
            "forward",
            format!(
                "image {}x{}x{} for a model expecting {}x{}x{}",
                img.height(),
                img.width(),
                img.channels(),
                cfg.image_height,
                cfg.image_width,
                cfg.channels
            ),
        ));
    }
    Ok(())
}

fn run<T: Scalar>(
    img: &Image<T>,
    w: &WeightSet<T>,
    cfg: &VtrConfig,
    mut trace: Option<&mut ActivationTrace<T>>,
) -> Result<Logits<T>> {
    cfg.validate()?;
    check_image(img, cfg)?;
    if w.layers.len() != cfg.depth {
        return Err(Error::dims(
            "forward",
            format!("{} layers of weights for depth {}", w.layers.len(), cfg.depth),
        ));
    }
    let stack = spt_transform(img, &cfg.shift_spec())?;
    let tokens = tokenize(&stack, cfg.patch)?;
    let mut z = embed(&tokens, w)?;
    if let Some(t) = trace.as_deref_mut() {
        t.record(stage::SPT, stack.to_pixel_matrix());
        t.record(stage::TOKENS, tokens.matrix.clone());
        t.record(stage::EMBED, z.clone());
    }
    for (i, layer) in w.layers.iter().enumerate() {
        let o = encoder_layer(&z, layer, cfg, i)?;
        if let Some(t) = trace.as_deref_mut() {
            t.record(stage::layer(i, "ln1"), o.ln1);
            t.record(stage::layer(i, "attn_scores"), o.attn_scores);
            t.record(stage::layer(i, "msa_out"), o.msa_out);
            t.record(stage::layer(i, "res1"), o.res1);
            t.record(stage::layer(i, "ln2"), o.ln2);
            t.record(stage::layer(i, "mlp_out"), o.mlp_out);
            t.record(stage::layer(i, "out"), o.out.clone());
        }
        z = o.out;
    }
    let cls = z.row_slice(0, 1);
    let head_ln = layer_norm(&cls, &w.head_ln, T::of(LN_EPS))?;
    let logits = linear(&head_ln, &w.head)?;
    if let Some(t) = trace {
        t.record(stage::HEAD_LN, head_ln);
        t.record(stage::LOGITS, logits.clone());
    }
    Ok(Logits {
        values: logits.into_vec(),
    })
}

/// Full inference: SPT, tokenization, embedding, encoder stack, head.
pub fn forward<T: Scalar>(img: &Image<T>, w: &WeightSet<T>, cfg: &VtrConfig) -> Result<Logits<T>> {
    run(img, w, cfg, None)
}

/// [`forward`] that also records every named stage.
pub fn forward_traced<T: Scalar>(
    img: &Image<T>,
    w: &WeightSet<T>,
    cfg: &VtrConfig,
) -> Result<(Logits<T>, ActivationTrace<T>)> {
    let mut trace = ActivationTrace::new();
    let logits = run(img, w, cfg, Some(&mut trace))?;
    Ok((logits, trace))
}
