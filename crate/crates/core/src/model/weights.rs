//! Learned tensors of one model and the canonical tensor names that bind
//! them to the weight container.
//!
//! Names (shapes in brackets, `D` hidden, `R` raw token dim, `M` MLP width,
//! `T` tokens + 1, `K` classes):
//!
//! ```text
//! embed.ln.gamma [R]          embed.ln.beta [R]
//! embed.linear.weight [R,D]   embed.linear.bias [D]
//! cls_token [D]               pos_embed [T,D]
//! layers.{i}.ln1.gamma [D]    layers.{i}.ln1.beta [D]
//! layers.{i}.attn.{wq,wk,wv}.weight [D,D]  layers.{i}.attn.{wq,wk,wv}.bias [D]
//! layers.{i}.attn.temperature [1]
//! layers.{i}.attn.proj.weight [D,D]        layers.{i}.attn.proj.bias [D]
//! layers.{i}.ln2.gamma [D]    layers.{i}.ln2.beta [D]
//! layers.{i}.mlp.fc1.weight [D,M]  layers.{i}.mlp.fc1.bias [M]
//! layers.{i}.mlp.fc2.weight [M,D]  layers.{i}.mlp.fc2.bias [D]
//! head.ln.gamma [D]           head.ln.beta [D]
//! head.linear.weight [D,K]    head.linear.bias [K]
//! ```

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::VtrConfig;
use crate::error::{Error, FormatError, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormParams<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Scalar> LayerNormParams<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            gamma: vec![T::one(); dim],
            beta: vec![T::zero(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

/// `y = x · weight + bias`, weight stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(inputs, outputs),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderWeights<T = f32> {
    pub ln1: LayerNormParams<T>,
    pub wq: Linear<T>,
    pub wk: Linear<T>,
    pub wv: Linear<T>,
    /// Softmax temperature λ; scores are divided by it.
    pub temperature: T,
    pub proj: Linear<T>,
    pub ln2: LayerNormParams<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet<T = f32> {
    pub embed_ln: LayerNormParams<T>,
    pub embed_linear: Linear<T>,
    pub cls_token: Vec<T>,
    pub pos_embed: Matrix<T>,
    pub layers: Vec<EncoderWeights<T>>,
    pub head_ln: LayerNormParams<T>,
    pub head: Linear<T>,
}

/// One named tensor: canonical name, dims, row-major values.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor<T = f32> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<T>,
}

/// Canonical `(name, dims)` list for a config, in container order.
pub fn tensor_specs(cfg: &VtrConfig) -> Vec<(String, Vec<usize>)> {
    let (r, d, m, k) = (cfg.raw_dim(), cfg.hidden_dim, cfg.mlp_hidden(), cfg.num_classes);
    let mut v: Vec<(String, Vec<usize>)> = vec![
        ("embed.ln.gamma".into(), vec![r]),
        ("embed.ln.beta".into(), vec![r]),
        ("embed.linear.weight".into(), vec![r, d]),
        ("embed.linear.bias".into(), vec![d]),
        ("cls_token".into(), vec![d]),
        ("pos_embed".into(), vec![cfg.seq_len(), d]),
    ];
    for i in 0..cfg.depth {
        let p = format!("layers.{i}");
        v.push((format!("{p}.ln1.gamma"), vec![d]));
        v.push((format!("{p}.ln1.beta"), vec![d]));
        for q in ["wq", "wk", "wv"] {
            v.push((format!("{p}.attn.{q}.weight"), vec![d, d]));
            v.push((format!("{p}.attn.{q}.bias"), vec![d]));
        }
        v.push((format!("{p}.attn.temperature"), vec![1]));
        v.push((format!("{p}.attn.proj.weight"), vec![d, d]));
        v.push((format!("{p}.attn.proj.bias"), vec![d]));
        v.push((format!("{p}.ln2.gamma"), vec![d]));
        v.push((format!("{p}.ln2.beta"), vec![d]));
        v.push((format!("{p}.mlp.fc1.weight"), vec![d, m]));
        v.push((format!("{p}.mlp.fc1.bias"), vec![m]));
        v.push((format!("{p}.mlp.fc2.weight"), vec![m, d]));
        v.push((format!("{p}.mlp.fc2.bias"), vec![d]));
    }
    v.push(("head.ln.gamma".into(), vec![d]));
    v.push(("head.ln.beta".into(), vec![d]));
    v.push(("head.linear.weight".into(), vec![d, k]));
    v.push(("head.linear.bias".into(), vec![k]));
    v
}

impl<T: Scalar> WeightSet<T> {
    /// All-zero weights with identity layer norms and λ = 1.
    pub fn zeros(cfg: &VtrConfig) -> Self {
        let (r, d) = (cfg.raw_dim(), cfg.hidden_dim);
        Self {
            embed_ln: LayerNormParams::identity(r),
            embed_linear: Linear::zeros(r, d),
            cls_token: vec![T::zero(); d],
            pos_embed: Matrix::zeros(cfg.seq_len(), d),
            layers: (0..cfg.depth)
                .map(|_| EncoderWeights {
                    ln1: LayerNormParams::identity(d),
                    wq: Linear::zeros(d, d),
                    wk: Linear::zeros(d, d),
                    wv: Linear::zeros(d, d),
                    temperature: T::one(),
                    proj: Linear::zeros(d, d),
                    ln2: LayerNormParams::identity(d),
                    fc1: Linear::zeros(d, cfg.mlp_hidden()),
                    fc2: Linear::zeros(cfg.mlp_hidden(), d),
                })
                .collect(),
            head_ln: LayerNormParams::identity(d),
            head: Linear::zeros(d, cfg.num_classes),
        }
    }

    /// Tensors in canonical order.
    pub fn named_tensors(&self) -> Vec<NamedTensor<T>> {
        fn vec1<T: Scalar>(name: String, v: &[T]) -> NamedTensor<T> {
            NamedTensor {
                name,
                dims: vec![v.len()],
                values: v.to_vec(),
            }
        }
        fn mat<T: Scalar>(name: String, m: &Matrix<T>) -> NamedTensor<T> {
            NamedTensor {
                name,
                dims: vec![m.rows(), m.cols()],
                values: m.data().to_vec(),
            }
        }
        let mut out = vec![
            vec1("embed.ln.gamma".into(), &self.embed_ln.gamma),
            vec1("embed.ln.beta".into(), &self.embed_ln.beta),
            mat("embed.linear.weight".into(), &self.embed_linear.weight),
            vec1("embed.linear.bias".into(), &self.embed_linear.bias),
            vec1("cls_token".into(), &self.cls_token),
            mat("pos_embed".into(), &self.pos_embed),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("layers.{i}");
            out.push(vec1(format!("{p}.ln1.gamma"), &l.ln1.gamma));
            out.push(vec1(format!("{p}.ln1.beta"), &l.ln1.beta));
            for (q, lin) in [("wq", &l.wq), ("wk", &l.wk), ("wv", &l.wv)] {
                out.push(mat(format!("{p}.attn.{q}.weight"), &lin.weight));
                out.push(vec1(format!("{p}.attn.{q}.bias"), &lin.bias));
            }
            out.push(vec1(format!("{p}.attn.temperature"), &[l.temperature]));
            out.push(mat(format!("{p}.attn.proj.weight"), &l.proj.weight));
            out.push(vec1(format!("{p}.attn.proj.bias"), &l.proj.bias));
            out.push(vec1(format!("{p}.ln2.gamma"), &l.ln2.gamma));
            out.push(vec1(format!("{p}.ln2.beta"), &l.ln2.beta));
            out.push(mat(format!("{p}.mlp.fc1.weight"), &l.fc1.weight));
            out.push(vec1(format!("{p}.mlp.fc1.bias"), &l.fc1.bias));
            out.push(mat(format!("{p}.mlp.fc2.weight"), &l.fc2.weight));
            out.push(vec1(format!("{p}.mlp.fc2.bias"), &l.fc2.bias));
        }
        out.push(vec1("head.ln.gamma".into(), &self.head_ln.gamma));
        out.push(vec1("head.ln.beta".into(), &self.head_ln.beta));
        out.push(mat("head.linear.weight".into(), &self.head.weight));
        out.push(vec1("head.linear.bias".into(), &self.head.bias));
        out
    }

    /// Total scalar count across all tensors.
    pub fn element_count(&self) -> usize {
        self.named_tensors().iter().map(|t| t.values.len()).sum()
    }

    /// Rebuild from named tensors; every canonical name must be present
    /// exactly once with the canonical dims, and nothing else.
    pub fn from_named(cfg: &VtrConfig, tensors: Vec<NamedTensor<T>>) -> Result<Self> {
        let specs = tensor_specs(cfg);
        let mut by_name: BTreeMap<String, NamedTensor<T>> = BTreeMap::new();
        for t in tensors {
            if by_name.contains_key(&t.name) {
                return Err(shape_err(format!("duplicate tensor {}", t.name)));
            }
            by_name.insert(t.name.clone(), t);
        }
        for (name, dims) in &specs {
            match by_name.get(name) {
                None => return Err(shape_err(format!("missing tensor {name}"))),
                Some(t) if &t.dims != dims => {
                    return Err(shape_err(format!(
                        "tensor {name} has dims {:?}, config requires {:?}",
                        t.dims, dims
                    )))
                }
                Some(t) if t.values.len() != dims.iter().product::<usize>() => {
                    return Err(shape_err(format!("tensor {name} payload size mismatch")))
                }
                _ => {}
            }
        }
        if by_name.len() != specs.len() {
            let extra: Vec<_> = by_name
                .keys()
                .filter(|k| !specs.iter().any(|(n, _)| n == *k))
                .cloned()
                .collect();
            return Err(shape_err(format!("unexpected tensors {extra:?}")));
        }

        let mut t = Taker(by_name);
        let layers = (0..cfg.depth)
            .map(|i| {
                let p = format!("layers.{i}");
                Ok(EncoderWeights {
                    ln1: t.ln(&format!("{p}.ln1")),
                    wq: t.linear(&format!("{p}.attn.wq"))?,
                    wk: t.linear(&format!("{p}.attn.wk"))?,
                    wv: t.linear(&format!("{p}.attn.wv"))?,
                    temperature: t.vec(&format!("{p}.attn.temperature"))[0],
                    proj: t.linear(&format!("{p}.attn.proj"))?,
                    ln2: t.ln(&format!("{p}.ln2")),
                    fc1: t.linear(&format!("{p}.mlp.fc1"))?,
                    fc2: t.linear(&format!("{p}.mlp.fc2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(WeightSet {
            embed_ln: t.ln("embed.ln"),
            embed_linear: t.linear("embed.linear")?,
            cls_token: t.vec("cls_token"),
            pos_embed: t.mat("pos_embed")?,
            layers,
            head_ln: t.ln("head.ln"),
            head: t.linear("head.linear")?,
        })
    }

    /// Check every tensor against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &VtrConfig) -> Result<()> {
        let specs = tensor_specs(cfg);
        let named = self.named_tensors();
        if specs.len() != named.len() {
            return Err(shape_err(format!(
                "{} tensors, config requires {}",
                named.len(),
                specs.len()
            )));
        }
        for ((name, dims), t) in specs.iter().zip(&named) {
            if name != &t.name || dims != &t.dims {
                return Err(shape_err(format!(
                    "tensor {} {:?} where config requires {name} {dims:?}",
                    t.name, t.dims
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> WeightSet<U> {
        let v = |x: &[T]| x.iter().map(|e| U::of(e.as_f64())).collect::<Vec<U>>();
        let ln = |l: &LayerNormParams<T>| LayerNormParams {
            gamma: v(&l.gamma),
            beta: v(&l.beta),
        };
        let lin = |l: &Linear<T>| Linear {
            weight: l.weight.cast(),
            bias: v(&l.bias),
        };
        WeightSet {
            embed_ln: ln(&self.embed_ln),
            embed_linear: lin(&self.embed_linear),
            cls_token: v(&self.cls_token),
            pos_embed: self.pos_embed.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| EncoderWeights {
                    ln1: ln(&l.ln1),
                    wq: lin(&l.wq),
                    wk: lin(&l.wk),
                    wv: lin(&l.wv),
                    temperature: U::of(l.temperature.as_f64()),
                    proj: lin(&l.proj),
                    ln2: ln(&l.ln2),
                    fc1: lin(&l.fc1),
                    fc2: lin(&l.fc2),
                })
                .collect(),
            head_ln: ln(&self.head_ln),
            head: lin(&self.head),
        }
    }
}

struct Taker<T>(BTreeMap<String, NamedTensor<T>>);

impl<T: Scalar> Taker<T> {
    fn take(&mut self, name: &str) -> NamedTensor<T> {
        self.0.remove(name).expect("presence checked before extraction")
    }

    fn vec(&mut self, name: &str) -> Vec<T> {
        self.take(name).values
    }

    fn mat(&mut self, name: &str) -> Result<Matrix<T>> {
        let t = self.take(name);
        Matrix::from_vec(t.dims[0], t.dims[1], t.values)
    }

    fn ln(&mut self, prefix: &str) -> LayerNormParams<T> {
        LayerNormParams {
            gamma: self.vec(&format!("{prefix}.gamma")),
            beta: self.vec(&format!("{prefix}.beta")),
        }
    }

    fn linear(&mut self, prefix: &str) -> Result<Linear<T>> {
        Ok(Linear {
            weight: self.mat(&format!("{prefix}.weight"))?,
            bias: self.vec(&format!("{prefix}.bias")),
        })
    }
}

/// Deterministic initialization from a 64-bit seed.
///
/// Matrices and the class token draw from a normal with std 0.02 truncated
/// at ±2σ; biases and positional embeddings are zero; layer norms are
/// identity; every λ is `sqrt(d_k)`. Values are drawn in `f32` and cast, so
/// `f32` and `f64` weight sets from the same seed agree to `f32` precision.
pub fn random_init<T: Scalar>(cfg: &VtrConfig, seed: u64) -> WeightSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, 0.02).expect("valid std");
    let mut draw = |n: usize| -> Vec<T> {
        (0..n)
            .map(|_| loop {
                let x = normal.sample(&mut rng);
                if x.abs() <= 0.04 {
                    break T::of(x as f64);
                }
            })
            .collect()
    };
    let mut fill = |m: &mut Matrix<T>| {
        let v = draw(m.rows() * m.cols());
        m.data_mut().copy_from_slice(&v);
    };

    let mut w = WeightSet::<T>::zeros(cfg);
    fill(&mut w.embed_linear.weight);
    let mut cls = Matrix::zeros(1, cfg.hidden_dim);
    fill(&mut cls);
    w.cls_token = cls.into_vec();
    let lambda = T::of((cfg.head_dim() as f64).sqrt());
    for l in &mut w.layers {
        for lin in [&mut l.wq, &mut l.wk, &mut l.wv, &mut l.proj, &mut l.fc1, &mut l.fc2] {
            fill(&mut lin.weight);
        }
        l.temperature = lambda;
    }
    fill(&mut w.head.weight);
    w
}

/// Perturb every tensor with uniform noise; used by tests that need weights
/// far from the near-zero regime of [`random_init`].
pub fn random_dense<T: Scalar>(cfg: &VtrConfig, seed: u64, scale: f64) -> WeightSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_DE75E);
    let mut w = WeightSet::<T>::zeros(cfg);
    let mut named = w.named_tensors();
    for t in &mut named {
        let is_gamma = t.name.ends_with(".gamma");
        let is_lambda = t.name.ends_with(".temperature");
        for v in &mut t.values {
            let u: f64 = rng.random_range(-1.0..1.0);
            *v = if is_lambda {
                T::of(0.5 + 2.0 * (u + 1.0))
            } else if is_gamma {
                T::of(1.0 + 0.2 * u)
            } else {
                T::of(scale * u)
            };
        }
    }
    w = WeightSet::from_named(cfg, named).expect("canonical tensors");
    w
}

fn shape_err(msg: String) -> Error {
    Error::RawFormat(FormatError::ShapeMismatch(msg))
}
