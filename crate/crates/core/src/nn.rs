//! Small neural building blocks on top of candle tensors.
//!
//! Weights are either frozen (plain tensors, never receive gradient) or
//! learnable (registered in a [`ParamStore`] as `Var`s). A module only holds
//! `Tensor` handles; for learnable weights those handles share storage with the
//! `Var`, so optimizer updates are visible without re-wiring.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::blob::{BlobReader, BlobWriter};
use crate::error::{Error, Result};

/// Seeded weight initializer. All randomness in model construction flows
/// through this so that identical seeds give bit-identical weights.
pub struct Init {
    rng: ChaCha8Rng,
    dtype: DType,
    device: Device,
}

impl Init {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
            device: device.clone(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Derives an independent child initializer.
    pub fn fork(&mut self) -> Init {
        Init {
            rng: ChaCha8Rng::seed_from_u64(self.rng.random()),
            dtype: self.dtype,
            device: self.device.clone(),
        }
    }

    pub fn normal_vec(&mut self, n: usize, std: f64) -> Vec<f64> {
        let dist = Normal::new(0.0, std).expect("std must be finite and non-negative");
        (0..n).map(|_| dist.sample(&mut self.rng)).collect()
    }

    pub fn normal(&mut self, shape: &[usize], std: f64) -> Result<Tensor> {
        let n = shape.iter().product();
        let values: Vec<f32> = self
            .normal_vec(n, std)
            .into_iter()
            .map(|v| v as f32)
            .collect();
        Ok(Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?)
    }

    pub fn zeros(&self, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::zeros(shape, self.dtype, &self.device)?)
    }

    pub fn ones(&self, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::ones(shape, self.dtype, &self.device)?)
    }

    pub fn eye(&self, n: usize) -> Result<Tensor> {
        Ok(Tensor::eye(n, self.dtype, &self.device)?)
    }

    pub fn from_f64(&self, values: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?)
    }
}

/// Named collection of learnable parameters.
#[derive(Default, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers `init` as a learnable parameter and returns a handle sharing its storage.
    pub fn learnable(&mut self, name: &str, init: Tensor) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        let var = Var::from_tensor(&init)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.values().cloned().collect()
    }

    /// Variables whose name starts with `prefix`.
    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<(String, Var)> {
        self.vars
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    /// Name of the first parameter holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Result<Option<&str>> {
        for (name, var) in &self.vars {
            let total = var.as_tensor().abs()?.sum_all()?.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !total.is_finite() {
                return Ok(Some(name));
            }
        }
        Ok(None)
    }

    pub fn merge(&mut self, other: ParamStore) -> Result<()> {
        for (k, v) in other.vars {
            if self.vars.contains_key(&k) {
                return Err(Error::Invalid(format!("duplicate parameter `{k}`")));
            }
            self.vars.insert(k, v);
        }
        Ok(())
    }

    pub fn save_into(&self, w: &mut BlobWriter) -> Result<()> {
        for (name, var) in &self.vars {
            w.add_tensor(name, var.as_tensor())?;
        }
        Ok(())
    }

    /// Overwrites every registered parameter from the blob; shapes must match.
    pub fn load_from(&self, r: &BlobReader) -> Result<()> {
        for (name, var) in &self.vars {
            let t = r.tensor(name, Some(var.dims()), var.dtype(), var.device())?;
            var.set(&t)?;
        }
        Ok(())
    }
}

/// SHA-256 over the raw f32 contents of a set of tensors, in order.
pub fn checksum<'a>(tensors: impl IntoIterator<Item = &'a Tensor>) -> Result<String> {
    let mut h = Sha256::new();
    for t in tensors {
        let v = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        for x in v {
            h.update(x.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Numerically stable softmax over the last dimension.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

/// `x * sigmoid(1.702 x)`, the activation of the original CLIP transformers.
pub fn quick_gelu(x: &Tensor) -> Result<Tensor> {
    Ok((x * candle_nn::ops::sigmoid(&x.affine(1.702, 0.0)?)?)?)
}

/// Row-wise L2 normalisation over the last dimension (norms floored at 1e-12).
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let n = x.sqr()?.sum_keepdim(D::Minus1)?.sqrt()?.maximum(1e-12)?;
    Ok(x.broadcast_div(&n)?)
}

/// Cosine similarity matrix between rows of `a` `[n, d]` and rows of `b` `[m, d]`.
pub fn cosine_matrix(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    Ok(l2_normalize(a)?.matmul(&l2_normalize(b)?.t()?)?)
}

fn flatten_leading(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let dims = x.dims().to_vec();
    let last = *dims.last().ok_or_else(|| Error::Invalid("scalar input".into()))?;
    let rows = x.elem_count() / last.max(1);
    Ok((x.reshape((rows, last))?, dims))
}

#[derive(Clone, Debug)]
pub struct Linear {
    /// `[in, out]`
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Self {
        Self { weight, bias }
    }

    pub fn frozen(init: &mut Init, d_in: usize, d_out: usize, std: f64) -> Result<Self> {
        Ok(Self {
            weight: init.normal(&[d_in, d_out], std)?,
            bias: Some(init.zeros(&[d_out])?),
        })
    }

    /// Learnable layer with PyTorch-style default init scale `1/sqrt(d_in)`.
    pub fn learnable(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        d_in: usize,
        d_out: usize,
    ) -> Result<Self> {
        let std = (d_in as f64).sqrt().recip();
        Self::learnable_with(store, name, init.normal(&[d_in, d_out], std)?, init.zeros(&[d_out])?)
    }

    pub fn learnable_with(
        store: &mut ParamStore,
        name: &str,
        weight: Tensor,
        bias: Tensor,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.learnable(&format!("{name}.weight"), weight)?,
            bias: Some(store.learnable(&format!("{name}.bias"), bias)?),
        })
    }

    pub fn d_in(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (x2, mut dims) = flatten_leading(x)?;
        let mut y = x2.matmul(&self.weight)?;
        if let Some(b) = &self.bias {
            y = y.broadcast_add(b)?;
        }
        *dims.last_mut().unwrap() = self.d_out();
        Ok(y.reshape(dims)?)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        std::iter::once(&self.weight).chain(self.bias.iter()).collect()
    }

    pub fn save_into(&self, w: &mut BlobWriter, name: &str) -> Result<()> {
        w.add_tensor(&format!("{name}.weight"), &self.weight)?;
        if let Some(b) = &self.bias {
            w.add_tensor(&format!("{name}.bias"), b)?;
        }
        Ok(())
    }

    pub fn load(r: &BlobReader, name: &str, d_in: usize, d_out: usize, dtype: DType, dev: &Device) -> Result<Self> {
        Ok(Self {
            weight: r.tensor(&format!("{name}.weight"), Some(&[d_in, d_out]), dtype, dev)?,
            bias: Some(r.tensor(&format!("{name}.bias"), Some(&[d_out]), dtype, dev)?),
        })
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(init: &Init, width: usize) -> Result<Self> {
        Ok(Self {
            gamma: init.ones(&[width])?,
            beta: init.zeros(&[width])?,
            eps: 1e-5,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let xc = x.broadcast_sub(&mean)?;
        let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
        let xn = xc.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(xn.broadcast_mul(&self.gamma)?.broadcast_add(&self.beta)?)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.gamma, &self.beta]
    }

    pub fn save_into(&self, w: &mut BlobWriter, name: &str) -> Result<()> {
        w.add_tensor(&format!("{name}.gamma"), &self.gamma)?;
        w.add_tensor(&format!("{name}.beta"), &self.beta)
    }

    pub fn load(r: &BlobReader, name: &str, width: usize, dtype: DType, dev: &Device) -> Result<Self> {
        Ok(Self {
            gamma: r.tensor(&format!("{name}.gamma"), Some(&[width]), dtype, dev)?,
            beta: r.tensor(&format!("{name}.beta"), Some(&[width]), dtype, dev)?,
            eps: 1e-5,
        })
    }
}

/// Two-layer perceptron with a GELU in between.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn learnable(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        dims: (usize, usize, usize),
    ) -> Result<Self> {
        Ok(Self {
            fc1: Linear::learnable(store, init, &format!("{name}.fc1"), dims.0, dims.1)?,
            fc2: Linear::learnable(store, init, &format!("{name}.fc2"), dims.1, dims.2)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&quick_gelu(&self.fc1.forward(x)?)?)
    }
}

/// Cached keys/values of one attention layer for incremental decoding.
#[derive(Clone, Debug, Default)]
pub struct KvCache {
    pub k: Option<Tensor>,
    pub v: Option<Tensor>,
}

/// Pre-LayerNorm residual transformer block (CLIP layout).
#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub out: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
    pub heads: usize,
}

impl Block {
    /// Frozen block with the CLIP initialization scales.
    pub fn frozen(init: &mut Init, width: usize, heads: usize, depth: usize) -> Result<Self> {
        let attn_std = (width as f64).powf(-0.5);
        let proj_std = attn_std * ((2 * depth) as f64).powf(-0.5);
        let fc_std = ((2 * width) as f64).powf(-0.5);
        Ok(Self {
            ln1: LayerNorm::new(init, width)?,
            qkv: Linear::frozen(init, width, 3 * width, attn_std)?,
            out: Linear::frozen(init, width, width, proj_std)?,
            ln2: LayerNorm::new(init, width)?,
            fc1: Linear::frozen(init, width, 4 * width, fc_std)?,
            fc2: Linear::frozen(init, 4 * width, width, proj_std)?,
            heads,
        })
    }

    /// Same layout with every weight registered as learnable.
    pub fn learnable(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        width: usize,
        heads: usize,
        depth: usize,
    ) -> Result<Self> {
        let frozen = Self::frozen(init, width, heads, depth)?;
        let reg = |store: &mut ParamStore, n: &str, t: &Tensor| store.learnable(&format!("{name}.{n}"), t.clone());
        let lin = |store: &mut ParamStore, n: &str, l: &Linear| -> Result<Linear> {
            Ok(Linear {
                weight: reg(store, &format!("{n}.weight"), &l.weight)?,
                bias: Some(reg(store, &format!("{n}.bias"), l.bias.as_ref().unwrap())?),
            })
        };
        let ln = |store: &mut ParamStore, n: &str, l: &LayerNorm| -> Result<LayerNorm> {
            Ok(LayerNorm {
                gamma: reg(store, &format!("{n}.gamma"), &l.gamma)?,
                beta: reg(store, &format!("{n}.beta"), &l.beta)?,
                eps: l.eps,
            })
        };
        Ok(Self {
            ln1: ln(store, "ln1", &frozen.ln1)?,
            qkv: lin(store, "qkv", &frozen.qkv)?,
            out: lin(store, "out", &frozen.out)?,
            ln2: ln(store, "ln2", &frozen.ln2)?,
            fc1: lin(store, "fc1", &frozen.fc1)?,
            fc2: lin(store, "fc2", &frozen.fc2)?,
            heads,
        })
    }

    pub fn width(&self) -> usize {
        self.out.d_out()
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (n, l, w) = x.dims3()?;
        Ok(x
            .reshape((n, l, self.heads, w / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    fn merge_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (n, h, l, dh) = x.dims4()?;
        Ok(x.transpose(1, 2)?.contiguous()?.reshape((n, l, h * dh))?)
    }

    fn attend(&self, q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let dh = q.dim(D::Minus1)?;
        let mut att = (q.matmul(&k.t()?.contiguous()?)? * (dh as f64).powf(-0.5))?;
        if let Some(m) = mask {
            att = att.broadcast_add(m)?;
        }
        Ok(softmax_last(&att)?.matmul(v)?)
    }

    /// `x`: `[n, len, width]`; `mask`: additive `[len, len]`.
    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let w = self.width();
        let h = self.ln1.forward(x)?;
        let qkv = self.qkv.forward(&h)?;
        let q = self.split_heads(&qkv.narrow(D::Minus1, 0, w)?)?;
        let k = self.split_heads(&qkv.narrow(D::Minus1, w, w)?)?;
        let v = self.split_heads(&qkv.narrow(D::Minus1, 2 * w, w)?)?;
        let a = self.merge_heads(&self.attend(&q, &k, &v, mask)?)?;
        let x = (x + self.out.forward(&a)?)?;
        let h = quick_gelu(&self.fc1.forward(&self.ln2.forward(&x)?)?)?;
        Ok((&x + self.fc2.forward(&h)?)?)
    }

    /// Causal incremental step: `x` holds only the new positions `[n, t, width]`.
    pub fn forward_cached(&self, x: &Tensor, cache: &mut KvCache) -> Result<Tensor> {
        let w = self.width();
        let t = x.dim(1)?;
        let h = self.ln1.forward(x)?;
        let qkv = self.qkv.forward(&h)?;
        let q = self.split_heads(&qkv.narrow(D::Minus1, 0, w)?)?;
        let mut k = self.split_heads(&qkv.narrow(D::Minus1, w, w)?)?;
        let mut v = self.split_heads(&qkv.narrow(D::Minus1, 2 * w, w)?)?;
        let past = cache.k.as_ref().map(|k| k.dim(2)).transpose()?.unwrap_or(0);
        if let (Some(pk), Some(pv)) = (&cache.k, &cache.v) {
            k = Tensor::cat(&[pk, &k], 2)?;
            v = Tensor::cat(&[pv, &v], 2)?;
        }
        cache.k = Some(k.clone());
        cache.v = Some(v.clone());
        let mask = if t > 1 {
            Some(causal_mask_offset(t, past, x.dtype(), x.device())?)
        } else {
            None
        };
        let a = self.merge_heads(&self.attend(&q, &k, &v, mask.as_ref())?)?;
        let x = (x + self.out.forward(&a)?)?;
        let h = quick_gelu(&self.fc1.forward(&self.ln2.forward(&x)?)?)?;
        Ok((&x + self.fc2.forward(&h)?)?)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = self.ln1.tensors();
        v.extend(self.qkv.tensors());
        v.extend(self.out.tensors());
        v.extend(self.ln2.tensors());
        v.extend(self.fc1.tensors());
        v.extend(self.fc2.tensors());
        v
    }

    pub fn save_into(&self, w: &mut BlobWriter, name: &str) -> Result<()> {
        self.ln1.save_into(w, &format!("{name}.ln1"))?;
        self.qkv.save_into(w, &format!("{name}.qkv"))?;
        self.out.save_into(w, &format!("{name}.out"))?;
        self.ln2.save_into(w, &format!("{name}.ln2"))?;
        self.fc1.save_into(w, &format!("{name}.fc1"))?;
        self.fc2.save_into(w, &format!("{name}.fc2"))
    }

    pub fn load(r: &BlobReader, name: &str, width: usize, heads: usize, dtype: DType, dev: &Device) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::load(r, &format!("{name}.ln1"), width, dtype, dev)?,
            qkv: Linear::load(r, &format!("{name}.qkv"), width, 3 * width, dtype, dev)?,
            out: Linear::load(r, &format!("{name}.out"), width, width, dtype, dev)?,
            ln2: LayerNorm::load(r, &format!("{name}.ln2"), width, dtype, dev)?,
            fc1: Linear::load(r, &format!("{name}.fc1"), width, 4 * width, dtype, dev)?,
            fc2: Linear::load(r, &format!("{name}.fc2"), 4 * width, width, dtype, dev)?,
            heads,
        })
    }
}

/// Additive causal mask `[len, len]`: 0 on and below the diagonal, a large negative above.
pub fn causal_mask(len: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    causal_mask_offset(len, 0, dtype, device)
}

/// Mask for `t` new queries attending over `past + t` keys.
fn causal_mask_offset(t: usize, past: usize, dtype: DType, device: &Device) -> Result<Tensor> {
    let total = past + t;
    let values: Vec<f32> = (0..t)
        .flat_map(|i| (0..total).map(move |j| if j > past + i { -1e9 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(values, (t, total), device)?.to_dtype(dtype)?)
}

/// Scalar value of a 0-d or single-element tensor as `f64`.
pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?[0])
}

pub fn to_vec2_f64(t: &Tensor) -> Result<Vec<Vec<f64>>> {
    Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
}

pub fn to_vec1_f64(t: &Tensor) -> Result<Vec<f64>> {
    Ok(t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dev() -> Device {
        Device::Cpu
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = Init::new(7, DType::F32, &dev()).normal(&[4, 3], 1.0).unwrap();
        let b = Init::new(7, DType::F32, &dev()).normal(&[4, 3], 1.0).unwrap();
        let c = Init::new(8, DType::F32, &dev()).normal(&[4, 3], 1.0).unwrap();
        assert_eq!(checksum([&a]).unwrap(), checksum([&b]).unwrap());
        assert_ne!(checksum([&a]).unwrap(), checksum([&c]).unwrap());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0], [1000.0, 1000.0, 1000.0]], &dev()).unwrap();
        let p = to_vec2_f64(&softmax_last(&x).unwrap()).unwrap();
        for row in &p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((p[1][0] - 1.0 / 3.0).abs() < 1e-12);
        let lp = to_vec2_f64(&log_softmax_last(&x).unwrap()).unwrap();
        assert!((lp[0][2] - p[0][2].ln()).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_standardizes() {
        let init = Init::new(0, DType::F64, &dev());
        let ln = LayerNorm::new(&init, 4).unwrap();
        let x = Tensor::new(&[[1.0f64, 2.0, 3.0, 4.0]], &dev()).unwrap();
        let y = to_vec2_f64(&ln.forward(&x).unwrap()).unwrap();
        let mean: f64 = y[0].iter().sum::<f64>() / 4.0;
        let var: f64 = y[0].iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn cached_decoding_matches_full_causal_pass() {
        let mut init = Init::new(3, DType::F64, &dev());
        let block = Block::frozen(&mut init, 16, 4, 2).unwrap();
        let x = init.normal(&[2, 5, 16], 1.0).unwrap();
        let full = block
            .forward(&x, Some(&causal_mask(5, DType::F64, &dev()).unwrap()))
            .unwrap();
        let mut cache = KvCache::default();
        let first = block.forward_cached(&x.narrow(1, 0, 3).unwrap(), &mut cache).unwrap();
        let rest: Vec<Tensor> = (3..5)
            .map(|i| block.forward_cached(&x.narrow(1, i, 1).unwrap(), &mut cache).unwrap())
            .collect();
        let inc = Tensor::cat(&[&first, &rest[0], &rest[1]], 1).unwrap();
        let diff = (full - inc).unwrap().abs().unwrap().max_all().unwrap();
        assert!(scalar(&diff).unwrap() < 1e-10);
    }

    #[test]
    fn param_store_save_load() {
        let mut init = Init::new(1, DType::F32, &dev());
        let mut store = ParamStore::new();
        let lin = Linear::learnable(&mut store, &mut init, "lin", 3, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut w = BlobWriter::create(dir.path()).unwrap();
        store.save_into(&mut w).unwrap();
        w.finish().unwrap();
        let before = checksum(lin.tensors()).unwrap();
        store.get("lin.weight").unwrap().set(&init.zeros(&[3, 2]).unwrap()).unwrap();
        assert_ne!(before, checksum(lin.tensors()).unwrap());
        store.load_from(&BlobReader::open(dir.path()).unwrap()).unwrap();
        assert_eq!(before, checksum(lin.tensors()).unwrap());
        assert!(store.learnable("lin.weight", init.zeros(&[1]).unwrap()).is_err());
    }
}
