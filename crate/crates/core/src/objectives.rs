//! Training objectives: focal video-text loss, the parameter-text contrastive
//! loss, and the decoder's prefix language-modeling loss with its ordinal term.

use std::sync::Mutex;

use candle_core::{CpuStorage, CustomOp1, DType, Layout, Shape, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::caption_decoder::vocab::{is_number_token, ORDINAL_DENOMINATOR};
use crate::error::{Error, Result};
use crate::nn::{l2_normalize, Init, Mlp, ParamStore};
use crate::text_branch::class_probabilities;

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub tau: f64,
    /// Weight of the parameter-text loss in the total loss.
    pub omega: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            tau: 0.01,
            omega: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.focal_alpha, self.focal_gamma, self.tau, self.omega]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !ok || self.tau <= 0.0 || self.focal_alpha <= 0.0 {
            return Err(Error::Config("loss weights must be finite, non-negative, alpha and tau positive".into()));
        }
        Ok(())
    }
}

fn label_tensor(labels: &[usize], rows: usize, classes: usize, like: &Tensor) -> Result<Tensor> {
    if labels.len() != rows {
        return Err(Error::shape("labels", rows, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::OutOfRange(format!("label {bad} with {classes} classes")));
    }
    let ids: Vec<u32> = labels.iter().map(|&l| l as u32).collect();
    Ok(Tensor::from_vec(ids, (rows, 1), like.device())?)
}

/// Batch mean of `-alpha (1 - p_y)^gamma log p_y` for probabilities `p` `[batch, classes]`.
pub fn focal_loss(p: &Tensor, labels: &[usize], alpha: f64, gamma: f64) -> Result<Tensor> {
    let (rows, classes) = p.dims2()?;
    if rows == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let idx = label_tensor(labels, rows, classes, p)?;
    let py = p.gather(&idx, 1)?.squeeze(1)?.clamp(PROB_FLOOR, 1.0)?;
    let one_minus = (1.0 - &py)?;
    let modulating = if gamma == 0.0 {
        one_minus.ones_like()?
    } else if gamma == 2.0 {
        one_minus.sqr()?
    } else {
        one_minus.powf(gamma)?
    };
    let per = (modulating * py.log()?)?.affine(-alpha, 0.0)?;
    Ok(per.mean_all()?)
}

/// Focal loss of the class probabilities; also returns the probabilities so
/// callers can reuse the exact values that `classify` would produce.
pub fn video_text_loss(
    video: &Tensor,
    class_features: &Tensor,
    labels: &[usize],
    w: &LossWeights,
) -> Result<(Tensor, Tensor)> {
    let p = class_probabilities(video, class_features, w.tau)?;
    Ok((focal_loss(&p, labels, w.focal_alpha, w.focal_gamma)?, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadConfig {
    pub hidden: usize,
    pub out: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { hidden: 256, out: 128 }
    }
}

/// Shared text projection plus one numeric projection per class.
#[derive(Debug, Clone)]
pub struct ProjectionHeads {
    pub text: Mlp,
    pub numeric: Vec<Mlp>,
}

impl ProjectionHeads {
    pub fn new(cfg: &HeadConfig, d_in: usize, classes: usize, store: &mut ParamStore, init: &mut Init) -> Result<Self> {
        let dims = (d_in, cfg.hidden, cfg.out);
        Ok(Self {
            text: Mlp::learnable(store, init, "heads.text", dims)?,
            numeric: (0..classes)
                .map(|i| Mlp::learnable(store, init, &format!("heads.numeric.{i}"), dims))
                .collect::<Result<Vec<_>>>()?,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.numeric.len()
    }

    /// `[classes, out]` from class text features `[classes, d]`.
    pub fn project_text(&self, class_features: &Tensor) -> Result<Tensor> {
        self.text.forward(class_features)
    }

    /// `[batch, classes, out]`: every class head applied to every numeric feature.
    pub fn project_numeric(&self, numeric: &Tensor) -> Result<Tensor> {
        let per = self.numeric.iter().map(|h| h.forward(numeric)).collect::<Result<Vec<_>>>()?;
        Ok(Tensor::stack(&per, 1)?)
    }

    /// `[batch, out]` projection of `numeric` by the head of `class`.
    pub fn project_numeric_with(&self, class: usize, numeric: &Tensor) -> Result<Tensor> {
        self.numeric
            .get(class)
            .ok_or_else(|| Error::OutOfRange(format!("class head {class}")))?
            .forward(numeric)
    }
}

/// Logits `[batch, classes]` of `cos(MLP_i(F^num), P^T_i) / tau`.
pub fn gp_logits(numeric: &Tensor, class_features: &Tensor, heads: &ProjectionHeads, tau: f64) -> Result<Tensor> {
    let classes = class_features.dim(0)?;
    if classes != heads.num_classes() {
        return Err(Error::shape("class features", heads.num_classes(), classes));
    }
    let pt = l2_normalize(&heads.project_text(class_features)?)?;
    let pn = l2_normalize(&heads.project_numeric(numeric)?)?;
    Ok((pn.broadcast_mul(&pt.unsqueeze(0)?)?.sum(D::Minus1)? / tau)?)
}

/// Cross-entropy of [`gp_logits`] against the labels, averaged over the batch.
pub fn gp_contrastive_loss(
    numeric: &Tensor,
    class_features: &Tensor,
    labels: &[usize],
    heads: &ProjectionHeads,
    tau: f64,
) -> Result<Tensor> {
    let logits = gp_logits(numeric, class_features, heads, tau)?;
    let (rows, classes) = logits.dims2()?;
    if rows == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    let idx = label_tensor(labels, rows, classes, &logits)?;
    let logp = crate::nn::log_softmax_last(&logits)?;
    Ok(logp.gather(&idx, 1)?.neg()?.mean_all()?)
}

pub fn total_loss(video_text: &Tensor, gp: Option<&Tensor>, omega: f64) -> Result<Tensor> {
    match gp {
        Some(g) if omega != 0.0 => Ok((video_text + g.affine(omega, 0.0)?)?),
        _ => Ok(video_text.clone()),
    }
}

/// Weight `|predicted - target| / 49,606` of the ordinal term.
pub fn ordinal_weight(predicted: u32, target: u32) -> f64 {
    (predicted as f64 - target as f64).abs() / ORDINAL_DENOMINATOR
}

/// Per-row `-log softmax(logits)[target]` for contiguous `[rows, vocab]` logits,
/// computed in one pass with a matching one-pass backward.
pub fn cross_entropy_rows(logits: &Tensor, targets: &[u32]) -> Result<Tensor> {
    let (rows, vocab) = logits.dims2()?;
    if targets.len() != rows {
        return Err(Error::shape("targets", rows, targets.len()));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t as usize >= vocab) {
        return Err(Error::OutOfRange(format!("target {bad} outside {vocab} logits")));
    }
    let logits = logits.contiguous()?;
    Ok(logits.apply_op1(RowCrossEntropy {
        targets: targets.to_vec(),
        probs: Mutex::new(None),
    })?)
}

/// Per-row ordinal cross-entropy: the cross-entropy scaled by the normalized
/// distance between the argmax id and the target number id. The weight is a
/// constant for backpropagation.
pub fn ordinal_ce(logits: &Tensor, targets: &[u32]) -> Result<Tensor> {
    if let Some(&bad) = targets.iter().find(|&&t| !is_number_token(t)) {
        return Err(Error::OutOfRange(format!("target {bad} is not a number token")));
    }
    let ce = cross_entropy_rows(logits, targets)?;
    let pred = logits.argmax(D::Minus1)?.to_vec1::<u32>()?;
    let w: Vec<f64> = pred.iter().zip(targets).map(|(&p, &t)| ordinal_weight(p, t)).collect();
    let w = Tensor::from_vec(w, targets.len(), logits.device())?.to_dtype(logits.dtype())?;
    Ok((ce * w)?)
}

/// Summary of one prefix-LM loss evaluation.
#[derive(Debug, Clone)]
pub struct LmLoss {
    /// Scalar training loss.
    pub loss: Tensor,
    pub ce: f64,
    pub ordinal: f64,
    pub positions: usize,
}

/// Token cross-entropy over every unmasked position plus the ordinal term at
/// number-token positions, both summed and divided by the number of positions.
///
/// `logits`: `[rows, vocab]`; `targets[r]` is `None` for ignored positions.
pub fn prefix_lm_loss(logits: &Tensor, targets: &[Option<u32>]) -> Result<LmLoss> {
    let (rows, _) = logits.dims2()?;
    if targets.len() != rows {
        return Err(Error::shape("targets", rows, targets.len()));
    }
    let keep: Vec<u32> = (0..rows as u32).filter(|&r| targets[r as usize].is_some()).collect();
    if keep.is_empty() {
        return Err(Error::Invalid("no target positions".into()));
    }
    let t: Vec<u32> = keep.iter().map(|&r| targets[r as usize].unwrap()).collect();
    let picked = if keep.len() == rows {
        logits.clone()
    } else {
        logits.index_select(&Tensor::from_vec(keep.clone(), keep.len(), logits.device())?, 0)?
    };
    let ce = cross_entropy_rows(&picked, &t)?;
    let pred = picked.argmax(D::Minus1)?.to_vec1::<u32>()?;
    let w: Vec<f64> = pred
        .iter()
        .zip(&t)
        .map(|(&p, &y)| if is_number_token(y) { ordinal_weight(p, y) } else { 0.0 })
        .collect();
    let w = Tensor::from_vec(w, t.len(), logits.device())?.to_dtype(logits.dtype())?;
    let ce_sum = ce.sum_all()?;
    let ord_sum = (&ce * &w)?.sum_all()?;
    let n = keep.len() as f64;
    let loss = ((&ce_sum + &ord_sum)? / n)?;
    Ok(LmLoss {
        ce: ce_sum.to_dtype(DType::F64)?.to_scalar::<f64>()? / n,
        ordinal: ord_sum.to_dtype(DType::F64)?.to_scalar::<f64>()? / n,
        loss,
        positions: keep.len(),
    })
}

fn contiguous<'a, T>(v: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&v[a..b]),
        None => candle_core::bail!("cross entropy requires contiguous input"),
    }
}

/// Element type of the cross-entropy kernels; `exp` runs at native precision.
trait Real: Copy {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
    fn exp_shifted(self, shift: f64) -> f64;
}

impl Real for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn exp_shifted(self, shift: f64) -> f64 {
        (self - shift as f32).exp() as f64
    }
}

impl Real for f64 {
    fn to_f64(self) -> f64 {
        self
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn exp_shifted(self, shift: f64) -> f64 {
        (self - shift).exp()
    }
}

/// Per-row `log-sum-exp - row[target]` and the row softmax, from a single
/// exponential pass.
fn softmax_rows<T: Real>(v: &[T], targets: &[u32], vocab: usize) -> (Vec<f64>, Vec<T>) {
    let mut nll = Vec::with_capacity(targets.len());
    let mut probs = Vec::with_capacity(v.len());
    for (r, &t) in targets.iter().enumerate() {
        let row = &v[r * vocab..(r + 1) * vocab];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.to_f64()));
        let start = probs.len();
        let mut sum = 0.0;
        for &x in row {
            let e = x.exp_shifted(max);
            sum += e;
            probs.push(T::from_f64(e));
        }
        let inv = 1.0 / sum;
        probs[start..].iter_mut().for_each(|p| *p = T::from_f64(p.to_f64() * inv));
        nll.push(max + sum.ln() - row[t as usize].to_f64());
    }
    (nll, probs)
}

/// `(softmax(row) - onehot(target)) * g_row`, in place over the softmax.
fn grad_from_probs<T: Real>(mut probs: Vec<T>, g: &[f64], targets: &[u32], vocab: usize) -> Vec<T> {
    for (r, &t) in targets.iter().enumerate() {
        let row = &mut probs[r * vocab..(r + 1) * vocab];
        row.iter_mut().for_each(|p| *p = T::from_f64(p.to_f64() * g[r]));
        row[t as usize] = T::from_f64(row[t as usize].to_f64() - g[r]);
    }
    probs
}

/// The forward pass keeps its softmax for the backward pass, which falls back
/// to recomputing it when the op is differentiated more than once.
struct RowCrossEntropy {
    targets: Vec<u32>,
    probs: Mutex<Option<CpuStorage>>,
}

impl CustomOp1 for RowCrossEntropy {
    fn name(&self) -> &'static str {
        "row-cross-entropy"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let (rows, vocab) = layout.shape().dims2()?;
        let (out, probs) = match storage {
            CpuStorage::F32(v) => {
                let (nll, p) = softmax_rows(contiguous(v, layout)?, &self.targets, vocab);
                (CpuStorage::F32(nll.into_iter().map(|x| x as f32).collect()), CpuStorage::F32(p))
            }
            CpuStorage::F64(v) => {
                let (nll, p) = softmax_rows(contiguous(v, layout)?, &self.targets, vocab);
                (CpuStorage::F64(nll), CpuStorage::F64(p))
            }
            _ => candle_core::bail!("cross entropy supports f32 and f64"),
        };
        *self.probs.lock().unwrap_or_else(|e| e.into_inner()) = Some(probs);
        Ok((out, Shape::from(rows)))
    }

    fn bwd(&self, arg: &Tensor, _res: &Tensor, grad_res: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let (_, vocab) = arg.dims2()?;
        let g = grad_res.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        let cached = self.probs.lock().unwrap_or_else(|e| e.into_inner()).take();
        let t = &self.targets;
        let grad = match (arg.dtype(), cached) {
            (DType::F32, Some(CpuStorage::F32(p))) => Tensor::from_vec(grad_from_probs(p, &g, t, vocab), arg.shape(), arg.device())?,
            (DType::F64, Some(CpuStorage::F64(p))) => Tensor::from_vec(grad_from_probs(p, &g, t, vocab), arg.shape(), arg.device())?,
            (DType::F32, _) => {
                let v = arg.flatten_all()?.to_vec1::<f32>()?;
                let (_, p) = softmax_rows(&v, t, vocab);
                Tensor::from_vec(grad_from_probs(p, &g, t, vocab), arg.shape(), arg.device())?
            }
            (DType::F64, _) => {
                let v = arg.flatten_all()?.to_vec1::<f64>()?;
                let (_, p) = softmax_rows(&v, t, vocab);
                Tensor::from_vec(grad_from_probs(p, &g, t, vocab), arg.shape(), arg.device())?
            }
            (other, _) => candle_core::bail!("cross entropy gradient does not support {other:?}"),
        };
        Ok(Some(grad))
    }
}
