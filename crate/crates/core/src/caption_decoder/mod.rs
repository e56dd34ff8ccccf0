//! Prefix-conditioned transformer decoder that turns a numeric text feature
//! back into a gait-parameter sentence over the extended vocabulary.

pub mod vocab;

use candle_core::{DType, Device, Tensor, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::Tokenizer;
use crate::error::{Error, Result};
use crate::nn::{causal_mask, l2_normalize, scalar, softmax_last, to_vec1_f64, Block, Init, KvCache, LayerNorm, Linear, ParamStore};
use crate::objectives::{prefix_lm_loss, LmLoss, ProjectionHeads};
use crate::optim::{OptimConfig, Optimizer};
use crate::param_corpus::NumericSentence;

pub use vocab::{is_number_token, token_to_value, value_to_token, EXTENDED_VOCAB};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    /// Maximum id-sequence length, start and end included.
    pub max_len: usize,
    pub prefix_dim: usize,
    /// Rank of the tied input/output token embedding.
    pub embed_rank: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            width: 256,
            heads: 4,
            max_len: 64,
            prefix_dim: 512,
            embed_rank: 32,
        }
    }
}

/// Decoder parameters. Every tensor is registered in the caller's store.
#[derive(Debug, Clone)]
pub struct CaptionDecoder {
    cfg: DecoderConfig,
    /// `[vocab, rank]`, shared by the input embedding and the output layer.
    embed: Tensor,
    up: Linear,
    down: Linear,
    prefix: Linear,
    positional: Tensor,
    blocks: Vec<Block>,
    ln: LayerNorm,
}

/// Frequencies of the number-token curve.
const NUMBER_HARMONICS: usize = 4;
const NUMBER_AMPLITUDE: f64 = 0.05;

/// Token table `[vocab, rank]`: Gaussian rows for words, and number rows on a
/// smooth curve `(cos(pi k u), sin(pi k u)) / k` of the scale position `u` in the
/// leading dimensions, so neighbouring values start out with similar logits.
fn token_table(init: &mut Init, rank: usize) -> Result<Tensor> {
    let mut values = init.normal_vec(EXTENDED_VOCAB * rank, 0.02);
    let first = vocab::FIRST_NUMBER_ID as usize;
    let steps = vocab::NUM_STEPS as usize;
    for s in 0..steps {
        let u = s as f64 / (steps - 1) as f64;
        let row = &mut values[(first + s) * rank..(first + s + 1) * rank];
        for k in 1..=NUMBER_HARMONICS.min(rank / 2) {
            let angle = std::f64::consts::PI * k as f64 * u;
            row[2 * k - 2] = NUMBER_AMPLITUDE * angle.cos() / k as f64;
            row[2 * k - 1] = NUMBER_AMPLITUDE * angle.sin() / k as f64;
        }
    }
    init.from_f64(values, &[EXTENDED_VOCAB, rank])
}

impl CaptionDecoder {
    pub fn new(cfg: &DecoderConfig, store: &mut ParamStore, init: &mut Init) -> Result<Self> {
        if cfg.width % cfg.heads != 0 || cfg.max_len < 2 || cfg.layers == 0 {
            return Err(Error::Config("invalid decoder shape".into()));
        }
        let (w, r) = (cfg.width, cfg.embed_rank);
        let ln = LayerNorm::new(init, w)?;
        Ok(Self {
            cfg: cfg.clone(),
            embed: store.learnable("decoder.embed", token_table(init, r)?)?,
            up: Linear::learnable(store, init, "decoder.up", r, w)?,
            down: Linear::learnable(store, init, "decoder.down", w, r)?,
            prefix: Linear::learnable(store, init, "decoder.prefix", cfg.prefix_dim, w)?,
            positional: store.learnable("decoder.positional", init.normal(&[cfg.max_len, w], 0.01)?)?,
            blocks: (0..cfg.layers)
                .map(|l| Block::learnable(store, init, &format!("decoder.blocks.{l}"), w, cfg.heads, cfg.layers))
                .collect::<Result<Vec<_>>>()?,
            ln: LayerNorm {
                gamma: store.learnable("decoder.ln.gamma", ln.gamma)?,
                beta: store.learnable("decoder.ln.beta", ln.beta)?,
                eps: ln.eps,
            },
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.cfg
    }

    fn device(&self) -> &Device {
        self.embed.device()
    }

    fn dtype(&self) -> DType {
        self.embed.dtype()
    }

    fn embed_ids(&self, ids: &[u32]) -> Result<Tensor> {
        let idx = Tensor::from_vec(ids.to_vec(), ids.len(), self.device())?;
        self.up.forward(&self.embed.index_select(&idx, 0)?)
    }

    /// Logits `[rows, vocab]` of hidden states `[rows, width]`.
    pub fn logits(&self, hidden: &Tensor) -> Result<Tensor> {
        let low = self.down.forward(&self.ln.forward(hidden)?)?;
        Ok(low.matmul(&self.embed.t()?)?)
    }

    /// Hidden states `[batch, len, width]` of `[prefix, inputs...]`; inputs are
    /// right-padded to a common length.
    fn hidden(&self, prefix: &Tensor, inputs: &[&[u32]]) -> Result<Tensor> {
        let b = inputs.len();
        let longest = inputs.iter().map(|i| i.len()).max().unwrap_or(0);
        let len = longest + 1;
        if len > self.cfg.max_len {
            return Err(Error::ContextOverflow {
                len,
                max: self.cfg.max_len,
                context: Some("decoder input".into()),
            });
        }
        let mut ids = Vec::with_capacity(b * longest);
        for i in inputs {
            ids.extend_from_slice(i);
            ids.extend(std::iter::repeat_n(0, longest - i.len()));
        }
        let w = self.cfg.width;
        let p = self.prefix.forward(prefix)?.unsqueeze(1)?;
        let x = if longest > 0 {
            let tok = self.embed_ids(&ids)?.reshape((b, longest, w))?;
            Tensor::cat(&[&p, &tok], 1)?
        } else {
            p
        };
        let mut h = x.broadcast_add(&self.positional.narrow(0, 0, len)?)?;
        let mask = causal_mask(len, self.dtype(), self.device())?;
        for block in &self.blocks {
            h = block.forward(&h, Some(&mask))?;
        }
        Ok(h)
    }

    /// Teacher-forced loss of full target sequences (`[start, ..., end]`)
    /// given prefixes `[batch, prefix_dim]`.
    pub fn lm_loss(&self, prefix: &Tensor, targets: &[Vec<u32>]) -> Result<LmLoss> {
        if targets.is_empty() || targets.iter().any(|t| t.len() < 2) {
            return Err(Error::Invalid("targets need a start and at least one more id".into()));
        }
        let inputs: Vec<&[u32]> = targets.iter().map(|t| &t[..t.len() - 1]).collect();
        let h = self.hidden(prefix, &inputs)?;
        let (b, len, w) = h.dims3()?;
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for (i, t) in targets.iter().enumerate() {
            for j in 1..t.len() {
                rows.push((i * len + j) as u32);
                ys.push(Some(t[j]));
            }
        }
        let flat = h.reshape((b * len, w))?;
        let picked = flat.index_select(&Tensor::from_vec(rows, ys.len(), self.device())?, 0)?;
        prefix_lm_loss(&self.logits(&picked)?, &ys)
    }

    /// Greedy decoding from one prefix `[prefix_dim]`; returns ids starting with
    /// `start_id` and ending at the first `end_id` or the length limit.
    pub fn decode_ids(&self, prefix: &Tensor, start_id: u32, end_id: u32) -> Result<Vec<u32>> {
        let p = self.prefix.forward(&prefix.unsqueeze(0)?)?;
        let first = Tensor::cat(&[&p, &self.embed_ids(&[start_id])?], 0)?;
        let mut x = first.broadcast_add(&self.positional.narrow(0, 0, 2)?)?.unsqueeze(0)?;
        let mut caches = vec![KvCache::default(); self.blocks.len()];
        let mut ids = vec![start_id];
        loop {
            let mut h = x;
            for (block, cache) in self.blocks.iter().zip(caches.iter_mut()) {
                h = block.forward_cached(&h, cache)?;
            }
            let last = h.narrow(1, h.dim(1)? - 1, 1)?.squeeze(1)?;
            let next = self.logits(&last)?.argmax(D::Minus1)?.to_vec1::<u32>()?[0];
            ids.push(next);
            // positions used so far: prefix plus every id
            if next == end_id || ids.len() >= self.cfg.max_len {
                break;
            }
            let pos = ids.len();
            x = self
                .embed_ids(&[next])?
                .broadcast_add(&self.positional.narrow(0, pos, 1)?)?
                .unsqueeze(0)?;
        }
        Ok(ids)
    }
}

/// Id sequence `[start] + (phrase, is, number) joined by "and" + [end]`.
pub fn encode_target(sentence: &NumericSentence, tokenizer: &Tokenizer, max_len: usize) -> Result<Vec<u32>> {
    let is_id = word(tokenizer, "is")?;
    let and_id = word(tokenizer, "and")?;
    let mut ids = vec![tokenizer.start_id()];
    for (k, item) in sentence.items.iter().enumerate() {
        if k > 0 {
            ids.push(and_id);
        }
        ids.extend(tokenizer.encode_pieces(&item.phrase));
        ids.push(is_id);
        ids.push(value_to_token(item.value)?);
    }
    ids.push(tokenizer.end_id());
    if ids.len() > max_len {
        return Err(Error::ContextOverflow {
            len: ids.len(),
            max: max_len,
            context: Some(format!("target for `{}`", sentence.text)),
        });
    }
    Ok(ids)
}

fn word(tokenizer: &Tokenizer, w: &str) -> Result<u32> {
    tokenizer
        .word_id(w)
        .ok_or_else(|| Error::Config(format!("tokenizer has no `{w}` token")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSentence {
    pub ids: Vec<u32>,
    pub text: String,
    /// Parsed `(phrase, normalized value)` clauses.
    pub items: Vec<(String, f64)>,
    pub warning: Option<String>,
}

impl DecodedSentence {
    pub fn value_of(&self, phrase: &str) -> Option<f64> {
        self.items.iter().find(|(p, _)| p == phrase).map(|(_, v)| *v)
    }
}

/// Renders and parses decoded ids. Unparseable clauses produce a warning
/// carrying the raw id dump.
pub fn parse_decoded(ids: &[u32], tokenizer: &Tokenizer) -> Result<DecodedSentence> {
    let is_id = word(tokenizer, "is")?;
    let and_id = word(tokenizer, "and")?;
    let body: Vec<u32> = ids
        .iter()
        .copied()
        .filter(|&i| i != tokenizer.start_id() && i != tokenizer.end_id())
        .collect();
    let mut text_parts = Vec::new();
    let mut run = Vec::new();
    for &id in &body {
        if vocab::is_number_token(id) {
            if !run.is_empty() {
                text_parts.push(tokenizer.decode(&run));
                run.clear();
            }
            text_parts.push(format!("{:.2}", token_to_value(id)?));
        } else {
            run.push(id);
        }
    }
    if !run.is_empty() {
        text_parts.push(tokenizer.decode(&run));
    }
    let mut items = Vec::new();
    let mut bad = false;
    for clause in body.split(|&i| i == and_id) {
        match clause {
            [phrase @ .., is, num] if *is == is_id && vocab::is_number_token(*num) && !phrase.is_empty() => {
                items.push((tokenizer.decode(phrase), token_to_value(*num)?));
            }
            _ => bad = true,
        }
    }
    let ended = ids.last() == Some(&tokenizer.end_id());
    let warning = (bad || !ended).then(|| format!("unparseable decoder output; raw ids {body:?}"));
    Ok(DecodedSentence {
        ids: ids.to_vec(),
        text: text_parts.join(" "),
        items,
        warning,
    })
}

pub fn decode_greedy(decoder: &CaptionDecoder, prefix: &Tensor, tokenizer: &Tokenizer) -> Result<DecodedSentence> {
    let ids = decoder.decode_ids(prefix, tokenizer.start_id(), tokenizer.end_id())?;
    parse_decoded(&ids, tokenizer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderTrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub optim: OptimConfig,
    pub seed: u64,
}

impl Default for DecoderTrainConfig {
    fn default() -> Self {
        Self {
            steps: 3000,
            batch: 16,
            optim: OptimConfig {
                lr: 1e-3,
                weight_decay: 0.01,
                warmup_steps: 50,
                final_lr_fraction: 0.05,
                lr_scales: Vec::new(),
            },
            seed: 0,
        }
    }
}

/// Paired prefixes `[n, prefix_dim]` and target id sequences.
#[derive(Debug, Clone)]
pub struct DecoderCorpus {
    pub features: Tensor,
    pub targets: Vec<Vec<u32>>,
}

impl DecoderCorpus {
    pub fn new(features: Tensor, targets: Vec<Vec<u32>>) -> Result<Self> {
        let n = features.dim(0)?;
        if n == 0 || n != targets.len() {
            return Err(Error::Invalid(format!("corpus has {n} features for {} targets", targets.len())));
        }
        Ok(Self { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Vec<Vec<u32>>)> {
        let i: Vec<u32> = idx.iter().map(|&i| i as u32).collect();
        let f = self
            .features
            .index_select(&Tensor::from_vec(i, idx.len(), self.features.device())?, 0)?;
        Ok((f, idx.iter().map(|&i| self.targets[i].clone()).collect()))
    }
}

/// Trains every variable in `store` on random batches; `on_step` sees each
/// step's loss. Returns the per-step loss values.
pub fn train_decoder(
    decoder: &CaptionDecoder,
    store: &ParamStore,
    corpus: &DecoderCorpus,
    cfg: &DecoderTrainConfig,
    mut on_step: impl FnMut(usize, &LmLoss),
) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Invalid("empty decoder corpus".into()));
    }
    let mut opt = Optimizer::new(store, &cfg.optim, cfg.steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut idx = Vec::with_capacity(cfg.batch);
        while idx.len() < cfg.batch.min(corpus.len()) {
            if order.is_empty() {
                order = (0..corpus.len()).collect();
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
            }
            idx.push(order.pop().unwrap());
        }
        let (f, t) = corpus.batch(&idx)?;
        let l = decoder.lm_loss(&f, &t)?;
        let value = scalar(&l.loss)?;
        if !value.is_finite() {
            return Err(Error::Diverged(format!("decoder loss {value} at step {step}")));
        }
        opt.backward_step(&l.loss)?;
        on_step(step, &l);
        losses.push(value);
    }
    Ok(losses)
}

/// Numeric features collected from training samples, capped by reservoir sampling.
#[derive(Debug, Clone)]
pub struct NumericBank {
    cap: usize,
    seen: usize,
    rng: ChaCha8Rng,
    rows: Vec<Vec<f32>>,
    labels: Vec<usize>,
}

impl NumericBank {
    pub const DEFAULT_CAP: usize = 4096;

    pub fn new(cap: usize, seed: u64) -> Self {
        Self {
            cap: cap.max(1),
            seen: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            rows: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, feature: Vec<f32>, label: usize) {
        self.seen += 1;
        if self.rows.len() < self.cap {
            self.rows.push(feature);
            self.labels.push(label);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if j < self.cap {
                self.rows[j] = feature;
                self.labels[j] = label;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn count_for(&self, label: usize) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let d = self.rows.first().map(Vec::len).ok_or_else(|| Error::Invalid("empty bank".into()))?;
        let flat: Vec<f32> = self.rows.iter().flatten().copied().collect();
        Ok(Tensor::from_vec(flat, (self.rows.len(), d), device)?.to_dtype(dtype)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDescription {
    pub class: usize,
    pub weights: Vec<f64>,
    pub sentence: DecodedSentence,
}

/// Bank combination `sum_j w_j F^num_j` with `w = softmax(cos(P^T_i, MLP_i(F^num_j)) / tau)`.
pub fn class_prefix(
    class: usize,
    class_features: &Tensor,
    heads: &ProjectionHeads,
    bank: &Tensor,
    tau: f64,
) -> Result<(Tensor, Vec<f64>)> {
    if bank.dim(0)? == 0 {
        return Err(Error::Invalid("empty numeric bank".into()));
    }
    let pt = l2_normalize(&heads.project_text(&class_features.get(class)?.unsqueeze(0)?)?)?;
    let pn = l2_normalize(&heads.project_numeric_with(class, bank)?)?;
    let sims = pn.matmul(&pt.t()?)?.squeeze(1)?;
    let w = softmax_last(&(sims / tau)?)?;
    let prefix = w.unsqueeze(0)?.matmul(bank)?.squeeze(0)?;
    Ok((prefix, to_vec1_f64(&w)?))
}

#[allow(clippy::too_many_arguments)]
pub fn class_description(
    class: usize,
    class_features: &Tensor,
    heads: &ProjectionHeads,
    bank: &NumericBank,
    tau: f64,
    decoder: &CaptionDecoder,
    tokenizer: &Tokenizer,
) -> Result<ClassDescription> {
    let bank_t = bank.to_tensor(class_features.dtype(), class_features.device())?;
    let (prefix, weights) = class_prefix(class, class_features, heads, &bank_t, tau)?;
    Ok(ClassDescription {
        class,
        weights,
        sentence: decode_greedy(decoder, &prefix, tokenizer)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::to_vec2_f64;
    use crate::param_corpus::SentenceItem;

    fn sentence(items: &[(&str, f64)]) -> NumericSentence {
        NumericSentence {
            items: items
                .iter()
                .enumerate()
                .map(|(i, &(p, v))| SentenceItem {
                    param: i,
                    phrase: p.to_string(),
                    value: v,
                    display: format!("{v:.1}"),
                })
                .collect(),
            text: String::new(),
            label: 0,
        }
    }

    fn tiny_cfg() -> DecoderConfig {
        DecoderConfig {
            layers: 2,
            width: 32,
            heads: 2,
            max_len: 24,
            prefix_dim: 8,
            embed_rank: 8,
        }
    }

    #[test]
    fn target_has_numbers_and_connectors() {
        let tok = Tokenizer::new();
        let s = sentence(&[
            ("the walking speed", 0.3),
            ("the cadence", -1.0),
            ("the step length", 2.5),
            ("the swing time", -2.5),
        ]);
        let ids = encode_target(&s, &tok, 64).unwrap();
        assert_eq!(ids.iter().filter(|&&i| vocab::is_number_token(i)).count(), 4);
        assert_eq!(ids.iter().filter(|&&i| i == tok.word_id("and").unwrap()).count(), 3);
        assert_eq!(ids[0], tok.start_id());
        assert_eq!(*ids.last().unwrap(), tok.end_id());
        let parsed = parse_decoded(&ids, &tok).unwrap();
        assert!(parsed.warning.is_none());
        assert_eq!(parsed.items.len(), 4);
        assert_eq!(parsed.items[0].0, "the walking speed");
        assert!((parsed.value_of("the step length").unwrap() - 2.5).abs() < 1e-12);
        assert!(encode_target(&s, &tok, 10).is_err());
    }

    #[test]
    fn malformed_output_warns() {
        let tok = Tokenizer::new();
        let ids = vec![tok.start_id(), tok.word_id("the").unwrap(), 49_500];
        let p = parse_decoded(&ids, &tok).unwrap();
        assert!(p.warning.is_some());
        assert!(p.items.is_empty());
    }

    #[test]
    fn cached_decoding_matches_full_forward() {
        let mut store = ParamStore::new();
        let mut init = Init::new(1, DType::F64, &Device::Cpu);
        let dec = CaptionDecoder::new(&tiny_cfg(), &mut store, &mut init).unwrap();
        let prefix = init.normal(&[8], 1.0).unwrap();
        let ids = dec.decode_ids(&prefix, 49_406, 49_407).unwrap();
        assert!(ids.len() <= 24);
        // re-run without the cache: argmax at each position must reproduce the ids
        let h = dec.hidden(&prefix.unsqueeze(0).unwrap(), &[&ids[..ids.len() - 1]]).unwrap();
        let logits = dec.logits(&h.squeeze(0).unwrap()).unwrap();
        let arg = logits.argmax(D::Minus1).unwrap().to_vec1::<u32>().unwrap();
        assert_eq!(&arg[1..], &ids[1..]);
    }

    #[test]
    fn overfits_one_pair() {
        let tok = Tokenizer::new();
        let mut store = ParamStore::new();
        let mut init = Init::new(2, DType::F32, &Device::Cpu);
        let dec = CaptionDecoder::new(&tiny_cfg(), &mut store, &mut init).unwrap();
        let target = encode_target(&sentence(&[("the cadence", 1.2)]), &tok, 24).unwrap();
        let corpus = DecoderCorpus::new(init.normal(&[1, 8], 1.0).unwrap(), vec![target.clone()]).unwrap();
        let cfg = DecoderTrainConfig {
            steps: 500,
            batch: 1,
            optim: OptimConfig {
                lr: 3e-3,
                weight_decay: 0.0,
                warmup_steps: 0,
                final_lr_fraction: 0.1,
                lr_scales: Vec::new(),
            },
            seed: 0,
        };
        let losses = train_decoder(&dec, &store, &corpus, &cfg, |_, _| {}).unwrap();
        assert!(*losses.last().unwrap() < 0.01, "final loss {}", losses.last().unwrap());
        let out = decode_greedy(&dec, &corpus.features.get(0).unwrap(), &tok).unwrap();
        assert_eq!(out.ids, target);
    }

    #[test]
    fn bank_reservoir_and_singleton_prefix() {
        let mut bank = NumericBank::new(3, 0);
        for i in 0..10 {
            bank.push(vec![i as f32 + 1.0; 4], i % 2);
        }
        assert_eq!(bank.len(), 3);
        let mut store = ParamStore::new();
        let mut init = Init::new(0, DType::F64, &Device::Cpu);
        let heads = ProjectionHeads::new(&crate::objectives::HeadConfig { hidden: 6, out: 5 }, 4, 2, &mut store, &mut init)
            .unwrap();
        let classes = init.normal(&[2, 4], 1.0).unwrap();
        let one = init.normal(&[1, 4], 1.0).unwrap();
        let (p, w) = class_prefix(1, &classes, &heads, &one, 0.01).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(to_vec1_f64(&p).unwrap(), to_vec2_f64(&one).unwrap()[0]);
        let many = bank.to_tensor(DType::F64, &Device::Cpu).unwrap();
        let (_, w) = class_prefix(0, &classes, &heads, &many, 0.01).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{w:?}");
        let empty = Tensor::zeros((0, 4), DType::F64, &Device::Cpu).unwrap();
        assert!(class_prefix(0, &classes, &heads, &empty, 0.01).is_err());
    }
}
