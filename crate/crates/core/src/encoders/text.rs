use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::blob::{BlobReader, BlobWriter};
use crate::error::{Error, Result};
use crate::nn::{causal_mask, Block, Init, LayerNorm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextEncoderConfig {
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub context_length: usize,
    pub vocab_size: usize,
    /// Dimension of the shared latent space.
    pub embed_dim: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self {
            width: 512,
            depth: 4,
            heads: 8,
            context_length: 77,
            vocab_size: 49_408,
            embed_dim: 512,
        }
    }
}

/// Token-level inputs of the text transformer, before positional encoding.
#[derive(Debug, Clone)]
pub struct TokenEmbeddingSequence {
    /// `[len, width]`
    pub embeddings: Tensor,
    /// Position whose output is read as the sequence feature.
    pub end: usize,
}

impl TokenEmbeddingSequence {
    /// Wraps `embeddings` with the feature read at the last position.
    pub fn new(embeddings: Tensor) -> Result<Self> {
        let len = embeddings.dim(0)?;
        if len == 0 {
            return Err(Error::Invalid("empty token sequence".into()));
        }
        Ok(Self {
            embeddings,
            end: len - 1,
        })
    }

    pub fn len(&self) -> usize {
        self.embeddings.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Frozen causal text transformer with learned positional embeddings.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    cfg: TextEncoderConfig,
    token_embedding: Tensor,
    positional: Tensor,
    blocks: Vec<Block>,
    ln_final: LayerNorm,
    projection: Tensor,
}

impl TextEncoder {
    pub fn random(cfg: &TextEncoderConfig, init: &mut Init) -> Result<Self> {
        if cfg.width % cfg.heads != 0 {
            return Err(Error::Config("text width must be divisible by heads".into()));
        }
        let token_embedding = init.normal(&[cfg.vocab_size, cfg.width], 0.02)?;
        let positional = init.normal(&[cfg.context_length, cfg.width], 0.01)?;
        let blocks = (0..cfg.depth)
            .map(|_| Block::frozen(init, cfg.width, cfg.heads, cfg.depth))
            .collect::<Result<Vec<_>>>()?;
        let ln_final = LayerNorm::new(init, cfg.width)?;
        let projection = init.normal(&[cfg.width, cfg.embed_dim], (cfg.width as f64).powf(-0.5))?;
        Ok(Self {
            cfg: cfg.clone(),
            token_embedding,
            positional,
            blocks,
            ln_final,
            projection,
        })
    }

    pub fn config(&self) -> &TextEncoderConfig {
        &self.cfg
    }

    pub fn dtype(&self) -> DType {
        self.token_embedding.dtype()
    }

    pub fn device(&self) -> &Device {
        self.token_embedding.device()
    }

    /// `[context_length, width]`
    pub fn positional_embedding(&self) -> &Tensor {
        &self.positional
    }

    /// Vocabulary embedding rows, without positional encoding.
    pub fn embed_tokens(&self, ids: &[u32]) -> Result<TokenEmbeddingSequence> {
        TokenEmbeddingSequence::new(self.embed_ids(ids)?)
    }

    /// `[len, width]` rows of the vocabulary embedding.
    pub fn embed_ids(&self, ids: &[u32]) -> Result<Tensor> {
        if let Some(&bad) = ids.iter().find(|&&id| id as usize >= self.cfg.vocab_size) {
            return Err(Error::OutOfRange(format!(
                "token id {bad} outside vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        let idx = Tensor::from_vec(ids.to_vec(), ids.len(), self.device())?;
        Ok(self.token_embedding.index_select(&idx, 0)?)
    }

    pub fn encode_text_ids(&self, ids: &[u32]) -> Result<Tensor> {
        self.encode_text_embeddings(&self.embed_tokens(ids)?)
    }

    /// Feature `[embed_dim]` of one (possibly prompt-injected) sequence.
    pub fn encode_text_embeddings(&self, seq: &TokenEmbeddingSequence) -> Result<Tensor> {
        let x = seq.embeddings.unsqueeze(0)?;
        Ok(self.encode_padded(&x, &[seq.end])?.squeeze(0)?)
    }

    /// Batched variant: sequences are right-padded with zeros. The causal mask
    /// keeps padding from influencing the end positions.
    pub fn encode_batch(&self, seqs: &[TokenEmbeddingSequence]) -> Result<Tensor> {
        if seqs.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let max_len = seqs.iter().map(|s| s.len()).max().unwrap();
        let padded = seqs
            .iter()
            .map(|s| {
                let pad = max_len - s.len();
                if pad == 0 {
                    Ok(s.embeddings.clone())
                } else {
                    Ok(s.embeddings.pad_with_zeros(0, 0, pad)?)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let ends: Vec<usize> = seqs.iter().map(|s| s.end).collect();
        self.encode_padded(&Tensor::stack(&padded, 0)?, &ends)
    }

    /// `x`: `[n, len, width]` token embeddings; returns `[n, embed_dim]`.
    pub fn encode_padded(&self, x: &Tensor, ends: &[usize]) -> Result<Tensor> {
        let (n, len, width) = x.dims3()?;
        if width != self.cfg.width {
            return Err(Error::shape("text token width", self.cfg.width, width));
        }
        if len > self.cfg.context_length {
            return Err(Error::ContextOverflow {
                len,
                max: self.cfg.context_length,
                context: None,
            });
        }
        if ends.len() != n || ends.iter().any(|&e| e >= len) {
            return Err(Error::Invalid("end position outside sequence".into()));
        }
        let mut h = x.broadcast_add(&self.positional.narrow(0, 0, len)?)?;
        let mask = causal_mask(len, h.dtype(), h.device())?;
        for block in &self.blocks {
            h = block.forward(&h, Some(&mask))?;
        }
        let flat = h.reshape((n * len, width))?;
        let idx: Vec<u32> = ends
            .iter()
            .enumerate()
            .map(|(i, &e)| (i * len + e) as u32)
            .collect();
        let picked = flat.index_select(&Tensor::from_vec(idx, n, h.device())?, 0)?;
        Ok(self.ln_final.forward(&picked)?.matmul(&self.projection)?)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.token_embedding, &self.positional];
        for b in &self.blocks {
            v.extend(b.tensors());
        }
        v.extend(self.ln_final.tensors());
        v.push(&self.projection);
        v
    }

    pub fn save_into(&self, w: &mut BlobWriter) -> Result<()> {
        w.add_tensor("text.token_embedding", &self.token_embedding)?;
        w.add_tensor("text.positional", &self.positional)?;
        for (i, b) in self.blocks.iter().enumerate() {
            b.save_into(w, &format!("text.blocks.{i}"))?;
        }
        self.ln_final.save_into(w, "text.ln_final")?;
        w.add_tensor("text.projection", &self.projection)
    }

    pub fn load(r: &BlobReader, cfg: &TextEncoderConfig, dtype: DType, dev: &Device) -> Result<Self> {
        let w = cfg.width;
        Ok(Self {
            cfg: cfg.clone(),
            token_embedding: r.tensor("text.token_embedding", Some(&[cfg.vocab_size, w]), dtype, dev)?,
            positional: r.tensor("text.positional", Some(&[cfg.context_length, w]), dtype, dev)?,
            blocks: (0..cfg.depth)
                .map(|i| Block::load(r, &format!("text.blocks.{i}"), w, cfg.heads, dtype, dev))
                .collect::<Result<Vec<_>>>()?,
            ln_final: LayerNorm::load(r, "text.ln_final", w, dtype, dev)?,
            projection: r.tensor("text.projection", Some(&[w, cfg.embed_dim]), dtype, dev)?,
        })
    }
}
