//! Numeracy-preserving text embedding of gait parameters.
//!
//! A number `w` enters the frozen text encoder as the token vector `w * NUM`,
//! where `NUM` is a fixed unit vector orthogonal to every positional embedding
//! row. Each parameter clause contributes three tokens: the phrase feature, the
//! `is` token and the scaled `NUM` vector.

use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoders::{TextEncoder, TokenEmbeddingSequence, Tokenizer};
use crate::error::{Error, Result};
use crate::nn::{cosine_matrix, to_vec1_f64, to_vec2_f64};
use crate::param_corpus::{NumericSentence, Schema, NORM_RANGE};

const MAX_BASE_ATTEMPTS: u64 = 16;

/// Unit vector orthogonal to the span of the positional embedding rows.
#[derive(Debug, Clone)]
pub struct NumBase {
    values: Vec<f64>,
    tensor: Tensor,
}

/// Orthonormal basis of the row span, via modified Gram-Schmidt.
fn orthonormal_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for row in rows {
        let mut v = row.clone();
        for _ in 0..2 {
            for q in &basis {
                let d = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
            }
        }
        let n = norm(&v);
        if n > 1e-10 * norm(row).max(1e-300) {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl NumBase {
    /// Draws a seeded Gaussian vector and removes its component in the span of
    /// `positional` (`[rows, width]`), retrying with the next seed if the
    /// remainder collapses.
    pub fn build(positional: &Tensor, seed: u64) -> Result<Self> {
        let rows = to_vec2_f64(positional)?;
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if width <= rows.len() {
            return Err(Error::Invalid(format!(
                "width {width} must exceed the {} positional rows",
                rows.len()
            )));
        }
        let basis = orthonormal_rows(&rows);
        for attempt in 0..MAX_BASE_ATTEMPTS {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
            let mut v: Vec<f64> = (0..width).map(|_| StandardNormal.sample(&mut rng)).collect();
            for _ in 0..2 {
                for q in &basis {
                    let d = dot(&v, q);
                    v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
                }
            }
            let n = norm(&v);
            if n < 1e-8 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= n);
            let tensor = Tensor::from_vec(v.clone(), width, positional.device())?.to_dtype(positional.dtype())?;
            return Ok(Self { values: v, tensor });
        }
        Err(Error::Degenerate {
            name: "num base".into(),
            message: format!("projection collapsed for {MAX_BASE_ATTEMPTS} seeds"),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    /// `v * NUM`.
    pub fn embed_value(&self, v: f64) -> Result<Tensor> {
        if !v.is_finite() {
            return Err(Error::Invalid(format!("non-finite value {v}")));
        }
        Ok((&self.tensor * v)?)
    }
}

/// Feature of one parameter phrase under the frozen text encoder.
#[derive(Debug, Clone)]
pub struct PhraseEmbedding {
    pub param: usize,
    /// `[width]`
    pub vector: Tensor,
}

/// Builds numeric token sequences and their features for a fixed schema.
#[derive(Debug, Clone)]
pub struct NumericEmbedder {
    text: TextEncoder,
    tokenizer: Tokenizer,
    num: NumBase,
    is_token: Tensor,
    start_token: Tensor,
    end_token: Tensor,
    phrases: Vec<PhraseEmbedding>,
}

impl NumericEmbedder {
    pub fn new(text: &TextEncoder, tokenizer: &Tokenizer, schema: &Schema, num_seed: u64) -> Result<Self> {
        if text.config().embed_dim != text.config().width {
            return Err(Error::Config(
                "phrase features are used as tokens: embed_dim must equal the text width".into(),
            ));
        }
        let is_id = tokenizer
            .word_id("is")
            .ok_or_else(|| Error::Config("tokenizer has no `is` token".into()))?;
        let specials = text.embed_ids(&[is_id, tokenizer.start_id(), tokenizer.end_id()])?;
        let seqs = schema
            .parameters
            .iter()
            .map(|p| text.embed_tokens(&tokenizer.tokenize(&p.name)))
            .collect::<Result<Vec<_>>>()?;
        let feats = text.encode_batch(&seqs)?;
        let phrases = (0..schema.len())
            .map(|p| Ok(PhraseEmbedding { param: p, vector: feats.get(p)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            text: text.clone(),
            tokenizer: tokenizer.clone(),
            num: NumBase::build(text.positional_embedding(), num_seed)?,
            is_token: specials.get(0)?,
            start_token: specials.get(1)?,
            end_token: specials.get(2)?,
            phrases,
        })
    }

    pub fn num_base(&self) -> &NumBase {
        &self.num
    }

    pub fn is_token(&self) -> &Tensor {
        &self.is_token
    }

    pub fn phrase(&self, param: usize) -> Result<&PhraseEmbedding> {
        self.phrases
            .get(param)
            .ok_or_else(|| Error::OutOfRange(format!("parameter index {param}")))
    }

    /// Feature of an arbitrary phrase (not necessarily in the schema).
    pub fn phrase_feature(&self, phrase: &str) -> Result<Tensor> {
        self.text.encode_text_ids(&self.tokenizer.tokenize(phrase))
    }

    /// `[start] + (phrase, IS, value * NUM) per clause + [end]`, no connectors.
    pub fn compose_numeric_sequence(&self, phrases: &[&Tensor], values: &[f64]) -> Result<TokenEmbeddingSequence> {
        if phrases.is_empty() || phrases.len() != values.len() {
            return Err(Error::Invalid(format!(
                "need matching non-empty phrase/value lists ({} vs {})",
                phrases.len(),
                values.len()
            )));
        }
        let mut rows = Vec::with_capacity(2 + 3 * phrases.len());
        rows.push(self.start_token.clone());
        for (p, &v) in phrases.iter().zip(values) {
            if !(-NORM_RANGE..=NORM_RANGE).contains(&v) {
                return Err(Error::OutOfRange(format!("normalized value {v} outside [-2.5, 2.5]")));
            }
            rows.push((*p).clone());
            rows.push(self.is_token.clone());
            rows.push(self.num.embed_value(v)?);
        }
        rows.push(self.end_token.clone());
        TokenEmbeddingSequence::new(Tensor::stack(&rows, 0)?)
    }

    pub fn sequence_for(&self, sentence: &NumericSentence) -> Result<TokenEmbeddingSequence> {
        let phrases = sentence
            .items
            .iter()
            .map(|i| self.phrase(i.param).map(|p| &p.vector))
            .collect::<Result<Vec<_>>>()?;
        self.compose_numeric_sequence(&phrases, &sentence.values())
    }

    pub fn encode_numeric(&self, sentence: &NumericSentence) -> Result<Tensor> {
        self.text.encode_text_embeddings(&self.sequence_for(sentence)?)
    }

    /// `[n, embed_dim]`, evaluated in chunks.
    pub fn encode_numeric_batch(&self, sentences: &[NumericSentence]) -> Result<Tensor> {
        const CHUNK: usize = 64;
        if sentences.is_empty() {
            return Err(Error::Invalid("empty batch".into()));
        }
        let parts = sentences
            .chunks(CHUNK)
            .map(|chunk| {
                let seqs = chunk.iter().map(|s| self.sequence_for(s)).collect::<Result<Vec<_>>>()?;
                self.text.encode_batch(&seqs)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::cat(&parts, 0)?)
    }

    /// Similarity matrix of `"<template> is <v>"` over `grid` under a number scheme.
    pub fn diagnose_similarity(&self, scheme: NumberScheme, grid: &[f64], template: &str) -> Result<SimilarityReport> {
        if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("grid must be strictly ascending with at least 2 values".into()));
        }
        let (lo, hi) = (grid[0], grid[grid.len() - 1]);
        let unit = |v: f64| (v - lo) / (hi - lo);
        let seqs: Vec<TokenEmbeddingSequence> = match scheme {
            NumberScheme::DigitText => grid
                .iter()
                .map(|v| self.text.embed_tokens(&self.tokenizer.tokenize(&format!("{template} is {v}"))))
                .collect::<Result<_>>()?,
            NumberScheme::Positional | NumberScheme::NumBase => {
                let phrase = self.phrase_feature(template)?;
                let pos = self.text.positional_embedding();
                let rows = pos.dim(0)?;
                grid.iter()
                    .map(|&v| {
                        let slot = match scheme {
                            NumberScheme::NumBase => self.num.embed_value((2.0 * unit(v) - 1.0) * NORM_RANGE)?,
                            _ => pos.get((unit(v) * (rows - 1) as f64).round() as usize)?,
                        };
                        TokenEmbeddingSequence::new(Tensor::stack(
                            &[&self.start_token, &phrase, &self.is_token, &slot, &self.end_token],
                            0,
                        )?)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut feats = Vec::new();
        for chunk in seqs.chunks(64) {
            feats.push(self.text.encode_batch(chunk)?);
        }
        let feats = Tensor::cat(&feats, 0)?.to_dtype(DType::F64)?;
        let matrix = to_vec2_f64(&cosine_matrix(&feats, &feats)?)?;
        Ok(SimilarityReport::new(scheme, grid.to_vec(), matrix))
    }

    /// Features of several sentences as plain vectors (export helper).
    pub fn features_f64(&self, sentences: &[NumericSentence]) -> Result<Vec<Vec<f64>>> {
        to_vec2_f64(&self.encode_numeric_batch(sentences)?)
    }

    pub fn num_values(&self) -> Result<Vec<f64>> {
        to_vec1_f64(&self.num.tensor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumberScheme {
    /// The number is written out and tokenized digit by digit.
    DigitText,
    /// The number selects a positional-embedding row used as its token.
    Positional,
    /// `value * NUM`.
    NumBase,
}

impl NumberScheme {
    pub const ALL: [NumberScheme; 3] = [NumberScheme::DigitText, NumberScheme::Positional, NumberScheme::NumBase];

    pub fn name(self) -> &'static str {
        match self {
            NumberScheme::DigitText => "digit-text",
            NumberScheme::Positional => "positional",
            NumberScheme::NumBase => "num-base",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub scheme: NumberScheme,
    pub grid: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    /// Mean of `1 - sim(v_i, v_{i+1})`.
    pub mean_adjacent_dissimilarity: f64,
    pub max_adjacent_dissimilarity: f64,
    /// Fraction of anchors whose grid neighbours at distance 1 are at least as
    /// similar as the available anchors at distance 100 grid steps.
    pub continuity_fraction: f64,
}

impl SimilarityReport {
    fn new(scheme: NumberScheme, grid: Vec<f64>, matrix: Vec<Vec<f64>>) -> Self {
        let n = grid.len();
        let adj: Vec<f64> = (0..n - 1).map(|i| 1.0 - matrix[i][i + 1]).collect();
        let far = 100usize;
        let mut total = 0usize;
        let mut good = 0usize;
        for i in 0..n {
            let near: Vec<f64> = [i.checked_sub(1), Some(i + 1).filter(|&j| j < n)]
                .into_iter()
                .flatten()
                .map(|j| matrix[i][j])
                .collect();
            let distant: Vec<f64> = [i.checked_sub(far), Some(i + far).filter(|&j| j < n)]
                .into_iter()
                .flatten()
                .map(|j| matrix[i][j])
                .collect();
            if near.is_empty() || distant.is_empty() {
                continue;
            }
            total += 1;
            let near_min = near.iter().copied().fold(f64::INFINITY, f64::min);
            let far_max = distant.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if near_min >= far_max {
                good += 1;
            }
        }
        Self {
            scheme,
            mean_adjacent_dissimilarity: adj.iter().sum::<f64>() / adj.len() as f64,
            max_adjacent_dissimilarity: adj.iter().copied().fold(0.0, f64::max),
            continuity_fraction: if total == 0 { 0.0 } else { good as f64 / total as f64 },
            grid,
            matrix,
        }
    }

    /// CSV with the grid as header row and column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value");
        for v in &self.grid {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
        for (v, row) in self.grid.iter().zip(&self.matrix) {
            out.push_str(&format!("{v}"));
            for s in row {
                out.push_str(&format!(",{s:.6}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use candle_core::Device;

    #[test]
    fn base_is_orthogonal_unit_and_seeded() {
        let mut init = Init::new(5, DType::F32, &Device::Cpu);
        let pos = init.normal(&[77, 512], 0.01).unwrap();
        let a = NumBase::build(&pos, 11).unwrap();
        let b = NumBase::build(&pos, 11).unwrap();
        let c = NumBase::build(&pos, 12).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!((norm(a.values()) - 1.0).abs() < 1e-12);
        for row in to_vec2_f64(&pos).unwrap() {
            assert!(dot(&row, a.values()).abs() < 1e-12);
        }
    }

    #[test]
    fn base_needs_spare_dimensions() {
        let mut init = Init::new(5, DType::F64, &Device::Cpu);
        let pos = init.normal(&[8, 8], 1.0).unwrap();
        assert!(NumBase::build(&pos, 0).is_err());
    }

    #[test]
    fn dependent_rows_are_tolerated() {
        let mut init = Init::new(5, DType::F64, &Device::Cpu);
        let half = init.normal(&[4, 16], 1.0).unwrap();
        let pos = Tensor::cat(&[&half, &(&half * 2.0).unwrap()], 0).unwrap();
        let b = NumBase::build(&pos, 3).unwrap();
        for row in to_vec2_f64(&pos).unwrap() {
            assert!(dot(&row, b.values()).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_value_is_linear() {
        let mut init = Init::new(1, DType::F64, &Device::Cpu);
        let pos = init.normal(&[4, 16], 1.0).unwrap();
        let b = NumBase::build(&pos, 0).unwrap();
        let zero = to_vec1_f64(&b.embed_value(0.0).unwrap()).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let one = to_vec1_f64(&b.embed_value(1.5).unwrap()).unwrap();
        let two = to_vec1_f64(&b.embed_value(3.0).unwrap()).unwrap();
        for (x, y) in one.iter().zip(&two) {
            assert_eq!(2.0 * x, *y);
        }
        assert!((norm(&one) - 1.5).abs() < 1e-12);
        assert!(b.embed_value(f64::NAN).is_err());
    }
}
