//! Numeric-sentence corpora for the caption decoder, decoder checkpoints and
//! per-class description decoding.

use std::path::Path;

use candle_core::{DType, Device, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blob::{BlobReader, BlobWriter};
use crate::caption_decoder::{
    class_description, encode_target, is_number_token, token_to_value, CaptionDecoder, ClassDescription,
    DecoderConfig, DecoderCorpus, NumericBank,
};
use crate::encoders::Tokenizer;
use crate::error::{Error, Result};
use crate::harness::model::GaitModel;
use crate::nn::{Init, ParamStore};
use crate::numeric_embedding::NumericEmbedder;
use crate::param_corpus::{render_sentence, Combination, NormalizationStats, NumericSentence, ParameterRecord, Schema, NORM_RANGE};

/// Sentences with their encoded prefixes and target ids.
pub struct SentenceSet {
    pub sentences: Vec<NumericSentence>,
    pub corpus: DecoderCorpus,
}

/// `n` sentences of random `(record, combination)` pairs.
#[allow(clippy::too_many_arguments)]
pub fn build_sentence_set(
    embedder: &NumericEmbedder,
    tokenizer: &Tokenizer,
    schema: &Schema,
    stats: &NormalizationStats,
    combinations: &[Combination],
    records: &[ParameterRecord],
    n: usize,
    max_len: usize,
    seed: u64,
) -> Result<SentenceSet> {
    if records.is_empty() || combinations.is_empty() || n == 0 {
        return Err(Error::Invalid("sentence set needs records, combinations and n > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n)
        .map(|_| {
            let r = &records[rng.random_range(0..records.len())];
            let c = &combinations[rng.random_range(0..combinations.len())];
            render_sentence(c, r, schema, stats)
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = sentences
        .iter()
        .map(|s| encode_target(s, tokenizer, max_len))
        .collect::<Result<Vec<_>>>()?;
    let features = embedder.encode_numeric_batch(&sentences)?.detach();
    Ok(SentenceSet {
        sentences,
        corpus: DecoderCorpus::new(features, targets)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderEval {
    /// Fraction of target word tokens reproduced at their position.
    pub word_token_match: f64,
    /// Fraction of sentences whose word tokens are all reproduced.
    pub sentence_word_match: f64,
    /// Mean |decoded - true| normalized value over target numbers; a missing
    /// number counts as the full range.
    pub mean_value_error: f64,
    pub sentences: usize,
}

/// Greedy-decodes every prefix of `set` and scores it against its target.
pub fn evaluate_decoder(decoder: &CaptionDecoder, set: &SentenceSet, tokenizer: &Tokenizer) -> Result<DecoderEval> {
    let (mut words, mut word_hits, mut exact) = (0usize, 0usize, 0usize);
    let (mut nums, mut err) = (0usize, 0.0);
    for (i, (sentence, target)) in set.sentences.iter().zip(&set.corpus.targets).enumerate() {
        let decoded = decoder.decode_ids(&set.corpus.features.get(i)?, tokenizer.start_id(), tokenizer.end_id())?;
        let mut all = true;
        for (pos, &t) in target.iter().enumerate() {
            if !is_number_token(t) {
                words += 1;
                if decoded.get(pos) == Some(&t) {
                    word_hits += 1;
                } else {
                    all = false;
                }
            }
        }
        exact += all as usize;
        let got: Vec<u32> = decoded.iter().copied().filter(|&t| is_number_token(t)).collect();
        for (k, truth) in sentence.values().into_iter().enumerate() {
            nums += 1;
            err += match got.get(k) {
                Some(&t) => (token_to_value(t)? - truth).abs(),
                None => 2.0 * NORM_RANGE,
            };
        }
    }
    let n = set.sentences.len();
    Ok(DecoderEval {
        word_token_match: word_hits as f64 / words.max(1) as f64,
        sentence_word_match: exact as f64 / n.max(1) as f64,
        mean_value_error: err / nums.max(1) as f64,
        sentences: n,
    })
}

pub fn save_decoder(dir: impl AsRef<Path>, cfg: &DecoderConfig, store: &ParamStore) -> Result<()> {
    let mut w = BlobWriter::create(dir)?;
    w.meta("kind", "caption-decoder");
    w.meta("config", serde_json::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?);
    store.save_into(&mut w)?;
    w.finish()
}

pub fn load_decoder(dir: impl AsRef<Path>, device: &Device) -> Result<(CaptionDecoder, ParamStore)> {
    let r = BlobReader::open(dir)?;
    if r.meta("kind") != Some("caption-decoder") {
        return Err(Error::Invalid(format!("{} is not a decoder checkpoint", r.dir().display())));
    }
    let cfg: DecoderConfig = serde_json::from_str(r.meta("config").unwrap_or_default())
        .map_err(|e| Error::Config(format!("decoder config: {e}")))?;
    let mut store = ParamStore::new();
    let decoder = CaptionDecoder::new(&cfg, &mut store, &mut Init::new(0, DType::F32, device))?;
    store.load_from(&r)?;
    Ok((decoder, store))
}

/// First combination (in lexicographic order) that contains `param`.
pub fn combination_with(combinations: &[Combination], param: usize) -> Option<&Combination> {
    combinations.iter().find(|c| c.contains(param))
}

/// Bank of numeric features of `records` rendered with one combination.
pub fn build_bank(
    embedder: &NumericEmbedder,
    schema: &Schema,
    stats: &NormalizationStats,
    combination: &Combination,
    records: &[ParameterRecord],
    seed: u64,
) -> Result<NumericBank> {
    let sentences = records
        .iter()
        .map(|r| render_sentence(combination, r, schema, stats))
        .collect::<Result<Vec<_>>>()?;
    let features = embedder.encode_numeric_batch(&sentences)?.to_dtype(DType::F32)?.to_vec2::<f32>()?;
    let mut bank = NumericBank::new(NumericBank::DEFAULT_CAP, seed);
    for (f, r) in features.into_iter().zip(records) {
        bank.push(f, r.label);
    }
    Ok(bank)
}

/// Decodes one description per class from the model's class features and heads.
pub fn describe_classes(
    model: &GaitModel,
    decoder: &CaptionDecoder,
    bank: &NumericBank,
    tau: f64,
) -> Result<Vec<ClassDescription>> {
    let classes: Tensor = model.class_features()?.detach();
    (0..model.num_classes())
        .map(|c| class_description(c, &classes, &model.heads, bank, tau, decoder, &model.encoders.tokenizer))
        .collect()
}

/// A trained caption decoder with its held-out scores.
pub struct DecoderRun {
    pub decoder: CaptionDecoder,
    pub store: ParamStore,
    pub losses: Vec<f64>,
    pub eval: DecoderEval,
    pub stats: NormalizationStats,
    pub combinations: Vec<Combination>,
}

/// Trains the caption decoder on sentences sampled from the synthetic
/// parameter distributions and scores it on sentences of unseen records.
pub fn train_caption_decoder(
    config: &crate::harness::Config,
    encoders: &crate::encoders::FrozenEncoders,
    mut on_step: impl FnMut(usize, f64),
) -> Result<DecoderRun> {
    let spec = config.synthetic_spec()?;
    let exp = &config.experiment;
    let corpus_cfg = &config.decoder_corpus;
    let schema = spec.schema();
    let per_class = (corpus_cfg.sentences / (4 * spec.classes.len())).max(8);
    let records = crate::harness::synthetic::sample_records(&spec, per_class, corpus_cfg.seed)?;
    let held_records = crate::harness::synthetic::sample_records(&spec, per_class / 4 + 2, corpus_cfg.seed ^ 0x5eed)?;
    let stats = crate::param_corpus::fit_normalization(&records, schema.healthy_index()?, &schema)?;
    let combinations =
        crate::param_corpus::enumerate_combinations(&records, exp.combination_threshold, exp.combination_size)?;
    let embedder = NumericEmbedder::new(&encoders.text, &encoders.tokenizer, &schema, exp.num_seed)?;
    let max_len = config.decoder.max_len;
    let train_set = build_sentence_set(
        &embedder,
        &encoders.tokenizer,
        &schema,
        &stats,
        &combinations,
        &records,
        corpus_cfg.sentences,
        max_len,
        corpus_cfg.seed,
    )?;
    let held_out = build_sentence_set(
        &embedder,
        &encoders.tokenizer,
        &schema,
        &stats,
        &combinations,
        &held_records,
        corpus_cfg.held_out,
        max_len,
        corpus_cfg.seed.wrapping_add(1),
    )?;
    let device = encoders.text.device();
    let mut store = ParamStore::new();
    let mut init = Init::new(config.decoder_train.seed, DType::F32, device);
    let decoder = CaptionDecoder::new(&config.decoder, &mut store, &mut init)?;
    let features = train_set.corpus.features.to_dtype(DType::F32)?;
    let corpus = DecoderCorpus::new(features, train_set.corpus.targets.clone())?;
    let losses = crate::caption_decoder::train_decoder(&decoder, &store, &corpus, &config.decoder_train, |s, l| {
        on_step(s, l.loss.to_dtype(DType::F64).and_then(|t| t.to_scalar::<f64>()).unwrap_or(f64::NAN))
    })?;
    let eval = evaluate_decoder(&decoder, &held_out, &encoders.tokenizer)?;
    Ok(DecoderRun {
        decoder,
        store,
        losses,
        eval,
        stats,
        combinations,
    })
}
