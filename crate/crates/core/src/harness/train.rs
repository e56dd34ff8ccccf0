//! Training loop, validation and per-fold bookkeeping.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use candle_core::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::FrozenEncoders;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::dataset::Dataset;
use crate::harness::folds::Fold;
use crate::harness::metrics::{class_metrics, ClassMetrics};
use crate::harness::model::{GaitModel, NumericFit, VideoPrediction};
use crate::nn::scalar;
use crate::numeric_embedding::NumericEmbedder;
use crate::objectives::{gp_contrastive_loss, total_loss, video_text_loss};
use crate::optim::Optimizer;
use crate::param_corpus::{enumerate_combinations, fit_normalization, render_sentence, NumericSentence, ParameterRecord};
use crate::video_branch::{sliding_windows, window_frames, FrameSequence, WindowMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub fold: usize,
    pub epoch: usize,
    pub configuration: String,
    pub loss: f64,
    pub video_text_loss: f64,
    pub gp_loss: f64,
    pub lr: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub label: usize,
    pub prediction: VideoPrediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: ClassMetrics,
    pub predictions: Vec<ClipPrediction>,
}

pub struct TrainOutcome {
    /// Holds the best-by-validation weights.
    pub model: GaitModel,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best: EvalReport,
    /// Number of parameter-text loss evaluations.
    pub gp_calls: usize,
    pub checksum_start: String,
    pub checksum_end: String,
    pub train_clips: Vec<usize>,
    pub val_clips: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Receives `metrics.jsonl` and the best checkpoint under `checkpoint/`.
    pub out_dir: Option<PathBuf>,
    pub fold_index: usize,
}

/// Per-video evaluation of `clips` under the model's eval windowing.
pub fn evaluate(model: &GaitModel, dataset: &Dataset, clips: &[usize]) -> Result<EvalReport> {
    check_classes(model, dataset)?;
    let classes = model.class_features()?.detach();
    let predictions = clips
        .iter()
        .map(|&i| {
            let clip = &dataset.clips[i];
            Ok(ClipPrediction {
                clip_id: clip.id.clone(),
                label: clip.label,
                prediction: model.classify_with(&clip.video, &classes)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = predictions.iter().map(|p| p.label).collect();
    let predicted: Vec<usize> = predictions.iter().map(|p| p.prediction.class).collect();
    Ok(EvalReport {
        metrics: class_metrics(&truth, &predicted, model.num_classes())?,
        predictions,
    })
}

fn check_classes(model: &GaitModel, dataset: &Dataset) -> Result<()> {
    if dataset.schema.classes != model.class_names() {
        return Err(Error::Config(format!(
            "dataset classes {:?} do not match model classes {:?}",
            dataset.schema.classes,
            model.class_names()
        )));
    }
    Ok(())
}

/// Cached numeric features of the training records: `per_record` sentences each.
pub struct NumericCache {
    pub fit: NumericFit,
    pub sentences: Vec<NumericSentence>,
    /// `[records * per_record, embed]`
    pub features: Tensor,
    pub per_record: usize,
}

/// Fits normalization and combinations on `records` and encodes sampled sentences.
pub fn build_numeric_cache(
    embedder: &NumericEmbedder,
    dataset: &Dataset,
    records: &[ParameterRecord],
    config: &ExperimentConfig,
) -> Result<NumericCache> {
    let schema = &dataset.schema;
    let stats = fit_normalization(records, schema.healthy_index()?, schema)?;
    let combinations = enumerate_combinations(records, config.combination_threshold, config.combination_size)?;
    if combinations.is_empty() {
        return Err(Error::Config(format!(
            "no {}-parameter combination passes the correlation threshold {}",
            config.combination_size, config.combination_threshold
        )));
    }
    let mut rng = stream(config.seed, 3);
    let per = config.sentences_per_record;
    let mut sentences = Vec::with_capacity(records.len() * per);
    for r in records {
        for _ in 0..per {
            let combo = &combinations[rng.random_range(0..combinations.len())];
            sentences.push(render_sentence(combo, r, schema, &stats)?);
        }
    }
    let features = embedder.encode_numeric_batch(&sentences)?.detach();
    Ok(NumericCache {
        fit: NumericFit { stats, combinations },
        sentences,
        features,
        per_record: per,
    })
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Train windows as `(position in train list, frame range)`.
fn train_windows(dataset: &Dataset, clips: &[usize], config: &ExperimentConfig) -> Result<Vec<(usize, Range<usize>)>> {
    let mut out = Vec::new();
    for (pos, &c) in clips.iter().enumerate() {
        for r in sliding_windows(dataset.clips[c].video.len(), &config.window, WindowMode::Train)? {
            out.push((pos, r));
        }
    }
    Ok(out)
}

/// Trains one fold. The returned model carries the best-by-validation weights.
pub fn train(
    config: &ExperimentConfig,
    dataset: &Dataset,
    fold: &Fold,
    encoders: FrozenEncoders,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    if fold.validation.iter().any(|s| fold.train.contains(s)) {
        return Err(Error::Invalid("fold has a subject on both sides".into()));
    }
    let train_clips = dataset.clips_of(&fold.train);
    let val_clips = dataset.clips_of(&fold.validation);
    if train_clips.is_empty() || val_clips.is_empty() {
        return Err(Error::Invalid("fold has no training or no validation clips".into()));
    }
    let mut model = GaitModel::new(config, encoders)?;
    check_classes(&model, dataset)?;
    let checksum_start = model.backbone_checksum()?;

    let records = dataset.records(&train_clips);
    let numeric = if config.nte {
        let embedder = NumericEmbedder::new(&model.encoders.text, &model.encoders.tokenizer, &dataset.schema, config.num_seed)?;
        let cache = build_numeric_cache(&embedder, dataset, &records, config)?;
        model.numeric = Some(cache.fit.clone());
        Some(cache)
    } else {
        None
    };

    let windows = train_windows(dataset, &train_clips, config)?;
    let steps_per_epoch = windows.len().div_ceil(config.batch_size);
    let mut opt = Optimizer::new(&model.store, &config.optim, steps_per_epoch * config.epochs)?;
    let mut order_rng = stream(config.seed, 2);
    let mut sentence_rng = stream(config.seed, 4);
    let mut writer = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("metrics.jsonl");
            Some((fs::File::create(&path).map_err(|e| Error::io(&path, e))?, path))
        }
        None => None,
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, EvalReport, Vec<(String, Tensor)>)> = None;
    let mut gp_calls = 0;
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for epoch in 0..config.epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let (mut sum_total, mut sum_vt, mut sum_gp) = (0.0, 0.0, 0.0);
        for (step, batch) in order.chunks(config.batch_size).enumerate() {
            let frames = batch
                .iter()
                .map(|&w| {
                    let (pos, range) = &windows[w];
                    window_frames(&dataset.clips[train_clips[*pos]].video, range, &config.window)
                })
                .collect::<Result<Vec<FrameSequence>>>()?;
            let refs: Vec<&FrameSequence> = frames.iter().collect();
            let labels: Vec<usize> = batch.iter().map(|&w| dataset.clips[train_clips[windows[w].0]].label).collect();
            let video = model.video_features(&refs)?;
            let classes = model.class_features()?;
            let (vt, _) = video_text_loss(&video, &classes, &labels, &config.loss)?;
            let gp = match &numeric {
                Some(cache) => {
                    let rows: Vec<u32> = batch
                        .iter()
                        .map(|&w| (windows[w].0 * cache.per_record + sentence_rng.random_range(0..cache.per_record)) as u32)
                        .collect();
                    let idx = Tensor::from_vec(rows, batch.len(), cache.features.device())?;
                    let fnum = cache.features.index_select(&idx, 0)?;
                    gp_calls += 1;
                    Some(gp_contrastive_loss(&fnum, &classes, &labels, &model.heads, config.loss.tau)?)
                }
                None => None,
            };
            let loss = total_loss(&vt, gp.as_ref(), config.loss.omega)?;
            let (l, lvt) = (scalar(&loss)?, scalar(&vt)?);
            let lgp = gp.as_ref().map(scalar).transpose()?.unwrap_or(0.0);
            if !l.is_finite() {
                return Err(Error::Diverged(format!(
                    "fold {} epoch {epoch} step {step}: total {l}, video-text {lvt}, parameter-text {lgp}, lr {}",
                    opts.fold_index,
                    opt.current_lr()
                )));
            }
            opt.backward_step(&loss)?;
            if let Some(name) = model.store.first_non_finite()? {
                return Err(Error::Diverged(format!(
                    "fold {} epoch {epoch} step {step}: parameter `{name}` is non-finite after the update \
                     (total {l}, video-text {lvt}, parameter-text {lgp}, lr {})",
                    opts.fold_index,
                    opt.current_lr()
                )));
            }
            sum_total += l;
            sum_vt += lvt;
            sum_gp += lgp;
        }
        let report = evaluate(&model, dataset, &val_clips)?;
        let n = steps_per_epoch as f64;
        let log = EpochLog {
            fold: opts.fold_index,
            epoch,
            configuration: config.ablation().label().to_string(),
            loss: sum_total / n,
            video_text_loss: sum_vt / n,
            gp_loss: sum_gp / n,
            lr: opt.current_lr(),
            val_accuracy: report.metrics.accuracy,
            val_macro_f1: report.metrics.macro_f1,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let Some((file, path)) = writer.as_mut() {
            let line = serde_json::to_string(&log).map_err(|e| Error::Config(e.to_string()))?;
            writeln!(file, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        on_epoch(&log);
        history.push(log);
        let better = match &best {
            None => true,
            Some((_, b, _)) => {
                let (a, f) = (report.metrics.accuracy, report.metrics.macro_f1);
                a > b.metrics.accuracy || (a == b.metrics.accuracy && f > b.metrics.macro_f1)
            }
        };
        if better {
            best = Some((epoch, report, model.snapshot()?));
        }
    }
    let (best_epoch, best_report, weights) = best.ok_or_else(|| Error::Invalid("no epochs ran".into()))?;
    model.restore(&weights)?;
    let checksum_end = model.backbone_checksum()?;
    if checksum_end != checksum_start {
        return Err(Error::Invalid("frozen backbone changed during training".into()));
    }
    if let Some(dir) = &opts.out_dir {
        model.save(dir.join("checkpoint"))?;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best: best_report,
        gp_calls,
        checksum_start,
        checksum_end,
        train_clips,
        val_clips,
    })
}

/// Reads a metrics log written by [`train`].
pub fn read_metrics_log(path: impl AsRef<Path>) -> Result<Vec<EpochLog>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                row: i + 1,
                column: String::new(),
                message: e.to_string(),
            })
        })
        .collect()
}
