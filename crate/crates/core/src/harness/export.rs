//! CSV export of numeric, class and projected embeddings for external plotting.

use std::path::Path;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::harness::model::GaitModel;
use crate::nn::to_vec2_f64;
use crate::numeric_embedding::NumericEmbedder;
use crate::param_corpus::render_sentence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingSpace {
    /// Numeric features `F^num` and class text features `F^T`.
    Raw,
    /// Numeric features through their label's head, class features through the text head.
    #[default]
    Projected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub id: String,
    pub label: String,
    pub class_feature: bool,
    pub vector: Vec<f64>,
}

/// One row per clip of `clips` (numeric sentence of the checkpoint's first
/// combination) followed by one flagged row per class.
pub fn export_embeddings(
    model: &GaitModel,
    dataset: &Dataset,
    clips: &[usize],
    space: EmbeddingSpace,
) -> Result<Vec<EmbeddingRow>> {
    let fit = model
        .numeric
        .as_ref()
        .ok_or_else(|| Error::Invalid("checkpoint has no numeric branch (trained without NTE)".into()))?;
    let combo = fit
        .combinations
        .first()
        .ok_or_else(|| Error::Invalid("checkpoint has no parameter combinations".into()))?;
    let embedder = NumericEmbedder::new(
        &model.encoders.text,
        &model.encoders.tokenizer,
        &dataset.schema,
        model.config.num_seed,
    )?;
    let sentences = clips
        .iter()
        .map(|&i| render_sentence(combo, &dataset.clips[i].record, &dataset.schema, &fit.stats))
        .collect::<Result<Vec<_>>>()?;
    let numeric = embedder.encode_numeric_batch(&sentences)?;
    let classes = model.class_features()?.detach();
    let (samples, class_rows) = match space {
        EmbeddingSpace::Raw => (numeric, classes),
        EmbeddingSpace::Projected => {
            let per = clips
                .iter()
                .enumerate()
                .map(|(row, &i)| model.heads.project_numeric_with(dataset.clips[i].label, &numeric.narrow(0, row, 1)?))
                .collect::<Result<Vec<_>>>()?;
            (Tensor::cat(&per, 0)?, model.heads.project_text(&classes)?)
        }
    };
    let names = model.class_names();
    let mut rows: Vec<EmbeddingRow> = clips
        .iter()
        .zip(to_vec2_f64(&samples)?)
        .map(|(&i, vector)| EmbeddingRow {
            id: dataset.clips[i].id.clone(),
            label: names[dataset.clips[i].label].clone(),
            class_feature: false,
            vector,
        })
        .collect();
    rows.extend(to_vec2_f64(&class_rows)?.into_iter().enumerate().map(|(c, vector)| EmbeddingRow {
        id: format!("class-{c}"),
        label: names[c].clone(),
        class_feature: true,
        vector,
    }));
    Ok(rows)
}

/// `id,label,class_feature,v0..v{d-1}`.
pub fn write_embeddings(path: impl AsRef<Path>, rows: &[EmbeddingRow]) -> Result<()> {
    let path = path.as_ref();
    let dim = rows.first().map(|r| r.vector.len()).unwrap_or(0);
    if rows.iter().any(|r| r.vector.len() != dim) {
        return Err(Error::Invalid("embedding rows have different dimensions".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut header = vec!["id".to_string(), "label".into(), "class_feature".into()];
    header.extend((0..dim).map(|d| format!("v{d}")));
    w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.label.clone(), (r.class_feature as u8).to_string()];
        rec.extend(r.vector.iter().map(|v| format!("{v}")));
        w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
