//! Labelled clips with their parameter records, stored as a directory.
//!
//! Layout: `schema.toml`, `clips.csv` (`clip_id,subject,label`),
//! `parameters.csv` (one record per clip, same order) and `videos/<clip_id>/`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::synthetic::{generate_clips, SyntheticSpec};
use crate::param_corpus::{load_corpus, write_corpus, ParameterRecord, Schema};
use crate::video_branch::FrameSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub id: String,
    pub subject: String,
    pub label: usize,
    pub record: ParameterRecord,
    pub video: FrameSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub clips: Vec<Clip>,
}

#[derive(Serialize, Deserialize)]
struct ClipRow {
    clip_id: String,
    subject: String,
    label: String,
}

/// Renders the synthetic dataset of `spec`.
pub fn gen_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let schema = spec.schema();
    let clips = generate_clips(spec, seed)?
        .into_iter()
        .map(|c| {
            let subject = format!("s{:03}", c.subject);
            Clip {
                id: format!("{subject}-c{}", c.index),
                record: ParameterRecord {
                    subject_id: subject.clone(),
                    label: c.label,
                    values: c.values,
                },
                subject,
                label: c.label,
                video: c.video,
            }
        })
        .collect();
    Ok(Dataset { schema, clips })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.schema.classes.len()
    }

    /// Distinct subject ids in first-seen order.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.clips {
            if !out.contains(&c.subject) {
                out.push(c.subject.clone());
            }
        }
        out
    }

    /// Indices of clips whose subject is in `subjects`.
    pub fn clips_of(&self, subjects: &[String]) -> Vec<usize> {
        (0..self.clips.len())
            .filter(|&i| subjects.contains(&self.clips[i].subject))
            .collect()
    }

    pub fn records(&self, clips: &[usize]) -> Vec<ParameterRecord> {
        clips.iter().map(|&i| self.clips[i].record.clone()).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("videos")).map_err(|e| Error::io(dir, e))?;
        let schema_path = dir.join("schema.toml");
        fs::write(&schema_path, self.schema.to_toml()?).map_err(|e| Error::io(&schema_path, e))?;
        let clips_path = dir.join("clips.csv");
        let mut w = csv::Writer::from_path(&clips_path).map_err(|e| Error::io(&clips_path, e.into()))?;
        for c in &self.clips {
            w.serialize(ClipRow {
                clip_id: c.id.clone(),
                subject: c.subject.clone(),
                label: self.schema.classes[c.label].clone(),
            })
            .map_err(|e| Error::io(&clips_path, e.into()))?;
            c.video.save(dir.join("videos").join(&c.id))?;
        }
        w.flush().map_err(|e| Error::io(&clips_path, e))?;
        let records: Vec<ParameterRecord> = self.clips.iter().map(|c| c.record.clone()).collect();
        write_corpus(dir.join("parameters.csv"), &self.schema, &records)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let schema = Schema::load(dir.join("schema.toml"))?;
        let records = load_corpus(dir.join("parameters.csv"), &schema)?;
        let clips_path = dir.join("clips.csv");
        let mut rdr = csv::Reader::from_path(&clips_path).map_err(|e| Error::io(&clips_path, e.into()))?;
        let rows = rdr
            .deserialize::<ClipRow>()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| Error::Parse {
                    row: i + 1,
                    column: String::new(),
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != records.len() {
            return Err(Error::Invalid(format!(
                "{} clips but {} parameter records",
                rows.len(),
                records.len()
            )));
        }
        let clips = rows
            .into_iter()
            .zip(records)
            .enumerate()
            .map(|(i, (row, record))| {
                let label = schema.class_index(&row.label).ok_or_else(|| Error::Parse {
                    row: i + 1,
                    column: "label".into(),
                    message: format!("unknown label `{}`", row.label),
                })?;
                if record.label != label || record.subject_id != row.subject {
                    return Err(Error::Invalid(format!("clip `{}` disagrees with its parameter record", row.clip_id)));
                }
                Ok(Clip {
                    video: FrameSequence::load(dir.join("videos").join(&row.clip_id))?,
                    id: row.clip_id,
                    subject: row.subject,
                    label,
                    record,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { schema, clips })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let mut spec = SyntheticSpec::preset("dementia-group").unwrap();
        spec.subjects_per_class = 2;
        spec.min_frames = 5;
        spec.max_frames = 9;
        let ds = gen_synthetic_dataset(&spec, 3).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.subjects().len(), 6);
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.schema, ds.schema);
        assert_eq!(back.clips.len(), ds.clips.len());
        for (a, b) in back.clips.iter().zip(&ds.clips) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.video, b.video);
            assert_eq!(a.label, b.label);
            for (x, y) in a.record.values.iter().zip(&b.record.values) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }
}
