//! The trainable classifier: frozen backbones plus every learnable component.

use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::blob::{BlobReader, BlobWriter};
use crate::encoders::FrozenEncoders;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::aggregate;
use crate::nn::{to_vec2_f64, Init, ParamStore};
use crate::objectives::ProjectionHeads;
use crate::param_corpus::{Combination, NormalizationStats};
use crate::text_branch::{argmax, class_probabilities, ClassSpecFile, TextPrompts};
use crate::video_branch::{encode_videos, sliding_windows, window_frames, FrameSequence, VisualPromptParams, WindowMode};

/// Windows encoded per forward pass during inference.
const INFER_CHUNK: usize = 16;

/// Seed offset separating learnable initialization from other uses of the experiment seed.
const INIT_STREAM: u64 = 0x1217;

pub struct GaitModel {
    pub config: ExperimentConfig,
    pub specs: ClassSpecFile,
    pub encoders: FrozenEncoders,
    pub store: ParamStore,
    pub text_prompts: TextPrompts,
    pub visual: VisualPromptParams,
    pub heads: ProjectionHeads,
    /// Normalization and combinations fitted on the training fold (numeric branch only).
    pub numeric: Option<NumericFit>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NumericFit {
    pub stats: NormalizationStats,
    pub combinations: Vec<Combination>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VideoPrediction {
    pub probabilities: Vec<f64>,
    pub class: usize,
    pub windows: usize,
}

impl GaitModel {
    /// Fresh learnable state for `config` on top of `encoders`.
    pub fn new(config: &ExperimentConfig, encoders: FrozenEncoders) -> Result<Self> {
        Self::with_specs(config, config.class_specs()?, encoders)
    }

    /// As [`new`](Self::new) with explicit class descriptions.
    pub fn with_specs(config: &ExperimentConfig, specs: ClassSpecFile, encoders: FrozenEncoders) -> Result<Self> {
        config.validate()?;
        specs.validate()?;
        let dtype = encoders.text.dtype();
        let device = encoders.text.device().clone();
        let mut init = Init::new(config.seed.wrapping_add(INIT_STREAM), dtype, &device);
        let mut store = ParamStore::new();
        let text_prompts = TextPrompts::new(
            &config.text_prompt,
            &specs,
            &encoders.text,
            &encoders.tokenizer,
            config.kapt,
            &mut store,
            &mut init.fork(),
        )?;
        let visual = VisualPromptParams::new(&config.visual_prompt, &encoders.vision, &mut store, &mut init.fork())?;
        let heads = ProjectionHeads::new(
            &config.heads,
            encoders.text.config().embed_dim,
            specs.len(),
            &mut store,
            &mut init.fork(),
        )?;
        Ok(Self {
            config: config.clone(),
            specs,
            encoders,
            store,
            text_prompts,
            visual,
            heads,
            numeric: None,
        })
    }

    /// Builds the configured backbones, then a fresh model.
    pub fn build(config: &ExperimentConfig, dtype: DType, device: &Device) -> Result<Self> {
        Self::new(config, FrozenEncoders::build(&config.encoders, dtype, device)?)
    }

    pub fn num_classes(&self) -> usize {
        self.specs.len()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.specs.names()
    }

    pub fn backbone_checksum(&self) -> Result<String> {
        self.encoders.checksum()
    }

    /// Class text features `[classes, embed]`.
    pub fn class_features(&self) -> Result<Tensor> {
        self.text_prompts.assemble_class_features(&self.encoders.text)
    }

    /// Video features `[clips, embed]` of equal-length clips.
    pub fn video_features(&self, clips: &[&FrameSequence]) -> Result<Tensor> {
        encode_videos(&self.encoders.vision, &self.visual, clips)
    }

    /// Window-level class probabilities of an entire video under the eval windowing.
    pub fn window_probabilities(&self, video: &FrameSequence, class_features: &Tensor) -> Result<Vec<Vec<f64>>> {
        let spec = &self.config.window;
        let windows = sliding_windows(video.len(), spec, WindowMode::Eval)?
            .iter()
            .map(|r| window_frames(video, r, spec))
            .collect::<Result<Vec<_>>>()?;
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(INFER_CHUNK) {
            let refs: Vec<&FrameSequence> = chunk.iter().collect();
            let fv = self.video_features(&refs)?.detach();
            out.extend(to_vec2_f64(&class_probabilities(&fv, class_features, self.config.loss.tau)?)?);
        }
        Ok(out)
    }

    pub fn classify_video(&self, video: &FrameSequence) -> Result<VideoPrediction> {
        let classes = self.class_features()?.detach();
        self.classify_with(video, &classes)
    }

    /// As [`classify_video`](Self::classify_video) with precomputed class features.
    pub fn classify_with(&self, video: &FrameSequence, class_features: &Tensor) -> Result<VideoPrediction> {
        let windows = self.window_probabilities(video, class_features)?;
        let (probabilities, class) = aggregate(&windows, self.config.aggregation)?;
        debug_assert!(class < self.num_classes() && argmax(&probabilities) < self.num_classes());
        Ok(VideoPrediction {
            probabilities,
            class,
            windows: windows.len(),
        })
    }

    /// Checkpoint directory: manifest with the config plus every learnable tensor.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut w = BlobWriter::create(dir)?;
        w.meta("kind", "gait-model");
        w.meta("config", to_json(&self.config)?);
        w.meta("classes", to_json(&self.specs)?);
        w.meta("backbone_checksum", self.backbone_checksum()?);
        if let Some(n) = &self.numeric {
            w.meta("numeric", to_json(n)?);
        }
        self.store.save_into(&mut w)?;
        w.finish()
    }

    /// Loads a checkpoint; the backbone is rebuilt from the stored config and
    /// must reproduce the stored checksum.
    pub fn load(dir: impl AsRef<Path>, device: &Device) -> Result<Self> {
        let r = BlobReader::open(dir)?;
        if r.meta("kind") != Some("gait-model") {
            return Err(Error::Invalid(format!("{} is not a model checkpoint", r.dir().display())));
        }
        let config: ExperimentConfig = from_json(meta(&r, "config")?)?;
        let specs: ClassSpecFile = from_json(meta(&r, "classes")?)?;
        let encoders = FrozenEncoders::build(&config.encoders, DType::F32, device)?;
        let expected = meta(&r, "backbone_checksum")?;
        if encoders.checksum()? != expected {
            return Err(Error::Invalid("checkpoint was trained against a different backbone".into()));
        }
        let mut model = Self::with_specs(&config, specs, encoders)?;
        model.store.load_from(&r)?;
        model.numeric = r.meta("numeric").map(from_json).transpose()?;
        Ok(model)
    }

    /// Copies of every learnable tensor, for restoring the best epoch.
    pub fn snapshot(&self) -> Result<Vec<(String, Tensor)>> {
        self.store
            .iter()
            .map(|(n, v)| Ok((n.to_string(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &[(String, Tensor)]) -> Result<()> {
        for (name, t) in snapshot {
            self.store
                .get(name)
                .ok_or_else(|| Error::Invalid(format!("unknown parameter `{name}`")))?
                .set(t)?;
        }
        Ok(())
    }
}

fn meta<'a>(r: &'a BlobReader, key: &str) -> Result<&'a str> {
    r.meta(key)
        .ok_or_else(|| Error::Invalid(format!("checkpoint manifest lacks `{key}`")))
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Config(e.to_string()))
}

fn from_json<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(|e| Error::Config(format!("checkpoint metadata: {e}")))
}
