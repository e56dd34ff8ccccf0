//! Experiment and run configuration, loadable from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::caption_decoder::{DecoderConfig, DecoderTrainConfig};
use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::harness::metrics::Aggregation;
use crate::harness::synthetic::SyntheticSpec;
use crate::objectives::{HeadConfig, LossWeights};
use crate::optim::OptimConfig;
use crate::text_branch::{ClassSpecFile, TextPromptConfig};
use crate::video_branch::{VisualPromptConfig, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GaitScoring,
    #[default]
    DementiaGroup,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::GaitScoring => "gait-scoring",
            Task::DementiaGroup => "dementia-group",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            Task::GaitScoring => 4,
            Task::DementiaGroup => 3,
        }
    }
}

/// The four model configurations of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Baseline,
    Kapt,
    Nte,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Baseline, Ablation::Kapt, Ablation::Nte, Ablation::Full];

    pub fn flags(self) -> (bool, bool) {
        match self {
            Ablation::Baseline => (false, false),
            Ablation::Kapt => (true, false),
            Ablation::Nte => (false, true),
            Ablation::Full => (true, true),
        }
    }

    pub fn from_flags(kapt: bool, nte: bool) -> Self {
        match (kapt, nte) {
            (false, false) => Ablation::Baseline,
            (true, false) => Ablation::Kapt,
            (false, true) => Ablation::Nte,
            (true, true) => Ablation::Full,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Baseline => "baseline",
            Ablation::Kapt => "+KAPT",
            Ablation::Nte => "+NTE",
            Ablation::Full => "full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    /// Knowledge-initialized text prompts.
    pub kapt: bool,
    /// Numeric parameter-text branch and its contrastive loss.
    pub nte: bool,
    /// Seed of learnable initialization, window shuffling and sentence sampling.
    pub seed: u64,
    pub fold_seed: u64,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: OptimConfig,
    pub window: WindowSpec,
    pub loss: LossWeights,
    pub text_prompt: TextPromptConfig,
    pub visual_prompt: VisualPromptConfig,
    pub heads: HeadConfig,
    pub encoders: EncoderConfig,
    pub aggregation: Aggregation,
    /// Maximum pairwise |Pearson| inside a parameter combination.
    pub combination_threshold: f64,
    pub combination_size: usize,
    /// Cached numeric sentences per training record.
    pub sentences_per_record: usize,
    pub num_seed: u64,
    /// Class description file; the task's built-in file when absent.
    pub class_spec: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::default(),
            kapt: true,
            nte: true,
            seed: 0,
            fold_seed: 0,
            folds: 10,
            epochs: 20,
            batch_size: 16,
            optim: OptimConfig::default(),
            window: WindowSpec::default(),
            loss: LossWeights::default(),
            text_prompt: TextPromptConfig::default(),
            visual_prompt: VisualPromptConfig::default(),
            heads: HeadConfig::default(),
            encoders: EncoderConfig::default(),
            aggregation: Aggregation::default(),
            combination_threshold: 0.4,
            combination_size: 4,
            sentences_per_record: 4,
            num_seed: 0x4e55,
            class_spec: None,
        }
    }
}

impl ExperimentConfig {
    pub fn ablation(&self) -> Ablation {
        Ablation::from_flags(self.kapt, self.nte)
    }

    pub fn with_ablation(&self, a: Ablation) -> Self {
        let (kapt, nte) = a.flags();
        Self { kapt, nte, ..self.clone() }
    }

    pub fn class_specs(&self) -> Result<ClassSpecFile> {
        let specs = match &self.class_spec {
            Some(path) => ClassSpecFile::load(path)?,
            None => ClassSpecFile::builtin(self.task.name())?,
        };
        if specs.len() != self.task.num_classes() {
            return Err(Error::Config(format!(
                "task {} has {} classes, class file defines {}",
                self.task.name(),
                self.task.num_classes(),
                specs.len()
            )));
        }
        Ok(specs)
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.loss.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("need at least 2 folds".into()));
        }
        if self.combination_size == 0 || self.sentences_per_record == 0 {
            return Err(Error::Config("combination size and sentences per record must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.combination_threshold) {
            return Err(Error::Config("combination threshold must lie in [0, 1]".into()));
        }
        if !(self.optim.lr > 0.0) {
            return Err(Error::Config("step size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderCorpusConfig {
    /// Training sentences.
    pub sentences: usize,
    pub held_out: usize,
    pub seed: u64,
}

impl Default for DecoderCorpusConfig {
    fn default() -> Self {
        Self {
            sentences: 5000,
            held_out: 500,
            seed: 7,
        }
    }
}

/// Everything a CLI run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub experiment: ExperimentConfig,
    /// Built-in synthetic preset; the task name when absent.
    pub synthetic_preset: Option<String>,
    /// Full synthetic spec; overrides the preset.
    pub synthetic: Option<SyntheticSpec>,
    pub data_seed: u64,
    pub decoder: DecoderConfig,
    pub decoder_train: DecoderTrainConfig,
    pub decoder_corpus: DecoderCorpusConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let spec = match (&self.synthetic, &self.synthetic_preset) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => SyntheticSpec::preset(p)?,
            (None, None) => SyntheticSpec::preset(self.experiment.task.name())?,
        };
        if spec.classes.len() != self.experiment.task.num_classes() {
            return Err(Error::Config(format!(
                "synthetic spec has {} classes, task {} needs {}",
                spec.classes.len(),
                self.experiment.task.name(),
                self.experiment.task.num_classes()
            )));
        }
        Ok(spec)
    }
}
