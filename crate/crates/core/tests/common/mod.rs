#![allow(dead_code)]

use candle_core::{DType, Device};
use gait_vlm::encoders::FrozenEncoders;
use gait_vlm::harness::synthetic::SyntheticSpec;
use gait_vlm::harness::{gen_synthetic_dataset, Dataset, ExperimentConfig};

/// Small backbones and heads so a full train/eval cycle takes seconds.
pub fn tiny_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.encoders.text.width = 96;
    c.encoders.text.depth = 1;
    c.encoders.text.heads = 2;
    c.encoders.text.embed_dim = 96;
    c.encoders.vision.width = 32;
    c.encoders.vision.depth = 2;
    c.encoders.vision.heads = 2;
    c.encoders.vision.embed_dim = 96;
    c.text_prompt.n_ctx = 4;
    c.text_prompt.knowledge_dim = 128;
    c.text_prompt.proj_hidden = 16;
    c.text_prompt.auto_prompt_budget = 8;
    c.heads.hidden = 16;
    c.heads.out = 8;
    c.visual_prompt.global_tokens = 2;
    c.window.frames_per_window = 4;
    c.folds = 3;
    c.epochs = 2;
    c.batch_size = 8;
    c.sentences_per_record = 2;
    c
}

/// Three classes, five subjects each, one short clip per subject.
pub fn tiny_dataset(seed: u64) -> Dataset {
    let mut spec = SyntheticSpec::preset("dementia-group").unwrap();
    spec.subjects_per_class = 5;
    spec.min_frames = 70;
    spec.max_frames = 80;
    gen_synthetic_dataset(&spec, seed).unwrap()
}

pub fn encoders(config: &ExperimentConfig) -> FrozenEncoders {
    FrozenEncoders::build(&config.encoders, DType::F32, &Device::Cpu).unwrap()
}
