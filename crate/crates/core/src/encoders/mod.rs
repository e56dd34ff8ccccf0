//! Frozen text and vision backbones plus the tokenizer contract.
//!
//! Backbones are random-initialized from a fixed seed by default; real weights
//! can be imported from a blob directory with [`FrozenEncoders::load_pretrained`].
//! Nothing in here is ever registered as learnable.

mod text;
mod tokenizer;
mod vision;

use std::path::Path;

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};

pub use text::{TextEncoder, TextEncoderConfig, TokenEmbeddingSequence};
pub use tokenizer::{Tokenizer, TokenizerSpec};
pub use vision::{LayerPrompter, VisionEncoder, VisionEncoderConfig, VisionOutput};

use crate::blob::{BlobReader, BlobWriter};
use crate::error::{Error, Result};
use crate::nn::{checksum, Init};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub text: TextEncoderConfig,
    pub vision: VisionEncoderConfig,
    /// Seed of the random frozen backbone. Fixed per model, independent of experiment seeds.
    pub backbone_seed: u64,
    /// Optional directory of pretrained weights; overrides the random backbone.
    pub pretrained_dir: Option<String>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            text: TextEncoderConfig::default(),
            vision: VisionEncoderConfig::default(),
            backbone_seed: 0x6a17,
            pretrained_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrozenEncoders {
    pub tokenizer: Tokenizer,
    pub text: TextEncoder,
    pub vision: VisionEncoder,
}

impl FrozenEncoders {
    /// Builds the configured backbone pair (random or pretrained).
    pub fn build(cfg: &EncoderConfig, dtype: DType, device: &Device) -> Result<Self> {
        if let Some(dir) = &cfg.pretrained_dir {
            return Self::load_pretrained(dir, cfg, dtype, device);
        }
        Self::random(cfg, dtype, device)
    }

    pub fn random(cfg: &EncoderConfig, dtype: DType, device: &Device) -> Result<Self> {
        let tokenizer = Tokenizer::new();
        check_tokenizer(&tokenizer, &cfg.text)?;
        let mut init = Init::new(cfg.backbone_seed, dtype, device);
        let mut text_init = init.fork();
        let mut vision_init = init.fork();
        Ok(Self {
            tokenizer,
            text: TextEncoder::random(&cfg.text, &mut text_init)?,
            vision: VisionEncoder::random(&cfg.vision, &mut vision_init)?,
        })
    }

    pub fn save_pretrained(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut w = BlobWriter::create(dir)?;
        w.meta("kind", "frozen-encoders");
        self.text.save_into(&mut w)?;
        self.vision.save_into(&mut w)?;
        w.finish()
    }

    pub fn load_pretrained(dir: impl AsRef<Path>, cfg: &EncoderConfig, dtype: DType, device: &Device) -> Result<Self> {
        let r = BlobReader::open(dir)?;
        let tokenizer = Tokenizer::new();
        check_tokenizer(&tokenizer, &cfg.text)?;
        Ok(Self {
            tokenizer,
            text: TextEncoder::load(&r, &cfg.text, dtype, device)?,
            vision: VisionEncoder::load(&r, &cfg.vision, dtype, device)?,
        })
    }

    /// Digest of every backbone weight; constant for the lifetime of a model.
    pub fn checksum(&self) -> Result<String> {
        checksum(self.text.tensors().into_iter().chain(self.vision.tensors()))
    }
}

fn check_tokenizer(tok: &Tokenizer, cfg: &TextEncoderConfig) -> Result<()> {
    let spec = tok.spec();
    if spec.vocab_size != cfg.vocab_size || spec.context_length != cfg.context_length {
        return Err(Error::Config(format!(
            "text encoder vocab/context ({}, {}) must match the tokenizer ({}, {})",
            cfg.vocab_size, cfg.context_length, spec.vocab_size, spec.context_length
        )));
    }
    Ok(())
}
