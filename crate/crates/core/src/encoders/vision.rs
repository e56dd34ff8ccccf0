use candle_core::{DType, Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::blob::{BlobReader, BlobWriter};
use crate::error::{Error, Result};
use crate::nn::{Block, Init, LayerNorm};

const PIXEL_MEAN: f32 = 0.0;
const PIXEL_STD: f32 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionEncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    pub embed_dim: usize,
}

impl Default for VisionEncoderConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            patch_size: 16,
            channels: 1,
            width: 192,
            depth: 6,
            heads: 3,
            embed_dim: 512,
        }
    }
}

impl VisionEncoderConfig {
    pub fn patches_per_frame(&self) -> usize {
        (self.image_size / self.patch_size).pow(2)
    }

    /// Patch tokens plus the leading frame-summary token.
    pub fn tokens_per_frame(&self) -> usize {
        self.patches_per_frame() + 1
    }

    fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }
}

/// Supplies prompt tokens for each layer from the previous layer's frame tokens.
pub trait LayerPrompter {
    /// `z_prev`: `[frames, tokens, width]`, the stripped output of layer `layer - 1`
    /// (or the tokenized frames for `layer == 0`). Returns `[frames, p, width]`.
    fn prompts(&self, layer: usize, z_prev: &Tensor) -> Result<Option<Tensor>>;
}

#[derive(Debug, Clone)]
pub struct VisionOutput {
    /// Projected frame-summary features `[frames, embed_dim]`.
    pub frame_features: Tensor,
    /// Frame tokens after the last block `[frames, tokens, width]`.
    pub final_tokens: Tensor,
    /// Block outputs at the prompt positions of the last layer `[frames, p, width]`.
    pub final_prompts: Option<Tensor>,
}

/// Frozen per-frame vision transformer.
#[derive(Debug, Clone)]
pub struct VisionEncoder {
    cfg: VisionEncoderConfig,
    patch_embed: Tensor,
    class_embedding: Tensor,
    positional: Tensor,
    ln_pre: LayerNorm,
    blocks: Vec<Block>,
    ln_post: LayerNorm,
    projection: Tensor,
}

impl VisionEncoder {
    pub fn random(cfg: &VisionEncoderConfig, init: &mut Init) -> Result<Self> {
        if cfg.image_size % cfg.patch_size != 0 {
            return Err(Error::Config("image size must be a multiple of the patch size".into()));
        }
        if cfg.width % cfg.heads != 0 {
            return Err(Error::Config("vision width must be divisible by heads".into()));
        }
        let scale = (cfg.width as f64).powf(-0.5);
        Ok(Self {
            cfg: cfg.clone(),
            patch_embed: init.normal(&[cfg.patch_dim(), cfg.width], (cfg.patch_dim() as f64).powf(-0.5))?,
            class_embedding: init.normal(&[cfg.width], scale)?,
            positional: init.normal(&[cfg.tokens_per_frame(), cfg.width], scale)?,
            ln_pre: LayerNorm::new(init, cfg.width)?,
            blocks: (0..cfg.depth)
                .map(|_| Block::frozen(init, cfg.width, cfg.heads, cfg.depth))
                .collect::<Result<Vec<_>>>()?,
            ln_post: LayerNorm::new(init, cfg.width)?,
            projection: init.normal(&[cfg.width, cfg.embed_dim], scale)?,
        })
    }

    pub fn config(&self) -> &VisionEncoderConfig {
        &self.cfg
    }

    pub fn dtype(&self) -> DType {
        self.patch_embed.dtype()
    }

    pub fn device(&self) -> &Device {
        self.patch_embed.device()
    }

    /// Rearranges `[n, h, w, c]` u8 pixels into normalized patches `[n, patches, c*p*p]`.
    fn patchify(&self, pixels: &[u8], n: usize) -> Vec<f32> {
        let (s, p, c) = (self.cfg.image_size, self.cfg.patch_size, self.cfg.channels);
        let g = s / p;
        let mut out = Vec::with_capacity(n * s * s * c);
        for f in 0..n {
            let frame = &pixels[f * s * s * c..(f + 1) * s * s * c];
            for py in 0..g {
                for px in 0..g {
                    for y in 0..p {
                        for x in 0..p {
                            let base = ((py * p + y) * s + px * p + x) * c;
                            for ch in 0..c {
                                let v = frame[base + ch] as f32 / 255.0;
                                out.push((v - PIXEL_MEAN) / PIXEL_STD);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Per-frame token grids `[n, 1 + patches, width]`: summary token, patch
    /// embeddings, spatial positions, pre-norm.
    pub fn tokenize_frames(&self, pixels: &[u8], n: usize, height: usize, width: usize, channels: usize) -> Result<Tensor> {
        let cfg = &self.cfg;
        if height != cfg.image_size || width != cfg.image_size || channels != cfg.channels {
            return Err(Error::shape(
                "frame dimensions",
                format!("{0}x{0}x{1}", cfg.image_size, cfg.channels),
                format!("{height}x{width}x{channels}"),
            ));
        }
        if pixels.len() != n * height * width * channels {
            return Err(Error::shape("frame buffer", n * height * width * channels, pixels.len()));
        }
        if n == 0 {
            return Err(Error::Invalid("no frames".into()));
        }
        let patches = Tensor::from_vec(
            self.patchify(pixels, n),
            (n * cfg.patches_per_frame(), cfg.patch_dim()),
            self.device(),
        )?
        .to_dtype(self.dtype())?;
        let emb = patches
            .matmul(&self.patch_embed)?
            .reshape((n, cfg.patches_per_frame(), cfg.width))?;
        let cls = self
            .class_embedding
            .reshape((1, 1, cfg.width))?
            .broadcast_as((n, 1, cfg.width))?;
        let tokens = Tensor::cat(&[&cls, &emb], 1)?.broadcast_add(&self.positional)?;
        self.ln_pre.forward(&tokens)
    }

    /// Runs all blocks; prompts returned by `prompter` are appended before each
    /// block and stripped from its output.
    pub fn encode_layerwise(&self, z0: &Tensor, prompter: Option<&dyn LayerPrompter>) -> Result<VisionOutput> {
        let (_, tokens, width) = z0.dims3()?;
        if width != self.cfg.width {
            return Err(Error::shape("vision token width", self.cfg.width, width));
        }
        let mut z = z0.clone();
        let mut final_prompts = None;
        for (l, block) in self.blocks.iter().enumerate() {
            let prompts = match prompter {
                Some(p) => p.prompts(l, &z)?,
                None => None,
            };
            match prompts {
                Some(pr) => {
                    if pr.dim(0)? != z.dim(0)? || pr.dim(2)? != width {
                        return Err(Error::shape(
                            "prompt tokens",
                            format!("[{}, _, {width}]", z.dim(0)?),
                            format!("{:?}", pr.dims()),
                        ));
                    }
                    let n_prompt = pr.dim(1)?;
                    let out = block.forward(&Tensor::cat(&[&z, &pr], 1)?, None)?;
                    z = out.narrow(1, 0, tokens)?;
                    if l + 1 == self.blocks.len() {
                        final_prompts = Some(out.narrow(1, tokens, n_prompt)?);
                    }
                }
                None => z = block.forward(&z, None)?,
            }
        }
        let frame_features = self.project(&z.narrow(1, 0, 1)?.squeeze(1)?)?;
        Ok(VisionOutput {
            frame_features,
            final_tokens: z,
            final_prompts,
        })
    }

    /// Post-norm and projection into the shared latent space.
    pub fn project(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.ln_post.forward(x)?;
        let dims = h.dims().to_vec();
        let rows = h.elem_count() / self.cfg.width;
        let y = h.reshape((rows, self.cfg.width))?.matmul(&self.projection)?;
        let mut out_dims = dims;
        *out_dims.last_mut().unwrap() = self.cfg.embed_dim;
        Ok(y.reshape(out_dims)?)
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.patch_embed, &self.class_embedding, &self.positional];
        v.extend(self.ln_pre.tensors());
        for b in &self.blocks {
            v.extend(b.tensors());
        }
        v.extend(self.ln_post.tensors());
        v.push(&self.projection);
        v
    }

    pub fn save_into(&self, w: &mut BlobWriter) -> Result<()> {
        w.add_tensor("vision.patch_embed", &self.patch_embed)?;
        w.add_tensor("vision.class_embedding", &self.class_embedding)?;
        w.add_tensor("vision.positional", &self.positional)?;
        self.ln_pre.save_into(w, "vision.ln_pre")?;
        for (i, b) in self.blocks.iter().enumerate() {
            b.save_into(w, &format!("vision.blocks.{i}"))?;
        }
        self.ln_post.save_into(w, "vision.ln_post")?;
        w.add_tensor("vision.projection", &self.projection)
    }

    pub fn load(r: &BlobReader, cfg: &VisionEncoderConfig, dtype: DType, dev: &Device) -> Result<Self> {
        let w = cfg.width;
        Ok(Self {
            cfg: cfg.clone(),
            patch_embed: r.tensor("vision.patch_embed", Some(&[cfg.patch_dim(), w]), dtype, dev)?,
            class_embedding: r.tensor("vision.class_embedding", Some(&[w]), dtype, dev)?,
            positional: r.tensor("vision.positional", Some(&[cfg.tokens_per_frame(), w]), dtype, dev)?,
            ln_pre: LayerNorm::load(r, "vision.ln_pre", w, dtype, dev)?,
            blocks: (0..cfg.depth)
                .map(|i| Block::load(r, &format!("vision.blocks.{i}"), w, cfg.heads, dtype, dev))
                .collect::<Result<Vec<_>>>()?,
            ln_post: LayerNorm::load(r, "vision.ln_post", w, dtype, dev)?,
            projection: r.tensor("vision.projection", Some(&[w, cfg.embed_dim]), dtype, dev)?,
        })
    }
}
