//! Frame sequences, sliding windows and the layer-wise visual prompt learner.
//!
//! Before every vision block each frame receives the prompt tokens
//! `[S, G_1..G_m, L_t]`: `S` attention-pools the frame-summary tokens of the
//! clip, `G` are free learnable tokens and `L_t` is a projection of frame `t`'s
//! own summary token. Temporal position enters through a sinusoidal encoding.

use std::ops::Range;
use std::path::Path;

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use crate::blob::{BlobReader, BlobWriter};
use crate::encoders::{LayerPrompter, VisionEncoder};
use crate::error::{Error, Result};
use crate::nn::{softmax_last, Init, Linear, ParamStore};

/// `frames x height x width x channels` u8 pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pixels: Vec<u8>,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    pub fps: f64,
}

impl FrameSequence {
    pub fn new(pixels: Vec<u8>, frames: usize, height: usize, width: usize, channels: usize) -> Result<Self> {
        if frames == 0 || height == 0 || width == 0 || channels == 0 {
            return Err(Error::Invalid("empty frame sequence".into()));
        }
        if pixels.len() != frames * height * width * channels {
            return Err(Error::shape("frame buffer", frames * height * width * channels, pixels.len()));
        }
        Ok(Self {
            pixels,
            frames,
            height,
            width,
            channels,
            fps: 30.0,
        })
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn frame_size(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.frame_size();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Frames at `indices`; indices past the end repeat the last frame.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(indices.len() * self.frame_size());
        for &i in indices {
            pixels.extend_from_slice(self.frame(i.min(self.frames - 1)));
        }
        let mut out = Self::new(pixels, indices.len(), self.height, self.width, self.channels)?;
        out.fps = self.fps;
        Ok(out)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let mut w = BlobWriter::create(dir)?;
        w.meta("kind", "frames");
        w.meta("fps", self.fps);
        w.add_u8("frames", &[self.frames, self.height, self.width, self.channels], &self.pixels)?;
        w.finish()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let r = BlobReader::open(dir)?;
        let (shape, pixels) = r.u8("frames")?;
        if shape.len() != 4 {
            return Err(Error::shape("frame tensor rank", 4, shape.len()));
        }
        let mut seq = Self::new(pixels, shape[0], shape[1], shape[2], shape[3])?;
        if let Some(fps) = r.meta("fps").and_then(|v| v.parse().ok()) {
            seq.fps = fps;
        }
        Ok(seq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub window: usize,
    pub train_stride: usize,
    /// Eval stride; equal to `window` gives non-overlapping windows.
    pub eval_stride: usize,
    /// Frames sampled uniformly from each window and fed to the encoder.
    pub frames_per_window: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window: 70,
            train_stride: 25,
            eval_stride: 70,
            frames_per_window: 8,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.train_stride == 0 || self.eval_stride == 0 {
            return Err(Error::Config("window and strides must be positive".into()));
        }
        if self.frames_per_window == 0 || self.frames_per_window > self.window {
            return Err(Error::Config("frames_per_window must be in 1..=window".into()));
        }
        Ok(())
    }

    pub fn stride(&self, mode: WindowMode) -> usize {
        match mode {
            WindowMode::Train => self.train_stride,
            WindowMode::Eval => self.eval_stride,
        }
    }

    /// Frame indices sampled from `range` at the centers of equal sub-intervals.
    pub fn sample_indices(&self, range: &Range<usize>) -> Vec<usize> {
        let n = self.frames_per_window;
        let len = range.end - range.start;
        (0..n).map(|j| range.start + ((2 * j + 1) * len) / (2 * n)).collect()
    }
}

/// Window ranges `[start, start + window)`. Videos shorter than one window give
/// a single range extending past the end (filled by last-frame repetition).
pub fn sliding_windows(length: usize, spec: &WindowSpec, mode: WindowMode) -> Result<Vec<Range<usize>>> {
    if length == 0 {
        return Err(Error::Invalid("video has no frames".into()));
    }
    spec.validate()?;
    if length < spec.window {
        return Ok(vec![0..spec.window]);
    }
    let stride = spec.stride(mode);
    Ok((0..=length - spec.window)
        .step_by(stride)
        .map(|s| s..s + spec.window)
        .collect())
}

/// The sampled frames of one window, ready for the encoder.
pub fn window_frames(video: &FrameSequence, range: &Range<usize>, spec: &WindowSpec) -> Result<FrameSequence> {
    video.select(&spec.sample_indices(range))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VideoPooling {
    /// Final-layer summary prompt, averaged over frames, then projected.
    Summary,
    /// Mean of projected frame features.
    MeanFrames,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisualPromptConfig {
    pub enabled: bool,
    pub global_tokens: usize,
    /// Amplitude of the sinusoidal temporal encoding added to summary tokens.
    pub temporal_scale: f64,
    pub pooling: VideoPooling,
}

impl Default for VisualPromptConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            global_tokens: 4,
            temporal_scale: 0.1,
            pooling: VideoPooling::Summary,
        }
    }
}

impl VisualPromptConfig {
    /// Prompt tokens appended to each frame.
    pub fn prompts_per_frame(&self) -> usize {
        self.global_tokens + 2
    }
}

#[derive(Debug, Clone)]
struct LayerParams {
    query: Tensor,
    key: Linear,
    value: Linear,
    global: Tensor,
    local: Linear,
}

/// Learnable prompt parameters, one set per vision layer.
#[derive(Debug, Clone)]
pub struct VisualPromptParams {
    cfg: VisualPromptConfig,
    width: usize,
    layers: Vec<LayerParams>,
}

/// Sinusoidal encoding `[frames, width]`.
pub fn temporal_encoding(frames: usize, width: usize, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; frames * width];
    for t in 0..frames {
        for i in 0..width / 2 {
            let freq = 10_000f64.powf(-2.0 * i as f64 / width as f64);
            out[t * width + 2 * i] = scale * (t as f64 * freq).sin();
            out[t * width + 2 * i + 1] = scale * (t as f64 * freq).cos();
        }
    }
    out
}

impl VisualPromptParams {
    /// Registers parameters under `visual_prompt.<layer>.*`; nothing is
    /// registered when prompts are disabled.
    pub fn new(
        cfg: &VisualPromptConfig,
        encoder: &VisionEncoder,
        store: &mut ParamStore,
        init: &mut Init,
    ) -> Result<Self> {
        let width = encoder.config().width;
        let depth = if cfg.enabled { encoder.config().depth } else { 0 };
        let layers = (0..depth)
            .map(|l| {
                let name = format!("visual_prompt.{l}");
                Ok(LayerParams {
                    query: store.learnable(&format!("{name}.query"), init.normal(&[width], 0.02)?)?,
                    key: Linear::learnable(store, init, &format!("{name}.key"), width, width)?,
                    value: Linear::learnable_with(store, &format!("{name}.value"), init.eye(width)?, init.zeros(&[width])?)?,
                    global: store.learnable(
                        &format!("{name}.global"),
                        init.normal(&[cfg.global_tokens, width], 0.02)?,
                    )?,
                    local: Linear::learnable_with(
                        store,
                        &format!("{name}.local"),
                        init.normal(&[width, width], 0.02)?,
                        init.zeros(&[width])?,
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            width,
            layers,
        })
    }

    pub fn config(&self) -> &VisualPromptConfig {
        &self.cfg
    }

    pub fn enabled(&self) -> bool {
        !self.layers.is_empty()
    }

    fn temporal(&self, frames: usize, like: &Tensor) -> Result<Tensor> {
        let pe = temporal_encoding(frames, self.width, self.cfg.temporal_scale);
        Ok(Tensor::from_vec(pe, (frames, self.width), like.device())?.to_dtype(like.dtype())?)
    }

    /// Summary, global and local prompts of `layer` from frame-summary tokens
    /// `summaries` (`[clips, frames, width]`): returns `S [clips, width]`,
    /// `G [m, width]`, `L [clips, frames, width]`.
    pub fn video_prompt_learner(&self, summaries: &Tensor, layer: usize) -> Result<(Tensor, Tensor, Tensor)> {
        let p = self
            .layers
            .get(layer)
            .ok_or_else(|| Error::OutOfRange(format!("prompt layer {layer}")))?;
        let (_, frames, width) = summaries.dims3()?;
        let e = summaries.broadcast_add(&self.temporal(frames, summaries)?)?;
        let keys = p.key.forward(&e)?;
        let scores = (keys.broadcast_mul(&p.query)?.sum(D::Minus1)? / (width as f64).sqrt())?;
        let attn = softmax_last(&scores)?.unsqueeze(2)?;
        let s = attn.broadcast_mul(&p.value.forward(&e)?)?.sum(1)?;
        let l = p.local.forward(&e)?;
        Ok((s, p.global.clone(), l))
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        for p in &self.layers {
            v.push(&p.query);
            v.extend(p.key.tensors());
            v.extend(p.value.tensors());
            v.push(&p.global);
            v.extend(p.local.tensors());
        }
        v
    }
}

/// Adapts the prompt parameters to the encoder callback for a batch of clips
/// that all have `frames` frames.
struct ClipPrompter<'a> {
    params: &'a VisualPromptParams,
    frames: usize,
}

impl LayerPrompter for ClipPrompter<'_> {
    fn prompts(&self, layer: usize, z_prev: &Tensor) -> Result<Option<Tensor>> {
        let (n, _, width) = z_prev.dims3()?;
        let clips = n / self.frames;
        let summaries = z_prev.narrow(1, 0, 1)?.reshape((clips, self.frames, width))?;
        let (s, g, l) = self.params.video_prompt_learner(&summaries, layer)?;
        let m = g.dim(0)?;
        let s = s.unsqueeze(1)?.unsqueeze(1)?.broadcast_as((clips, self.frames, 1, width))?;
        let g = g.reshape((1, 1, m, width))?.broadcast_as((clips, self.frames, m, width))?;
        let l = l.unsqueeze(2)?;
        let tokens = Tensor::cat(&[&s, &g, &l], 2)?;
        Ok(Some(tokens.reshape((n, m + 2, width))?))
    }
}

/// Video features `[clips, embed_dim]` for clips of equal length.
pub fn encode_videos(encoder: &VisionEncoder, params: &VisualPromptParams, clips: &[&FrameSequence]) -> Result<Tensor> {
    let first = clips.first().ok_or_else(|| Error::Invalid("no clips".into()))?;
    let frames = first.len();
    let (h, w, c) = first.dims();
    let mut pixels = Vec::with_capacity(clips.len() * frames * first.frame_size());
    for clip in clips {
        if clip.len() != frames || clip.dims() != (h, w, c) {
            return Err(Error::shape(
                "clip in batch",
                format!("{frames}x{h}x{w}x{c}"),
                format!("{}x{:?}", clip.len(), clip.dims()),
            ));
        }
        pixels.extend_from_slice(clip.pixels());
    }
    let n = clips.len() * frames;
    let z0 = encoder.tokenize_frames(&pixels, n, h, w, c)?;
    let embed = encoder.config().embed_dim;
    if !params.enabled() {
        let out = encoder.encode_layerwise(&z0, None)?;
        return Ok(out.frame_features.reshape((clips.len(), frames, embed))?.mean(1)?);
    }
    let prompter = ClipPrompter { params, frames };
    let out = encoder.encode_layerwise(&z0, Some(&prompter))?;
    match params.cfg.pooling {
        VideoPooling::MeanFrames => Ok(out.frame_features.reshape((clips.len(), frames, embed))?.mean(1)?),
        VideoPooling::Summary => {
            let prompts = out
                .final_prompts
                .ok_or_else(|| Error::Invalid("encoder returned no prompt outputs".into()))?;
            let width = encoder.config().width;
            let s = prompts
                .narrow(1, 0, 1)?
                .reshape((clips.len(), frames, width))?
                .mean(1)?;
            encoder.project(&s)
        }
    }
}

pub fn encode_video(encoder: &VisionEncoder, params: &VisualPromptParams, clip: &FrameSequence) -> Result<Tensor> {
    Ok(encode_videos(encoder, params, &[clip])?.squeeze(0)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::VisionEncoderConfig;
    use crate::nn::{checksum, to_vec1_f64, to_vec2_f64};
    use candle_core::{DType, Device};

    fn small_encoder(dtype: DType) -> VisionEncoder {
        let cfg = VisionEncoderConfig {
            width: 24,
            depth: 2,
            heads: 2,
            embed_dim: 16,
            ..VisionEncoderConfig::default()
        };
        VisionEncoder::random(&cfg, &mut Init::new(9, dtype, &Device::Cpu)).unwrap()
    }

    fn clip(seed: u8, frames: usize) -> FrameSequence {
        let px = (0..frames * 64 * 64)
            .map(|i| ((i as u32 * 31 + seed as u32 * 97) % 251) as u8)
            .collect();
        FrameSequence::new(px, frames, 64, 64, 1).unwrap()
    }

    #[test]
    fn train_windows_match_enumeration() {
        let spec = WindowSpec::default();
        let starts: Vec<usize> = sliding_windows(120, &spec, WindowMode::Train)
            .unwrap()
            .iter()
            .map(|r| r.start)
            .collect();
        assert_eq!(starts, vec![0, 25, 50]);
        assert_eq!(sliding_windows(70, &spec, WindowMode::Train).unwrap(), vec![0..70]);
        assert_eq!(sliding_windows(40, &spec, WindowMode::Eval).unwrap(), vec![0..70]);
        assert!(sliding_windows(0, &spec, WindowMode::Train).is_err());
    }

    #[test]
    fn window_count_closed_form() {
        let spec = WindowSpec::default();
        for len in 70..=300 {
            let train = sliding_windows(len, &spec, WindowMode::Train).unwrap();
            assert_eq!(train.len(), (len - 70) / 25 + 1);
            let eval = sliding_windows(len, &spec, WindowMode::Eval).unwrap();
            assert_eq!(eval.len(), len / 70);
            for pair in eval.windows(2) {
                assert_eq!(pair[0].end, pair[1].start);
            }
            assert_eq!(eval[0].start, 0);
        }
    }

    #[test]
    fn sampling_and_padding() {
        let spec = WindowSpec::default();
        assert_eq!(spec.sample_indices(&(0..70)), vec![4, 13, 21, 30, 39, 48, 56, 65]);
        let short = clip(1, 40);
        let w = window_frames(&short, &(0..70), &spec).unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w.frame(7), short.frame(39));
        assert_eq!(w.frame(0), short.frame(4));
    }

    #[test]
    fn frames_round_trip_through_blob() {
        let dir = tempfile::tempdir().unwrap();
        let c = clip(3, 5);
        c.save(dir.path()).unwrap();
        assert_eq!(FrameSequence::load(dir.path()).unwrap(), c);
    }

    #[test]
    fn learner_shapes_and_singleton_summary() {
        let enc = small_encoder(DType::F64);
        let mut store = ParamStore::new();
        let mut init = Init::new(1, DType::F64, &Device::Cpu);
        let params = VisualPromptParams::new(&VisualPromptConfig::default(), &enc, &mut store, &mut init).unwrap();
        let summaries = init.normal(&[2, 5, 24], 1.0).unwrap();
        let (s, g, l) = params.video_prompt_learner(&summaries, 0).unwrap();
        assert_eq!(s.dims(), &[2, 24]);
        assert_eq!(g.dims(), &[4, 24]);
        assert_eq!(l.dims(), &[2, 5, 24]);
        let other = init.normal(&[1, 3, 24], 1.0).unwrap();
        let (_, g2, _) = params.video_prompt_learner(&other, 0).unwrap();
        assert_eq!(to_vec2_f64(&g).unwrap(), to_vec2_f64(&g2).unwrap());

        let one = init.normal(&[1, 1, 24], 1.0).unwrap();
        let (s1, _, _) = params.video_prompt_learner(&one, 1).unwrap();
        // identity-initialized value map: S is the summary plus its temporal code
        let pe = temporal_encoding(1, 24, 0.1);
        let expect: Vec<f64> = to_vec1_f64(&one.flatten_all().unwrap())
            .unwrap()
            .iter()
            .zip(&pe)
            .map(|(a, b)| a + b)
            .collect();
        for (a, b) in to_vec1_f64(&s1.squeeze(0).unwrap()).unwrap().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(params.video_prompt_learner(&one, 2).is_err());
    }

    #[test]
    fn disabled_prompts_mean_frame_features() {
        let enc = small_encoder(DType::F32);
        let mut store = ParamStore::new();
        let mut init = Init::new(1, DType::F32, &Device::Cpu);
        let cfg = VisualPromptConfig { enabled: false, ..Default::default() };
        let params = VisualPromptParams::new(&cfg, &enc, &mut store, &mut init).unwrap();
        assert!(store.is_empty());
        let c = clip(2, 3);
        let f = encode_video(&enc, &params, &c).unwrap();
        assert_eq!(f.dims(), &[16]);
        let z0 = enc.tokenize_frames(c.pixels(), 3, 64, 64, 1).unwrap();
        let frames = enc.encode_layerwise(&z0, None).unwrap().frame_features;
        let mean = to_vec1_f64(&frames.mean(0).unwrap()).unwrap();
        for (a, b) in to_vec1_f64(&f).unwrap().iter().zip(&mean) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn prompted_video_is_time_sensitive_and_batch_consistent() {
        let enc = small_encoder(DType::F64);
        let mut store = ParamStore::new();
        let mut init = Init::new(4, DType::F64, &Device::Cpu);
        let params = VisualPromptParams::new(&VisualPromptConfig::default(), &enc, &mut store, &mut init).unwrap();
        let a = clip(5, 4);
        let rev = a.select(&[3, 2, 1, 0]).unwrap();
        let fa = to_vec1_f64(&encode_video(&enc, &params, &a).unwrap()).unwrap();
        let fr = to_vec1_f64(&encode_video(&enc, &params, &rev).unwrap()).unwrap();
        assert!(fa.iter().zip(&fr).any(|(x, y)| (x - y).abs() > 1e-9));
        let b = clip(6, 4);
        let both = to_vec2_f64(&encode_videos(&enc, &params, &[&a, &b]).unwrap()).unwrap();
        for (x, y) in both[0].iter().zip(&fa) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gradient_reaches_every_prompt_parameter() {
        let enc = small_encoder(DType::F32);
        let before = checksum(enc.tensors()).unwrap();
        let mut store = ParamStore::new();
        let mut init = Init::new(4, DType::F32, &Device::Cpu);
        let params = VisualPromptParams::new(&VisualPromptConfig::default(), &enc, &mut store, &mut init).unwrap();
        let f = encode_video(&enc, &params, &clip(7, 2)).unwrap();
        let grads = f.sqr().unwrap().sum_all().unwrap().backward().unwrap();
        for (name, var) in store.iter() {
            assert!(grads.get(var.as_tensor()).is_some(), "{name} has no gradient");
        }
        assert_eq!(before, checksum(enc.tensors()).unwrap());
    }
}
