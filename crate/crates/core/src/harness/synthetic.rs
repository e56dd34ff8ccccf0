//! Point-light walker videos paired with sampled gait-parameter records.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param_corpus::{ParameterRecord, Schema};
use crate::video_branch::FrameSequence;

pub const SPEED: usize = 0;
pub const CADENCE: usize = 1;
pub const STEP_LENGTH: usize = 2;
pub const ARM_SWING: usize = 16;
pub const LEG_LENGTH: usize = 27;

/// Number of rendered joints.
pub const JOINTS: usize = 13;

/// Healthy reference `(mean, std)` for each built-in parameter.
const HEALTHY: [(f64, f64); 29] = [
    (1.25, 0.10),
    (112.0, 6.0),
    (66.0, 5.0),
    (132.0, 10.0),
    (0.54, 0.03),
    (1.08, 0.06),
    (0.40, 0.03),
    (0.68, 0.04),
    (0.40, 0.03),
    (0.28, 0.03),
    (37.0, 1.5),
    (63.0, 1.5),
    (37.0, 1.5),
    (26.0, 2.0),
    (9.0, 2.0),
    (6.0, 3.0),
    (30.0, 4.0),
    (2.5, 0.8),
    (2.5, 0.8),
    (2.5, 0.8),
    (2.5, 0.8),
    (2.5, 0.8),
    (2.5, 0.8),
    (2.5, 0.8),
    (3.0, 1.0),
    (3.0, 1.0),
    (9.0, 2.0),
    (88.0, 4.0),
    (95.0, 3.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Forward trunk lean of the walker in degrees.
    pub lean_deg: f64,
}

impl ClassDistribution {
    /// Healthy reference shifted by `shifts` (parameter, multiples of its std).
    fn shifted(name: &str, shifts: &[(usize, f64)], lean_deg: f64) -> Self {
        let mut mean: Vec<f64> = HEALTHY.iter().map(|p| p.0).collect();
        let std: Vec<f64> = HEALTHY.iter().map(|p| p.1).collect();
        for &(p, z) in shifts {
            mean[p] += z * std[p];
        }
        Self {
            name: name.into(),
            mean,
            std,
            lean_deg,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<f64>> {
        self.mean
            .iter()
            .zip(&self.std)
            .map(|(&m, &s)| {
                Normal::new(m, s)
                    .map(|d| d.sample(rng))
                    .map_err(|e| Error::Config(format!("class `{}`: {e}", self.name)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerGeometry {
    pub image_size: usize,
    pub fps: f64,
    pub pixels_per_meter: f64,
    /// Image row of the ground line.
    pub ground_row: f64,
    pub splat_sigma: f64,
    /// Speed of the panning camera in m/s.
    pub camera_speed: f64,
    /// Fraction of the walker-camera speed difference visible as drift.
    pub drift_gain: f64,
    /// Standard deviation of additive pixel noise (0-255 scale).
    pub noise_std: f64,
}

impl Default for WalkerGeometry {
    fn default() -> Self {
        Self {
            image_size: 64,
            fps: 30.0,
            pixels_per_meter: 27.0,
            ground_row: 58.0,
            splat_sigma: 1.2,
            camera_speed: 1.0,
            drift_gain: 0.5,
            noise_std: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassDistribution>,
    pub healthy: String,
    pub subjects_per_class: usize,
    pub clips_per_subject: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    /// Parameters the classes are meant to differ on.
    pub discriminative: Vec<usize>,
    pub walker: WalkerGeometry,
}

impl SyntheticSpec {
    /// Built-in specs: `dementia-group` (3 classes), `gait-scoring` (4 classes)
    /// and `paper-scale-synthetic` (3 classes, 43 subjects, ~118 long clips).
    pub fn preset(name: &str) -> Result<Self> {
        let dementia = || {
            vec![
                ClassDistribution::shifted("healthy", &[], 0.0),
                ClassDistribution::shifted(
                    "dementia with lewy bodies",
                    &[
                        (SPEED, -4.0),
                        (CADENCE, -2.5),
                        (STEP_LENGTH, -4.5),
                        (3, -4.5),
                        (9, 2.0),
                        (13, 2.0),
                        (ARM_SWING, -3.5),
                        (20, 2.0),
                    ],
                    14.0,
                ),
                ClassDistribution::shifted(
                    "alzheimer disease",
                    &[
                        (SPEED, -2.0),
                        (CADENCE, -1.2),
                        (STEP_LENGTH, -2.0),
                        (3, -2.0),
                        (19, 1.5),
                        (28, -1.5),
                    ],
                    6.0,
                ),
            ]
        };
        let base = |classes: Vec<ClassDistribution>, healthy: &str| Self {
            classes,
            healthy: healthy.into(),
            subjects_per_class: 40,
            clips_per_subject: 1,
            min_frames: 70,
            max_frames: 120,
            discriminative: vec![SPEED, CADENCE, STEP_LENGTH],
            walker: WalkerGeometry::default(),
        };
        let spec = match name {
            "dementia-group" | "default" => base(dementia(), "healthy"),
            "gait-scoring" => {
                let level = |name: &str, s: f64| {
                    ClassDistribution::shifted(
                        name,
                        &[
                            (SPEED, -1.5 * s),
                            (CADENCE, -1.0 * s),
                            (STEP_LENGTH, -1.5 * s),
                            (3, -1.5 * s),
                            (ARM_SWING, -1.0 * s),
                            (9, 0.7 * s),
                        ],
                        4.0 * s,
                    )
                };
                let mut s = base(
                    vec![level("normal", 0.0), level("slight", 1.0), level("mild", 2.0), level("moderate", 3.0)],
                    "normal",
                );
                s.subjects_per_class = 30;
                s
            }
            "paper-scale-synthetic" => {
                let mut s = base(dementia(), "healthy");
                s.subjects_per_class = 0;
                s.clips_per_subject = 0;
                s.min_frames = 200;
                s.max_frames = 320;
                s
            }
            other => return Err(Error::Config(format!("unknown synthetic preset `{other}`"))),
        };
        Ok(spec)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn schema(&self) -> Schema {
        let names = self.class_names();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Schema::builtin(&refs, &self.healthy)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::Config("synthetic spec needs at least two classes".into()));
        }
        if !self.classes.iter().any(|c| c.name == self.healthy) {
            return Err(Error::Config(format!("healthy class `{}` is not defined", self.healthy)));
        }
        for c in &self.classes {
            if c.mean.len() != HEALTHY.len() || c.std.len() != HEALTHY.len() {
                return Err(Error::shape(format!("class `{}` distribution", c.name), HEALTHY.len(), c.mean.len()));
            }
            for (p, (&m, &s)) in c.mean.iter().zip(&c.std).enumerate() {
                if !m.is_finite() || !s.is_finite() || s <= 0.0 {
                    return Err(Error::Degenerate {
                        name: format!("{} / parameter {p}", c.name),
                        message: format!("std must be positive and finite, got {s}"),
                    });
                }
            }
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return Err(Error::Config("frame range must satisfy 0 < min <= max".into()));
        }
        if self.walker.image_size < 16 || self.walker.splat_sigma <= 0.0 || self.walker.fps <= 0.0 {
            return Err(Error::Config("walker geometry: image >= 16 px, positive sigma and fps".into()));
        }
        if self.clip_layout().is_empty() {
            return Err(Error::Config("synthetic spec yields no clips".into()));
        }
        Ok(())
    }

    /// Smallest separation, in pooled standard deviations, between any two
    /// class means on each discriminative parameter.
    pub fn separations(&self) -> Vec<(usize, f64)> {
        self.discriminative
            .iter()
            .map(|&p| {
                let mut min = f64::INFINITY;
                for (i, a) in self.classes.iter().enumerate() {
                    for b in &self.classes[i + 1..] {
                        let pooled = ((a.std[p].powi(2) + b.std[p].powi(2)) / 2.0).sqrt();
                        min = min.min((a.mean[p] - b.mean[p]).abs() / pooled);
                    }
                }
                (p, min)
            })
            .collect()
    }

    /// `(label, subject, clip-in-subject)` for every clip, class-major.
    pub fn clip_layout(&self) -> Vec<(usize, usize, usize)> {
        if self.subjects_per_class == 0 {
            return paper_scale_layout(self.classes.len());
        }
        let mut out = Vec::new();
        for label in 0..self.classes.len() {
            for s in 0..self.subjects_per_class {
                for c in 0..self.clips_per_subject {
                    out.push((label, label * self.subjects_per_class + s, c));
                }
            }
        }
        out
    }
}

/// 43 subjects split over the classes with 2-3 clips each, 118 clips total.
fn paper_scale_layout(classes: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for s in 0..43 {
        let label = s % classes;
        let clips = if s < 32 { 3 } else { 2 };
        out.extend((0..clips).map(|c| (label, s, c)));
    }
    out
}

/// One generated clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClip {
    pub label: usize,
    pub subject: usize,
    pub index: usize,
    pub values: Vec<f64>,
    pub video: FrameSequence,
}

/// Per-clip generator stream derived from the master seed.
fn clip_rng(seed: u64, clip: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(clip as u64 + 1);
    rng
}

/// Renders every clip of `spec`; clip `i` depends only on `(seed, i)`.
pub fn generate_clips(spec: &SyntheticSpec, seed: u64) -> Result<Vec<SyntheticClip>> {
    spec.validate()?;
    spec.clip_layout()
        .into_iter()
        .enumerate()
        .map(|(i, (label, subject, index))| {
            let mut rng = clip_rng(seed, i);
            let class = &spec.classes[label];
            let values = class.sample(&mut rng)?;
            let frames = rng.random_range(spec.min_frames..=spec.max_frames);
            let video = render_walker(&values, class.lean_deg, &spec.walker, frames, &mut rng)?;
            Ok(SyntheticClip {
                label,
                subject,
                index,
                values,
                video,
            })
        })
        .collect()
}

/// Parameter records only (no video), `n` per class.
pub fn sample_records(spec: &SyntheticSpec, n: usize, seed: u64) -> Result<Vec<ParameterRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n * spec.classes.len());
    for i in 0..n {
        for (label, class) in spec.classes.iter().enumerate() {
            out.push(ParameterRecord {
                subject_id: format!("r{i:05}-{label}"),
                label,
                values: class.sample(&mut rng)?,
            });
        }
    }
    Ok(out)
}

/// Joint positions in metres (x forward, y up) at gait phase `phase`.
pub fn walker_pose(values: &[f64], lean_deg: f64, phase: f64) -> [(f64, f64); JOINTS] {
    let leg = (values[LEG_LENGTH] / 100.0).max(0.5);
    let step = (values[STEP_LENGTH] / 100.0).max(0.05);
    let hip_amp = (step / (2.0 * leg)).min(0.9).asin();
    let arm_amp = (values[ARM_SWING].max(0.0) / 2.0).to_radians();
    let lean = lean_deg.to_radians();
    let scale = leg / 0.88;
    let (thigh, shank) = (leg / 2.0, leg / 2.0);
    let (torso, head, upper_arm, forearm) = (0.55 * scale, 0.15 * scale, 0.30 * scale, 0.27 * scale);

    let pelvis = (0.0, leg * (1.0 - 0.03 * phase.sin().powi(2)));
    let neck = (pelvis.0 + torso * lean.sin(), pelvis.1 + torso * lean.cos());
    let shoulder = (pelvis.0 + 0.9 * torso * lean.sin(), pelvis.1 + 0.9 * torso * lean.cos());
    let head_pos = (neck.0 + head * (1.3 * lean).sin(), neck.1 + head * (1.3 * lean).cos());

    let limb = |root: (f64, f64), a: f64, l1: f64, bend: f64, l2: f64| {
        let mid = (root.0 + l1 * a.sin(), root.1 - l1 * a.cos());
        let end = (mid.0 + l2 * (a + bend).sin(), mid.1 - l2 * (a + bend).cos());
        (mid, end)
    };
    let leg_pose = |sign: f64| {
        let a = sign * hip_amp * phase.sin();
        let knee_flex = 0.1 + 0.5 * (sign * phase.cos()).max(0.0);
        limb(pelvis, a, thigh, -knee_flex, shank)
    };
    let arm_pose = |sign: f64| {
        let a = -sign * arm_amp * phase.sin() + lean;
        limb(shoulder, a, upper_arm, 0.35, forearm)
    };
    let (knee_r, ankle_r) = leg_pose(1.0);
    let (knee_l, ankle_l) = leg_pose(-1.0);
    let (elbow_r, wrist_r) = arm_pose(1.0);
    let (elbow_l, wrist_l) = arm_pose(-1.0);
    [
        head_pos, neck, pelvis, shoulder, shoulder, elbow_r, elbow_l, wrist_r, wrist_l, knee_r, knee_l, ankle_r, ankle_l,
    ]
}

/// Brightness of each joint; right-side (near) joints are brighter.
const JOINT_GAIN: [f64; JOINTS] = [1.0, 1.0, 1.0, 1.0, 0.6, 1.0, 0.6, 1.0, 0.6, 1.0, 0.6, 1.0, 0.6];

/// Renders `frames` grayscale frames of a walker driven by `values`.
pub fn render_walker(
    values: &[f64],
    lean_deg: f64,
    geo: &WalkerGeometry,
    frames: usize,
    rng: &mut impl Rng,
) -> Result<FrameSequence> {
    if values.len() != HEALTHY.len() {
        return Err(Error::shape("walker parameters", HEALTHY.len(), values.len()));
    }
    let n = geo.image_size;
    let stride_hz = values[CADENCE].max(1.0) / 120.0;
    let phase0 = rng.random_range(0.0..std::f64::consts::TAU);
    let drift = geo.drift_gain * (values[SPEED] - geo.camera_speed);
    let duration = frames as f64 / geo.fps;
    let noise = Normal::new(0.0, geo.noise_std.max(1e-9)).map_err(|e| Error::Config(e.to_string()))?;
    let radius = (4.0 * geo.splat_sigma).ceil() as isize;
    let inv = 1.0 / (2.0 * geo.splat_sigma * geo.splat_sigma);
    let mut pixels = Vec::with_capacity(frames * n * n);
    let mut canvas = vec![0f64; n * n];
    for f in 0..frames {
        let t = f as f64 / geo.fps;
        let phase = phase0 + std::f64::consts::TAU * stride_hz * t;
        let offset = drift * (t - duration / 2.0);
        canvas.iter_mut().for_each(|c| *c = 0.0);
        for (j, &(x, y)) in walker_pose(values, lean_deg, phase).iter().enumerate() {
            let cx = n as f64 / 2.0 + (x + offset) * geo.pixels_per_meter;
            let cy = geo.ground_row - y * geo.pixels_per_meter;
            let (px, py) = (cx.round() as isize, cy.round() as isize);
            for yy in (py - radius).max(0)..(py + radius + 1).min(n as isize) {
                for xx in (px - radius).max(0)..(px + radius + 1).min(n as isize) {
                    let d2 = (xx as f64 - cx).powi(2) + (yy as f64 - cy).powi(2);
                    canvas[yy as usize * n + xx as usize] += JOINT_GAIN[j] * (-d2 * inv).exp();
                }
            }
        }
        pixels.extend(canvas.iter().map(|&c| (c * 255.0 + noise.sample(rng)).clamp(0.0, 255.0).round() as u8));
    }
    let mut seq = FrameSequence::new(pixels, frames, n, n, 1)?;
    seq.fps = geo.fps;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        let mut s = SyntheticSpec::preset("dementia-group").unwrap();
        s.subjects_per_class = 2;
        s.min_frames = 12;
        s.max_frames = 20;
        s
    }

    #[test]
    fn presets_are_valid_and_separated() {
        for name in ["dementia-group", "gait-scoring", "paper-scale-synthetic"] {
            let s = SyntheticSpec::preset(name).unwrap();
            s.validate().unwrap();
            let seps = s.separations();
            assert!(seps.len() >= 3);
            assert!(seps.iter().all(|&(_, d)| d >= 1.0), "{name}: {seps:?}");
        }
    }

    #[test]
    fn paper_scale_layout_counts() {
        let s = SyntheticSpec::preset("paper-scale-synthetic").unwrap();
        let layout = s.clip_layout();
        assert_eq!(layout.len(), 118);
        let mut subjects: Vec<usize> = layout.iter().map(|l| l.1).collect();
        subjects.dedup();
        assert_eq!(subjects.len(), 43);
    }

    #[test]
    fn clip_counts() {
        let mut s = small();
        s.subjects_per_class = 5;
        s.clips_per_subject = 3;
        s.classes.truncate(2);
        s.min_frames = 4;
        s.max_frames = 4;
        let clips = generate_clips(&s, 1).unwrap();
        assert_eq!(clips.len(), 30);
        let mut subjects: Vec<usize> = clips.iter().map(|c| c.subject).collect();
        subjects.dedup();
        assert_eq!(subjects.len(), 10);
        assert!(clips.iter().all(|c| c.values.len() == 29 && c.video.len() == 4));
    }

    #[test]
    fn zero_std_is_rejected() {
        let mut s = small();
        s.classes[1].std[5] = 0.0;
        assert!(matches!(generate_clips(&s, 0), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn same_seed_same_frames() {
        let s = small();
        let a = generate_clips(&s, 42).unwrap();
        let b = generate_clips(&s, 42).unwrap();
        let c = generate_clips(&s, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].video, c[0].video);
    }

    #[test]
    fn empirical_means_within_three_standard_errors() {
        let s = SyntheticSpec::preset("dementia-group").unwrap();
        let records = sample_records(&s, 200, 9).unwrap();
        for (label, class) in s.classes.iter().enumerate() {
            let rows: Vec<&ParameterRecord> = records.iter().filter(|r| r.label == label).collect();
            assert_eq!(rows.len(), 200);
            for p in 0..29 {
                let mean = rows.iter().map(|r| r.values[p]).sum::<f64>() / 200.0;
                let se = class.std[p] / 200f64.sqrt();
                assert!((mean - class.mean[p]).abs() <= 3.0 * se, "{} p{p}", class.name);
            }
        }
    }

    #[test]
    fn walker_stays_in_frame_and_moves() {
        let s = small();
        let clips = generate_clips(&s, 5).unwrap();
        for clip in &clips {
            let v = &clip.video;
            let lit: usize = v.pixels().iter().filter(|&&p| p > 128).count();
            assert!(lit > v.len() * 5, "walker too dim");
            assert_ne!(v.frame(0), v.frame(v.len() - 1));
        }
    }

    #[test]
    fn lean_moves_the_head_forward() {
        let vals: Vec<f64> = HEALTHY.iter().map(|p| p.0).collect();
        let upright = walker_pose(&vals, 0.0, 0.3);
        let stooped = walker_pose(&vals, 15.0, 0.3);
        assert!(stooped[0].0 > upright[0].0 + 0.1);
        assert!(stooped[0].1 < upright[0].1);
    }
}
