//! AdamW with decoupled weight decay and a cosine step-size schedule.

use candle_core::{Tensor, Var};
use candle_nn::{AdamW, Optimizer as _, ParamsAdamW};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Linear warm-up steps before the cosine decay.
    pub warmup_steps: usize,
    /// Final step size as a fraction of `lr`.
    pub final_lr_fraction: f64,
    /// Step-size multipliers for parameters by name prefix; first match wins.
    pub lr_scales: Vec<LrScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrScale {
    pub prefix: String,
    pub scale: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.01,
            warmup_steps: 0,
            final_lr_fraction: 0.0,
            lr_scales: vec![LrScale {
                prefix: "text_prompt.proj.".into(),
                scale: 0.001,
            }],
        }
    }
}

/// Step size at `step` of `total` (0-based).
pub fn cosine_lr(cfg: &OptimConfig, step: usize, total: usize) -> f64 {
    if step < cfg.warmup_steps {
        return cfg.lr * (step + 1) as f64 / cfg.warmup_steps as f64;
    }
    let span = total.saturating_sub(cfg.warmup_steps).max(1);
    let progress = ((step - cfg.warmup_steps) as f64 / span as f64).min(1.0);
    let floor = cfg.lr * cfg.final_lr_fraction;
    floor + 0.5 * (cfg.lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
}

pub struct Optimizer {
    /// One AdamW per distinct step-size multiplier.
    groups: Vec<(AdamW, f64)>,
    cfg: OptimConfig,
    total_steps: usize,
    step: usize,
}

impl Optimizer {
    pub fn new(store: &ParamStore, cfg: &OptimConfig, total_steps: usize) -> Result<Self> {
        if store.is_empty() {
            return Err(Error::Invalid("no learnable parameters".into()));
        }
        if cfg.lr_scales.iter().any(|g| !(g.scale.is_finite() && g.scale >= 0.0)) {
            return Err(Error::Config("step-size multipliers must be finite and non-negative".into()));
        }
        let mut buckets: Vec<(f64, Vec<Var>)> = Vec::new();
        for (name, var) in store.iter() {
            let scale = cfg
                .lr_scales
                .iter()
                .find(|g| name.starts_with(&g.prefix))
                .map_or(1.0, |g| g.scale);
            match buckets.iter_mut().find(|(s, _)| *s == scale) {
                Some((_, vars)) => vars.push(var.clone()),
                None => buckets.push((scale, vec![var.clone()])),
            }
        }
        let lr = cosine_lr(cfg, 0, total_steps);
        let groups = buckets
            .into_iter()
            .map(|(scale, vars)| {
                let params = ParamsAdamW {
                    lr: lr * scale,
                    weight_decay: cfg.weight_decay,
                    ..ParamsAdamW::default()
                };
                Ok((AdamW::new(vars, params)?, scale))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            groups,
            cfg: cfg.clone(),
            total_steps,
            step: 0,
        })
    }

    pub fn current_lr(&self) -> f64 {
        cosine_lr(&self.cfg, self.step, self.total_steps)
    }

    /// Backpropagates `loss` and applies one update.
    pub fn backward_step(&mut self, loss: &Tensor) -> Result<()> {
        let lr = self.current_lr();
        let grads = loss.backward()?;
        for (opt, scale) in &mut self.groups {
            opt.set_learning_rate(lr * *scale);
            opt.step(&grads)?;
        }
        self.step += 1;
        Ok(())
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }
}
