//! Training configuration: a flat `key = value` text format with strict
//! (unknown keys rejected) parsing, plus the loss-weight schedule.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::poscodes::CodeSpec;

/// The four fidelity/adversary weights of the training loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Residual L1 weight.
    pub lambda_gamma: f64,
    /// YUV image L1 weight.
    pub lambda_i: f64,
    /// Perceptual (blurred-pyramid) weight.
    pub lambda_s: f64,
    /// Critic (adversarial) weight.
    pub lambda_c: f64,
}

impl LossWeights {
    pub const ZERO: LossWeights =
        LossWeights { lambda_gamma: 0.0, lambda_i: 0.0, lambda_s: 0.0, lambda_c: 0.0 };

    pub fn any_active(&self) -> bool {
        self.lambda_gamma > 0.0 || self.lambda_i > 0.0 || self.lambda_s > 0.0 || self.lambda_c > 0.0
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_gamma", self.lambda_gamma),
            ("lambda_i", self.lambda_i),
            ("lambda_s", self.lambda_s),
            ("lambda_c", self.lambda_c),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be a finite non-negative weight, got {v}")));
            }
        }
        Ok(())
    }
}

/// Piecewise-linear schedule of loss weights over phase-2 steps.
///
/// Breakpoints are `(step, weights)`; weights are interpolated between
/// breakpoints and held constant outside their range. Phase 1 always runs
/// with all four weights at zero, independent of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSchedule {
    pub breakpoints: Vec<(u64, LossWeights)>,
}

impl WeightSchedule {
    pub fn new(mut breakpoints: Vec<(u64, LossWeights)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::config("lambda_schedule needs at least one breakpoint"));
        }
        breakpoints.sort_by_key(|b| b.0);
        for w in &breakpoints {
            w.1.validate()?;
        }
        Ok(Self { breakpoints })
    }

    pub fn at(&self, step: u64) -> LossWeights {
        let bps = &self.breakpoints;
        if step <= bps[0].0 {
            return bps[0].1;
        }
        for pair in bps.windows(2) {
            let (s0, w0) = pair[0];
            let (s1, w1) = pair[1];
            if step <= s1 {
                let t = (step - s0) as f64 / (s1 - s0) as f64;
                let lerp = |a: f64, b: f64| a + t * (b - a);
                return LossWeights {
                    lambda_gamma: lerp(w0.lambda_gamma, w1.lambda_gamma),
                    lambda_i: lerp(w0.lambda_i, w1.lambda_i),
                    lambda_s: lerp(w0.lambda_s, w1.lambda_s),
                    lambda_c: lerp(w0.lambda_c, w1.lambda_c),
                };
            }
        }
        bps.last().unwrap().1
    }
}

/// Full training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    // Canonical geometry and codes.
    pub height: usize,
    pub width: usize,
    pub receptive_field: usize,
    pub code_dim: usize,
    pub omega_base: f64,
    // Architecture widths.
    pub enc_base: usize,
    pub dec_channels: usize,
    pub critic_base: usize,
    pub splice_base: usize,
    pub margin_frac: f64,
    // Optimization.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub s_min: f64,
    pub seed: u64,
    // Two-phase schedule.
    pub phase1_max_steps: u64,
    pub phase1_target_rmse: f64,
    pub phase2_steps: u64,
    pub lambda_schedule: WeightSchedule,
    /// Random-crop augmentation before decimation (off by default; the loss
    /// target then uses the crop offset).
    pub crop_augment: bool,
    // Bookkeeping.
    pub val_count: usize,
    pub eval_interval: u64,
    pub log_interval: u64,
    pub checkpoint_interval: u64,
    // Splice-net training.
    pub splice_steps: u64,
    pub splice_composites: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            receptive_field: 16,
            code_dim: 8,
            omega_base: 1e-4,
            enc_base: 16,
            dec_channels: 16,
            critic_base: 12,
            splice_base: 12,
            margin_frac: 0.1,
            batch_size: 8,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            s_min: 0.25,
            seed: 7,
            phase1_max_steps: 3000,
            phase1_target_rmse: 2.5,
            phase2_steps: 1200,
            lambda_schedule: WeightSchedule::new(vec![
                (0, LossWeights::ZERO),
                (
                    400,
                    LossWeights { lambda_gamma: 0.5, lambda_i: 1.5, lambda_s: 0.5, lambda_c: 0.02 },
                ),
            ])
            .unwrap(),
            crop_augment: false,
            val_count: 64,
            eval_interval: 100,
            log_interval: 10,
            checkpoint_interval: 500,
            splice_steps: 600,
            splice_composites: 512,
        }
    }
}

impl TrainConfig {
    pub fn code_spec(&self) -> Result<CodeSpec> {
        CodeSpec::new(self.code_dim, self.omega_base, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        self.code_spec()?;
        if self.height != self.width {
            return Err(Error::config("canonical encode size must be square (height == width)"));
        }
        if self.height % 4 != 0 || self.height < 4 * self.receptive_field {
            return Err(Error::config(format!(
                "canonical size {} must be divisible by 4 and at least 4x the receptive field",
                self.height
            )));
        }
        if self.receptive_field < 4 || self.receptive_field % 2 != 0 {
            return Err(Error::config("receptive_field must be even and at least 4"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.s_min > 0.0 && self.s_min <= 1.0) {
            return Err(Error::config(format!("s_min must lie in (0, 1], got {}", self.s_min)));
        }
        if (self.s_min * self.height as f64).floor() < self.receptive_field as f64 {
            return Err(Error::config(
                "s_min decimates below the decoder receptive field; raise s_min",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(self.margin_frac >= 0.0 && self.margin_frac < 0.5) {
            return Err(Error::config("margin_frac must lie in [0, 0.5)"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1/beta2 must lie in [0, 1)"));
        }
        for w in &self.lambda_schedule.breakpoints {
            w.1.validate()?;
        }
        if self.enc_base == 0 || self.dec_channels == 0 || self.critic_base == 0 || self.splice_base == 0 {
            return Err(Error::config("network widths must be positive"));
        }
        Ok(())
    }

    /// Parse a flat `key = value` config file. Unknown keys are rejected;
    /// missing keys keep their defaults.
    pub fn from_str_strict(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("config line {}: expected `key = value`, got `{raw}`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if seen.insert(key.to_string(), ()).is_some() {
                return Err(Error::config(format!("config line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.apply(key, value).map_err(|e| {
                Error::config(format!("config line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_strict(&text)
    }

    /// Apply a single `key = value` override (also used for CLI flag
    /// overrides). Unknown keys are an error.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>().map_err(|_| Error::config(format!("invalid value `{v}` for `{key}`")))
        }
        match key {
            "height" => self.height = p(key, value)?,
            "width" => self.width = p(key, value)?,
            "receptive_field" => self.receptive_field = p(key, value)?,
            "code_dim" => self.code_dim = p(key, value)?,
            "omega_base" => self.omega_base = p(key, value)?,
            "enc_base" => self.enc_base = p(key, value)?,
            "dec_channels" => self.dec_channels = p(key, value)?,
            "critic_base" => self.critic_base = p(key, value)?,
            "splice_base" => self.splice_base = p(key, value)?,
            "margin_frac" => self.margin_frac = p(key, value)?,
            "batch_size" => self.batch_size = p(key, value)?,
            "learning_rate" => self.learning_rate = p(key, value)?,
            "beta1" => self.beta1 = p(key, value)?,
            "beta2" => self.beta2 = p(key, value)?,
            "s_min" => self.s_min = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "phase1_max_steps" => self.phase1_max_steps = p(key, value)?,
            "phase1_target_rmse" => self.phase1_target_rmse = p(key, value)?,
            "phase2_steps" => self.phase2_steps = p(key, value)?,
            "lambda_schedule" => self.lambda_schedule = parse_schedule(value)?,
            "crop_augment" => self.crop_augment = p(key, value)?,
            "val_count" => self.val_count = p(key, value)?,
            "eval_interval" => self.eval_interval = p(key, value)?,
            "log_interval" => self.log_interval = p(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = p(key, value)?,
            "splice_steps" => self.splice_steps = p(key, value)?,
            "splice_composites" => self.splice_composites = p(key, value)?,
            other => return Err(Error::config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }
}

/// Schedule syntax: `step:gamma,i,s,c; step:gamma,i,s,c; ...`
fn parse_schedule(text: &str) -> Result<WeightSchedule> {
    let mut bps = Vec::new();
    for part in text.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (step, ws) = part
            .split_once(':')
            .ok_or_else(|| Error::config(format!("schedule entry `{part}` must be `step:g,i,s,c`")))?;
        let step: u64 = step
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("bad schedule step `{step}`")))?;
        let vals: Vec<f64> = ws
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(format!("bad schedule weights `{ws}`")))?;
        if vals.len() != 4 {
            return Err(Error::config(format!(
                "schedule entry `{part}` must carry 4 weights (gamma, i, s, c)"
            )));
        }
        bps.push((
            step,
            LossWeights { lambda_gamma: vals[0], lambda_i: vals[1], lambda_s: vals[2], lambda_c: vals[3] },
        ));
    }
    WeightSchedule::new(bps)
}
