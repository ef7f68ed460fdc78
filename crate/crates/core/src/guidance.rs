//! Guidance algebra: classifier-free guidance, the adjusted low-resolution
//! prediction, the upsample-guidance combination, and its Heaviside-gated
//! schedule.
//!
//! Upsample guidance corrects a prediction at the target resolution with a
//! prediction made at the trained (lower) resolution:
//!
//! `ε̃ = ε_hi + w_t · U[(1/√n)·ε(D[x_t]/√P, τ) − D[ε_hi]]`
//!
//! where `D`/`U` are the block-average/nearest-upsample pair, `n` the
//! averaging count, `P = α_t + (1−α_t)/n` the power factor, and `τ` the
//! SNR-matched step. The gate is `w_t = θ` for `t ≥ (1−η)·T` and `0`
//! otherwise, so guidance acts only in the high-noise phase and the low
//! predictor is never called when the gate is closed.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::predictors::Predictor;
use crate::resample::{downsample_box, upsample_nearest, ScalePlan};
use crate::schedule::NoiseSchedule;

/// Order in which classifier-free guidance and upsample guidance compose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ComposeOrder {
    /// Apply CFG independently at each resolution, then combine the two
    /// CFG composites with upsample guidance (the default: the composite
    /// plays the role of "the model" in the combination).
    #[default]
    CfgFirst,
    /// Apply upsample guidance per branch (unconditional, conditional),
    /// then CFG. Algebraically identical for linear combinations; exposed
    /// for experimentation.
    UgInsideCfg,
}

/// All knobs of a guided prediction.
#[derive(Clone, Debug)]
pub struct GuidanceConfig {
    /// Classifier-free guidance scale `w` (≥ 0); only used when a condition
    /// label is supplied.
    pub cfg_scale: f64,
    /// Upsample-guidance strength θ (≥ 0).
    pub ug_theta: f64,
    /// Fraction η ∈ [0, 1] of the schedule (from the noisy end) where
    /// upsample guidance is active.
    pub ug_eta: f64,
    /// Per-axis scale factors between trained and target resolution.
    pub plan: ScalePlan,
    /// Skip the SNR-matched time adjustment (τ := t).
    pub ablate_time_adjust: bool,
    /// Skip the power rescaling (P := 1).
    pub ablate_power_adjust: bool,
    pub order: ComposeOrder,
}

impl GuidanceConfig {
    /// Plain sampling at one resolution: no CFG interplay, no upsample term.
    pub fn plain(axes: usize) -> GuidanceConfig {
        GuidanceConfig {
            cfg_scale: 0.0,
            ug_theta: 0.0,
            ug_eta: 1.0,
            plan: ScalePlan::identity(axes),
            ablate_time_adjust: false,
            ablate_power_adjust: false,
            order: ComposeOrder::CfgFirst,
        }
    }

    /// Upsample guidance with strength θ over the noisiest η fraction.
    pub fn upsample(plan: ScalePlan, theta: f64, eta: f64) -> Result<GuidanceConfig> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidConfig(format!("eta must lie in [0, 1], got {eta}")));
        }
        if theta < 0.0 {
            return Err(Error::InvalidConfig(format!("theta must be >= 0, got {theta}")));
        }
        Ok(GuidanceConfig {
            cfg_scale: 0.0,
            ug_theta: theta,
            ug_eta: eta,
            plan,
            ablate_time_adjust: false,
            ablate_power_adjust: false,
            order: ComposeOrder::CfgFirst,
        })
    }
}

/// Call accounting for one or more trajectories, split by resolution.
#[derive(Clone, Debug, Default)]
pub struct RunStats {
    pub hi_calls: u64,
    pub low_calls: u64,
    /// Total entries fed to the predictor at each resolution; the
    /// per-element cost model for overhead accounting.
    pub hi_elements: u64,
    pub low_elements: u64,
    /// `(t, variance)` of the field actually fed to the low-resolution
    /// predictor, recorded whenever the gate is open.
    pub low_input_variance: Vec<(usize, f64)>,
}

impl RunStats {
    /// Folds another tally into this one.
    pub fn absorb(&mut self, other: &RunStats) {
        self.hi_calls += other.hi_calls;
        self.low_calls += other.low_calls;
        self.hi_elements += other.hi_elements;
        self.low_elements += other.low_elements;
        self.low_input_variance.extend_from_slice(&other.low_input_variance);
    }

    /// Extra predictor work relative to the baseline, under the
    /// equal-cost-per-element model.
    pub fn overhead_fraction(&self) -> f64 {
        if self.hi_elements == 0 {
            return 0.0;
        }
        self.low_elements as f64 / self.hi_elements as f64
    }
}

/// Classifier-free guidance: `eps_uncond + w·(eps_cond − eps_uncond)`.
pub fn cfg_combine(eps_uncond: &Field, eps_cond: &Field, w: f64) -> Result<Field> {
    Field::linear_comb(1.0 - w, eps_uncond, w, eps_cond)
}

/// Heaviside-gated guidance strength: θ when `t ≥ (1−η)·T` (H(0) = 1),
/// else 0. With η = 1 the gate is open at every step.
pub fn guidance_scale(t: usize, t_count: usize, theta: f64, eta: f64) -> f64 {
    if t as f64 >= (1.0 - eta) * t_count as f64 {
        theta
    } else {
        0.0
    }
}

/// The adjusted low-resolution prediction
/// `(1/√n)·ε_p(D[x_t]/√P, τ, c)`, with the two ablation switches.
/// Also reports the empirical variance of the rescaled predictor input,
/// the diagnostic behind the power-rescaling ablation.
pub fn adjusted_low_eps_with_variance(
    p: &dyn Predictor,
    x_t: &Field,
    t: usize,
    cond: Option<u32>,
    cfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<(Field, f64)> {
    let n = cfg.plan.n();
    let tau = if cfg.ablate_time_adjust { t } else { schedule.adjusted_time(t, n)? };
    let power = if cfg.ablate_power_adjust { 1.0 } else { schedule.power_factor(t, n)? };
    let low_input = downsample_box(x_t, &cfg.plan)?.scale(1.0 / power.sqrt());
    let (_, variance) = low_input.moments();
    let eps_low = p.predict(&low_input, tau, cond)?;
    Ok((eps_low.scale(1.0 / (n as f64).sqrt()), variance))
}

/// [`adjusted_low_eps_with_variance`] without the diagnostic.
pub fn adjusted_low_eps(
    p: &dyn Predictor,
    x_t: &Field,
    t: usize,
    cond: Option<u32>,
    cfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<Field> {
    adjusted_low_eps_with_variance(p, x_t, t, cond, cfg, schedule).map(|(f, _)| f)
}

/// The upsample-guidance combination
/// `eps_hi + w_t·U[eps_low_adj − D[eps_hi]]`.
pub fn ug_combine(
    eps_hi: &Field,
    eps_low_adj: &Field,
    w_t: f64,
    plan: &ScalePlan,
) -> Result<Field> {
    let d_hi = downsample_box(eps_hi, plan)?;
    if !eps_low_adj.same_shape(&d_hi) {
        return Err(Error::ShapeMismatch {
            left: eps_low_adj.shape_string(),
            right: format!("{} (downsampled target shape)", d_hi.shape_string()),
        });
    }
    let gap = Field::linear_comb(1.0, eps_low_adj, -1.0, &d_hi)?;
    let correction = upsample_nearest(&gap, plan)?;
    Field::linear_comb(1.0, eps_hi, w_t, &correction)
}

/// Prediction at the target resolution with CFG composed per
/// `cfg.cfg_scale` when `cond` is present.
fn cfg_eps(
    p: &dyn Predictor,
    x: &Field,
    t: usize,
    cond: Option<u32>,
    w: f64,
    stats: &mut RunStats,
) -> Result<Field> {
    let uncond = p.predict(x, t, None)?;
    stats.hi_calls += 1;
    stats.hi_elements += x.numel() as u64;
    match cond {
        None => Ok(uncond),
        Some(c) => {
            let cond_eps = p.predict(x, t, Some(c))?;
            stats.hi_calls += 1;
            stats.hi_elements += x.numel() as u64;
            cfg_combine(&uncond, &cond_eps, w)
        }
    }
}

/// Low-resolution counterpart of [`cfg_eps`], built on the adjusted
/// prediction.
fn cfg_low_eps(
    p: &dyn Predictor,
    x_t: &Field,
    t: usize,
    cond: Option<u32>,
    cfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
    stats: &mut RunStats,
) -> Result<Field> {
    let low_elems = (x_t.numel() / cfg.plan.n()) as u64;
    let (uncond, variance) = adjusted_low_eps_with_variance(p, x_t, t, None, cfg, schedule)?;
    stats.low_calls += 1;
    stats.low_elements += low_elems;
    stats.low_input_variance.push((t, variance));
    match cond {
        None => Ok(uncond),
        Some(c) => {
            let cond_eps = adjusted_low_eps(p, x_t, t, Some(c), cfg, schedule)?;
            stats.low_calls += 1;
            stats.low_elements += low_elems;
            cfg_combine(&uncond, &cond_eps, cfg.cfg_scale)
        }
    }
}

/// Full guided prediction: CFG at both resolutions plus upsample guidance,
/// composed per `cfg.order`. When the gate is closed (`w_t = 0`) no
/// low-resolution work happens at all, so the θ=0 path is arithmetically
/// identical to plain (CFG) prediction.
pub fn guided_predict(
    p: &dyn Predictor,
    x_t: &Field,
    t: usize,
    cond: Option<u32>,
    cfg: &GuidanceConfig,
    schedule: &NoiseSchedule,
    stats: &mut RunStats,
) -> Result<Field> {
    let w_t = guidance_scale(t, schedule.len(), cfg.ug_theta, cfg.ug_eta);
    if w_t == 0.0 {
        return cfg_eps(p, x_t, t, cond, cfg.cfg_scale, stats);
    }
    match cfg.order {
        ComposeOrder::CfgFirst => {
            let eps_hi = cfg_eps(p, x_t, t, cond, cfg.cfg_scale, stats)?;
            let eps_low = cfg_low_eps(p, x_t, t, cond, cfg, schedule, stats)?;
            ug_combine(&eps_hi, &eps_low, w_t, &cfg.plan)
        }
        ComposeOrder::UgInsideCfg => {
            let branch = |c: Option<u32>, stats: &mut RunStats| -> Result<Field> {
                let eps_hi = p.predict(x_t, t, c)?;
                stats.hi_calls += 1;
                stats.hi_elements += x_t.numel() as u64;
                let low_elems = (x_t.numel() / cfg.plan.n()) as u64;
                let (eps_low, variance) =
                    adjusted_low_eps_with_variance(p, x_t, t, c, cfg, schedule)?;
                stats.low_calls += 1;
                stats.low_elements += low_elems;
                if c.is_none() {
                    stats.low_input_variance.push((t, variance));
                }
                ug_combine(&eps_hi, &eps_low, w_t, &cfg.plan)
            };
            let uncond = branch(None, stats)?;
            match cond {
                None => Ok(uncond),
                Some(c) => {
                    let cond_eps = branch(Some(c), stats)?;
                    cfg_combine(&uncond, &cond_eps, cfg.cfg_scale)
                }
            }
        }
    }
}
