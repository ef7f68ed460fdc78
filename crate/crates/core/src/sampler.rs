//! Reverse-process sampling: ancestral (DDPM) and deterministic (DDIM)
//! steps built on one shared posterior decomposition, full / strided step
//! subsequences, and the paired initial-noise construction that starts a
//! low- and a high-resolution trajectory from the same noise.
//!
//! Both step rules share the same skeleton. From the noise estimate
//! `ε̂`, invert the forward corruption to `x̂₀ = (x_t − √(1−α_t)·ε̂)/√α_t`,
//! then move to the previous step with
//!
//! `x_prev = √α_p·x̂₀ + √(1−α_p−σ²)·ε̂ + σ·z`
//!
//! where `σ² = (1−α_p)/(1−α_t)·(1−α_t/α_p)` is the forward-posterior
//! variance. Ancestral sampling uses `σ` as is; the deterministic family
//! scales it by `eta_ddim ∈ [0, 1]` (0 disables the noise term entirely).
//! The direction coefficient satisfies
//! `1−α_p−σ² = α_t·(1−α_p)²/(α_p·(1−α_t)) ≥ 0`, so the square root is
//! always real. No noise is injected on the final step (to t = 0).

use crate::error::{Error, Result};
use crate::field::Field;
use crate::guidance::{guided_predict, GuidanceConfig, RunStats};
use crate::predictors::Predictor;
use crate::resample::{downsample_box, upsample_nearest, ScalePlan};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;

/// Which step rule drives the reverse process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerKind {
    /// DDPM: full posterior noise at every step but the last.
    Ancestral,
    /// DDIM: posterior noise scaled by `eta_ddim` (0 = fully deterministic).
    Deterministic,
}

/// Which subset of schedule steps the loop visits. Every variant yields a
/// strictly decreasing sequence from `T−1` down to 0 inclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepSchedule {
    /// Every step: `T−1, T−2, …, 0`.
    Full,
    /// `count` evenly spaced steps (endpoints included).
    Strided { count: usize },
    /// An explicit sequence; validated on use.
    Explicit(Vec<usize>),
}

impl StepSchedule {
    /// Resolves to the concrete step sequence for a schedule of `t_count`
    /// steps, validating the strictly-decreasing `T−1 → 0` contract.
    pub fn steps_for(&self, t_count: usize) -> Result<Vec<usize>> {
        let last = t_count - 1;
        let steps = match self {
            StepSchedule::Full => (0..t_count).rev().collect::<Vec<_>>(),
            StepSchedule::Strided { count } => {
                if *count < 2 || *count > t_count {
                    return Err(Error::InvalidConfig(format!(
                        "strided step count must lie in [2, {t_count}], got {count}"
                    )));
                }
                (0..*count)
                    .map(|i| {
                        let frac = (count - 1 - i) as f64 / (count - 1) as f64;
                        (last as f64 * frac).round() as usize
                    })
                    .collect()
            }
            StepSchedule::Explicit(steps) => steps.clone(),
        };
        if steps.first() != Some(&last) || steps.last() != Some(&0) {
            return Err(Error::InvalidConfig(format!(
                "step sequence must run from {last} down to 0, got {:?}..{:?}",
                steps.first(),
                steps.last()
            )));
        }
        if !steps.windows(2).all(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig(
                "step sequence must be strictly decreasing".into(),
            ));
        }
        Ok(steps)
    }
}

/// Full description of one sampling run (minus the predictor/guidance,
/// which are passed alongside).
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: StepSchedule,
    /// Noise scale for the deterministic family; ignored by `Ancestral`.
    pub eta_ddim: f64,
    /// Base seed; trajectory `i` draws from stream lane `i`.
    pub seed: u64,
    /// How many independent trajectories a batch runs.
    pub trajectories: usize,
    /// Snapshot the state every this many transitions (0 = none).
    pub checkpoint_every: usize,
}

impl SamplerConfig {
    pub fn ancestral_full(seed: u64) -> SamplerConfig {
        SamplerConfig {
            kind: SamplerKind::Ancestral,
            steps: StepSchedule::Full,
            eta_ddim: 0.0,
            seed,
            trajectories: 1,
            checkpoint_every: 0,
        }
    }

    pub fn deterministic_full(seed: u64) -> SamplerConfig {
        SamplerConfig { kind: SamplerKind::Deterministic, ..SamplerConfig::ancestral_full(seed) }
    }
}

/// One completed trajectory.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `(t, x_t)` snapshots taken before every `checkpoint_every`-th
    /// transition.
    pub checkpoints: Vec<(usize, Field)>,
    /// State after the final transition (t = 0).
    pub final_state: Field,
    /// The clean-data estimate `x̂₀` from the final transition.
    pub final_x0: Field,
    /// Predictor call accounting across the whole run.
    pub stats: RunStats,
}

/// Forward-posterior variance `σ² = (1−α_p)/(1−α_t)·(1−α_t/α_p)`,
/// clamped at 0 against rounding.
fn posterior_sigma2(a_t: f64, a_prev: f64) -> f64 {
    ((1.0 - a_prev) / (1.0 - a_t) * (1.0 - a_t / a_prev)).max(0.0)
}

/// Shared step body; `sigma_scale` is 1 for ancestral, `eta_ddim` for the
/// deterministic family. Returns `(x_prev, x̂₀)`.
fn step_core(
    x_t: &Field,
    eps_hat: &Field,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    sigma_scale: f64,
    rng: &mut RngStream,
) -> Result<(Field, Field)> {
    if t_prev >= t {
        return Err(Error::BadStepOrder { t, t_prev });
    }
    let a_t = schedule.alpha(t)?;
    let a_p = schedule.alpha(t_prev)?;
    let x0_hat =
        Field::linear_comb(1.0 / a_t.sqrt(), x_t, -((1.0 - a_t) / a_t).sqrt(), eps_hat)?;
    let sigma = sigma_scale * posterior_sigma2(a_t, a_p).sqrt();
    let dir = (1.0 - a_p - sigma * sigma).max(0.0).sqrt();
    let mut x_prev = Field::linear_comb(a_p.sqrt(), &x0_hat, dir, eps_hat)?;
    if sigma > 0.0 && t_prev > 0 {
        let z = Field::gaussian(x_t.channels(), x_t.dims(), rng)?;
        x_prev = Field::linear_comb(1.0, &x_prev, sigma, &z)?;
    }
    Ok((x_prev, x0_hat))
}

/// One ancestral (DDPM) transition `t → t_prev`. Returns `(x_prev, x̂₀)`.
pub fn ddpm_step(
    x_t: &Field,
    eps_hat: &Field,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    rng: &mut RngStream,
) -> Result<(Field, Field)> {
    step_core(x_t, eps_hat, t, t_prev, schedule, 1.0, rng)
}

/// One deterministic-family (DDIM) transition `t → t_prev`. With
/// `eta_ddim = 0` the result is a pure function of its field inputs.
pub fn ddim_step(
    x_t: &Field,
    eps_hat: &Field,
    t: usize,
    t_prev: usize,
    schedule: &NoiseSchedule,
    eta_ddim: f64,
    rng: &mut RngStream,
) -> Result<(Field, Field)> {
    if !(0.0..=1.0).contains(&eta_ddim) {
        return Err(Error::InvalidConfig(format!(
            "eta_ddim must lie in [0, 1], got {eta_ddim}"
        )));
    }
    step_core(x_t, eps_hat, t, t_prev, schedule, eta_ddim, rng)
}

/// Draws the paired initial noise for a low/high resolution trajectory
/// pair: with fresh standard normals `z_hi`, `z_low`,
///
/// `x_T_hi = z_hi − U[D[z_hi]] + (1/√n)·U[z_low]`,  `x_T_low = z_low`.
///
/// Every entry of `x_T_hi` is again standard normal (the removed block
/// means carry variance `1/n`, the reinjected ones restore it), and
/// `D[x_T_hi] = z_low/√n` exactly: the low trajectory starts from the
/// downsampled high-resolution noise up to the known `1/√n` scale.
pub fn init_noise_pair(
    channels: usize,
    dims_hi: &[usize],
    plan: &ScalePlan,
    rng: &mut RngStream,
) -> Result<(Field, Field)> {
    let dims_low = plan.low_dims(dims_hi)?;
    let z_hi = Field::gaussian(channels, dims_hi, rng)?;
    let z_low = Field::gaussian(channels, &dims_low, rng)?;
    let smoothed = upsample_nearest(&downsample_box(&z_hi, plan)?, plan)?;
    let high_pass = Field::linear_comb(1.0, &z_hi, -1.0, &smoothed)?;
    let n = plan.n() as f64;
    let x_hi = Field::linear_comb(1.0, &high_pass, 1.0 / n.sqrt(), &upsample_nearest(&z_low, plan)?)?;
    Ok((x_hi, z_low))
}

/// Reattributes a non-finite blowup inside a transition to the step where
/// it happened.
fn pin_step<T>(r: Result<T>, step_index: usize, t: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFiniteState { step_index, t },
        other => other,
    })
}

/// Runs one trajectory from `init` (the state at t = T−1) down to t = 0.
///
/// The predictor is consulted through [`guided_predict`], so when the
/// guidance gate is closed no low-resolution work happens and the run is
/// arithmetically identical to plain sampling. Deterministic given `init`
/// and the stream state of `rng`.
pub fn sample_loop(
    p: &dyn Predictor,
    gcfg: &GuidanceConfig,
    scfg: &SamplerConfig,
    schedule: &NoiseSchedule,
    cond: Option<u32>,
    init: Field,
    rng: &mut RngStream,
) -> Result<Trajectory> {
    if !init.is_finite() {
        return Err(Error::NonFinite("initial sampler state contains non-finite values".into()));
    }
    let steps = scfg.steps.steps_for(schedule.len())?;
    let mut x = init;
    let mut stats = RunStats::default();
    let mut checkpoints = Vec::new();
    let mut last_x0 = None;
    for i in 0..steps.len() - 1 {
        let (t, t_prev) = (steps[i], steps[i + 1]);
        if scfg.checkpoint_every > 0 && i % scfg.checkpoint_every == 0 {
            checkpoints.push((t, x.clone()));
        }
        let eps = pin_step(guided_predict(p, &x, t, cond, gcfg, schedule, &mut stats), i, t)?;
        let stepped = match scfg.kind {
            SamplerKind::Ancestral => ddpm_step(&x, &eps, t, t_prev, schedule, rng),
            SamplerKind::Deterministic => {
                ddim_step(&x, &eps, t, t_prev, schedule, scfg.eta_ddim, rng)
            }
        };
        let (x_prev, x0_hat) = pin_step(stepped, i, t)?;
        if !x_prev.is_finite() {
            return Err(Error::NonFiniteState { step_index: i, t });
        }
        x = x_prev;
        last_x0 = Some(x0_hat);
    }
    Ok(Trajectory {
        checkpoints,
        final_state: x,
        final_x0: last_x0.expect("step sequences always contain at least one transition"),
        stats,
    })
}

/// Runs `scfg.trajectories` independent trajectories, each from white
/// initial noise on stream lane `i` of `scfg.seed`. The lane convention
/// makes the batch independent of execution order, so callers may
/// distribute trajectories across threads and still reproduce this
/// function's output exactly.
pub fn sample_batch(
    p: &dyn Predictor,
    gcfg: &GuidanceConfig,
    scfg: &SamplerConfig,
    schedule: &NoiseSchedule,
    cond: Option<u32>,
    channels: usize,
    dims: &[usize],
) -> Result<Vec<Trajectory>> {
    if scfg.trajectories == 0 {
        return Err(Error::InvalidConfig("trajectory count must be at least 1".into()));
    }
    (0..scfg.trajectories)
        .map(|i| {
            let mut rng = RngStream::new(scfg.seed, i as u64);
            let init = Field::gaussian(channels, dims, &mut rng)?;
            sample_loop(p, gcfg, scfg, schedule, cond, init, &mut rng)
        })
        .collect()
}
