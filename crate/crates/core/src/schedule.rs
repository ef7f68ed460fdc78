//! Noise schedules and signal-to-noise machinery.
//!
//! A [`NoiseSchedule`] tabulates the cumulative signal coefficient `α_t` of
//! the forward corruption `x_t = √α_t·x₀ + √(1−α_t)·ε` for `t = 0..T−1`,
//! with `t = 0` nearly clean and `t = T−1` nearly pure noise. On top of the
//! table it provides the SNR `α/(1−α)`, the power factor
//! `P = α_t + (1−α_t)/n` that a block average over `n` entries induces, and
//! the adjusted step `τ` whose SNR is nearest `n·SNR(t)` in log space.

use crate::error::{Error, Result};

/// Clamp applied to α before taking log-SNR, guarding the endpoints.
const LOG_SNR_ALPHA_CLAMP: f64 = 1e-7;

/// Clamp applied to the cosine schedule's raw α values.
const COSINE_ALPHA_CLAMP: f64 = 1e-5;

/// Tabulated schedule α_t with the derived log-SNR table.
#[derive(Clone, Debug)]
pub struct NoiseSchedule {
    alpha: Vec<f64>,
    log_snr: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit α values, validating
    /// `0 < α_t < 1` and strict decrease.
    pub fn from_alphas(alpha: Vec<f64>) -> Result<NoiseSchedule> {
        if alpha.len() < 2 {
            return Err(Error::InvalidSchedule(format!(
                "need at least 2 steps, got {}",
                alpha.len()
            )));
        }
        for (t, &a) in alpha.iter().enumerate() {
            if !a.is_finite() || a <= 0.0 || a >= 1.0 {
                return Err(Error::InvalidSchedule(format!("alpha[{t}] = {a} not in (0, 1)")));
            }
            if t > 0 && alpha[t - 1] <= a {
                return Err(Error::InvalidSchedule(format!(
                    "alpha must strictly decrease: alpha[{}] = {} <= alpha[{}] = {}",
                    t - 1,
                    alpha[t - 1],
                    t,
                    a
                )));
            }
        }
        let log_snr = alpha
            .iter()
            .map(|&a| {
                let a = a.clamp(LOG_SNR_ALPHA_CLAMP, 1.0 - LOG_SNR_ALPHA_CLAMP);
                (a / (1.0 - a)).ln()
            })
            .collect();
        Ok(NoiseSchedule { alpha, log_snr })
    }

    /// Standard construction from linearly spaced per-step noise rates:
    /// `α_t = ∏_{s≤t} (1−β_s)` with β linearly spaced over `[beta_start, beta_end]`.
    pub fn make_linear_beta(t_count: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
        if t_count < 2 {
            return Err(Error::InvalidSchedule(format!("need at least 2 steps, got {t_count}")));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let mut alpha = Vec::with_capacity(t_count);
        let mut prod = 1.0;
        for t in 0..t_count {
            let beta = beta_start + (beta_end - beta_start) * t as f64 / (t_count - 1) as f64;
            prod *= 1.0 - beta;
            alpha.push(prod);
        }
        NoiseSchedule::from_alphas(alpha)
    }

    /// Squared-cosine schedule:
    /// `α_t = cos²((t/T + s)/(1 + s)·π/2) / cos²(s·π/(2(1+s)))` with `s = 0.008`,
    /// clamped into `[1e-5, 1−1e-5]`.
    pub fn make_cosine(t_count: usize) -> Result<NoiseSchedule> {
        if t_count < 2 {
            return Err(Error::InvalidSchedule(format!("need at least 2 steps, got {t_count}")));
        }
        let s = 0.008;
        let denom = (s / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
        let mut alpha: Vec<f64> = (0..t_count)
            .map(|t| {
                let frac = (t as f64 / t_count as f64 + s) / (1.0 + s);
                let a = (frac * std::f64::consts::FRAC_PI_2).cos().powi(2) / denom;
                a.clamp(COSINE_ALPHA_CLAMP, 1.0 - COSINE_ALPHA_CLAMP)
            })
            .collect();
        // The lower clamp can flatten the late tail at large T; restore strict
        // decrease with minimal relative bumps so log-SNR stays well-ordered.
        for t in (0..t_count - 1).rev() {
            if alpha[t] <= alpha[t + 1] {
                alpha[t] = alpha[t + 1] * (1.0 + 1e-9);
            }
        }
        NoiseSchedule::from_alphas(alpha)
    }

    /// Number of steps T.
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    fn check_range(&self, t: usize) -> Result<()> {
        if t >= self.alpha.len() {
            return Err(Error::StepOutOfRange { t, steps: self.alpha.len() });
        }
        Ok(())
    }

    /// α_t with a range check.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.alpha[t])
    }

    /// Signal-to-noise ratio `α_t/(1−α_t)`.
    pub fn snr(&self, t: usize) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.alpha[t] / (1.0 - self.alpha[t]))
    }

    /// log SNR with the endpoint clamp applied.
    pub fn log_snr(&self, t: usize) -> Result<f64> {
        self.check_range(t)?;
        Ok(self.log_snr[t])
    }

    /// Power factor `P = α_t + (1−α_t)/n` of a block average over `n` entries.
    pub fn power_factor(&self, t: usize, n: usize) -> Result<f64> {
        self.check_range(t)?;
        if n < 1 {
            return Err(Error::InvalidAveragingCount(n));
        }
        Ok(self.alpha[t] + (1.0 - self.alpha[t]) / n as f64)
    }

    /// The step whose log-SNR is nearest `log(n·SNR(t))`, ties broken toward
    /// the smaller index. Always ≤ `t` and nondecreasing in `t`.
    pub fn adjusted_time(&self, t: usize, n: usize) -> Result<usize> {
        self.check_range(t)?;
        if n < 1 {
            return Err(Error::InvalidAveragingCount(n));
        }
        let target = (n as f64).ln() + self.log_snr[t];
        Ok(self.nearest_log_snr(target))
    }

    /// Fractional grid position s.t. linearly interpolated log-SNR equals
    /// `log(n·SNR(t))`; for samplers that accept fractional time.
    pub fn adjusted_time_continuous(&self, t: usize, n: usize) -> Result<f64> {
        self.check_range(t)?;
        if n < 1 {
            return Err(Error::InvalidAveragingCount(n));
        }
        let target = (n as f64).ln() + self.log_snr[t];
        if target >= self.log_snr[0] {
            return Ok(0.0);
        }
        // log_snr is strictly decreasing: locate the bracketing pair.
        let i = self.log_snr.partition_point(|&l| l > target);
        let (lo, hi) = (self.log_snr[i - 1], self.log_snr[i]);
        Ok((i - 1) as f64 + (lo - target) / (lo - hi))
    }

    fn nearest_log_snr(&self, target: f64) -> usize {
        if target >= self.log_snr[0] {
            return 0;
        }
        // First index whose log-SNR is <= target (exists: the last entry is the minimum
        // and every query target is >= some table entry by construction).
        let i = self.log_snr.partition_point(|&l| l > target);
        if i == self.log_snr.len() {
            return i - 1;
        }
        let d_lo = self.log_snr[i - 1] - target;
        let d_hi = target - self.log_snr[i];
        if d_lo <= d_hi {
            i - 1
        } else {
            i
        }
    }
}
