//! Bernoulli interval estimates and the sequential Monte Carlo estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::beta_quantile;
use crate::simulator::SafetyOutcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    /// Central credible interval of the Beta(1 + s, 1 + n − s) posterior.
    #[default]
    Bayesian,
    /// Exact frequentist interval.
    ClopperPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
    pub successes: u64,
    pub trials: u64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    /// The `[0, 0]` interval assigned to rejected candidates.
    pub fn zero(confidence: f64, method: CiMethod) -> Self {
        Self {
            lo: 0.0,
            hi: 0.0,
            confidence,
            successes: 0,
            trials: 0,
            method,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lo <= p && p <= self.hi
    }

    /// Empirical success frequency, `NaN` without trials.
    pub fn frequency(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

fn check_confidence(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "confidence {c} not in (0, 1)"
        )))
    }
}

/// Interval for a Bernoulli parameter from `s` successes in `n` trials.
///
/// With `n > 0`, `s = 0` pins the lower end to 0 and `s = n` pins the upper
/// end to 1. With `n = 0` the Bayesian method returns the prior interval.
pub fn bernoulli_ci(s: u64, n: u64, c: f64, method: CiMethod) -> Result<ConfidenceInterval> {
    check_confidence(c)?;
    if s > n {
        return Err(Error::InvalidArgument(format!(
            "{s} successes in {n} trials"
        )));
    }
    let tail = 0.5 * (1.0 - c);
    let (sf, ff) = (s as f64, (n - s) as f64);
    let (mut lo, mut hi) = match method {
        CiMethod::Bayesian => (
            beta_quantile(tail, 1.0 + sf, 1.0 + ff)?,
            beta_quantile(1.0 - tail, 1.0 + sf, 1.0 + ff)?,
        ),
        CiMethod::ClopperPearson => (
            if s == 0 {
                0.0
            } else {
                beta_quantile(tail, sf, ff + 1.0)?
            },
            if s == n {
                1.0
            } else {
                beta_quantile(1.0 - tail, sf + 1.0, ff)?
            },
        ),
    };
    if n > 0 {
        if s == 0 {
            lo = 0.0;
        }
        if s == n {
            hi = 1.0;
        }
    }
    Ok(ConfidenceInterval {
        lo,
        hi,
        confidence: c,
        successes: s,
        trials: n,
        method,
    })
}

/// Length of the intersection of two intervals.
pub fn interval_overlap(i1: &ConfidenceInterval, i2: &ConfidenceInterval) -> f64 {
    (i1.hi.min(i2.hi) - i1.lo.max(i2.lo)).max(0.0)
}

/// Overlap test `|[a,b] ∩ [a',b']| ≥ α (b − a)`; for a degenerate `[a,b]`
/// any intersection satisfies it.
pub fn overlap_satisfied(
    estimate: &ConfidenceInterval,
    verified: &ConfidenceInterval,
    alpha: f64,
) -> bool {
    if estimate.width() <= 0.0 {
        estimate.hi >= verified.lo && verified.hi >= estimate.lo
    } else {
        interval_overlap(estimate, verified) >= alpha * estimate.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Target interval width.
    pub xi: f64,
    pub confidence: f64,
    pub n_max: u64,
    pub method: CiMethod,
    /// Samples per batch; the stopping rule is checked after each batch.
    pub batch: usize,
}

impl EstimateOptions {
    pub fn new(xi: f64, confidence: f64, n_max: u64) -> Self {
        Self {
            xi,
            confidence,
            n_max,
            method: CiMethod::Bayesian,
            batch: rayon::current_num_threads(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub interval: ConfidenceInterval,
    /// Whether the interval reached the target width before `n_max`.
    pub width_reached: bool,
    pub diverged: u64,
    pub tolerance_breached: u64,
}

/// Draws samples `0, 1, 2, …` in batches until the interval is at most `xi`
/// wide or `n_max` samples are spent. `evaluate(i)` must depend only on `i`.
pub fn estimate_probability<F>(evaluate: F, opts: &EstimateOptions) -> Result<Estimate>
where
    F: Fn(u64) -> Result<SafetyOutcome> + Sync,
{
    if !(opts.xi > 0.0 && opts.xi < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "width {} not in (0, 1)",
            opts.xi
        )));
    }
    run(evaluate, opts, Some(opts.xi))
}

/// Spends exactly `opts.n_max` samples.
pub fn estimate_fixed<F>(evaluate: F, opts: &EstimateOptions) -> Result<Estimate>
where
    F: Fn(u64) -> Result<SafetyOutcome> + Sync,
{
    run(evaluate, opts, None)
}

fn run<F>(evaluate: F, opts: &EstimateOptions, target: Option<f64>) -> Result<Estimate>
where
    F: Fn(u64) -> Result<SafetyOutcome> + Sync,
{
    check_confidence(opts.confidence)?;
    if opts.n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let batch = opts.batch.max(1) as u64;
    let (mut n, mut safe, mut diverged, mut breached) = (0u64, 0u64, 0u64, 0u64);
    loop {
        let end = (n + batch).min(opts.n_max);
        let outcomes: Vec<Result<SafetyOutcome>> =
            (n..end).into_par_iter().map(&evaluate).collect();
        for outcome in outcomes {
            match outcome {
                Ok(o) => {
                    n += 1;
                    safe += o.safe as u64;
                    diverged += o.diverged as u64;
                    breached += o.tolerance_breached as u64;
                }
                Err(e) => {
                    return Err(Error::EvaluatorFailure {
                        completed: n as usize,
                        message: e.to_string(),
                    })
                }
            }
        }
        let interval = bernoulli_ci(safe, n, opts.confidence, opts.method)?;
        let width_reached = target.is_some_and(|xi| interval.width() <= xi);
        if width_reached || n >= opts.n_max {
            return Ok(Estimate {
                interval,
                width_reached,
                diverged,
                tolerance_breached: breached,
            });
        }
    }
}
