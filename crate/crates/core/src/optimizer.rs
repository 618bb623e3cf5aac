//! Cross-entropy search over controller parameters with an instability
//! filter and elitist retention.

use std::cmp::Ordering;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::ControllerFamily;
use crate::error::{Error, Result};
use crate::model::{derive_key, sample_uncertainty, stream, Plant, StreamTag};
use crate::simulator::{simulate_outcome, SolverConfig};
use crate::stability::{PlantLinearization, Verdict};
use crate::stats::{estimate_probability, CiMethod, ConfidenceInterval, EstimateOptions};

/// Axis-aligned parameter domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds of length {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h))
        {
            return Err(Error::InvalidArgument(
                "box bounds must be finite with lo <= hi".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }

    pub fn clamp(&self, p: &mut [f64]) {
        for (v, (l, h)) in p.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            *v = v.clamp(*l, *h);
        }
    }

    /// First `k` coordinates.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k > self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot take {k} coordinates of a {}-dimensional box",
                self.dim()
            )));
        }
        Self::new(self.lo[..k].to_vec(), self.hi[..k].to_vec())
    }

    /// Cartesian product of boxes.
    pub fn product(parts: &[ParamBox]) -> Self {
        Self {
            lo: parts.iter().flat_map(|b| b.lo.iter().copied()).collect(),
            hi: parts.iter().flat_map(|b| b.hi.iter().copied()).collect(),
        }
    }
}

/// Independent Gaussian per coordinate, truncated to the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeDistribution {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub bounds: ParamBox,
}

/// Resampling attempts before falling back to clamping.
const MAX_RESAMPLES: usize = 50;
/// Standard deviation floor relative to the box width.
const STD_FLOOR: f64 = 1e-6;

impl CeDistribution {
    /// Centered on the box with half its width as spread.
    pub fn initial(bounds: &ParamBox) -> Self {
        Self {
            mean: bounds.center(),
            std: bounds
                .width()
                .iter()
                .map(|w| (0.5 * w).max(f64::MIN_POSITIVE))
                .collect(),
            bounds: bounds.clone(),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let draw = |rng: &mut R| -> Vec<f64> {
            self.mean
                .iter()
                .zip(&self.std)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let mut p = draw(rng);
        for _ in 1..MAX_RESAMPLES {
            if self.bounds.contains(&p) {
                return p;
            }
            p = draw(rng);
        }
        self.bounds.clamp(&mut p);
        p
    }
}

/// One evaluated parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub params: Vec<f64>,
    pub interval: ConfidenceInterval,
    pub stable: bool,
}

impl CandidateRecord {
    fn norm(&self) -> f64 {
        self.params.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Descending midpoint, ties to the smaller parameter norm.
fn rank(a: &CandidateRecord, b: &CandidateRecord) -> Ordering {
    b.interval
        .midpoint()
        .total_cmp(&a.interval.midpoint())
        .then(a.norm().total_cmp(&b.norm()))
}

/// Smoothed refit to the elite sample: `θ ← α θ_elite + (1 − α) θ`.
pub fn ce_update(
    dist: &CeDistribution,
    elites: &[CandidateRecord],
    smoothing: f64,
) -> CeDistribution {
    assert!(!elites.is_empty(), "elite set must be nonempty");
    let k = elites.len() as f64;
    let width = dist.bounds.width();
    let mut next = dist.clone();
    for j in 0..dist.mean.len() {
        let mean = elites.iter().map(|e| e.params[j]).sum::<f64>() / k;
        let var = elites
            .iter()
            .map(|e| (e.params[j] - mean).powi(2))
            .sum::<f64>()
            / k;
        let m = smoothing * mean + (1.0 - smoothing) * dist.mean[j];
        let s = smoothing * var.sqrt() + (1.0 - smoothing) * dist.std[j];
        next.mean[j] = m.clamp(dist.bounds.lo[j], dist.bounds.hi[j]);
        next.std[j] = if smoothing == 0.0 {
            dist.std[j]
        } else {
            s.max(STD_FLOOR * width[j]).max(f64::MIN_POSITIVE)
        };
    }
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeOptions {
    pub max_iterations: usize,
    pub max_samples: usize,
    pub n_max: u64,
    pub elite_fraction: f64,
    pub min_elites: usize,
    pub smoothing: f64,
}

impl Default for CeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            max_samples: 30,
            n_max: 200,
            elite_fraction: 0.1,
            min_elites: 2,
            smoothing: 0.9,
        }
    }
}

/// What the optimizer needs to know about a parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// Cheap necessary stability test; rejected vectors are never estimated.
    fn is_stable(&self, p: &[f64]) -> Result<bool>;
    /// Interval estimate of the safety probability using the stream `seed`.
    fn estimate(&self, p: &[f64], seed: u64) -> Result<ConfidenceInterval>;
    fn confidence(&self) -> f64;
    fn method(&self) -> CiMethod;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub samples: usize,
    pub unstable: usize,
    pub best_midpoint: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: CandidateRecord,
    pub distribution: CeDistribution,
    pub log: Vec<IterationLog>,
    pub candidates: usize,
    pub unstable: usize,
    /// Every sampled candidate failed the stability filter.
    pub no_stable: bool,
}

/// Runs the cross-entropy loop from `initial`. `incumbent`, if given, enters
/// the ranking of every iteration.
pub fn optimize<O: Objective>(
    objective: &O,
    initial: &CeDistribution,
    incumbent: Option<CandidateRecord>,
    opts: &CeOptions,
    seed: u64,
) -> Result<OptimizeResult> {
    if opts.max_iterations == 0 || opts.max_samples == 0 {
        return Err(Error::InvalidArgument(
            "optimizer budgets must be at least 1".into(),
        ));
    }
    if initial.bounds.dim() != objective.dim() {
        return Err(Error::DimensionMismatch(format!(
            "box of dimension {} for {} parameters",
            initial.bounds.dim(),
            objective.dim()
        )));
    }
    let eval_seed = derive_key(seed, StreamTag::Disturbance as u64);
    let zero = ConfidenceInterval::zero(objective.confidence(), objective.method());
    let mut dist = initial.clone();
    let mut best = incumbent.clone();
    let mut log = Vec::with_capacity(opts.max_iterations);
    let (mut candidates, mut unstable) = (0, 0);

    for iteration in 0..opts.max_iterations {
        let mut rng = stream(seed, StreamTag::Candidates, iteration as u64);
        let params: Vec<Vec<f64>> = (0..opts.max_samples)
            .map(|_| dist.sample(&mut rng))
            .collect();
        let records = params
            .into_par_iter()
            .map(|p| {
                if objective.is_stable(&p)? {
                    let interval = objective.estimate(&p, eval_seed)?;
                    Ok(CandidateRecord {
                        params: p,
                        interval,
                        stable: true,
                    })
                } else {
                    Ok(CandidateRecord {
                        params: p,
                        interval: zero,
                        stable: false,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let rejected = records.iter().filter(|r| !r.stable).count();
        candidates += records.len();
        unstable += rejected;

        let mut queue = records;
        queue.extend(best.clone());
        queue.sort_by(rank);
        let elites = ((opts.elite_fraction * queue.len() as f64).ceil() as usize)
            .max(opts.min_elites)
            .min(queue.len());
        dist = ce_update(&dist, &queue[..elites], opts.smoothing);
        best = Some(queue.swap_remove(0));
        log.push(IterationLog {
            iteration,
            samples: opts.max_samples,
            unstable: rejected,
            best_midpoint: best.as_ref().map_or(0.0, |b| b.interval.midpoint()),
        });
    }

    let best = best.expect("at least one candidate was ranked");
    Ok(OptimizeResult {
        no_stable: unstable == candidates && !best.stable,
        best,
        distribution: dist,
        log,
        candidates,
        unstable,
    })
}

/// Closed-loop objective: the instability filter on the sampled
/// linearization, then Monte Carlo estimation with a fixed solver.
#[derive(Debug, Clone)]
pub struct PlantObjective {
    pub plant: Plant,
    pub linearization: Arc<PlantLinearization>,
    pub family: ControllerFamily,
    pub solver: SolverConfig,
    pub estimate: EstimateOptions,
}

impl PlantObjective {
    pub fn new(
        plant: Plant,
        family: ControllerFamily,
        solver: SolverConfig,
        estimate: EstimateOptions,
    ) -> Result<Self> {
        let linearization = Arc::new(PlantLinearization::new(&plant)?);
        Ok(Self {
            plant,
            linearization,
            family,
            solver,
            estimate,
        })
    }

    fn channels(&self) -> usize {
        self.plant.model.input_dim()
    }
}

impl Objective for PlantObjective {
    fn dim(&self) -> usize {
        self.family.channel_dim() * self.channels()
    }

    fn is_stable(&self, p: &[f64]) -> Result<bool> {
        let ctrl = self.family.build(p, self.channels())?;
        let lin = self.linearization.close_loop(&ctrl.to_state_space())?;
        Ok(lin.verdict == Verdict::Accept)
    }

    fn estimate(&self, p: &[f64], seed: u64) -> Result<ConfidenceInterval> {
        let ctrl = self.family.build(p, self.channels())?;
        let model = self.plant.model.as_ref();
        let est = estimate_probability(
            |i| {
                let r = sample_uncertainty(model, seed, i);
                simulate_outcome(&self.plant, &ctrl, &r, &self.solver)
            },
            &self.estimate,
        )?;
        Ok(est.interval)
    }

    fn confidence(&self) -> f64 {
        self.estimate.confidence
    }

    fn method(&self) -> CiMethod {
        self.estimate.method
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::bernoulli_ci;
    use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

    fn record(p: Vec<f64>) -> CandidateRecord {
        CandidateRecord {
            params: p,
            interval: ConfidenceInterval::zero(0.9, CiMethod::Bayesian),
            stable: true,
        }
    }

    fn unit_box(d: usize) -> ParamBox {
        ParamBox::new(vec![-1.0; d], vec![1.0; d]).unwrap()
    }

    /// Safety probability peaks at `peak`; stable iff the first coordinate
    /// is below `stable_below`.
    struct Bowl {
        peak: Vec<f64>,
        stable_below: f64,
        estimates: AtomicUsize,
        unstable_estimates: AtomicUsize,
    }

    impl Bowl {
        fn new(peak: Vec<f64>, stable_below: f64) -> Self {
            Self {
                peak,
                stable_below,
                estimates: AtomicUsize::new(0),
                unstable_estimates: AtomicUsize::new(0),
            }
        }
    }

    impl Objective for Bowl {
        fn dim(&self) -> usize {
            self.peak.len()
        }
        fn is_stable(&self, p: &[f64]) -> Result<bool> {
            Ok(p[0] < self.stable_below)
        }
        fn estimate(&self, p: &[f64], _seed: u64) -> Result<ConfidenceInterval> {
            self.estimates.fetch_add(1, AtomicOrdering::SeqCst);
            if p[0] >= self.stable_below {
                self.unstable_estimates.fetch_add(1, AtomicOrdering::SeqCst);
            }
            let d2: f64 = p.iter().zip(&self.peak).map(|(a, b)| (a - b).powi(2)).sum();
            let s = (200.0 * (-d2).exp()).round() as u64;
            bernoulli_ci(s, 200, 0.9, CiMethod::Bayesian)
        }
        fn confidence(&self) -> f64 {
            0.9
        }
        fn method(&self) -> CiMethod {
            CiMethod::Bayesian
        }
    }

    #[test]
    fn single_elite_with_full_smoothing_collapses() {
        let dist = CeDistribution::initial(&unit_box(2));
        let next = ce_update(&dist, &[record(vec![0.3, -0.4])], 1.0);
        assert_eq!(next.mean, vec![0.3, -0.4]);
        assert!(next.std.iter().all(|s| (s - 2e-6).abs() < 1e-18));
    }

    #[test]
    fn zero_smoothing_keeps_distribution() {
        let dist = CeDistribution::initial(&unit_box(2));
        let next = ce_update(&dist, &[record(vec![0.3, -0.4])], 0.0);
        assert_eq!(next, dist);
    }

    #[test]
    fn symmetric_elites_keep_mean() {
        let dist = CeDistribution::initial(&unit_box(1));
        let next = ce_update(&dist, &[record(vec![-0.2]), record(vec![0.2])], 1.0);
        assert!(next.mean[0].abs() < 1e-15);
        assert!((next.std[0] - 0.2).abs() < 1e-15);
        let half = ce_update(&dist, &[record(vec![-0.2]), record(vec![0.2])], 0.5);
        assert!((half.std[0] - (0.5 * 0.2 + 0.5 * 1.0)).abs() < 1e-15);
    }

    #[test]
    fn samples_stay_in_box() {
        let b = ParamBox::new(vec![0.0, -1.0], vec![0.1, 5.0]).unwrap();
        let mut dist = CeDistribution::initial(&b);
        dist.mean = vec![0.09, 4.9];
        dist.std = vec![10.0, 10.0];
        let mut rng = stream(1, StreamTag::Candidates, 0);
        for _ in 0..500 {
            assert!(b.contains(&dist.sample(&mut rng)));
        }
    }

    #[test]
    fn finds_the_peak_and_never_estimates_unstable_points() {
        let obj = Bowl::new(vec![0.3, -0.5], 0.6);
        let dist = CeDistribution::initial(&unit_box(2));
        let res = optimize(&obj, &dist, None, &CeOptions::default(), 11).unwrap();
        assert!(res.best.stable && res.best.interval.midpoint() > 0.9);
        assert_eq!(obj.unstable_estimates.load(AtomicOrdering::SeqCst), 0);
        assert_eq!(
            obj.estimates.load(AtomicOrdering::SeqCst),
            res.candidates - res.unstable
        );
        assert!(res
            .log
            .windows(2)
            .all(|w| w[1].best_midpoint >= w[0].best_midpoint));
        assert!(!res.no_stable);
    }

    #[test]
    fn all_unstable_box_is_flagged() {
        let obj = Bowl::new(vec![0.0, 0.0], -2.0);
        let dist = CeDistribution::initial(&unit_box(2));
        let opts = CeOptions {
            max_iterations: 3,
            ..CeOptions::default()
        };
        let res = optimize(&obj, &dist, None, &opts, 3).unwrap();
        assert!(res.no_stable && !res.best.stable);
        assert_eq!(res.best.interval.lo, 0.0);
        assert_eq!(res.best.interval.hi, 0.0);
        assert_eq!(res.unstable, 90);
        assert_eq!(obj.estimates.load(AtomicOrdering::SeqCst), 0);
    }

    #[test]
    fn incumbent_is_retained() {
        let obj = Bowl::new(vec![0.9, 0.9], 2.0);
        let mut inc = record(vec![0.9, 0.9]);
        inc.interval = bernoulli_ci(200, 200, 0.9, CiMethod::Bayesian).unwrap();
        let dist = CeDistribution::initial(&unit_box(2));
        let opts = CeOptions {
            max_iterations: 1,
            ..CeOptions::default()
        };
        let res = optimize(&obj, &dist, Some(inc.clone()), &opts, 5).unwrap();
        assert!(res.best.interval.midpoint() >= inc.interval.midpoint());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let obj = Bowl::new(vec![0.3, -0.5], 0.6);
        let dist = CeDistribution::initial(&unit_box(2));
        let a = optimize(&obj, &dist, None, &CeOptions::default(), 9).unwrap();
        let b = optimize(&obj, &dist, None, &CeOptions::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
