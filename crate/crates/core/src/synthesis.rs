//! Outer synthesis loop: degree escalation, optimize/verify alternation,
//! interval-overlap termination and discretization refinement.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerFamily, DecentralizedController};
use crate::error::{Error, Result};
use crate::model::{derive_key, sample_uncertainty, Plant};
use crate::optimizer::{
    optimize, CandidateRecord, CeDistribution, CeOptions, ParamBox, PlantObjective,
};
use crate::plants::build_plant;
use crate::simulator::{simulate_outcome, SolverConfig};
use crate::stats::{
    estimate_probability, overlap_satisfied, CiMethod, ConfidenceInterval, EstimateOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthesisMode {
    /// Degrees 0, 1, 2 are the P, PI and PID laws.
    Pid,
    /// Degree `l` searches `[b0, a1, b1, …, al, bl]`.
    General,
}

impl SynthesisMode {
    pub fn family(self, degree: usize) -> ControllerFamily {
        match self {
            SynthesisMode::Pid => ControllerFamily::Pid(degree),
            SynthesisMode::General => ControllerFamily::General(degree),
        }
    }
}

/// Where an interval came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntervalSource {
    Optimize,
    Verify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub plant: String,
    pub overrides: BTreeMap<String, f64>,
    pub mode: SynthesisMode,
    pub max_degree: usize,
    /// Full single-channel box per channel, truncated per degree. A single
    /// entry is shared by all channels.
    pub boxes: Vec<ParamBox>,
    pub threshold: f64,
    pub xi: f64,
    pub confidence: f64,
    pub alpha: f64,
    pub method: CiMethod,
    pub initial_substeps: usize,
    pub verify_substeps: usize,
    pub max_inner_iterations: usize,
    pub verify_samples: u64,
    pub ce: CeOptions,
    pub seed: u64,
    /// Samples per estimation batch; 0 uses the worker count.
    pub batch: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            plant: "linear-test".into(),
            overrides: BTreeMap::new(),
            mode: SynthesisMode::General,
            max_degree: 2,
            boxes: Vec::new(),
            threshold: 0.9,
            xi: 0.05,
            confidence: 0.99,
            alpha: 0.5,
            method: CiMethod::Bayesian,
            initial_substeps: 1,
            verify_substeps: 64,
            max_inner_iterations: 3,
            verify_samples: 500,
            ce: CeOptions::default(),
            seed: 0,
            batch: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {v} not in (0, 1)"
                )))
            }
        };
        unit("threshold", self.threshold)?;
        unit("xi", self.xi)?;
        unit("confidence", self.confidence)?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha = {} not in (0, 1]",
                self.alpha
            )));
        }
        if self.initial_substeps == 0 || self.verify_substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        if self.max_inner_iterations == 0 || self.verify_samples == 0 {
            return Err(Error::InvalidArgument(
                "iteration and sample caps must be at least 1".into(),
            ));
        }
        if self.mode == SynthesisMode::Pid && self.max_degree > 2 {
            return Err(Error::InvalidArgument(
                "pid mode supports degrees 0 to 2".into(),
            ));
        }
        if self.boxes.is_empty() {
            return Err(Error::InvalidArgument("no parameter box given".into()));
        }
        let need = self.mode.family(self.max_degree).channel_dim();
        for b in &self.boxes {
            if b.dim() < need {
                return Err(Error::DimensionMismatch(format!(
                    "box of dimension {} for degree {} needs {need}",
                    b.dim(),
                    self.max_degree
                )));
            }
            ParamBox::new(b.lo.clone(), b.hi.clone())?;
        }
        Ok(())
    }

    /// Effective estimation batch size.
    pub fn batch(&self) -> usize {
        if self.batch == 0 {
            rayon::current_num_threads()
        } else {
            self.batch
        }
    }

    /// Product box over all channels for `degree`.
    pub fn degree_box(&self, degree: usize, channels: usize) -> Result<ParamBox> {
        let k = self.mode.family(degree).channel_dim();
        let parts = (0..channels)
            .map(|i| {
                let b = if self.boxes.len() == 1 {
                    &self.boxes[0]
                } else {
                    self.boxes.get(i).ok_or_else(|| {
                        Error::DimensionMismatch(format!(
                            "{} boxes for {channels} channels",
                            self.boxes.len()
                        ))
                    })?
                };
                b.truncate(k)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamBox::product(&parts))
    }
}

/// Outcome of high-fidelity verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub interval: ConfidenceInterval,
    pub diverged: u64,
    pub tolerance_breached: u64,
    /// More than half of the trajectories diverged.
    pub divergence_storm: bool,
}

/// Fine-grid RK4 interval estimate for a fixed controller.
pub fn verify(
    plant: &Plant,
    controller: &DecentralizedController,
    solver: &SolverConfig,
    opts: &EstimateOptions,
    seed: u64,
) -> Result<VerifyReport> {
    let model = plant.model.as_ref();
    let est = estimate_probability(
        |i| {
            let r = sample_uncertainty(model, seed, i);
            simulate_outcome(plant, controller, &r, solver)
        },
        opts,
    )?;
    Ok(VerifyReport {
        interval: est.interval,
        diverged: est.diverged,
        tolerance_breached: est.tolerance_breached,
        divergence_storm: 2 * est.diverged > est.interval.trials,
    })
}

/// Doubles the substep count, capped at `cap`.
pub fn update_discretization(m: usize, cap: usize) -> usize {
    (2 * m).min(cap).max(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub degree: usize,
    pub iteration: usize,
    pub substeps: usize,
    pub optimize_params: Vec<f64>,
    pub optimize_interval: ConfidenceInterval,
    pub optimize_source: IntervalSource,
    /// Absent when no stable candidate was found.
    pub verify: Option<VerifyReport>,
    pub verify_source: Option<IntervalSource>,
    pub verify_seed: Option<u64>,
    pub candidates: usize,
    pub unstable: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestController {
    pub params: Vec<f64>,
    pub degree: usize,
    pub family: ControllerFamily,
    pub interval: ConfidenceInterval,
    pub source: IntervalSource,
    /// Master seed of the verification run that produced `interval`.
    pub verify_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub best: Option<BestController>,
    /// Verified interval of the best controller, `[0, 0]` if none.
    pub interval: ConfidenceInterval,
    pub success: bool,
    pub history: Vec<HistoryRecord>,
    /// Substep count in force when the run ended.
    pub final_substeps: usize,
}

impl SynthesisResult {
    pub fn controller(&self, channels: usize) -> Option<Result<DecentralizedController>> {
        self.best
            .as_ref()
            .map(|b| b.family.build(&b.params, channels))
    }
}

fn iteration_seed(seed: u64, degree: usize, iteration: usize, stage: u64) -> u64 {
    derive_key(
        derive_key(derive_key(seed, stage), degree as u64),
        iteration as u64,
    )
}

const OPTIMIZE_STAGE: u64 = 1;
const VERIFY_STAGE: u64 = 2;

/// Builds the plant named in the config and runs the synthesis loop.
pub fn synthesize(config: &SynthesisConfig) -> Result<SynthesisResult> {
    config.validate()?;
    let plant = build_plant(&config.plant, &config.overrides)?;
    synthesize_for(&plant, config)
}

pub fn synthesize_for(plant: &Plant, config: &SynthesisConfig) -> Result<SynthesisResult> {
    config.validate()?;
    let channels = plant.model.input_dim();
    let batch = config.batch();
    let estimate = EstimateOptions {
        xi: config.xi,
        confidence: config.confidence,
        n_max: config.ce.n_max,
        method: config.method,
        batch,
    };
    let verify_opts = EstimateOptions {
        n_max: config.verify_samples,
        ..estimate
    };
    let verify_solver = SolverConfig::rk4(config.verify_substeps);

    let mut best: Option<BestController> = None;
    let mut history = Vec::new();
    let mut m = config.initial_substeps;

    for degree in 0..=config.max_degree {
        let family = config.mode.family(degree);
        let bounds = config.degree_box(degree, channels)?;
        let mut dist = CeDistribution::initial(&bounds);
        let mut incumbent: Option<CandidateRecord> = None;
        let mut objective =
            PlantObjective::new(plant.clone(), family, SolverConfig::euler(m), estimate)?;

        for iteration in 0..config.max_inner_iterations {
            let started = Instant::now();
            objective.solver = SolverConfig::euler(m);
            let opt = optimize(
                &objective,
                &dist,
                incumbent.clone(),
                &config.ce,
                iteration_seed(config.seed, degree, iteration, OPTIMIZE_STAGE),
            )?;
            dist = opt.distribution.clone();
            let mut record = HistoryRecord {
                degree,
                iteration,
                substeps: m,
                optimize_params: opt.best.params.clone(),
                optimize_interval: opt.best.interval,
                optimize_source: IntervalSource::Optimize,
                verify: None,
                verify_source: None,
                verify_seed: None,
                candidates: opt.candidates,
                unstable: opt.unstable,
                seconds: 0.0,
            };
            if opt.no_stable {
                record.seconds = started.elapsed().as_secs_f64();
                history.push(record);
                continue;
            }

            let ctrl = family.build(&opt.best.params, channels)?;
            let verify_seed = iteration_seed(config.seed, degree, iteration, VERIFY_STAGE);
            let report = verify(plant, &ctrl, &verify_solver, &verify_opts, verify_seed)?;
            record.verify = Some(report);
            record.verify_seed = Some(verify_seed);
            record.verify_source = Some(IntervalSource::Verify);
            record.seconds = started.elapsed().as_secs_f64();
            history.push(record);

            incumbent = Some(CandidateRecord {
                params: opt.best.params.clone(),
                interval: report.interval,
                stable: true,
            });
            let improves = best
                .as_ref()
                .is_none_or(|b| report.interval.midpoint() > b.interval.midpoint());
            if improves {
                best = Some(BestController {
                    params: opt.best.params.clone(),
                    degree,
                    family,
                    interval: report.interval,
                    source: IntervalSource::Verify,
                    verify_seed,
                });
            }
            if overlap_satisfied(&opt.best.interval, &report.interval, config.alpha) {
                break;
            }
            m = update_discretization(m, config.verify_substeps);
        }

        if best
            .as_ref()
            .is_some_and(|b| b.interval.lo >= config.threshold)
        {
            break;
        }
    }

    let interval = best.as_ref().map_or(
        ConfidenceInterval::zero(config.confidence, config.method),
        |b| b.interval,
    );
    Ok(SynthesisResult {
        success: interval.lo >= config.threshold,
        interval,
        best,
        history,
        final_substeps: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discretization_doubles_up_to_cap() {
        assert_eq!(update_discretization(1, 64), 2);
        assert_eq!(update_discretization(64, 128), 128);
        assert_eq!(update_discretization(64, 64), 64);
        assert_eq!(update_discretization(48, 64), 64);
    }

    #[test]
    fn config_validation() {
        let mut c = SynthesisConfig {
            boxes: vec![ParamBox::new(vec![-1.0; 5], vec![1.0; 5]).unwrap()],
            ..SynthesisConfig::default()
        };
        assert!(c.validate().is_ok());
        c.threshold = 1.0;
        assert!(c.validate().is_err());
        c.threshold = 0.9;
        c.max_degree = 3;
        assert!(c.validate().is_err());
        c.max_degree = 2;
        c.mode = SynthesisMode::Pid;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn degree_boxes_truncate_per_channel() {
        let c = SynthesisConfig {
            mode: SynthesisMode::Pid,
            boxes: vec![
                ParamBox::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]).unwrap(),
                ParamBox::new(vec![5.0, 6.0, 7.0], vec![6.0, 7.0, 8.0]).unwrap(),
            ],
            ..SynthesisConfig::default()
        };
        let b = c.degree_box(1, 2).unwrap();
        assert_eq!(b.lo, vec![0.0, 1.0, 5.0, 6.0]);
        assert!(c.degree_box(1, 3).is_err());
    }
}
