//! Statistical synthesis of digital controllers for sampled-data stochastic
//! plants.

pub mod controller;
pub mod error;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod plants;
pub mod simulator;
pub mod stability;
pub mod stats;
pub mod synthesis;

pub use controller::{
    pid_family, pid_to_coeffs, ControllerFamily, ControllerSpec, DecentralizedController,
    DifferenceController, PidGains, StateSpaceController,
};
pub use error::{Error, Result};
pub use model::{
    evaluate_disturbance, find_equilibrium, measure_output, sample_uncertainty, Plant, PlantModel,
    SafetySpec, UncertaintyRealization,
};
pub use optimizer::{
    ce_update, optimize, CandidateRecord, CeDistribution, CeOptions, Objective, OptimizeResult,
    ParamBox, PlantObjective,
};
pub use plants::{build_plant, PLANT_NAMES};
pub use simulator::{
    safety_outcome, simulate_outcome, simulate_trajectory, SafetyOutcome, SolverConfig, SolverMode,
    Trajectory,
};
pub use stability::{
    linearize_closed_loop, perturbation_bounds, spectral_verdict, stability_check,
    ClosedLoopLinearization, PerturbationBounds, PlantLinearization, Verdict,
};
pub use stats::{
    bernoulli_ci, estimate_fixed, estimate_probability, interval_overlap, overlap_satisfied,
    CiMethod, ConfidenceInterval, Estimate, EstimateOptions,
};
pub use synthesis::{
    synthesize, synthesize_for, update_discretization, verify, BestController, HistoryRecord,
    IntervalSource, SynthesisConfig, SynthesisMode, SynthesisResult, VerifyReport,
};
