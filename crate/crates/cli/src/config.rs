//! Run configuration documents and their resolution.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sdsynth_core::{
    CeOptions, CiMethod, ControllerSpec, ParamBox, SynthesisConfig, SynthesisMode, PLANT_NAMES,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "SDSS_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub plant: PlantSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSpec>,
    #[serde(default)]
    pub synthesis: SynthesisSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub name: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub mode: SynthesisMode,
    pub max_degree: usize,
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
    pub seed: u64,
    pub batch: usize,
    pub ce: CeOptions,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let d = SynthesisConfig::default();
        Self {
            mode: d.mode,
            max_degree: d.max_degree,
            boxes: d.boxes,
            threshold: d.threshold,
            xi: d.xi,
            confidence: d.confidence,
            alpha: d.alpha,
            method: d.method,
            initial_substeps: d.initial_substeps,
            verify_substeps: d.verify_substeps,
            max_inner_iterations: d.max_inner_iterations,
            verify_samples: d.verify_samples,
            seed: d.seed,
            batch: d.batch,
            ce: d.ce,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
        }
    }
}

/// Short names accepted in place of a configuration file.
fn plant_alias(name: &str) -> Option<&'static str> {
    match name {
        "ap" => Some("artificial-pancreas"),
        "pt" => Some("powertrain"),
        "qt" => Some("quad-tank"),
        "lt" => Some("linear-test"),
        other => PLANT_NAMES.iter().copied().find(|p| *p == other),
    }
}

impl RunConfig {
    pub fn for_plant(name: &str) -> Self {
        Self {
            workers: None,
            plant: PlantSection {
                name: name.to_string(),
                overrides: BTreeMap::new(),
            },
            controller: None,
            synthesis: SynthesisSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid configuration: {e}")))
    }

    /// Reads a configuration file, or builds a default configuration when the
    /// argument names a plant.
    pub fn load(arg: &str) -> Result<Self, CliError> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {arg}: {e}")))?;
            return Self::parse(&text);
        }
        match plant_alias(arg) {
            Some(name) => Ok(Self::for_plant(name)),
            None => Err(CliError::Config(format!(
                "`{arg}` is neither a configuration file nor a plant ({})",
                PLANT_NAMES.join(", ")
            ))),
        }
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        let s = &self.synthesis;
        SynthesisConfig {
            plant: self.plant.name.clone(),
            overrides: self.plant.overrides.clone(),
            mode: s.mode,
            max_degree: s.max_degree,
            boxes: s.boxes.clone(),
            threshold: s.threshold,
            xi: s.xi,
            confidence: s.confidence,
            alpha: s.alpha,
            method: s.method,
            initial_substeps: s.initial_substeps,
            verify_substeps: s.verify_substeps,
            max_inner_iterations: s.max_inner_iterations,
            verify_samples: s.verify_samples,
            ce: s.ce,
            seed: s.seed,
            batch: s.batch,
        }
    }

    /// Worker count: environment, then configuration, then the machine.
    pub fn resolve_workers(&self) -> Result<usize, CliError> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(CliError::Config(format!(
                    "{WORKERS_ENV} = `{v}` is not a positive integer"
                ))),
            };
        }
        match self.workers {
            Some(0) => Err(CliError::Config("workers must be positive".into())),
            Some(n) => Ok(n),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sectioned_document() {
        let cfg = RunConfig::parse(
            r#"
            workers = 2

            [plant]
            name = "linear-test"
            overrides = { "lt.noise_std" = 0.0 }

            [controller]
            kp = 1.0
            ki = 0.5

            [synthesis]
            mode = "pid"
            max_degree = 1
            boxes = [{ lo = [0.0, 0.0], hi = [1.0, 1.0] }]
            seed = 3

            [synthesis.ce]
            max_iterations = 2

            [output]
            dir = "out"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.workers, Some(2));
        assert_eq!(cfg.synthesis.mode, SynthesisMode::Pid);
        assert_eq!(cfg.synthesis.ce.max_iterations, 2);
        assert_eq!(cfg.synthesis.ce.max_samples, 30);
        let sc = cfg.synthesis_config();
        assert_eq!(sc.overrides["lt.noise_std"], 0.0);
        assert!(sc.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [
            "[plant]\nname = \"ap\"\ncolour = 1",
            "[plant]\nname = \"ap\"\n[synthesis]\nthreshhold = 0.9",
            "[plant]\nname = \"ap\"\n[synthesis.ce]\nsmooth = 0.5",
            "[plant]\nname = \"ap\"\n[controller]\nkp = 1.0\nkq = 2.0",
            "[plant]\nname = \"ap\"\n[extra]\nx = 1",
        ] {
            assert!(
                matches!(RunConfig::parse(doc), Err(CliError::Config(_))),
                "{doc}"
            );
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::for_plant("powertrain");
        cfg.controller = Some(ControllerSpec::Pid(sdsynth_core::PidGains {
            kp: 0.2,
            ki: 0.1,
            kd: 0.0,
        }));
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn plant_names_and_aliases() {
        assert_eq!(
            RunConfig::load("ap").unwrap().plant.name,
            "artificial-pancreas"
        );
        assert_eq!(
            RunConfig::load("powertrain").unwrap().plant.name,
            "powertrain"
        );
        assert!(RunConfig::load("no-such-plant").is_err());
    }
}
