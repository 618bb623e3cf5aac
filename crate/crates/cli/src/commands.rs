//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sdsynth_core::{
    build_plant, estimate_fixed, estimate_probability, linearize_closed_loop, perturbation_bounds,
    pid_family, sample_uncertainty, simulate_outcome, simulate_trajectory, synthesize_for,
    ControllerSpec, DecentralizedController, DifferenceController, Error, EstimateOptions,
    HistoryRecord, Plant, SolverConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::{CliError, Command, ControllerArgs, Solver};

pub const SCHEMA: &str = "v1";

#[derive(Debug, Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

const TOOL: Tool = Tool {
    name: "sdsynth",
    version: env!("CARGO_PKG_VERSION"),
};

fn config_err(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Loads the configuration, sizes the worker pool and builds the plant.
fn prepare(arg: &str) -> Result<(RunConfig, usize, Plant), CliError> {
    let cfg = RunConfig::load(arg)?;
    let workers = cfg.resolve_workers()?;
    // Fails only if a pool already exists, which cannot happen in a fresh process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();
    let plant = build_plant(&cfg.plant.name, &cfg.plant.overrides).map_err(config_err)?;
    Ok((cfg, workers, plant))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report types serialize");
    s.push('\n');
    s
}

fn emit(value: &Value, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, &to_json(value)),
        None => {
            print!("{}", to_json(value));
            Ok(())
        }
    }
}

fn parse_spec(text: &str) -> Result<ControllerSpec, String> {
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        // A synth report carries its controller under `controller`.
        let v = match v.get("controller") {
            Some(inner) if v.get("schema").is_some() => inner.clone(),
            _ => v,
        };
        return serde_json::from_value(v).map_err(|e| format!("invalid controller: {e}"));
    }
    #[derive(serde::Deserialize)]
    struct Wrapped {
        controller: ControllerSpec,
    }
    if let Ok(w) = toml::from_str::<Wrapped>(text) {
        return Ok(w.controller);
    }
    toml::from_str::<ControllerSpec>(text).map_err(|e| format!("invalid controller: {e}"))
}

fn parse_params(text: &str) -> Result<DecentralizedController, CliError> {
    let channels = text
        .split(';')
        .map(|chunk| {
            let p = chunk
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("bad --params value: {e}")))?;
            DifferenceController::from_params(&p).map_err(config_err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DecentralizedController::new(channels))
}

fn resolve_controller(
    args: &ControllerArgs,
    cfg: &RunConfig,
    plant: &Plant,
) -> Result<DecentralizedController, CliError> {
    let ctrl = if let Some(c) = &args.controller {
        let path = Path::new(c);
        let text = if path.is_file() {
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("{c}: {e}")))?
        } else {
            c.clone()
        };
        parse_spec(&text)
            .map_err(CliError::Config)?
            .build()
            .map_err(config_err)?
    } else if let Some(kp) = args.kp {
        let gains: Vec<f64> = match (args.ki, args.kd) {
            (ki, Some(kd)) => vec![kp, ki.unwrap_or(0.0), kd],
            (Some(ki), None) => vec![kp, ki],
            (None, None) => vec![kp],
        };
        let one = pid_family(gains.len() - 1, &gains).map_err(config_err)?;
        DecentralizedController::single(one)
    } else if args.ki.is_some() || args.kd.is_some() {
        return Err(CliError::Config("--ki and --kd need --kp".into()));
    } else if let Some(p) = &args.params {
        parse_params(p)?
    } else if let Some(spec) = &cfg.controller {
        spec.build().map_err(config_err)?
    } else {
        return Err(CliError::Config(
            "no controller: pass --controller, --kp/--ki/--kd or --params, or add [controller]"
                .into(),
        ));
    };
    let inputs = plant.model.input_dim();
    if ctrl.len() != inputs {
        return Err(CliError::Config(format!(
            "controller has {} channels but `{}` has {inputs} inputs",
            ctrl.len(),
            plant.name()
        )));
    }
    Ok(ctrl)
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { config, out_dir } => synth(&config, out_dir),
        Command::Eval {
            config,
            controller,
            samples,
            fixed,
            seed,
            substeps,
            out,
        } => eval(&config, &controller, samples, fixed, seed, substeps, out),
        Command::Stability {
            config,
            controller,
            out,
        } => stability(&config, &controller, out.as_deref()),
        Command::Simulate {
            config,
            controller,
            seed,
            index,
            substeps,
            solver,
            out,
        } => simulate(&config, &controller, seed, index, substeps, solver, out),
        Command::Bounds {
            config,
            controller,
            gamma,
            t,
            out,
        } => bounds(&config, &controller, gamma, t, out.as_deref()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// `degree,iter,m,a_opt,b_opt,a_ver,b_ver,candidates,unstable,seconds`
pub fn history_csv(history: &[HistoryRecord]) -> String {
    let mut out =
        String::from("degree,iter,m,a_opt,b_opt,a_ver,b_ver,candidates,unstable,seconds\n");
    for h in history {
        let ver = h.verify.map(|v| v.interval);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.3}",
            h.degree,
            h.iteration,
            h.substeps,
            h.optimize_interval.lo,
            h.optimize_interval.hi,
            fmt_opt(ver.map(|i| i.lo)),
            fmt_opt(ver.map(|i| i.hi)),
            h.candidates,
            h.unstable,
            h.seconds
        );
    }
    out
}

fn synth(arg: &str, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let (cfg, workers, plant) = prepare(arg)?;
    let sc = cfg.synthesis_config();
    sc.validate().map_err(config_err)?;
    let result = synthesize_for(&plant, &sc).map_err(runtime_err)?;
    let channels = plant.model.input_dim();
    let controller = match result.controller(channels) {
        Some(c) => Some(ControllerSpec::from_controller(&c.map_err(runtime_err)?)),
        None => None,
    };
    let best = result.best.as_ref();
    let report = json!({
        "schema": SCHEMA,
        "tool": TOOL,
        "master_seed": sc.seed,
        "workers": workers,
        "batch": sc.batch(),
        "config": cfg,
        "params": best.map(|b| b.params.clone()),
        "family": best.map(|b| b.family),
        "controller": controller,
        "interval": result.interval,
        "interval_source": best.map(|b| b.source),
        "verify_seed": best.map(|b| b.verify_seed),
        "degree": best.map(|b| b.degree),
        "success": result.success,
        "final_substeps": result.final_substeps,
        "history": result.history,
    });
    let dir = out_dir.unwrap_or_else(|| cfg.output.dir.clone());
    write_file(&dir.join("report.json"), &to_json(&report))?;
    write_file(&dir.join("history.csv"), &history_csv(&result.history))?;
    eprintln!(
        "success = {}, interval [{:.4}, {:.4}], report in {}",
        result.success,
        result.interval.lo,
        result.interval.hi,
        dir.display()
    );
    Ok(())
}

fn eval(
    arg: &str,
    args: &ControllerArgs,
    samples: Option<u64>,
    fixed: bool,
    seed: Option<u64>,
    substeps: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (cfg, workers, plant) = prepare(arg)?;
    let ctrl = resolve_controller(args, &cfg, &plant)?;
    let sc = cfg.synthesis_config();
    let n = samples.unwrap_or(sc.verify_samples);
    let m = substeps.unwrap_or(sc.verify_substeps);
    if n == 0 || m == 0 {
        return Err(CliError::Config(
            "--samples and --substeps must be positive".into(),
        ));
    }
    let seed = seed.unwrap_or(sc.seed);
    let opts = EstimateOptions {
        xi: sc.xi,
        confidence: sc.confidence,
        n_max: n,
        method: sc.method,
        batch: sc.batch(),
    };
    let solver = SolverConfig::rk4(m);
    let model = plant.model.as_ref();
    let evaluate =
        |i| simulate_outcome(&plant, &ctrl, &sample_uncertainty(model, seed, i), &solver);
    let est = if fixed {
        estimate_fixed(evaluate, &opts)
    } else {
        estimate_probability(evaluate, &opts)
    }
    .map_err(runtime_err)?;
    let report = json!({
        "schema": SCHEMA,
        "tool": TOOL,
        "master_seed": seed,
        "workers": workers,
        "batch": opts.batch,
        "config": cfg,
        "controller": ControllerSpec::from_controller(&ctrl),
        "samples": n,
        "fixed": fixed,
        "substeps": m,
        "interval": est.interval,
        "frequency": est.interval.frequency(),
        "width_reached": est.width_reached,
        "diverged": est.diverged,
        "tolerance_breached": est.tolerance_breached,
        "divergence_storm": 2 * est.diverged > est.interval.trials,
    });
    let path = out.unwrap_or_else(|| cfg.output.dir.join("eval.json"));
    write_file(&path, &to_json(&report))?;
    eprintln!(
        "{}/{} safe, interval [{:.4}, {:.4}], written to {}",
        est.interval.successes,
        est.interval.trials,
        est.interval.lo,
        est.interval.hi,
        path.display()
    );
    Ok(())
}

fn stability(arg: &str, args: &ControllerArgs, out: Option<&Path>) -> Result<(), CliError> {
    let (cfg, _, plant) = prepare(arg)?;
    let ctrl = resolve_controller(args, &cfg, &plant)?;
    let lin = linearize_closed_loop(&plant, &ctrl).map_err(runtime_err)?;
    let eigenvalues: Vec<[f64; 2]> = lin
        .spectrum
        .eigenvalues
        .iter()
        .map(|z| [z.re, z.im])
        .collect();
    let value = json!({
        "schema": SCHEMA,
        "tool": TOOL,
        "plant": plant.name(),
        "controller": ControllerSpec::from_controller(&ctrl),
        "equilibrium": plant.x_e.as_slice(),
        "nominal_input": plant.u_e.as_slice(),
        "spectral_radius": lin.spectrum.spectral_radius,
        "eigenvalues": eigenvalues,
        "verdict": lin.verdict,
    });
    emit(&value, out)
}

fn simulate(
    arg: &str,
    args: &ControllerArgs,
    seed: Option<u64>,
    index: u64,
    substeps: Option<usize>,
    solver: Solver,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let (cfg, _, plant) = prepare(arg)?;
    let ctrl = resolve_controller(args, &cfg, &plant)?;
    let m = substeps.unwrap_or(cfg.synthesis.verify_substeps);
    if m == 0 {
        return Err(CliError::Config("--substeps must be positive".into()));
    }
    let solver = match solver {
        Solver::Euler => SolverConfig::euler(m),
        Solver::Rk4 => SolverConfig::rk4(m),
    };
    let seed = seed.unwrap_or(cfg.synthesis.seed);
    let realization = sample_uncertainty(plant.model.as_ref(), seed, index);
    let traj = simulate_trajectory(&plant, &ctrl, &realization, &solver).map_err(runtime_err)?;
    let outcome = sdsynth_core::safety_outcome(&traj, &plant.safety);
    let path = out.unwrap_or_else(|| cfg.output.dir.join("traj.csv"));
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).map_err(|e| io_err(&path, e))?;
    write_file(&path, &String::from_utf8(buf).expect("CSV is ASCII"))?;
    let summary = json!({
        "trajectory": path,
        "seed": seed,
        "index": index,
        "disturbance_params": realization.disturbance_params,
        "safe": outcome.safe,
        "first_violation_time": outcome.first_violation_time,
        "diverged": outcome.diverged,
        "max_local_error": traj.max_local_error,
    });
    emit(&summary, None)
}

fn bounds(
    arg: &str,
    args: &ControllerArgs,
    gamma: f64,
    t: f64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let (cfg, _, plant) = prepare(arg)?;
    let ctrl = resolve_controller(args, &cfg, &plant)?;
    let lin = linearize_closed_loop(&plant, &ctrl).map_err(runtime_err)?;
    let b = perturbation_bounds(&lin, gamma, t).map_err(config_err)?;
    let value = json!({
        "schema": SCHEMA,
        "tool": TOOL,
        "plant": plant.name(),
        "verdict": lin.verdict,
        "bounds": b,
    });
    emit(&value, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn controller_specs_from_json_and_toml() {
        let json = parse_spec(r#"{"kp": 1.0, "ki": 0.5}"#).unwrap();
        let toml = parse_spec("kp = 1.0\nki = 0.5").unwrap();
        assert_eq!(json, toml);
        let wrapped = parse_spec("[controller]\ndegree = 1\na = [0.5]\nb = [1.0, 2.0]").unwrap();
        assert_eq!(wrapped.build().unwrap().params(), vec![1.0, 0.5, 2.0]);
        assert!(parse_spec(r#"{"kp": 1.0, "kz": 0.5}"#).is_err());
    }

    #[test]
    fn params_split_into_channels() {
        let c = parse_params("1,0.5,2;3").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.params(), vec![1.0, 0.5, 2.0, 3.0]);
        assert!(parse_params("1,2").is_err());
    }

    #[test]
    fn history_has_fixed_header() {
        assert_eq!(
            history_csv(&[]),
            "degree,iter,m,a_opt,b_opt,a_ver,b_ver,candidates,unstable,seconds\n"
        );
    }
}
