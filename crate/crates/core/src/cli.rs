//! Command-line front end: JSON configs in, CSV/JSON/SVG artifacts out.
//!
//! Every run writes a `manifest.json` (command, config hash, seed, package
//! version, status) into the output directory, success or failure. Exit
//! codes: 0 success, 1 module error (with an `error.json` record), 2 usage.

use crate::analysis::{
    bench_controllers, lipschitz_probe, shadow_epsilon, stability_constants, state_error,
    verify_envelope, ProbeConfig, ProbeKind, StabilityInputs,
};
use crate::artifacts::{
    bench_to_csv, config_hash, fmt_float, kernel_sidecar, kernel_to_csv, line_snapshots_to_csv,
    series_to_csv, snapshots_to_csv, svg_kernel_heatmap, svg_line_chart, trace_to_csv, write_manifest,
    Manifest,
};
use crate::coefficients::{
    CoefficientSet, CouplingFamily, DelayFamily, DelayFunction, GainFamily, InitialCondition,
};
use crate::controller::{AnalyticFeedback, BoundaryController, ControlLaw, ZeroController};
use crate::kernel::{kernel_bound, solve_kernel, KernelConfig};
use crate::operator::{
    audit_labels, generate_dataset, load_dataset, load_model, save_dataset, save_model, train,
    GenerationConfig, ModelConfig, NeuralController,
};
use crate::simulator::{simulate, simulate_delayed_reference, DelayNoise, SimConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Module(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

macro_rules! module_err {
    ($e:expr) => {
        CliError::Module($e.to_string())
    };
}

fn log_enabled(level: &str) -> bool {
    match std::env::var("DELAYBS_LOG").as_deref() {
        Ok("debug") => true,
        Ok("info") => level != "debug",
        _ => false,
    }
}

fn log(level: &str, msg: &str) {
    if log_enabled(level) {
        eprintln!("[delaybs {level}] {msg}");
    }
}

/// Scale presets for the pipeline commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

struct Flags {
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
    workers: usize,
    scale: Scale,
    plot: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            config: None,
            seed: None,
            out: PathBuf::from("out"),
            workers: 1,
            scale: Scale::Desk,
            plot: false,
        }
    }
}

const USAGE: &str = "usage: delaybs <command> [--config <path>] [--seed <u64>] [--out <dir>] \
[--workers <n>] [--scale desk|paper] [--plot]\n\
commands: kernel simulate dataset train evaluate probe bench reproduce";

/// Parse arguments and dispatch; returns the process exit code.
pub fn run_command(args: &[String]) -> i32 {
    let mut it = args.iter();
    let command = match it.next() {
        Some(c) => c.clone(),
        None => {
            eprintln!("{USAGE}");
            return 2;
        }
    };
    let mut flags = Flags::default();
    let rest: Vec<&String> = it.collect();
    let mut i = 0;
    while i < rest.len() {
        let take = |i: &mut usize| -> Option<&String> {
            *i += 1;
            rest.get(*i - 1).copied()
        };
        match rest[i].as_str() {
            "--config" => {
                i += 1;
                match take(&mut i) {
                    Some(v) => flags.config = Some(PathBuf::from(v)),
                    None => return usage_error("--config needs a path"),
                }
            }
            "--seed" => {
                i += 1;
                match take(&mut i).and_then(|v| v.parse().ok()) {
                    Some(v) => flags.seed = Some(v),
                    None => return usage_error("--seed needs an unsigned integer"),
                }
            }
            "--out" => {
                i += 1;
                match take(&mut i) {
                    Some(v) => flags.out = PathBuf::from(v),
                    None => return usage_error("--out needs a directory"),
                }
            }
            "--workers" => {
                i += 1;
                match take(&mut i).and_then(|v| v.parse().ok()) {
                    Some(v) if v >= 1 => flags.workers = v,
                    _ => return usage_error("--workers needs a positive integer"),
                }
            }
            "--scale" => {
                i += 1;
                match take(&mut i).map(|v| v.as_str()) {
                    Some("desk") => flags.scale = Scale::Desk,
                    Some("paper") => flags.scale = Scale::Paper,
                    _ => return usage_error("--scale is desk or paper"),
                }
            }
            "--plot" => {
                flags.plot = true;
                i += 1;
            }
            other => return usage_error(&format!("unknown flag `{other}`")),
        }
    }

    let seed = flags.seed.unwrap_or(0);
    let result = match command.as_str() {
        "kernel" => cmd_kernel(&flags),
        "simulate" => cmd_simulate(&flags),
        "dataset" => cmd_dataset(&flags),
        "train" => cmd_train(&flags),
        "evaluate" => cmd_evaluate(&flags),
        "probe" => cmd_probe(&flags),
        "bench" => cmd_bench(&flags),
        "reproduce" => cmd_reproduce(&flags),
        other => {
            eprintln!("unknown command `{other}`\n{USAGE}");
            return 2;
        }
    };
    let (status, error) = match &result {
        Ok(()) => ("ok", None),
        Err(e) => ("error", Some(e.to_string())),
    };
    let manifest = Manifest {
        command: &command,
        config_hash: format!("{:016x}", manifest_hash(&flags)),
        seed,
        package_version: env!("CARGO_PKG_VERSION"),
        format_version: crate::operator::FORMAT_VERSION,
        status,
        error: error.clone(),
    };
    if let Err(e) = write_manifest(&flags.out, &manifest) {
        eprintln!("failed to write manifest: {e}");
    }
    match result {
        Ok(()) => 0,
        Err(e) => {
            let record = serde_json::json!({ "error": e.to_string(), "command": command });
            let _ = std::fs::write(
                flags.out.join("error.json"),
                serde_json::to_string_pretty(&record).unwrap_or_default(),
            );
            eprintln!("error: {e}");
            1
        }
    }
}

fn usage_error(msg: &str) -> i32 {
    eprintln!("{msg}\n{USAGE}");
    2
}

fn manifest_hash(flags: &Flags) -> u64 {
    let raw = flags
        .config
        .as_ref()
        .and_then(|p| std::fs::read_to_string(p).ok())
        .unwrap_or_default();
    config_hash(&serde_json::json!({
        "config": raw,
        "seed": flags.seed,
        "scale": flags.scale,
        "workers": flags.workers,
    }))
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(flags: &Flags) -> Result<T, CliError> {
    match &flags.config {
        None => Ok(T::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

fn write_out(flags: &Flags, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(&flags.out)?;
    std::fs::write(flags.out.join(name), content)?;
    Ok(())
}

fn write_json(flags: &Flags, name: &str, value: &impl Serialize) -> Result<(), CliError> {
    write_out(
        flags,
        name,
        &serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?,
    )
}

// ---- configuration blocks ----

#[derive(Clone, Serialize, Deserialize)]
struct FamilyConfig {
    family: String,
    params: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct ScenarioConfig {
    c: FamilyConfig,
    f: FamilyConfig,
    delay: FamilyConfig,
    #[serde(default = "default_grid")]
    grid: usize,
}

fn default_grid() -> usize {
    41
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        // The small-delay reference scenario.
        Self {
            c: FamilyConfig {
                family: "ramp".into(),
                params: vec![20.0],
            },
            f: FamilyConfig {
                family: "harmonic".into(),
                params: vec![5.0, 0.0, 5.0, 0.0],
            },
            delay: FamilyConfig {
                family: "exponential".into(),
                params: vec![0.5, -1.6],
            },
            grid: 41,
        }
    }
}

impl ScenarioConfig {
    fn build(&self) -> Result<(CoefficientSet, DelayFunction), CliError> {
        let gain = GainFamily::from_config(&self.c.family, &self.c.params)
            .map_err(|e| module_err!(e))?;
        let coupling = CouplingFamily::from_config(&self.f.family, &self.f.params)
            .map_err(|e| module_err!(e))?;
        let coeffs =
            CoefficientSet::new(gain, coupling, self.grid).map_err(|e| module_err!(e))?;
        let family = DelayFamily::from_config(&self.delay.family, &self.delay.params)
            .map_err(|e| module_err!(e))?;
        let delay = DelayFunction::new(family, self.grid).map_err(|e| module_err!(e))?;
        Ok((coeffs, delay))
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct InitialConfig {
    amplitude: f64,
    frequency: f64,
    shift: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            amplitude: 5.0,
            frequency: 4.0,
            shift: 0.2,
        }
    }
}

impl InitialConfig {
    fn build(&self) -> InitialCondition {
        InitialCondition {
            amplitude: self.amplitude,
            frequency: self.frequency,
            shift: self.shift,
        }
    }
}

// ---- kernel ----

#[derive(Serialize, Deserialize)]
struct KernelCommandConfig {
    #[serde(flatten)]
    scenario: ScenarioConfig,
    #[serde(default = "default_kernel_spacing")]
    spacing: f64,
    #[serde(default = "default_kernel_tolerance")]
    tolerance: f64,
}

fn default_kernel_spacing() -> f64 {
    0.025
}

fn default_kernel_tolerance() -> f64 {
    1e-8
}

impl Default for KernelCommandConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            spacing: default_kernel_spacing(),
            tolerance: default_kernel_tolerance(),
        }
    }
}

fn cmd_kernel(flags: &Flags) -> Result<(), CliError> {
    let config: KernelCommandConfig = read_config(flags)?;
    let (coeffs, delay) = config.scenario.build()?;
    let kernel_config = KernelConfig {
        spacing: config.spacing,
        tolerance: config.tolerance,
        ..KernelConfig::default()
    };
    log("info", "solving kernel");
    let kernel = solve_kernel(&coeffs, &delay, kernel_config).map_err(|e| module_err!(e))?;
    let bound = kernel_bound(&coeffs, &delay).ok().map(|b| b.bound);
    write_out(flags, "kernel.csv", &kernel_to_csv(&kernel))?;
    write_json(flags, "kernel.json", &kernel_sidecar(&kernel, bound))?;
    write_json(flags, "config.json", &config)?;
    if flags.plot {
        write_out(flags, "kernel.svg", &svg_kernel_heatmap(&kernel, "feedback kernel"))?;
    }
    Ok(())
}

// ---- simulate ----

#[derive(Clone, Copy, Serialize, Deserialize)]
struct SimBlock {
    ds: f64,
    dr: f64,
    dt: f64,
    horizon: f64,
    snapshot_stride: usize,
    #[serde(default)]
    noise_sigma: Option<f64>,
    #[serde(default)]
    noise_seed: u64,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            ds: 0.025,
            dr: 0.025,
            dt: 0.005,
            horizon: 10.0,
            snapshot_stride: 100,
            noise_sigma: None,
            noise_seed: 0,
        }
    }
}

impl SimBlock {
    fn build(&self) -> SimConfig {
        SimConfig {
            ds: self.ds,
            dr: self.dr,
            dt: self.dt,
            horizon: self.horizon,
            snapshot_stride: self.snapshot_stride,
            delay_noise: self.noise_sigma.map(|sigma| DelayNoise {
                sigma,
                seed: self.noise_seed,
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SimulateCommandConfig {
    #[serde(flatten)]
    scenario: ScenarioConfig,
    #[serde(default)]
    initial: InitialConfig,
    #[serde(default)]
    sim: SimBlock,
    #[serde(default = "default_controller")]
    controller: String,
    #[serde(default)]
    model_path: Option<PathBuf>,
    /// `delay-free` (the 3-D delay-line form) or `history` (direct delayed
    /// form with the outflow buffer).
    #[serde(default = "default_representation")]
    representation: String,
    #[serde(default = "default_kernel_tolerance")]
    kernel_tolerance: f64,
}

fn default_controller() -> String {
    "analytic".into()
}

fn default_representation() -> String {
    "delay-free".into()
}

impl Default for SimulateCommandConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            initial: InitialConfig::default(),
            sim: SimBlock::default(),
            controller: default_controller(),
            model_path: None,
            representation: default_representation(),
            kernel_tolerance: default_kernel_tolerance(),
        }
    }
}

fn build_controller(
    name: &str,
    model_path: Option<&Path>,
    coeffs: &CoefficientSet,
    delay: &DelayFunction,
    ds: f64,
    kernel_tolerance: f64,
) -> Result<Box<dyn BoundaryController>, CliError> {
    match name {
        "zero" => Ok(Box::new(ZeroController)),
        "analytic" => {
            let kernel_config = KernelConfig {
                spacing: ds.min(0.05),
                tolerance: kernel_tolerance,
                ..KernelConfig::default()
            };
            let kernel = solve_kernel(coeffs, delay, kernel_config).map_err(|e| module_err!(e))?;
            let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone())
                .map_err(|e| module_err!(e))?;
            Ok(Box::new(AnalyticFeedback::new(law)))
        }
        "neural" => {
            let path = model_path
                .ok_or_else(|| CliError::Config("neural controller needs model_path".into()))?;
            let model = load_model(path).map_err(|e| module_err!(e))?;
            Ok(Box::new(NeuralController::new(model)))
        }
        other => Err(CliError::Config(format!("unknown controller `{other}`"))),
    }
}

fn cmd_simulate(flags: &Flags) -> Result<(), CliError> {
    let config: SimulateCommandConfig = read_config(flags)?;
    let (coeffs, delay) = config.scenario.build()?;
    let sim = config.sim.build();
    let n = (1.0 / sim.ds).round() as usize + 1;
    let coeffs_sim = CoefficientSet::new(
        coeffs.gain_family().clone(),
        coeffs.coupling_family().clone(),
        n,
    )
    .map_err(|e| module_err!(e))?;
    let x0 = config.initial.build().sample(n);
    let controller = build_controller(
        &config.controller,
        config.model_path.as_deref(),
        &coeffs_sim,
        &delay,
        sim.ds,
        config.kernel_tolerance,
    )?;
    log("info", "running closed loop");
    let trace = match config.representation.as_str() {
        "delay-free" => {
            simulate(&coeffs_sim, &delay, &x0, controller.as_ref(), sim).map_err(|e| module_err!(e))?
        }
        "history" => simulate_delayed_reference(&coeffs_sim, &delay, &x0, controller.as_ref(), sim)
            .map_err(|e| module_err!(e))?,
        other => return Err(CliError::Config(format!("unknown representation `{other}`"))),
    };
    write_out(flags, "trace.csv", &trace_to_csv(&trace))?;
    write_out(flags, "snapshots_x.csv", &snapshots_to_csv(&trace))?;
    write_out(flags, "snapshots_u.csv", &line_snapshots_to_csv(&trace))?;
    write_json(flags, "config.json", &config)?;
    write_json(
        flags,
        "summary.json",
        &serde_json::json!({
            "non_finite": trace.non_finite,
            "initial_jump": trace.initial_jump,
            "initial_x_l2": trace.x_l2.first(),
            "final_x_l2": trace.x_l2.last(),
            "controller": trace.controller,
            "controller_seconds_total": trace.total_controller_seconds(),
        }),
    )?;
    if flags.plot {
        let decay: Vec<(f64, f64)> = trace
            .times
            .iter()
            .zip(&trace.x_l2)
            .map(|(&t, &v)| (t, v))
            .collect();
        write_out(
            flags,
            "decay.svg",
            &svg_line_chart("state norm", &[("|x|_L2", &decay)], true),
        )?;
    }
    Ok(())
}

// ---- dataset ----

#[derive(Serialize, Deserialize)]
struct DatasetCommandConfig {
    #[serde(default = "default_model_grid")]
    grid: usize,
    #[serde(default = "GenerationConfig::desk")]
    generation: GenerationConfig,
}

fn default_model_grid() -> usize {
    21
}

impl Default for DatasetCommandConfig {
    fn default() -> Self {
        Self {
            grid: default_model_grid(),
            generation: GenerationConfig::desk(),
        }
    }
}

fn scale_generation(mut g: GenerationConfig, scale: Scale) -> GenerationConfig {
    if scale == Scale::Paper {
        // Full-scale counts; hours of compute, documented as reference.
        g.d1_scenarios = 600;
        g.d2_scenarios = 300;
        g.d1_horizon = 10.0;
        g.d2_horizon = 10.0;
        g.d1_stride = 1;
        g.d2_stride = 1;
    }
    g
}

fn cmd_dataset(flags: &Flags) -> Result<(), CliError> {
    let mut config: DatasetCommandConfig = read_config(flags)?;
    if let Some(seed) = flags.seed {
        config.generation.seed = seed;
    }
    config.generation = scale_generation(config.generation, flags.scale);
    let coeffs = CoefficientSet::reference(config.grid);
    log("info", "generating dataset");
    let dataset =
        generate_dataset(&coeffs, config.generation, config.grid).map_err(|e| module_err!(e))?;
    let audit = audit_labels(&dataset, &coeffs).map_err(|e| module_err!(e))?;
    std::fs::create_dir_all(&flags.out)?;
    save_dataset(&dataset, &flags.out.join("dataset.jsonl")).map_err(|e| module_err!(e))?;
    let (d1, d2) = dataset.region_counts();
    write_json(
        flags,
        "dataset_summary.json",
        &serde_json::json!({
            "records": dataset.records.len(),
            "d1_records": d1,
            "d2_records": d2,
            "scenarios": dataset.meta.scenarios.len(),
            "skipped": dataset.meta.skipped,
            "label_audit_worst_relative": audit,
        }),
    )?;
    write_json(flags, "config.json", &config)?;
    Ok(())
}

// ---- train ----

#[derive(Serialize, Deserialize)]
struct TrainCommandConfig {
    dataset_path: PathBuf,
    #[serde(default = "ModelConfig::default")]
    model: ModelConfig,
}

impl Default for TrainCommandConfig {
    fn default() -> Self {
        Self {
            dataset_path: PathBuf::from("out/dataset.jsonl"),
            model: ModelConfig::default(),
        }
    }
}

fn cmd_train(flags: &Flags) -> Result<(), CliError> {
    let mut config: TrainCommandConfig = read_config(flags)?;
    if let Some(seed) = flags.seed {
        config.model.seed = seed;
    }
    config.model.workers = flags.workers;
    let dataset = load_dataset(&config.dataset_path).map_err(|e| module_err!(e))?;
    log("info", "training");
    let model = train(&dataset, config.model.clone()).map_err(|e| module_err!(e))?;
    save_model(&model, &flags.out.join("model.json")).map_err(|e| module_err!(e))?;
    let curve: Vec<(f64, f64)> = model
        .loss_curve
        .iter()
        .enumerate()
        .map(|(i, &l)| (i as f64, l))
        .collect();
    write_out(flags, "loss_curve.csv", &series_to_csv("smooth_l1", &curve))?;
    write_json(
        flags,
        "train_summary.json",
        &serde_json::json!({
            "epochs": model.loss_curve.len(),
            "final_loss": model.loss_curve.last(),
            "parameters": model.parameter_count(),
            "holdout_median_relative_error": model.holdout_median_relative_error,
            "holdout_max_abs_error": model.holdout_max_abs_error,
        }),
    )?;
    write_json(flags, "config.json", &config)?;
    if flags.plot {
        write_out(
            flags,
            "loss_curve.svg",
            &svg_line_chart("training loss", &[("smooth-L1", &curve)], true),
        )?;
    }
    Ok(())
}

// ---- evaluate ----

#[derive(Serialize, Deserialize)]
struct EvaluateCommandConfig {
    #[serde(flatten)]
    scenario: ScenarioConfig,
    #[serde(default)]
    initial: InitialConfig,
    #[serde(default)]
    sim: SimBlock,
    model_path: PathBuf,
    #[serde(default = "default_kernel_tolerance")]
    kernel_tolerance: f64,
}

impl Default for EvaluateCommandConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            initial: InitialConfig::default(),
            sim: SimBlock::default(),
            model_path: PathBuf::from("out/model.json"),
            kernel_tolerance: default_kernel_tolerance(),
        }
    }
}

fn cmd_evaluate(flags: &Flags) -> Result<(), CliError> {
    let config: EvaluateCommandConfig = read_config(flags)?;
    let (_, delay) = config.scenario.build()?;
    let sim = config.sim.build();
    let n = (1.0 / sim.ds).round() as usize + 1;
    let coeffs = CoefficientSet::new(
        config.scenario.build()?.0.gain_family().clone(),
        config.scenario.build()?.0.coupling_family().clone(),
        n,
    )
    .map_err(|e| module_err!(e))?;
    let x0 = config.initial.build().sample(n);
    let kernel = solve_kernel(
        &coeffs,
        &delay,
        KernelConfig {
            spacing: sim.ds.min(0.05),
            tolerance: config.kernel_tolerance,
            ..KernelConfig::default()
        },
    )
    .map_err(|e| module_err!(e))?;
    let law = ControlLaw::new(kernel, delay.clone(), coeffs.clone()).map_err(|e| module_err!(e))?;
    let feedback = AnalyticFeedback::new(law);
    let model = load_model(&config.model_path).map_err(|e| module_err!(e))?;
    let neural = NeuralController::new(model);

    log("info", "running analytic and neural closed loops");
    let trace_analytic =
        simulate(&coeffs, &delay, &x0, &feedback, sim).map_err(|e| module_err!(e))?;
    let trace_neural = simulate(&coeffs, &delay, &x0, &neural, sim).map_err(|e| module_err!(e))?;
    let es = state_error(&trace_analytic, &trace_neural).map_err(|e| module_err!(e))?;
    let epsilon = shadow_epsilon(&trace_neural, feedback.law()).map_err(|e| module_err!(e))?;

    let k_sup = feedback.law().kernel().sup_abs();
    let inputs = StabilityInputs {
        b1: 1.0,
        b2: 1.0,
        tau_upper: delay.tau_sup(),
        tau_lower: delay.tau_inf(),
        state_bound: 1e4,
        line_bound: 1e4,
        kernel_bound: k_sup,
        c_sup: coeffs.c_sup(),
        f_sup: coeffs.f_sup(),
        inverse_kernel_bound: None,
        epsilon,
    };
    let constants = stability_constants(&inputs).map_err(|e| module_err!(e))?;
    let envelope = verify_envelope(&trace_neural, &constants, Some(epsilon), feedback.law())
        .map_err(|e| module_err!(e))?;

    write_out(flags, "state_error.csv", &series_to_csv("e_s", &es))?;
    write_out(flags, "trace_analytic.csv", &trace_to_csv(&trace_analytic))?;
    write_out(flags, "trace_neural.csv", &trace_to_csv(&trace_neural))?;
    write_out(
        flags,
        "envelope_margins.csv",
        &series_to_csv("margin", &envelope.margins),
    )?;
    write_json(
        flags,
        "evaluate_summary.json",
        &serde_json::json!({
            "epsilon_shadow": epsilon,
            "envelope_pass": envelope.pass,
            "norm_equivalence_ratio": envelope.norm_equivalence_ratio,
            "e_s_final": es.last().map(|(_, v)| *v),
            "analytic_final_x_l2": trace_analytic.x_l2.last(),
            "neural_final_x_l2": trace_neural.x_l2.last(),
            "constants": constants,
        }),
    )?;
    write_json(flags, "config.json", &config)?;
    if flags.plot {
        let a: Vec<(f64, f64)> = trace_analytic
            .times
            .iter()
            .zip(&trace_analytic.x_l2)
            .map(|(&t, &v)| (t, v))
            .collect();
        let b: Vec<(f64, f64)> = trace_neural
            .times
            .iter()
            .zip(&trace_neural.x_l2)
            .map(|(&t, &v)| (t, v))
            .collect();
        write_out(
            flags,
            "decay_compare.svg",
            &svg_line_chart("state norms", &[("analytic", &a), ("neural", &b)], true),
        )?;
        write_out(flags, "state_error.svg", &svg_line_chart("state error", &[("e_s", &es)], false))?;
    }
    Ok(())
}

// ---- probe ----

#[derive(Serialize, Deserialize)]
struct ProbeCommandConfig {
    #[serde(default = "default_probe_kinds")]
    kinds: Vec<ProbeKind>,
    #[serde(default = "default_probe_pairs")]
    pairs: usize,
    #[serde(default = "default_model_grid")]
    grid: usize,
}

fn default_probe_kinds() -> Vec<ProbeKind> {
    vec![
        ProbeKind::GInverse,
        ProbeKind::KernelK2,
        ProbeKind::ControlCase1,
        ProbeKind::ControlCase2,
        ProbeKind::ControlCase3,
    ]
}

fn default_probe_pairs() -> usize {
    100
}

impl Default for ProbeCommandConfig {
    fn default() -> Self {
        Self {
            kinds: default_probe_kinds(),
            pairs: default_probe_pairs(),
            grid: default_model_grid(),
        }
    }
}

fn cmd_probe(flags: &Flags) -> Result<(), CliError> {
    let config: ProbeCommandConfig = read_config(flags)?;
    let coeffs = CoefficientSet::reference(config.grid);
    let mut reports = Vec::new();
    for &kind in &config.kinds {
        log("info", &format!("probing {kind:?}"));
        let probe_config = ProbeConfig {
            pairs: config.pairs,
            seed: flags.seed.unwrap_or(31),
            ..ProbeConfig::default()
        };
        let report = lipschitz_probe(kind, &coeffs, probe_config).map_err(|e| module_err!(e))?;
        reports.push(report);
    }
    let mut csv = String::from("kind,pairs,skipped,max_quotient,median_quotient,ceiling,pass\n");
    for r in &reports {
        use std::fmt::Write as _;
        let _ = writeln!(
            csv,
            "{:?},{},{},{},{},{},{}",
            r.kind,
            r.pairs,
            r.skipped,
            fmt_float(r.max_quotient),
            fmt_float(r.median_quotient),
            fmt_float(r.ceiling),
            r.max_quotient <= r.ceiling
        );
    }
    write_out(flags, "probes.csv", &csv)?;
    write_json(flags, "probes.json", &reports)?;
    write_json(flags, "config.json", &config)?;
    Ok(())
}

// ---- bench ----

#[derive(Serialize, Deserialize)]
struct BenchCommandConfig {
    #[serde(default = "default_bench_grids")]
    grids: Vec<f64>,
    #[serde(default = "default_bench_dt")]
    dt: f64,
    #[serde(default = "default_bench_horizon")]
    horizon: f64,
    #[serde(default = "default_bench_reps")]
    repetitions: usize,
    model_path: PathBuf,
    #[serde(default)]
    delay: Option<FamilyConfig>,
}

fn default_bench_grids() -> Vec<f64> {
    vec![0.08, 0.05, 0.025]
}

fn default_bench_dt() -> f64 {
    0.005
}

fn default_bench_horizon() -> f64 {
    16.0
}

fn default_bench_reps() -> usize {
    10
}

impl Default for BenchCommandConfig {
    fn default() -> Self {
        Self {
            grids: default_bench_grids(),
            dt: default_bench_dt(),
            horizon: default_bench_horizon(),
            repetitions: default_bench_reps(),
            model_path: PathBuf::from("out/model.json"),
            delay: None,
        }
    }
}

fn cmd_bench(flags: &Flags) -> Result<(), CliError> {
    let config: BenchCommandConfig = read_config(flags)?;
    let delay_family = match &config.delay {
        Some(f) => DelayFamily::from_config(&f.family, &f.params).map_err(|e| module_err!(e))?,
        None => DelayFamily::Exponential {
            amplitude: 0.5,
            rate: -1.6,
        },
    };
    let delay = DelayFunction::new(delay_family, 41).map_err(|e| module_err!(e))?;
    let model = load_model(&config.model_path).map_err(|e| module_err!(e))?;
    let neural = NeuralController::new(model);
    log("info", "benchmarking controllers");
    let rows = bench_controllers(
        CoefficientSet::reference,
        &delay,
        &InitialCondition::reference(),
        &neural,
        &config.grids,
        config.dt,
        config.horizon,
        config.repetitions,
    )
    .map_err(|e| module_err!(e))?;
    write_out(flags, "bench.csv", &bench_to_csv(&rows))?;
    write_json(flags, "bench.json", &rows)?;
    write_json(flags, "config.json", &config)?;
    Ok(())
}

// ---- reproduce ----

#[derive(Default, Serialize, Deserialize)]
struct ReproduceCommandConfig {
    #[serde(default)]
    model: Option<ModelConfig>,
}

/// Desk-scale end-to-end pipeline: reference kernels, closed loops with the
/// exact feedback and the uncompensated baseline, dataset + training, the
/// learned-controller evaluations, probes and the timing table.
fn cmd_reproduce(flags: &Flags) -> Result<(), CliError> {
    let config: ReproduceCommandConfig = read_config(flags)?;
    std::fs::create_dir_all(&flags.out)?;
    let sub = |name: &str| Flags {
        config: None,
        seed: flags.seed,
        out: flags.out.join(name),
        workers: flags.workers,
        scale: flags.scale,
        plot: flags.plot,
    };

    let scenarios = [
        (
            "d1",
            FamilyConfig {
                family: "cosine-chebyshev".into(),
                params: vec![3.0, 0.5, 5.0],
            },
            0.02,
        ),
        (
            "d2",
            FamilyConfig {
                family: "exponential".into(),
                params: vec![0.5, -1.6],
            },
            0.005,
        ),
    ];

    // Kernels and closed loops for both reference scenarios.
    for (name, family, dt) in &scenarios {
        let scenario = ScenarioConfig {
            delay: family.clone(),
            ..ScenarioConfig::default()
        };
        let kflags = sub(&format!("kernel_{name}"));
        let kcfg = KernelCommandConfig {
            scenario: scenario.clone(),
            ..KernelCommandConfig::default()
        };
        run_with_config(&kflags, &kcfg, cmd_kernel)?;
        for (controller, label) in [("analytic", "closed"), ("zero", "uncompensated")] {
            let sflags = sub(&format!("simulate_{name}_{label}"));
            let scfg = SimulateCommandConfig {
                scenario: scenario.clone(),
                sim: SimBlock {
                    dt: *dt,
                    snapshot_stride: (10.0 / dt / 10.0).round() as usize,
                    ..SimBlock::default()
                },
                controller: controller.into(),
                ..SimulateCommandConfig::default()
            };
            run_with_config(&sflags, &scfg, cmd_simulate)?;
        }
    }

    // Dataset and training.
    let dflags = sub("dataset");
    run_with_config(&dflags, &DatasetCommandConfig::default(), cmd_dataset)?;
    let tflags = sub("train");
    let mut tcfg = TrainCommandConfig {
        dataset_path: dflags.out.join("dataset.jsonl"),
        model: config.model.unwrap_or_else(reproduce_model_config),
    };
    tcfg.model.workers = flags.workers;
    run_with_config(&tflags, &tcfg, cmd_train)?;
    let model_path = tflags.out.join("model.json");

    // Learned-controller evaluation on both scenarios.
    for (name, family, dt) in &scenarios {
        let eflags = sub(&format!("evaluate_{name}"));
        let ecfg = EvaluateCommandConfig {
            scenario: ScenarioConfig {
                delay: family.clone(),
                ..ScenarioConfig::default()
            },
            sim: SimBlock {
                dt: *dt,
                snapshot_stride: (10.0 / dt / 10.0).round() as usize,
                ..SimBlock::default()
            },
            model_path: model_path.clone(),
            ..EvaluateCommandConfig::default()
        };
        run_with_config(&eflags, &ecfg, cmd_evaluate)?;
    }

    // Probes and the timing table.
    let pflags = sub("probe");
    let pairs = match flags.scale {
        Scale::Desk => 100,
        Scale::Paper => 100,
    };
    run_with_config(
        &pflags,
        &ProbeCommandConfig {
            pairs,
            ..ProbeCommandConfig::default()
        },
        cmd_probe,
    )?;
    let bflags = sub("bench");
    run_with_config(
        &bflags,
        &BenchCommandConfig {
            model_path,
            ..BenchCommandConfig::default()
        },
        cmd_bench,
    )?;
    Ok(())
}

/// The training configuration the reproduce pipeline uses at desk scale.
pub fn reproduce_model_config() -> ModelConfig {
    ModelConfig {
        basis: 96,
        epochs: 1200,
        target_loss: Some(4.5e-3),
        learning_rate: 3e-3,
        lr_decay: 0.9985,
        ..ModelConfig::default()
    }
}

fn run_with_config<C: Serialize>(
    flags: &Flags,
    config: &C,
    run: impl Fn(&Flags) -> Result<(), CliError>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&flags.out)?;
    let path = flags.out.join("input_config.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(config).map_err(|e| CliError::Config(e.to_string()))?,
    )?;
    let flags = Flags {
        config: Some(path),
        out: flags.out.clone(),
        seed: flags.seed,
        workers: flags.workers,
        scale: flags.scale,
        plot: flags.plot,
    };
    run(&flags)
}

/// Parse a scenario document (the same JSON block the commands consume) into
/// plant coefficients and a delay. Shared with the C bindings.
pub fn scenario_from_json(json: &str) -> Result<(CoefficientSet, DelayFunction), String> {
    let config: ScenarioConfig = serde_json::from_str(json).map_err(|e| e.to_string())?;
    config.build().map_err(|e| e.to_string())
}
