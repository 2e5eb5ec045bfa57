//! Batch front end for the particle-system laboratory: config ingestion,
//! deterministic seeding, subcommand dispatch, result persistence.
//!
//! Exit codes: 0 on success (including divergent but completed simulations),
//! 1 when the acceptance suite reports a failed criterion, 2 on config
//! errors.

mod config;
mod outputs;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mvlab::engine::{picard_iteration, simulate_particles, BrownianGrid, EngineError};
use mvlab::experiments::acceptance::{run_acceptance_suite, AcceptanceConfig};
use mvlab::experiments::{
    run_chaos_sweep, run_glivenko_sweep, run_timestep_sweep, ChaosPlan, GlivenkoPlan,
    SamplingOracle, SweepResult, TimestepPlan,
};
use mvlab::model::validate_model;
use mvlab::rng;
use mvlab::yamada::{make_smoothing, make_smoothing_eps, probe_invariants};

use config::{config_err, run_err, CliError, RunConfig};

const SALT_GRID: u64 = 0x4752_4944;
const SALT_X0: u64 = 0x5830;

#[derive(Parser)]
#[command(name = "mvlab", version, about = "Interacting-particle laboratory for mean-field SDEs")]
struct Cli {
    /// Configuration file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct ModelArgs {
    /// Built-in family id (linear_mf, holder_drift_1d, holder_diffusion_1d,
    /// bounded_holder_multid).
    #[arg(long)]
    model: Option<String>,
    /// Model parameter override `key=value`; repeatable.
    #[arg(long = "param", value_name = "KEY=VAL")]
    params: Vec<String>,
}

#[derive(Args, Default)]
struct InitialArgs {
    /// Initial law: point | uniform | gaussian.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    mean: Option<f64>,
    #[arg(long)]
    var: Option<f64>,
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
}

#[derive(Args, Default)]
struct SweepArgs {
    /// Particle count.
    #[arg(long)]
    n: Option<usize>,
    /// Particle counts for sweeps over N, comma separated.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    /// Step factors for sweeps over the step size, comma separated.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<usize>>,
    /// Step factor for single-step-size runs.
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long)]
    factor_ref: Option<usize>,
    /// Fine grid resolution (power of two).
    #[arg(long)]
    m: Option<usize>,
    /// Time horizon.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Error moment.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n_extra_mult: Option<usize>,
    /// Also emit an SVG plot.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one interacting ensemble and store its paths.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Strong error against a fine reference across step sizes.
    SweepDt {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Strong error against a large coupled reference across particle counts.
    SweepN {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Decay of the empirical-measure distance in the sample count.
    Glivenko {
        #[command(flatten)]
        initial: InitialArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        surrogate_mult: Option<usize>,
        #[arg(long)]
        n_proj: Option<usize>,
    },
    /// Fixed-point iteration over the law flow with contraction diagnostics.
    Picard {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        initial: InitialArgs,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Probe a model's declared regularity assumptions.
    ValidateModel {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        box_radius: Option<f64>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Tabulate the smoothing pair and check its invariants.
    YamadaCheck {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Use gamma = exp(1/eps).
        #[arg(long)]
        eps_only: bool,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        x_max: Option<f64>,
    },
    /// Run the acceptance suite.
    Accept {
        /// quick | full.
        #[arg(long)]
        budget: Option<String>,
        /// Restrict to criteria containing this substring.
        #[arg(long)]
        only: Option<String>,
        /// Collapse tolerances to zero (failure fixture).
        #[arg(long)]
        zero_tolerance: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }

    apply_command_overrides(&mut cfg, &cli.command)?;
    cfg.validate()?;

    if cfg.workers > 0 {
        // Ignore the error if a pool already exists (only possible in-process).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build_global();
    }

    match &cli.command {
        Command::Simulate { .. } => cmd_simulate(&cfg),
        Command::SweepDt { sweep, .. } => cmd_sweep_dt(&cfg, sweep.svg),
        Command::SweepN { sweep, .. } => cmd_sweep_n(&cfg, sweep.svg),
        Command::Glivenko { sweep, .. } => cmd_glivenko(&cfg, sweep.svg),
        Command::Picard { .. } => cmd_picard(&cfg),
        Command::ValidateModel { .. } => cmd_validate_model(&cfg),
        Command::YamadaCheck { .. } => cmd_yamada_check(&cfg),
        Command::Accept { .. } => cmd_accept(&cfg),
    }
}

fn parse_params(model_cfg: &mut config::ModelConfig, raw: &[String]) -> Result<(), CliError> {
    for pair in raw {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| config_err(format!("--param expects key=value, got `{pair}`")))?;
        let value: f64 = value
            .parse()
            .map_err(|e| config_err(format!("--param {key}: {e}")))?;
        model_cfg.params.insert(key.to_string(), value);
    }
    Ok(())
}

fn apply_model(cfg: &mut RunConfig, args: &ModelArgs) -> Result<(), CliError> {
    if let Some(model) = &args.model {
        cfg.model.family = model.clone();
    }
    parse_params(&mut cfg.model, &args.params)
}

fn apply_initial(cfg: &mut RunConfig, args: &InitialArgs) {
    if let Some(law) = &args.law {
        cfg.initial.law = law.clone();
    }
    if let Some(v) = args.mean {
        cfg.initial.mean = v;
    }
    if let Some(v) = args.var {
        cfg.initial.var = v;
    }
    if let Some(v) = args.lo {
        cfg.initial.lo = v;
    }
    if let Some(v) = args.hi {
        cfg.initial.hi = v;
    }
}

fn apply_sweep(cfg: &mut RunConfig, args: &SweepArgs) {
    let s = &mut cfg.sweep;
    if let Some(v) = args.n {
        s.n = v;
    }
    if let Some(v) = &args.n_list {
        s.n_list = v.clone();
    }
    if let Some(v) = &args.factors {
        s.factors = v.clone();
    }
    if let Some(v) = args.factor {
        s.factor = v;
    }
    if let Some(v) = args.factor_ref {
        s.factor_ref = v;
    }
    if let Some(v) = args.m {
        s.m = v;
    }
    if let Some(v) = args.t {
        s.t = v;
    }
    if let Some(v) = args.replications {
        s.replications = v;
    }
    if let Some(v) = args.q {
        s.q = v;
    }
    if let Some(v) = args.n_extra_mult {
        s.n_extra_mult = v;
    }
    if args.svg {
        cfg.output.svg = true;
    }
}

fn apply_command_overrides(cfg: &mut RunConfig, command: &Command) -> Result<(), CliError> {
    match command {
        Command::Simulate { model, initial, sweep }
        | Command::SweepDt { model, initial, sweep }
        | Command::SweepN { model, initial, sweep } => {
            apply_model(cfg, model)?;
            apply_initial(cfg, initial);
            apply_sweep(cfg, sweep);
        }
        Command::Glivenko { initial, sweep, p, dim, surrogate_mult, n_proj } => {
            apply_initial(cfg, initial);
            apply_sweep(cfg, sweep);
            if let Some(v) = p {
                cfg.glivenko.p = *v;
            }
            if let Some(v) = dim {
                cfg.glivenko.dim = *v;
            }
            if let Some(v) = surrogate_mult {
                cfg.glivenko.surrogate_mult = *v;
            }
            if let Some(v) = n_proj {
                cfg.glivenko.n_proj = *v;
            }
        }
        Command::Picard { model, initial, sweep, k_max } => {
            apply_model(cfg, model)?;
            apply_initial(cfg, initial);
            apply_sweep(cfg, sweep);
            if let Some(v) = k_max {
                cfg.picard.k_max = *v;
            }
        }
        Command::ValidateModel { model, box_radius, n_pairs, tol } => {
            apply_model(cfg, model)?;
            if let Some(v) = box_radius {
                cfg.validate.box_radius = *v;
            }
            if let Some(v) = n_pairs {
                cfg.validate.n_pairs = *v;
            }
            if let Some(v) = tol {
                cfg.validate.tol = *v;
            }
        }
        Command::YamadaCheck { gamma, eps, eps_only, grid_points, x_max } => {
            if let Some(v) = gamma {
                cfg.yamada.gamma = *v;
            }
            if let Some(v) = eps {
                cfg.yamada.eps = *v;
            }
            if *eps_only {
                cfg.yamada.eps_only = true;
            }
            if let Some(v) = grid_points {
                cfg.yamada.grid_points = *v;
            }
            if let Some(v) = x_max {
                cfg.yamada.x_max = *v;
            }
        }
        Command::Accept { budget, only, zero_tolerance } => {
            if let Some(v) = budget {
                cfg.accept.budget = v.clone();
            }
            if only.is_some() {
                cfg.accept.only = only.clone();
            }
            if *zero_tolerance {
                cfg.accept.zero_tolerance = true;
            }
        }
    }
    Ok(())
}

fn write_sweep_outputs(
    cfg: &RunConfig,
    command: &str,
    result: &SweepResult,
    x_label: &str,
) -> Result<(), CliError> {
    let fit = result.fit().ok();
    if cfg.output.csv {
        outputs::atomic_write(&cfg.out.join("results.csv"), result.to_csv().as_bytes())?;
    }
    if cfg.output.svg {
        let plot = svg::loglog_plot(result, fit.as_ref(), x_label);
        outputs::atomic_write(&cfg.out.join(format!("{command}.svg")), plot.as_bytes())?;
    }
    if cfg.output.json {
        let payload = json!({
            "fit": fit.as_ref().map(outputs::to_value),
            "aggregates": outputs::to_value(&result.aggregates),
            "divergence_total": result.total_diverged(),
            "wall_s": result.cells.iter().map(|c| c.wall_s).sum::<f64>(),
        });
        outputs::write_summary(&cfg.out, &outputs::summary(command, cfg, payload))?;
        outputs::write_config_echo(&cfg.out, cfg)?;
    }
    match fit {
        Some(f) => println!(
            "{command}: slope {:.4} (R^2 {:.4}), {} cells, {} diverged",
            f.slope,
            f.r_squared,
            result.cells.len(),
            result.total_diverged()
        ),
        None => println!(
            "{command}: {} cells, {} diverged (no fit)",
            result.cells.len(),
            result.total_diverged()
        ),
    }
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<u8, CliError> {
    let model = cfg.build_model()?;
    let law = cfg.build_initial()?;
    let s = &cfg.sweep;
    let dim = model.dim();
    let grid = BrownianGrid::new(dim, s.n, s.t, s.m, rng::derive(cfg.seed, SALT_GRID))
        .map_err(config_err)?;
    let x0 = law.sample(s.n, dim, rng::derive(cfg.seed, SALT_X0)).map_err(config_err)?;
    let mut paths = simulate_particles(&model, &grid, s.factor, &x0, 1).map_err(config_err)?;
    paths.seed = cfg.seed;
    for w in &paths.warnings {
        eprintln!("warning: {w}");
    }
    if cfg.output.paths_csv {
        let mut csv = Vec::new();
        paths.write_csv(&mut csv).map_err(|e| run_err(e))?;
        outputs::atomic_write(&cfg.out.join("paths.csv"), &csv)?;
    }
    if cfg.output.paths_bin {
        let mut bin = Vec::new();
        paths.write_binary(&mut bin).map_err(|e| run_err(e))?;
        outputs::atomic_write(&cfg.out.join("paths.bin"), &bin)?;
    }
    if cfg.output.json {
        let terminal = paths.row(paths.n_times() - 1);
        let n = paths.n_particles as f64;
        let mean: f64 = terminal.iter().sum::<f64>() / (n * dim as f64);
        let payload = json!({
            "n_times": paths.n_times(),
            "delta": paths.dt(),
            "terminal_mean": mean,
            "diverged": outputs::to_value(&paths.diverged),
            "warnings": paths.warnings,
        });
        outputs::write_summary(&cfg.out, &outputs::summary("simulate", cfg, payload))?;
        outputs::write_config_echo(&cfg.out, cfg)?;
    }
    println!(
        "simulate: {} particles, {} recorded rows, delta {}{}",
        paths.n_particles,
        paths.n_times(),
        paths.dt(),
        match paths.diverged {
            Some(d) => format!(", DIVERGED at step {}", d.step),
            None => String::new(),
        }
    );
    Ok(0)
}

fn cmd_sweep_dt(cfg: &RunConfig, _svg: bool) -> Result<u8, CliError> {
    let plan = TimestepPlan {
        model: cfg.build_model()?,
        n_particles: cfg.sweep.n,
        factors: cfg.sweep.factors.clone(),
        horizon: cfg.sweep.t,
        fine_steps: cfg.sweep.m,
        replications: cfg.sweep.replications,
        seed: cfg.seed,
        factor_ref: cfg.sweep.factor_ref,
        n_extra: cfg.n_extra(cfg.sweep.n),
        q: cfg.sweep.q,
        initial: cfg.build_initial()?,
    };
    let result = run_timestep_sweep(&plan).map_err(config_err)?;
    write_sweep_outputs(cfg, "sweep-dt", &result, "step size")?;
    Ok(0)
}

fn cmd_sweep_n(cfg: &RunConfig, _svg: bool) -> Result<u8, CliError> {
    let max_n = *cfg.sweep.n_list.iter().max().ok_or_else(|| config_err("empty n_list"))?;
    let plan = ChaosPlan {
        model: cfg.build_model()?,
        n_list: cfg.sweep.n_list.clone(),
        factor: cfg.sweep.factor,
        factor_ref: cfg.sweep.factor_ref,
        horizon: cfg.sweep.t,
        fine_steps: cfg.sweep.m,
        replications: cfg.sweep.replications,
        seed: cfg.seed,
        n_extra: cfg.n_extra(max_n),
        q: cfg.sweep.q,
        initial: cfg.build_initial()?,
    };
    let result = run_chaos_sweep(&plan).map_err(config_err)?;
    write_sweep_outputs(cfg, "sweep-n", &result, "particles")?;
    Ok(0)
}

fn cmd_glivenko(cfg: &RunConfig, _svg: bool) -> Result<u8, CliError> {
    let plan = GlivenkoPlan {
        oracle: SamplingOracle::Law { law: cfg.build_initial()?, dim: cfg.glivenko.dim },
        n_list: cfg.sweep.n_list.clone(),
        replications: cfg.sweep.replications,
        seed: cfg.seed,
        p: cfg.glivenko.p,
        surrogate_mult: cfg.glivenko.surrogate_mult,
        n_proj: cfg.glivenko.n_proj,
    };
    let result = run_glivenko_sweep(&plan).map_err(config_err)?;
    write_sweep_outputs(cfg, "glivenko", &result, "samples")?;
    Ok(0)
}

fn cmd_picard(cfg: &RunConfig) -> Result<u8, CliError> {
    let model = cfg.build_model()?;
    let law = cfg.build_initial()?;
    let s = &cfg.sweep;
    let dim = model.dim();
    let grid = BrownianGrid::new(dim, s.n, s.t, s.m, rng::derive(cfg.seed, SALT_GRID))
        .map_err(config_err)?;
    let x0 = law.sample(s.n, dim, rng::derive(cfg.seed, SALT_X0)).map_err(config_err)?;
    let outcome = picard_iteration(&model, &grid, s.factor, cfg.picard.k_max, &x0);
    let (distances, diverged) = match outcome {
        Ok(result) => (result.distances, None),
        Err(EngineError::Diverged { step, particle }) => {
            (Vec::new(), Some(json!({"step": step, "particle": particle})))
        }
        Err(e) => return Err(config_err(e)),
    };
    if cfg.output.csv {
        let mut csv = String::from("k,distance\n");
        for (k, d) in distances.iter().enumerate() {
            csv.push_str(&format!("{},{d}\n", k + 1));
        }
        outputs::atomic_write(&cfg.out.join("picard.csv"), csv.as_bytes())?;
    }
    if cfg.output.json {
        let ratios: Vec<f64> =
            distances.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::NAN }).collect();
        let payload = json!({
            "distances": distances,
            "ratios": ratios,
            "diverged": diverged,
        });
        outputs::write_summary(&cfg.out, &outputs::summary("picard", cfg, payload))?;
        outputs::write_config_echo(&cfg.out, cfg)?;
    }
    println!("picard: distances {distances:?}");
    Ok(0)
}

fn cmd_validate_model(cfg: &RunConfig) -> Result<u8, CliError> {
    let model = cfg.build_model()?;
    let report = validate_model(&model, &cfg.probe_config()).map_err(config_err)?;
    for check in &report.checks {
        println!(
            "{} {}: observed {:.3e} vs bound {:.3e}",
            if check.passed { "pass" } else { "FAIL" },
            check.name,
            check.observed,
            check.bound
        );
    }
    println!("validate-model: {} -> {}", report.model, if report.passed { "pass" } else { "FAIL" });
    if cfg.output.json {
        outputs::write_summary(
            &cfg.out,
            &outputs::summary("validate-model", cfg, outputs::to_value(&report)),
        )?;
        outputs::write_config_echo(&cfg.out, cfg)?;
    }
    Ok(0)
}

fn cmd_yamada_check(cfg: &RunConfig) -> Result<u8, CliError> {
    let y = &cfg.yamada;
    let spec = if y.eps_only { make_smoothing_eps(y.eps) } else { make_smoothing(y.gamma, y.eps) }
        .map_err(config_err)?;
    if cfg.output.csv {
        let mut csv = String::from("x,v,v_prime,v_double_prime,lower_bound,upper_bound,curvature_bound\n");
        let k = y.grid_points.max(2);
        for i in 0..k {
            let x = -y.x_max + 2.0 * y.x_max * i as f64 / (k - 1) as f64;
            csv.push_str(&format!(
                "{x},{},{},{},{},{},{}\n",
                spec.v(x),
                spec.v_prime(x),
                spec.v_double_prime(x),
                x.abs() - spec.eps,
                x.abs(),
                spec.curvature_bound(x),
            ));
        }
        outputs::atomic_write(&cfg.out.join("yamada.csv"), csv.as_bytes())?;
    }
    let probe = probe_invariants(&spec, 1000, 1e-8, 1e-6);
    println!(
        "yamada-check: gamma {:.6}, eps {}, ramp {:.6e} -> {}",
        spec.gamma,
        spec.eps,
        spec.ramp,
        if probe.passed { "pass" } else { "FAIL" }
    );
    println!(
        "  mass defect {:.3e}, bracket {:.3e}, fd error {:.3e} over {} checks",
        probe.mass_defect, probe.worst_bracket_violation, probe.worst_fd_error, probe.fd_checks
    );
    if cfg.output.json {
        let payload = json!({
            "spec": outputs::to_value(&spec),
            "invariants": outputs::to_value(&probe),
        });
        outputs::write_summary(&cfg.out, &outputs::summary("yamada-check", cfg, payload))?;
        outputs::write_config_echo(&cfg.out, cfg)?;
    }
    Ok(0)
}

fn cmd_accept(cfg: &RunConfig) -> Result<u8, CliError> {
    let budget = cfg.accept.budget.parse().map_err(config_err)?;
    let acfg = AcceptanceConfig { budget, seed: cfg.seed, zero_tolerance: cfg.accept.zero_tolerance };
    let report = run_acceptance_suite(&acfg, cfg.accept.only.as_deref());
    for line in report.lines() {
        println!("{line}");
    }
    if report.outcomes.is_empty() {
        return Err(config_err("the criterion filter matched nothing"));
    }
    if cfg.output.json {
        outputs::write_summary(&cfg.out, &outputs::summary("accept", cfg, outputs::to_value(&report)))?;
        outputs::write_config_echo(&cfg.out, cfg)?;
    }
    println!(
        "accept: {}/{} criteria passed in {:.1}s",
        report.outcomes.iter().filter(|o| o.passed).count(),
        report.outcomes.len(),
        report.wall_s
    );
    Ok(if report.passed { 0 } else { 1 })
}
