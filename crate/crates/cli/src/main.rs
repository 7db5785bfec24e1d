use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sircontrol::harness::output::{open_loop_rows, EstimateRecord};
use sircontrol::harness::{
    emit_csv, gap_grid, open_loop_run, run_scenario, sweep_h, NoiseConfig, OutputSet, Preset,
    ScenarioConfig, ScenarioError,
};
use sircontrol::Method;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "sircontrol", version, about = "SIR isolation control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the optimal, robust and misestimated policies on one scenario.
    Simulate(RunArgs),
    /// Sweep the sample step of the two-window estimator.
    Estimate(RunArgs),
    /// Robust-policy cost over a grid of symmetric parameter inflations.
    Gap {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated inflations x, giving beta*(1+x) and gamma*(1-x).
        #[arg(long, value_delimiter = ',', default_value = "0,0.01,0.02,0.05,0.1")]
        inflations: Vec<f64>,
        /// Run the grid on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Run a named preset with its default output layout.
    Reproduce {
        preset: Preset,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the JSON configuration of a preset.
    Config { preset: Preset },
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Scenario JSON; defaults to the policy-compare preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Use forward Euler instead of RK4.
    #[arg(long)]
    euler: bool,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    i_bar: Option<f64>,
    #[arg(long, conflicts_with_all = ["noise_divisor", "no_noise"])]
    snr_db: Option<f64>,
    #[arg(long, conflicts_with = "no_noise")]
    noise_divisor: Option<f64>,
    #[arg(long)]
    no_noise: bool,
    /// Controller sees a new measurement every this many steps.
    #[arg(long)]
    measurement_interval: Option<usize>,
    /// Comma-separated step multipliers for the estimation sweep.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<usize>>,
}

/// Marks failures that come from the scenario configuration.
#[derive(Debug)]
struct InvalidConfig;

impl std::fmt::Display for InvalidConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("invalid scenario configuration")
    }
}

impl RunArgs {
    fn scenario(&self, base: Preset) -> Result<ScenarioConfig> {
        self.build(base).context(InvalidConfig)
    }

    fn build(&self, base: Preset) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ScenarioConfig::from_json(&text).with_context(|| format!("loading {}", path.display()))?
            }
            None => base.config(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(h) = self.horizon {
            cfg.integrator.horizon = h;
        }
        if let Some(step) = self.step {
            cfg.integrator.step = step;
        }
        if self.euler {
            cfg.integrator.method = Method::Euler;
        }
        if let Some(beta) = self.beta {
            cfg.params.beta = beta;
        }
        if let Some(gamma) = self.gamma {
            cfg.params.gamma = gamma;
        }
        if let Some(u) = self.u_max {
            cfg.u_max = u;
        }
        if let Some(i) = self.i_bar {
            cfg.i_bar = i;
        }
        if let Some(db) = self.snr_db {
            cfg.noise = NoiseConfig::SnrDb { db };
        }
        if let Some(divisor) = self.noise_divisor {
            cfg.noise = NoiseConfig::ScaledVariance { divisor };
        }
        if self.no_noise {
            cfg.noise = NoiseConfig::None;
        }
        if let Some(k) = self.measurement_interval {
            cfg.measurement_interval = k;
        }
        if let Some(alphas) = &self.alphas {
            cfg.estimation.alphas = alphas.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(set: &OutputSet, out: &Path) -> Result<()> {
    for path in emit_csv(set, out)? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<ExitCode> {
    let artifacts = run_scenario(cfg)?;
    write(&OutputSet::from(&artifacts), out)?;
    for o in &artifacts.outcomes {
        println!(
            "{:<13} cost={:.6} max_I={:.6} feasible={}",
            o.cost.policy, o.cost.total_cost, o.run.feasibility.max_infection_attained, o.cost.feasible
        );
    }
    Ok(if artifacts.robust_feasible() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INFEASIBLE) })
}

fn estimate(cfg: &ScenarioConfig, out: &Path) -> Result<ExitCode> {
    let rows = sweep_h(cfg)?;
    let contained = rows.iter().filter(|r| r.contained).count();
    println!("{} sample steps, {} with the true parameters inside the bound", rows.len(), contained);
    let set = OutputSet { estimates: Some(rows.iter().map(EstimateRecord::from).collect()), ..OutputSet::default() };
    write(&set, out)?;
    Ok(ExitCode::SUCCESS)
}

fn gap(cfg: &ScenarioConfig, inflations: &[f64], parallel: bool, out: &Path) -> Result<ExitCode> {
    let rows = gap_grid(cfg, inflations, parallel)?;
    for r in &rows {
        println!("x={:<6} cost={:.6} gap={:?} feasible={}", r.inflation, r.cost.total_cost, r.cost.gap_direct, r.cost.feasible);
    }
    let all_feasible = rows.iter().all(|r| r.cost.feasible);
    let set = OutputSet { costs: Some(rows.into_iter().map(|r| r.cost).collect()), ..OutputSet::default() };
    write(&set, out)?;
    Ok(if all_feasible { ExitCode::SUCCESS } else { ExitCode::from(EXIT_INFEASIBLE) })
}

fn open_loop(cfg: &ScenarioConfig, out: &Path) -> Result<ExitCode> {
    let (traj, measured) = open_loop_run(cfg)?;
    println!("peak I={:.6}", traj.max_infection());
    let set = OutputSet { trajectories: vec![("open_loop".into(), open_loop_rows(&traj, &measured))], ..OutputSet::default() };
    write(&set, out)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate(args) => simulate(&args.scenario(Preset::PolicyCompare)?, &args.out),
        Command::Estimate(args) => estimate(&args.scenario(Preset::BoundSweep)?, &args.out),
        Command::Gap { run, inflations, sequential } => {
            gap(&run.scenario(Preset::Fig1)?, &inflations, !sequential, &run.out)
        }
        Command::Reproduce { preset, run } => {
            let cfg = run.scenario(preset)?;
            let out = run.out.join(preset.name());
            match preset {
                Preset::Fig1 | Preset::PolicyCompare => simulate(&cfg, &out),
                Preset::SirWave => open_loop(&cfg, &out),
                Preset::ParamEst | Preset::BoundSweep => estimate(&cfg, &out),
            }
        }
        Command::Config { preset } => {
            println!("{}", preset.config().to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.downcast_ref::<InvalidConfig>().is_some()
        || err.chain().any(|cause| matches!(cause.downcast_ref::<ScenarioError>(), Some(ScenarioError::Config(_))))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
