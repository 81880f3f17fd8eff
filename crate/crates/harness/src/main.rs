use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tankfdi::config::{load_config, ExperimentConfig};
use tankfdi::experiment::{self, Estimator};
use tankfdi::{output, HarnessError, Result};
use tankfdi_core::analysis;

#[derive(Debug, Parser)]
#[command(name = "tankfdi", version, about = "Three-tank observer-based fault detection experiments")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integration step.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulated time span.
    #[arg(long, global = true)]
    horizon: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the observer gains and the closed-loop error poles.
    Design {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        poles: Option<Vec<f64>>,
    },
    /// Run every scenario and write CSV and SVG output.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the detection report for each initial condition.
    Detect,
    /// Print the Monte Carlo MSE table.
    Compare,
    /// Scan the leak coefficient against the reference detection times.
    Calibrate {
        #[arg(long, default_value_t = 0.1)]
        from: f64,
        #[arg(long, default_value_t = 2.0)]
        to: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
    },
}

fn resolve_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.run.seed = s;
    }
    if let Some(dt) = g.dt {
        cfg.run.dt = dt;
    }
    if let Some(h) = g.horizon {
        cfg.run.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_vec(v: &tankfdi_core::linalg::Vector) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("({})", parts.join(", "))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Design { poles } => {
            if let Some(p) = poles {
                cfg.observer.poles = p;
                cfg.validate()?;
            }
            let d = experiment::design(&cfg)?;
            println!("Psi_o = {}", fmt_vec(&d.observer.psi_o));
            println!("Psi   = {}", fmt_vec(&d.observer.psi));
            let eig = analysis::eigenvalues(&d.observer.gamma_d)?;
            let parts: Vec<String> = eig.iter().map(|z| format!("{:.10}{:+.10}i", z.re, z.im)).collect();
            println!("eig(A - Psi C) = [{}]", parts.join(", "));
        }
        Command::Simulate { out } => {
            let artifacts = experiment::run_experiment(&cfg)?;
            let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.run.out_dir));
            let files = output::emit(&artifacts, &dir)?;
            print_detections(&artifacts.detections);
            print_mse(&artifacts.mse);
            println!(
                "wrote {} scenario CSVs, {} estimator CSVs, {} plots to {}",
                files.scenario_csvs.len(),
                files.estimator_csvs.len(),
                files.plots.len(),
                dir.display()
            );
        }
        Command::Detect => {
            let d = experiment::design(&cfg)?;
            print_detections(&experiment::detect_all(&cfg, &d)?);
        }
        Command::Compare => {
            let d = experiment::design(&cfg)?;
            let (table, _) = experiment::compare(&cfg, &d)?;
            print_mse(&table);
        }
        Command::Calibrate { from, to, step } => {
            if !(step > 0.0 && to >= from && from > 0.0) {
                return Err(HarnessError::Validation(format!(
                    "calibration grid {from}..{to} step {step} is empty"
                )));
            }
            let n = ((to - from) / step + 1e-9).floor() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| from + i as f64 * step).collect();
            let report = experiment::calibrate(&cfg, &grid)?;
            println!("delta_bar  t_d...  max|t_d - ref|");
            for row in &report.rows {
                println!("{:.4}  {}  {:.4}", row.delta_bar, fmt_times(&row.detection_times), row.max_deviation);
            }
            println!(
                "best delta_bar = {:.4} (max deviation {:.4})",
                report.best.delta_bar, report.best.max_deviation
            );
        }
    }
    Ok(())
}

fn fmt_times(ts: &[Option<f64>]) -> String {
    ts.iter()
        .map(|t| t.map_or_else(|| "none".to_string(), |t| format!("{t:.4}")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn print_detections(runs: &[experiment::DetectionRun]) {
    for (i, r) in runs.iter().enumerate() {
        let min_margin = r.report.margin_trace.iter().copied().fold(f64::INFINITY, f64::min);
        match r.report.t_d {
            Some(t) => println!(
                "scenario {} x0={:?}: detected at t_d = {t:.4} (t_f = {})",
                i + 1,
                r.x0,
                r.report.t_f_configured.unwrap_or(f64::NAN)
            ),
            None => println!(
                "scenario {} x0={:?}: no detection (minimum margin {min_margin:.3e})",
                i + 1,
                r.x0
            ),
        }
    }
}

fn print_mse(table: &experiment::MseTable) {
    println!("{:<11} {:>8} {:>12} {:>12} {:>12} {:>12} {:>10}", "estimator", "scenario", "mse_x1", "mse_x2", "mse_x3", "aggregate", "std_err");
    for row in &table.rows {
        match &row.cell {
            Ok(c) => println!(
                "{:<11} {:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.2e}",
                row.estimator.name(),
                row.scenario + 1,
                c.per_state[0],
                c.per_state[1],
                c.per_state[2],
                c.aggregate,
                c.std_error
            ),
            Err(e) => println!("{:<11} {:>8} failed: {e}", row.estimator.name(), row.scenario + 1),
        }
    }
    for est in Estimator::ALL {
        match table.total(est) {
            Some(t) => println!("total {:<11} {t:.6e}", est.name()),
            None => println!("total {:<11} unavailable", est.name()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
