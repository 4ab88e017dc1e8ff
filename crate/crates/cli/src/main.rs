use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dqnn_cli::experiment::{param_report, Summary};
use dqnn_cli::spec::{read_architecture, GradientCheckSpec, ParamReportSpec};
use dqnn_cli::ExperimentSpec;
use dqnn_core::cost::CostKind;

#[derive(Parser)]
#[command(name = "dqnn", version, about = "Train and benchmark dissipative quantum neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON spec file
    Run {
        spec: PathBuf,
        /// output directory
        #[arg(long, env = "DQNN_OUT", default_value = "dqnn-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Compare analytic gradients with central finite differences
    GradientCheck {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// comma-separated cost names; defaults to all costs with analytic gradients
        #[arg(long, value_delimiter = ',')]
        costs: Vec<CostKind>,
        /// architecture file; defaults to the minimal extended qubit network
        #[arg(long)]
        arch: Option<PathBuf>,
        /// also write summary and manifest here
        #[arg(long, env = "DQNN_OUT")]
        out: Option<PathBuf>,
    },
    /// Print the active parameter count of every perceptron
    ParamReport {
        arch_file: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn print_summary(summary: &Summary) {
    match summary {
        Summary::GradientCheck(r) => {
            for c in &r.results {
                println!(
                    "{:<6} {}  checked {:>5}  failures {:>3}  max rel error {:.3e}  max abs error {:.3e}",
                    c.cost.to_string(),
                    if c.pass { "PASS" } else { "FAIL" },
                    c.checked,
                    c.failures,
                    c.max_rel_error,
                    c.max_abs_error
                );
            }
        }
        Summary::LearnRandom(s) => {
            for g in &s.groups {
                let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
                println!(
                    "{:<6} runs {:>3}  final cost {:.4e}  final diamond mean {}  median {}",
                    g.cost.to_string(),
                    g.series.runs,
                    g.series.mean_cost.last().copied().unwrap_or(f64::NAN),
                    show(g.series.mean_final_diamond),
                    show(g.series.median_final_diamond)
                );
            }
        }
        Summary::WernerSweep(s) => {
            for a in &s.alphas {
                let d: Vec<String> = a.diamond.iter().map(|(i, v)| format!("{i}:{v:.3e}")).collect();
                println!(
                    "alpha {:>5}  final cost {:.4e}  steepest descent at {:>4}  diamond [{}]",
                    a.alpha,
                    a.final_cost,
                    a.steepest_descent,
                    d.join(" ")
                );
            }
        }
        Summary::ParamReport(r) => print!("{}", r.table()),
    }
}

fn gradient_failed(summary: &Summary) -> bool {
    matches!(summary, Summary::GradientCheck(r) if !r.passed())
}

fn main_inner() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            spec,
            out,
            seed,
            workers,
            iterations,
        } => {
            let mut spec = ExperimentSpec::from_json(&read(&spec)?).with_context(|| format!("in {}", spec.display()))?;
            if let Some(s) = seed {
                spec.set_seed(s);
            }
            if let Some(w) = workers {
                spec.set_workers(w);
            }
            if let Some(n) = iterations {
                spec.set_iterations(n);
            }
            spec.validate()?;
            let outcome = dqnn_cli::run(&spec, Some(&out))?;
            print_summary(&outcome.summary);
            eprintln!("wrote {}", out.display());
            Ok(if gradient_failed(&outcome.summary) { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::GradientCheck {
            trials,
            tolerance,
            seed,
            costs,
            arch,
            out,
        } => {
            let mut check: GradientCheckSpec = serde_json::from_str(r#"{}"#)?;
            check.trials = trials;
            check.tolerance = tolerance;
            check.seed = seed;
            if !costs.is_empty() {
                check.costs = costs;
            }
            if let Some(path) = arch {
                check.architecture = Some(read_architecture(&read(&path)?)?);
            }
            let spec = ExperimentSpec::GradientCheck(check);
            let outcome = dqnn_cli::run(&spec, out.as_deref())?;
            print_summary(&outcome.summary);
            Ok(if gradient_failed(&outcome.summary) { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::ParamReport { arch_file, json } => {
            let architecture = read_architecture(&read(&arch_file)?)?;
            let report = param_report(&ParamReportSpec { architecture })?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.table());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
