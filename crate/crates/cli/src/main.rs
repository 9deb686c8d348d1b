use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use oxytaxis_cli::config::{parse_list, ExperimentConfig};
use oxytaxis_cli::{commands, CliError};
use oxytaxis_core::cost::ControlKind;

#[derive(Parser)]
#[command(name = "oxytaxis", version, about = "Tumor growth under oxytaxis: simulation and optimal therapy")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args, Clone)]
struct Common {
    /// One or more config files.
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Output directory; with several configs each gets a subdirectory
    /// named after its file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot every this many steps.
    #[arg(long)]
    stride: Option<usize>,
    /// Seed for random directions in gradient checks.
    #[arg(long)]
    seed: Option<u64>,
    /// Configs run concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Control {
    C,
    S,
}

#[derive(Subcommand)]
enum Verb {
    /// Forward solve with zero controls.
    RunUncontrolled(Common),
    /// Optimize both controls and compare with the uncontrolled run.
    RunControl(Common),
    /// Optimize, then shift one control and record the cost.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        control: Control,
        /// Comma-separated perturbations, e.g. `-0.1,0,0.1`.
        #[arg(long, allow_hyphen_values = true)]
        perts: String,
    },
    /// Compare the adjoint gradient with finite differences and the
    /// sensitivity pairing.
    CheckGradient(Common),
    /// Manufactured-solution convergence study of the oxygen equation.
    Convergence(Common),
}

fn load(common: &Common) -> Result<Vec<ExperimentConfig>, CliError> {
    let mut cfgs = Vec::new();
    for path in &common.configs {
        let mut cfg = ExperimentConfig::from_file(path)?;
        if let Some(out) = &common.out {
            cfg.out = if common.configs.len() == 1 {
                out.clone()
            } else {
                let stem = path.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
                out.join(stem)
            };
        }
        if let Some(s) = common.stride {
            if s == 0 {
                return Err(CliError::Config("--stride must be at least 1".into()));
            }
            cfg.stride = s;
        }
        if let Some(seed) = common.seed {
            cfg.seed = seed;
        }
        cfgs.push(cfg);
    }
    let distinct: BTreeSet<_> = cfgs.iter().map(|c| c.out.clone()).collect();
    if distinct.len() != cfgs.len() {
        return Err(CliError::Config("configs in one batch must write to distinct output directories".into()));
    }
    if common.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    Ok(cfgs)
}

fn run_batch(
    cfgs: &[ExperimentConfig],
    jobs: usize,
    task: &(dyn Fn(&ExperimentConfig) -> Result<String, CliError> + Sync),
) -> Vec<Result<String, CliError>> {
    let results: Vec<Mutex<Option<Result<String, CliError>>>> = cfgs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(cfgs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cfgs.len() {
                    break;
                }
                let r = task(&cfgs[i]);
                *results[i].lock().expect("no panics while holding the lock") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("lock not poisoned").expect("every config ran"))
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, task): (&Common, Box<dyn Fn(&ExperimentConfig) -> Result<String, CliError> + Sync>) = match &cli.verb
    {
        Verb::RunUncontrolled(c) => (c, Box::new(commands::run_uncontrolled)),
        Verb::RunControl(c) => (c, Box::new(commands::run_control)),
        Verb::CheckGradient(c) => (c, Box::new(commands::check_gradient)),
        Verb::Convergence(c) => (c, Box::new(commands::convergence)),
        Verb::Probe { common, control, perts } => {
            let perts: Vec<f64> = match parse_list(perts) {
                Ok(p) if !p.is_empty() => p,
                Ok(_) => return fail(&CliError::Config("--perts is empty".into())),
                Err(e) => return fail(&CliError::Config(format!("--perts: {e}"))),
            };
            let kind = match control {
                Control::C => ControlKind::Cytotoxic,
                Control::S => ControlKind::Antiangiogenic,
            };
            (common, Box::new(move |cfg: &ExperimentConfig| commands::probe(cfg, kind, &perts)))
        }
    };
    let cfgs = match load(common) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let results = run_batch(&cfgs, common.jobs, task.as_ref());
    let mut worst: Option<&CliError> = None;
    for (cfg, r) in cfgs.iter().zip(&results) {
        match r {
            Ok(msg) => println!("{}: {msg}", cfg.out.display()),
            Err(e) => {
                eprintln!("{}: {e}", cfg.out.display());
                if worst.is_none() {
                    worst = Some(e);
                }
            }
        }
    }
    match worst {
        None => ExitCode::SUCCESS,
        Some(e) => ExitCode::from(e.exit_code()),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{e}");
    ExitCode::from(e.exit_code())
}
