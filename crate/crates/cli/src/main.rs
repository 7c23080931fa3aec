use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selective_mpc::config::RunConfig;
use selective_mpc::harness::{self, error_exit_code, CommandOutput};
use selective_mpc::Error;

/// Selective secret-sharing MPC simulator for private key-value statistics.
#[derive(Parser)]
#[command(name = "selmpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Leakage, collusion, dummy and accuracy figures for a configuration.
    Plan(Common),
    /// Run the full protocol over a dataset and report noisy statistics.
    Simulate(Common),
    /// Exact statistics of the input, for comparison.
    Plaintext(Common),
    /// Numerically certify the leakage bounds.
    VerifyLeakage(Common),
    /// Expected dummy counts against the one-sided baseline.
    CompareDummies(Common),
    /// Cost sweep over node counts, key counts and validation batch sizes.
    Bench(Common),
}

#[derive(Args, Default)]
struct Common {
    /// INI configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of computation nodes.
    #[arg(long)]
    nodes: Option<usize>,
    /// Nodes each pair is shared to.
    #[arg(long)]
    subset: Option<usize>,
    /// Dummy rate, or "optimal".
    #[arg(long)]
    rate: Option<String>,
    #[arg(long = "eps-f")]
    eps_f: Option<f64>,
    #[arg(long = "eps-m")]
    eps_m: Option<f64>,
    /// local, remote or distant.
    #[arg(long)]
    preset: Option<String>,
    /// Size of the key domain.
    #[arg(long)]
    keys: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    /// Maximum pairs per client.
    #[arg(long = "max-keys")]
    max_keys: Option<usize>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// frequency, mean or both.
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long = "no-noise")]
    no_noise: bool,
    /// Check that every submitted flag is 0 or 1.
    #[arg(long)]
    validate: bool,
    /// Evaluate keys independently instead of batching them.
    #[arg(long)]
    parallel: bool,
    /// Comma-separated epsilon grid.
    #[arg(long = "eps-grid")]
    eps_grid: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    /// Generic override, e.g. `--set protocol.half_range=5`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, Error> {
        let mut o: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        put("run.seed", self.seed.map(|v| v.to_string()));
        put("protocol.nodes", self.nodes.map(|v| v.to_string()));
        put("protocol.subset", self.subset.map(|v| v.to_string()));
        put("protocol.rate", self.rate.clone());
        put("protocol.eps_f", self.eps_f.map(|v| v.to_string()));
        put("protocol.eps_m", self.eps_m.map(|v| v.to_string()));
        put("run.preset", self.preset.clone());
        put("protocol.keys", self.keys.map(|v| v.to_string()));
        put("protocol.clients", self.clients.map(|v| v.to_string()));
        put("protocol.max_keys", self.max_keys.map(|v| v.to_string()));
        put("data.dataset", self.dataset.as_ref().map(|p| p.display().to_string()));
        put("run.statistic", self.statistic.clone());
        put("run.noise", self.no_noise.then(|| "false".to_string()));
        put("run.validate", self.validate.then(|| "true".to_string()));
        put("run.execution", self.parallel.then(|| "parallel".to_string()));
        put("compare.eps_grid", self.eps_grid.clone());
        put("compare.delta", self.delta.clone());
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects SECTION.KEY=VALUE, got {s:?}")))?;
            o.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(o)
    }

    fn load(&self) -> Result<RunConfig, Error> {
        let text = match &self.config {
            Some(p) => Some(
                std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            ),
            None => None,
        };
        let mut cfg = RunConfig::load(text.as_deref(), &self.overrides()?)?;
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        Ok(cfg)
    }
}

fn emit(out: &CommandOutput, dir: Option<&Path>) -> Result<(), Error> {
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            for (name, body) in &out.files {
                let path = dir.join(name);
                std::fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            }
            print!("{}", out.stdout);
        }
        None => {
            print!("{}", out.stdout);
            for (name, body) in &out.files {
                println!("\n== {name} ==");
                print!("{body}");
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    let (common, f): (&Common, fn(&RunConfig) -> selective_mpc::Result<CommandOutput>) = match &cli.command {
        Command::Plan(c) => (c, harness::cmd_plan),
        Command::Simulate(c) => (c, harness::cmd_simulate),
        Command::Plaintext(c) => (c, harness::cmd_plaintext),
        Command::VerifyLeakage(c) => (c, harness::cmd_verify_leakage),
        Command::CompareDummies(c) => (c, harness::cmd_compare_dummies),
        Command::Bench(c) => (c, harness::cmd_bench),
    };
    let cfg = common.load()?;
    let out = f(&cfg)?;
    emit(&out, cfg.out.as_deref())?;
    Ok(out.outcome.exit_code())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("selmpc: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
