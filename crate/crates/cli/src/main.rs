use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wpc_core::fbl::{required_snr, FblTarget};
use wpc_core::htt::{avg_power_htt, error_htt_closed, error_htt_exact, power_transfer_failure};
use wpc_core::sysmodel::{derive_link, PhaseConfig, SystemParams};
use wpc_cli::config::load_config;
use wpc_cli::runner;

#[derive(Parser)]
#[command(name = "wpc", version, about = "Wireless-powered finite-blocklength experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run(RunArgs),
    /// Solve for the SNR that meets a block-error target.
    SolveSnr {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        gamma_delta: f64,
    },
    /// Evaluate the harvest-then-transmit error probability and power.
    Htt(HttArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(0..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Monte Carlo rounds per grid point.
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Use the long Monte Carlo budget.
    #[arg(long)]
    expensive: bool,
}

#[derive(Args)]
struct HttArgs {
    #[arg(long, conflicts_with = "closed")]
    exact: bool,
    #[arg(long)]
    closed: bool,
    /// System parameters come from this config; the baseline is used otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    v: Option<u32>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long)]
    k: Option<u32>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::SolveSnr { n, k, eps, gamma_delta } => solve_snr(n, k, eps, gamma_delta).map(|_| 0),
        Command::Htt(args) => htt(args).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<wpc_cli::CliError>()
                .map(|c| c.exit_code())
                .unwrap_or(1);
            ExitCode::from(code as u8)
        }
    }
}

fn run(args: RunArgs) -> Result<i32> {
    let mut spec = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(rounds) = args.rounds {
        spec.rounds = rounds;
        spec.expensive_rounds = rounds;
    }
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    spec.expensive |= args.expensive;
    let report = runner::run(&spec, args.threads)?;
    for f in &report.files {
        println!("wrote {}", f.display());
    }
    println!("manifest {} ({:.2} s)", report.manifest.display(), report.wall_clock_seconds);
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
        if !report.files.is_empty() {
            eprintln!("partial results were written");
        }
    }
    Ok(report.exit_code())
}

fn solve_snr(n: u32, k: u32, eps: f64, gamma_delta: f64) -> Result<()> {
    let target = FblTarget::new(n, k, eps, gamma_delta)?;
    let sol = required_snr(&target).context("required SNR did not converge")?;
    println!("gamma_hat = {:?}", sol.gamma_hat);
    println!("m_factor = {:?}", sol.m_factor);
    println!("iterations = {}", sol.iterations);
    Ok(())
}

fn htt(args: HttArgs) -> Result<()> {
    if !args.exact && !args.closed {
        bail!("pick one of --exact or --closed");
    }
    let (params, mut v, mut n, mut k) = match &args.config {
        Some(path) => {
            let spec = load_config(path)?;
            (spec.params, spec.v, spec.n, spec.k)
        }
        None => (SystemParams::baseline(), 800, 200, 312),
    };
    v = args.v.unwrap_or(v);
    n = args.n.unwrap_or(n);
    k = args.k.unwrap_or(k);
    let phase = PhaseConfig::new(v, n, k)?;
    let (eps, eps1, eps2) = if args.exact {
        let e = error_htt_exact(&params, &phase)?;
        (e.eps, e.eps1, e.eps2)
    } else {
        let c = error_htt_closed(&params, &phase)?;
        let link = derive_link(&params, &phase);
        let eps1 = power_transfer_failure(params.m_shape, link.varpi_star)?;
        (eps1 + c.eps2, eps1, c.eps2)
    };
    println!("eps = {eps:?}");
    println!("eps1 = {eps1:?}");
    println!("eps2 = {eps2:?}");
    println!("avg_power_w = {:?}", avg_power_htt(&params, &phase)?);
    Ok(())
}
