use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cuspflow::analysis::{Observable, Window};
use cuspflow_cli::fit::{fit_file, parse_window};
use cuspflow_cli::identities::identity_suite;
use cuspflow_cli::{exit, parse_config, simulate, write_outputs, CliError, OUT_ENV};

#[derive(Parser)]
#[command(
    name = "cuspflow",
    version,
    about = "Ricci flow of truncated hyperbolic cusps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a TOML config and write CSV results.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Output directory; overrides `output_dir` and $CUSPFLOW_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check closed-form curvature and barrier identities.
    VerifyMetrics {
        #[arg(long, default_value_t = 4096)]
        resolution: usize,
    },
    /// Fit a decay law to a diagnostics CSV.
    Fit {
        #[arg(long)]
        series: PathBuf,
        /// sup_u_half, dist_half or sup_abs_K.
        #[arg(long)]
        observable: String,
        /// `t_lo,t_hi`; automatic when omitted.
        #[arg(long)]
        window: Option<String>,
    },
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Simulate { config, jobs, out } => {
            let cfg = parse_config(&config)?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("cuspflow-out"));
            let outcome = simulate(&cfg, jobs)?;
            write_outputs(&outcome, &dir)?;

            for run in &outcome.series {
                let last = run.diagnostics().last().expect("initial snapshot");
                println!(
                    "{:<8} snapshots {:>4}  steps {:>6}  sup u(r≤½) {:.4} → {:.4}",
                    run.run_id,
                    run.snapshots().len(),
                    run.steps().len(),
                    run.diagnostics()[0].sup_u_half,
                    last.sup_u_half
                );
            }
            if let Some(b) = outcome.beta_hat {
                println!("fitted β̂ = {b:.6}");
            }
            for f in &outcome.fits {
                println!(
                    "fit {:<8} {:<12} slope {:>9.4}  r² {:.3}  window [{:.3e}, {:.3e}] (automatic)",
                    f.run_id, f.observable, f.slope, f.r_squared, f.t_lo, f.t_hi
                );
            }
            for (id, obs, why) in &outcome.skipped_fits {
                eprintln!("fit {id} {obs} skipped: {why}");
            }
            println!("wrote {}", dir.display());

            let failures: Vec<_> = outcome.failures().collect();
            if failures.is_empty() {
                return Ok(exit::SUCCESS);
            }
            // machine-readable summary
            eprintln!("violation,run_id,check,t,worst_r,margin");
            for v in failures {
                eprintln!(
                    "violation,{},{},{},{},{}",
                    v.run_id, v.check, v.t, v.worst_r, v.margin
                );
            }
            Ok(exit::CHECK_FAILURE)
        }
        Command::VerifyMetrics { resolution } => {
            let rows = identity_suite(resolution)?;
            println!(
                "{:<28} {:<26} {:>14}  result",
                "identity", "claim", "measured"
            );
            for r in &rows {
                println!("{r}");
            }
            Ok(if rows.iter().all(|r| r.pass) {
                exit::SUCCESS
            } else {
                exit::CHECK_FAILURE
            })
        }
        Command::Fit {
            series,
            observable,
            window,
        } => {
            let observable: Observable = observable
                .parse()
                .map_err(|e| CliError::Config(format!("{e}")))?;
            let window = match window {
                Some(w) => parse_window(&w)?,
                None => Window::Auto,
            };
            let rows = fit_file(&series, observable, window)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
