use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qosrank::allocsim::{synth_matrix, AllocPolicy};
use qosrank::experiment::{evaluate, load_scenario, rank_user, Arm, ExperimentConfig};
use qosrank::matrix::write_matrix;
use qosrank::{Error, Result, UserId};

#[derive(Parser)]
#[command(name = "qosrank", version, about = "Personalized QoS ranking of cloud services")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the predicted ranking (best first) for one user.
    Rank {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        user: usize,
        /// Ranker to use; defaults to the first kind in the config.
        #[arg(long)]
        kind: Option<String>,
        /// Override the neighborhood size.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run the configured experiment and write CSV reports.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Simulate a scenario and write its QoS matrix and VM placement.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's placement policy.
        #[arg(long)]
        policy: Option<String>,
    },
}

fn load_config(path: &Path, k: Option<usize>, trials: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rank {
            config,
            user,
            kind,
            k,
        } => {
            let cfg = load_config(&config, k, None)?;
            let arm = match kind {
                Some(k) => k.parse::<Arm>()?,
                None => cfg.kinds[0],
            };
            let ranking = rank_user(&cfg, arm, UserId(user))?;
            let line = ranking
                .order
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            println!("{line}");
        }
        Command::Evaluate {
            config,
            out,
            k,
            trials,
        } => {
            let cfg = load_config(&config, k, trials)?;
            let ev = evaluate(&cfg)?;
            if ev.skipped > 0 {
                log::warn!("{} active rows were empty and skipped", ev.skipped);
            }
            ev.write_to(&out)?;
            let mut stdout = io::stdout().lock();
            for s in &ev.report.summary {
                let _ = writeln!(
                    stdout,
                    "density={} kind={} mean_accuracy={:.4} mean_tau={:.4} n={}",
                    s.density, s.kind, s.mean_accuracy, s.mean_tau, s.trials
                );
            }
        }
        Command::Simulate {
            scenario,
            out,
            policy,
        } => {
            let scenario = load_scenario(&scenario)?;
            let policy = match policy {
                Some(p) => serde_json::from_value::<AllocPolicy>(serde_json::Value::String(p.clone()))
                    .map_err(|_| Error::Config(format!("unknown policy `{p}`")))?,
                None => scenario.policy,
            };
            let syn = synth_matrix(&scenario, policy)?;
            if !syn.plan.unplaced.is_empty() {
                eprintln!("warning: unplaceable VMs: {:?}", syn.plan.unplaced);
            }
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_matrix(&syn.matrix, create(&out.join("qos_matrix.csv"))?, syn.orientation)?;
            syn.plan.write_csv(create(&out.join("allocation.csv"))?)?;

            let mut wtr = csv::Writer::from_writer(create(&out.join("base_qos.csv"))?);
            wtr.write_record(["service_id", "response_time", "throughput"])?;
            for q in &syn.base {
                wtr.write_record([
                    q.service.to_string(),
                    q.response_time.to_string(),
                    q.throughput.to_string(),
                ])?;
            }
            wtr.flush().map_err(|e| Error::Io {
                path: out.join("base_qos.csv"),
                source: e,
            })?;
            println!(
                "policy={} placed={}/{} mean_response_time={}",
                policy.as_str(),
                syn.plan.placed_count(),
                syn.plan.vms.len(),
                syn.mean_response_time()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
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
