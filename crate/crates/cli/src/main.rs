use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use epipool_core::config::{parse_config, preset, CostsJob, ExperimentJob, PRESET_NAMES};
use epipool_core::experiment::{costs_rows, run_configured, run_preset, write_cost_table};

/// Epidemic simulation with adaptive pooled testing.
#[derive(Parser)]
#[command(name = "epipool", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config file.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a named preset experiment.
    Preset {
        /// One of the known preset names.
        #[arg(long, value_parser = PRESET_NAMES)]
        name: String,
        /// Override the preset's trajectory count.
        #[arg(long)]
        trajectories: Option<u64>,
        /// Override the preset's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the static group-size and cost table over a prevalence grid.
    Costs {
        #[arg(long)]
        p_min: f64,
        #[arg(long)]
        p_max: f64,
        #[arg(long)]
        points: usize,
        /// Exponential quarantine cost base (> 1).
        #[arg(long)]
        a: f64,
        /// Weight of the quarantine cost in the combined objective.
        #[arg(long)]
        alpha: f64,
        /// Largest group size to search.
        #[arg(long, default_value_t = 1000)]
        s_max: u32,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config } => {
            let cfg = parse_config(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let output = run_configured(&cfg)?;
            for file in &output.files {
                println!("wrote {}", file.display());
            }
            if let Some(summary) = &output.summary {
                print_summary("", summary);
            }
        }
        Command::Preset { name, trajectories, seed, out } => {
            let mut preset = preset(&name)?;
            for (_, job) in &mut preset.jobs {
                if let ExperimentJob::Batch(cfg) = job {
                    if let Some(n) = trajectories {
                        cfg.trajectories = n;
                    }
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                }
            }
            let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(&name));
            let outputs = run_preset(&preset, &out_dir)?;
            for output in &outputs {
                for file in &output.files {
                    println!("wrote {}", file.display());
                }
                if let Some(summary) = &output.summary {
                    print_summary(&output.label, summary);
                }
            }
        }
        Command::Costs { p_min, p_max, points, a, alpha, s_max, out } => {
            anyhow::ensure!(points >= 2, "need at least two grid points");
            anyhow::ensure!(p_min > 0.0 && p_max > p_min, "need 0 < p_min < p_max");
            let rows = costs_rows(&CostsJob { p_min, p_max, points, a, alpha, s_max })?;
            match out {
                Some(path) => {
                    write_cost_table(&rows, &path)?;
                    println!("wrote {}", path.display());
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    writeln!(
                        stdout,
                        "p,s_test_only,s_combined,test_cost_pp,quarantine_cost_pp,test_cost_pp_combined,quarantine_cost_pp_combined"
                    )?;
                    for r in rows {
                        writeln!(
                            stdout,
                            "{},{},{},{},{},{},{}",
                            r.p,
                            r.s_test_only,
                            r.s_combined,
                            r.test_cost_pp,
                            r.quarantine_cost_pp,
                            r.test_cost_pp_combined,
                            r.quarantine_cost_pp_combined
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

fn print_summary(label: &str, summary: &epipool_core::engine::BatchSummary) {
    let prefix = if label.is_empty() {
        String::new()
    } else {
        format!("[{label}] ")
    };
    println!(
        "{prefix}trajectories: {}  mean final infected fraction: {:.4}  explosion fraction: {:.3}  \
         mean total tests: {:.1}  mean unnecessary quarantine person-days: {:.1}",
        summary.n_traj,
        summary.mean_final_infected_frac,
        summary.explosion_frac,
        summary.mean_total_tests,
        summary.mean_quarantine_person_days,
    );
}
