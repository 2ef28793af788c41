//! Run experiment jobs and write their outputs: per-day CSV time series,
//! batch summary JSON, the static cost table, and the dynamic-versus-static
//! plan comparison.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{CostsJob, ExperimentConfig, ExperimentJob, PlanJob, Preset};
use crate::dorfman::{cost_table, log_spaced_grid, CostParams, CostTableRow};
use crate::engine::{run_batch, BatchSummary, TrajectoryMetrics};
use crate::horizon::{
    default_s_max, optimize_backward, optimize_backward_real, static_plan, stage_cost,
    HorizonPlan, RealHorizonPlan,
};
use crate::Result;

/// Pinned per-day CSV header.
pub const DAY_CSV_COLUMNS: [&str; 9] = [
    "day",
    "tests_registered",
    "cum_infected",
    "active_infected",
    "isolated",
    "quarantined_uninfected",
    "pipeline_size",
    "undetected_gt2",
    "quarantine_cost_realized",
];

#[derive(Debug)]
pub struct ExperimentOutput {
    pub label: String,
    pub files: Vec<PathBuf>,
    pub summary: Option<BatchSummary>,
}

/// Run every job of a preset under `out_dir`; multi-job presets get one
/// subdirectory per label.
pub fn run_preset(preset: &Preset, out_dir: &Path) -> Result<Vec<ExperimentOutput>> {
    preset
        .jobs
        .iter()
        .map(|(label, job)| {
            let dir = if label.is_empty() {
                out_dir.to_path_buf()
            } else {
                out_dir.join(label)
            };
            let mut output = run_job(job, &dir)?;
            output.label = label.to_string();
            Ok(output)
        })
        .collect()
}

/// Run one job, writing its outputs under `out_dir`.
pub fn run_job(job: &ExperimentJob, out_dir: &Path) -> Result<ExperimentOutput> {
    fs::create_dir_all(out_dir)?;
    match job {
        ExperimentJob::Batch(config) => run_batch_job(config, out_dir),
        ExperimentJob::Costs(costs) => {
            let file = out_dir.join("costs.csv");
            write_cost_table(&costs_rows(costs)?, &file)?;
            Ok(ExperimentOutput { label: String::new(), files: vec![file], summary: None })
        }
        ExperimentJob::Plan(plan) => run_plan_job(plan, out_dir),
    }
}

/// Convenience for `run --config`: runs the batch into the config's own
/// output directory.
pub fn run_configured(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    fs::create_dir_all(&config.out_dir)?;
    run_batch_job(config, &config.out_dir)
}

fn run_batch_job(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let (model, protocol) = config.validated()?;
    let (summary, metrics) = run_batch(
        model,
        protocol,
        config.horizon,
        config.trajectories,
        config.seed,
        config.explosion_threshold,
    )?;
    let mut files = Vec::new();

    let summary_path = out_dir.join("summary.json");
    write_json(&summary, &summary_path)?;
    files.push(summary_path);

    if config.per_trajectory_csv {
        let traj_dir = out_dir.join("trajectories");
        fs::create_dir_all(&traj_dir)?;
        for m in &metrics {
            let path = traj_dir.join(format!("traj_{:05}.csv", m.seed - config.seed));
            write_trajectory_csv(m, &path)?;
            files.push(path);
        }
    } else {
        let path = out_dir.join("aggregated.csv");
        write_aggregated_csv(&metrics, &path)?;
        files.push(path);
    }
    Ok(ExperimentOutput { label: String::new(), files, summary: Some(summary) })
}

pub fn costs_rows(job: &CostsJob) -> Result<Vec<CostTableRow>> {
    let params = CostParams::new(job.a, job.alpha)?;
    let grid = log_spaced_grid(job.p_min, job.p_max, job.points);
    Ok(cost_table(&grid, params, job.s_max))
}

/// Per-day plan comparison plus totals, for the i.i.d. horizon experiment.
#[derive(Debug, Serialize)]
pub struct PlanComparison {
    pub n: usize,
    pub p: f64,
    pub horizon: u32,
    pub s_max: u32,
    pub static_plan: HorizonPlan,
    pub horizon_plan: HorizonPlan,
    pub real_valued_plan: RealHorizonPlan,
}

pub fn plan_comparison(job: &PlanJob) -> PlanComparison {
    let s_max = default_s_max(job.p, job.n as u32);
    let n1 = job.n as f64;
    PlanComparison {
        n: job.n,
        p: job.p,
        horizon: job.horizon,
        s_max,
        static_plan: static_plan(n1, job.p, job.horizon, s_max),
        horizon_plan: optimize_backward(n1, job.p, job.horizon, s_max),
        real_valued_plan: optimize_backward_real(n1, job.p, job.horizon, s_max),
    }
}

fn run_plan_job(job: &PlanJob, out_dir: &Path) -> Result<ExperimentOutput> {
    let comparison = plan_comparison(job);
    let plan_path = out_dir.join("plan.csv");
    write_plan_csv(&comparison, &plan_path)?;
    let summary_path = out_dir.join("plan_summary.json");
    write_json(&comparison, &summary_path)?;
    Ok(ExperimentOutput {
        label: String::new(),
        files: vec![plan_path, summary_path],
        summary: None,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn day_row(record: &crate::engine::DayRecord) -> [String; 9] {
    [
        record.day.to_string(),
        record.tests_registered.to_string(),
        record.cum_infected.to_string(),
        record.active_infected.to_string(),
        record.isolated.to_string(),
        record.quarantined_uninfected.to_string(),
        record.pipeline_size.to_string(),
        record.undetected_gt2().to_string(),
        format!("{}", record.quarantine_cost_realized),
    ]
}

pub fn write_trajectory_csv(metrics: &TrajectoryMetrics, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(DAY_CSV_COLUMNS)?;
    for record in &metrics.days {
        writer.write_record(day_row(record))?;
    }
    writer.flush()?;
    Ok(())
}

/// Day-wise means across trajectories, same columns as the per-trajectory
/// files.
pub fn write_aggregated_csv(metrics: &[TrajectoryMetrics], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(DAY_CSV_COLUMNS)?;
    let days = metrics.iter().map(|m| m.days.len()).max().unwrap_or(0);
    let n = metrics.len() as f64;
    for d in 0..days {
        let mut sums = [0.0f64; 8];
        for m in metrics {
            let r = &m.days[d];
            sums[0] += r.tests_registered as f64;
            sums[1] += r.cum_infected as f64;
            sums[2] += r.active_infected as f64;
            sums[3] += r.isolated as f64;
            sums[4] += r.quarantined_uninfected as f64;
            sums[5] += r.pipeline_size as f64;
            sums[6] += r.undetected_gt2() as f64;
            sums[7] += r.quarantine_cost_realized;
        }
        let mut row = vec![d.to_string()];
        row.extend(sums.iter().map(|s| format!("{}", s / n)));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_cost_table(rows: &[CostTableRow], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "p",
        "s_test_only",
        "s_combined",
        "test_cost_pp",
        "quarantine_cost_pp",
        "test_cost_pp_combined",
        "quarantine_cost_pp_combined",
    ])?;
    for row in rows {
        writer.write_record([
            format!("{}", row.p),
            row.s_test_only.to_string(),
            row.s_combined.to_string(),
            format!("{}", row.test_cost_pp),
            format!("{}", row.quarantine_cost_pp),
            format!("{}", row.test_cost_pp_combined),
            format!("{}", row.quarantine_cost_pp_combined),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_plan_csv(comparison: &PlanComparison, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record([
        "day",
        "s_static",
        "s_horizon",
        "expected_pipeline_static",
        "expected_pipeline_horizon",
        "expected_tests_static",
        "expected_tests_horizon",
    ])?;
    let t = comparison.horizon as usize;
    for d in 0..t {
        let s_static = comparison.static_plan.group_sizes[d];
        let s_horizon = comparison.horizon_plan.group_sizes[d];
        let n_static = comparison.static_plan.expected_pipeline[d];
        let n_horizon = comparison.horizon_plan.expected_pipeline[d];
        writer.write_record([
            (d + 1).to_string(),
            s_static.to_string(),
            s_horizon.to_string(),
            format!("{n_static}"),
            format!("{n_horizon}"),
            format!("{}", n_static * stage_cost(s_static, comparison.p)),
            format!("{}", n_horizon * stage_cost(s_horizon, comparison.p)),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
