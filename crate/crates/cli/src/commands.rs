use std::fs::File;
use std::io::BufWriter;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use msmac::analytic::{AnalyticOptions, AnalyticReport};
use msmac::io::{
    analytic_csv, analytic_rows_csv, comparison_csv, fmt_num, grid, load_profile, parse_axis, sim_csv, slot_csv,
    Override,
};
use msmac::metrics::{compare, ComparisonReport, Estimate, SimReport, ToleranceProfile};
use msmac::sim::{run_seeded, RunOptions};
use msmac::Scenario;
use rayon::prelude::*;
use toml_value::display as axis_value;

use crate::pipeline::{self, table, CliError, Grid, GridPoint, Loaded, Manifest, Output, BATCHES};
use crate::{Command, RunArgs};

/// Runs one subcommand. `Ok(false)` means the run completed but failed its
/// checks.
pub fn dispatch(cmd: Command) -> Result<bool, CliError> {
    match cmd {
        Command::Validate(a) => {
            let l = pipeline::load(&a.scenario, &a.overrides, a.lenient)?;
            pipeline::report_warnings(&l);
            let s = l.scenario();
            println!(
                "ok: scenario {} with {} device(s), super-cycle {} slots of {} us, max slot load {}",
                s.short_id(),
                s.devices.len(),
                s.params.super_cycle(),
                fmt_num(s.params.slot_len().as_micros()),
                fmt_num(l.parsed.report.max_load()),
            );
            Ok(true)
        }
        Command::Analyze { scenario, model, out } => {
            let l = pipeline::load(&scenario.scenario, &scenario.overrides, scenario.lenient)?;
            pipeline::report_warnings(&l);
            let opts = model.options();
            let r = pipeline::analyze(l.scenario(), &opts)?;
            for w in &r.warnings {
                log::warn!("{w}");
            }
            print!("{}", render_analytic(&r));
            let mut o = Output::create(&out.out)?;
            o.inputs_for(l.scenario(), None)?;
            o.result("analytic.csv", &analytic_csv(&r))?;
            o.result("slots.csv", &slot_csv(&r))?;
            o.json("analytic.json", &r)?;
            o.finish(Manifest { analytic_options: Some(opts), ..Manifest::new("analyze", &l) })?;
            Ok(true)
        }
        Command::Simulate { scenario, run, out, export_log } => {
            let l = load_with_run(&scenario, &run)?;
            let s = l.scenario();
            let r = pipeline::simulate(s, run.confidence)?;
            print!("{}", render_sim(&r));
            let mut o = Output::create(&out.out)?;
            o.inputs_for(s, None)?;
            o.result("sim.csv", &sim_csv(&r))?;
            o.json("sim.json", &r)?;
            if let Some(path) = export_log {
                write_log(s, &path)?;
            }
            o.finish(Manifest { confidence: Some(run.confidence), ..Manifest::new("simulate", &l) })?;
            Ok(true)
        }
        Command::Compare { scenario, model, run, out, profile } => {
            let l = load_with_run(&scenario, &run)?;
            let profile = match &profile {
                Some(p) => load_profile(p)?,
                None => ToleranceProfile::default(),
            };
            let opts = model.options();
            let s = l.scenario();
            let (a, sim, c) = compare_one(s, &opts, &run, &profile)?;
            for w in &a.warnings {
                log::warn!("{w}");
            }
            print!("{}", c.render_table());
            println!("collision slots: {}", sim.collision_slots);
            let mut o = Output::create(&out.out)?;
            o.inputs_for(s, Some(&profile))?;
            o.result("analytic.csv", &analytic_csv(&a))?;
            o.result("sim.csv", &sim_csv(&sim))?;
            o.result("comparison.csv", &comparison_csv(&[(Vec::new(), &c)]))?;
            o.json("comparison.json", &c)?;
            o.finish(Manifest {
                analytic_options: Some(opts),
                confidence: Some(run.confidence),
                ..Manifest::new("compare", &l)
            })?;
            Ok(c.pass)
        }
        Command::Sweep { scenario, model, run, out, profile, axes, analytic_only } => {
            let l = load_with_run(&scenario, &run)?;
            let profile = match &profile {
                Some(p) => load_profile(p)?,
                None => ToleranceProfile::default(),
            };
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<Result<Vec<_>, _>>()?;
            let points = grid(&axes);
            let opts = model.options();
            let sweep =
                Sweep { base: &l, lenient: scenario.lenient, opts: &opts, run: &run, profile: &profile, analytic_only };
            let done = AtomicUsize::new(0);
            let outcomes: Vec<PointOutcome> = points
                .par_iter()
                .map(|p| {
                    let r = sweep.point(p);
                    let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                    log::info!("sweep point {n}/{} done", points.len());
                    r
                })
                .collect();

            let keys: Vec<String> = axes.iter().map(|a| a.key.clone()).collect();
            let coords = |i: usize, p: &[Override]| -> Vec<(String, String)> {
                std::iter::once(("point".to_string(), i.to_string()))
                    .chain(keys.iter().cloned().zip(p.iter().map(|o| axis_value(&o.value))))
                    .collect()
            };
            let mut manifest_points = Vec::new();
            let mut analytic_rows = Vec::new();
            let mut comparison_rows = Vec::new();
            for (i, (p, outcome)) in points.iter().zip(&outcomes).enumerate() {
                let overrides = p.iter().map(|o| o.raw.clone()).collect();
                let (status, hash, reason) = match outcome {
                    PointOutcome::Skipped(reason) => {
                        log::warn!("sweep point {i} skipped: {reason}");
                        ("skipped", None, Some(reason.clone()))
                    }
                    PointOutcome::Analytic(a) => {
                        analytic_rows.push((coords(i, p), a));
                        ("done", Some(a.scenario_id.clone()), None)
                    }
                    PointOutcome::Compared(c) => {
                        comparison_rows.push((coords(i, p), c));
                        (if c.pass { "pass" } else { "fail" }, Some(c.scenario_id.clone()), None)
                    }
                };
                manifest_points.push(GridPoint { index: i, overrides, status, scenario_hash: hash, reason });
            }
            let completed = analytic_rows.len() + comparison_rows.len();
            let failed = manifest_points.iter().filter(|p| p.status == "fail").count();
            println!(
                "{} point(s): {completed} completed, {} skipped, {failed} failed",
                points.len(),
                points.len() - completed
            );

            let mut o = Output::create(&out.out)?;
            o.inputs_for(l.scenario(), (!analytic_only).then_some(&profile))?;
            if analytic_only {
                let rows: Vec<(Vec<(String, String)>, &AnalyticReport)> =
                    analytic_rows.iter().map(|(c, a)| (c.clone(), *a)).collect();
                o.result("sweep_analytic.csv", &analytic_rows_csv(&rows))?;
            } else {
                let rows: Vec<(Vec<(String, String)>, &ComparisonReport)> =
                    comparison_rows.iter().map(|(c, r)| (c.clone(), *r)).collect();
                o.result("sweep.csv", &comparison_csv(&rows))?;
            }
            o.finish(Manifest {
                analytic_options: Some(opts),
                confidence: (!analytic_only).then_some(run.confidence),
                grid: Some(Grid { axes: axes_text(&axes), points: manifest_points }),
                ..Manifest::new("sweep", &l)
            })?;
            Ok(completed > 0 && failed == 0)
        }
    }
}

fn axes_text(axes: &[msmac::io::Axis]) -> Vec<String> {
    axes.iter()
        .map(|a| format!("{}=[{}]", a.key, a.values.iter().map(axis_value).collect::<Vec<_>>().join(", ")))
        .collect()
}

fn load_with_run(scenario: &crate::ScenarioArgs, run: &RunArgs) -> Result<Loaded, CliError> {
    let mut overrides = scenario.overrides.clone();
    overrides.extend(run.overrides());
    let l = pipeline::load(&scenario.scenario, &overrides, scenario.lenient)?;
    pipeline::report_warnings(&l);
    Ok(l)
}

fn compare_one(
    s: &Scenario,
    opts: &AnalyticOptions,
    run: &RunArgs,
    profile: &ToleranceProfile,
) -> Result<(AnalyticReport, SimReport, ComparisonReport), CliError> {
    let a = pipeline::analyze(s, opts)?;
    let sim = pipeline::simulate(s, run.confidence)?;
    let c = compare(&a, &sim, profile).map_err(|e| CliError::Internal(e.into()))?;
    Ok((a, sim, c))
}

struct Sweep<'a> {
    base: &'a Loaded,
    lenient: bool,
    opts: &'a AnalyticOptions,
    run: &'a RunArgs,
    profile: &'a ToleranceProfile,
    analytic_only: bool,
}

enum PointOutcome {
    Skipped(String),
    Analytic(AnalyticReport),
    Compared(ComparisonReport),
}

impl Sweep<'_> {
    fn point(&self, point: &[Override]) -> PointOutcome {
        match self.try_point(point) {
            Ok(o) => o,
            Err(CliError::Rejected(reason)) => PointOutcome::Skipped(reason),
            Err(CliError::Internal(e)) => PointOutcome::Skipped(format!("{e:#}")),
        }
    }

    fn try_point(&self, point: &[Override]) -> Result<PointOutcome, CliError> {
        let mut overrides = self.base.overrides.clone();
        overrides.extend(point.iter().map(|o| o.raw.clone()));
        let l = pipeline::load(&self.base.source, &overrides, self.lenient)?;
        let s = l.scenario();
        if self.analytic_only {
            return Ok(PointOutcome::Analytic(pipeline::analyze(s, self.opts)?));
        }
        let (_, _, c) = compare_one(s, self.opts, self.run, self.profile)?;
        Ok(PointOutcome::Compared(c))
    }
}

fn write_log(s: &Scenario, path: &std::path::Path) -> Result<(), CliError> {
    let (log, _) = run_seeded(s, s.run.seed, &RunOptions { record_log: true, batches: BATCHES }, None)
        .map_err(|e| CliError::Internal(anyhow::Error::new(e).context("logged replication")))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    log.write_jsonl(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    log::info!("event log with {} records written to {}", log.len(), path.display());
    Ok(())
}

fn render_analytic(r: &AnalyticReport) -> String {
    let rows: Vec<Vec<String>> = r
        .devices
        .iter()
        .map(|d| {
            vec![
                format!("device {}", d.device),
                d.priority.label().to_string(),
                d.slot.to_string(),
                d.minislot.to_string(),
                fmt_num(d.lambda_norm),
                fmt_num(d.adf),
                fmt_num(d.access_delay / 1e3),
                fmt_num(d.collision_prob),
            ]
        })
        .collect();
    let mut out =
        table(&["device", "class", "slot", "minislot", "lambda_frame", "adf", "delay_us", "collision"], &rows);
    let slots: Vec<Vec<String>> = r
        .slots
        .iter()
        .filter(|s| s.idle < 1.0)
        .map(|s| vec![format!("slot {}", s.slot), fmt_num(s.idle), fmt_num(s.throughput)])
        .collect();
    if !slots.is_empty() {
        out += "\n";
        out += &table(&["slot", "idle", "throughput"], &slots);
    }
    if let Some(f) = r.frame_length {
        out += &format!("\nexpected super-cycle length: {} us\n", fmt_num(f / 1e3));
    }
    out
}

fn ci(e: &Option<Estimate>, scale: f64) -> String {
    match e {
        Some(e) => {
            format!("{} [{}, {}]", fmt_num(e.mean * scale), fmt_num(e.ci_low * scale), fmt_num(e.ci_high * scale))
        }
        None => "-".to_string(),
    }
}

fn render_sim(r: &SimReport) -> String {
    let rows: Vec<Vec<String>> = r
        .devices
        .iter()
        .map(|d| {
            vec![
                format!("device {}", d.device),
                d.arrivals.to_string(),
                d.transmissions.to_string(),
                ci(&d.adf, 1.0),
                ci(&d.access_delay, 1e-3),
                ci(&d.collision_prob, 1.0),
                fmt_num(d.replacement_rate),
            ]
        })
        .collect();
    let mut out = table(&["device", "arrivals", "sent", "adf", "delay_us", "collision", "replaced"], &rows);
    let slots: Vec<Vec<String>> = r
        .slots
        .iter()
        .filter(|s| s.occurrences > 0)
        .map(|s| vec![format!("slot {}", s.slot), ci(&Some(s.idle), 1.0)])
        .collect();
    if !slots.is_empty() {
        out += "\n";
        out += &table(&["slot", "idle"], &slots);
    }
    if r.frame_length.is_some() {
        out += &format!("\nsuper-cycle length: {} us\n", ci(&r.frame_length, 1e-3));
    }
    out += &format!("collision slots: {}\n", r.collision_slots);
    out
}

mod toml_value {
    use msmac::io::fmt_num;

    /// Axis value as it appears in CSV columns.
    pub fn display(v: &toml::Value) -> String {
        match v {
            toml::Value::Float(f) => fmt_num(*f),
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}
