use std::path::{Path, PathBuf};

use anyhow::Context;
use msmac::analytic::{analytic_report, AnalyticOptions, AnalyticReport};
use msmac::io::{emit_scenario, load_scenario, parse_override, IoError, ParseOptions, Parsed};
use msmac::metrics::{summarize, SimReport, ToleranceProfile};
use msmac::sim::{run_replications, SimError};
use msmac::Scenario;
use serde::Serialize;

/// Batches per run; only used when a single replication is requested.
pub const BATCHES: u32 = 20;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The input was rejected: invalid scenario, failed analytic model.
    #[error("{0}")]
    Rejected(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Rejected(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } | IoError::Csv(_) => CliError::Internal(e.into()),
            other => CliError::Rejected(other.to_string()),
        }
    }
}

pub struct Loaded {
    pub source: PathBuf,
    pub overrides: Vec<String>,
    pub parsed: Parsed,
}

impl Loaded {
    pub fn scenario(&self) -> &Scenario {
        &self.parsed.scenario
    }
}

/// Loads a scenario with `overrides` applied in order.
pub fn load(path: &Path, overrides: &[String], lenient: bool) -> Result<Loaded, CliError> {
    let parsed_overrides = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
    let parsed = load_scenario(path, &ParseOptions { strict: !lenient, overrides: parsed_overrides })?;
    Ok(Loaded { source: path.to_path_buf(), overrides: overrides.to_vec(), parsed })
}

pub fn report_warnings(l: &Loaded) {
    for w in &l.parsed.warnings {
        log::warn!("{w}");
    }
    for w in &l.parsed.report.warnings {
        log::warn!("{w}");
    }
}

pub fn analyze(s: &Scenario, opts: &AnalyticOptions) -> Result<AnalyticReport, CliError> {
    analytic_report(s, opts).map_err(|e| CliError::Rejected(format!("analytic model: {e}")))
}

pub fn simulate(s: &Scenario, confidence: f64) -> Result<SimReport, CliError> {
    log::debug!("simulating {} replication(s) of {} slots", s.run.replications, s.run.horizon_slots);
    let runs = run_replications(s, BATCHES).map_err(|e| match e {
        SimError::Invalid(m) => CliError::Rejected(m),
        other => CliError::Internal(anyhow::Error::new(other).context("simulation aborted")),
    })?;
    summarize(&s.identity_hash(), &runs, confidence).map_err(|e| CliError::Internal(e.into()))
}

/// Output directory that remembers what was written to it.
pub struct Output {
    pub dir: PathBuf,
    pub inputs: Vec<String>,
    pub results: Vec<String>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Output, CliError> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Output { dir: dir.to_path_buf(), inputs: Vec::new(), results: Vec::new() })
    }

    fn put(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn input(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        self.put(name, contents)?;
        self.inputs.push(name.to_string());
        Ok(())
    }

    pub fn result(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        self.put(name, contents)?;
        self.results.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).context("serialising results")? + "\n";
        self.result(name, &text)
    }

    /// Writes the canonical scenario (and profile) as inputs.
    pub fn inputs_for(&mut self, s: &Scenario, profile: Option<&ToleranceProfile>) -> Result<(), CliError> {
        self.input("scenario.scn", &emit_scenario(s))?;
        if let Some(p) = profile {
            let text = serde_json::to_string_pretty(p).context("serialising profile")? + "\n";
            self.input("profile.json", &text)?;
        }
        Ok(())
    }

    pub fn finish(self, mut manifest: Manifest) -> Result<(), CliError> {
        manifest.inputs = self.inputs.clone();
        manifest.results = self.results.clone();
        let text = serde_json::to_string_pretty(&manifest).context("serialising manifest")? + "\n";
        self.put("manifest.json", &text)?;
        log::info!("wrote {}", self.dir.display());
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub source: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub replications: u32,
    pub horizon_slots: u64,
    pub warmup_fraction: f64,
    pub overrides: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analytic_options: Option<AnalyticOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    pub inputs: Vec<String>,
    pub results: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Grid {
    pub axes: Vec<String>,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub overrides: Vec<String>,
    /// `pass`, `fail`, `done` (analytic only) or `skipped`.
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Manifest {
    pub fn new(command: &'static str, l: &Loaded) -> Manifest {
        let s = l.scenario();
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            source: l.source.display().to_string(),
            scenario_hash: s.identity_hash(),
            seed: s.run.seed,
            replications: s.run.replications,
            horizon_slots: s.run.horizon_slots,
            warmup_fraction: s.run.warmup_fraction,
            overrides: l.overrides.clone(),
            analytic_options: None,
            confidence: None,
            grid: None,
            inputs: Vec::new(),
            results: Vec::new(),
        }
    }
}

/// Left-aligned first column, right-aligned rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}
