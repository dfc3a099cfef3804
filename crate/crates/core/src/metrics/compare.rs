use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::summary::{Estimate, SimReport};
use super::MetricsError;
use crate::analytic::AnalyticReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    Relative,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub kind: ToleranceKind,
    pub value: f64,
    /// Whether a failure of this quantity fails the whole comparison.
    #[serde(default = "yes")]
    pub mandatory: bool,
}

fn yes() -> bool {
    true
}

impl Tolerance {
    pub const fn rel(value: f64) -> Tolerance {
        Tolerance { kind: ToleranceKind::Relative, value, mandatory: true }
    }

    pub const fn abs(value: f64) -> Tolerance {
        Tolerance { kind: ToleranceKind::Absolute, value, mandatory: true }
    }

    pub const fn advisory(self) -> Tolerance {
        Tolerance { mandatory: false, ..self }
    }

    pub fn accepts(&self, analytic: f64, simulated: f64) -> bool {
        match self.kind {
            ToleranceKind::Relative => relative_error(analytic, simulated) <= self.value,
            ToleranceKind::Absolute => (analytic - simulated).abs() <= self.value,
        }
    }
}

/// Acceptance thresholds per quantity. Loadable from TOML or JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceProfile {
    pub adf: Tolerance,
    pub access_delay: Tolerance,
    pub idle_prob: Tolerance,
    pub frame_length_buffered: Tolerance,
    pub frame_length_no_buffer: Tolerance,
    pub collision_prob: Tolerance,
}

impl Default for ToleranceProfile {
    fn default() -> Self {
        ToleranceProfile {
            adf: Tolerance::rel(0.10),
            access_delay: Tolerance::rel(0.10).advisory(),
            idle_prob: Tolerance::abs(0.02),
            frame_length_buffered: Tolerance::rel(0.01),
            frame_length_no_buffer: Tolerance::rel(0.02),
            collision_prob: Tolerance::rel(0.25),
        }
    }
}

/// `|a - s| / max(|a|, |s|)`: symmetric in its arguments, 0 when both are 0.
pub fn relative_error(a: f64, s: f64) -> f64 {
    let scale = a.abs().max(s.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - s).abs() / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Too few simulated transmissions to judge.
    Unreliable,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Unreliable => "unreliable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub quantity: String,
    /// `device <id>`, `slot <g>` or `frame`.
    pub target: String,
    pub analytic: f64,
    pub simulated: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    pub mandatory: bool,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenario_id: String,
    pub rows: Vec<ComparisonRow>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn failures(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.mandatory && r.verdict == Verdict::Fail)
    }

    pub fn row(&self, quantity: &str, target: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.quantity == quantity && r.target == target)
    }

    /// Aligned plain-text table.
    pub fn render_table(&self) -> String {
        let header = ["quantity", "target", "analytic", "simulated", "ci_low", "ci_high", "rel_err", "verdict"];
        let mut cells: Vec<[String; 8]> = vec![header.map(String::from)];
        for r in &self.rows {
            cells.push([
                r.quantity.clone(),
                r.target.clone(),
                format!("{:.6}", r.analytic),
                format!("{:.6}", r.simulated),
                format!("{:.6}", r.ci_low),
                format!("{:.6}", r.ci_high),
                format!("{:.4}", r.rel_err),
                if r.mandatory { r.verdict.label().to_string() } else { format!("({})", r.verdict.label()) },
            ]);
        }
        let mut widths = [0usize; 8];
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

struct Builder {
    rows: Vec<ComparisonRow>,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        quantity: &str,
        target: String,
        analytic: f64,
        sim: &Estimate,
        scale: f64,
        tol: Tolerance,
        reliable: bool,
    ) {
        let simulated = sim.mean * scale;
        let verdict = if !reliable {
            Verdict::Unreliable
        } else if tol.accepts(analytic, simulated) {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        self.rows.push(ComparisonRow {
            quantity: quantity.to_string(),
            target,
            analytic,
            simulated,
            ci_low: sim.ci_low * scale,
            ci_high: sim.ci_high * scale,
            abs_err: (analytic - simulated).abs(),
            rel_err: relative_error(analytic, simulated),
            mandatory: tol.mandatory,
            verdict,
        });
    }
}

/// Compares every quantity both reports carry.
///
/// Collision probability rows appear only where either side is nonzero, idle
/// rows only for occupied slots. Times are reported in microseconds.
pub fn compare(
    analytic: &AnalyticReport,
    sim: &SimReport,
    profile: &ToleranceProfile,
) -> Result<ComparisonReport, MetricsError> {
    if analytic.scenario_id != sim.scenario_id {
        return Err(MetricsError::ScenarioMismatch {
            analytic: analytic.scenario_id.clone(),
            simulated: sim.scenario_id.clone(),
        });
    }
    let mut b = Builder { rows: Vec::new() };
    for a in &analytic.devices {
        let Some(s) = sim.device(a.device) else { continue };
        let target = format!("device {}", a.device);
        let reliable = !s.unreliable;
        if let Some(e) = &s.adf {
            b.push("adf", target.clone(), a.adf, e, 1.0, profile.adf, reliable);
        }
        if let Some(e) = &s.access_delay {
            b.push("access_delay_us", target.clone(), a.access_delay / 1e3, e, 1e-3, profile.access_delay, reliable);
        }
        if let Some(e) = &s.collision_prob {
            if a.collision_prob > 0.0 || e.mean > 0.0 {
                b.push("collision_prob", target, a.collision_prob, e, 1.0, profile.collision_prob, reliable);
            }
        }
    }
    for a in &analytic.slots {
        let Some(s) = sim.slots.get(a.slot) else { continue };
        if a.idle < 1.0 && s.occurrences > 0 {
            b.push("idle_prob", format!("slot {}", a.slot), a.idle, &s.idle, 1.0, profile.idle_prob, true);
        }
    }
    if let (Some(f), Some(e)) = (analytic.frame_length, &sim.frame_length) {
        let tol = if analytic.buffered { profile.frame_length_buffered } else { profile.frame_length_no_buffer };
        b.push("frame_length_us", "frame".to_string(), f / 1e3, e, 1e-3, tol, true);
    }
    let pass = b.rows.iter().all(|r| !r.mandatory || r.verdict != Verdict::Fail);
    Ok(ComparisonReport { scenario_id: analytic.scenario_id.clone(), rows: b.rows, pass })
}
