use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::overrides::{apply_overrides, Override};
use super::{line_col, IoError};
use crate::model::{
    validate_scenario, ArrivalRate, Assignment, AssignmentEntry, ClassQos, DeviceId, DeviceSpec, Priority,
    ProtocolParams, QosSpec, RunControl, Scenario, Ticks, TrafficProcess, ValidationReport,
};

type Extra = BTreeMap<String, Value>;

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    protocol: ProtocolSection,
    #[serde(default)]
    qos: QosSection,
    #[serde(default)]
    devices: Vec<DeviceEntry>,
    #[serde(default)]
    assignment: Vec<AssignmentRow>,
    #[serde(default)]
    run: RunSection,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProtocolSection {
    n_m: u32,
    #[serde(rename = "T_m_us")]
    t_m_us: f64,
    #[serde(rename = "T_x_us")]
    t_x_us: f64,
    #[serde(rename = "r_H")]
    r_h: u32,
    #[serde(rename = "r_R")]
    r_r: u32,
    #[serde(rename = "r_L")]
    r_l: u32,
    #[serde(default)]
    synccs: bool,
    #[serde(default)]
    buffered: bool,
    #[serde(default)]
    smsa: bool,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct QosClassEntry {
    delta_us: f64,
    rho: f64,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct QosSection {
    #[serde(rename = "HP", skip_serializing_if = "Option::is_none")]
    hp: Option<QosClassEntry>,
    #[serde(rename = "RP", skip_serializing_if = "Option::is_none")]
    rp: Option<QosClassEntry>,
    #[serde(rename = "LP", skip_serializing_if = "Option::is_none")]
    lp: Option<QosClassEntry>,
    #[serde(flatten)]
    extra: Extra,
}

fn poisson() -> String {
    "poisson".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct DeviceEntry {
    id: u32,
    class: Priority,
    lambda_per_s: f64,
    #[serde(default = "poisson")]
    traffic: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace_us: Option<Vec<f64>>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    device: u32,
    slot: u32,
    minislot: u32,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Serialize, Deserialize)]
struct RunSection {
    #[serde(default = "defaults::seed")]
    seed: u64,
    #[serde(default = "defaults::horizon")]
    horizon_slots: u64,
    #[serde(default = "defaults::replications")]
    replications: u32,
    #[serde(default = "defaults::warmup")]
    warmup_fraction: f64,
    #[serde(flatten)]
    extra: Extra,
}

mod defaults {
    use crate::model::RunControl;

    pub fn seed() -> u64 {
        RunControl::default().seed
    }
    pub fn horizon() -> u64 {
        RunControl::default().horizon_slots
    }
    pub fn replications() -> u32 {
        RunControl::default().replications
    }
    pub fn warmup() -> f64 {
        RunControl::default().warmup_fraction
    }
}

impl Default for RunSection {
    fn default() -> Self {
        let r = RunControl::default();
        RunSection {
            seed: r.seed,
            horizon_slots: r.horizon_slots,
            replications: r.replications,
            warmup_fraction: r.warmup_fraction,
            extra: Extra::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    /// Unknown keys are errors when set, warnings otherwise.
    pub strict: bool,
    pub overrides: Vec<Override>,
}

impl ParseOptions {
    pub fn strict() -> ParseOptions {
        ParseOptions { strict: true, overrides: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub scenario: Scenario,
    pub report: ValidationReport,
    /// Unknown keys tolerated in lenient mode.
    pub warnings: Vec<String>,
}

fn toml_error(text: Option<&str>, e: toml::de::Error) -> IoError {
    let location = text.zip(e.span()).map(|(t, s)| line_col(t, s.start));
    IoError::Field { location, message: e.message().trim().to_string() }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str, opts: &ParseOptions) -> Result<Parsed, IoError> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        let (line, column) = e.span().map(|s| line_col(text, s.start)).unwrap_or((1, 1));
        IoError::Syntax { line, column, message: e.message().trim().to_string() }
    })?;
    let file: ScenarioFile = if opts.overrides.is_empty() {
        toml::from_str(text).map_err(|e| toml_error(Some(text), e))?
    } else {
        apply_overrides(&mut table, &opts.overrides)?;
        Value::Table(table).try_into().map_err(|e| toml_error(None, e))?
    };

    let unknown = unknown_keys(&file);
    let mut warnings = Vec::new();
    if !unknown.is_empty() {
        let described: Vec<String> = unknown
            .iter()
            .map(|k| match locate_key(text, k) {
                Some(line) => format!("{k} (line {line})"),
                None => k.clone(),
            })
            .collect();
        if opts.strict {
            return Err(IoError::UnknownKeys(described));
        }
        warnings.extend(described.into_iter().map(|k| format!("ignored unknown key {k}")));
    }

    let scenario = to_scenario(&file)?;
    let report = validate_scenario(&scenario);
    if !report.is_ok() {
        return Err(IoError::Semantic(report));
    }
    Ok(Parsed { scenario, report, warnings })
}

pub fn load_scenario(path: &Path, opts: &ParseOptions) -> Result<Parsed, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    parse_scenario(&text, opts)
}

fn unknown_keys(f: &ScenarioFile) -> Vec<String> {
    let mut out = Vec::new();
    let mut add = |prefix: &str, extra: &Extra| {
        out.extend(extra.keys().map(|k| if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") }));
    };
    add("", &f.extra);
    add("protocol", &f.protocol.extra);
    add("qos", &f.qos.extra);
    for (name, c) in [("HP", &f.qos.hp), ("RP", &f.qos.rp), ("LP", &f.qos.lp)] {
        if let Some(c) = c {
            add(&format!("qos.{name}"), &c.extra);
        }
    }
    for (i, d) in f.devices.iter().enumerate() {
        add(&format!("devices[{i}]"), &d.extra);
    }
    for (i, a) in f.assignment.iter().enumerate() {
        add(&format!("assignment[{i}]"), &a.extra);
    }
    add("run", &f.run.extra);
    out
}

/// Line of the first `key =` whose key is the last path segment.
fn locate_key(text: &str, path: &str) -> Option<usize> {
    let key = path.rsplit('.').next()?;
    text.lines()
        .position(|l| l.trim_start().strip_prefix(key).is_some_and(|r| r.trim_start().starts_with('=')))
        .map(|i| i + 1)
}

fn micros(field: &str, us: f64) -> Result<Ticks, IoError> {
    Ticks::from_micros(us).map_err(|e| IoError::Field { location: None, message: format!("{field}: {e}") })
}

fn to_scenario(f: &ScenarioFile) -> Result<Scenario, IoError> {
    let p = &f.protocol;
    let params = ProtocolParams {
        minislots: p.n_m,
        minislot_len: micros("protocol.T_m_us", p.t_m_us)?,
        tx_len: micros("protocol.T_x_us", p.t_x_us)?,
        cycle_hp: p.r_h,
        cycle_rp: p.r_r,
        cycle_lp: p.r_l,
        synccs: p.synccs,
        buffered: p.buffered,
        smsa: p.smsa,
    };
    let default_qos = QosSpec::default();
    let class = |name: &str, c: &Option<QosClassEntry>, dflt: ClassQos| -> Result<ClassQos, IoError> {
        match c {
            Some(c) => Ok(ClassQos { delta: micros(&format!("qos.{name}.delta_us"), c.delta_us)?, rho: c.rho }),
            None => Ok(dflt),
        }
    };
    let qos = QosSpec {
        hp: class("HP", &f.qos.hp, default_qos.hp)?,
        rp: class("RP", &f.qos.rp, default_qos.rp)?,
        lp: class("LP", &f.qos.lp, default_qos.lp)?,
    };

    let mut devices = Vec::with_capacity(f.devices.len());
    for (i, d) in f.devices.iter().enumerate() {
        let rate = ArrivalRate(d.lambda_per_s);
        let field = |name: &str| format!("devices[{i}].{name}");
        let traffic = match d.traffic.as_str() {
            "poisson" => TrafficProcess::Poisson,
            "bernoulli" => {
                let frame = params.class_frame(d.class).as_f64() / 1e9;
                TrafficProcess::BernoulliPerFrame { p: d.p.unwrap_or(d.lambda_per_s * frame) }
            }
            "deterministic" => {
                let period = match d.period_us {
                    Some(us) => micros(&field("period_us"), us)?,
                    None if d.lambda_per_s > 0.0 => Ticks((1e9 / d.lambda_per_s).round() as u64),
                    None => {
                        return Err(IoError::Field {
                            location: None,
                            message: format!("{}: needed when lambda is 0", field("period_us")),
                        })
                    }
                };
                let phase = micros(&field("phase_us"), d.phase_us.unwrap_or(0.0))?;
                TrafficProcess::Deterministic { period, phase }
            }
            "trace" => {
                let us = d.trace_us.as_ref().ok_or_else(|| IoError::Field {
                    location: None,
                    message: format!("{}: required for trace traffic", field("trace_us")),
                })?;
                TrafficProcess::Trace(us.iter().map(|t| micros(&field("trace_us"), *t)).collect::<Result<_, _>>()?)
            }
            other => {
                return Err(IoError::Field {
                    location: None,
                    message: format!(
                        "{}: unknown traffic `{other}` (poisson, bernoulli, deterministic, trace)",
                        field("traffic")
                    ),
                })
            }
        };
        devices.push(DeviceSpec { id: DeviceId(d.id), priority: d.class, rate, traffic });
    }
    let assignment = Assignment {
        entries: f
            .assignment
            .iter()
            .map(|a| AssignmentEntry { device: DeviceId(a.device), slot: a.slot, minislot: a.minislot })
            .collect(),
    };
    let r = &f.run;
    let run = RunControl {
        seed: r.seed,
        horizon_slots: r.horizon_slots,
        replications: r.replications,
        warmup_fraction: r.warmup_fraction,
    };
    Ok(Scenario { params, devices, assignment, qos, run })
}

/// Canonical file text. Derived traffic parameters are written out.
pub fn emit_scenario(s: &Scenario) -> String {
    let p = &s.params;
    let class = |c: &ClassQos| Some(QosClassEntry { delta_us: c.delta.as_micros(), rho: c.rho, extra: Extra::new() });
    let file = ScenarioFile {
        protocol: ProtocolSection {
            n_m: p.minislots,
            t_m_us: p.minislot_len.as_micros(),
            t_x_us: p.tx_len.as_micros(),
            r_h: p.cycle_hp,
            r_r: p.cycle_rp,
            r_l: p.cycle_lp,
            synccs: p.synccs,
            buffered: p.buffered,
            smsa: p.smsa,
            extra: Extra::new(),
        },
        qos: QosSection { hp: class(&s.qos.hp), rp: class(&s.qos.rp), lp: class(&s.qos.lp), extra: Extra::new() },
        devices: s
            .devices
            .iter()
            .map(|d| {
                let mut e = DeviceEntry {
                    id: d.id.0,
                    class: d.priority,
                    lambda_per_s: d.rate.per_second(),
                    traffic: String::new(),
                    p: None,
                    period_us: None,
                    phase_us: None,
                    trace_us: None,
                    extra: Extra::new(),
                };
                match &d.traffic {
                    TrafficProcess::Poisson => e.traffic = "poisson".into(),
                    TrafficProcess::BernoulliPerFrame { p } => {
                        e.traffic = "bernoulli".into();
                        e.p = Some(*p);
                    }
                    TrafficProcess::Deterministic { period, phase } => {
                        e.traffic = "deterministic".into();
                        e.period_us = Some(period.as_micros());
                        e.phase_us = Some(phase.as_micros());
                    }
                    TrafficProcess::Trace(t) => {
                        e.traffic = "trace".into();
                        e.trace_us = Some(t.iter().map(|x| x.as_micros()).collect());
                    }
                }
                e
            })
            .collect(),
        assignment: s
            .assignment
            .entries
            .iter()
            .map(|a| AssignmentRow { device: a.device.0, slot: a.slot, minislot: a.minislot, extra: Extra::new() })
            .collect(),
        run: RunSection {
            seed: s.run.seed,
            horizon_slots: s.run.horizon_slots,
            replications: s.run.replications,
            warmup_fraction: s.run.warmup_fraction,
            extra: Extra::new(),
        },
        extra: Extra::new(),
    };
    toml::to_string(&file).expect("scenario file serialises")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_override;
    use crate::model::IssueKind;

    const BASE: &str = r#"
[protocol]
n_m = 4
T_m_us = 10
T_x_us = 100
r_H = 2
r_R = 2
r_L = 2

[[devices]]
id = 0
class = "LP"
lambda_per_s = 500.0
traffic = "bernoulli"

[[devices]]
id = 1
class = "LP"
lambda_per_s = 250.0
traffic = "deterministic"

[[assignment]]
device = 0
slot = 0
minislot = 1

[[assignment]]
device = 1
slot = 1
minislot = 2

[run]
seed = 9
horizon_slots = 1000
"#;

    #[test]
    fn parses_with_derived_traffic() {
        let p = parse_scenario(BASE, &ParseOptions::strict()).unwrap();
        let s = &p.scenario;
        assert_eq!(s.params.slot_len(), Ticks(140_000));
        match s.devices[0].traffic {
            TrafficProcess::BernoulliPerFrame { p } => assert!((p - 500.0 * 280e-6).abs() < 1e-12),
            ref t => panic!("{t:?}"),
        }
        assert_eq!(s.devices[1].traffic, TrafficProcess::Deterministic { period: Ticks(4_000_000), phase: Ticks(0) });
        assert_eq!(s.run.replications, RunControl::default().replications);
    }

    #[test]
    fn round_trip() {
        let s = parse_scenario(BASE, &ParseOptions::strict()).unwrap().scenario;
        let text = emit_scenario(&s);
        let again = parse_scenario(&text, &ParseOptions::strict()).unwrap().scenario;
        assert_eq!(s, again);
        assert_eq!(s.identity_hash(), again.identity_hash());
        assert_eq!(emit_scenario(&again), text);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_scenario("[protocol]\nn_m = = 4\n", &ParseOptions::strict()).unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn missing_field_is_named() {
        let text = BASE.replace("T_x_us = 100\n", "");
        let err = parse_scenario(&text, &ParseOptions::strict()).unwrap_err();
        assert!(matches!(err, IoError::Field { .. }));
        assert!(err.to_string().contains("T_x_us"), "{err}");
    }

    #[test]
    fn unknown_keys_strict_and_lenient() {
        let text = BASE.replace("seed = 9", "seed = 9\nsed = 3");
        let err = parse_scenario(&text, &ParseOptions::strict()).unwrap_err();
        assert!(err.to_string().contains("run.sed (line"), "{err}");
        let ok = parse_scenario(&text, &ParseOptions::default()).unwrap();
        assert_eq!(ok.warnings.len(), 1);
    }

    #[test]
    fn duplicate_cell_is_semantic() {
        let text = BASE.replace("slot = 1\nminislot = 2", "slot = 0\nminislot = 1");
        match parse_scenario(&text, &ParseOptions::strict()) {
            Err(IoError::Semantic(r)) => assert!(r.has(IssueKind::DuplicateCell)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_applied_before_validation() {
        let opts = ParseOptions {
            strict: true,
            overrides: vec![
                parse_override("run.horizon_slots=77").unwrap(),
                parse_override("protocol.n_m=50").unwrap(),
            ],
        };
        match parse_scenario(BASE, &opts) {
            Err(IoError::Semantic(r)) => assert!(r.has(IssueKind::Geometry)),
            other => panic!("{other:?}"),
        }
        let opts = ParseOptions { strict: true, overrides: vec![parse_override("run.horizon_slots=77").unwrap()] };
        assert_eq!(parse_scenario(BASE, &opts).unwrap().scenario.run.horizon_slots, 77);
    }
}
