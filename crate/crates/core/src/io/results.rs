use std::path::Path;

use super::IoError;
use crate::analytic::AnalyticReport;
use crate::metrics::{ComparisonReport, Estimate, SimReport, ToleranceProfile};

pub const COMPARISON_HEADER: [&str; 9] =
    ["scenario_id", "quantity", "device_or_slot", "analytic", "simulated", "ci_low", "ci_high", "rel_err", "verdict"];

/// Nine significant digits, trailing zeros trimmed; scientific notation
/// outside `[1e-4, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let exp = x.abs().log10().floor() as i32;
    let s = if (-4..15).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let x = if exp > 8 {
            let unit = 10f64.powi(exp - 8);
            (x / unit).round() * unit
        } else {
            x
        };
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new digit, e.g. 9.999999999 -> 10.00000000
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.8e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        let mantissa =
            if mantissa.contains('.') { mantissa.trim_end_matches('0').trim_end_matches('.') } else { mantissa };
        format!("{mantissa}e{e}")
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::NonNumeric)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn row<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).expect("in-memory writer");
}

/// Comparison rows with optional leading columns (sweep coordinates).
pub fn comparison_csv(reports: &[(Vec<(String, String)>, &ComparisonReport)]) -> String {
    let mut w = writer();
    let extra: Vec<String> =
        reports.first().map(|(e, _)| e.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    row(&mut w, extra.iter().map(String::as_str).chain(COMPARISON_HEADER));
    for (cols, r) in reports {
        for c in &r.rows {
            let fields: Vec<String> = cols
                .iter()
                .map(|(_, v)| v.clone())
                .chain([
                    r.scenario_id.clone(),
                    c.quantity.clone(),
                    c.target.clone(),
                    fmt_num(c.analytic),
                    fmt_num(c.simulated),
                    fmt_num(c.ci_low),
                    fmt_num(c.ci_high),
                    fmt_num(c.rel_err),
                    c.verdict.label().to_string(),
                ])
                .collect();
            row(&mut w, fields);
        }
    }
    finish(w)
}

/// A parsed CSV record keyed by header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub fields: Vec<(String, String)>,
}

impl CsvRow {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

pub fn read_comparison_csv(text: &str) -> Result<Vec<CsvRow>, IoError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(|e| IoError::Csv(e.to_string()))?.iter().map(String::from).collect();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| IoError::Csv(e.to_string()))?;
            Ok(CsvRow { fields: header.iter().cloned().zip(rec.iter().map(String::from)).collect() })
        })
        .collect()
}

/// One row per device.
pub fn analytic_csv(r: &AnalyticReport) -> String {
    analytic_rows_csv(&[(Vec::new(), r)])
}

/// [`analytic_csv`] for several reports, with optional leading columns.
pub fn analytic_rows_csv(reports: &[(Vec<(String, String)>, &AnalyticReport)]) -> String {
    let mut w = writer();
    let extra: Vec<String> =
        reports.first().map(|(e, _)| e.iter().map(|(k, _)| k.clone()).collect()).unwrap_or_default();
    row(
        &mut w,
        extra.iter().map(String::as_str).chain([
            "scenario_id",
            "device",
            "class",
            "slot",
            "minislot",
            "lambda_norm",
            "adf",
            "access_delay_us",
            "frame_us",
            "collision_prob",
            "colliders",
        ]),
    );
    for (cols, r) in reports {
        for d in &r.devices {
            let fields: Vec<String> = cols
                .iter()
                .map(|(_, v)| v.clone())
                .chain([
                    r.scenario_id.clone(),
                    d.device.to_string(),
                    d.priority.label().to_string(),
                    d.slot.to_string(),
                    d.minislot.to_string(),
                    fmt_num(d.lambda_norm),
                    fmt_num(d.adf),
                    fmt_num(d.access_delay / 1e3),
                    fmt_num(d.frame / 1e3),
                    fmt_num(d.collision_prob),
                    fmt_num(d.colliders),
                ])
                .collect();
            row(&mut w, fields);
        }
    }
    finish(w)
}

/// One row per global slot of the super-cycle.
pub fn slot_csv(r: &AnalyticReport) -> String {
    let mut w = writer();
    row(&mut w, ["scenario_id", "slot", "idle_prob", "throughput", "shared"]);
    for s in &r.slots {
        row(
            &mut w,
            [r.scenario_id.clone(), s.slot.to_string(), fmt_num(s.idle), fmt_num(s.throughput), s.shared.to_string()],
        );
    }
    finish(w)
}

/// Long format: one row per (quantity, device or slot).
pub fn sim_csv(r: &SimReport) -> String {
    let mut w = writer();
    row(&mut w, ["scenario_id", "quantity", "device_or_slot", "estimate", "ci_low", "ci_high", "groups", "count"]);
    let mut put = |q: &str, target: String, e: &Estimate, scale: f64, count: u64| {
        row(
            &mut w,
            [
                r.scenario_id.clone(),
                q.to_string(),
                target,
                fmt_num(e.mean * scale),
                fmt_num(e.ci_low * scale),
                fmt_num(e.ci_high * scale),
                e.groups.to_string(),
                count.to_string(),
            ],
        );
    };
    for d in &r.devices {
        let t = format!("device {}", d.device);
        if let Some(e) = &d.adf {
            put("adf", t.clone(), e, 1.0, d.successes);
        }
        if let Some(e) = &d.access_delay {
            put("access_delay_us", t.clone(), e, 1e-3, d.successes);
        }
        if let Some(e) = &d.collision_prob {
            put("collision_prob", t.clone(), e, 1.0, d.transmissions);
        }
        let rate =
            Estimate { mean: d.replacement_rate, ci_low: d.replacement_rate, ci_high: d.replacement_rate, groups: 1 };
        put("replacement_rate", t, &rate, 1.0, d.arrivals);
    }
    for s in &r.slots {
        if s.occurrences > 0 {
            put("idle_prob", format!("slot {}", s.slot), &s.idle, 1.0, s.occurrences);
        }
    }
    if let Some(e) = &r.frame_length {
        put("frame_length_us", "frame".to_string(), e, 1e-3, r.measured_slots);
    }
    let collisions = Estimate {
        mean: r.collision_slots as f64,
        ci_low: r.collision_slots as f64,
        ci_high: r.collision_slots as f64,
        groups: r.replications,
    };
    put("collision_slots", "all".to_string(), &collisions, 1.0, r.horizon_slots * r.replications as u64);
    finish(w)
}

/// Reads a tolerance profile; `.json` files are JSON, anything else TOML.
pub fn load_profile(path: &Path) -> Result<ToleranceProfile, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
    let bad = |message: String| IoError::Field { location: None, message: format!("{}: {message}", path.display()) };
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    } else {
        toml::from_str(&text).map_err(|e| bad(e.message().to_string()))
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{ComparisonRow, Verdict};

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt_num(19.0 / 17.0), "1.11764706");
        assert_eq!(fmt_num(562_500.0), "562500");
        assert_eq!(fmt_num(0.8), "0.8");
        assert_eq!(fmt_num(1.0 / 3.0 * 1e-6), "3.33333333e-7");
        assert_eq!(fmt_num(9.9999999999), "10");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(123_456_789_012.0), "123456789000");
    }

    #[test]
    fn profile_from_json_and_toml() {
        let dir = std::env::temp_dir().join(format!("msmac-profile-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let j = dir.join("p.json");
        std::fs::write(&j, r#"{"adf": {"kind": "relative", "value": 0.05}}"#).unwrap();
        assert_eq!(load_profile(&j).unwrap().adf.value, 0.05);
        let t = dir.join("p.toml");
        std::fs::write(&t, "idle_prob = { kind = \"absolute\", value = 0.01 }\n").unwrap();
        assert_eq!(load_profile(&t).unwrap().idle_prob.value, 0.01);
        std::fs::write(&t, "nope = 1\n").unwrap();
        assert!(matches!(load_profile(&t), Err(IoError::Field { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = ComparisonReport { scenario_id: "x".into(), rows: Vec::new(), pass: true };
        assert_eq!(
            comparison_csv(&[(Vec::new(), &r)]),
            "\"scenario_id\",\"quantity\",\"device_or_slot\",\"analytic\",\"simulated\",\"ci_low\",\"ci_high\",\"rel_err\",\"verdict\"\n"
        );
    }

    #[test]
    fn csv_round_trip_preserves_values() {
        let row = |q: &str, a: f64, s: f64| ComparisonRow {
            quantity: q.into(),
            target: "device 1".into(),
            analytic: a,
            simulated: s,
            ci_low: s - 0.01,
            ci_high: s + 0.01,
            abs_err: (a - s).abs(),
            rel_err: crate::metrics::relative_error(a, s),
            mandatory: true,
            verdict: Verdict::Pass,
        };
        let r = ComparisonReport {
            scenario_id: "abc".into(),
            rows: vec![row("adf", 19.0 / 17.0, 1.12), row("idle_prob", 0.8, 0.8012)],
            pass: true,
        };
        let text = comparison_csv(&[(vec![("point".into(), "0".into())], &r)]);
        let back = read_comparison_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].get("point"), Some("0"));
        for (b, orig) in back.iter().zip(&r.rows) {
            assert_eq!(b.get("quantity"), Some(orig.quantity.as_str()));
            assert_eq!(b.num("analytic").map(fmt_num), Some(fmt_num(orig.analytic)));
            assert!((b.num("simulated").unwrap() - orig.simulated).abs() < 1e-9 * orig.simulated.abs());
        }
    }
}
