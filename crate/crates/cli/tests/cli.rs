use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use msmac::io::read_comparison_csv;

fn scenario(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(rel)
}

fn msmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msmac")).args(args).env_remove("MSMAC_OUT").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const SHORT: [&str; 4] = ["--horizon", "20000", "--replications", "4"];

#[test]
fn validate_accepts_shipped_and_rejects_broken() {
    let ok = msmac(&["validate", scenario("paper_s3f.scn").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert!(stdout(&ok).contains("super-cycle 200 slots of 200 us"));

    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.scn");
    let text = std::fs::read_to_string(scenario("uncontended.scn")).unwrap().replace("T_x_us = 160\n", "");
    std::fs::write(&broken, text).unwrap();
    let bad = msmac(&["validate", broken.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("T_x_us"), "{}", stderr(&bad));
}

#[test]
fn unknown_keys_strict_and_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("typo.scn");
    let text = std::fs::read_to_string(scenario("uncontended.scn")).unwrap().replace("[run]\n", "[run]\nsed = 4\n");
    std::fs::write(&f, text).unwrap();
    let strict = msmac(&["validate", f.to_str().unwrap()]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(stderr(&strict).contains("run.sed"), "{}", stderr(&strict));
    let lenient = msmac(&["validate", "--lenient", f.to_str().unwrap()]);
    assert_eq!(lenient.status.code(), Some(0));
    assert!(stderr(&lenient).contains("run.sed"));
}

#[test]
fn analyze_writes_manifest_inputs_and_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let o = msmac(&[
        "analyze",
        scenario("acceptance/two_device_no_buffer.scn").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("1.11764706"), "{}", stdout(&o));
    let m = manifest(&out);
    assert_eq!(m["command"], "analyze");
    assert_eq!(m["inputs"][0], "scenario.scn");
    for f in ["analytic.csv", "slots.csv", "analytic.json", "scenario.scn"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(out.join("analytic.csv")).unwrap();
    assert!(csv.starts_with("\"scenario_id\",\"device\""));
}

#[test]
fn simulate_reports_collisions_and_exports_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let log = dir.path().join("log").join("events.jsonl");
    let path = scenario("smsa_stress.scn");
    let o = msmac(
        &[
            &[
                "simulate",
                path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--export-log",
                log.to_str().unwrap(),
            ],
            &SHORT[..],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let collisions: u64 =
        stdout(&o).lines().find_map(|l| l.strip_prefix("collision slots: ")).expect("collision line").parse().unwrap();
    assert!(collisions > 0);
    let text = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "slot_start");
    assert_eq!(first["tick"], 0);
    assert_eq!(text.lines().filter(|l| l.contains("\"slot_start\"")).count(), 20_000);
}

#[test]
fn compare_is_reproducible_from_its_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let src = scenario("acceptance/two_device_buffered.scn");
    let first =
        msmac(&[&["compare", src.to_str().unwrap(), "--out", a.to_str().unwrap(), "--seed", "5"], &SHORT[..]].concat());
    assert_eq!(first.status.code(), Some(0), "{}{}", stdout(&first), stderr(&first));
    let m = manifest(&a);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["overrides"][0], "run.seed=5");

    // the emitted input already carries the overrides
    let again = msmac(&["compare", a.join("scenario.scn").to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    for f in ["comparison.csv", "sim.csv", "analytic.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest(&b)["scenario_hash"], m["scenario_hash"]);
    let rows = read_comparison_csv(&std::fs::read_to_string(a.join("comparison.csv")).unwrap()).unwrap();
    assert!(rows.iter().any(|r| r.get("quantity") == Some("idle_prob")));
}

#[test]
fn strict_profile_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("tight.toml");
    std::fs::write(&profile, "adf = { kind = \"relative\", value = 1e-6 }\n").unwrap();
    let src = scenario("acceptance/two_device_no_buffer.scn");
    let o = msmac(
        &[
            &[
                "compare",
                src.to_str().unwrap(),
                "--profile",
                profile.to_str().unwrap(),
                "--out",
                dir.path().join("c").to_str().unwrap(),
            ],
            &SHORT[..],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn unwritable_output_is_an_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let o = msmac(&[
        "analyze",
        scenario("uncontended.scn").to_str().unwrap(),
        "--out",
        blocker.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn output_directory_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_msmac"))
        .args(["analyze", scenario("uncontended.scn").to_str().unwrap()])
        .env("MSMAC_OUT", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("manifest.json").exists());
}

#[test]
fn sweep_over_rates_marks_overloaded_points_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let src = scenario("acceptance/two_device_no_buffer.scn");
    // 1e2 .. 1e4 per second: the last points push the slot past one arrival per frame
    let o = msmac(
        &[
            &[
                "sweep",
                src.to_str().unwrap(),
                "--axis",
                "devices.*.lambda_per_s = logspace(2, 4, 5)",
                "--out",
                out.to_str().unwrap(),
            ],
            &SHORT[..],
        ]
        .concat(),
    );
    assert!(o.status.code() == Some(0) || o.status.code() == Some(1), "{}", stderr(&o));
    let m = manifest(&out);
    let points = m["grid"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 5);
    let skipped: Vec<usize> =
        points.iter().filter(|p| p["status"] == "skipped").map(|p| p["index"].as_u64().unwrap() as usize).collect();
    assert!(skipped.contains(&3) && skipped.contains(&4), "{skipped:?}");
    assert!(!skipped.contains(&0));
    let rows = read_comparison_csv(&std::fs::read_to_string(out.join("sweep.csv")).unwrap()).unwrap();
    let mut seen: Vec<&str> = rows.iter().map(|r| r.get("point").unwrap()).collect();
    seen.dedup();
    assert_eq!(seen, ["0", "1", "2"]);
    assert_eq!(rows[0].get("devices.*.lambda_per_s"), Some("100"));
}

#[test]
fn sweep_over_minislot_count_delays_grow() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nm");
    let src = scenario("acceptance/two_device_no_buffer.scn");
    // keep the second device on the last mini-slot of each geometry
    let mut last = Vec::new();
    for n in [2, 4, 8] {
        let o = msmac(&[
            "sweep",
            src.to_str().unwrap(),
            "--analytic-only",
            "--override",
            &format!("assignment.1.minislot={n}"),
            "--axis",
            &format!("protocol.n_m=[{n}]"),
            "--out",
            out.join(n.to_string()).to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let rows =
            read_comparison_csv(&std::fs::read_to_string(out.join(n.to_string()).join("sweep_analytic.csv")).unwrap())
                .unwrap();
        let row = rows.iter().find(|r| r.get("device") == Some("1")).unwrap();
        last.push(row.num("adf").unwrap());
    }
    assert!(last.windows(2).all(|w| w[1] > w[0]), "{last:?}");
}

#[test]
fn sweep_grid_is_cartesian() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = msmac(&[
        "sweep",
        scenario("mixed_priority.scn").to_str().unwrap(),
        "--analytic-only",
        "--axis",
        "protocol.n_m=[5, 6]",
        "--axis",
        "devices.*.lambda_per_s=linspace(10, 30, 3)",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["grid"]["points"].as_array().unwrap().len(), 6);
    assert_eq!(
        m["grid"]["points"][4]["overrides"],
        serde_json::json!(["protocol.n_m=6", "devices.*.lambda_per_s=20.0"])
    );
}

#[test]
fn help_lists_long_flags() {
    let o = msmac(&["compare", "--help"]);
    let h = stdout(&o);
    for flag in ["--override", "--profile", "--out", "--lenient", "--seed", "--horizon", "--replications", "MSMAC_OUT"]
    {
        assert!(h.contains(flag), "{flag}");
    }
    assert!(stdout(&msmac(&["simulate", "--help"])).contains("--export-log"));
}
