use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fxcheck_cli::report::{Outcome, Report};
use fxcheck_core::fixtures::NAMES;
use fxcheck_core::response::CSV_HEADER;
use tempfile::TempDir;

const FORMATS: [&str; 5] = ["1,3", "1,5", "4,10", "7,6", "4,16"];

fn fxcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxcheck"))
        .args(args)
        .env_remove("FXCHECK_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn fixture_job(dir: &Path, name: &str, format: &str) -> PathBuf {
    let out = fxcheck(&["fixture", name, "--format", format]);
    assert_eq!(code(&out), 0);
    write(
        dir,
        &format!("{name}-{format}.json"),
        &String::from_utf8(out.stdout).unwrap(),
    )
}

fn verify_json(job: &Path, extra: &[&str]) -> (i32, String) {
    let mut args = vec!["verify", "--job", job.to_str().unwrap(), "--json", "--no-timing"];
    args.extend_from_slice(extra);
    let out = fxcheck(&args);
    (code(&out), String::from_utf8(out.stdout).unwrap())
}

fn job_text(filter: &str, spec: &str, format: &str) -> String {
    format!(r#"{{"schema_version": 1, "filter": {filter}, "spec": {spec}, "fixedpoint": {{"format": "{format}"}}}}"#)
}

const LP_SPEC: &str = r#"{"kind": "lowpass", "wp_hz": 2000, "wr_hz": 20000, "ap_db": -3, "ar_db": -20}"#;

#[test]
fn exit_codes_follow_the_report_across_fixtures() {
    let dir = TempDir::new().unwrap();
    for name in NAMES {
        for format in FORMATS {
            let job = fixture_job(dir.path(), name, format);
            let (exit, json) = verify_json(&job, &[]);
            let report = Report::from_json(&json).unwrap();
            let outcomes: Vec<Outcome> = report.passes.outcomes().into_iter().map(|(_, o)| o).collect();
            let expected = if outcomes.contains(&Outcome::Violation) {
                1
            } else if outcomes
                .iter()
                .any(|o| matches!(o, Outcome::Indeterminate | Outcome::Skipped))
            {
                3
            } else {
                0
            };
            assert_eq!(exit, expected, "{name} {format}");
            assert_eq!(report.summary.exit_code, exit);
        }
    }
}

#[test]
fn known_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("fir_ma4", "1,5", 0),
        ("fir_sum2", "1,5", 1),
        ("lp8", "7,6", 1),
        ("lp2", "1,3", 1),
    ];
    for (name, format, want) in cases {
        let job = fixture_job(dir.path(), name, format);
        assert_eq!(verify_json(&job, &[]).0, want, "{name} {format}");
    }
    // magnitude alone on a compliant lowpass
    let job = fixture_job(dir.path(), "lp2", "1,5");
    assert_eq!(verify_json(&job, &["--passes", "stability,magnitude,phase"]).0, 0);
}

#[test]
fn unstable_filter_skips_response_passes() {
    let dir = TempDir::new().unwrap();
    let job = write(
        dir.path(),
        "unstable.json",
        &job_text(r#"{"b": [1.0], "a": [1.0, -1.5], "fs_hz": 48000}"#, LP_SPEC, "1,5"),
    );
    let (exit, json) = verify_json(&job, &[]);
    assert_eq!(exit, 1);
    let report = Report::from_json(&json).unwrap();
    let mag = report.passes.magnitude.unwrap();
    assert_eq!(mag.outcome, Outcome::Skipped);
    assert!(mag.reason.unwrap().contains("unstable"));
    assert_eq!(report.passes.stability.unwrap().outcome, Outcome::Violation);
}

#[test]
fn marginal_stability_is_indeterminate() {
    let dir = TempDir::new().unwrap();
    let job = write(
        dir.path(),
        "marginal.json",
        &job_text(r#"{"b": [0.5], "a": [1.0, -1.0], "fs_hz": 48000}"#, LP_SPEC, "1,5"),
    );
    let (exit, json) = verify_json(&job, &["--passes", "stability,magnitude"]);
    assert_eq!(exit, 3);
    let report = Report::from_json(&json).unwrap();
    assert_eq!(report.passes.stability.unwrap().outcome, Outcome::Indeterminate);
    assert_eq!(report.passes.magnitude.unwrap().outcome, Outcome::Skipped);
    // a violation elsewhere takes precedence
    assert_eq!(verify_json(&job, &[]).0, 1);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let good_filter = r#"{"b": [0.5, 0.5], "a": [1.0], "fs_hz": 48000}"#;
    let missing_spec = write(d, "missing.json", &job_text(good_filter, r#""nope.json""#, "1,5"));
    let malformed = write(d, "malformed.json", "{ not json");
    let bad_field = write(
        d,
        "field.json",
        &job_text(good_filter, LP_SPEC, "1,5").replace("\"b\"", "\"bb\""),
    );
    let inverted = write(
        d,
        "inverted.json",
        &job_text(good_filter, &LP_SPEC.replace("-3", "-80").replace("-20", "-1"), "1,5"),
    );
    let iir = write(
        d,
        "iir.json",
        &job_text(r#"{"b": [0.5], "a": [1.0, -0.5], "fs_hz": 48000}"#, LP_SPEC, "1,5"),
    );
    let ok = write(d, "ok.json", &job_text(good_filter, LP_SPEC, "1,5"));

    for job in [&missing_spec, &malformed, &bad_field, &inverted] {
        let out = fxcheck(&["verify", "--job", job.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{}", job.display());
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
    let no_job = d.join("absent.json");
    assert_eq!(code(&fxcheck(&["verify", "--job", no_job.to_str().unwrap()])), 2);
    assert_eq!(
        code(&fxcheck(&[
            "verify",
            "--job",
            iir.to_str().unwrap(),
            "--strategy",
            "analytic"
        ])),
        2
    );
    assert_eq!(
        code(&fxcheck(&["verify", "--job", ok.to_str().unwrap(), "--format", "x"])),
        2
    );
    assert_eq!(
        code(&fxcheck(&[
            "verify",
            "--job",
            ok.to_str().unwrap(),
            "--passes",
            "timing"
        ])),
        2
    );
    assert_eq!(code(&fxcheck(&["verify"])), 2);
    assert_eq!(code(&fxcheck(&["fixture", "nope"])), 2);

    let bad_seed = Command::new(env!("CARGO_BIN_EXE_fxcheck"))
        .args(["verify", "--job", ok.to_str().unwrap()])
        .env("FXCHECK_SEED", "-1")
        .output()
        .unwrap();
    assert_eq!(code(&bad_seed), 2);
}

#[test]
fn error_messages_name_the_field() {
    let dir = TempDir::new().unwrap();
    let job = write(
        dir.path(),
        "j.json",
        &job_text(r#"{"b": [0.5, "x"], "a": [1.0], "fs_hz": 48000}"#, LP_SPEC, "1,5"),
    );
    let out = fxcheck(&["verify", "--job", job.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("filter.b[1]"));
}

#[test]
fn reports_are_deterministic_and_round_trip() {
    let dir = TempDir::new().unwrap();
    for name in ["lp2", "bp4", "fir_hann10"] {
        let job = fixture_job(dir.path(), name, "1,5");
        let (_, first) = verify_json(&job, &[]);
        let (_, second) = verify_json(&job, &[]);
        assert_eq!(first, second, "{name}");
        let report = Report::from_json(&first).unwrap();
        assert_eq!(report.to_json(), first);
    }
    // wall times are the only varying part
    let job = fixture_job(dir.path(), "lp8", "4,10");
    let timed = |_: ()| {
        let out = fxcheck(&["verify", "--job", job.to_str().unwrap(), "--json"]);
        Report::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };
    let (a, b) = (timed(()), timed(()));
    assert!(a.timing.is_some());
    assert_eq!(a.without_timing().to_json(), b.without_timing().to_json());
}

#[test]
fn seed_changes_only_the_echo_for_complete_searches() {
    let dir = TempDir::new().unwrap();
    let job = fixture_job(dir.path(), "fir_sum2", "1,5");
    let (_, a) = verify_json(&job, &["--seed", "1"]);
    let (_, b) = verify_json(&job, &["--seed", "2"]);
    let (ra, rb) = (Report::from_json(&a).unwrap(), Report::from_json(&b).unwrap());
    assert_eq!((ra.environment.seed, rb.environment.seed), (1, 2));
    assert_eq!(ra.passes, rb.passes);

    let env = Command::new(env!("CARGO_BIN_EXE_fxcheck"))
        .args(["verify", "--job", job.to_str().unwrap(), "--json", "--no-timing"])
        .env("FXCHECK_SEED", "77")
        .output()
        .unwrap();
    let r = Report::from_json(&String::from_utf8(env.stdout).unwrap()).unwrap();
    assert_eq!(r.environment.seed, 77);
}

#[test]
fn report_file_matches_stdout() {
    let dir = TempDir::new().unwrap();
    let job = fixture_job(dir.path(), "hp2", "1,5");
    let path = dir.path().join("report.json");
    let (_, json) = verify_json(&job, &["--report", path.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(&path).unwrap(), json);
}

#[test]
fn csv_has_the_half_grid() {
    let dir = TempDir::new().unwrap();
    let job = fixture_job(dir.path(), "lp2", "1,5");
    let csv = dir.path().join("r.csv");
    let out = fxcheck(&[
        "verify",
        "--job",
        job.to_str().unwrap(),
        "--grid",
        "256",
        "--emit-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 129);
    assert!(lines[1].starts_with("0,0,"));
    assert!(lines[129].starts_with("128,24000,"));
}

#[test]
fn identity_filter_csv_is_flat() {
    let dir = TempDir::new().unwrap();
    let job = write(
        dir.path(),
        "id.json",
        &job_text(r#"{"b": [1.0], "a": [1.0], "fs_hz": 48000}"#, LP_SPEC, "1,5"),
    );
    let csv = dir.path().join("id.csv");
    let out = fxcheck(&[
        "verify",
        "--job",
        job.to_str().unwrap(),
        "--emit-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1, "an identity filter has no stopband");
    let text = fs::read_to_string(&csv).unwrap();
    for row in text.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(text.lines().count(), 1 + 513);
}

#[test]
fn csv_requires_the_magnitude_pass() {
    let dir = TempDir::new().unwrap();
    let job = fixture_job(dir.path(), "lp2", "1,5");
    let csv = dir.path().join("r.csv");
    let out = fxcheck(&[
        "verify",
        "--job",
        job.to_str().unwrap(),
        "--passes",
        "overflow",
        "--emit-csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2);
    assert!(!csv.exists());
}

#[test]
fn text_summary_lists_each_pass() {
    let dir = TempDir::new().unwrap();
    let job = fixture_job(dir.path(), "lp2", "1,3");
    let out = fxcheck(&["verify", "--job", job.to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in [
        "stability  S",
        "magnitude  FC",
        "phase      S",
        "overflow   F",
        "result: violation (exit 1)",
    ] {
        assert!(text.contains(needle), "missing {needle:?} in\n{text}");
    }
}

#[test]
fn fixture_list_names_everything() {
    let out = fxcheck(&["fixture", "--list"]);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in NAMES {
        assert!(text.lines().any(|l| l.starts_with(name)));
    }
}
