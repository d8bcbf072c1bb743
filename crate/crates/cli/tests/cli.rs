use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hetqrng(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetqrng"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hetqrng(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    hetqrng(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

/// Small run: 2 Mi raw samples in 512 Ki blocks, battery on 1 Mbit chunks.
const SMALL: &[&str] = &[
    "--set",
    "run.raw_samples=2097152",
    "--set",
    "run.block_samples=524288",
    "--set",
    "test.bits=1000000",
];

fn with<'a>(base: &[&'a str], rest: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(rest).copied().collect()
}

#[test]
fn simulate_size_and_determinism() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a.qrb"), d.path().join("b.qrb"));
    let summary = ok(&["simulate", "--out", s(&a)]);
    ok(&["simulate", "--out", s(&b)]);
    assert_eq!(fs::metadata(&a).unwrap().len(), 40_000_000 + 32);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(value(&summary, "clipped_count"), "0");
    assert!(d.path().join("a.qrb.monitor").exists());
}

#[test]
fn validation_errors_exit_2_before_io() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("x.qrb");
    assert_eq!(code(&["simulate", "--set", "lo.power=0", "--out", s(&out)]), 2);
    assert!(!out.exists());
    assert_eq!(code(&["simulate", "--set", "adc.bitz=10", "--out", s(&out)]), 2);
    let cal = d.path().join("cal.txt");
    assert_eq!(code(&["calibrate", "--powers", "4.05e-3", "--out", s(&cal)]), 2);
    assert_eq!(code(&["entropy", "--var-q", "0.5", "--var-p", "0.5"]), 2);
}

#[test]
fn entropy_from_explicit_bins() {
    let unit = ok(&["entropy", "--delta-q", "1", "--delta-p", "1"]);
    assert_eq!(value(&unit, "h_quantum_bound"), "1.651");
    assert!(!unit.contains("h_classical"));
    let reference = ok(&[
        "entropy", "--delta-q", "14.05e-3", "--delta-p", "14.14e-3", "--var-q", "0.5677", "--var-p", "0.5677", "--rate", "1.25e9",
    ]);
    assert_eq!(value(&reference, "h_quantum_bound"), "13.949");
    let rate: f64 = value(&reference, "secure_rate").parse().unwrap();
    assert!((rate / 1e9 - 17.44).abs() < 0.03);
    assert!(value(&reference, "h_classical").starts_with("14.1"));
}

#[test]
fn run_matches_chained_subcommands() {
    let d = tempfile::tempdir().unwrap();
    let run_dir = d.path().join("run");
    let report = ok(&with(SMALL, &["run", "--out-dir", s(&run_dir)]));
    assert_eq!(value(&report, "status"), "pass");
    assert_eq!(value(&report, "certificate.h_quantum_bound"), "13.949");
    let ratio: f64 = value(&report, "extraction.ratio").parse().unwrap();
    assert!((ratio - 0.6926).abs() < 0.002, "{ratio}");
    assert_eq!(value(&report, "filter.excluded_blocks"), "");
    let gap: f64 = value(&report, "band_gap_db").parse().unwrap();
    assert!(gap > 0.0);

    let c = d.path().join("chain");
    fs::create_dir(&c).unwrap();
    let p = |n: &str| c.join(n);
    ok(&with(SMALL, &["simulate", "--out", s(&p("raw.qrb"))]));
    ok(&with(SMALL, &["filter", "--input", s(&p("raw.qrb")), "--out", s(&p("filtered.qrb"))]));
    ok(&with(SMALL, &["entropy", "--input", s(&p("filtered.qrb")), "--out", s(&p("certificate.txt"))]));
    ok(&with(
        SMALL,
        &[
            "extract", "--input", s(&p("filtered.qrb")), "--certificate", s(&p("certificate.txt")), "--out", s(&p("extracted.bin")),
        ],
    ));
    ok(&with(SMALL, &["test", "--input", s(&p("extracted.bin")), "--out", s(&p("tests.txt"))]));
    for f in ["raw.qrb", "raw.qrb.monitor", "filtered.qrb", "certificate.txt", "extracted.bin", "extracted.bin.meta", "tests.txt"] {
        assert_eq!(fs::read(run_dir.join(f)).unwrap(), fs::read(p(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn calibration_report_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let cal = d.path().join("cal.txt");
    let report = ok(&["calibrate", "--samples", "2e5", "--out", s(&cal)]);
    let m1: f64 = value(&report, "m1").parse().unwrap();
    let m1_err: f64 = value(&report, "m1_err").parse().unwrap();
    assert!((m1 - 2.783e-2).abs() < 3.0 * m1_err);
    assert!(report.contains("linearity.ch1.r_squared="));

    let raw = d.path().join("raw.qrb");
    ok(&["simulate", "--set", "run.raw_samples=100000", "--out", s(&raw)]);
    let from_file = ok(&["entropy", "--set", &format!("calibration.file={}", s(&cal)), "--input", s(&raw)]);
    let mut inline = vec!["entropy".to_string()];
    for k in ["m1", "q1", "m2", "q2", "m1_err", "q1_err", "m2_err", "q2_err"] {
        inline.push("--set".into());
        inline.push(format!("calibration.{k}={}", value(&report, k)));
    }
    inline.extend(["--input".into(), s(&raw).into()]);
    let inline: Vec<&str> = inline.iter().map(String::as_str).collect();
    assert_eq!(from_file, ok(&inline));
}

#[test]
fn drifting_blocks_are_excluded_and_listed() {
    let d = tempfile::tempdir().unwrap();
    let report = ok(&with(SMALL, &["--set", "lo.drift_blocks=1,3", "run", "--out-dir", s(d.path())]));
    assert_eq!(value(&report, "filter.excluded_blocks"), "1,3");
}

#[test]
fn spur_without_filter_is_flagged() {
    let d = tempfile::tempdir().unwrap();
    let args = with(
        SMALL,
        &["--set", "dsp.enabled=false", "--set", "noise.spurs=1e9:0.01", "run", "--out-dir", s(d.path())],
    );
    let out = hetqrng(&args);
    let report = String::from_utf8(out.stdout).unwrap();
    assert_eq!(value(&report, "autocorr.flagged"), "true");
    let lag1: f64 = value(&report, "autocorr.lag1").parse().unwrap();
    let threshold: f64 = value(&report, "autocorr.threshold").parse().unwrap();
    assert!(lag1.abs() > threshold, "{lag1} vs {threshold}");

    let clean = ok(&with(SMALL, &["--set", "dsp.enabled=false", "run", "--out-dir", s(d.path())]));
    let lag1: f64 = value(&clean, "autocorr.lag1").parse().unwrap();
    assert!(lag1.abs() < threshold, "{lag1}");
}

#[test]
fn spectrum_and_autocorr_exports() {
    let d = tempfile::tempdir().unwrap();
    let (on, off) = (d.path().join("on.qrb"), d.path().join("off.qrb"));
    ok(&["simulate", "--set", "run.raw_samples=262144", "--out", s(&on)]);
    ok(&["simulate", "--set", "run.raw_samples=262144", "--set", "lo.blocked=true", "--out", s(&off)]);
    let text = ok(&["spectrum", "--input", s(&on), "--lo-off", s(&off), "--segment", "1024"]);
    let gap: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# band_gap_db="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(gap >= 0.0, "{gap}");
    let freqs: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(freqs.len(), 513);
    assert!(freqs.windows(2).all(|w| w[1] > w[0]));

    let ac = ok(&["autocorr", "--input", s(&on), "--max-lag", "10"]);
    assert_eq!(ac.lines().filter(|l| !l.starts_with('#')).count(), 11);
    assert_eq!(code(&["autocorr", "--input", s(&on), "--max-lag", "131072"]), 2);
    assert_eq!(code(&["autocorr", "--input", s(&d.path().join("missing.qrb"))]), 3);
}

#[test]
fn failing_battery_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let bits = d.path().join("zeros.bin");
    fs::write(&bits, vec![0u8; 125_000]).unwrap();
    let out = hetqrng(&["test", "--input", s(&bits)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stdout).unwrap().contains("passed 0/8"));
}

#[test]
fn config_round_trips_through_file() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    let text = ok(&["--set", "adc.bits=12", "config"]);
    fs::write(&cfg, &text).unwrap();
    assert_eq!(ok(&["--config", s(&cfg), "config"]), text);
    assert_eq!(value(&text, "adc.bits"), "12");
}
