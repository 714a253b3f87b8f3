//! End-to-end runs of the `lplmac` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lplmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lplmac"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = lplmac(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Data rows of a CSV: comment lines dropped, header split off.
fn table(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn analytic_bmac_is_linear() {
    let total = |b: &str| {
        let (h, rows) = table(&ok(&["analytic", "--protocol", "bmac", "--buffer", b]));
        assert_eq!(rows.len(), 1);
        rows[0][col(&h, "total_J")].parse::<f64>().unwrap()
    };
    assert!((total("3") - 3.0 * total("1")).abs() < 2e-9);
}

#[test]
fn analytic_cases_list_the_tree() {
    let (h, rows) = table(&ok(&[
        "analytic",
        "--protocol",
        "xmac",
        "--buffer",
        "1",
        "--cases",
    ]));
    let leaves: Vec<_> = rows
        .iter()
        .filter(|r| r[col(&h, "item")] != "expected")
        .collect();
    assert_eq!(leaves.len(), 9);
    let mass: f64 = leaves
        .iter()
        .map(|r| r[col(&h, "probability")].parse::<f64>().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-9);
}

#[test]
fn analytic_beyond_model_names_the_flag() {
    let out = lplmac(&["analytic", "--protocol", "xmac", "--buffer", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--extrapolate"));
    let (h, rows) = table(&ok(&[
        "analytic",
        "--protocol",
        "xmac",
        "--buffer",
        "5",
        "--extrapolate",
    ]));
    assert_eq!(rows[0][col(&h, "extrapolated")], "true");
}

#[test]
fn simulate_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let d = dir.path().to_str().unwrap();
        ok(&[
            "simulate",
            "--protocol",
            "lamac",
            "--buffer",
            "6",
            "--runs",
            "8",
            "--seed",
            "4",
            "--out",
            d,
            "--dump-trace",
        ]);
    }
    for name in [
        "simulate.csv",
        "trace_intervals.csv",
        "trace_transmissions.csv",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
    let (h, _) = table(&read(a.path(), "trace_intervals.csv"));
    assert_eq!(h, ["node", "state", "start", "end"]);
    let (h, _) = table(&read(a.path(), "trace_transmissions.csv"));
    assert_eq!(h, ["sender", "kind", "dest", "start", "end", "outcome"]);
}

#[test]
fn idle_simulation_has_zero_width_interval() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "simulate",
        "--protocol",
        "xmac",
        "--buffer",
        "0",
        "--runs",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let (h, rows) = table(&read(dir.path(), "simulate.csv"));
    let ci = rows.iter().find(|r| r[col(&h, "run")] == "ci95").unwrap();
    assert_eq!(ci[col(&h, "net_J")].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn compare_writes_stable_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let listed = ok(&[
        "compare",
        "--buffer-range",
        "1..3",
        "--runs",
        "4",
        "--out",
        d,
    ]);
    assert_eq!(listed.lines().count(), 4);
    let text = read(dir.path(), "energy_compare.csv");
    let mut comments = text.lines().take_while(|l| l.starts_with('#'));
    assert!(comments.next().unwrap().starts_with("# lplmac "));
    assert!(comments.next().unwrap().starts_with("# config_sha256 "));
    assert_eq!(comments.next().unwrap(), "# seed 1");
    assert!(text.ends_with('\n'));
    let (h, rows) = table(&text);
    assert_eq!(
        h,
        [
            "protocol",
            "B",
            "analytic_J",
            "sim_mean_J",
            "sim_ci_J",
            "rel_gap",
            "extrapolated"
        ]
    );
    assert_eq!(rows.len(), 9);
    let lamac3 = rows
        .iter()
        .find(|r| r[0] == "lamac" && r[1] == "3")
        .unwrap();
    assert_eq!(lamac3[2], "");
    let lamac2 = rows
        .iter()
        .find(|r| r[0] == "lamac" && r[1] == "2")
        .unwrap();
    assert!(!lamac2[2].is_empty());
    for name in ["latency.csv", "delivery.csv", "states.csv"] {
        assert_eq!(table(&read(dir.path(), name)).1.len(), 9, "{name}");
    }
}

#[test]
fn compare_extrapolates_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&[
        "compare",
        "--protocol",
        "lamac",
        "--buffer",
        "3",
        "--runs",
        "3",
        "--extrapolate",
        "--out",
        d,
    ]);
    let (_, rows) = table(&read(dir.path(), "energy_compare.csv"));
    assert_eq!(rows.len(), 1);
    assert!(!rows[0][2].is_empty());
    assert_eq!(rows[0][6], "true");
}

#[test]
fn idle_states_match_the_duty_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["states", "--buffer", "0", "--runs", "3", "--out", d]);
    let (h, rows) = table(&read(dir.path(), "states.csv"));
    assert_eq!(
        h,
        [
            "protocol",
            "B",
            "tx_share",
            "rx_share",
            "poll_share",
            "sleep_share"
        ]
    );
    for r in rows {
        let v: Vec<f64> = r[2..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(
            (v[2] - 0.1).abs() < 1e-9 && (v[3] - 0.9).abs() < 1e-9,
            "{r:?}"
        );
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn config_file_changes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("slow.conf");
    fs::write(
        &path,
        "# longer frame\nt_listen_ms = 50\nt_sleep_ms = 450\nn_devices = 4\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let with = ok(&[
        "--config",
        p,
        "analytic",
        "--protocol",
        "lamac",
        "--buffer",
        "1",
    ]);
    let without = ok(&["analytic", "--protocol", "lamac", "--buffer", "1"]);
    assert_ne!(table(&with).1, table(&without).1);
    assert_ne!(with.lines().nth(1), without.lines().nth(1), "hash line");

    fs::write(&path, "t_frame_ms = 300\n").unwrap();
    let out = lplmac(&["--config", p, "analytic", "--protocol", "bmac"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("frame identity"));
}

#[test]
fn bad_arguments_are_rejected() {
    for args in [
        &["compare", "--buffer-range", "5..2"][..],
        &["compare", "--runs", "1"],
        &["simulate", "--protocol", "tmac"],
        &["compare", "--buffer-range", "x"],
    ] {
        assert!(!lplmac(args).status.success(), "{args:?}");
    }
}
