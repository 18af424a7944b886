use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qctf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qctf"))
        .args(args)
        .env_remove("QCTF_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_bounded_trace_and_overlay() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = qctf(&[
        "simulate", "--n", "6", "--j", "1", "--w", "10", "--seed", "1", "--site", "3", "--tmax", "40", "--dt", "0.01",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let q = csv_column(&out.join("trace.csv"), 1);
    assert_eq!(q.len(), 4001);
    assert!(q.iter().all(|&x| (-1e-12..=0.25 + 1e-12).contains(&x)));

    let overlay = fs::read_to_string(out.join("overlay.csv")).unwrap();
    let m = manifest(&out);
    assert!(stdout(&o).contains(&format!("{} predicted lines", overlay.lines().count() - 1)));
    let listed: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap()).collect();
    assert_eq!(listed, ["fields.csv", "overlay.csv", "spectrum.csv", "trace.csv"]);
    assert_eq!(m["seed"], 1);
}

#[test]
fn clean_zero_coupling_chain_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = qctf(&["simulate", "--w", "0", "--j", "0", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = qctf(&["simulate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qctf(&["eigen", "--n", "6", "--site", "9", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn qctf_cross_check_passes_and_fails_by_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("q");
    let o = qctf(&["qctf", "--n", "4", "--seed", "2", "--site", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["max_deviation"].as_f64().unwrap() <= 1e-8);
    assert!(stdout(&o).contains("max |inverse-Laplace − trace|"));

    // pruning everything breaks the contract
    let o = qctf(&["qctf", "--n", "4", "--seed", "2", "--site", "2", "--prune", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn amplitude_table_starts_at_floor() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = qctf(&["pdf", "--kind", "amplitude", "--j", "1", "--w", "10", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let x = csv_column(&out.join("pdf_amplitude.csv"), 0);
    assert!((x[0] - 0.00125).abs() < 1e-15);
}

#[test]
fn critical_table_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = qctf(&["critical", "--order", "2", "--wj", "10", "--samples", "1e6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let formula = csv_column(&out.join("critical.csv"), 2);
    let mc = csv_column(&out.join("critical.csv"), 5);
    let se = csv_column(&out.join("critical.csv"), 6);
    assert!((formula[0] - 0.0599).abs() < 5e-5);
    assert!(mc[0] > 0.0 && se[0] > 0.0 && se[0] < 1e-3);
}

#[test]
fn eigen_lists_every_state() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let o = qctf(&["eigen", "--n", "5", "--site", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let q = csv_column(&out.join("eigen.csv"), 2);
    assert_eq!(q.len(), 32);
    assert!(q.iter().all(|&x| (0.0..=0.25 + 1e-12).contains(&x)));
}

#[test]
fn ensemble_directory_and_thread_independence() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = qctf(&[
            "ensemble", "--n", "6", "--site", "1", "--realizations", "500", "--seed", "4", "--threads", threads,
            "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "4");
    for f in ["samples.csv", "report.json", "histograms/frequency.csv", "checksums.sha256"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = qctf(&["ensemble", "--site", "2", "--realizations", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_and_env_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    fs::write(&conf, "# small chain\nn = 4\nsite = 2\nseed = 9\n").unwrap();
    let out = tmp.path().join("envout");
    let o = Command::new(env!("CARGO_BIN_EXE_qctf"))
        .args(["predict", "--config", conf.to_str().unwrap(), "--seed", "3"])
        .env("QCTF_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["chain"]["n"], 4);
    assert_eq!(m["config"]["chain"]["site"], 2);
    // flags beat the file
    assert_eq!(m["seed"], 3);
    let fields = csv_column(&out.join("fields.csv"), 1);
    assert_eq!(fields.len(), 4);
}

#[test]
fn replay_reproduces_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let o = qctf(&["eigen", "--n", "4", "--seed", "5", "--site", "2", "--out", first.to_str().unwrap()]);
    assert!(o.status.success());
    let second = tmp.path().join("second");
    let o = qctf(&[
        "replay",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&first)["outputs"], manifest(&second)["outputs"]);
}
