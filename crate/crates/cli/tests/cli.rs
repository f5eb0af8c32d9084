use std::path::Path;
use std::process::{Command, Output};

use latentfire::io::{write_tensor, write_wav_pcm16};
use latentfire::signal::AudioClip;
use latentfire::tensor::DenseTensor;
use serde_json::Value;

fn latentfire(args: &[&str], dir: &Path) -> Output {
    latentfire_with(args, dir, &[])
}

fn latentfire_with(args: &[&str], dir: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_latentfire"));
    cmd.args(args).current_dir(dir).env_remove("LATENTFIRE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Rank-2 product of sparse factors, 20 × 30.
fn planted(dir: &Path) {
    let w = |i: usize, s: usize| if (i + s) % 3 == 0 { 0.0 } else { 1.0 + ((i * 7 + s * 3) % 5) as f64 };
    let h = |s: usize, j: usize| if (j + 2 * s) % 4 == 0 { 0.0 } else { 0.5 + ((j * 5 + s) % 7) as f64 };
    let x = DenseTensor::from_fn(&[20, 30], |i| (0..2).map(|s| w(i[0], s) * h(s, i[1])).sum()).unwrap();
    write_tensor(&dir.join("x.ften"), &x).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SELECT_K: [&str; 15] = [
    "select-k", "--input", "x.ften", "--k-min", "1", "--k-max", "4", "--replicas", "10", "--epsilon", "0.02",
    "--seed", "7", "--out", "report.json",
];

#[test]
fn select_k_writes_report_and_companions() {
    let dir = tempfile::tempdir().unwrap();
    planted(dir.path());
    let o = latentfire(&SELECT_K, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report = read_json(&dir.path().join("report.json"));
    assert!(report.get("selected_k").is_some());
    assert_eq!(report["records"].as_array().unwrap().len(), 4);
    for f in ["report.manifest.json", "report.selection.csv", "report.selection.svg"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let manifest = read_json(&dir.path().join("report.manifest.json"));
    assert_eq!(manifest["command"], "select-k");
    assert_eq!(manifest["master_seed"], 7);
    assert_eq!(manifest["input_digests"].as_object().unwrap().len(), 1);
}

#[test]
fn worker_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    planted(dir.path());
    let mut outputs = Vec::new();
    for threads in ["1", "2", "8"] {
        let mut args = SELECT_K.to_vec();
        let out = format!("r{threads}.json");
        *args.last_mut().unwrap() = &out;
        let o = latentfire_with(&args, dir.path(), &[("LATENTFIRE_THREADS", threads)]);
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push(std::fs::read(dir.path().join(&out)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn manifest_replay_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    planted(dir.path());
    let o = latentfire(
        &["nmf", "--input", "x.ften", "--k", "2", "--loss", "frobenius", "--max-iters", "200", "--seed", "3", "--out", "a.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = latentfire(&["nmf", "--manifest", "a.manifest.json", "--out", "b.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for suffix in ["json", "W.csv", "H.csv"] {
        let a = std::fs::read(dir.path().join(format!("a.{suffix}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b.{suffix}"))).unwrap();
        assert_eq!(a, b, "{suffix} differs");
    }
}

#[test]
fn manifest_of_another_command_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    planted(dir.path());
    let o = latentfire(&["nmf", "--input", "x.ften", "--k", "1", "--seed", "1", "--out", "a.json"], dir.path());
    assert!(o.status.success());
    let o = latentfire(&["cpd", "--manifest", "a.manifest.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_one_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = latentfire(&["nmf", "--input", "nope.ften", "--k", "2", "--seed", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.ften"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = latentfire(&["nmf", "--bogus"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bogus"));
    let o = latentfire(&["nmf", "--input", "x.ften", "--k", "2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
    let o = latentfire_with(
        &["oracle", "kl", "--a", "a", "--b", "b"],
        dir.path(),
        &[("LATENTFIRE_THREADS", "many")],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_kl_prints_value() {
    let dir = tempfile::tempdir().unwrap();
    write_tensor(&dir.path().join("a.ften"), &DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
    write_tensor(&dir.path().join("b.ften"), &DenseTensor::new(vec![2], vec![2.0, 1.0]).unwrap()).unwrap();
    let o = latentfire(&["oracle", "kl", "--a", "a.ften", "--b", "b.ften"], dir.path());
    assert!(o.status.success());
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn oracle_unfold_matches_layout() {
    let dir = tempfile::tempdir().unwrap();
    let x = DenseTensor::new(vec![2, 2, 2], (0..8).map(f64::from).collect()).unwrap();
    write_tensor(&dir.path().join("x.ften"), &x).unwrap();
    let o = latentfire(&["oracle", "unfold", "--input", "x.ften", "--mode", "1"], dir.path());
    assert!(o.status.success());
    let rows: Vec<Vec<f64>> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows, vec![vec![0.0, 1.0, 4.0, 5.0], vec![2.0, 3.0, 6.0, 7.0]]);
}

#[test]
fn tensor_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let x = DenseTensor::from_fn(&[4, 3, 5], |i| (1 + i[0]) as f64 * (2 + i[1]) as f64 * (1 + i[2] % 2) as f64).unwrap();
    write_tensor(&dir.path().join("t.ften"), &x).unwrap();
    let o = latentfire(&["cpd", "--input", "t.ften", "--rank", "1", "--seed", "1", "--out", "cpd.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(read_json(&dir.path().join("cpd.json"))["relative_error"].as_f64().unwrap() < 1e-3);
    let o = latentfire(&["tucker", "--input", "t.ften", "--ranks", "1,1,1", "--seed", "1", "--out", "tk.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("tk.core.ften").exists());
    let o = latentfire(&["tt", "--input", "t.ften", "--ranks", "1,1", "--seed", "1", "--out", "tt.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("tt.core2.ften").exists());
    let o = latentfire(&["salient", "--input", "t.ften", "--k", "1", "--seed", "1", "--out", "s.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("s.json"))["salient_timesteps"], serde_json::json!([3]));
}

#[test]
fn anomaly_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let clip = AudioClip::new(vec![0.0; 8000], 8000).unwrap();
    write_wav_pcm16(&dir.path().join("silence.wav"), &clip).unwrap();
    let o = latentfire(
        &["audio-anomaly", "--input", "silence.wav", "--k", "2", "--seed", "1", "--out", "a.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("a.json"))["events"], serde_json::json!([]));

    let v = DenseTensor::from_fn(&[64, 8, 8], |_| 1.0).unwrap();
    write_tensor(&dir.path().join("v.ften"), &v).unwrap();
    let o = latentfire(
        &["video-anomaly", "--input", "v.ften", "--channels", "full", "--seed", "1", "--out", "v.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(&dir.path().join("v.json"))["events"], serde_json::json!([]));
    assert!(dir.path().join("v.events.svg").exists());
}
