//! End-to-end runs of the `gated-isp` binary: exit codes, report schema and
//! the main file round trips.

use std::path::Path;
use std::process::{Command, Output};

use gated_isp::checkpoint::Checkpoint;
use gated_isp::data::{load_png, save_pair_dir, save_png, synth_generate, SyntheticConfig};
use gated_isp::{init_network, ModelConfig, Shape, Tensor};
use serde_json::{json, Value};

fn run(args: &[&str]) -> (i32, Value, Output) {
    let out = Command::new(env!("CARGO_BIN_EXE_gated-isp")).args(args).output().unwrap();
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap_or(-1), report, out)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_pairs(dir: &Path, count: usize, size: usize, seed: u64) {
    let pairs = synth_generate(&SyntheticConfig {
        count,
        size,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap();
    save_pair_dir(&pairs, dir).unwrap();
}

#[test]
fn report_lists_param_counts() {
    let (code, r, _) = run(&["report", "--width", "8"]);
    assert_eq!(code, 0);
    assert_eq!(r["schema_version"], "1.0");
    assert_eq!(r["command"], "report");
    assert_eq!(r["status"], "ok");
    for c in ["8", "16", "24", "32", "64"] {
        assert!(r["metrics"]["param_counts"][c]["params"].as_u64().unwrap() > 0, "{c}");
    }
    let ratio = r["metrics"]["ratios"]["32/16"].as_f64().unwrap();
    assert!((3.5..=4.5).contains(&ratio));
}

#[test]
fn usage_and_data_errors_have_their_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    // no data source
    let (code, r, _) = run(&["train", "--out", p(&ckpt)]);
    assert_eq!(code, 2);
    assert_eq!(r["status"], "error");
    assert_eq!(r["error"]["class"], "usage");
    // unknown config key, reported by path
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"train": {"epochz": 3}}"#).unwrap();
    let (code, r, _) = run(&["train", "--synthetic", "--config", p(&cfg), "--out", p(&ckpt)]);
    assert_eq!(code, 2);
    assert!(r["error"]["message"].as_str().unwrap().contains("train.epochz"));
    // missing checkpoint and missing image
    let (code, _, _) = run(&["infer", "--checkpoint", p(&ckpt), "--input", "nope.png", "--output", "o.png"]);
    assert_eq!(code, 3);
    // clap rejects an unknown subcommand with its own usage code
    let (code, _, _) = run(&["frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn gradcheck_passes_and_a_fault_is_numeric_failure() {
    let (code, r, _) = run(&["gradcheck", "--width", "2", "--samples", "4"]);
    assert_eq!(code, 0, "{r}");
    assert!(r["metrics"]["max_rel_error"].as_f64().unwrap() < 1e-3);
    let (code, r, _) = run(&["gradcheck", "--width", "2", "--samples", "4", "--fault", "tanh"]);
    assert_eq!(code, 4);
    assert_eq!(r["status"], "failed");
}

#[test]
fn zero_head_checkpoint_infers_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = init_network::<f32>(&ModelConfig::with_width(2), 1).unwrap();
    net.zero_head();
    let ckpt = dir.path().join("zero.ckpt");
    Checkpoint::Fp32 { net, meta: json!({}) }.save(&ckpt).unwrap();
    // odd size exercises padding and cropping
    let s = Shape::new(1, 3, 21, 19);
    let x = Tensor::from_vec(s, (0..s.numel()).map(|i| (i * 37 % 256) as f32 / 255.0).collect()).unwrap();
    let input = dir.path().join("in.png");
    let output = dir.path().join("out.png");
    save_png(&x, &input).unwrap();
    let (code, r, _) = run(&["infer", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&output)]);
    assert_eq!(code, 0, "{r}");
    let (a, b) = (load_png(&input).unwrap(), load_png(&output).unwrap());
    assert_eq!(a.shape(), b.shape());
    assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 1.0 / 255.0 + 1e-6));
}

#[test]
fn train_convert_eval_on_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("pairs");
    small_pairs(&data, 4, 32, 3);
    let fp32 = dir.path().join("fp32.ckpt");
    let int8 = dir.path().join("int8.ckpt");
    let (code, r, _) = run(&[
        "train", "--data", p(&data), "--out", p(&fp32), "--epochs", "2", "--width", "2", "--batch-size", "2",
    ]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["metrics"]["steps"], 4);
    assert_eq!(r["config"]["model"]["base_width"], 2);

    let (code, _, _) = run(&["convert", "--checkpoint", p(&fp32), "--mode", "ptq", "--out", p(&int8)]);
    assert_eq!(code, 2, "ptq needs calibration data");
    let (code, r, _) = run(&[
        "convert", "--checkpoint", p(&fp32), "--mode", "ptq", "--calib", p(&data), "--eval", p(&data), "--out",
        p(&int8),
    ]);
    assert_eq!(code, 0, "{r}");
    assert!(r["metrics"]["int8"]["psnr"].as_f64().unwrap().is_finite());

    let (code, r, _) = run(&["eval", "--checkpoint", p(&int8), "--data", p(&data)]);
    assert_eq!(code, 0, "{r}");
    let model = r["metrics"]["model"]["psnr"].as_f64().unwrap();
    assert!(model > 0.0);
}

#[test]
fn zero_epochs_still_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let report = dir.path().join("r.json");
    let (code, r, _) = run(&[
        "--report", p(&report), "train", "--synthetic", "--epochs", "0", "--width", "2", "--out", p(&ckpt),
    ]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["metrics"]["steps"], 0);
    let ck = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(ck.model_config().base_width, 2);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, r);
}
