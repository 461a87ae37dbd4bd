use std::ffi::OsStr;
use std::path::Path;
use std::process::{Command, Output};

use posestar::tensorio::{read_attention_stack, read_mask_png, write_attention_stack, AttentionStack};
use posestar::Grid;

fn posestar<A: AsRef<OsStr>>(args: &[A]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posestar"))
        .args(args)
        .env("POSESTAR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, pose: &str, seed: &str, instruction: &str) {
    let out = posestar(&[
        "synth",
        "--pose",
        pose,
        "--seed",
        seed,
        "--out-dir",
        dir.to_str().unwrap(),
        "--instruction",
        instruction,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn generate_args<'a>(dir: &'a str, attn: &'a str, out: &'a str) -> Vec<String> {
    vec![
        "generate".into(),
        "--image".into(),
        format!("{dir}/image.png"),
        "--attn".into(),
        attn.into(),
        "--self-attn".into(),
        format!("{dir}/self.astd"),
        "--keypoints".into(),
        format!("{dir}/keypoints.json"),
        "--instruction".into(),
        "belly-length blouse".into(),
        "--out".into(),
        out.into(),
    ]
}

#[test]
fn synth_writes_a_complete_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("s7");
    synth(&dir, "standing", "7", "belly-length blouse");
    for f in ["image.png", "attn.astd", "self.astd", "keypoints.json", "gt_belly-length_blouse.png"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let again = tmp.path().join("again");
    synth(&again, "standing", "7", "belly-length blouse");
    for f in ["image.png", "attn.astd", "self.astd", "keypoints.json"] {
        assert_eq!(std::fs::read(dir.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn generate_writes_mask_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fx");
    synth(&dir, "standing", "3", "belly-length blouse");
    let d = dir.to_str().unwrap();
    let mask = tmp.path().join("mask.png");
    let mut args = generate_args(d, &format!("{d}/attn.astd"), mask.to_str().unwrap());
    args.extend(["--gt".into(), format!("{d}/gt_belly-length_blouse.png"), "--window".into(), "3".into()]);
    let out = posestar(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let iou = report["iou"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&iou));
    assert!(report["timings_ms"]["total"].as_f64().unwrap() >= 0.0);
    let m = read_mask_png(&mask).unwrap();
    assert_eq!(m.dims(), (256, 256));
    assert!(m.count() > 0);
}

#[test]
fn input_errors_exit_with_two() {
    let out = posestar(&generate_args("/nonexistent", "/nonexistent/attn.astd", "/tmp/unused.png"));
    assert_eq!(out.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fx");
    synth(&dir, "seated", "1", "belly-length blouse");
    let d = dir.to_str().unwrap();
    let mut args = generate_args(d, &format!("{d}/attn.astd"), "/tmp/unused.png");
    args.extend(["--alpha".into(), "1.5".into()]);
    assert_eq!(posestar(&args).status.code(), Some(2));

    assert_eq!(posestar(&["synth", "--pose", "lying", "--out-dir", d]).status.code(), Some(2));
}

#[test]
fn all_zero_attention_is_a_pipeline_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fx");
    synth(&dir, "standing", "2", "belly-length blouse");
    let d = dir.to_str().unwrap();
    let real = read_attention_stack(dir.join("attn.astd")).unwrap();
    let zero = vec![vec![Grid::<f32>::zeros(16, 16); real.tokens()]; real.steps()];
    let stack = AttentionStack::from_maps(real.token_names().to_vec(), real.token_kinds().to_vec(), &zero).unwrap();
    let zpath = tmp.path().join("zero.astd");
    write_attention_stack(&stack, &zpath).unwrap();
    let out = posestar(&generate_args(d, zpath.to_str().unwrap(), tmp.path().join("m.png").to_str().unwrap()));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_writes_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    synth(&tmp.path().join("a"), "standing", "4", "belly-length blouse");
    synth(&tmp.path().join("b"), "articulated", "5", "knee-length skirt");
    let grid = tmp.path().join("grid.json");
    std::fs::write(&grid, r#"{"r_mode": ["min", "average", "max"]}"#).unwrap();
    let csv = tmp.path().join("out.csv");
    let out = posestar(&[
        "sweep",
        "--fixtures",
        tmp.path().to_str().unwrap(),
        "--grid",
        grid.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r_mode,mean_iou,fixtures,failures");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("min,") && lines[3].starts_with("max,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",2,0")));
}
