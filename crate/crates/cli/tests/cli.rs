use std::path::Path;
use std::process::{Command, Output};

fn ismo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ismo")).current_dir(dir).args(args).output().expect("spawn ismo")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn ok(o: Output) {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&ismo(d, &["--help"])), 0);
    assert_eq!(code(&ismo(d, &["eval", "--help"])), 0);
    assert_eq!(code(&ismo(d, &["bogus"])), 2);
    assert_eq!(code(&ismo(d, &["dataset", "gen", "--out", "x", "--set", "dataset.nope=1"])), 2);
    assert_eq!(code(&ismo(d, &["dataset", "gen", "--out", "x", "--set", "train.batch_size=0"])), 2);
    let missing = ismo(d, &["segment", "--weights", "none.ckpt", "--input", "a.png", "--out", "o"]);
    assert_eq!(code(&missing), 3);
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error[io]"));
    assert_eq!(code(&ismo(d, &["train", "rec", "--data", "nowhere", "--out", "o"])), 3);
}

#[test]
fn shorthand_flags_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(ismo(d, &["dataset", "gen", "--out", "data", "--states", "5", "--lights", "2", "--seed", "3", "--set", "dataset.renders_per_state=1"]));
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("data/run-dataset-gen.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["dataset"]["states"], 5);
    assert_eq!(run["config"]["dataset"]["lights"], 2);
    assert_eq!(run["config"]["dataset"]["seed"], 3);
    std::fs::create_dir(d.join("bg")).unwrap();
    image::RgbImage::from_pixel(224, 224, image::Rgb([30, 90, 160])).save(d.join("bg/a.png")).unwrap();
    ok(ismo(d, &["dataset", "masks", "--frames", "data", "--backgrounds", "bg", "--count", "3", "--out", "masks"]));
    let manifest = std::fs::read_to_string(d.join("masks/manifest.json")).unwrap();
    assert!(manifest.contains("\"count\": 3") || manifest.contains("\"count\":3"), "{manifest}");
    assert_eq!(code(&ismo(d, &["dataset", "masks", "--data", "data", "--backgrounds", "data", "--out", "m2"])), 2);
}

#[test]
fn end_to_end_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("small.toml"),
        "[dataset]\nstates = 10\nrenders_per_state = 2\n[masks]\ncount = 12\n[model]\nwidth_divisor = 8\n[train]\nepochs_rec = 2\nepochs_od = 1\nbatch_size = 4\n",
    )
    .unwrap();
    let cfg = ["--config", "small.toml"];
    let run = |args: &[&str]| ok(ismo(d, &[args, &cfg[..]].concat()));
    run(&["dataset", "gen", "--out", "data"]);
    run(&["dataset", "masks", "--data", "data", "--out", "masks"]);
    run(&["train", "od", "--data", "masks", "--out", "od"]);
    run(&["train", "rec", "--data", "data", "--out", "rec"]);
    for f in ["data/run-dataset-gen.json", "od/odnet.ckpt", "od/od_history.csv", "rec/generator.ckpt", "rec/history.csv"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let history = std::fs::read_to_string(d.join("rec/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let img = std::fs::read_dir(d.join("data/images")).unwrap().next().unwrap().unwrap().path();
    let img = img.to_str().unwrap();
    ok(ismo(d, &["segment", "--weights", "od/odnet.ckpt", "--input", img, "--out", "seg"]));
    assert!(d.join("seg/mask.png").exists());
    ok(ismo(d, &["reconstruct", "--weights", "rec/generator.ckpt", "--input", img, "--out", "s.obj"]));
    let obj = std::fs::read_to_string(d.join("s.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 73 * 73);

    run(&[
        "eval", "--weights", "rec/generator.ckpt", "--data", "data", "--report", "ev/report.json", "--segmenter", "od/odnet.ckpt",
        "--occlusion", "--throughput", "--plots", "ev/plots", "--set", "occlusion.images_per_cell=1", "--set",
        "occlusion.base_frames=1", "--set", "throughput.frames=1",
    ]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ev/report.json")).unwrap()).unwrap();
    assert!(report["e3d_mean"].as_f64().unwrap().is_finite());
    assert_eq!(report["segmented_inputs"], true);
    assert_eq!(report["occlusion"]["e3d"].as_array().unwrap().len(), 5);
    assert!(report["timing"]["full_pipeline"]["p50"].as_f64().unwrap() > 0.0);
    assert!(d.join("ev/plots/occlusion_heatmap.png").exists());
    assert!(d.join("ev/run-eval.json").exists());
}
