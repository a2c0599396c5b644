use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use loopanim::harness::{list_images, write_frame};
use loopanim::model::{Checkpoint, CheckpointMeta, NetConfig, RoutingConfig, UNetLite};
use loopanim::numerics::Tensor;
use loopanim::Stage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_loopanim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn alss_sample_lines() {
    let text = ok(&["alss-sample", "--f", "8", "--s", "6", "--seed", "3", "--count", "50"]);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 50);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let idx: Vec<u64> = v["indices"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        assert_eq!(idx.len(), 15);
        assert_eq!((idx[0], idx[14]), (0, 0));
        assert_eq!(v["turning_index"], 7);
    }
    assert_eq!(text, ok(&["alss-sample", "--f", "8", "--s", "6", "--seed", "3", "--count", "50"]));
}

#[test]
fn params_equalities() {
    let text = ok(&["params"]);
    let get = |k: &str| -> usize {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{k},")))
            .unwrap_or_else(|| panic!("{k} missing in {text}"))
            .parse()
            .unwrap()
    };
    assert_eq!(get("TEMM.Q"), get("TEMM.K"));
    assert_eq!(get("TEMM.K"), get("TEMM.V"));
    assert_eq!(get("stage3_trainable"), get("conv_in") + get("TEMM.Q") + get("TEMM.V"));
    assert!(get("stage1_trainable") > get("stage2_trainable"));
}

#[test]
fn stage_three_checkpoint_generates_35_frames() {
    let dir = tempfile::tempdir().unwrap();
    let net = UNetLite::new(NetConfig { channels: 4, ctx_dim: 4 }, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let ckpt = Checkpoint {
        net,
        meta: CheckpointMeta {
            stage: Some(Stage::Three),
            completed: true,
            iteration: 0,
            seed: 0,
            forward_frames: 18,
            routing: RoutingConfig::default(),
        },
        moments: None,
    };
    let ck = dir.path().join("s3.ckpt");
    ckpt.save(&ck).unwrap();
    let img = dir.path().join("in.png");
    write_frame(&img, &Tensor::full(&[3, 32, 32], 0.5)).unwrap();
    let out = dir.path().join("gen");
    let args = [
        "generate", "--checkpoint", s(&ck), "--image", s(&img), "--caption", "a red disk", "--out", s(&out),
        "--steps", "2", "--seed", "5",
    ];
    ok(&args);
    let files = list_images(&out, "frame_").unwrap();
    assert_eq!(files.len(), 35);
    let first: Vec<_> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    ok(&args);
    let again: Vec<_> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(first, again);
}

#[test]
fn errors_map_to_exit_codes() {
    assert_eq!(run(&["params", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["alss-sample", "--f", "0"]).status.code(), Some(1));
    let missing = run(&["evaluate", "--video-dir", "/nonexistent", "--input-image", "/nonexistent.png", "--report", "/tmp/r"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "stage = 1\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(run(&["train", "--stage", "1", "--config", s(&bad), "--out", s(dir.path())]).status.code(), Some(1));
    let wrong = dir.path().join("s2.toml");
    std::fs::write(&wrong, "stage = 2\n").unwrap();
    assert_eq!(run(&["train", "--stage", "1", "--config", s(&wrong)]).status.code(), Some(1));
}

/// gen-data → train → generate → evaluate at 64×64 with a tiny network.
#[test]
fn end_to_end_smoke() {
    let start = std::time::Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let runs = dir.path().join("runs");
    let manifest = ok(&["gen-data", "--spec", s(&configs().join("smoke_data.toml")), "--out", s(&data)]);
    let manifest = manifest.trim();
    assert!(Path::new(manifest).exists());

    let cfg = configs().join("smoke.toml");
    let train = ["train", "--stage", "1", "--config", s(&cfg), "--manifest", manifest, "--out", s(&runs)];
    let summary = ok(&train);
    assert!(summary.contains("smoothed loss"), "{summary}");
    let log = std::fs::read_to_string(runs.join("loss_stage1.csv")).unwrap();
    assert_eq!(log.lines().count(), 201);

    let ck = runs.join("stage1.ckpt");
    let gen = dir.path().join("gen");
    let image = data.join("vid0000/frames/frame_0000.png");
    let mask = data.join("vid0000/masks/mask_0000.png");
    ok(&[
        "generate", "--checkpoint", s(&ck), "--image", s(&image), "--mask", s(&mask), "--caption",
        "a red disk moving in a circle", "--out", s(&gen), "--steps", "10",
    ]);
    assert_eq!(list_images(&gen, "frame_").unwrap().len(), 7);

    let report = dir.path().join("report.csv");
    let text = ok(&["evaluate", "--video-dir", s(&gen), "--input-image", s(&image), "--report", s(&report)]);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "video_id,clip_i,mse_f0,fc,motion,loop_c,frames");
    let fields: Vec<_> = lines[1].split(',').collect();
    assert_eq!(fields[0], "gen");
    assert_eq!(fields[6], "7");
    for v in &fields[2..6] {
        assert!(v.parse::<f64>().unwrap().is_finite());
    }
    assert_eq!(std::fs::read_to_string(&report).unwrap(), text);

    // a second identical run reproduces the loss log exactly (wallclock aside)
    let runs2 = dir.path().join("runs2");
    ok(&["train", "--stage", "1", "--config", s(&cfg), "--manifest", manifest, "--out", s(&runs2)]);
    let losses = |p: &Path| -> Vec<String> {
        std::fs::read_to_string(p)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(losses(&runs.join("loss_stage1.csv")), losses(&runs2.join("loss_stage1.csv")));
    assert!(start.elapsed().as_secs() < 600);
}

#[test]
fn ablation_reports_one_row_per_preset_and_video() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = ok(&["gen-data", "--spec", s(&configs().join("smoke_data.toml")), "--out", s(&data)]);
    let report = dir.path().join("ablation.csv");
    let text = ok(&[
        "ablate-routing", "--config", s(&configs().join("smoke.toml")), "--manifest", manifest.trim(), "--report",
        s(&report), "--iterations", "3", "--eval-count", "1", "--steps", "2",
    ]);
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 1 + 5);
    for (p, line) in lines[1..].iter().enumerate() {
        assert!(line.starts_with(&format!("{p},")));
    }
}
