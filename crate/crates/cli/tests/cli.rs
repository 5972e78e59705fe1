use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

fn avfusion(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avfusion"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .env_remove("AVFUSION_OUT")
        .env_remove("AVFUSION_THREADS")
        .output()
        .expect("spawn avfusion")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(o));
}

#[test]
fn unknown_config_key_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"dfn": {"train": {"max_step": 5}}}"#).unwrap();
    let o = avfusion(&["synth", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dfn.train.max_step"), "{}", stderr(&o));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"static_weights": [0.5, 0.5]}"#).unwrap();
    let o = avfusion(&["sweep", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("static_weights"), "{}", stderr(&o));
}

#[test]
fn missing_prerequisite_names_the_producer() {
    let dir = tempfile::tempdir().unwrap();
    let o = avfusion(&["fuse"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`synth`"), "{}", stderr(&o));
    let o = avfusion(&["report"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`evaluate`"), "{}", stderr(&o));
}

#[test]
fn staged_pipeline_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = smoke_config();
    assert_ok(&avfusion(&["synth", "--config", cfg.to_str().unwrap()], out));
    // Later stages pick the configuration up from the synth manifest.
    for stage in ["extract", "train", "fuse", "decode", "evaluate", "report"] {
        assert_ok(&avfusion(&[stage], out));
    }
    for f in [
        "results.csv",
        "results.json",
        "report.txt",
        "wer_vs_snr.csv",
        "models/training.json",
        "models/dfn-blstm.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let utt = out.join("synth/test-0000");
    for f in ["clean.wav", "snrm3.wav", "frames.raw", "video.avpf", "alignment.avpf"] {
        assert!(utt.join(f).is_file(), "missing {f}");
    }
    let audio = avfusion::io::read_wav(&utt.join("snrm3.wav")).unwrap();
    assert!(!audio.is_empty());
    let frames = avfusion::io::read_raw_frames(&utt.join("frames.raw")).unwrap();
    assert!(!frames.is_empty());

    let plot = std::fs::read_to_string(out.join("wer_vs_snr.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("strategy,snr,wer_mean,wer_ci"));

    // Re-running a stage leaves the results unchanged.
    let before = std::fs::read(out.join("results.csv")).unwrap();
    for stage in ["fuse", "decode", "evaluate"] {
        assert_ok(&avfusion(&[stage], out));
    }
    assert_eq!(before, std::fs::read(out.join("results.csv")).unwrap());

    // Stages refuse to mix seeds with an existing corpus.
    let o = avfusion(&["decode", "--seed", "99"], out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn stage_selection_flags_restrict_the_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = smoke_config();
    assert_ok(&avfusion(
        &["synth", "--config", cfg.to_str().unwrap(), "--snr-grid", "-3,clean"],
        out,
    ));
    assert_ok(&avfusion(&["extract", "--model-based"], out));
    assert_ok(&avfusion(&["train", "--strategy", "dsw-ce"], out));
    assert!(out.join("models/dsw-ce.json").is_file());
    assert!(!out.join("models/dfn-lstm.json").exists());
    assert_ok(&avfusion(&["fuse", "--strategy", "ao,dsw-ce", "--snr", "-3"], out));
    assert!(out.join("fused/dsw-ce/test-0000/snrm3.avpf").is_file());
    assert!(!out.join("fused/dsw-ce/test-0000/clean.avpf").exists());
    let o = avfusion(&["fuse", "--strategy", "nonsense"], out);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_csv_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_ok(&avfusion(
        &["sweep", "--config", cfg.to_str().unwrap(), "--threads", "1"],
        &a,
    ));
    assert_ok(&avfusion(
        &["sweep", "--config", cfg.to_str().unwrap(), "--threads", "3"],
        &b,
    ));
    let read = |d: &Path| std::fs::read(d.join("results.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn output_directory_can_come_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let o = Command::new(env!("CARGO_BIN_EXE_avfusion"))
        .args([
            "sweep",
            "--quiet",
            "--strategy",
            "ao",
            "--config",
            cfg.to_str().unwrap(),
        ])
        .env("AVFUSION_OUT", dir.path())
        .env("AVFUSION_THREADS", "2")
        .output()
        .unwrap();
    assert_ok(&o);
    assert!(dir.path().join("results.csv").is_file());
}
