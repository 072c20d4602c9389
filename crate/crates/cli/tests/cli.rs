use std::path::Path;
use std::process::{Command, Output};

use footfall_core::audio::{read_wav, write_wav, AudioClip};
use footfall_core::dsp::ControlSignal;
use footfall_core::metrics::EvalReport;

fn footfall(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_footfall"))
        .args(args)
        .env_remove("PROVE_CONFIG")
        .env("RUST_LOG", "info")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(footfall(&["transmogrify"]).status.code(), Some(2));
    assert_eq!(footfall(&["grf", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(footfall(&[]).status.code(), Some(2));
    assert_eq!(footfall(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_with_1() {
    let out = footfall(&["analyze", "--in", "/nonexistent/step.wav"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = footfall(&["grf", "--period=-1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn grf_writes_the_requested_frames() {
    let out = footfall(&["grf", "--period", "0.5", "--duration", "2", "--seed", "7"]);
    assert!(out.status.success());
    let curve = ControlSignal::<f64>::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(curve.frames(), 500);
    assert_eq!(curve.values[0], 0.0);
    let log = String::from_utf8_lossy(&out.stderr);
    assert!(log.contains("config hash"), "{log}");
    assert!(log.contains("grf seed 7"), "{log}");
}

#[test]
fn analyze_covers_the_clip() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("step.wav");
    let json = dir.path().join("gamma.json");
    let samples = (0..32000).map(|n| ((n as f32) * 0.07).sin() * 0.3).collect();
    write_wav(&wav, &AudioClip::new(samples, 16000).unwrap()).unwrap();
    assert!(footfall(&["analyze", "--in", path(&wav), "--out", path(&json)]).status.success());
    let gamma = ControlSignal::<f32>::from_json(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!((gamma.frames(), gamma.control_rate), (500, 250));

    // Other rates are resampled first.
    let wav44 = dir.path().join("step44.wav");
    write_wav(&wav44, &AudioClip::new(vec![0.1f32; 44100], 44100).unwrap()).unwrap();
    let out = footfall(&["analyze", "--in", path(&wav44)]);
    let gamma = ControlSignal::<f32>::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(gamma.frames(), 250);
}

#[test]
fn synth_pa_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.wav");
    let b = dir.path().join("b.wav");
    let args = |out: &Path| {
        footfall(&["synth-pa", "--surface", "gravel", "--duration", "1.5", "--synth-seed", "3", "--out", path(out)])
    };
    assert!(args(&a).status.success());
    assert!(args(&b).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(read_wav::<f32>(&a).unwrap().len(), 24000);
    let out = footfall(&["synth-pa", "--surface", "lava", "--out", path(&a)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn explicit_gamma_file_drives_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let gamma = dir.path().join("g.json");
    std::fs::write(&gamma, ControlSignal::new(vec![0.0f64; 40], 1, 250).unwrap().to_json().unwrap()).unwrap();
    let wav = dir.path().join("g.wav");
    let out = footfall(&["synth-pa", "--surface", "wood", "--gamma", path(&gamma), "--out", path(&wav)]);
    assert!(out.status.success());
    let clip = read_wav::<f32>(&wav).unwrap();
    assert_eq!(clip.len(), 2560);
    assert!(clip.samples().iter().all(|v| *v == 0.0));
    // The learned engine needs a checkpoint.
    assert_eq!(footfall(&["synth", "--surface", "wood", "--out", path(&wav)]).status.code(), Some(1));
}

#[test]
fn eval_of_a_directory_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let set = dir.path().join("set");
    std::fs::create_dir(&set).unwrap();
    for seed in 0..6 {
        let wav = set.join(format!("{seed}.wav"));
        let out = footfall(&["synth-pa", "--surface", "dirt", "--synth-seed", &seed.to_string(), "--out", path(&wav)]);
        assert!(out.status.success());
    }
    let json = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let out = footfall(&["eval", "--set-a", path(&set), "--set-b", path(&set), "--out", path(&json), "--csv", path(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let pair = report.get("a", "b").unwrap();
    assert!(pair.fad.abs() < 1e-6, "{}", pair.fad);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("set_a,set_b,fad,mmd2\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAD"));
}

#[test]
fn config_file_is_read_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("engine.toml");
    std::fs::write(&cfg, "max_duration = 1.0\n").unwrap();
    let run = |config: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_footfall"));
        cmd.args(["grf", "--duration", "2"]);
        match config {
            Some(p) => cmd.env("PROVE_CONFIG", p),
            None => cmd.env_remove("PROVE_CONFIG"),
        };
        cmd.output().unwrap()
    };
    assert!(run(None).status.success());
    assert_eq!(run(Some(&cfg)).status.code(), Some(1));
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(run(Some(&cfg)).status.code(), Some(1));
}

#[test]
fn corpus_and_training_commands_produce_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = footfall(&["corpus", "--out", path(&corpus), "--per-surface", "1", "--duration", "0.5", "--seed", "2"]);
    assert!(out.status.success());
    let manifest = corpus.join("manifest.jsonl");
    assert!(manifest.exists());

    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        "[model]\nlatent_dim = 8\nencoder_hidden = 4\ndecoder_hidden = 4\ncontrol_hidden = 4\n\
         [train]\nbatch_size = 2\nexcerpt_seconds = 0.2\nlog_every = 0\n",
    )
    .unwrap();
    let s1 = dir.path().join("s1.ckpt");
    let s2 = dir.path().join("s2.ckpt");
    let train = |args: &[&str]| {
        let mut all = vec!["--config", path(&cfg)];
        all.extend_from_slice(args);
        footfall(&all)
    };
    let out = train(&["train-stage1", "--manifest", path(&manifest), "--out", path(&s1), "--steps", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s1.ckpt.loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let out = train(&[
        "train-stage2", "--checkpoint", path(&s1), "--manifest", path(&manifest), "--out", path(&s2), "--steps", "2",
        "--loss-csv", path(&dir.path().join("s2.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("s2.csv").exists());

    let wav_a = dir.path().join("a.wav");
    let wav_b = dir.path().join("b.wav");
    for wav in [&wav_a, &wav_b] {
        let out = footfall(&["synth", "--checkpoint", path(&s2), "--surface", "grass", "--u-seed", "1", "--synth-seed", "2", "--out", path(wav)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&wav_a).unwrap(), std::fs::read(&wav_b).unwrap());
    assert_eq!(read_wav::<f32>(&wav_a).unwrap().len(), 16000);
}
