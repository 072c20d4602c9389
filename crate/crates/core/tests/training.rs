use footfall_core::audio::{write_wav, AudioClip};
use footfall_core::corpus;
use footfall_core::dsp::AnalysisConfig;
use footfall_core::manifest::{load_manifest, DatasetManifest, ManifestEntry};
use footfall_core::model::graph::init_audio_params;
use footfall_core::model::{Model, ModelConfig};
use footfall_core::synth::{multiscale_spectral_loss, NoiseSpec};
use footfall_core::training::{build_dataset, train_stage1, train_stage2, TrainConfig, TrainingItem};
use footfall_core::Error;

fn tiny_model() -> ModelConfig {
    ModelConfig {
        latent_dim: 16,
        encoder_hidden: 8,
        decoder_hidden: 8,
        control_hidden: 8,
        ..ModelConfig::desk()
    }
}

fn tiny_train(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 2,
        excerpt_seconds: 0.2,
        learning_rate: 3e-3,
        seed: 5,
        log_every: 0,
        ..TrainConfig::default()
    }
}

fn vocabulary() -> Vec<String> {
    corpus::SURFACES.iter().map(|s| s.to_string()).collect()
}

fn items(per_surface: usize, seed: u64) -> Vec<TrainingItem<f32>> {
    let analysis = AnalysisConfig::default();
    corpus::generate(per_surface, 0.5, 16000, seed)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, (clip, label))| {
            let id = corpus::SURFACES.iter().position(|s| *s == label).unwrap();
            TrainingItem::from_clip(clip.cast(), id, &analysis, i as u64).unwrap()
        })
        .collect()
}

#[test]
fn corpus_directory_builds_a_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = corpus::write_corpus(dir.path(), 1, 1.0, 3).unwrap();
    let manifest = load_manifest(&manifest_path).unwrap();
    assert_eq!(manifest.vocabulary(), vocabulary().as_slice());
    let data = build_dataset::<f32>(&manifest, &AnalysisConfig::default(), 0).unwrap();
    assert_eq!(data.len(), 4);
    for item in &data {
        assert_eq!(item.frames(), 250);
        assert_eq!(item.u.frames(), 250);
        assert!(item.u.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(item.gamma_hat.values.iter().all(|v| *v >= 0.0));
        assert!((item.clip.peak() - 1.0).abs() < 1e-6);
    }
    let again = build_dataset::<f32>(&manifest, &AnalysisConfig::default(), 0).unwrap();
    assert_eq!(again, data);
}

#[test]
fn unreadable_files_are_skipped_and_silence_analyzes_to_zero() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(dir.path().join("quiet.wav"), &AudioClip::<f32>::silence(8000, 16000)).unwrap();
    std::fs::write(dir.path().join("broken.wav"), b"RIFF....WAVE").unwrap();
    let manifest = DatasetManifest::new(
        "test",
        vec![
            ManifestEntry { path: dir.path().join("broken.wav"), label: "dirt".into() },
            ManifestEntry { path: dir.path().join("quiet.wav"), label: "wood".into() },
        ],
    );
    let data = build_dataset::<f32>(&manifest, &AnalysisConfig::default(), 0).unwrap();
    assert_eq!(data.len(), 1);
    assert_eq!(data[0].label, 1);
    assert!(data[0].gamma_hat.values.iter().all(|v| *v == 0.0));

    let only_broken = DatasetManifest::new("test", manifest.entries[..1].to_vec());
    assert!(matches!(
        build_dataset::<f32>(&only_broken, &AnalysisConfig::default(), 0),
        Err(Error::Dataset(_))
    ));
}

#[test]
fn zero_steps_return_the_initial_weights() {
    let data = items(1, 1);
    let model = tiny_model();
    let out = train_stage1(&data, &vocabulary(), &model, &tiny_train(0)).unwrap();
    assert!(out.trace.losses.is_empty());
    assert_eq!(out.checkpoint.params, init_audio_params::<f32>(&model, 5));
}

#[test]
fn stage1_is_reproducible() {
    let data = items(1, 2);
    let a = train_stage1(&data, &vocabulary(), &tiny_model(), &tiny_train(6)).unwrap();
    let b = train_stage1(&data, &vocabulary(), &tiny_model(), &tiny_train(6)).unwrap();
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
    let other = train_stage1(&data, &vocabulary(), &tiny_model(), &TrainConfig { seed: 6, ..tiny_train(6) }).unwrap();
    assert_ne!(a.trace.to_csv(), other.trace.to_csv());
}

#[test]
fn trained_reconstruction_beats_untrained() {
    let data = items(1, 4);
    let model = tiny_model();
    let untrained = train_stage1(&data, &vocabulary(), &model, &tiny_train(0)).unwrap();
    let trained = train_stage1(&data, &vocabulary(), &model, &tiny_train(150)).unwrap();
    let loss = |m: &Model<f32>| {
        let clip = &data[0].clip;
        let z = m.encode_audio(clip).unwrap();
        let y = m.decode(&z, &NoiseSpec::new(1)).unwrap();
        multiscale_spectral_loss(y.samples(), clip.samples()).unwrap()
    };
    let before = loss(&Model::new(untrained.checkpoint).unwrap());
    let after = loss(&Model::new(trained.checkpoint).unwrap());
    assert!(after < before, "trained {after} vs untrained {before}");
}

#[test]
fn stage2_trains_only_the_control_encoder() {
    let data = items(1, 7);
    let stage1 = train_stage1(&data, &vocabulary(), &tiny_model(), &tiny_train(3)).unwrap().checkpoint;
    let out = train_stage2(&data, &vocabulary(), &stage1, &tiny_train(40)).unwrap();
    for (name, tensor) in stage1.params.iter() {
        assert_eq!(out.checkpoint.params.get(name), Some(tensor), "{name} changed");
    }
    assert!(out.checkpoint.has_control_model());
    let trace = &out.trace;
    assert!(trace.tail_mean(10).unwrap() < trace.head_mean(10).unwrap());
    assert!(out.checkpoint.training.get("stage1").is_some());
    assert!(out.checkpoint.training.get("stage2").is_some());
}

#[test]
fn stage2_rejects_a_different_vocabulary() {
    let data = items(1, 8);
    let stage1 = train_stage1(&data, &vocabulary(), &tiny_model(), &tiny_train(0)).unwrap().checkpoint;
    let other = vec!["dirt".to_string(), "grass".to_string(), "gravel".to_string(), "snow".to_string()];
    assert!(matches!(train_stage2(&data, &other, &stage1, &tiny_train(1)), Err(Error::Config(_))));
}

#[test]
fn config_file_overrides_defaults() {
    let cfg = TrainConfig::from_toml("steps = 12\nlearning_rate = 0.01\n[loss_weights]\nmagnitude = 1.0\nlog_magnitude = 0.5\n").unwrap();
    assert_eq!(cfg.steps, 12);
    assert_eq!(cfg.batch_size, 8);
    assert_eq!(cfg.loss_weights.log_magnitude, 0.5);
    assert!(TrainConfig::from_toml("stepz = 3").is_err());
}
