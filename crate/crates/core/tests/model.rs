use footfall_core::audio::AudioClip;
use footfall_core::dsp::ControlSignal;
use footfall_core::model::graph::{init_audio_params, init_control_params};
use footfall_core::model::{control_noise, Checkpoint, ControlTuple, Model, ModelConfig, NormStats, SurfaceLabel};
use footfall_core::synth::NoiseSpec;
use footfall_core::{Error, Scalar};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn checkpoint<T: Scalar>(with_control: bool) -> Checkpoint<T> {
    let config = ModelConfig::desk();
    let vocabulary = vec!["dirt".to_string(), "wood".to_string()];
    let mut params = init_audio_params(&config, 1);
    if with_control {
        params.extend(init_control_params(&config, vocabulary.len(), 2));
    }
    Checkpoint {
        mfcc_stats: NormStats::identity(config.mfcc.n_coeffs),
        gamma_stats: with_control.then(|| NormStats::identity(1)),
        config,
        vocabulary,
        params,
        training: serde_json::Value::Null,
    }
}

fn noise_clip<T: Scalar>(seed: u64, len: usize) -> AudioClip<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AudioClip::new((0..len).map(|_| T::lit(rng.gen_range(-0.5..0.5))).collect(), 16000).unwrap()
}

fn tuple<T: Scalar>(label: usize, frames: usize, seed: u64) -> ControlTuple<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = ControlSignal::new((0..frames).map(|_| T::lit(rng.gen_range(0.0..0.5))).collect(), 1, 250).unwrap();
    ControlTuple::new(SurfaceLabel(label), gamma, control_noise(seed, frames, 1, 250)).unwrap()
}

#[test]
fn one_second_encodes_to_250_bounded_latents() {
    let model = Model::new(checkpoint::<f32>(false)).unwrap();
    let clip = noise_clip::<f32>(1, 16000);
    let z = model.encode_audio(&clip).unwrap();
    assert_eq!((z.frames(), z.dim), (250, 512));
    assert!(z.max_abs() < 1.0);
    assert_eq!(model.encode_audio(&clip).unwrap(), z);
}

#[test]
fn decoding_is_seeded_and_sized() {
    let model = Model::new(checkpoint::<f32>(false)).unwrap();
    let z = model.encode_audio(&noise_clip(2, 16000)).unwrap();
    let a = model.decode(&z, &NoiseSpec::new(3)).unwrap();
    let b = model.decode(&z, &NoiseSpec::new(3)).unwrap();
    let c = model.decode(&z, &NoiseSpec::new(4)).unwrap();
    assert_eq!(a.len(), 16000);
    assert_eq!(a.samples(), b.samples());
    assert_ne!(a.samples(), c.samples());
}

#[test]
fn batched_and_single_decoding_agree() {
    let model = Model::new(checkpoint::<f64>(false)).unwrap();
    let z1 = model.encode_audio(&noise_clip(5, 3200)).unwrap();
    let z2 = model.encode_audio(&noise_clip(6, 3200)).unwrap();
    let noise = [NoiseSpec::new(1), NoiseSpec::new(2)];
    let batch = model.decode_batch(&[&z1, &z2], &noise).unwrap();
    let single = model.decode(&z2, &noise[1]).unwrap();
    for (a, b) in batch[1].samples().iter().zip(single.samples()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let original = checkpoint::<f32>(true);
    original.save(&path).unwrap();
    let loaded = Checkpoint::<f32>::load(&path).unwrap();
    assert_eq!(loaded, original);

    let (a, b) = (Model::new(original).unwrap(), Model::new(loaded).unwrap());
    let clip = noise_clip::<f32>(7, 8000);
    let za = a.encode_audio(&clip).unwrap();
    assert_eq!(za, b.encode_audio(&clip).unwrap());
    let noise = NoiseSpec::new(9);
    assert_eq!(a.decode(&za, &noise).unwrap().samples(), b.decode(&za, &noise).unwrap().samples());
    let t = tuple(1, 100, 3);
    assert_eq!(a.synthesize(&t, &noise).unwrap().samples(), b.synthesize(&t, &noise).unwrap().samples());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let mut bad = checkpoint::<f32>(false);
    bad.config.latent_dim = 256;
    let mut bytes = Vec::new();
    bad.write_to(&mut bytes).unwrap();
    assert!(matches!(Checkpoint::<f32>::read_from(&bytes[..]), Err(Error::Checkpoint(_))));
    assert!(Checkpoint::<f32>::read_from(&b"not a checkpoint"[..]).is_err());
}

#[test]
fn synthesis_length_follows_control_length() {
    let model = Model::new(checkpoint::<f32>(true)).unwrap();
    let t = tuple(0, 500, 4);
    assert_eq!(model.synthesize(&t, &NoiseSpec::new(0)).unwrap().len(), 32000);
    let z = model.encode_control(&t).unwrap();
    assert_eq!((z.frames(), z.dim), (500, 512));
}

#[test]
fn zero_embedding_masks_the_controls() {
    let mut ckpt = checkpoint::<f64>(true);
    let row = ckpt.params.get_mut("control.embedding").unwrap();
    row.data_mut()[..2].iter_mut().for_each(|v| *v = 0.0);
    let model = Model::new(ckpt).unwrap();
    let a = model.encode_control(&tuple(0, 60, 1)).unwrap();
    let b = model.encode_control(&tuple(0, 60, 2)).unwrap();
    assert_eq!(a, b);
    let c = model.encode_control(&tuple(1, 60, 1)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn missing_networks_are_stage_errors() {
    let model = Model::new(checkpoint::<f32>(false)).unwrap();
    assert!(matches!(model.synthesize(&tuple(0, 10, 0), &NoiseSpec::new(0)), Err(Error::Stage(_))));
    let mut empty = checkpoint::<f32>(true);
    empty.params = empty.params.subset("control.");
    assert!(matches!(Model::new(empty), Err(Error::Stage(_))));
}

#[test]
fn unknown_labels_are_vocabulary_errors() {
    let model = Model::new(checkpoint::<f32>(true)).unwrap();
    assert_eq!(model.label("wood").unwrap(), SurfaceLabel(1));
    assert!(matches!(model.label("snow"), Err(Error::Vocabulary(_))));
    assert!(matches!(model.encode_control(&tuple(2, 10, 0)), Err(Error::Vocabulary(_))));
}

#[test]
fn wrong_rate_is_a_contract_error() {
    let model = Model::new(checkpoint::<f32>(false)).unwrap();
    let clip = AudioClip::new(vec![0.0f32; 4410], 44100).unwrap();
    assert!(matches!(model.encode_audio(&clip), Err(Error::Contract(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn control_latents_are_bounded(seed in 0u64..10_000, gain in 0.0f64..1000.0, frames in 1usize..80) {
        let model = Model::new(checkpoint::<f32>(true)).unwrap();
        let mut t = tuple::<f32>((seed % 2) as usize, frames, seed);
        t.gamma.values.iter_mut().for_each(|v| *v *= gain as f32);
        let z = model.encode_control(&t).unwrap();
        prop_assert!(z.max_abs() < 1.0);
        prop_assert_eq!(z.frames(), frames);
    }
}
