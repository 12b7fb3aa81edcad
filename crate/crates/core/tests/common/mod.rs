#![allow(dead_code)]

pub mod gradsuite;
pub mod oracles;

use gesture_core::data::{synthesize_corpus, LabeledTrial, SynthConfig};
use gesture_core::experiment::TrainConfig;
use gesture_core::nn::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor2 {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

/// The 5 subjects × 4 trials, 6 class, σ = 0.1 corpus.
pub fn synth_corpus(seed: u64) -> Vec<LabeledTrial> {
    let cfg = SynthConfig {
        subjects: 5,
        trials_per_subject: 4,
        classes: 6,
        noise: 0.1,
        ..SynthConfig::default()
    };
    synthesize_corpus(&cfg, seed)
        .unwrap()
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}

/// Training settings used for the synthetic corpus. The short warmup
/// suits the few hundred optimizer steps a small corpus provides.
pub fn synth_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.apply_overrides(&[
        "epochs=30",
        "warmup_steps=100",
        "w_traj=0.1",
        "predictor_epochs=150",
        "lr_factor=0.5",
    ])
    .unwrap();
    c
}

/// A few epochs only, for plumbing tests.
pub fn quick_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    c.apply_overrides(&[
        "epochs=2",
        "predictor_epochs=2",
        "warmup_steps=100",
        "measure_latency=false",
    ])
    .unwrap();
    c
}
