//! Finite-difference checks of every backward pass. Each check returns the
//! worst relative error over its seeds.

use gesture_core::features::{TcnConfig, TcnEncoder};
use gesture_core::nn::attention::scaled_dot_attention_backward;
use gesture_core::nn::gradcheck::{check_gradients, NoParams};
use gesture_core::nn::{
    cross_entropy, cumulative_l2, scaled_dot_attention, Conv1d, DecoderLayer, EncoderLayer, FeedForward, LayerNorm,
    Linear, Mode, MultiHeadAttention, Tensor2,
};
use gesture_core::prediction::{multitask_loss, LossWeights, Predictor, PredictorConfig, TrajectoryMode};
use gesture_core::recognition::{Recognizer, RecognizerConfig};
use rand::Rng;

use super::{rand_tensor, rng};

pub const SEEDS: u64 = 20;
/// Central-difference step. Truncation error grows as h², and the d = 2
/// layer norm cases are curved enough to need the smaller step.
const H: f64 = 1e-5;

pub type Check = (&'static str, fn() -> f64);

pub const ALL: [Check; 13] = [
    ("linear", linear),
    ("layer_norm", layer_norm),
    ("attention", attention),
    ("multi_head_attention", multi_head_attention),
    ("conv1d", conv1d),
    ("feed_forward", feed_forward),
    ("encoder_layer", encoder_layer),
    ("decoder_layer", decoder_layer),
    ("cross_entropy_loss", cross_entropy_loss),
    ("cumulative_l2_loss", cumulative_l2_loss),
    ("tcn_encoder", tcn_encoder),
    ("recognizer_end_to_end", recognizer_end_to_end),
    ("predictor_multitask_end_to_end", predictor_multitask_end_to_end),
];

fn project(y: &Tensor2, r: &Tensor2) -> f64 {
    y.dot(r)
}

pub fn linear() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let (t, din, dout) = (r.random_range(1..6), r.random_range(1..7), r.random_range(1..7));
        let mut m = Linear::new(din, dout, &mut r);
        let x = rand_tensor(&mut r, t, din, 1.0);
        let proj = rand_tensor(&mut r, t, dout, 1.0);
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| project(&m.forward(&i[0]).unwrap(), &proj),
            |m, i| vec![m.backward(&i[0], &proj)],
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn layer_norm() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let (t, d) = (r.random_range(1..6), r.random_range(2..9));
        let mut m = LayerNorm::new(d);
        m.gain.value = rand_tensor(&mut r, 1, d, 2.0);
        m.bias.value = rand_tensor(&mut r, 1, d, 1.0);
        let x = rand_tensor(&mut r, t, d, 2.0);
        let proj = rand_tensor(&mut r, t, d, 1.0);
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| project(&m.forward(&i[0]).0, &proj),
            |m, i| {
                let (_, c) = m.forward(&i[0]);
                vec![m.backward(&c, &proj)]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn attention() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        for causal in [false, true] {
            let mut r = rng(seed);
            let (tq, tk, dk, dv) = (
                r.random_range(1..6),
                r.random_range(1..6),
                r.random_range(1..5),
                r.random_range(1..5),
            );
            let tk = if causal { tq } else { tk };
            let q = rand_tensor(&mut r, tq, dk, 1.5);
            let k = rand_tensor(&mut r, tk, dk, 1.5);
            let v = rand_tensor(&mut r, tk, dv, 1.5);
            let proj = rand_tensor(&mut r, tq, dv, 1.0);
            let g = check_gradients(
                &mut NoParams,
                &[q, k, v],
                |_, i| {
                    project(
                        &scaled_dot_attention(&i[0], &i[1], &i[2], causal, &mut Mode::Eval)
                            .unwrap()
                            .0,
                        &proj,
                    )
                },
                |_, i| {
                    let (_, c) = scaled_dot_attention(&i[0], &i[1], &i[2], causal, &mut Mode::Eval).unwrap();
                    let (dq, dk, dv) = scaled_dot_attention_backward(&c, &proj);
                    vec![dq, dk, dv]
                },
                H,
            );
            worst = worst.max(g.worst());
        }
    }
    worst
}

pub fn multi_head_attention() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        for causal in [false, true] {
            let mut r = rng(seed);
            let heads = r.random_range(1..4);
            let d = heads * r.random_range(1..4);
            let tq = r.random_range(1..6);
            let tk = if causal { tq } else { r.random_range(1..6) };
            let mut m = MultiHeadAttention::new(d, heads, &mut r).unwrap();
            let xq = rand_tensor(&mut r, tq, d, 1.0);
            let xkv = rand_tensor(&mut r, tk, d, 1.0);
            let proj = rand_tensor(&mut r, tq, d, 1.0);
            let g = check_gradients(
                &mut m,
                &[xq, xkv],
                |m, i| project(&m.forward(&i[0], &i[1], causal, &mut Mode::Eval).unwrap().0, &proj),
                |m, i| {
                    let (_, c) = m.forward(&i[0], &i[1], causal, &mut Mode::Eval).unwrap();
                    let (a, b) = m.backward(&c, &proj);
                    vec![a, b]
                },
                H,
            );
            worst = worst.max(g.worst());
        }
    }
    worst
}

pub fn conv1d() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let width = [1, 3, 5][r.random_range(0..3)];
        let (t, din, dout) = (r.random_range(1..9), r.random_range(1..5), r.random_range(1..5));
        let mut m = Conv1d::new(din, dout, width, &mut r).unwrap();
        m.bias.value = rand_tensor(&mut r, 1, dout, 0.5);
        let x = rand_tensor(&mut r, t, din, 1.0);
        let proj = rand_tensor(&mut r, t, dout, 1.0);
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| project(&m.forward(&i[0]).unwrap().0, &proj),
            |m, i| {
                let (_, u) = m.forward(&i[0]).unwrap();
                vec![m.backward(&u, &proj)]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn feed_forward() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let (t, d, dff) = (r.random_range(1..6), r.random_range(1..6), r.random_range(1..9));
        let mut m = FeedForward::new(d, dff, &mut r);
        let x = rand_tensor(&mut r, t, d, 1.0);
        let proj = rand_tensor(&mut r, t, d, 1.0);
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| project(&m.forward(&i[0], &mut Mode::Eval).unwrap().0, &proj),
            |m, i| {
                let (_, c) = m.forward(&i[0], &mut Mode::Eval).unwrap();
                vec![m.backward(&c, &proj)]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn encoder_layer() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let heads = r.random_range(1..3);
        let d = heads * r.random_range(2..4);
        let t = r.random_range(1..6);
        let mut m = EncoderLayer::new(d, heads, 2 * d, &mut r).unwrap();
        let x = rand_tensor(&mut r, t, d, 1.0);
        let proj = rand_tensor(&mut r, t, d, 1.0);
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| project(&m.forward(&i[0], &mut Mode::Eval).unwrap().0, &proj),
            |m, i| {
                let (_, c) = m.forward(&i[0], &mut Mode::Eval).unwrap();
                vec![m.backward(&c, &proj)]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn decoder_layer() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let heads = r.random_range(1..3);
        let d = heads * r.random_range(2..4);
        let (t, tm) = (r.random_range(1..6), r.random_range(1..6));
        let mut m = DecoderLayer::new(d, heads, 2 * d, &mut r).unwrap();
        let x = rand_tensor(&mut r, t, d, 1.0);
        let mem = rand_tensor(&mut r, tm, d, 1.0);
        let proj = rand_tensor(&mut r, t, d, 1.0);
        let g = check_gradients(
            &mut m,
            &[x, mem],
            |m, i| project(&m.forward(&i[0], &i[1], &mut Mode::Eval).unwrap().0, &proj),
            |m, i| {
                let (_, c) = m.forward(&i[0], &i[1], &mut Mode::Eval).unwrap();
                let (dx, dm) = m.backward(&c, &proj);
                vec![dx, dm]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn cross_entropy_loss() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let (t, c) = (r.random_range(1..7), r.random_range(2..7));
        let logits = rand_tensor(&mut r, t, c, 3.0);
        let mut labels: Vec<Option<usize>> = (0..t)
            .map(|_| (r.random::<f64>() < 0.8).then(|| r.random_range(0..c)))
            .collect();
        labels[0] = Some(r.random_range(0..c));
        let g = check_gradients(
            &mut NoParams,
            &[logits],
            |_, i| cross_entropy(&i[0], &labels).unwrap().loss,
            |_, i| vec![cross_entropy(&i[0], &labels).unwrap().grad],
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn cumulative_l2_loss() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let t = r.random_range(1..11);
        let pred = rand_tensor(&mut r, t, 6, 5.0);
        let truth = rand_tensor(&mut r, t, 6, 5.0);
        let g = check_gradients(
            &mut NoParams,
            &[pred],
            |_, i| cumulative_l2(&i[0], &truth).unwrap().loss,
            |_, i| vec![cumulative_l2(&i[0], &truth).unwrap().grad],
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn tcn_encoder() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let din = r.random_range(1..5);
        let cfg = TcnConfig {
            d_in: din,
            channels: vec![3, 4, 5],
            width: 3,
        };
        let mut m = TcnEncoder::new(&cfg, &mut r).unwrap();
        let t = cfg.min_window() + r.random_range(0..5);
        let x = rand_tensor(&mut r, t, din, 1.0);
        let proj = rand_tensor(&mut r, t, 5, 1.0);
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| project(&m.forward(&i[0]).unwrap().0, &proj),
            |m, i| {
                let (_, c) = m.forward(&i[0]).unwrap();
                vec![m.backward(&c, &proj)]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

fn small_recognizer(d_in: usize) -> RecognizerConfig {
    RecognizerConfig {
        d_model: 4,
        d_ff: 8,
        layers: 2,
        heads: 2,
        fc_dim: 3,
        tcn_channels: vec![3, 4, 4],
        tcn_width: 3,
        ..RecognizerConfig::paper(d_in)
    }
}

pub fn recognizer_end_to_end() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        let mut r = rng(seed);
        let mut m = Recognizer::new(small_recognizer(3), &mut r).unwrap();
        let x = rand_tensor(&mut r, 8, 3, 1.0);
        let labels: Vec<Option<usize>> = (0..8).map(|_| Some(r.random_range(0..3))).collect();
        let g = check_gradients(
            &mut m,
            &[x],
            |m, i| {
                let (o, _) = m.encoder_forward(&i[0], &mut Mode::Eval).unwrap();
                cross_entropy(&o.logits, &labels).unwrap().loss
            },
            |m, i| {
                let (o, c) = m.encoder_forward(&i[0], &mut Mode::Eval).unwrap();
                let lg = cross_entropy(&o.logits, &labels).unwrap();
                vec![m.backward(&c, &lg.grad)]
            },
            H,
        );
        worst = worst.max(g.worst());
    }
    worst
}

pub fn predictor_multitask_end_to_end() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..SEEDS {
        for mode in [TrajectoryMode::Delta, TrajectoryMode::Absolute] {
            let mut r = rng(seed);
            let cfg = PredictorConfig {
                d_model: 4,
                d_ff: 8,
                layers: 2,
                heads: 2,
                fc_dim: 3,
                d_emb: 2,
                w_pred: 3,
                factor: 2,
                trajectory: mode,
                ..PredictorConfig::paper(3)
            };
            let mut m = Predictor::new(cfg, &mut r).unwrap();
            let hidden = rand_tensor(&mut r, 6, 4, 1.0);
            let raw = rand_tensor(&mut r, 3, 3, 1.0);
            let obs: Vec<Option<usize>> = (0..6).map(|i| (i != 2).then(|| r.random_range(0..3))).collect();
            let targets: Vec<Option<usize>> = (0..3).map(|_| Some(r.random_range(0..3))).collect();
            let traj = rand_tensor(&mut r, 3, 6, 2.0);
            let origin = [0.5, -0.2, 0.1, 0.3, 0.0, -0.4];
            let w = LossWeights {
                gesture: 1.0,
                trajectory: 0.3,
            };
            let loss = |m: &Predictor, i: &[Tensor2]| {
                let (mem, _) = m.build_memory(&i[0], &obs, &i[1]).unwrap();
                let (p, _) = m
                    .forward_teacher_forced(&mem, &origin, &targets, &traj, &mut Mode::Eval)
                    .unwrap();
                multitask_loss(&p.gesture_logits, &targets, &p.trajectory, &traj, w)
                    .unwrap()
                    .loss
            };
            let g = check_gradients(
                &mut m,
                &[hidden, raw],
                loss,
                |m, i| {
                    let (mem, mc) = m.build_memory(&i[0], &obs, &i[1]).unwrap();
                    let (p, c) = m
                        .forward_teacher_forced(&mem, &origin, &targets, &traj, &mut Mode::Eval)
                        .unwrap();
                    let l = multitask_loss(&p.gesture_logits, &targets, &p.trajectory, &traj, w).unwrap();
                    let g = m.backward(&mc, &c, &l.d_logits, &l.d_traj);
                    vec![g.enc_hidden, g.raw]
                },
                H,
            );
            worst = worst.max(g.worst());
        }
    }
    worst
}
