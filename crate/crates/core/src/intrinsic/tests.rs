use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::audio::TEXTURE_DIM;
use crate::clustering::{ClusterConfig, EventClasses, OnlineClusterSet};
use crate::envs::{EnvConfig, VecEnv, FRAME_LEN};
use crate::neural::loss::softmax_cross_entropy;
use crate::neural::{Network, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Owned storage behind a [`Transitions`] view.
#[derive(Clone)]
struct Batch {
    frames: Vec<f64>,
    next_frames: Vec<f64>,
    actions: Vec<usize>,
    textures: Vec<Vec<f64>>,
    silent: Vec<bool>,
    steps: Vec<u64>,
    num_actions: usize,
}

impl Batch {
    fn view(&self) -> Transitions<'_> {
        Transitions {
            frames: &self.frames,
            next_frames: &self.next_frames,
            actions: &self.actions,
            textures: &self.textures,
            silent: &self.silent,
            steps: &self.steps,
            num_actions: self.num_actions,
        }
    }

    fn random(n: usize, num_actions: usize, rng: &mut ChaCha8Rng) -> Self {
        let pixels = |rng: &mut ChaCha8Rng| (0..n * FRAME_LEN).map(|_| rng.gen::<f64>()).collect();
        let frames = pixels(rng);
        let next_frames = pixels(rng);
        let silent: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let textures = silent
            .iter()
            .map(|s| {
                if *s {
                    vec![0.0; TEXTURE_DIM]
                } else {
                    (0..TEXTURE_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()
                }
            })
            .collect();
        Self {
            frames,
            next_frames,
            actions: (0..n).map(|_| rng.gen_range(0..num_actions)).collect(),
            textures,
            silent,
            steps: (0..n as u64).collect(),
            num_actions,
        }
    }

    /// `n` copies of one transition.
    fn repeated(&self, i: usize, n: usize) -> Self {
        let idx = vec![i; n];
        self.select(&idx)
    }

    fn select(&self, idx: &[usize]) -> Self {
        let rows = |src: &[f64]| {
            idx.iter()
                .flat_map(|&i| src[i * FRAME_LEN..(i + 1) * FRAME_LEN].iter().copied())
                .collect()
        };
        Self {
            frames: rows(&self.frames),
            next_frames: rows(&self.next_frames),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            textures: idx.iter().map(|&i| self.textures[i].clone()).collect(),
            silent: idx.iter().map(|&i| self.silent[i]).collect(),
            steps: (0..idx.len() as u64).collect(),
            num_actions: self.num_actions,
        }
    }
}

fn classes(k: usize, seed: u64) -> EventClasses {
    let mut r = rng(seed);
    let centers = (0..k)
        .map(|_| (0..TEXTURE_DIM).map(|_| r.gen_range(-1.0..1.0)).collect())
        .collect();
    EventClasses::new(centers, 0.5).unwrap()
}

/// Zeroes the weights of the last layer and sets its bias.
fn set_last_layer(net: &mut Network, bias: &[f64]) {
    let mut params = net.params_mut();
    let b = params.pop().unwrap();
    b.data_mut().copy_from_slice(bias);
    params.pop().unwrap().fill(0.0);
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn config() -> IntrinsicConfig {
    IntrinsicConfig::default()
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
    assert!("curiosity".parse::<Method>().is_err());
}

#[test]
fn uniform_logits_give_log_class_count() {
    let logits = Tensor::zeros(&[3, 4]);
    let (losses, _) = softmax_cross_entropy(&logits, &[0, 1, 3]).unwrap();
    for l in losses {
        assert!((l - 4f64.ln()).abs() < 1e-15);
    }

    let mut r = rng(1);
    let ev = classes(4, 2);
    let mut aep = AepModule::new(&config(), ev, 3, &mut r).unwrap();
    set_last_layer(&mut aep.net_mut().head, &[0.0; 5]);
    let batch = Batch::random(20, 3, &mut r);
    for reward in aep.compute_rewards(&batch.view()).unwrap() {
        assert!((reward - 5f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn certain_correct_prediction_gives_zero_reward_and_no_update() {
    let mut r = rng(3);
    let ev = classes(4, 4);
    let mut aep = AepModule::new(&config(), ev.clone(), 2, &mut r).unwrap();
    let mut batch = Batch::random(16, 2, &mut r);
    batch.silent = vec![true; 16];
    batch.textures = vec![vec![0.0; TEXTURE_DIM]; 16];
    let mut bias = vec![0.0; 5];
    bias[ev.silence_id()] = 1000.0;
    set_last_layer(&mut aep.net_mut().head, &bias);
    let rewards = aep.compute_rewards(&batch.view()).unwrap();
    assert!(rewards.iter().all(|v| *v == 0.0));

    let before: Vec<Vec<f64>> = aep.net().head.params().iter().map(|t| t.data().to_vec()).collect();
    let enc_before: Vec<Vec<f64>> = aep.net().encoder.params().iter().map(|t| t.data().to_vec()).collect();
    aep.update(&batch.view(), &mut r).unwrap();
    let after: Vec<Vec<f64>> = aep.net().head.params().iter().map(|t| t.data().to_vec()).collect();
    let enc_after: Vec<Vec<f64>> = aep.net().encoder.params().iter().map(|t| t.data().to_vec()).collect();
    assert_eq!(before, after);
    assert_eq!(enc_before, enc_after);
}

#[test]
fn aep_reward_matches_cross_entropy_oracle() {
    let mut r = rng(5);
    let ev = classes(6, 6);
    let aep = AepModule::new(&config(), ev, 4, &mut r).unwrap();
    let mut aep = aep;
    // Make the logits large and varied so the oracle is not trivially uniform.
    for p in aep.net_mut().head.params_mut() {
        p.data_mut().iter_mut().for_each(|v| *v *= 40.0);
    }
    let batch = Batch::random(50, 4, &mut r);
    let view = batch.view();
    let rewards = aep.compute_rewards(&view).unwrap();
    let idx: Vec<usize> = (0..50).collect();
    let logits = aep.logits(&view, &idx).unwrap();
    let labels = aep.labels(&view);
    let mut spread = 0.0f64;
    for i in 0..50 {
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let oracle = lse - z[labels[i]];
        assert!((rewards[i] - oracle).abs() < 1e-10, "{} vs {oracle}", rewards[i]);
        spread = spread.max(z.iter().copied().fold(f64::NEG_INFINITY, f64::max) - z.iter().copied().fold(f64::INFINITY, f64::min));
    }
    assert!(spread > 1.0);
}

#[test]
fn aep_overfits_one_repeated_sample() {
    let mut r = rng(7);
    let ev = classes(4, 8);
    let mut aep = AepModule::new(&config(), ev, 3, &mut r).unwrap();
    let batch = Batch::random(4, 3, &mut r);
    let mut one = batch.repeated(0, 16);
    one.silent = vec![false; 16];
    let view = one.view();
    let labels = aep.labels(&view);
    let idx: Vec<usize> = (0..16).collect();
    let mut loss = f64::INFINITY;
    for _ in 0..200 {
        loss = aep.train_step(&view, &idx, &labels).unwrap();
    }
    let final_loss = mean(&aep.compute_rewards(&view).unwrap());
    assert!(final_loss < 0.01, "loss {loss} / {final_loss}");
}

#[test]
fn aep_loss_decreases_over_epochs_on_fixed_batch() {
    let mut r = rng(9);
    let ev = classes(5, 10);
    let mut aep = AepModule::new(&config(), ev, 4, &mut r).unwrap();
    let batch = Batch::random(256, 4, &mut r);
    let view = batch.view();
    let labels = aep.labels(&view);
    let mut trace = vec![mean(&aep.compute_rewards(&view).unwrap())];
    let cfg = IntrinsicConfig {
        epochs: 1,
        ..config()
    };
    let mut aep = {
        let mut m = AepModule::new(&cfg, aep.classes().clone(), 4, &mut rng(9)).unwrap();
        m.net_mut().copy_params_from(aep.net()).unwrap();
        m
    };
    for _ in 0..10 {
        aep.fit(&view, &labels, &mut r).unwrap();
        trace.push(mean(&aep.compute_rewards(&view).unwrap()));
    }
    let drops = trace.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(trace[10] < trace[0] * 0.9, "{trace:?}");
    assert!(drops >= 8, "{trace:?}");
}

#[test]
fn aep_requires_frozen_classes() {
    let err = build_module(Method::Aep, &config(), &ClusterConfig::default(), 3, None, &mut rng(0));
    assert!(matches!(err, Err(crate::Error::State(_))));
}

#[test]
fn novel_association_out_rewards_mastered_one() {
    let mut r = rng(11);
    let ev = classes(4, 12);
    let mut aep = AepModule::new(&config(), ev.clone(), 2, &mut r).unwrap();
    let base = Batch::random(1, 2, &mut r);
    let mut stream_a = base.repeated(0, 32);
    stream_a.silent = vec![false; 32];
    stream_a.textures = vec![ev.centers()[0].clone(); 32];
    let mut rewards_a = Vec::new();
    for _ in 0..40 {
        rewards_a.extend(aep.compute_rewards(&stream_a.view()).unwrap());
        aep.update(&stream_a.view(), &mut r).unwrap();
    }
    let mut stream_b = stream_a.clone();
    stream_b.textures = vec![ev.centers()[1].clone(); 32];
    let reward_b = mean(&aep.compute_rewards(&stream_b.view()).unwrap());
    assert!(reward_b > mean(&rewards_a), "{reward_b} vs {}", mean(&rewards_a));
    let recent_a = mean(&aep.compute_rewards(&stream_a.view()).unwrap());
    assert!(reward_b > 10.0 * recent_a);
}

#[test]
fn regression_reward_matches_squared_error_oracle() {
    let mut r = rng(13);
    let mut m = SndRegModule::new(&config(), 3, &mut r).unwrap();
    let batch = Batch::random(30, 3, &mut r);
    let view = batch.view();
    let rewards = m.compute_rewards(&view).unwrap();
    let idx: Vec<usize> = (0..30).collect();
    let pred = m.predict(&view, &idx).unwrap();
    for i in 0..30 {
        let oracle: f64 = pred
            .row(i)
            .iter()
            .zip(&batch.textures[i])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!((rewards[i] - oracle).abs() < 1e-12);
    }

    // Zero predictor against a texture of norm 5.
    set_last_layer(&mut m.net_mut().head, &[0.0; TEXTURE_DIM]);
    let mut t = vec![0.0; TEXTURE_DIM];
    t[0] = 3.0;
    t[7] = 4.0;
    let mut one = batch.repeated(0, 2);
    one.textures = vec![t.clone(), t];
    for v in m.compute_rewards(&one.view()).unwrap() {
        assert!((v - 25.0).abs() < 1e-12);
    }
    // Perfect prediction: the target equals the (constant) output.
    one.textures = vec![vec![0.0; TEXTURE_DIM]; 2];
    assert!(m.compute_rewards(&one.view()).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn cluster_reward_is_the_novelty_bonus() {
    let mut r = rng(15);
    let cfg = ClusterConfig {
        tau: Some(1.2),
        ..ClusterConfig::default()
    };
    let mut module = ClusterModule::new(cfg.clone()).unwrap();
    let mut shadow = OnlineClusterSet::new(cfg).unwrap();
    assert!(!module.has_predictor());
    for round in 0..5 {
        let batch = Batch::random(40, 3, &mut r);
        let rewards = module.compute_rewards(&batch.view()).unwrap();
        for i in 0..40 {
            let expected = if batch.silent[i] {
                0.0
            } else {
                shadow.novelty_bonus(&batch.textures[i])
            };
            assert_eq!(rewards[i], expected, "round {round} row {i}");
            shadow.online_update(&batch.textures[i], batch.silent[i], batch.steps[i]).unwrap();
        }
    }
    assert_eq!(module.clusters(), &shadow);
    assert_eq!(module.cluster_count(), Some(shadow.len()));
}

#[test]
fn cluster_method_has_no_predictor_network() {
    let m = build_module(Method::Cluster, &config(), &ClusterConfig::default(), 9, None, &mut rng(0)).unwrap();
    assert!(!m.has_predictor());
    let none = build_module(Method::None, &config(), &ClusterConfig::default(), 9, None, &mut rng(0)).unwrap();
    assert!(!none.has_predictor());
}

#[test]
fn rnd_with_copied_weights_rewards_zero() {
    for use_audio in [false, true] {
        let cfg = IntrinsicConfig {
            use_audio,
            ..config()
        };
        let mut r = rng(17);
        let mut m = RndModule::new(&cfg, &mut r).unwrap();
        let batch = Batch::random(12, 3, &mut r);
        assert!(m.compute_rewards(&batch.view()).unwrap().iter().all(|v| *v > 0.0));
        let target = m.target().clone();
        m.predictor_mut().copy_params_from(&target).unwrap();
        assert!(m.compute_rewards(&batch.view()).unwrap().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn icm_fixed_point_rewards_zero() {
    let mut r = rng(19);
    let mut m = IcmModule::new(&config(), 3, &mut r).unwrap();
    let mut batch = Batch::random(10, 3, &mut r);
    batch.next_frames = batch.frames.clone();
    // Constant features and a forward model that predicts them exactly.
    set_last_layer(&mut m.encoder, &[0.0; 64]);
    set_last_layer(&mut m.forward, &[0.0; 64]);
    assert!(m.compute_rewards(&batch.view()).unwrap().iter().all(|v| *v == 0.0));
}

fn decays(module: &mut dyn RewardModule, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let base = Batch::random(8, 3, &mut r);
    // A looped deterministic trajectory: the same 8 transitions every update.
    let loop_batch = base.select(&[0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2, 3, 4, 5, 6, 7]);
    let view = loop_batch.view();
    let first = mean(&module.compute_rewards(&view).unwrap());
    for _ in 0..1000 {
        module.update(&view, &mut r).unwrap();
    }
    (first, mean(&module.compute_rewards(&view).unwrap()))
}

#[test]
fn baseline_rewards_trend_down_on_a_looped_trajectory() {
    let cfg = IntrinsicConfig {
        epochs: 1,
        minibatch: 16,
        ..config()
    };
    for use_audio in [false, true] {
        let cfg = IntrinsicConfig { use_audio, ..cfg.clone() };
        let mut rnd = RndModule::new(&cfg, &mut rng(21)).unwrap();
        let (a, b) = decays(&mut rnd, 22);
        assert!(b < 0.1 * a, "rnd audio={use_audio}: {a} -> {b}");
        let mut icm = IcmModule::new(&cfg, 3, &mut rng(23)).unwrap();
        let (a, b) = decays(&mut icm, 24);
        assert!(b < 0.5 * a, "icm audio={use_audio}: {a} -> {b}");
    }
}

#[test]
fn rewards_are_non_negative_for_every_module() {
    let mut r = rng(25);
    let ev = classes(5, 26);
    let cluster = ClusterConfig {
        tau: Some(0.8),
        ..ClusterConfig::default()
    };
    for method in Method::ALL {
        let mut m = build_module(method, &config(), &cluster, 4, Some(&ev), &mut r).unwrap();
        for _ in 0..3 {
            let batch = Batch::random(32, 4, &mut r);
            let rewards = m.compute_rewards(&batch.view()).unwrap();
            assert_eq!(rewards.len(), 32);
            assert!(rewards.iter().all(|v| *v >= 0.0 && v.is_finite()), "{method}");
            m.update(&batch.view(), &mut r).unwrap();
        }
        if method == Method::None {
            assert!(m.compute_rewards(&Batch::random(5, 4, &mut r).view()).unwrap().iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn module_choice_never_changes_environment_trajectories() {
    let script: Vec<Vec<usize>> = (0..30).map(|t| vec![t % 9, (t * 5 + 2) % 9]).collect();
    let ev = classes(4, 30);
    let cluster = ClusterConfig {
        tau: Some(0.5),
        ..ClusterConfig::default()
    };
    let mut reference: Option<Vec<Vec<f64>>> = None;
    for method in [Method::None, Method::Cluster, Method::Rnd, Method::Aep] {
        let mut r = rng(31);
        let mut module = build_module(method, &config(), &cluster, 9, Some(&ev), &mut r).unwrap();
        let mut envs = VecEnv::from_config(&EnvConfig::Billiard(Default::default()), 2, 77).unwrap();
        let mut obs = envs.reset_all();
        let mut seen = Vec::new();
        for actions in &script {
            let results = envs.step(actions).unwrap();
            let mut frames = Vec::new();
            let mut next = Vec::new();
            let mut textures = Vec::new();
            let mut silent = Vec::new();
            for (o, res) in obs.iter().zip(&results) {
                frames.extend_from_slice(o.frame.pixels());
                next.extend_from_slice(res.observation.frame.pixels());
                seen.push(res.observation.frame.pixels().to_vec());
                silent.push(res.observation.audio.is_silent());
                textures.push(if res.observation.audio.is_silent() {
                    vec![0.0; TEXTURE_DIM]
                } else {
                    crate::audio::extract_texture(&res.observation.audio).unwrap().0
                });
            }
            let batch = Batch {
                frames,
                next_frames: next,
                actions: actions.clone(),
                textures,
                silent,
                steps: vec![0, 1],
                num_actions: 9,
            };
            module.compute_rewards(&batch.view()).unwrap();
            module.update(&batch.view(), &mut r).unwrap();
            obs = results.into_iter().map(|res| res.observation).collect();
        }
        match &reference {
            None => reference = Some(seen),
            Some(prev) => assert!(prev == &seen, "{method} changed the trajectory"),
        }
    }
}

#[test]
fn normalizer_passes_first_reward_unscaled() {
    let mut n = RewardNormalizer::new(0.99, 1).unwrap();
    assert_eq!(n.normalize(3.5), 3.5);
    let mut n = RewardNormalizer::new(0.99, 4).unwrap();
    assert_eq!(n.normalize_step(&[0.25, 0.0, 1.0, 2.0])[0], 0.25 / n.scale());
}

#[test]
fn normalizer_maps_zero_stream_to_zero() {
    let mut n = RewardNormalizer::new(0.99, 2).unwrap();
    for _ in 0..1000 {
        let out = n.normalize_step(&[0.0, 0.0]);
        assert_eq!(out, vec![0.0, 0.0]);
    }
    assert!(n.scale() >= NORM_EPSILON);
}

fn normalized_iid_std(gamma: f64, sigma: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut n = RewardNormalizer::new(gamma, 1).unwrap();
    let out: Vec<f64> = (0..5000)
        .map(|_| {
            let x = sigma * (r.gen::<f64>() - 0.5) * 12f64.sqrt();
            n.normalize(x)
        })
        .collect();
    let m = mean(&out);
    (out.iter().map(|v| (v - m).powi(2)).sum::<f64>() / out.len() as f64).sqrt()
}

#[test]
fn normalizer_brings_iid_stream_to_unit_scale() {
    for seed in 0..3 {
        for sigma in [0.01, 1.0, 50.0] {
            let std = normalized_iid_std(0.0, sigma, 100 + seed);
            assert!((0.5..=2.0).contains(&std), "seed {seed} sigma {sigma}: std {std}");
        }
    }
}

#[test]
fn divisor_tracks_discounted_return_std() {
    let gamma = 0.99f64;
    for seed in 0..3 {
        for sigma in [0.01, 1.0, 50.0] {
            let mut r = rng(200 + seed);
            let mut n = RewardNormalizer::new(gamma, 1).unwrap();
            for _ in 0..20_000 {
                n.normalize(sigma * (r.gen::<f64>() - 0.5) * 12f64.sqrt());
            }
            let expected = sigma / (1.0 - gamma * gamma).sqrt();
            let ratio = n.scale() / expected;
            assert!((ratio - 1.0).abs() < 0.2, "seed {seed} sigma {sigma}: ratio {ratio}");
        }
    }
}

#[test]
fn transitions_validation_rejects_ragged_fields() {
    let mut r = rng(40);
    let mut batch = Batch::random(4, 3, &mut r);
    assert!(batch.view().validate().is_ok());
    batch.silent.pop();
    assert!(batch.view().validate().is_err());
    let mut batch = Batch::random(4, 3, &mut r);
    batch.actions[0] = 3;
    assert!(batch.view().validate().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn welford_variance_is_non_negative_and_matches_two_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let mut w = Welford::default();
        xs.iter().for_each(|x| w.push(*x));
        let m = mean(&xs);
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64;
        prop_assert!(w.variance() >= 0.0);
        prop_assert!((w.variance() - var).abs() <= 1e-8 * (1.0 + var));
    }

    #[test]
    fn normalizer_divisor_never_below_epsilon(xs in prop::collection::vec(0.0f64..10.0, 1..300), gamma in 0.0f64..0.999) {
        let mut n = RewardNormalizer::new(gamma, 1).unwrap();
        for x in xs {
            let y = n.normalize(x);
            prop_assert!(y.is_finite());
            prop_assert!(n.scale() >= NORM_EPSILON);
            prop_assert!(y >= 0.0);
        }
    }
}
