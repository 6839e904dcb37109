use std::collections::{BTreeSet, HashSet};

use polar_rl::agents::{
    collect_rollout, curve_area, gae, generate_examples, greedy_sequence, init_net, ppo_update, pretrain,
    train_integrated, train_rl, EpisodeRunner, IntegratedConfig, PpoConfig, PretrainConfig, PretrainExample,
    RolloutBatch, StepRecord,
};
use polar_rl::channel::{ChannelSpec, RngStream};
use polar_rl::codec::Construction;
use polar_rl::evaluator::{reward, DecoderKind, RewardCache, RewardSpec};
use polar_rl::genetic::{ga_evolve, GaConfig};
use polar_rl::mdp::{Environment, TargetSetEnv};
use polar_rl::neural::{Adam, LossSpec, PolicyValueNet, TrainSample};
use rand::seq::SliceRandom;
use rand::Rng;

/// Deterministic environment: reward is the index sum of the frozen set.
struct IndexSumEnv(usize);

impl Environment for IndexSumEnv {
    fn n(&self) -> usize {
        self.0
    }

    fn reward(&self, next: &Construction) -> polar_rl::Result<f64> {
        Ok(next.frozen_indices().iter().sum::<usize>() as f64 / 10.0)
    }
}

fn synthetic_cfg(total: u64) -> PpoConfig {
    PpoConfig { gamma: 0.99, total_timesteps: total, ..PpoConfig::default() }
}

#[test]
fn rollout_is_deterministic_and_legal() {
    let env = IndexSumEnv(8);
    let net = init_net(8, 16, 1).unwrap();
    let run = || {
        let mut runner = EpisodeRunner::new(&env).unwrap();
        collect_rollout(&env, &net, 50, &mut RngStream::new(1, 1), &mut runner).unwrap()
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(a, b);
    assert_eq!(ca, cb);
    for r in &a.records {
        assert!(!r.state.is_frozen(r.action));
        assert!(r.log_prob_old.is_finite());
    }
}

#[test]
fn n_steps_from_fresh_env_is_one_episode() {
    let env = IndexSumEnv(8);
    let net = init_net(8, 16, 2).unwrap();
    let mut runner = EpisodeRunner::new(&env).unwrap();
    let (batch, curve) = collect_rollout(&env, &net, 8, &mut RngStream::new(2, 1), &mut runner).unwrap();
    assert_eq!(curve.len(), 1);
    assert!(batch.records[..7].iter().all(|r| !r.done));
    assert!(batch.records[7].done);
    assert_eq!(batch.bootstrap_value, 0.0);
    let actions: BTreeSet<usize> = batch.records.iter().map(|r| r.action).collect();
    assert_eq!(actions.len(), 8);
    // Rewards are those of the states reached.
    let total: f64 = batch.records.iter().map(|r| r.reward).sum();
    assert!((curve[0].episode_reward - total).abs() < 1e-12);
}

#[test]
fn episodes_continue_across_rollouts() {
    let env = IndexSumEnv(4);
    let net = init_net(4, 8, 3).unwrap();
    let mut runner = EpisodeRunner::new(&env).unwrap();
    let mut rng = RngStream::new(3, 1);
    let (b1, c1) = collect_rollout(&env, &net, 6, &mut rng, &mut runner).unwrap();
    assert_eq!(c1.len(), 1);
    assert_ne!(b1.bootstrap_value, 0.0);
    let (b2, c2) = collect_rollout(&env, &net, 2, &mut rng, &mut runner).unwrap();
    assert_eq!(b2.records[0].state.frozen_count(), 2);
    assert_eq!(c2.len(), 1);
    assert_eq!(c2[0].timestep, 8);
    assert_eq!(c2[0].episode_index, 1);
}

fn random_episode(len: usize, rng: &mut RngStream) -> RolloutBatch {
    let records = (0..len)
        .map(|t| StepRecord {
            state: Construction::all_info(1).unwrap(),
            action: 0,
            reward: rng.random_range(-1.0..2.0),
            log_prob_old: -1.0,
            value_old: rng.random_range(-1.0..1.0),
            done: t + 1 == len,
        })
        .collect();
    RolloutBatch { records, bootstrap_value: 0.0 }
}

/// Weighted sum `(1−λ) Σ_i λ^{i−1} Â^{(i)}`, where the i-step estimate
/// stops growing once it reaches the episode end.
fn gae_by_definition(batch: &RolloutBatch, t: usize, gamma: f64, lambda: f64) -> f64 {
    let r = &batch.records;
    let horizon = r.len() - t;
    let n_step = |i: usize| {
        let i = i.min(horizon);
        let disc: f64 = (0..i).map(|l| gamma.powi(l as i32) * r[t + l].reward).sum();
        let tail = if t + i < r.len() { gamma.powi(i as i32) * r[t + i].value_old } else { 0.0 };
        disc + tail - r[t].value_old
    };
    let mut total = 0.0;
    for i in 1..horizon {
        total += (1.0 - lambda) * lambda.powi(i as i32 - 1) * n_step(i);
    }
    total + lambda.powi(horizon as i32 - 1) * n_step(horizon)
}

#[test]
fn gae_matches_weighted_sum_definition() {
    let mut rng = RngStream::new(4, 0);
    for _ in 0..200 {
        let len = rng.random_range(1..=8);
        let batch = random_episode(len, &mut rng);
        let gamma = rng.random_range(0.0..0.999);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, _) = gae(&batch, gamma, lambda);
        for (t, a) in adv.iter().enumerate() {
            let want = gae_by_definition(&batch, t, gamma, lambda);
            assert!((a - want).abs() <= 1e-10, "t={t}: {a} vs {want}");
        }
    }
}

#[test]
fn gae_limits() {
    let mut rng = RngStream::new(5, 0);
    for _ in 0..50 {
        let batch = random_episode(8, &mut rng);
        let r = &batch.records;
        let (adv0, _) = gae(&batch, 0.7, 0.0);
        for t in 0..8 {
            let next = if t + 1 < 8 { r[t + 1].value_old } else { 0.0 };
            let one_step = r[t].reward + 0.7 * next - r[t].value_old;
            assert!((adv0[t] - one_step).abs() <= 1e-10);
        }
        // γ = 1 is outside the training range but the estimator is defined.
        let (adv1, ret1) = gae(&batch, 1.0, 1.0);
        for t in 0..8 {
            let mc: f64 = r[t..].iter().map(|x| x.reward).sum();
            assert!((adv1[t] - (mc - r[t].value_old)).abs() <= 1e-10);
            assert!((ret1[t] - mc).abs() <= 1e-10);
        }
    }
}

#[test]
fn first_minibatch_ratio_is_one() {
    let env = IndexSumEnv(16);
    let mut net = init_net(16, 32, 6).unwrap();
    let mut opt = Adam::for_net(&net);
    let mut runner = EpisodeRunner::new(&env).unwrap();
    let cfg = PpoConfig::default();
    let (batch, _) = collect_rollout(&env, &net, 256, &mut RngStream::new(6, 1), &mut runner).unwrap();
    let (adv, ret) = gae(&batch, cfg.gamma, cfg.lambda);
    let m = ppo_update(&mut net, &mut opt, &batch, &adv, &ret, &cfg, &mut RngStream::new(6, 2)).unwrap();
    assert!(m.initial_ratio_deviation <= 1e-9, "{}", m.initial_ratio_deviation);
    assert_eq!(m.minibatches, 16);
}

#[test]
fn one_step_descends_on_a_fixed_batch() {
    let mut successes = 0;
    for trial in 0..20 {
        let mut rng = RngStream::new(7, trial);
        let mut net = PolicyValueNet::new(8, 16, &mut rng).unwrap();
        let batch: Vec<TrainSample> = (0..32)
            .map(|_| {
                let mut idx: Vec<usize> = (0..8).collect();
                idx.shuffle(&mut rng);
                let frozen = rng.random_range(0..8);
                let c = Construction::from_frozen_set(8, &idx[..frozen]).unwrap();
                let a = idx[rng.random_range(frozen..8)];
                let lp = net.forward(&c.as_input()).unwrap().log_pmf[a];
                TrainSample {
                    state: c.as_input(),
                    action: a,
                    log_prob_old: lp,
                    advantage: rng.random_range(-1.0..1.0),
                    ret: rng.random_range(0.0..2.0),
                }
            })
            .collect();
        let spec = LossSpec::Ppo { clip_epsilon: 0.2, beta_c: 0.5, beta_e: 0.0 };
        let (before, g) = net.gradients(&batch, spec).unwrap();
        Adam::for_net(&net).step(&mut net, &g, 1e-4).unwrap();
        let after = net.loss(&batch, spec).unwrap();
        successes += usize::from(after < before);
    }
    assert!(successes >= 18, "{successes}/20");
}

#[test]
fn zero_timesteps_returns_initial_net() {
    let env = TargetSetEnv::standard(16).unwrap();
    let net = init_net(16, 32, 8).unwrap();
    let out = train_rl(&env, net.clone(), &synthetic_cfg(0), 8).unwrap();
    assert_eq!(out.net, net);
    assert!(out.curve.is_empty());
}

#[test]
fn learning_curve_is_strictly_increasing_and_deterministic() {
    let env = TargetSetEnv::standard(16).unwrap();
    let cfg = synthetic_cfg(3000);
    let a = train_rl(&env, init_net(16, 32, 9).unwrap(), &cfg, 9).unwrap();
    let b = train_rl(&env, init_net(16, 32, 9).unwrap(), &cfg, 9).unwrap();
    assert_eq!(a.curve.len(), 3000 / 8);
    assert!(a.curve.windows(2).all(|w| w[0].timestep < w[1].timestep));
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.net, b.net);
    assert_eq!(greedy_sequence(&a.net).unwrap(), greedy_sequence(&b.net).unwrap());
}

#[test]
fn pretraining_fits_a_single_label() {
    let mut net = init_net(8, 16, 10).unwrap();
    let state = Construction::from_frozen_set(8, &[0, 3]).unwrap();
    let examples = vec![PretrainExample { state: state.clone(), action_label: 5 }; 64];
    let cfg = PretrainConfig { epochs: 200, beta_e: 0.0, lr: 1e-2, ..PretrainConfig::default() };
    pretrain(&mut net, &examples, &cfg, &mut RngStream::new(10, 1)).unwrap();
    assert!(net.forward(&state.as_input()).unwrap().pmf[5] >= 0.99);
}

/// Label mass minimising `−log q − β H` when the other `m − 1` legal
/// actions share `1 − q` equally: the root of `−1/q + β ln(q(m−1)/(1−q))`.
fn entropy_regularised_optimum(beta: f64, m: usize) -> f64 {
    let f = |q: f64| -1.0 / q + beta * (q * (m as f64 - 1.0) / (1.0 - q)).ln();
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn strong_entropy_keeps_policy_near_uniform() {
    let mut net = init_net(8, 16, 11).unwrap();
    let state = Construction::from_frozen_set(8, &[0, 3]).unwrap();
    let examples = vec![PretrainExample { state: state.clone(), action_label: 5 }; 64];
    let cfg = PretrainConfig { epochs: 200, beta_e: 10.0, lr: 1e-2, ..PretrainConfig::default() };
    pretrain(&mut net, &examples, &cfg, &mut RngStream::new(11, 1)).unwrap();
    let pmf = net.forward(&state.as_input()).unwrap().pmf;
    let q = entropy_regularised_optimum(10.0, 6);
    assert!((pmf[5] - q).abs() < 0.01, "label mass {} vs optimum {q}", pmf[5]);
    for i in state.info_indices().into_iter().filter(|&i| i != 5) {
        assert!((pmf[i] - (1.0 - q) / 5.0).abs() < 0.01, "{pmf:?}");
    }
    let h = polar_rl::neural::entropy(&pmf);
    assert!(h >= 0.98 * 6f64.ln(), "entropy {h}");
}

#[test]
fn pretraining_rejects_bad_examples() {
    let mut net = init_net(4, 4, 0).unwrap();
    let cfg = PretrainConfig::default();
    assert!(pretrain(&mut net, &[], &cfg, &mut RngStream::new(0, 0)).is_err());
    let bad = PretrainExample { state: Construction::from_frozen_set(4, &[1]).unwrap(), action_label: 1 };
    assert!(pretrain(&mut net, &[bad], &cfg, &mut RngStream::new(0, 0)).is_err());
}

#[test]
fn pretraining_generalises_to_held_out_ga_states() {
    let n = 16;
    let spec = RewardSpec::new(DecoderKind::SclPm, 1, ChannelSpec::new(1.0, 12).unwrap(), 100, 100_000).unwrap();
    let cache = RewardCache::new();
    let fitness = |c: &Construction| reward(c, &spec, &cache);
    let ga = GaConfig { population_size: 16, generations: 15, ..GaConfig::default() };
    let mut states = Vec::new();
    for k in 1..n {
        let pop = ga_evolve(n, k, &ga, &fitness, &mut RngStream::new(12, k as u64)).unwrap();
        states.extend(pop.constructions().cloned());
    }
    let examples = generate_examples(&states);

    // Hold out whole states, so no validation state is seen in training.
    let mut distinct: Vec<Construction> =
        examples.iter().map(|e| e.state.clone()).collect::<HashSet<_>>().into_iter().collect();
    distinct.sort();
    distinct.shuffle(&mut RngStream::new(12, 0));
    let held: HashSet<Construction> = distinct[..distinct.len() / 5].iter().cloned().collect();
    let (val, train): (Vec<_>, Vec<_>) = examples.into_iter().partition(|e| held.contains(&e.state));

    let mut net = init_net(n, 32, 12).unwrap();
    pretrain(&mut net, &train, &PretrainConfig::default(), &mut RngStream::new(12, 1)).unwrap();
    let hits = val
        .iter()
        .filter(|e| {
            let pmf = net.forward(&e.state.as_input()).unwrap().pmf;
            polar_rl::agents::greedy_action(&pmf, &e.state).unwrap() == e.action_label
        })
        .count();
    let accuracy = hits as f64 / val.len() as f64;
    eprintln!("held-out top-1 accuracy {accuracy:.3} on {} examples", val.len());
    assert!(accuracy >= 5.0 / n as f64, "{accuracy}");
}

fn overlap_fitness(env: &TargetSetEnv) -> impl Fn(&Construction) -> polar_rl::Result<f64> + Sync + '_ {
    move |c: &Construction| Ok(env.overlap(c) as f64)
}

#[test]
fn integrated_without_ga_equals_plain_rl() {
    let env = TargetSetEnv::standard(16).unwrap();
    let cfg = IntegratedConfig { ppo: synthetic_cfg(2000), ..IntegratedConfig::default() };
    let net = init_net(16, 32, 13).unwrap();
    let fit = overlap_fitness(&env);
    let a = train_integrated(&env, net.clone(), &cfg, &fit, 13).unwrap();
    let b = train_rl(&env, net.clone(), &cfg.ppo, 13).unwrap();
    assert!(a.populations.is_empty());
    assert_eq!(a.pretrained, net);
    assert_eq!(a.rl.net, b.net);
    assert_eq!(a.rl.curve, b.curve);
}

#[test]
fn integrated_pipeline_produces_all_stages() {
    let env = TargetSetEnv::standard(16).unwrap();
    let cfg = IntegratedConfig {
        ppo: synthetic_cfg(2000),
        ga: GaConfig { population_size: 8, generations: 5, ..GaConfig::default() },
        ga_ks: (8..16).collect(),
        ..IntegratedConfig::default()
    };
    let net = init_net(16, 32, 14).unwrap();
    let fit = overlap_fitness(&env);
    let out = train_integrated(&env, net.clone(), &cfg, &fit, 14).unwrap();
    assert_eq!(out.populations.len(), 8);
    assert!(out.examples > 0);
    assert_ne!(out.pretrained, net);
    assert_ne!(out.rl.net, out.pretrained);
    assert!(curve_area(&out.rl.curve) > 0.0);
}
