//! PPO training, supervised pretraining from GA populations, and the
//! integrated pipeline that chains them.
//!
//! Seeds are split into fixed substreams (network init, action sampling,
//! minibatch shuffling, pretraining, GA per K) so each stage is reproducible
//! on its own and skipping a stage leaves the others untouched.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::RngStream;
use crate::codec::Construction;
use crate::construction::{sequence_from_trajectory, NestedSequence};
use crate::error::{Error, Result};
use crate::genetic::{ga_evolve, Fitness, GaConfig, GaPopulation};
use crate::mdp::{EnvState, Environment};
use crate::neural::{Adam, LossSpec, PolicyValueNet, TrainSample};

const STREAM_INIT: u64 = 0;
const STREAM_SAMPLE: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_PRETRAIN: u64 = 3;
const STREAM_VALUE_HEAD: u64 = 4;
const STREAM_GA: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_epsilon: f64,
    pub beta_c: f64,
    pub beta_e: f64,
    pub lr: f64,
    /// Minibatch size of each gradient step.
    pub batch_size: usize,
    pub rollout_steps: usize,
    pub update_epochs: usize,
    pub total_timesteps: u64,
    pub normalize_advantages: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            lambda: 0.95,
            clip_epsilon: 0.2,
            beta_c: 0.5,
            beta_e: 0.0,
            lr: 3e-4,
            batch_size: 64,
            rollout_steps: 256,
            update_epochs: 4,
            total_timesteps: 100_000,
            normalize_advantages: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.clip_epsilon.is_nan() || self.clip_epsilon <= 0.0 {
            return bad("clip_epsilon must be positive");
        }
        if self.batch_size == 0 || self.rollout_steps == 0 {
            return bad("batch_size and rollout_steps must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        Ok(())
    }

    fn loss(&self) -> LossSpec {
        LossSpec::Ppo { clip_epsilon: self.clip_epsilon, beta_c: self.beta_c, beta_e: self.beta_e }
    }
}

/// Network for `n` subchannels from substream 0 of `seed`.
pub fn init_net(n: usize, hidden: usize, seed: u64) -> Result<PolicyValueNet> {
    PolicyValueNet::new(n, hidden, &mut RngStream::new(seed, STREAM_INIT))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub state: Construction,
    pub action: usize,
    pub reward: f64,
    pub log_prob_old: f64,
    pub value_old: f64,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub records: Vec<StepRecord>,
    /// `V(s)` of the state after the last record, 0 if that record ended
    /// an episode.
    pub bootstrap_value: f64,
}

/// One completed episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub timestep: u64,
    pub episode_index: u64,
    pub episode_reward: f64,
}

/// Environment position carried across rollouts.
#[derive(Clone, Debug)]
pub struct EpisodeRunner {
    state: EnvState,
    episode_reward: f64,
    episode_index: u64,
    timestep: u64,
}

impl EpisodeRunner {
    pub fn new(env: &dyn Environment) -> Result<Self> {
        Ok(Self { state: env.reset()?, episode_reward: 0.0, episode_index: 0, timestep: 0 })
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn episodes_completed(&self) -> u64 {
        self.episode_index
    }
}

/// Draw a legal action from `pmf`, renormalised over unfrozen inputs.
pub fn sample_action(pmf: &[f64], state: &Construction, rng: &mut RngStream) -> Result<usize> {
    let legal = state.info_indices();
    let last = *legal.last().ok_or(Error::IllegalAction { action: state.n() })?;
    let total: f64 = legal.iter().map(|&i| pmf[i]).sum();
    let mut u = rng.random::<f64>() * total;
    for &i in &legal {
        u -= pmf[i];
        if u < 0.0 {
            return Ok(i);
        }
    }
    Ok(last)
}

/// Legal action of highest probability, lowest index on ties.
pub fn greedy_action(pmf: &[f64], state: &Construction) -> Result<usize> {
    state
        .info_indices()
        .into_iter()
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if pmf[b] >= pmf[i] => Some(b),
            _ => Some(i),
        })
        .ok_or(Error::IllegalAction { action: state.n() })
}

/// Run the policy for `n_steps`, restarting finished episodes.
///
/// Actions are sampled first and the visited states are then scored as a
/// batch through [`Environment::rewards`]; rewards depend only on the state
/// reached, so this equals stepping one at a time.
pub fn collect_rollout(
    env: &dyn Environment,
    net: &PolicyValueNet,
    n_steps: usize,
    rng: &mut RngStream,
    runner: &mut EpisodeRunner,
) -> Result<(RolloutBatch, Vec<CurvePoint>)> {
    if n_steps == 0 {
        return Err(Error::InvalidParameter("rollout needs at least one step".into()));
    }
    let mut records = Vec::with_capacity(n_steps);
    let mut reached = Vec::with_capacity(n_steps);
    let mut state = runner.state.clone();
    for _ in 0..n_steps {
        let eval = net.forward(&state.construction().as_input())?;
        let action = sample_action(&eval.pmf, state.construction(), rng)?;
        let next = state.advance(action)?;
        let done = next.step_index() == env.horizon();
        records.push(StepRecord {
            state: state.construction().clone(),
            action,
            reward: 0.0,
            log_prob_old: eval.log_pmf[action],
            value_old: eval.value,
            done,
        });
        reached.push(next.construction().clone());
        state = if done { env.reset()? } else { next };
    }
    let rewards = env.rewards(&reached)?;
    let mut curve = Vec::new();
    for (rec, r) in records.iter_mut().zip(rewards) {
        rec.reward = r;
        runner.timestep += 1;
        runner.episode_reward += r;
        if rec.done {
            curve.push(CurvePoint {
                timestep: runner.timestep,
                episode_index: runner.episode_index,
                episode_reward: runner.episode_reward,
            });
            runner.episode_index += 1;
            runner.episode_reward = 0.0;
        }
    }
    let bootstrap_value = if records.last().is_some_and(|r| r.done) {
        0.0
    } else {
        net.forward(&state.construction().as_input())?.value
    };
    runner.state = state;
    Ok((RolloutBatch { records, bootstrap_value }, curve))
}

/// Generalised advantage estimates and returns `Â + V_old`.
///
/// `δ_t = r_t + γ V(s_{t+1}) − V(s_t)`, `Â_t = δ_t + γλ Â_{t+1}`, with
/// `V = 0` and no carry-over across an episode end.
pub fn gae(batch: &RolloutBatch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let recs = &batch.records;
    let mut adv = vec![0.0; recs.len()];
    let mut carry = 0.0;
    for t in (0..recs.len()).rev() {
        let r = &recs[t];
        let next_value = if r.done {
            0.0
        } else if t + 1 < recs.len() {
            recs[t + 1].value_old
        } else {
            batch.bootstrap_value
        };
        if r.done {
            carry = 0.0;
        }
        let delta = r.reward + gamma * next_value - r.value_old;
        carry = delta + gamma * lambda * carry;
        adv[t] = carry;
    }
    let returns = adv.iter().zip(recs).map(|(a, r)| a + r.value_old).collect();
    (adv, returns)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateMetrics {
    /// Mean `|r_t(θ) − 1|` over the first minibatch, before any step.
    pub initial_ratio_deviation: f64,
    /// Mean loss over all minibatches (pre-step values).
    pub mean_loss: f64,
    pub minibatches: usize,
}

/// `update_epochs` passes of shuffled minibatch PPO steps over `batch`.
pub fn ppo_update(
    net: &mut PolicyValueNet,
    opt: &mut Adam,
    batch: &RolloutBatch,
    advantages: &[f64],
    returns: &[f64],
    cfg: &PpoConfig,
    rng: &mut RngStream,
) -> Result<UpdateMetrics> {
    cfg.validate()?;
    let len = batch.records.len();
    if advantages.len() != len || returns.len() != len {
        return Err(Error::LengthMismatch { expected: len, got: advantages.len().min(returns.len()) });
    }
    let adv = if cfg.normalize_advantages { normalize(advantages) } else { advantages.to_vec() };
    let samples: Vec<TrainSample> = batch
        .records
        .iter()
        .zip(adv.iter().zip(returns))
        .map(|(r, (&advantage, &ret))| TrainSample {
            state: r.state.as_input(),
            action: r.action,
            log_prob_old: r.log_prob_old,
            advantage,
            ret,
        })
        .collect();
    let mut order: Vec<usize> = (0..len).collect();
    let mut metrics = UpdateMetrics { initial_ratio_deviation: f64::NAN, mean_loss: 0.0, minibatches: 0 };
    for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let mb: Vec<TrainSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            if metrics.minibatches == 0 {
                metrics.initial_ratio_deviation = ratio_deviation(net, &mb)?;
            }
            let (loss, grads) = net.gradients(&mb, cfg.loss())?;
            opt.step(net, &grads, cfg.lr)?;
            metrics.mean_loss += loss;
            metrics.minibatches += 1;
        }
    }
    if metrics.minibatches > 0 {
        metrics.mean_loss /= metrics.minibatches as f64;
    }
    Ok(metrics)
}

fn ratio_deviation(net: &PolicyValueNet, samples: &[TrainSample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        let lp = net.forward(&s.state)?.log_pmf[s.action];
        total += ((lp - s.log_prob_old).exp() - 1.0).abs();
    }
    Ok(total / samples.len() as f64)
}

fn normalize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    x.iter().map(|v| (v - mean) / std).collect()
}

/// Result of a PPO run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: PolicyValueNet,
    pub optimizer: Adam,
    pub curve: Vec<CurvePoint>,
}

/// PPO from `net` until `cfg.total_timesteps` environment steps.
pub fn train_rl(env: &dyn Environment, net: PolicyValueNet, cfg: &PpoConfig, seed: u64) -> Result<TrainOutcome> {
    train_rl_observed(env, net, cfg, seed, &mut |_, _| {})
}

/// [`train_rl`], calling `observe(timestep, new_points)` after every update.
pub fn train_rl_observed(
    env: &dyn Environment,
    mut net: PolicyValueNet,
    cfg: &PpoConfig,
    seed: u64,
    observe: &mut dyn FnMut(u64, &[CurvePoint]),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if net.n() != env.n() {
        return Err(Error::LengthMismatch { expected: env.n(), got: net.n() });
    }
    let mut sample_rng = RngStream::new(seed, STREAM_SAMPLE);
    let mut shuffle_rng = RngStream::new(seed, STREAM_SHUFFLE);
    let mut opt = Adam::for_net(&net);
    let mut runner = EpisodeRunner::new(env)?;
    let mut curve = Vec::new();
    while runner.timestep() < cfg.total_timesteps {
        let steps = (cfg.total_timesteps - runner.timestep()).min(cfg.rollout_steps as u64) as usize;
        let (batch, points) = collect_rollout(env, &net, steps, &mut sample_rng, &mut runner)?;
        let (adv, ret) = gae(&batch, cfg.gamma, cfg.lambda);
        ppo_update(&mut net, &mut opt, &batch, &adv, &ret, cfg, &mut shuffle_rng)?;
        observe(runner.timestep(), &points);
        curve.extend(points);
    }
    Ok(TrainOutcome { net, optimizer: opt, curve })
}

/// Nested sequence from an argmax rollout over all `N` steps.
pub fn greedy_sequence(net: &PolicyValueNet) -> Result<NestedSequence> {
    let n = net.n();
    let mut state = crate::mdp::reset(n)?;
    let mut actions = Vec::with_capacity(n);
    for _ in 0..n {
        let eval = net.forward(&state.construction().as_input())?;
        let a = greedy_action(&eval.pmf, state.construction())?;
        actions.push(a);
        state = state.advance(a)?;
    }
    sequence_from_trajectory(&actions)
}

pub const CURVE_CSV_HEADER: &str = "timestep,episode_index,episode_reward";

pub fn write_curve_csv<W: Write>(mut out: W, curve: &[CurvePoint]) -> Result<()> {
    writeln!(out, "{CURVE_CSV_HEADER}")?;
    for p in curve {
        writeln!(out, "{},{},{}", p.timestep, p.episode_index, p.episode_reward)?;
    }
    Ok(())
}

/// Area under a learning curve: each episode reward weighted by the
/// timesteps since the previous completed episode.
pub fn curve_area(curve: &[CurvePoint]) -> f64 {
    let mut prev = 0;
    curve
        .iter()
        .map(|p| {
            let w = p.timestep - prev;
            prev = p.timestep;
            w as f64 * p.episode_reward
        })
        .sum()
}

/// Demonstration pair: take `action_label` in `state`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PretrainExample {
    pub state: Construction,
    pub action_label: usize,
}

/// State-action pairs from good constructions.
///
/// 1. Every good state minus one of its frozen bits, labelled with that bit.
/// 2. For a good state `s` and a good state `d` with one more frozen bit,
///    `s` labelled with each bit frozen in `d` but not in `s`.
///
/// Duplicates are kept: they record how often an action was supported.
pub fn generate_examples(states: &[Construction]) -> Vec<PretrainExample> {
    let mut out = Vec::new();
    for s in states {
        for bit in s.frozen_indices() {
            let mut prior = s.mask().to_vec();
            prior[bit] = false;
            out.push(PretrainExample {
                state: Construction::new(prior).expect("same length"),
                action_label: bit,
            });
        }
    }
    let mut by_count: BTreeMap<usize, Vec<&Construction>> = BTreeMap::new();
    for s in states {
        by_count.entry(s.frozen_count()).or_default().push(s);
    }
    for (&count, sources) in &by_count {
        let Some(dests) = by_count.get(&(count + 1)) else { continue };
        for s in sources {
            for d in dests {
                if d.n() != s.n() {
                    continue;
                }
                for i in 0..s.n() {
                    if d.is_frozen(i) && !s.is_frozen(i) {
                        out.push(PretrainExample { state: (*s).clone(), action_label: i });
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub beta_e: f64,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 20, beta_e: 1.0, batch_size: 64, lr: 3e-4 }
    }
}

/// Minimise `CE(π(·|s), a) − β_e H(π(·|s))` over shuffled minibatches.
/// Returns the mean loss of each epoch.
pub fn pretrain(
    net: &mut PolicyValueNet,
    examples: &[PretrainExample],
    cfg: &PretrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::InvalidParameter("no pretraining examples".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
    }
    if let Some(e) = examples.iter().find(|e| e.state.is_frozen(e.action_label)) {
        return Err(Error::IllegalAction { action: e.action_label });
    }
    let samples: Vec<TrainSample> =
        examples.iter().map(|e| TrainSample::labeled(e.state.as_input(), e.action_label)).collect();
    let spec = LossSpec::Pretrain { beta_e: cfg.beta_e };
    let mut opt = Adam::for_net(net);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mb: Vec<TrainSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let (loss, grads) = net.gradients(&mb, spec)?;
            opt.step(net, &grads, cfg.lr)?;
            total += loss;
            count += 1;
        }
        history.push(total / count as f64);
    }
    Ok(history)
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct IntegratedConfig {
    pub ppo: PpoConfig,
    pub ga: GaConfig,
    /// Information lengths given a GA population; empty skips GA and
    /// pretraining.
    pub ga_ks: Vec<usize>,
    pub pretrain: PretrainConfig,
}

#[derive(Clone, Debug)]
pub struct IntegratedOutcome {
    pub populations: Vec<GaPopulation>,
    pub examples: usize,
    pub pretrained: PolicyValueNet,
    pub rl: TrainOutcome,
}

/// One final GA population per `K`, each on its own substream of `seed`.
pub fn ga_populations(
    n: usize,
    ks: &[usize],
    cfg: &GaConfig,
    fitness: &Fitness<'_>,
    seed: u64,
) -> Result<Vec<GaPopulation>> {
    ks.iter()
        .map(|&k| ga_evolve(n, k, cfg, fitness, &mut RngStream::new(seed, STREAM_GA + k as u64)))
        .collect()
}

/// GA populations → examples → pretraining → fresh value head → PPO.
pub fn train_integrated(
    env: &dyn Environment,
    net: PolicyValueNet,
    cfg: &IntegratedConfig,
    fitness: &Fitness<'_>,
    seed: u64,
) -> Result<IntegratedOutcome> {
    train_integrated_observed(env, net, cfg, fitness, seed, &mut |_, _| {})
}

/// [`train_integrated`] with the PPO stage observed as in [`train_rl_observed`].
pub fn train_integrated_observed(
    env: &dyn Environment,
    mut net: PolicyValueNet,
    cfg: &IntegratedConfig,
    fitness: &Fitness<'_>,
    seed: u64,
    observe: &mut dyn FnMut(u64, &[CurvePoint]),
) -> Result<IntegratedOutcome> {
    let populations = ga_populations(env.n(), &cfg.ga_ks, &cfg.ga, fitness, seed)?;
    let states: Vec<Construction> =
        populations.iter().flat_map(|p| p.constructions().cloned()).collect();
    let examples = generate_examples(&states);
    if !examples.is_empty() {
        pretrain(&mut net, &examples, &cfg.pretrain, &mut RngStream::new(seed, STREAM_PRETRAIN))?;
        net.reset_value_head(&mut RngStream::new(seed, STREAM_VALUE_HEAD));
    }
    let pretrained = net.clone();
    let rl = train_rl_observed(env, net, &cfg.ppo, seed, observe)?;
    Ok(IntegratedOutcome { populations, examples: examples.len(), pretrained, rl })
}
