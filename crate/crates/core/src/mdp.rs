//! The nested-construction MDP.
//!
//! A state is a partial frozen set; an action freezes one more subchannel.
//! The reward returned by `step(s_K, a)` is the performance of the code
//! formed by the *next* state, so an episode's rewards sum over every code
//! in the nested family it builds.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::Construction;
use crate::error::{Error, Result};
use crate::evaluator::{reward, RewardCache, RewardSpec};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EnvState {
    construction: Construction,
    step_index: usize,
}

impl EnvState {
    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    /// Number of actions taken so far, equal to the frozen count.
    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn n(&self) -> usize {
        self.construction.n()
    }

    pub fn is_legal(&self, action: usize) -> bool {
        action < self.n() && !self.construction.is_frozen(action)
    }

    /// Successor after freezing `action`.
    pub fn advance(&self, action: usize) -> Result<EnvState> {
        if !self.is_legal(action) {
            return Err(Error::IllegalAction { action });
        }
        Ok(EnvState { construction: self.construction.with_frozen(action), step_index: self.step_index + 1 })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: EnvState,
    pub action: usize,
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
}

/// Initial state: nothing frozen.
pub fn reset(n: usize) -> Result<EnvState> {
    Ok(EnvState { construction: Construction::new(vec![false; n])?, step_index: 0 })
}

pub fn legal_actions(s: &EnvState) -> Vec<usize> {
    s.construction.info_indices()
}

/// Freeze `a` and score the resulting code with `reward_fn`.
pub fn step(
    s: &EnvState,
    a: usize,
    reward_fn: impl FnOnce(&Construction) -> Result<f64>,
) -> Result<Transition> {
    let next_state = s.advance(a)?;
    let reward = reward_fn(&next_state.construction)?;
    let done = next_state.step_index == next_state.n();
    Ok(Transition { state: s.clone(), action: a, reward, next_state, done })
}

/// An episodic environment over frozen masks of length `n()`.
///
/// Rewards must depend on the reached state only, which lets rollouts
/// sample a whole batch of actions before scoring the states in parallel.
pub trait Environment: Sync {
    fn n(&self) -> usize;

    /// Episode length in steps.
    fn horizon(&self) -> usize {
        self.n()
    }

    /// Reward for arriving at `next`.
    fn reward(&self, next: &Construction) -> Result<f64>;

    fn rewards(&self, states: &[Construction]) -> Result<Vec<f64>> {
        states.par_iter().map(|s| self.reward(s)).collect()
    }

    fn reset(&self) -> Result<EnvState> {
        reset(self.n())
    }

    fn step(&self, s: &EnvState, a: usize) -> Result<Transition> {
        let mut t = step(s, a, |c| self.reward(c))?;
        t.done = t.next_state.step_index == self.horizon();
        Ok(t)
    }
}

/// Which information lengths are simulated, and at what EsN0.
///
/// Codes whose K is outside the schedule score 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSchedule {
    pub spec: RewardSpec,
    pub ks: Vec<usize>,
    /// Per-K EsN0 replacing `spec.channel.esn0_db`.
    #[serde(default)]
    pub esn0_by_k: BTreeMap<usize, f64>,
}

impl RewardSchedule {
    /// Every `K` in `1..n`.
    pub fn dense(spec: RewardSpec, n: usize) -> Self {
        Self { spec, ks: (1..n).collect(), esn0_by_k: BTreeMap::new() }
    }

    /// `K = stride, 2·stride, ...` below `n`.
    pub fn strided(spec: RewardSpec, n: usize, stride: usize) -> Self {
        Self { spec, ks: (stride.max(1)..n).step_by(stride.max(1)).collect(), esn0_by_k: BTreeMap::new() }
    }

    /// Spec for information length `k`, or `None` if unscheduled.
    pub fn spec_for(&self, k: usize) -> Option<RewardSpec> {
        if !self.ks.contains(&k) {
            return None;
        }
        Some(match self.esn0_by_k.get(&k) {
            Some(&x) => self.spec.with_esn0(x),
            None => self.spec,
        })
    }
}

/// The polar-code construction MDP with Monte-Carlo rewards.
#[derive(Clone, Debug)]
pub struct NestedCodeEnv {
    n: usize,
    schedule: RewardSchedule,
    cache: Arc<RewardCache>,
}

impl NestedCodeEnv {
    pub fn new(n: usize, schedule: RewardSchedule, cache: Arc<RewardCache>) -> Result<Self> {
        reset(n)?;
        schedule.spec.validate()?;
        if let Some(&k) = schedule.ks.iter().find(|&&k| k > n) {
            return Err(Error::InvalidParameter(format!("scheduled K = {k} exceeds N = {n}")));
        }
        Ok(Self { n, schedule, cache })
    }

    pub fn schedule(&self) -> &RewardSchedule {
        &self.schedule
    }

    pub fn cache(&self) -> &Arc<RewardCache> {
        &self.cache
    }
}

impl Environment for NestedCodeEnv {
    fn n(&self) -> usize {
        self.n
    }

    fn reward(&self, next: &Construction) -> Result<f64> {
        match self.schedule.spec_for(next.info_len()) {
            Some(spec) => reward(next, &spec, &self.cache),
            None => Ok(0.0),
        }
    }
}

/// Synthetic environment with a known optimum.
///
/// Episodes last `N/2` steps; the final state scores the number of frozen
/// indices inside a hidden target set of size `N/2`. Every other step
/// scores 0, so the best episode reward is `N/2`.
#[derive(Clone, Debug)]
pub struct TargetSetEnv {
    n: usize,
    target: Vec<bool>,
}

impl TargetSetEnv {
    pub fn new(target: &Construction) -> Result<Self> {
        let n = target.n();
        if n < 2 || target.frozen_count() != n / 2 {
            return Err(Error::InvalidParameter(format!(
                "target must mark N/2 of N >= 2 indices, got {} of {n}",
                target.frozen_count()
            )));
        }
        Ok(Self { n, target: target.mask().to_vec() })
    }

    /// Target `{(5i + 3) mod N : i < N/2}`, a fixed scattered set.
    pub fn standard(n: usize) -> Result<Self> {
        let marked: Vec<usize> = (0..n / 2).map(|i| (i * 5 + 3) % n).collect();
        Self::new(&Construction::from_frozen_set(n, &marked)?)
    }

    pub fn target(&self) -> Construction {
        Construction::new(self.target.clone()).expect("length is a power of two")
    }

    pub fn optimum(&self) -> f64 {
        (self.n / 2) as f64
    }

    /// `|frozen ∩ target|`, the terminal reward.
    pub fn overlap(&self, c: &Construction) -> usize {
        c.mask().iter().zip(&self.target).filter(|(a, b)| **a && **b).count()
    }
}

impl Environment for TargetSetEnv {
    fn n(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> usize {
        self.n / 2
    }

    fn reward(&self, next: &Construction) -> Result<f64> {
        Ok(if next.frozen_count() == self.horizon() { self.overlap(next) as f64 } else { 0.0 })
    }

    fn rewards(&self, states: &[Construction]) -> Result<Vec<f64>> {
        states.iter().map(|s| self.reward(s)).collect()
    }
}

/// Run `actions` from reset, returning every transition.
pub fn replay(env: &dyn Environment, actions: &[usize]) -> Result<Vec<Transition>> {
    let mut s = env.reset()?;
    let mut out = Vec::with_capacity(actions.len());
    for &a in actions {
        let t = env.step(&s, a)?;
        s = t.next_state.clone();
        out.push(t);
    }
    Ok(out)
}

/// One logged environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub episode: usize,
    pub step: usize,
    pub action: usize,
    pub reward: f64,
}

pub const TRAJECTORY_CSV_HEADER: &str = "episode,step,action,reward";

pub fn write_trajectory_csv<W: Write>(mut out: W, records: &[TrajectoryRecord]) -> Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{},{}", r.episode, r.step, r.action, r.reward)?;
    }
    Ok(())
}
