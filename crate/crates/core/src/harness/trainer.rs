//! The training loop: rollout, loss, update, controller.

use rayon::prelude::*;

use crate::curriculum::{filter_dataset, order_dataset};
use crate::error::{Error, Result};
use crate::grpo::{compute_advantages, loss_and_gradient};
use crate::guidance::{schedule_length, GuidanceState};
use crate::policy::{Policy, PolicySnapshot, SnapshotRole};
use crate::rng::RngStream;
use crate::rollout::{rollout_group, Group, RolloutSpec};
use crate::tasks::{generate_dataset, generate_tier, verify, Prompt, MIN_TIER};

use super::config::{GuidanceSource, LrSchedule, RewardPool, SampleFrom, TrainerConfig};
use super::metrics::StepMetrics;

// Stream labels under the run seed. Rollout `i` of prompt `id` at step `k`
// draws from `RngStream::new(seed).derive_path(&[ROLLOUT_STREAM, k, id]).derive(i)`.
pub const EVAL_STREAM: u64 = 0xE7A1;
pub const WARM_STREAM: u64 = 0x3A53;
pub const FILTER_STREAM: u64 = 0xF117;
pub const ORDER_STREAM: u64 = 0x0D3E;
pub const ROLLOUT_STREAM: u64 = 0x2011;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierAccuracy {
    pub tier: u8,
    pub correct: usize,
    pub total: usize,
}

impl TierAccuracy {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Greedy (temperature 0), unguided accuracy on a prompt set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_tier: Vec<TierAccuracy>,
}

impl EvalReport {
    pub fn tier(&self, tier: u8) -> Option<f64> {
        self.per_tier.iter().find(|t| t.tier == tier).map(TierAccuracy::accuracy)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub metrics: Vec<StepMetrics>,
    pub policy: Policy,
    /// Held-out evaluation of the final policy, when `eval_per_tier > 0`.
    pub eval: Option<EvalReport>,
}

impl RunResult {
    /// Mean `r_k` over the last 10% of steps (at least one step); 0 for an empty run.
    pub fn final_window_reward(&self) -> f64 {
        final_window_reward(&self.metrics)
    }
}

pub fn final_window_reward(metrics: &[StepMetrics]) -> f64 {
    if metrics.is_empty() {
        return 0.0;
    }
    let n = metrics.len().div_ceil(10).max(1);
    let tail = &metrics[metrics.len() - n..];
    tail.iter().map(|m| m.mean_reward).sum::<f64>() / n as f64
}

/// What the step callback sees.
pub struct StepRecord<'a> {
    pub metrics: &'a StepMetrics,
    pub groups: &'a [Group],
}

pub fn evaluate(policy: &Policy, prompts: &[Prompt], budget: usize) -> Result<EvalReport> {
    let outcomes: Vec<(u8, bool)> = prompts
        .par_iter()
        .map(|p| {
            let s = policy.sample_tokens(&p.question, &[], budget, 0.0, RngStream::new(0))?;
            Ok((p.tier, verify(p, &s.tokens) == 1.0))
        })
        .collect::<Result<_>>()?;
    let mut per_tier: Vec<TierAccuracy> = Vec::new();
    for (tier, ok) in &outcomes {
        let slot = match per_tier.iter().position(|t| t.tier == *tier) {
            Some(i) => i,
            None => {
                per_tier.push(TierAccuracy { tier: *tier, correct: 0, total: 0 });
                per_tier.len() - 1
            }
        };
        per_tier[slot].total += 1;
        per_tier[slot].correct += usize::from(*ok);
    }
    per_tier.sort_by_key(|t| t.tier);
    let correct = outcomes.iter().filter(|(_, ok)| *ok).count();
    Ok(EvalReport {
        accuracy: if outcomes.is_empty() { 0.0 } else { correct as f64 / outcomes.len() as f64 },
        per_tier,
    })
}

/// Training prompts after the filter plan.
pub fn training_set(config: &TrainerConfig) -> Result<Vec<Prompt>> {
    let raw = generate_dataset(config.task, config.train_per_tier, config.seed)?;
    let seed = RngStream::new(config.seed).derive(FILTER_STREAM).key();
    filter_dataset(&raw, &config.filter, config.task, seed)
}

/// Held-out prompts, drawn from a stream disjoint from the training set's.
pub fn held_out_set(config: &TrainerConfig) -> Result<Vec<Prompt>> {
    if config.eval_per_tier == 0 {
        return Ok(Vec::new());
    }
    let seed = RngStream::new(config.seed).derive(EVAL_STREAM).key();
    generate_dataset(config.task, config.eval_per_tier, seed)
}

/// The policy RL starts from: uniform, then one supervised pass per warm-start
/// epoch over reference completions of tiers `1..=warm_start.max_tier`.
pub fn base_policy(config: &TrainerConfig) -> Result<Policy> {
    let mut policy = Policy::standard(config.policy)?;
    let ws = config.warm_start;
    if ws.max_tier == 0 || ws.per_tier == 0 {
        return Ok(policy);
    }
    let seed = RngStream::new(config.seed).derive(WARM_STREAM).key();
    let mut corpus = Vec::new();
    for tier in MIN_TIER..=ws.max_tier {
        corpus.extend(generate_tier(config.task, tier, ws.per_tier, seed, corpus.len() as u64));
    }
    for _ in 0..ws.epochs {
        for p in &corpus {
            let grad = policy.nll_gradient(&p.question, &p.reference_completion())?;
            policy.apply_gradient(&grad, ws.lr)?;
        }
    }
    Ok(policy)
}

fn learning_rate(config: &TrainerConfig, k: usize, total: usize) -> f64 {
    match config.lr_schedule {
        LrSchedule::Constant => config.lr,
        LrSchedule::Cosine => {
            let frac = k as f64 / total.max(1) as f64;
            // Keep a small floor so the last step still moves.
            (0.5 * config.lr * (1.0 + (std::f64::consts::PI * frac).cos())).max(config.lr * 1e-3)
        }
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn train(config: &TrainerConfig) -> Result<RunResult> {
    train_with(config, |_| Ok(()))
}

/// [`train`] with a callback after every step (used for rollout dumps).
pub fn train_with(
    config: &TrainerConfig,
    mut on_step: impl FnMut(StepRecord<'_>) -> Result<()>,
) -> Result<RunResult> {
    config.validate()?;
    let dataset = training_set(config)?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty after filtering"));
    }
    let mut policy = base_policy(config)?;
    let reference = policy.snapshot(SnapshotRole::Ref);

    let steps_per_epoch = config.steps_per_epoch_for(dataset.len());
    let total_steps = config.epochs * steps_per_epoch;
    let g = &config.guidance;
    let schedule = g.schedule_policy(total_steps);
    let mut controller = match g.source {
        GuidanceSource::Adaptive => Some(GuidanceState::with_bounds(
            g.ell0,
            g.window,
            g.mode,
            g.ell_min,
            g.upper_bound(),
            g.h_floor,
        )?),
        _ => None,
    };

    let root = RngStream::new(config.seed);
    let mut metrics = Vec::with_capacity(total_steps);
    for epoch in 0..config.epochs {
        let order_seed = root.derive_path(&[ORDER_STREAM, epoch as u64]).key();
        let order = order_dataset(&dataset, config.ordering, order_seed);
        let by_id = |id: u64| dataset.iter().find(|p| p.id == id).expect("ordered ids come from the dataset");
        let epoch_prompts: Vec<&Prompt> = order.iter().map(|&id| by_id(id)).collect();

        for s in 0..steps_per_epoch {
            let k = epoch * steps_per_epoch + s;
            let batch: Vec<&Prompt> = (0..config.batch_size)
                .map(|j| epoch_prompts[(s * config.batch_size + j) % epoch_prompts.len()])
                .collect();
            let ell = match g.source {
                GuidanceSource::Fixed => g.ell,
                GuidanceSource::Schedule => schedule_length(&schedule, k).map_err(|e| e.at_step(k))?,
                GuidanceSource::Adaptive => controller.as_ref().map_or(0, GuidanceState::ell),
            };
            let lr = learning_rate(config, k, total_steps);
            let (m, groups) = step(config, &mut policy, &reference, &batch, ell, lr, root, k)
                .map_err(|e| e.at_step(k))?;
            if let Some(state) = controller.as_mut() {
                let r = match g.reward_pool {
                    RewardPool::All => m.mean_reward,
                    RewardPool::Guided => pooled_reward(&groups, true).unwrap_or(m.mean_reward),
                    RewardPool::Unguided => pooled_reward(&groups, false).unwrap_or(m.mean_reward),
                };
                state.observe(r, k).map_err(|e| e.at_step(k))?;
            }
            on_step(StepRecord { metrics: &m, groups: &groups }).map_err(|e| e.at_step(k))?;
            metrics.push(m);
        }
    }

    let eval = if config.eval_per_tier > 0 {
        Some(evaluate(&policy, &held_out_set(config)?, config.budget)?)
    } else {
        None
    };
    Ok(RunResult { metrics, policy, eval })
}

fn pooled_reward(groups: &[Group], guided: bool) -> Option<f64> {
    mean(
        groups
            .iter()
            .flat_map(|g| &g.rollouts)
            .filter(|r| r.is_guided() == guided)
            .map(|r| r.reward),
    )
}

#[allow(clippy::too_many_arguments)]
fn step(
    config: &TrainerConfig,
    policy: &mut Policy,
    reference: &PolicySnapshot,
    batch: &[&Prompt],
    ell: usize,
    lr: f64,
    root: RngStream,
    k: usize,
) -> Result<(StepMetrics, Vec<Group>)> {
    let old = policy.snapshot(SnapshotRole::Old);
    let behavior = match config.sample_from {
        SampleFrom::Old => &old,
        SampleFrom::Ref => reference,
    };
    let spec = RolloutSpec {
        group_size: config.group_size,
        alpha: config.alpha,
        ell,
        budget: config.budget,
        temperature: config.temperature,
    };
    let groups: Vec<Group> = batch
        .par_iter()
        .map(|p| {
            let stream = root.derive_path(&[ROLLOUT_STREAM, k as u64, p.id]);
            rollout_group(behavior, p, &spec, stream)
        })
        .collect::<Result<_>>()?;

    let mut first = None;
    for _ in 0..config.inner_updates {
        let (loss, grad) = loss_and_gradient(&groups, policy, &old, reference, &config.hp)?;
        policy.apply_gradient(&grad, lr)?;
        first.get_or_insert(loss);
    }
    let loss = first.expect("inner_updates >= 1");

    let mut sigma_sum = 0.0;
    for grp in &groups {
        sigma_sum += compute_advantages(&grp.rewards(), config.hp.sigma_floor)?.std;
    }
    let rollouts = || groups.iter().flat_map(|g| &g.rollouts);
    let n = rollouts().count() as f64;
    let metrics = StepMetrics {
        step: k,
        mean_reward: rollouts().map(|r| r.reward).sum::<f64>() / n,
        adv_sigma: sigma_sum / groups.len() as f64,
        ell,
        kl: loss.kl,
        loss: loss.total,
        guided_fraction: rollouts().filter(|r| r.is_guided()).count() as f64 / n,
    };
    Ok((metrics, groups))
}
