//! Oracles and generators shared by the integration and acceptance tests.
//! Everything here is written against the public API only and recomputes the
//! quantities it checks without calling the functions under test.

#![allow(dead_code)]

use guided_grpo::grpo::{clipped_term, compute_advantages, kl_token, HyperParams, Normalization};
use guided_grpo::guidance::{guided_count, ControllerMode, GuidanceState};
use guided_grpo::policy::{Context, Policy, PolicyShape};
use guided_grpo::rollout::{rollout_group, Group, Rollout, RolloutSpec};
use guided_grpo::tasks::{generate_tier, trace_of, TaskKind, Token};
use guided_grpo::RngStream;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const VOCAB: usize = 17;

/// A random loss-evaluation instance: groups plus three policies that agree
/// on shape but differ in their logits.
pub struct Instance {
    pub groups: Vec<Group>,
    pub new: Policy,
    pub old: Policy,
    pub reference: Policy,
}

fn random_tokens(rng: &mut ChaCha8Rng, n: usize) -> Vec<Token> {
    (0..n).map(|_| Token(rng.gen_range(0..VOCAB as u8))).collect()
}

/// `G ≤ 4`, every completion at most 6 tokens. With `guided`, some rollouts
/// carry a nonempty guidance prefix.
pub fn random_instance(rng: &mut ChaCha8Rng, guided: bool) -> Instance {
    let shape = PolicyShape {
        order: rng.gen_range(1..=3),
        aligned_read: rng.gen_bool(0.5),
    };
    let mut new = Policy::standard(shape).unwrap();
    let n_groups = rng.gen_range(1..=2);
    let mut groups = Vec::new();
    for gid in 0..n_groups {
        let q_len = rng.gen_range(1..=3);
        let question = random_tokens(rng, q_len);
        let g = rng.gen_range(2..=4);
        let mut rollouts = Vec::new();
        for i in 0..g {
            let total = rng.gen_range(1..=6);
            let n_guidance = if guided && total > 1 && rng.gen_bool(0.5) { rng.gen_range(1..total) } else { 0 };
            let seq = random_tokens(rng, total);
            rollouts.push(Rollout {
                prompt_id: gid,
                index: i,
                guidance: seq[..n_guidance].to_vec(),
                output: seq[n_guidance..].to_vec(),
                behavior_logprobs_g: vec![],
                behavior_logprobs_o: vec![],
                reward: if rng.gen_bool(0.5) { rng.gen_range(0.0..1.0) } else { f64::from(rng.gen_range(0..2u8)) },
                truncated: false,
            });
        }
        let guided_count = rollouts.iter().filter(|r| r.is_guided()).count();
        groups.push(Group { prompt_id: gid, question, rollouts, guided_count });
    }
    let contexts = touched_contexts(&new, &groups);
    for ctx in &contexts {
        for v in 0..VOCAB {
            new.set_logit(*ctx, v, rng.gen_range(-2.0..2.0));
        }
    }
    let mut old = new.clone();
    let mut reference = new.clone();
    for ctx in &contexts {
        for v in 0..VOCAB {
            old.set_logit(*ctx, v, new.logit(ctx, v) + rng.gen_range(-0.3..0.3));
            reference.set_logit(*ctx, v, new.logit(ctx, v) + rng.gen_range(-0.5..0.5));
        }
    }
    Instance { groups, new, old, reference }
}

pub fn touched_contexts(policy: &Policy, groups: &[Group]) -> Vec<Context> {
    let mut out: Vec<Context> = groups
        .iter()
        .flat_map(|g| g.rollouts.iter().flat_map(|r| policy.contexts_along(&g.question, &r.completion())))
        .collect();
    out.sort();
    out.dedup();
    out
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
    row.iter().map(|x| x - m - z.ln()).collect()
}

fn oracle_logprob(p: &Policy, q: &[Token], prefix: &[Token], tok: Token) -> f64 {
    log_softmax(&p.logits_row(&p.context(q, prefix)))[tok.0 as usize]
}

/// Independent per-sequence GRPO objective (negated), averaged over groups:
/// each rollout's clipped-minus-KL terms are averaged over its tokens, the
/// rollout means are averaged with weight `1/G`.
pub fn per_sequence_oracle(inst: &Instance, eps: f64, beta: f64, sigma_floor: f64) -> f64 {
    let mut total = 0.0;
    for g in &inst.groups {
        let rewards: Vec<f64> = g.rollouts.iter().map(|r| r.reward).collect();
        let n = rewards.len() as f64;
        let mu = rewards.iter().sum::<f64>() / n;
        let sd = (rewards.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / n).sqrt();
        let mut group_sum = 0.0;
        for r in &g.rollouts {
            let a = if sd > sigma_floor { (r.reward - mu) / sd } else { 0.0 };
            let seq = r.completion();
            let mut s = 0.0;
            for t in 0..seq.len() {
                let lp_new = oracle_logprob(&inst.new, &g.question, &seq[..t], seq[t]);
                let lp_old = oracle_logprob(&inst.old, &g.question, &seq[..t], seq[t]);
                let lp_ref = oracle_logprob(&inst.reference, &g.question, &seq[..t], seq[t]);
                let w = (lp_new - lp_old).exp();
                let surrogate = (w * a).min(w.max(1.0 - eps).min(1.0 + eps) * a);
                let rho = (lp_ref - lp_new).exp();
                s += surrogate - beta * (rho - rho.ln() - 1.0);
            }
            group_sum += s / seq.len() as f64;
        }
        total -= group_sum / n;
    }
    total / inst.groups.len() as f64
}

/// True when some token's ratio sits within `margin` of a clip boundary,
/// where the loss is not differentiable.
pub fn near_kink(inst: &Instance, eps: f64, margin: f64) -> bool {
    inst.groups.iter().any(|g| {
        g.rollouts.iter().any(|r| {
            let seq = r.completion();
            (0..seq.len()).any(|t| {
                let w = (oracle_logprob(&inst.new, &g.question, &seq[..t], seq[t])
                    - oracle_logprob(&inst.old, &g.question, &seq[..t], seq[t]))
                .exp();
                (w - (1.0 - eps)).abs() < margin || (w - (1.0 + eps)).abs() < margin
            })
        })
    })
}

pub struct FdReport {
    pub coordinates: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error_small: f64,
}

/// Central finite differences (step `h`) of `loss` against `analytic` on
/// every logit of every touched context.
pub fn finite_difference(
    inst: &Instance,
    h: f64,
    analytic: &guided_grpo::policy::Gradient,
    loss: impl Fn(&Policy) -> f64,
) -> FdReport {
    let mut report = FdReport { coordinates: 0, checked: 0, max_rel_error: 0.0, max_abs_error_small: 0.0 };
    for ctx in touched_contexts(&inst.new, &inst.groups) {
        for v in 0..VOCAB {
            let base = inst.new.logit(&ctx, v);
            let mut plus = inst.new.clone();
            plus.set_logit(ctx, v, base + h);
            let mut minus = inst.new.clone();
            minus.set_logit(ctx, v, base - h);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic.get(&ctx, v);
            report.coordinates += 1;
            let scale = a.abs().max(numeric.abs());
            if scale > 1e-8 {
                report.checked += 1;
                report.max_rel_error = report.max_rel_error.max((a - numeric).abs() / scale);
            } else {
                report.max_abs_error_small = report.max_abs_error_small.max((a - numeric).abs());
            }
        }
    }
    report
}

pub fn hp(normalization: Normalization) -> HyperParams {
    HyperParams { normalization, ..HyperParams::default() }
}

pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

// ---- invariant properties, shared by proptest targets and the acceptance run ----

pub fn rewards_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop_oneof![
        prop::collection::vec(0.0..=1.0f64, 2..16),
        prop::collection::vec(prop_oneof![Just(0.0), Just(1.0)], 2..16),
    ]
}

pub fn advantage_normalization(rewards: Vec<f64>) -> Result<(), TestCaseError> {
    let floor = 1e-6;
    let a = compute_advantages(&rewards, floor).unwrap();
    let n = rewards.len() as f64;
    let mu = rewards.iter().sum::<f64>() / n;
    let sd = (rewards.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / n).sqrt();
    if sd > floor {
        let m = a.advantages.iter().sum::<f64>() / n;
        let s = (a.advantages.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(m.abs() < 1e-9, "mean {m}");
        prop_assert!((s - 1.0).abs() < 1e-9, "std {s}");
    } else {
        prop_assert!(a.advantages.iter().all(|x| *x == 0.0));
    }
    Ok(())
}

pub fn clip_strategy() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..20.0f64, -10.0..10.0f64, 0.01..0.99f64)
}

pub fn clip_bound((w, a, eps): (f64, f64, f64)) -> Result<(), TestCaseError> {
    let c = clipped_term(w, a, eps);
    let bound = w.abs().max(1.0 + eps) * a.abs();
    prop_assert!(c.abs() <= bound * (1.0 + 1e-12), "|{c}| > {bound}");
    prop_assert!(c <= w * a + 1e-12 * bound);
    Ok(())
}

pub fn kl_strategy() -> impl Strategy<Value = (f64, f64)> {
    prop_oneof![
        (-30.0..0.0f64, -30.0..0.0f64),
        (-30.0..0.0f64).prop_map(|x| (x, x)),
        (-30.0..0.0f64, -1e-6..1e-6f64).prop_map(|(x, d)| (x, x + d)),
    ]
}

pub fn kl_nonnegative((r, n): (f64, f64)) -> Result<(), TestCaseError> {
    let k = kl_token(r, n);
    prop_assert!(k >= 0.0 && k.is_finite(), "k3({r}, {n}) = {k}");
    if r == n {
        prop_assert_eq!(k, 0.0);
    } else if (r - n).abs() > 1e-6 {
        prop_assert!(k > 0.0);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PrefixCase {
    pub tier: u8,
    pub seed: u64,
    pub alpha: f64,
    pub ell: usize,
    pub group_size: usize,
    pub copy: bool,
}

pub fn prefix_strategy() -> impl Strategy<Value = PrefixCase> {
    (1u8..=5, any::<u64>(), 0.0..=1.0f64, 0usize..20, 2usize..9, any::<bool>()).prop_map(
        |(tier, seed, alpha, ell, group_size, copy)| PrefixCase { tier, seed, alpha, ell, group_size, copy },
    )
}

fn uniform_snapshot() -> guided_grpo::policy::PolicySnapshot {
    Policy::standard(PolicyShape::default())
        .unwrap()
        .snapshot(guided_grpo::policy::SnapshotRole::Old)
}

pub fn guided_prefix_fidelity(c: PrefixCase) -> Result<(), TestCaseError> {
    let kind = if c.copy { TaskKind::Copy } else { TaskKind::ChainSumMod10 };
    let prompt = generate_tier(kind, c.tier, 1, c.seed, 0).remove(0);
    let spec = RolloutSpec { group_size: c.group_size, alpha: c.alpha, ell: c.ell, budget: 8, temperature: 1.0 };
    let grp = rollout_group(&uniform_snapshot(), &prompt, &spec, RngStream::new(c.seed)).unwrap();
    let n_guided = guided_count(c.alpha, c.group_size).unwrap();
    let trace = trace_of(&prompt);
    let expected = &trace[..c.ell.min(trace.len())];
    prop_assert_eq!(grp.guided_count, n_guided);
    prop_assert_eq!(grp.rollouts.len(), c.group_size);
    for (i, r) in grp.rollouts.iter().enumerate() {
        if i < n_guided {
            prop_assert_eq!(&r.guidance[..], expected);
            prop_assert_eq!(&r.completion()[..expected.len()], expected);
        } else {
            prop_assert!(r.guidance.is_empty());
        }
        prop_assert!(!r.output.is_empty() && r.output.len() <= spec.budget);
    }
    Ok(())
}

pub fn seed_determinism(c: PrefixCase) -> Result<(), TestCaseError> {
    let prompt = generate_tier(TaskKind::ChainSumMod10, c.tier, 1, c.seed, 0).remove(0);
    let spec = RolloutSpec { group_size: c.group_size, alpha: c.alpha, ell: c.ell, budget: 10, temperature: 0.7 };
    let snap = uniform_snapshot();
    let a = rollout_group(&snap, &prompt, &spec, RngStream::new(c.seed)).unwrap();
    let b = rollout_group(&snap, &prompt, &spec, RngStream::new(c.seed)).unwrap();
    prop_assert_eq!(a, b);

    let cfg = guided_grpo::harness::TrainerConfig {
        train_per_tier: 1,
        eval_per_tier: 1,
        group_size: 2,
        batch_size: 2,
        budget: 6,
        steps_per_epoch: Some(2),
        alpha: c.alpha,
        seed: c.seed,
        warm_start: guided_grpo::harness::WarmStart { per_tier: 2, ..Default::default() },
        guidance: guided_grpo::harness::GuidanceConfig::fixed(c.ell),
        ..Default::default()
    };
    let x = guided_grpo::harness::train(&cfg).unwrap();
    let y = guided_grpo::harness::train(&cfg).unwrap();
    prop_assert_eq!(&x.metrics, &y.metrics);
    prop_assert!(x.policy == y.policy);
    prop_assert_eq!(x.eval, y.eval);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ControllerCase {
    pub ell0: usize,
    pub lo: usize,
    pub hi: usize,
    pub window: usize,
    pub literal: bool,
    pub rewards: Vec<f64>,
}

pub fn controller_strategy() -> impl Strategy<Value = ControllerCase> {
    (0usize..500, 0usize..500, 1usize..5, any::<bool>(), prop::collection::vec(
        prop_oneof![Just(0.0), Just(1.0), 0.0..=1.0f64],
        1..30,
    ))
        .prop_flat_map(|(a, b, window, literal, rewards)| {
            let (lo, hi) = (a.min(b), a.max(b));
            (lo..=hi).prop_map(move |ell0| ControllerCase {
                ell0,
                lo,
                hi,
                window,
                literal,
                rewards: rewards.clone(),
            })
        })
}

/// Bounds, finiteness and the direction rule across a reward sequence.
pub fn controller_invariants(c: ControllerCase) -> Result<(), TestCaseError> {
    let mode = if c.literal { ControllerMode::Literal } else { ControllerMode::Inverse };
    let mut s = GuidanceState::with_bounds(c.ell0, c.window, mode, c.lo, c.hi, 1e-3).unwrap();
    for (k, &r) in c.rewards.iter().enumerate() {
        let before = s.ell();
        let m = c.window.min(k);
        let h: f64 = s.history().take(m).sum();
        let after = s.observe(r, k).unwrap();
        prop_assert!((c.lo..=c.hi).contains(&after));
        if k == 0 {
            prop_assert_eq!(after, before);
            continue;
        }
        let mean = h / m as f64;
        let (grow_when_lower, eps) = (!c.literal, 1e-12);
        if r > mean + eps {
            if grow_when_lower {
                prop_assert!(after <= before);
            } else {
                prop_assert!(after >= before);
            }
        } else if r < mean - eps {
            if grow_when_lower {
                prop_assert!(after >= before);
            } else {
                prop_assert!(after <= before);
            }
        }
    }
    Ok(())
}

/// Runs a property with `cases` cases; returns the failure message, if any.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

/// A plain GRPO loop written directly against the building blocks: warm start,
/// easy-to-hard order, one group per prompt, one update per step. Only fixed
/// guidance and a constant learning rate are supported.
pub fn standalone_loop(cfg: &guided_grpo::harness::TrainerConfig) -> Vec<guided_grpo::harness::StepMetrics> {
    use guided_grpo::curriculum::filter_dataset;
    use guided_grpo::grpo::{grpo_loss, guided_loss, loss_gradient};
    use guided_grpo::harness::{StepMetrics, FILTER_STREAM, ROLLOUT_STREAM, WARM_STREAM};
    use guided_grpo::policy::SnapshotRole;
    use guided_grpo::tasks::generate_dataset;

    let root = RngStream::new(cfg.seed);
    let raw = generate_dataset(cfg.task, cfg.train_per_tier, cfg.seed).unwrap();
    let data = filter_dataset(&raw, &cfg.filter, cfg.task, root.derive(FILTER_STREAM).key()).unwrap();
    let mut sorted: Vec<_> = data.iter().collect();
    sorted.sort_by_key(|p| (p.tier, p.id));

    let mut policy = Policy::standard(cfg.policy).unwrap();
    let warm_seed = root.derive(WARM_STREAM).key();
    let mut corpus = Vec::new();
    for tier in 1..=cfg.warm_start.max_tier {
        corpus.extend(generate_tier(cfg.task, tier, cfg.warm_start.per_tier, warm_seed, corpus.len() as u64));
    }
    for _ in 0..cfg.warm_start.epochs {
        for p in &corpus {
            let g = policy.nll_gradient(&p.question, &p.reference_completion()).unwrap();
            policy.apply_gradient(&g, cfg.warm_start.lr).unwrap();
        }
    }
    let reference = policy.clone();

    let per_epoch = cfg.steps_per_epoch.unwrap_or(sorted.len().div_ceil(cfg.batch_size));
    let spec = RolloutSpec {
        group_size: cfg.group_size,
        alpha: cfg.alpha,
        ell: cfg.guidance.ell,
        budget: cfg.budget,
        temperature: cfg.temperature,
    };
    let mut out = Vec::new();
    for epoch in 0..cfg.epochs {
        for s in 0..per_epoch {
            let k = epoch * per_epoch + s;
            let old = policy.snapshot(SnapshotRole::Old);
            let mut groups = Vec::new();
            for j in 0..cfg.batch_size {
                let p = sorted[(s * cfg.batch_size + j) % sorted.len()];
                let stream = root.derive(ROLLOUT_STREAM).derive(k as u64).derive(p.id);
                groups.push(rollout_group(&old, p, &spec, stream).unwrap());
            }
            let loss = match cfg.hp.normalization {
                Normalization::TokenGlobal => grpo_loss(&groups, &policy, old.policy(), &reference, &cfg.hp),
                Normalization::PerSequence => guided_loss(&groups, &policy, old.policy(), &reference, &cfg.hp),
            }
            .unwrap();
            let grad = loss_gradient(&groups, &policy, old.policy(), &reference, &cfg.hp).unwrap();
            policy.apply_gradient(&grad, cfg.lr).unwrap();

            let mut sigma = 0.0;
            let mut reward_sum = 0.0;
            let mut n = 0usize;
            let mut guided = 0usize;
            for g in &groups {
                let r = g.rewards();
                let mu = r.iter().sum::<f64>() / r.len() as f64;
                sigma += (r.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / r.len() as f64).sqrt();
                for ro in &g.rollouts {
                    reward_sum += ro.reward;
                    n += 1;
                    guided += usize::from(!ro.guidance.is_empty());
                }
            }
            out.push(StepMetrics {
                step: k,
                mean_reward: reward_sum / n as f64,
                adv_sigma: sigma / groups.len() as f64,
                ell: spec.ell,
                kl: loss.kl,
                loss: loss.total,
                guided_fraction: guided as f64 / n as f64,
            });
        }
    }
    out
}

/// Small vanilla configuration for the loop comparison: 50 steps.
pub fn reduction_config(normalization: Normalization, seed: u64) -> guided_grpo::harness::TrainerConfig {
    use guided_grpo::harness::{GuidanceConfig, TrainerConfig};
    let mut cfg = TrainerConfig {
        train_per_tier: 8,
        eval_per_tier: 0,
        group_size: 6,
        batch_size: 4,
        epochs: 2,
        steps_per_epoch: Some(25),
        lr: 1.0,
        seed,
        alpha: 0.0,
        guidance: GuidanceConfig::fixed(0),
        ..TrainerConfig::default()
    };
    cfg.hp.normalization = normalization;
    cfg
}
