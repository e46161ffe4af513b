mod common;

use common::*;
use guided_grpo::curriculum::{filter_dataset, order_dataset, FilterKind, FilterPlan, OrderingKind};
use guided_grpo::grpo::{guided_loss, HyperParams, Normalization};
use guided_grpo::guidance::{schedule_length, ControllerMode, GuidanceState, ScheduleKind, SchedulePolicy};
use guided_grpo::harness::{pooled_heatmap, StepMetrics};
use guided_grpo::policy::{Policy, PolicyShape, SnapshotRole};
use guided_grpo::tasks::{generate_dataset, generate_tier, verify, Prompt, TaskKind};
use guided_grpo::RngStream;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn advantages_are_normalized(rewards in rewards_strategy()) {
        advantage_normalization(rewards)?;
    }

    #[test]
    fn clipped_term_is_bounded(case in clip_strategy()) {
        clip_bound(case)?;
    }

    #[test]
    fn k3_is_nonnegative(case in kl_strategy()) {
        kl_nonnegative(case)?;
    }

    #[test]
    fn guided_prefix_matches_trace(case in prefix_strategy()) {
        guided_prefix_fidelity(case)?;
    }

    #[test]
    fn same_seed_same_outputs(case in prefix_strategy()) {
        seed_determinism(case)?;
    }

    #[test]
    fn controller_stays_in_bounds(case in controller_strategy()) {
        controller_invariants(case)?;
    }

    #[test]
    fn constant_reward_is_a_fixed_point(ell in 0usize..4000, r in 0.001..=1.0f64, window in 1usize..6, literal in any::<bool>()) {
        let mode = if literal { ControllerMode::Literal } else { ControllerMode::Inverse };
        let mut s = GuidanceState::with_bounds(ell, window, mode, 0, 4000, 1e-3).unwrap();
        for k in 0..=window + 2 {
            prop_assert_eq!(s.observe(r, k).unwrap(), ell);
        }
    }

    #[test]
    fn reduction_to_per_sequence_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, false);
        let hp = HyperParams { normalization: Normalization::PerSequence, ..HyperParams::default() };
        let got = guided_loss(&inst.groups, &inst.new, &inst.old, &inst.reference, &hp).unwrap();
        let want = per_sequence_oracle(&inst, hp.clip_eps, hp.kl_coef, hp.sigma_floor);
        prop_assert!((got.total - want).abs() <= 1e-12, "{} vs {}", got.total, want);
        prop_assert!((got.total - (got.surrogate + hp.kl_coef * got.kl)).abs() <= 1e-9);
        let parts: f64 = got.per_rollout.iter().sum();
        prop_assert!((parts - got.total).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn reference_completion_always_verifies(tier in 1u8..=5, seed in any::<u64>(), copy in any::<bool>()) {
        let kind = if copy { TaskKind::Copy } else { TaskKind::ChainSumMod10 };
        let p = generate_tier(kind, tier, 1, seed, 7).remove(0);
        p.validate().unwrap();
        prop_assert_eq!(verify(&p, &p.reference_completion()), 1.0);
        prop_assert_eq!(Prompt::from_line(&p.to_line()).unwrap(), p);
    }

    #[test]
    fn rows_are_normalized_and_samples_consistent(seed in any::<u64>(), order in 1usize..4, temp in 0.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, false);
        let mut policy = Policy::standard(PolicyShape { order, aligned_read: true }).unwrap();
        for ctx in touched_contexts(&inst.new, &inst.groups).into_iter().take(4) {
            for v in 0..VOCAB {
                policy.set_logit(ctx, v, inst.new.logit(&ctx, v) * 3.0);
            }
        }
        let q = &inst.groups[0].question;
        let s = policy.sample_tokens(q, &[], 8, temp, RngStream::new(seed)).unwrap();
        let again = policy.sequence_log_probs(q, &[], &s.tokens).unwrap();
        prop_assert_eq!(&again, &s.logprobs);
        for ctx in policy.contexts_along(q, &s.tokens) {
            let total: f64 = policy.probs_row(&ctx).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshots_are_isolated(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inst = random_instance(&mut rng, true);
        let snap = inst.new.snapshot(SnapshotRole::Old);
        let q = inst.groups[0].question.clone();
        let toks = inst.groups[0].rollouts[0].completion();
        let before = snap.sequence_log_probs(&q, &[], &toks).unwrap();
        let hp = HyperParams::default();
        let (_, grad) = guided_grpo::grpo::loss_and_gradient(&inst.groups, &inst.new, &inst.old, &inst.reference, &hp).unwrap();
        inst.new.apply_gradient(&grad, 5.0).unwrap();
        prop_assert_eq!(snap.sequence_log_probs(&q, &[], &toks).unwrap(), before);
    }

    #[test]
    fn schedules_stay_within_start_and_decay(ell0 in 0usize..3000, total in 1usize..2000, beta in 1.01..4.0f64, gamma in 0.01..0.99f64, interval in 1usize..200) {
        for kind in [ScheduleKind::Concave { beta }, ScheduleKind::Linear, ScheduleKind::Stepwise { gamma, interval }, ScheduleKind::Fixed] {
            let pol = SchedulePolicy { kind, ell0, total_steps: total };
            let mut prev = usize::MAX;
            for t in (0..=total).step_by((total / 17).max(1)) {
                let l = schedule_length(&pol, t).unwrap();
                prop_assert!(l <= ell0);
                prop_assert!(l <= prev);
                prev = l;
            }
            prop_assert!(schedule_length(&pol, total + 1).is_err());
        }
    }

    #[test]
    fn curriculum_and_filters(per_tier in 1usize..6, seed in any::<u64>(), threshold in 1u8..=5) {
        let ds = generate_dataset(TaskKind::ChainSumMod10, per_tier, seed).unwrap();
        let order = order_dataset(&ds, OrderingKind::Curriculum, seed);
        let tiers: Vec<u8> = order.iter().map(|id| ds.iter().find(|p| p.id == *id).unwrap().tier).collect();
        prop_assert!(tiers.windows(2).all(|w| w[0] <= w[1]));
        let mut shuffled = order_dataset(&ds, OrderingKind::Random, seed);
        shuffled.sort();
        prop_assert_eq!(shuffled, (0..ds.len() as u64).collect::<Vec<_>>());

        let plan = |kind| FilterPlan { kind, hard_tier_threshold: threshold };
        let removed = filter_dataset(&ds, &plan(FilterKind::Remove), TaskKind::ChainSumMod10, seed).unwrap();
        prop_assert!(removed.iter().all(|p| p.tier <= threshold));
        let replaced = filter_dataset(&ds, &plan(FilterKind::Replace), TaskKind::ChainSumMod10, seed).unwrap();
        prop_assert_eq!(replaced.len(), ds.len());
        prop_assert!(replaced.iter().all(|p| p.tier <= threshold));
        prop_assert!(replaced.iter().all(|p| verify(p, &p.reference_completion()) == 1.0));
    }

    #[test]
    fn heatmap_conserves_mass(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let m: Vec<Vec<f64>> = (0..2 * rows).map(|_| (0..2 * cols).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let pooled = pooled_heatmap(&m, 2).unwrap();
        let a: f64 = m.iter().flatten().sum();
        let b: f64 = pooled.iter().flatten().sum();
        prop_assert!((4.0 * b - a).abs() < 1e-9);
        prop_assert_eq!(pooled.len(), rows);
    }

    #[test]
    fn metrics_lines_round_trip(step in any::<u32>(), ell in any::<u32>(), xs in prop::array::uniform5(any::<f64>().prop_filter("finite", |x| x.is_finite()))) {
        let m = StepMetrics { step: step as usize, mean_reward: xs[0], adv_sigma: xs[1], ell: ell as usize, kl: xs[2], loss: xs[3], guided_fraction: xs[4] };
        prop_assert_eq!(StepMetrics::from_line(&m.to_line()).unwrap(), m);
    }
}
