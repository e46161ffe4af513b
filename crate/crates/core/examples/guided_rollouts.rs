//! One group of rollouts with and without trace guidance.
//!
//! The first ⌈αG⌉ rollouts start from the first ℓ trace tokens; the rest
//! sample from the question alone.

use guided_grpo::harness::{base_policy, TrainerConfig};
use guided_grpo::policy::SnapshotRole;
use guided_grpo::rollout::{rollout_group, RolloutSpec};
use guided_grpo::tasks::{generate_tier, render, trace_of, TaskKind};
use guided_grpo::RngStream;

fn main() -> guided_grpo::Result<()> {
    let cfg = TrainerConfig::default();
    let policy = base_policy(&cfg)?.snapshot(SnapshotRole::Old);
    let prompt = generate_tier(TaskKind::ChainSumMod10, 2, 1, 11, 0).remove(0);
    println!("question {}   trace {}", render(&prompt.question), render(trace_of(&prompt)));

    for (alpha, ell) in [(0.0, 0), (0.5, 2), (0.5, 6)] {
        let spec = RolloutSpec { group_size: 6, alpha, ell, budget: 24, temperature: 0.6 };
        let group = rollout_group(&policy, &prompt, &spec, RngStream::new(3))?;
        println!("\nalpha={alpha} ell={ell} ({} guided)", group.guided_count);
        for r in &group.rollouts {
            println!("  [{}]{}  -> {}", render(&r.guidance), render(&r.output), r.reward);
        }
    }
    Ok(())
}
