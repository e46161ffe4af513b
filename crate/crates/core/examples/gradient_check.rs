//! Analytic loss gradient against central finite differences.

use guided_grpo::grpo::{guided_loss, loss_and_gradient, HyperParams};
use guided_grpo::harness::{base_policy, TrainerConfig};
use guided_grpo::policy::SnapshotRole;
use guided_grpo::rollout::{rollout_group, RolloutSpec};
use guided_grpo::tasks::{generate_tier, TaskKind};
use guided_grpo::RngStream;

fn main() -> guided_grpo::Result<()> {
    let cfg = TrainerConfig::default();
    let reference = base_policy(&cfg)?;
    let old = reference.snapshot(SnapshotRole::Old);
    let spec = RolloutSpec { group_size: 4, alpha: 0.5, ell: 12, budget: 8, temperature: 1.0 };
    let groups = generate_tier(TaskKind::ChainSumMod10, 1, 2, 5, 0)
        .iter()
        .map(|p| rollout_group(&old, p, &spec, RngStream::new(p.id)))
        .collect::<guided_grpo::Result<Vec<_>>>()?;

    // Move the current policy away from old/ref so ratios and KL are nontrivial.
    let hp = HyperParams::default();
    let mut policy = reference.clone();
    let (_, g) = loss_and_gradient(&groups, &policy, old.policy(), &reference, &hp)?;
    policy.apply_gradient(&g, 0.3)?;

    let (_, grad) = loss_and_gradient(&groups, &policy, old.policy(), &reference, &hp)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (ctx, row) in grad.rows().take(6) {
        for (v, analytic) in row.iter().enumerate() {
            let base = policy.logit(ctx, v);
            let mut shifted = policy.clone();
            shifted.set_logit(*ctx, v, base + h);
            let up = guided_loss(&groups, &shifted, old.policy(), &reference, &hp)?.total;
            shifted.set_logit(*ctx, v, base - h);
            let down = guided_loss(&groups, &shifted, old.policy(), &reference, &hp)?.total;
            let numeric = (up - down) / (2.0 * h);
            if analytic.abs().max(numeric.abs()) > 1e-8 {
                worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
            }
        }
    }
    println!("{} contexts with gradient, max relative error {worst:.2e}", grad.contexts().count());
    Ok(())
}
