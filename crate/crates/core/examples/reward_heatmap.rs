//! Rollout rewards of the base policy on hard prompts, pooled 2×2.

use guided_grpo::harness::{base_policy, pooled_heatmap, reward_matrix, TrainerConfig};
use guided_grpo::rollout::RolloutSpec;
use guided_grpo::tasks::{generate_tier, TaskKind, MAX_TIER};

fn main() -> guided_grpo::Result<()> {
    let policy = base_policy(&TrainerConfig::default())?;
    let prompts = generate_tier(TaskKind::ChainSumMod10, MAX_TIER, 20, 1, 0);
    for (alpha, ell) in [(0.0, 0), (0.5, 12)] {
        let spec = RolloutSpec { group_size: 14, alpha, ell, budget: 24, temperature: 0.6 };
        let m = reward_matrix(&policy, &prompts, &spec, 20, 14, 0)?;
        println!("alpha={alpha} ell={ell}");
        for row in pooled_heatmap(&m, 2)? {
            let shades: String = row.iter().map(|v| [' ', '.', ':', '*', '#'][(v * 4.0).round() as usize]).collect();
            println!("  |{shades}|");
        }
    }
    Ok(())
}
