//! Easy-to-hard ordering and the remove/replace hard-sample filters.

use guided_grpo::curriculum::{filter_dataset, order_dataset, FilterKind, FilterPlan, OrderingKind};
use guided_grpo::harness::{curriculum_ablate, TrainerConfig};
use guided_grpo::tasks::{generate_dataset, TaskKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = generate_dataset(TaskKind::ChainSumMod10, 2, 7)?;
    for kind in [OrderingKind::Random, OrderingKind::Curriculum] {
        let tiers: Vec<u8> = order_dataset(&data, kind, 1)
            .iter()
            .map(|id| data.iter().find(|p| p.id == *id).unwrap().tier)
            .collect();
        println!("{kind:>10}: tiers {tiers:?}");
    }
    for kind in [FilterKind::Original, FilterKind::Remove, FilterKind::Replace] {
        let plan = FilterPlan { kind, hard_tier_threshold: 3 };
        let kept = filter_dataset(&data, &plan, TaskKind::ChainSumMod10, 1)?;
        let tiers: Vec<u8> = kept.iter().map(|p| p.tier).collect();
        println!("{kind:>10}: tiers {tiers:?}");
    }

    let base = TrainerConfig { alpha: 0.5, lr: 1.0, epochs: 4, ..TrainerConfig::default() };
    let ab = curriculum_ablate(&base)?;
    let mut out = std::io::stdout();
    ab.ordering.write_csv(&mut out)?;
    ab.filtering.write_csv(&mut out)?;
    Ok(())
}
