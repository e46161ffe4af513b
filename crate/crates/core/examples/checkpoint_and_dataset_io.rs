//! Dataset export/import, metrics records and policy checkpoints.

use guided_grpo::harness::{emit_metrics, read_metrics, train, training_set, TrainerConfig};
use guided_grpo::policy::Policy;
use guided_grpo::tasks::{read_dataset, write_dataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("guided-grpo-io");
    std::fs::create_dir_all(&dir)?;

    let cfg = TrainerConfig { epochs: 1, steps_per_epoch: Some(10), ..TrainerConfig::default() };
    let data = training_set(&cfg)?;
    write_dataset(dir.join("dataset.tsv"), &data)?;
    assert_eq!(read_dataset(dir.join("dataset.tsv"))?, data);

    let run = train(&cfg)?;
    emit_metrics(&run.metrics, dir.join("metrics.csv"))?;
    assert_eq!(read_metrics(dir.join("metrics.csv"))?, run.metrics);

    run.policy.write_checkpoint(dir.join("policy.ckpt"))?;
    assert_eq!(Policy::read_checkpoint(dir.join("policy.ckpt"))?, run.policy);

    println!("{} prompts, {} metric records, {} policy rows round-tripped under {}",
        data.len(), run.metrics.len(), run.policy.num_contexts(), dir.display());
    Ok(())
}
