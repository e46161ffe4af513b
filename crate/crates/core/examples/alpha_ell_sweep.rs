//! Fixed-guidance grid over the guided fraction α and the length ℓ.

use guided_grpo::harness::{sweep_grid, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = TrainerConfig { train_per_tier: 10, eval_per_tier: 0, lr: 1.0, epochs: 4, ..TrainerConfig::default() };
    let table = sweep_grid(&base, &[1.0 / 6.0, 0.5, 5.0 / 6.0, 1.0], &[3, 6, 9, 12])?;
    table.write_csv(&mut std::io::stdout())?;
    Ok(())
}
