//! Plain GRPO on chain_sum: no guidance, token-global loss.
//!
//! cargo run --release --example vanilla_grpo

use guided_grpo::harness::{train, TrainerConfig};

fn main() -> guided_grpo::Result<()> {
    let cfg = TrainerConfig { lr: 1.0, epochs: 4, ..TrainerConfig::default() }.vanilla();
    let run = train(&cfg)?;
    for m in run.metrics.iter().step_by(20) {
        println!("step {:4}  reward {:.3}  sigma {:.3}  kl {:.5}", m.step, m.mean_reward, m.adv_sigma, m.kl);
    }
    let eval = run.eval.expect("eval_per_tier > 0");
    println!("held-out greedy accuracy {:.3}", eval.accuracy);
    Ok(())
}
