//! Reward-driven guidance length, both controller directions.

use guided_grpo::guidance::{ControllerMode, GuidanceState};
use guided_grpo::harness::{train, GuidanceConfig, TrainerConfig};

fn main() -> guided_grpo::Result<()> {
    // The controller alone on a rising reward curve.
    let rewards = [0.2, 0.3, 0.45, 0.5, 0.7, 0.6, 0.9];
    for mode in [ControllerMode::Inverse, ControllerMode::Literal] {
        let mut state = GuidanceState::with_bounds(64, 2, mode, 0, 256, 1e-3)?;
        let lengths: Vec<usize> = rewards
            .iter()
            .enumerate()
            .map(|(k, &r)| state.observe(r, k))
            .collect::<guided_grpo::Result<_>>()?;
        println!("{mode:?}: {lengths:?}");
    }

    // Inside a training run.
    let cfg = TrainerConfig {
        alpha: 0.5,
        lr: 1.0,
        epochs: 4,
        guidance: GuidanceConfig { ell_max: Some(12), ..GuidanceConfig::adaptive(12, ControllerMode::Inverse) },
        ..TrainerConfig::default()
    };
    let run = train(&cfg)?;
    for m in run.metrics.iter().step_by(10) {
        println!("step {:4}  reward {:.3}  ell {:2}", m.step, m.mean_reward, m.ell);
    }
    println!("held-out accuracy {:.3}", run.eval.map_or(0.0, |e| e.accuracy));
    Ok(())
}
