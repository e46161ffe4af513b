//! Concave, linear and stepwise guidance-length decay.

use guided_grpo::guidance::{schedule_length, ScheduleKind, SchedulePolicy};

fn main() -> guided_grpo::Result<()> {
    let total = 100;
    let kinds = [
        ScheduleKind::Concave { beta: 2.0 },
        ScheduleKind::Linear,
        ScheduleKind::Stepwise { gamma: 0.5, interval: 10 },
        ScheduleKind::Fixed,
    ];
    print!("{:>5}", "t");
    for k in &kinds {
        print!("{:>10}", k.name());
    }
    println!();
    for t in (0..=total).step_by(10) {
        print!("{t:>5}");
        for kind in kinds {
            let policy = SchedulePolicy { kind, ell0: 500, total_steps: total };
            print!("{:>10}", schedule_length(&policy, t)?);
        }
        println!();
    }
    Ok(())
}
