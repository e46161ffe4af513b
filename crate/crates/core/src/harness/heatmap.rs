//! Rollout reward matrices and their block-pooled summaries.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::policy::{Policy, SnapshotRole};
use crate::rng::RngStream;
use crate::rollout::{rollout_group, RolloutSpec};
use crate::tasks::Prompt;

/// Mean over non-overlapping `pool × pool` blocks. Both dimensions must be multiples of `pool`.
pub fn pooled_heatmap(rewards: &[Vec<f64>], pool: usize) -> Result<Vec<Vec<f64>>> {
    if pool == 0 {
        return Err(Error::invalid("pool size must be at least 1"));
    }
    let rows = rewards.len();
    let cols = rewards.first().map_or(0, Vec::len);
    if rewards.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("reward matrix rows have different lengths"));
    }
    if !rows.is_multiple_of(pool) || !cols.is_multiple_of(pool) {
        return Err(Error::invalid(format!(
            "{rows}x{cols} matrix is not divisible into {pool}x{pool} blocks"
        )));
    }
    let area = (pool * pool) as f64;
    Ok((0..rows / pool)
        .map(|i| {
            (0..cols / pool)
                .map(|j| {
                    let mut s = 0.0;
                    for r in &rewards[i * pool..(i + 1) * pool] {
                        s += r[j * pool..(j + 1) * pool].iter().sum::<f64>();
                    }
                    s / area
                })
                .collect()
        })
        .collect())
}

/// `rows × cols` rollout rewards in row-major sampling order: prompt `p`
/// (cycling through `prompts`) contributes one group per `group_size` cells.
pub fn reward_matrix(
    policy: &Policy,
    prompts: &[Prompt],
    spec: &RolloutSpec,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if prompts.is_empty() {
        return Err(Error::invalid("no prompts to roll out"));
    }
    let cells = rows * cols;
    let n_groups = cells.div_ceil(spec.group_size);
    let snap = policy.snapshot(SnapshotRole::Old);
    let root = RngStream::new(seed);
    let rewards: Vec<Vec<f64>> = (0..n_groups)
        .into_par_iter()
        .map(|i| {
            let p = &prompts[i % prompts.len()];
            rollout_group(&snap, p, spec, root.derive(i as u64)).map(|g| g.rewards())
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = rewards.into_iter().flatten().take(cells).collect();
    Ok(flat.chunks(cols.max(1)).map(<[f64]>::to_vec).collect())
}

pub fn write_matrix_csv(w: &mut impl std::io::Write, m: &[Vec<f64>]) -> std::io::Result<()> {
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
