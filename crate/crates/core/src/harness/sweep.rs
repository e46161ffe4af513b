//! Grids of independent training runs, summarized as tables.

use std::io::Write;

use rayon::prelude::*;

use crate::curriculum::{FilterKind, OrderingKind};
use crate::error::{Error, Result};
use crate::tasks::{MAX_TIER, MIN_TIER};

use super::config::{GuidanceConfig, ScheduleName, TrainerConfig};
use super::trainer::{train, RunResult};

/// Labeled matrix of run summaries. A cell holds the error text of a failed run.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub corner: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub cells: Vec<Vec<std::result::Result<f64, String>>>,
}

impl Table {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells.get(row)?.get(col)?.as_ref().ok().copied()
    }

    /// Header line, then one line per row; failed cells read `failed`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{},{}", self.corner, self.col_labels.join(","))?;
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Ok(v) => format!("{v}"),
                    Err(_) => "failed".to_string(),
                })
                .collect();
            writeln!(w, "{label},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.row_labels.iter().zip(&self.cells).flat_map(move |(r, row)| {
            self.col_labels
                .iter()
                .zip(row)
                .filter_map(move |(c, cell)| cell.as_ref().err().map(|e| (r.as_str(), c.as_str(), e.as_str())))
        })
    }
}

/// Runs every config independently (in parallel); results keep input order.
pub fn run_all(configs: &[TrainerConfig]) -> Vec<std::result::Result<RunResult, String>> {
    configs
        .par_iter()
        .map(|c| train(c).map_err(|e| e.to_string()))
        .collect()
}

fn label(x: f64) -> String {
    format!("{x:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
}

fn accuracy(r: &RunResult) -> std::result::Result<f64, String> {
    r.eval
        .as_ref()
        .map(|e| e.accuracy)
        .ok_or_else(|| "no held-out evaluation (eval_per_tier = 0)".to_string())
}

/// One fixed-guidance run per `(α, ℓ)`. Rows are `ells`, columns `alphas`,
/// cells the final-window mean reward.
pub fn sweep_grid(base: &TrainerConfig, alphas: &[f64], ells: &[usize]) -> Result<Table> {
    if alphas.is_empty() || ells.is_empty() {
        return Err(Error::invalid("sweep grids must be nonempty"));
    }
    let configs: Vec<TrainerConfig> = ells
        .iter()
        .flat_map(|&ell| {
            alphas.iter().map(move |&alpha| TrainerConfig {
                alpha,
                guidance: GuidanceConfig { source: super::config::GuidanceSource::Fixed, ell, ..base.guidance.clone() },
                ..base.clone()
            })
        })
        .collect();
    let runs = run_all(&configs);
    let cells = runs
        .chunks(alphas.len())
        .map(|row| row.iter().map(|r| r.as_ref().map(RunResult::final_window_reward).map_err(Clone::clone)).collect())
        .collect();
    Ok(Table {
        corner: "ell\\alpha".into(),
        row_labels: ells.iter().map(ToString::to_string).collect(),
        col_labels: alphas.iter().map(|a| label(*a)).collect(),
        cells,
    })
}

/// One schedule run per `(ℓ0, α)` setting and schedule shape; cells are held-out accuracy.
pub fn schedule_compare(base: &TrainerConfig, settings: &[(usize, f64)], schedules: &[ScheduleName]) -> Result<Table> {
    if settings.is_empty() || schedules.is_empty() {
        return Err(Error::invalid("schedule comparison needs settings and schedules"));
    }
    let configs: Vec<TrainerConfig> = settings
        .iter()
        .flat_map(|&(ell0, alpha)| {
            schedules.iter().map(move |&name| TrainerConfig {
                alpha,
                guidance: GuidanceConfig { schedule: name, ..GuidanceConfig::schedule(name, ell0) }
                    .with_schedule_params(&base.guidance),
                ..base.clone()
            })
        })
        .collect();
    let runs = run_all(&configs);
    Ok(Table {
        corner: "ell0/alpha\\schedule".into(),
        row_labels: settings.iter().map(|(l, a)| format!("{l}/{}", label(*a))).collect(),
        col_labels: schedules.iter().map(ToString::to_string).collect(),
        cells: runs
            .chunks(schedules.len())
            .map(|row| row.iter().map(|r| r.as_ref().map_err(Clone::clone).and_then(accuracy)).collect())
            .collect(),
    })
}

impl GuidanceConfig {
    fn with_schedule_params(mut self, from: &GuidanceConfig) -> Self {
        self.concave_beta = from.concave_beta;
        self.step_gamma = from.step_gamma;
        self.step_interval = from.step_interval;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    /// Rows: random, curriculum ordering. Columns: vanilla, guided (`base`'s guidance).
    pub ordering: Table,
    /// Rows: original, remove-hard, replace-hard. Columns: per-tier and overall accuracy.
    pub filtering: Table,
}

/// Ordering and hard-sample filtering ablations around `base` (whose guidance
/// is the "guided" arm). All cells are held-out greedy accuracy.
pub fn curriculum_ablate(base: &TrainerConfig) -> Result<Ablation> {
    let orderings = [OrderingKind::Random, OrderingKind::Curriculum];
    let filters = [FilterKind::Original, FilterKind::Remove, FilterKind::Replace];

    let mut configs = Vec::new();
    for ordering in orderings {
        configs.push(TrainerConfig { ordering, ..base.clone() }.vanilla());
        configs.push(TrainerConfig { ordering, ..base.clone() });
    }
    for kind in filters {
        let mut c = base.clone();
        c.filter.kind = kind;
        configs.push(c);
    }
    let runs = run_all(&configs);
    let (ord_runs, filter_runs) = runs.split_at(orderings.len() * 2);

    let ordering = Table {
        corner: "ordering\\method".into(),
        row_labels: orderings.iter().map(ToString::to_string).collect(),
        col_labels: vec!["vanilla".into(), "guided".into()],
        cells: ord_runs
            .chunks(2)
            .map(|row| row.iter().map(|r| r.as_ref().map_err(Clone::clone).and_then(accuracy)).collect())
            .collect(),
    };

    let mut col_labels: Vec<String> = (MIN_TIER..=MAX_TIER).map(|t| format!("tier{t}")).collect();
    col_labels.push("overall".into());
    let filtering = Table {
        corner: "filter\\accuracy".into(),
        row_labels: filters.iter().map(ToString::to_string).collect(),
        cells: filter_runs
            .iter()
            .map(|r| match r {
                Err(e) => vec![Err(e.clone()); col_labels.len()],
                Ok(run) => match &run.eval {
                    None => vec![Err("no held-out evaluation".to_string()); col_labels.len()],
                    Some(ev) => (MIN_TIER..=MAX_TIER)
                        .map(|t| ev.tier(t).ok_or_else(|| format!("no tier-{t} prompts")))
                        .chain(std::iter::once(Ok(ev.accuracy)))
                        .collect(),
                },
            })
            .collect(),
        col_labels,
    };
    Ok(Ablation { ordering, filtering })
}
