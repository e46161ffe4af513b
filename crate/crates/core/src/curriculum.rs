//! Dataset ordering (random vs easy-to-hard) and hard-sample filtering.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tasks::{generate_tier, Prompt, TaskKind, MAX_TIER, MIN_TIER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderingKind {
    Random,
    Curriculum,
}

impl FromStr for OrderingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(OrderingKind::Random),
            "curriculum" => Ok(OrderingKind::Curriculum),
            other => Err(Error::invalid(format!("unknown ordering {other:?}"))),
        }
    }
}

impl fmt::Display for OrderingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderingKind::Random => "random",
            OrderingKind::Curriculum => "curriculum",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingPlan {
    pub kind: OrderingKind,
    pub seed: u64,
    pub order: Vec<u64>,
}

impl OrderingPlan {
    pub fn new(dataset: &[Prompt], kind: OrderingKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            order: order_dataset(dataset, kind, seed),
        }
    }
}

/// Prompt ids in presentation order. Curriculum sorts by tier, ties by id.
pub fn order_dataset(dataset: &[Prompt], kind: OrderingKind, seed: u64) -> Vec<u64> {
    let mut keyed: Vec<(u8, u64)> = dataset.iter().map(|p| (p.tier, p.id)).collect();
    match kind {
        OrderingKind::Curriculum => keyed.sort(),
        OrderingKind::Random => {
            keyed.shuffle(&mut RngStream::new(seed).derive(0x5EED).rng());
        }
    }
    keyed.into_iter().map(|(_, id)| id).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Original,
    Remove,
    Replace,
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(FilterKind::Original),
            "remove" => Ok(FilterKind::Remove),
            "replace" => Ok(FilterKind::Replace),
            other => Err(Error::invalid(format!("unknown filter {other:?}"))),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Original => "original",
            FilterKind::Remove => "remove",
            FilterKind::Replace => "replace",
        })
    }
}

pub const DEFAULT_HARD_THRESHOLD: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterPlan {
    pub kind: FilterKind,
    /// Prompts with a tier above this count as hard.
    pub hard_tier_threshold: u8,
}

impl Default for FilterPlan {
    fn default() -> Self {
        Self {
            kind: FilterKind::Original,
            hard_tier_threshold: DEFAULT_HARD_THRESHOLD,
        }
    }
}

impl FilterPlan {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_TIER..=MAX_TIER).contains(&self.hard_tier_threshold) {
            return Err(Error::invalid(format!(
                "hard tier threshold {} outside [{MIN_TIER},{MAX_TIER}]",
                self.hard_tier_threshold
            )));
        }
        Ok(())
    }
}

/// Applies `plan`. Replacement prompts are fresh threshold-tier instances of
/// `task` with ids above every existing id, placed where the hard ones were.
pub fn filter_dataset(dataset: &[Prompt], plan: &FilterPlan, task: TaskKind, seed: u64) -> Result<Vec<Prompt>> {
    plan.validate()?;
    let hard = |p: &Prompt| p.tier > plan.hard_tier_threshold;
    match plan.kind {
        FilterKind::Original => Ok(dataset.to_vec()),
        FilterKind::Remove => Ok(dataset.iter().filter(|p| !hard(p)).cloned().collect()),
        FilterKind::Replace => {
            let moderate = plan.hard_tier_threshold;
            if !dataset.iter().any(|p| p.tier == moderate) {
                return Err(Error::EmptyReplacementPool);
            }
            let n_hard = dataset.iter().filter(|p| hard(p)).count();
            let first_id = dataset.iter().map(|p| p.id + 1).max().unwrap_or(0);
            let mut fresh = generate_tier(task, moderate, n_hard, seed ^ 0xF11E_0000, first_id).into_iter();
            Ok(dataset
                .iter()
                .map(|p| if hard(p) { fresh.next().expect("one fresh prompt per hard prompt") } else { p.clone() })
                .collect())
        }
    }
}
