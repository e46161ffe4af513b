//! How much guidance each step receives.
//!
//! * [`guided_count`] turns a guidance ratio into the number of guided
//!   candidates per group (the first `⌈αG⌉` candidates are guided).
//! * [`schedule_length`] evaluates the fixed decay schedules.
//! * [`GuidanceState::adaptive_update`] is the reward-history controller that
//!   rescales the guidance length every step.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tasks::Token;

/// Slack absorbed before rounding so that values like `62.499999999999993`
/// (which are `62.5` up to representation error) still round half-up.
const ROUND_SLACK: f64 = 1e-9;

fn round_half_up(x: f64) -> f64 {
    (x + 0.5 + ROUND_SLACK).floor()
}

pub fn guided_count(alpha: f64, group_size: usize) -> Result<usize> {
    if group_size == 0 {
        return Err(Error::invalid("group size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    if alpha == 0.0 {
        return Ok(0);
    }
    let raw = (alpha * group_size as f64 - ROUND_SLACK).ceil();
    Ok((raw.max(1.0) as usize).min(group_size))
}

pub fn slice_guidance(trace: &[Token], ell: usize) -> &[Token] {
    &trace[..ell.min(trace.len())]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleKind {
    /// `ℓ0 (1 - t/T)^β`, β > 1.
    Concave { beta: f64 },
    /// `ℓ0 (1 - t/T)`.
    Linear,
    /// `ℓ0 γ^⌊t/s⌋`.
    Stepwise { gamma: f64, interval: usize },
    Fixed,
}

impl ScheduleKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScheduleKind::Concave { .. } => "concave",
            ScheduleKind::Linear => "linear",
            ScheduleKind::Stepwise { .. } => "stepwise",
            ScheduleKind::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePolicy {
    pub kind: ScheduleKind,
    pub ell0: usize,
    pub total_steps: usize,
}

impl SchedulePolicy {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ScheduleKind::Concave { beta } if !(beta > 1.0 && beta.is_finite()) => {
                Err(Error::invalid(format!("concave beta {beta} must be > 1")))
            }
            ScheduleKind::Stepwise { gamma, .. } if !(gamma > 0.0 && gamma < 1.0) => {
                Err(Error::invalid(format!("stepwise gamma {gamma} must lie in (0, 1)")))
            }
            ScheduleKind::Stepwise { interval: 0, .. } => {
                Err(Error::invalid("stepwise interval must be at least 1"))
            }
            ScheduleKind::Concave { .. } | ScheduleKind::Linear if self.total_steps == 0 => {
                Err(Error::invalid("decay schedules need total_steps >= 1"))
            }
            _ => Ok(()),
        }
    }
}

/// Guidance length at step `t` (0 ≤ t ≤ T), rounded half-up.
pub fn schedule_length(policy: &SchedulePolicy, t: usize) -> Result<usize> {
    policy.validate()?;
    if t > policy.total_steps {
        return Err(Error::invalid(format!(
            "step {t} beyond schedule horizon {}",
            policy.total_steps
        )));
    }
    let ell0 = policy.ell0 as f64;
    let frac = || 1.0 - t as f64 / policy.total_steps as f64;
    let value = match policy.kind {
        ScheduleKind::Concave { beta } => ell0 * frac().powf(beta),
        ScheduleKind::Linear => ell0 * frac(),
        ScheduleKind::Stepwise { gamma, interval } => ell0 * gamma.powi((t / interval) as i32),
        ScheduleKind::Fixed => ell0,
    };
    Ok(round_half_up(value) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ControllerMode {
    /// `ℓ_{k+1} = ℓ_k · m·r_k / H`: grows when the current reward beats history.
    Literal,
    /// `ℓ_{k+1} = ℓ_k · H / (m·r_k)`: shrinks when rewards rise.
    #[default]
    Inverse,
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(ControllerMode::Literal),
            "inverse" => Ok(ControllerMode::Inverse),
            other => Err(Error::invalid(format!("unknown controller mode {other:?}"))),
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerMode::Literal => "literal",
            ControllerMode::Inverse => "inverse",
        })
    }
}

pub const DEFAULT_H_FLOOR: f64 = 1e-3;
pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceState {
    ell: usize,
    history: VecDeque<f64>,
    window: usize,
    ell_min: usize,
    ell_max: usize,
    mode: ControllerMode,
    h_floor: f64,
}

impl GuidanceState {
    /// Starts at `ell0` with bounds `[0, ell0]`.
    pub fn new(ell0: usize, window: usize, mode: ControllerMode) -> Result<Self> {
        Self::with_bounds(ell0, window, mode, 0, ell0, DEFAULT_H_FLOOR)
    }

    pub fn with_bounds(
        ell0: usize,
        window: usize,
        mode: ControllerMode,
        ell_min: usize,
        ell_max: usize,
        h_floor: f64,
    ) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("window must be at least 1"));
        }
        if ell_min > ell_max {
            return Err(Error::invalid(format!("bounds [{ell_min}, {ell_max}] are empty")));
        }
        if !(ell_min..=ell_max).contains(&ell0) {
            return Err(Error::invalid(format!(
                "initial length {ell0} outside [{ell_min}, {ell_max}]"
            )));
        }
        if !(h_floor > 0.0 && h_floor.is_finite()) {
            return Err(Error::invalid(format!("h_floor {h_floor} must be > 0")));
        }
        Ok(Self {
            ell: ell0,
            history: VecDeque::with_capacity(window),
            window,
            ell_min,
            ell_max,
            mode,
            h_floor,
        })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn bounds(&self) -> (usize, usize) {
        (self.ell_min, self.ell_max)
    }

    /// Most recent first.
    pub fn history(&self) -> impl Iterator<Item = f64> + '_ {
        self.history.iter().rev().copied()
    }

    fn check_reward(r: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::invalid(format!("reward {r} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn push_reward(&mut self, r: f64) -> Result<()> {
        Self::check_reward(r)?;
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(r);
        Ok(())
    }

    /// Step-`k` update from the step's mean reward `r_k`. Returns the new length.
    /// Both `H` and `m·r_k` are floored at `h_floor` in either mode.
    pub fn adaptive_update(&mut self, r_k: f64, k: usize) -> Result<usize> {
        Self::check_reward(r_k)?;
        if k == 0 {
            return Err(Error::invalid("adaptive update needs k >= 1"));
        }
        let m = self.window.min(k);
        if self.history.len() < m {
            return Err(Error::invalid(format!(
                "need {m} history entries, have {}",
                self.history.len()
            )));
        }
        let h: f64 = self.history.iter().rev().take(m).sum();
        let current = m as f64 * r_k;
        let ratio = match self.mode {
            ControllerMode::Literal => current.max(self.h_floor) / h.max(self.h_floor),
            ControllerMode::Inverse => h.max(self.h_floor) / current.max(self.h_floor),
        };
        let next = round_half_up(self.ell as f64 * ratio);
        self.ell = next.clamp(self.ell_min as f64, self.ell_max as f64) as usize;
        self.push_reward(r_k)?;
        Ok(self.ell)
    }

    /// Records step `k`'s reward: step 0 only seeds the history, later steps
    /// run the adaptive update.
    pub fn observe(&mut self, r_k: f64, k: usize) -> Result<usize> {
        if k == 0 {
            self.push_reward(r_k)?;
            Ok(self.ell)
        } else {
            self.adaptive_update(r_k, k)
        }
    }
}
