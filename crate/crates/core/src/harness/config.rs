//! Trainer configuration and its flat `key=value` text form.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::curriculum::{FilterKind, FilterPlan, OrderingKind};
use crate::error::{Error, Result};
use crate::grpo::{HyperParams, Normalization};
use crate::guidance::{ControllerMode, ScheduleKind, SchedulePolicy, DEFAULT_H_FLOOR, DEFAULT_WINDOW};
use crate::policy::PolicyShape;
use crate::tasks::{TaskKind, MAX_TIER};

macro_rules! keyword_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq)]
        pub enum $name { $($variant),+ }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $text),+ })
            }
        }
    };
}

keyword_enum!(
    /// Where each step's guidance length comes from. Exactly one is active.
    GuidanceSource { Fixed => "fixed", Schedule => "schedule", Adaptive => "adaptive" }
);

keyword_enum!(
    ScheduleName { Concave => "concave", Linear => "linear", Stepwise => "stepwise", Fixed => "fixed" }
);

keyword_enum!(
    /// Which rollouts feed the adaptive controller's step reward.
    RewardPool { All => "all", Guided => "guided", Unguided => "unguided" }
);

keyword_enum!(
    /// Snapshot the outputs are sampled from.
    SampleFrom { Old => "old", Ref => "ref" }
);

keyword_enum!(
    LrSchedule { Constant => "constant", Cosine => "cosine" }
);

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub source: GuidanceSource,
    /// Length used by the fixed source.
    pub ell: usize,
    /// Starting length for the schedule and adaptive sources.
    pub ell0: usize,
    pub schedule: ScheduleName,
    pub concave_beta: f64,
    pub step_gamma: f64,
    pub step_interval: usize,
    pub mode: ControllerMode,
    pub window: usize,
    pub ell_min: usize,
    /// Defaults to `ell0` when unset.
    pub ell_max: Option<usize>,
    pub h_floor: f64,
    pub reward_pool: RewardPool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            source: GuidanceSource::Adaptive,
            ell: 0,
            ell0: 64,
            schedule: ScheduleName::Linear,
            concave_beta: 2.0,
            step_gamma: 0.5,
            step_interval: 50,
            mode: ControllerMode::Inverse,
            window: DEFAULT_WINDOW,
            ell_min: 0,
            ell_max: None,
            h_floor: DEFAULT_H_FLOOR,
            reward_pool: RewardPool::All,
        }
    }
}

impl GuidanceConfig {
    pub fn fixed(ell: usize) -> Self {
        Self {
            source: GuidanceSource::Fixed,
            ell,
            ..Default::default()
        }
    }

    pub fn adaptive(ell0: usize, mode: ControllerMode) -> Self {
        Self {
            source: GuidanceSource::Adaptive,
            ell0,
            mode,
            ..Default::default()
        }
    }

    pub fn schedule(name: ScheduleName, ell0: usize) -> Self {
        Self {
            source: GuidanceSource::Schedule,
            schedule: name,
            ell0,
            ..Default::default()
        }
    }

    pub fn schedule_policy(&self, total_steps: usize) -> SchedulePolicy {
        let kind = match self.schedule {
            ScheduleName::Concave => ScheduleKind::Concave { beta: self.concave_beta },
            ScheduleName::Linear => ScheduleKind::Linear,
            ScheduleName::Stepwise => ScheduleKind::Stepwise {
                gamma: self.step_gamma,
                interval: self.step_interval,
            },
            ScheduleName::Fixed => ScheduleKind::Fixed,
        };
        SchedulePolicy {
            kind,
            ell0: self.ell0,
            total_steps,
        }
    }

    pub fn upper_bound(&self) -> usize {
        self.ell_max.unwrap_or(self.ell0)
    }
}

/// Supervised warm start that produces the base policy RL starts from:
/// maximum likelihood on reference completions of easy prompts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmStart {
    /// Highest tier in the warm-start corpus; 0 disables the warm start.
    pub max_tier: u8,
    pub per_tier: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for WarmStart {
    fn default() -> Self {
        Self {
            max_tier: 1,
            per_tier: 60,
            epochs: 5,
            lr: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub task: TaskKind,
    pub train_per_tier: usize,
    /// Held-out prompts per tier for the final greedy evaluation (0 skips it).
    pub eval_per_tier: usize,
    pub group_size: usize,
    pub alpha: f64,
    pub guidance: GuidanceConfig,
    pub hp: HyperParams,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub epochs: usize,
    /// Batches per epoch; `None` means one pass over the dataset.
    pub steps_per_epoch: Option<usize>,
    pub batch_size: usize,
    /// Gradient steps per rollout batch.
    pub inner_updates: usize,
    pub budget: usize,
    pub temperature: f64,
    pub ordering: OrderingKind,
    pub filter: FilterPlan,
    pub sample_from: SampleFrom,
    pub policy: PolicyShape,
    pub warm_start: WarmStart,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::ChainSumMod10,
            train_per_tier: 40,
            eval_per_tier: 40,
            group_size: 12,
            alpha: 0.25,
            guidance: GuidanceConfig::default(),
            hp: HyperParams::default(),
            lr: 0.1,
            lr_schedule: LrSchedule::Constant,
            epochs: 1,
            steps_per_epoch: None,
            batch_size: 8,
            inner_updates: 1,
            budget: 24,
            temperature: 0.6,
            ordering: OrderingKind::Curriculum,
            filter: FilterPlan::default(),
            sample_from: SampleFrom::Old,
            policy: PolicyShape::default(),
            warm_start: WarmStart::default(),
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::invalid(format!("{key}={value}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("{key}={value}: expected a boolean"))),
    }
}

impl TrainerConfig {
    /// Vanilla GRPO: no guidance, token-global normalization.
    pub fn vanilla(mut self) -> Self {
        self.alpha = 0.0;
        self.guidance = GuidanceConfig::fixed(0);
        self.hp.normalization = Normalization::TokenGlobal;
        self
    }

    pub fn steps_per_epoch_for(&self, dataset_len: usize) -> usize {
        self.steps_per_epoch
            .unwrap_or_else(|| dataset_len.div_ceil(self.batch_size.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::invalid("group_size must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.train_per_tier == 0 {
            return Err(Error::invalid("train_per_tier must be at least 1"));
        }
        if self.batch_size == 0 || self.inner_updates == 0 || self.budget == 0 {
            return Err(Error::invalid("batch_size, inner_updates and budget must be positive"));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::invalid("steps_per_epoch must be positive when set"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr {} must be > 0", self.lr)));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {} must be >= 0", self.temperature)));
        }
        self.hp.validate()?;
        self.filter.validate()?;
        self.policy.validate()?;
        if self.hp.normalization == Normalization::TokenGlobal && self.alpha > 0.0 {
            return Err(Error::invalid(
                "token_global normalization is the vanilla objective; it requires alpha = 0",
            ));
        }
        if self.warm_start.max_tier > MAX_TIER {
            return Err(Error::invalid(format!("warm_tiers {} > {MAX_TIER}", self.warm_start.max_tier)));
        }
        if self.warm_start.max_tier > 0 && (self.warm_start.lr.is_nan() || self.warm_start.lr <= 0.0) {
            return Err(Error::invalid("warm_lr must be > 0"));
        }
        let g = &self.guidance;
        match g.source {
            GuidanceSource::Fixed => {}
            GuidanceSource::Schedule => g.schedule_policy(1).validate()?,
            GuidanceSource::Adaptive => {
                if g.window == 0 {
                    return Err(Error::invalid("window must be at least 1"));
                }
                if !(g.ell_min..=g.upper_bound()).contains(&g.ell0) {
                    return Err(Error::invalid(format!(
                        "ell0 {} outside [{}, {}]",
                        g.ell0,
                        g.ell_min,
                        g.upper_bound()
                    )));
                }
                if g.h_floor.is_nan() || g.h_floor <= 0.0 {
                    return Err(Error::invalid("h_floor must be > 0"));
                }
            }
        }
        Ok(())
    }

    /// Sets one flat key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "task" => self.task = parse(key, v)?,
            "train_per_tier" => self.train_per_tier = parse(key, v)?,
            "eval_per_tier" => self.eval_per_tier = parse(key, v)?,
            "group_size" => self.group_size = parse(key, v)?,
            "alpha" => self.alpha = parse_fraction(key, v)?,
            "guidance" => self.guidance.source = parse(key, v)?,
            "ell" => self.guidance.ell = parse(key, v)?,
            "ell0" => self.guidance.ell0 = parse(key, v)?,
            "schedule" => self.guidance.schedule = parse(key, v)?,
            "concave_beta" => self.guidance.concave_beta = parse(key, v)?,
            "step_gamma" => self.guidance.step_gamma = parse(key, v)?,
            "step_interval" => self.guidance.step_interval = parse(key, v)?,
            "controller_mode" => self.guidance.mode = parse(key, v)?,
            "window" => self.guidance.window = parse(key, v)?,
            "ell_min" => self.guidance.ell_min = parse(key, v)?,
            "ell_max" => {
                self.guidance.ell_max = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "h_floor" => self.guidance.h_floor = parse(key, v)?,
            "reward_pool" => self.guidance.reward_pool = parse(key, v)?,
            "clip_eps" => self.hp.clip_eps = parse(key, v)?,
            "kl_coef" => self.hp.kl_coef = parse(key, v)?,
            "sigma_floor" => self.hp.sigma_floor = parse(key, v)?,
            "normalization" => self.hp.normalization = parse(key, v)?,
            "kl_on_guidance" => self.hp.kl_on_guidance = parse_bool(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "lr_schedule" => self.lr_schedule = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "steps_per_epoch" => {
                self.steps_per_epoch = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "batch_size" => self.batch_size = parse(key, v)?,
            "inner_updates" => self.inner_updates = parse(key, v)?,
            "budget" => self.budget = parse(key, v)?,
            "temperature" => self.temperature = parse(key, v)?,
            "ordering" => self.ordering = parse(key, v)?,
            "filter" => self.filter.kind = parse::<FilterKind>(key, v)?,
            "hard_threshold" => self.filter.hard_tier_threshold = parse(key, v)?,
            "sample_from" => self.sample_from = parse(key, v)?,
            "order" => self.policy.order = parse(key, v)?,
            "aligned_read" => self.policy.aligned_read = parse_bool(key, v)?,
            "warm_tiers" => self.warm_start.max_tier = parse(key, v)?,
            "warm_per_tier" => self.warm_start.per_tier = parse(key, v)?,
            "warm_epochs" => self.warm_start.epochs = parse(key, v)?,
            "warm_lr" => self.warm_start.lr = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Every key with its current value, in a form [`apply_text`](Self::apply_text) reads back.
    pub fn to_kv(&self) -> String {
        let g = &self.guidance;
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |x| x.to_string());
        let mut s = String::new();
        let pairs: Vec<(&str, String)> = vec![
            ("task", self.task.to_string()),
            ("train_per_tier", self.train_per_tier.to_string()),
            ("eval_per_tier", self.eval_per_tier.to_string()),
            ("group_size", self.group_size.to_string()),
            ("alpha", format!("{:?}", self.alpha)),
            ("guidance", g.source.to_string()),
            ("ell", g.ell.to_string()),
            ("ell0", g.ell0.to_string()),
            ("schedule", g.schedule.to_string()),
            ("concave_beta", format!("{:?}", g.concave_beta)),
            ("step_gamma", format!("{:?}", g.step_gamma)),
            ("step_interval", g.step_interval.to_string()),
            ("controller_mode", g.mode.to_string()),
            ("window", g.window.to_string()),
            ("ell_min", g.ell_min.to_string()),
            ("ell_max", opt(g.ell_max)),
            ("h_floor", format!("{:?}", g.h_floor)),
            ("reward_pool", g.reward_pool.to_string()),
            ("clip_eps", format!("{:?}", self.hp.clip_eps)),
            ("kl_coef", format!("{:?}", self.hp.kl_coef)),
            ("sigma_floor", format!("{:?}", self.hp.sigma_floor)),
            ("normalization", self.hp.normalization.to_string()),
            ("kl_on_guidance", self.hp.kl_on_guidance.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("lr_schedule", self.lr_schedule.to_string()),
            ("epochs", self.epochs.to_string()),
            ("steps_per_epoch", opt(self.steps_per_epoch)),
            ("batch_size", self.batch_size.to_string()),
            ("inner_updates", self.inner_updates.to_string()),
            ("budget", self.budget.to_string()),
            ("temperature", format!("{:?}", self.temperature)),
            ("ordering", self.ordering.to_string()),
            ("filter", self.filter.kind.to_string()),
            ("hard_threshold", self.filter.hard_tier_threshold.to_string()),
            ("sample_from", self.sample_from.to_string()),
            ("order", self.policy.order.to_string()),
            ("aligned_read", self.policy.aligned_read.to_string()),
            ("warm_tiers", self.warm_start.max_tier.to_string()),
            ("warm_per_tier", self.warm_start.per_tier.to_string()),
            ("warm_epochs", self.warm_start.epochs.to_string()),
            ("warm_lr", format!("{:?}", self.warm_start.lr)),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// Accepts decimals and simple fractions such as `5/6`.
pub fn parse_fraction(key: &str, v: &str) -> Result<f64> {
    match v.split_once('/') {
        Some((n, d)) => {
            let n: f64 = parse(key, n.trim())?;
            let d: f64 = parse(key, d.trim())?;
            if d == 0.0 {
                return Err(Error::invalid(format!("{key}={v}: zero denominator")));
            }
            Ok(n / d)
        }
        None => parse(key, v),
    }
}
