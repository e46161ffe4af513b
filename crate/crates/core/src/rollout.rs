//! Group sampling with guidance injection.
//!
//! The first `⌈αG⌉` candidates of a group get the first `ℓ` tokens of the
//! prompt's reasoning trace teacher-forced at the start of their thinking
//! trajectory; generation then continues from `question ++ guidance`. The
//! remaining candidates sample from the question alone.

use std::io::Write;

use crate::error::{Error, Result};
use crate::guidance::{guided_count, slice_guidance};
use crate::policy::PolicySnapshot;
use crate::rng::RngStream;
use crate::tasks::{format_tokens, trace_of, verify, Prompt, Token};

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub prompt_id: u64,
    pub index: usize,
    pub guidance: Vec<Token>,
    pub output: Vec<Token>,
    pub behavior_logprobs_g: Vec<f64>,
    pub behavior_logprobs_o: Vec<f64>,
    pub reward: f64,
    /// Budget ran out before EOS.
    pub truncated: bool,
}

impl Rollout {
    pub fn is_guided(&self) -> bool {
        !self.guidance.is_empty()
    }

    /// Guidance followed by the sampled output: the full thinking trajectory.
    pub fn completion(&self) -> Vec<Token> {
        let mut out = self.guidance.clone();
        out.extend_from_slice(&self.output);
        out
    }

    pub fn len(&self) -> usize {
        self.guidance.len() + self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub prompt_id: u64,
    /// Question tokens the rollouts were conditioned on.
    pub question: Vec<Token>,
    pub rollouts: Vec<Rollout>,
    pub guided_count: usize,
}

impl Group {
    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }

    pub fn has_guidance(&self) -> bool {
        self.rollouts.iter().any(Rollout::is_guided)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSpec {
    pub group_size: usize,
    pub alpha: f64,
    pub ell: usize,
    /// Maximum sampled tokens per output (guidance does not count).
    pub budget: usize,
    pub temperature: f64,
}

/// Samples one group for `prompt` from the behavior snapshot. Rollout `i`
/// draws from `stream.derive(i)`.
pub fn rollout_group(
    behavior: &PolicySnapshot,
    prompt: &Prompt,
    spec: &RolloutSpec,
    stream: RngStream,
) -> Result<Group> {
    if spec.group_size < 2 {
        return Err(Error::invalid(format!(
            "group size {} < 2: group statistics are undefined",
            spec.group_size
        )));
    }
    if spec.budget == 0 {
        return Err(Error::invalid("budget must be at least 1"));
    }
    let n_guided = guided_count(spec.alpha, spec.group_size)?;
    let guidance = slice_guidance(trace_of(prompt), spec.ell);
    let mut rollouts = Vec::with_capacity(spec.group_size);
    for i in 0..spec.group_size {
        let g: &[Token] = if i < n_guided { guidance } else { &[] };
        let behavior_logprobs_g = if g.is_empty() {
            Vec::new()
        } else {
            behavior.sequence_log_probs(&prompt.question, &[], g)?
        };
        let sample = behavior.sample_tokens(
            &prompt.question,
            g,
            spec.budget,
            spec.temperature,
            stream.derive(i as u64),
        )?;
        let truncated = sample.tokens.last() != Some(&Token::EOS);
        let mut rollout = Rollout {
            prompt_id: prompt.id,
            index: i,
            guidance: g.to_vec(),
            output: sample.tokens,
            behavior_logprobs_g,
            behavior_logprobs_o: sample.logprobs,
            reward: 0.0,
            truncated,
        };
        rollout.reward = verify(prompt, &rollout.completion());
        rollouts.push(rollout);
    }
    Ok(Group {
        prompt_id: prompt.id,
        question: prompt.question.clone(),
        rollouts,
        guided_count: n_guided,
    })
}

/// Debug dump: `prompt_id, i, |g|, tokens, reward`, tab-separated, one line per rollout.
pub fn write_rollouts(w: &mut impl Write, groups: &[Group]) -> std::io::Result<()> {
    for g in groups {
        for r in &g.rollouts {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                r.prompt_id,
                r.index,
                r.guidance.len(),
                format_tokens(&r.completion()),
                r.reward
            )?;
        }
    }
    Ok(())
}
