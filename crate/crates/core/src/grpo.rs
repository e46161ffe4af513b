//! Group-relative advantages, the clipped surrogate, k3 KL regularization,
//! and the two objectives built from them:
//!
//! * the vanilla objective, normalized by the total number of output tokens
//!   in the group ([`Normalization::TokenGlobal`]);
//! * the guided objective, which averages each rollout over its guidance and
//!   output tokens and then averages rollouts with weight `1/G`
//!   ([`Normalization::PerSequence`]). Guidance tokens carry loss with the
//!   rollout's advantage.
//!
//! Both are returned as losses (negated objectives) and averaged over groups.
//! Gradients are exact: with a tabular softmax policy,
//! `∂ log π(a|c) / ∂ θ[c][v] = 1{v=a} − π(v|c)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::policy::{Gradient, Policy};
use crate::rollout::Group;

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageSet {
    pub advantages: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the rewards.
    pub std: f64,
}

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

/// `Â_i = (r_i − μ)/σ` with the population σ; all zeros when `σ <= sigma_floor`.
pub fn compute_advantages(rewards: &[f64], sigma_floor: f64) -> Result<AdvantageSet> {
    if rewards.is_empty() {
        return Err(Error::invalid("cannot normalize an empty reward group"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let advantages = if std > sigma_floor {
        rewards.iter().map(|r| (r - mean) / std).collect()
    } else {
        vec![0.0; rewards.len()]
    };
    Ok(AdvantageSet { advantages, mean, std })
}

pub fn token_ratio(new_logprob: f64, old_logprob: f64) -> f64 {
    (new_logprob - old_logprob).exp()
}

/// `min(w·Â, clip(w, 1−ε, 1+ε)·Â)`.
pub fn clipped_term(w: f64, advantage: f64, eps: f64) -> f64 {
    let unclipped = w * advantage;
    let clipped = w.clamp(1.0 - eps, 1.0 + eps) * advantage;
    unclipped.min(clipped)
}

/// Derivative of [`clipped_term`] with respect to the new log-probability.
fn clipped_term_dlogp(w: f64, advantage: f64, eps: f64) -> f64 {
    let unclipped = w * advantage;
    let clipped = w.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        unclipped
    } else {
        0.0
    }
}

/// k3 estimator `ρ − ln ρ − 1` with `ρ = π_ref / π_θ`.
pub fn kl_token(ref_logprob: f64, new_logprob: f64) -> f64 {
    let log_rho = ref_logprob - new_logprob;
    // exp_m1 avoids the cancellation in exp(x) - 1 for small x.
    (log_rho.exp_m1() - log_rho).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    TokenGlobal,
    PerSequence,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "token_global" => Ok(Normalization::TokenGlobal),
            "per_sequence" => Ok(Normalization::PerSequence),
            other => Err(Error::invalid(format!("unknown normalization {other:?}"))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::TokenGlobal => "token_global",
            Normalization::PerSequence => "per_sequence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub clip_eps: f64,
    pub kl_coef: f64,
    pub sigma_floor: f64,
    pub normalization: Normalization,
    /// Whether guidance tokens contribute to the KL term.
    pub kl_on_guidance: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_coef: 0.04,
            sigma_floor: DEFAULT_SIGMA_FLOOR,
            normalization: Normalization::PerSequence,
            kl_on_guidance: true,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid(format!("clip epsilon {} outside (0, 1)", self.clip_eps)));
        }
        if !(self.kl_coef >= 0.0 && self.kl_coef.is_finite()) {
            return Err(Error::invalid(format!("kl coefficient {} must be >= 0", self.kl_coef)));
        }
        if self.sigma_floor.is_nan() || self.sigma_floor <= 0.0 {
            return Err(Error::invalid(format!("sigma floor {} must be > 0", self.sigma_floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    /// `surrogate + β·kl`.
    pub total: f64,
    /// Negated normalized sum of clipped terms.
    pub surrogate: f64,
    /// Normalized sum of per-token k3 values (before multiplying by β).
    pub kl: f64,
    /// Each rollout's share of `total`, groups in order.
    pub per_rollout: Vec<f64>,
}

fn evaluate(
    groups: &[Group],
    new: &Policy,
    old: &Policy,
    reference: &Policy,
    hp: &HyperParams,
    norm: Normalization,
    mut grad: Option<&mut Gradient>,
) -> Result<LossBreakdown> {
    hp.validate()?;
    if new.shape() != old.shape() || new.shape() != reference.shape() {
        return Err(Error::invalid("new, old and reference policies must share a context shape"));
    }
    let mut out = LossBreakdown {
        total: 0.0,
        surrogate: 0.0,
        kl: 0.0,
        per_rollout: Vec::new(),
    };
    if groups.is_empty() {
        return Ok(out);
    }
    let group_weight = 1.0 / groups.len() as f64;
    for group in groups {
        if group.rollouts.is_empty() {
            return Err(Error::invalid(format!("group {} has no rollouts", group.prompt_id)));
        }
        if norm == Normalization::TokenGlobal && group.has_guidance() {
            return Err(Error::GuidedRolloutInVanillaLoss);
        }
        if let Some(r) = group.rollouts.iter().find(|r| r.output.is_empty()) {
            return Err(Error::invalid(format!(
                "rollout {} of prompt {} has an empty output",
                r.index, group.prompt_id
            )));
        }
        let adv = compute_advantages(&group.rewards(), hp.sigma_floor)?;
        let output_tokens: usize = group.rollouts.iter().map(|r| r.output.len()).sum();
        let g = group.rollouts.len() as f64;

        for (rollout, &a) in group.rollouts.iter().zip(&adv.advantages) {
            let weight = group_weight
                * match norm {
                    Normalization::TokenGlobal => 1.0 / output_tokens as f64,
                    Normalization::PerSequence => 1.0 / (g * rollout.len() as f64),
                };
            let completion = rollout.completion();
            let n_guidance = rollout.guidance.len();
            let mut contribution = 0.0;
            for t in 0..completion.len() {
                let tok = completion[t].index();
                let ctx = new.context(&group.question, &completion[..t]);
                let new_lp_row = new.log_probs_row(&ctx);
                let new_lp = new_lp_row[tok];
                let old_lp = old.log_probs_row(&ctx)[tok];
                let ref_lp = reference.log_probs_row(&ctx)[tok];

                let w = token_ratio(new_lp, old_lp);
                let c = clipped_term(w, a, hp.clip_eps);
                let with_kl = t >= n_guidance || hp.kl_on_guidance;
                let k3 = if with_kl { kl_token(ref_lp, new_lp) } else { 0.0 };

                out.surrogate -= weight * c;
                out.kl += weight * k3;
                contribution -= weight * (c - hp.kl_coef * k3);

                if let Some(grad) = grad.as_deref_mut() {
                    let dk3 = if with_kl { 1.0 - (ref_lp - new_lp).exp() } else { 0.0 };
                    let dlogp = -weight * (clipped_term_dlogp(w, a, hp.clip_eps) - hp.kl_coef * dk3);
                    if dlogp != 0.0 {
                        let row = grad.row_mut(ctx);
                        for (v, lp) in new_lp_row.iter().enumerate() {
                            let indicator = if v == tok { 1.0 } else { 0.0 };
                            row[v] += dlogp * (indicator - lp.exp());
                        }
                    }
                }
            }
            out.per_rollout.push(contribution);
        }
    }
    out.total = out.surrogate + hp.kl_coef * out.kl;
    Ok(out)
}

/// Vanilla objective (token-global normalization). Rejects guided rollouts.
pub fn grpo_loss(
    groups: &[Group],
    new: &Policy,
    old: &Policy,
    reference: &Policy,
    hp: &HyperParams,
) -> Result<LossBreakdown> {
    evaluate(groups, new, old, reference, hp, Normalization::TokenGlobal, None)
}

/// Guided objective (per-sequence normalization, guidance tokens included).
pub fn guided_loss(
    groups: &[Group],
    new: &Policy,
    old: &Policy,
    reference: &Policy,
    hp: &HyperParams,
) -> Result<LossBreakdown> {
    evaluate(groups, new, old, reference, hp, Normalization::PerSequence, None)
}

/// Loss selected by `hp.normalization` together with its exact gradient.
pub fn loss_and_gradient(
    groups: &[Group],
    new: &Policy,
    old: &Policy,
    reference: &Policy,
    hp: &HyperParams,
) -> Result<(LossBreakdown, Gradient)> {
    let mut grad = Gradient::new(new.vocab_size());
    let loss = evaluate(groups, new, old, reference, hp, hp.normalization, Some(&mut grad))?;
    Ok((loss, grad))
}

pub fn loss_gradient(
    groups: &[Group],
    new: &Policy,
    old: &Policy,
    reference: &Policy,
    hp: &HyperParams,
) -> Result<Gradient> {
    loss_and_gradient(groups, new, old, reference, hp).map(|(_, g)| g)
}
