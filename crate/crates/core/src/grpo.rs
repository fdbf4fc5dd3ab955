//! Group Relative Policy Optimization.
//!
//! Each of the `G` responses to one query gets the advantage
//! `(r_i - mean) / std` (population std), broadcast to every one of its tokens.
//! The objective is the PPO clipped surrogate averaged per response and then
//! over the group:
//!
//! ```text
//! J = 1/G * sum_i 1/|o_i| * sum_t min(ratio * A_i, clip(ratio, 1-eps, 1+eps) * A_i)
//! ```
//!
//! with `ratio = pi_theta / pi_old` per token. No KL penalty unless
//! [`GrpoConfig::kl_coef`] is set.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrpoError {
    #[error("group needs at least 2 members, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite reward at index {0}")]
    NonFiniteReward(usize),
    #[error("probability must be strictly positive and finite (member {member}, token {token})")]
    NumericalDomain { member: usize, token: usize },
    #[error("member {0} has no tokens")]
    EmptyResponse(usize),
    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),
    #[error("invalid config: {0}")]
    Config(&'static str),
    #[error("batch shape mismatch")]
    Shape,
}

pub const DEFAULT_STD_FLOOR: f64 = 1e-8;

/// Group mean, population standard deviation and per-member advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub rewards: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub advantages: Vec<f64>,
}

/// Computes group statistics. A group with no spread at all (every reward
/// identical) gets all-zero advantages; otherwise the divisor is
/// `max(std, std_floor)`.
pub fn group_stats(rewards: &[f64], std_floor: f64) -> Result<GroupStats, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward(i));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    let flat = rewards.iter().all(|&r| r == rewards[0]);
    let advantages = if flat {
        vec![0.0; rewards.len()]
    } else {
        let denom = if std > std_floor { std } else { std_floor };
        rewards.iter().map(|r| (r - mean) / denom).collect()
    };
    Ok(GroupStats { rewards: rewards.to_vec(), mean, std: if flat { 0.0 } else { std }, advantages })
}

pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, GrpoError> {
    group_stats(rewards, std_floor).map(|s| s.advantages)
}

/// Log-probabilities of one sampled token under the current and old policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    pub current: f64,
    pub old: f64,
}

impl TokenLogProbs {
    pub fn from_probs(current: f64, old: f64) -> Option<Self> {
        let ok = |p: f64| p.is_finite() && p > 0.0;
        (ok(current) && ok(old)).then(|| Self { current: libm::log(current), old: libm::log(old) })
    }

    pub fn ratio(&self) -> f64 {
        libm::exp(self.current - self.old)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub tokens: Vec<TokenLogProbs>,
    pub reward: f64,
}

/// `G` responses to one query with their group-normalized advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub members: Vec<GroupMember>,
    pub stats: GroupStats,
}

impl RolloutGroup {
    pub fn new(members: Vec<GroupMember>, std_floor: f64) -> Result<Self, GrpoError> {
        let rewards: Vec<f64> = members.iter().map(|m| m.reward).collect();
        let stats = group_stats(&rewards, std_floor)?;
        Ok(Self { members, stats })
    }

    /// Advantage of token `t` of member `i`; constant over `t`.
    pub fn advantage(&self, member: usize, _token: usize) -> f64 {
        self.stats.advantages[member]
    }
}

/// `min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv)`.
pub fn clipped_term(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    let a = ratio * advantage;
    let b = clipped * advantage;
    if a < b {
        a
    } else {
        b
    }
}

/// True when the clipped branch is the active minimum (zero gradient).
pub fn is_clipped(ratio: f64, advantage: f64, eps: f64) -> bool {
    (advantage > 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps)
}

/// GRPO objective of one group. Probabilities must be strictly positive.
pub fn grpo_objective(group: &RolloutGroup, eps: f64) -> Result<f64, GrpoError> {
    let g = group.members.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    let mut total = 0.0;
    for (i, member) in group.members.iter().enumerate() {
        if member.tokens.is_empty() {
            return Err(GrpoError::EmptyResponse(i));
        }
        let mut sum = 0.0;
        for (t, tok) in member.tokens.iter().enumerate() {
            if !tok.current.is_finite() || !tok.old.is_finite() {
                return Err(GrpoError::NumericalDomain { member: i, token: t });
            }
            sum += clipped_term(tok.ratio(), group.advantage(i, t), eps);
        }
        total += sum / member.tokens.len() as f64;
    }
    Ok(total / g as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoConfig {
    pub clip_epsilon: f64,
    pub std_floor: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    /// Weight of the k3 KL estimate against the old-policy snapshot. Zero by default.
    pub kl_coef: f64,
    /// Gradient steps per batch against one old-policy snapshot.
    pub inner_steps: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self::action_level()
    }
}

impl GrpoConfig {
    /// Single-step action-level training: 8 rollouts, temperature 1.
    pub fn action_level() -> Self {
        Self {
            clip_epsilon: 0.2,
            std_floor: DEFAULT_STD_FLOOR,
            group_size: 8,
            learning_rate: 1e-7,
            temperature: 1.0,
            kl_coef: 0.0,
            inner_steps: 1,
        }
    }

    /// Multi-turn task-level training: 4 rollouts, temperature 1.
    pub fn task_level() -> Self {
        Self { group_size: 4, learning_rate: 1e-6, ..Self::action_level() }
    }

    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(GrpoError::Config("clip_epsilon must lie in (0, 1)"));
        }
        if self.std_floor.is_nan() || self.std_floor < 0.0 {
            return Err(GrpoError::Config("std_floor must be >= 0"));
        }
        if self.group_size < 2 {
            return Err(GrpoError::Config("group_size must be >= 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(GrpoError::Config("learning_rate must be finite and >= 0"));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GrpoError::Config("temperature must be >= 0"));
        }
        if self.kl_coef.is_nan() || self.kl_coef < 0.0 {
            return Err(GrpoError::Config("kl_coef must be >= 0"));
        }
        if self.inner_steps == 0 {
            return Err(GrpoError::Config("inner_steps must be >= 1"));
        }
        Ok(())
    }
}

/// A policy with flat parameters and differentiable per-token log-probabilities.
pub trait DifferentiablePolicy {
    type Token;

    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn log_prob(&self, token: &Self::Token) -> f64;
    /// Returns `log pi(token)` and adds its gradient into `grad`.
    fn accumulate_log_prob_grad(&self, token: &Self::Token, grad: &mut [f64]) -> f64;
}

/// One sampled response: its tokens and scalar reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub tokens: Vec<T>,
    pub reward: f64,
}

/// Objective value and gradient over a batch of groups.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub clip_fraction: f64,
}

/// Frozen old-policy log-probabilities, `[group][member][token]`.
pub type OldLogProbs = Vec<Vec<Vec<f64>>>;

pub fn snapshot_log_probs<P: DifferentiablePolicy>(policy: &P, batch: &[Vec<Sample<P::Token>>]) -> OldLogProbs {
    batch
        .iter()
        .map(|group| group.iter().map(|s| s.tokens.iter().map(|t| policy.log_prob(t)).collect()).collect())
        .collect()
}

/// Batch objective (mean over groups of the per-group GRPO objective, minus
/// the optional KL term) with its analytic gradient.
pub fn objective_and_grad<P: DifferentiablePolicy>(
    policy: &P,
    batch: &[Vec<Sample<P::Token>>],
    old: &OldLogProbs,
    advantages: &[Vec<f64>],
    cfg: &GrpoConfig,
) -> Result<ObjectiveEval, GrpoError> {
    if batch.is_empty() || old.len() != batch.len() || advantages.len() != batch.len() {
        return Err(GrpoError::Shape);
    }
    let eps = cfg.clip_epsilon;
    let n_params = policy.params().len();
    let mut value = 0.0;
    let mut grad = vec![0.0; n_params];
    let mut token_grad = vec![0.0; n_params];
    let (mut tokens, mut clipped) = (0usize, 0usize);
    let batch_weight = 1.0 / batch.len() as f64;

    for ((group, old_group), adv_group) in batch.iter().zip(old).zip(advantages) {
        let g = group.len();
        if g < 2 {
            return Err(GrpoError::GroupTooSmall(g));
        }
        if old_group.len() != g || adv_group.len() != g {
            return Err(GrpoError::Shape);
        }
        for (i, sample) in group.iter().enumerate() {
            let len = sample.tokens.len();
            if len == 0 {
                return Err(GrpoError::EmptyResponse(i));
            }
            if old_group[i].len() != len {
                return Err(GrpoError::Shape);
            }
            let weight = batch_weight / (g as f64 * len as f64);
            let adv = adv_group[i];
            for (t, tok) in sample.tokens.iter().enumerate() {
                token_grad.iter_mut().for_each(|v| *v = 0.0);
                let logp = policy.accumulate_log_prob_grad(tok, &mut token_grad);
                let logp_old = old_group[i][t];
                if !logp.is_finite() || !logp_old.is_finite() {
                    return Err(GrpoError::NumericalDomain { member: i, token: t });
                }
                let ratio = libm::exp(logp - logp_old);
                value += weight * clipped_term(ratio, adv, eps);
                tokens += 1;
                // d(term)/d(logp): ratio * adv on the unclipped branch, else 0
                let mut coeff = 0.0;
                if is_clipped(ratio, adv, eps) {
                    clipped += 1;
                } else {
                    coeff += ratio * adv;
                }
                if cfg.kl_coef > 0.0 {
                    // k3 estimator: exp(old - cur) - (old - cur) - 1
                    let r = libm::exp(logp_old - logp);
                    value -= weight * cfg.kl_coef * (r - (logp_old - logp) - 1.0);
                    coeff -= cfg.kl_coef * (1.0 - r);
                }
                for (acc, d) in grad.iter_mut().zip(&token_grad) {
                    *acc += weight * coeff * d;
                }
            }
        }
    }
    let clip_fraction = if tokens == 0 { 0.0 } else { clipped as f64 / tokens as f64 };
    Ok(ObjectiveEval { value, grad, clip_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateDiagnostics {
    pub objective_before: f64,
    pub objective_after: f64,
    pub mean_abs_advantage: f64,
    pub clip_fraction: f64,
    pub mean_reward: f64,
    pub grad_norm: f64,
}

/// Gradient ascent on the batch objective. The old-policy snapshot is taken
/// once at entry and held for `cfg.inner_steps` steps.
pub fn policy_update<P: DifferentiablePolicy>(
    policy: &mut P,
    batch: &[Vec<Sample<P::Token>>],
    cfg: &GrpoConfig,
) -> Result<UpdateDiagnostics, GrpoError> {
    cfg.validate()?;
    let advantages = batch
        .iter()
        .map(|group| {
            let rewards: Vec<f64> = group.iter().map(|s| s.reward).collect();
            group_advantages(&rewards, cfg.std_floor)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let old = snapshot_log_probs(policy, batch);

    let first = objective_and_grad(policy, batch, &old, &advantages, cfg)?;
    let objective_before = first.value;
    let mut eval = first;
    let mut clip_fraction = eval.clip_fraction;
    let mut grad_norm = 0.0;
    for step in 0..cfg.inner_steps {
        if step > 0 {
            eval = objective_and_grad(policy, batch, &old, &advantages, cfg)?;
            clip_fraction = eval.clip_fraction;
        }
        if let Some(i) = eval.grad.iter().position(|g| !g.is_finite()) {
            return Err(GrpoError::NonFiniteGradient(i));
        }
        grad_norm = libm::sqrt(eval.grad.iter().map(|g| g * g).sum());
        for (p, g) in policy.params_mut().iter_mut().zip(&eval.grad) {
            *p += cfg.learning_rate * g;
        }
    }
    let after = objective_and_grad(policy, batch, &old, &advantages, cfg)?;

    let all_adv: Vec<f64> = advantages.iter().flatten().copied().collect();
    let all_rewards: Vec<f64> = batch.iter().flatten().map(|s| s.reward).collect();
    Ok(UpdateDiagnostics {
        objective_before,
        objective_after: after.value,
        mean_abs_advantage: all_adv.iter().map(|a| a.abs()).sum::<f64>() / all_adv.len().max(1) as f64,
        clip_fraction,
        mean_reward: all_rewards.iter().sum::<f64>() / all_rewards.len().max(1) as f64,
        grad_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy::{SoftmaxPolicy, TokenChoice};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn member(ratios: &[f64], reward: f64) -> GroupMember {
        GroupMember {
            tokens: ratios.iter().map(|&r| TokenLogProbs::from_probs(0.5 * r, 0.5).unwrap()).collect(),
            reward,
        }
    }

    #[test]
    fn advantages_of_binary_group() {
        assert_eq!(group_advantages(&[1.0, 1.0, 0.0, 0.0], DEFAULT_STD_FLOOR).unwrap(), vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(group_advantages(&[0.0, 1.0], DEFAULT_STD_FLOOR).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn zero_variance_group() {
        for c in [0.0, 0.1, 1.25, -0.7, 1e9] {
            assert_eq!(group_advantages(&[c; 4], DEFAULT_STD_FLOOR).unwrap(), vec![0.0; 4]);
        }
    }

    #[test]
    fn floor_applies_below_threshold() {
        let adv = group_advantages(&[0.0, 1e-10], 1e-8).unwrap();
        // std = 5e-11 < floor, so deviations divide by the floor
        assert!((adv[0] + 5e-11 / 1e-8).abs() < 1e-15);
        assert!((adv[1] - 5e-11 / 1e-8).abs() < 1e-15);
    }

    #[test]
    fn too_small_group() {
        assert_eq!(group_advantages(&[1.0], 0.0), Err(GrpoError::GroupTooSmall(1)));
        assert_eq!(group_advantages(&[1.0, f64::NAN], 0.0), Err(GrpoError::NonFiniteReward(1)));
    }

    #[test]
    fn normalization_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = rng.gen_range(0.1..10.0);
            let b = rng.gen_range(-5.0..5.0);
            let shifted: Vec<f64> = r.iter().map(|x| a * x + b).collect();
            let lhs = group_advantages(&shifted, DEFAULT_STD_FLOOR).unwrap();
            let rhs = group_advantages(&r, DEFAULT_STD_FLOOR).unwrap();
            for (l, r) in lhs.iter().zip(&rhs) {
                assert!((l - r).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ratio_one_objective_is_zero() {
        let group = RolloutGroup::new(
            vec![member(&[1.0, 1.0], 2.0), member(&[1.0], 0.0), member(&[1.0, 1.0, 1.0], 1.0)],
            DEFAULT_STD_FLOOR,
        )
        .unwrap();
        assert!(grpo_objective(&group, 0.2).unwrap().abs() < 1e-15);
    }

    #[test]
    fn single_token_clip_arithmetic() {
        assert_eq!(clipped_term(2.0, 1.0, 0.2), 1.2);
        assert_eq!(clipped_term(2.0, -1.0, 0.2), -2.0);
        assert_eq!(clipped_term(0.5, -1.0, 0.2), -0.8);
        assert!(is_clipped(2.0, 1.0, 0.2));
        assert!(!is_clipped(2.0, -1.0, 0.2));
    }

    #[test]
    fn objective_rejects_bad_probabilities() {
        assert!(TokenLogProbs::from_probs(0.0, 0.5).is_none());
        assert!(TokenLogProbs::from_probs(0.5, -1.0).is_none());
        let mut group = RolloutGroup::new(vec![member(&[1.0], 1.0), member(&[1.0], 0.0)], 0.0).unwrap();
        group.members[0].tokens[0].current = f64::NEG_INFINITY;
        assert_eq!(grpo_objective(&group, 0.2), Err(GrpoError::NumericalDomain { member: 0, token: 0 }));
    }

    #[test]
    fn objective_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let members: Vec<GroupMember> = (0..5)
            .map(|_| {
                let n = rng.gen_range(1..5);
                let ratios: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
                member(&ratios, rng.gen_range(0.0..2.0))
            })
            .collect();
        let a = grpo_objective(&RolloutGroup::new(members.clone(), 1e-8).unwrap(), 0.2).unwrap();
        let mut rev = members;
        rev.reverse();
        let b = grpo_objective(&RolloutGroup::new(rev, 1e-8).unwrap(), 0.2).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_update_leaves_params() {
        let mut policy = SoftmaxPolicy::new(1, 2);
        policy.params_mut().copy_from_slice(&[0.3, -0.2]);
        let batch = vec![vec![
            Sample { tokens: vec![TokenChoice { context: 0, choice: 0 }], reward: 1.0 },
            Sample { tokens: vec![TokenChoice { context: 0, choice: 1 }], reward: 1.0 },
        ]];
        let cfg = GrpoConfig { learning_rate: 0.5, ..GrpoConfig::default() };
        let diag = policy_update(&mut policy, &batch, &cfg).unwrap();
        assert_eq!(policy.params(), &[0.3, -0.2]);
        assert_eq!(diag.mean_abs_advantage, 0.0);
    }

    #[test]
    fn ratio_one_gradient_is_policy_gradient() {
        // at pi = pi_old, dJ/dtheta = mean_i 1/|o_i| sum_t A_i grad log pi
        let mut policy = SoftmaxPolicy::new(2, 3);
        policy.params_mut().copy_from_slice(&[0.1, -0.4, 0.7, 0.0, 0.2, -0.3]);
        let tok = |c, a| TokenChoice { context: c, choice: a };
        let batch = vec![vec![
            Sample { tokens: vec![tok(0, 1), tok(1, 2)], reward: 2.0 },
            Sample { tokens: vec![tok(0, 0)], reward: 0.0 },
            Sample { tokens: vec![tok(1, 0), tok(0, 2), tok(1, 1)], reward: 1.0 },
        ]];
        let cfg = GrpoConfig::default();
        let adv = vec![group_advantages(&[2.0, 0.0, 1.0], cfg.std_floor).unwrap()];
        let old = snapshot_log_probs(&policy, &batch);
        let eval = objective_and_grad(&policy, &batch, &old, &adv, &cfg).unwrap();
        let mut expected = [0.0; 6];
        for (i, s) in batch[0].iter().enumerate() {
            for t in &s.tokens {
                let mut g = vec![0.0; 6];
                policy.accumulate_log_prob_grad(t, &mut g);
                for (e, gk) in expected.iter_mut().zip(&g) {
                    *e += adv[0][i] * gk / (3.0 * s.tokens.len() as f64);
                }
            }
        }
        for (g, e) in eval.grad.iter().zip(expected) {
            assert!((g - e).abs() < 1e-12);
        }
        assert_eq!(eval.clip_fraction, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        assert!(GrpoConfig { clip_epsilon: 1.0, ..GrpoConfig::default() }.validate().is_err());
        assert!(GrpoConfig { group_size: 1, ..GrpoConfig::default() }.validate().is_err());
        assert_eq!(GrpoConfig::task_level().group_size, 4);
        assert_eq!(GrpoConfig::action_level().group_size, 8);
    }
}
