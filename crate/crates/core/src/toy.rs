//! Desk-scale differentiable policies and the two-armed GUI bandit.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grpo::{self, DifferentiablePolicy, GrpoConfig, GrpoError, Sample};
use crate::protocol::{parse_turn, render_turn, Action, ScreenSize};
use crate::reward::{action_reward, BBox, GroundTruthStep, MatchConfig};

/// One categorical decision: which `choice` was taken in `context`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenChoice {
    pub context: usize,
    pub choice: usize,
}

/// Tabular softmax policy: one logit row per context.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    choices: usize,
    logits: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn new(contexts: usize, choices: usize) -> Self {
        assert!(contexts > 0 && choices > 0);
        Self { choices, logits: vec![0.0; contexts * choices] }
    }

    pub fn with_logits(contexts: usize, choices: usize, logits: &[f64]) -> Self {
        assert_eq!(logits.len(), contexts * choices);
        Self { choices, logits: logits.to_vec() }
    }

    fn row(&self, context: usize) -> &[f64] {
        &self.logits[context * self.choices..(context + 1) * self.choices]
    }

    /// Action probabilities in `context` at temperature 1.
    pub fn probs(&self, context: usize) -> Vec<f64> {
        softmax(self.row(context), 1.0)
    }

    /// Samples a choice; temperature 0 is greedy (lowest index wins ties).
    pub fn sample<R: Rng>(&self, context: usize, temperature: f64, rng: &mut R) -> usize {
        let row = self.row(context);
        if temperature <= 0.0 {
            return argmax(row);
        }
        let probs = softmax(row, temperature);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn softmax(row: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = row.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| libm::exp(l - max)).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + libm::log(row.iter().map(|l| libm::exp(l - max)).sum::<f64>())
}

impl DifferentiablePolicy for SoftmaxPolicy {
    type Token = TokenChoice;

    fn params(&self) -> &[f64] {
        &self.logits
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn log_prob(&self, token: &TokenChoice) -> f64 {
        let row = self.row(token.context);
        row[token.choice] - log_sum_exp(row)
    }

    fn accumulate_log_prob_grad(&self, token: &TokenChoice, grad: &mut [f64]) -> f64 {
        let row = self.row(token.context);
        let probs = softmax(row, 1.0);
        let base = token.context * self.choices;
        for (k, p) in probs.iter().enumerate() {
            let indicator = if k == token.choice { 1.0 } else { 0.0 };
            grad[base + k] += indicator - p;
        }
        row[token.choice] - log_sum_exp(row)
    }
}

/// Two on-screen buttons; tapping the target earns `r_action = 2`, the decoy 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuiBandit {
    pub screen: ScreenSize,
    pub target: BBox,
    pub decoy: BBox,
}

impl Default for GuiBandit {
    fn default() -> Self {
        Self {
            screen: ScreenSize::new(1080, 2400),
            target: BBox { x1: 140, y1: 1000, x2: 480, y2: 1200 },
            decoy: BBox { x1: 600, y1: 1000, x2: 940, y2: 1200 },
        }
    }
}

impl GuiBandit {
    /// Agent response for arm 0 (target) or arm 1 (decoy).
    pub fn response(&self, arm: usize) -> alloc::string::String {
        let (bbox, label) = if arm == 0 { (self.target, "confirm") } else { (self.decoy, "cancel") };
        let at = bbox.center();
        render_turn(
            "two buttons are shown, tap the highlighted one, to finish the task",
            label,
            &Action::click(at.x, at.y),
        )
    }

    /// Reward of one response, graded by the regular parser and reward rules.
    pub fn reward(&self, response: &str) -> f64 {
        let turn = parse_turn(response, Some(self.screen));
        action_reward(&turn, &GroundTruthStep::click(self.target), MatchConfig::default())
            .map(|r| f64::from(r.r_action))
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditTrainConfig {
    pub updates: usize,
    pub groups_per_update: usize,
    pub grpo: GrpoConfig,
    pub initial_logits: [f64; 2],
    pub seed: u64,
}

impl Default for BanditTrainConfig {
    fn default() -> Self {
        Self {
            updates: 200,
            groups_per_update: 4,
            grpo: GrpoConfig { learning_rate: 0.05, inner_steps: 2, ..GrpoConfig::action_level() },
            initial_logits: [-1.0, 0.0],
            seed: 0,
        }
    }
}

/// One line of the learning curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub objective: f64,
    pub clip_fraction: f64,
    pub mean_reward: f64,
    pub target_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Trailing moving average of `mean_reward` over `window` points.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let window = window.max(1);
        let rewards: Vec<f64> = self.points.iter().map(|p| p.mean_reward).collect();
        (0..rewards.len())
            .map(|i| {
                let lo = (i + 1).saturating_sub(window);
                rewards[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
            })
            .collect()
    }

    /// Mean reward of the first and of the last `window` points.
    pub fn initial_and_final(&self, window: usize) -> (f64, f64) {
        let n = self.points.len();
        let w = window.clamp(1, n.max(1));
        let mean = |s: &[CurvePoint]| s.iter().map(|p| p.mean_reward).sum::<f64>() / s.len().max(1) as f64;
        (mean(&self.points[..w.min(n)]), mean(&self.points[n.saturating_sub(w)..]))
    }
}

/// GRPO on the two-armed GUI bandit. Deterministic for a fixed seed.
pub fn train_bandit(bandit: &GuiBandit, cfg: &BanditTrainConfig) -> Result<(SoftmaxPolicy, LearningCurve), GrpoError> {
    cfg.grpo.validate()?;
    let mut policy = SoftmaxPolicy::with_logits(1, 2, &cfg.initial_logits);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = LearningCurve::default();
    for step in 0..cfg.updates {
        let batch: Vec<Vec<Sample<TokenChoice>>> = (0..cfg.groups_per_update)
            .map(|_| {
                (0..cfg.grpo.group_size)
                    .map(|_| {
                        let arm = policy.sample(0, cfg.grpo.temperature, &mut rng);
                        let reward = bandit.reward(&bandit.response(arm));
                        Sample { tokens: vec![TokenChoice { context: 0, choice: arm }], reward }
                    })
                    .collect()
            })
            .collect();
        let diag = grpo::policy_update(&mut policy, &batch, &cfg.grpo)?;
        curve.points.push(CurvePoint {
            step,
            objective: diag.objective_after,
            clip_fraction: diag.clip_fraction,
            mean_reward: diag.mean_reward,
            target_prob: policy.probs(0)[0],
        });
    }
    Ok((policy, curve))
}
