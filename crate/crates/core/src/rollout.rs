//! Rollout groups for both training stages, the judge contract and verdict
//! parsing. Transports live in the companion crate; everything here is
//! driven through [`PolicyFactory`] and [`Judge`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::grpo::{group_stats, GroupStats, GrpoError, DEFAULT_STD_FLOOR};
use crate::policies::{OraclePolicy, PolicyFactory};
use crate::prompt::judge_prompt;
use crate::protocol::{parse_turn, AgentTurn};
use crate::reward::{
    action_reward, normalize_judge_score, ActionReward, GroundTruthStep, MatchConfig, RewardBreakdown, RewardError,
};
use crate::sim::{
    run_task, AppScript, EnvState, Observation, Policy, PolicyError, Rollout, RunConfig, TaskSpec, DEFAULT_MAX_STEPS,
};
use crate::trajectory::{ObservationWindow, TerminalStatus, Trajectory, DEFAULT_WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ActionLevel,
    TaskLevel,
}

/// What to do when the judge fails after all retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeFallback {
    /// Abort the whole group.
    Reject,
    /// Use level 4 when the success predicate holds, else 0.
    PredicateScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictMode {
    /// First integer anywhere in the reply.
    FirstInteger,
    /// Requires a line `Level: N`.
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub stage: Stage,
    pub group_size: usize,
    pub temperature: f64,
    pub max_steps: usize,
    pub parallel_envs: usize,
    pub window: usize,
    /// Total judge calls allowed per trajectory.
    pub judge_retries: usize,
    /// Total policy calls allowed per turn.
    pub policy_retries: usize,
    pub judge_fallback: JudgeFallback,
    pub verdict_mode: VerdictMode,
    pub std_floor: f64,
    #[serde(default)]
    pub matching: MatchConfig,
}

impl StageConfig {
    pub fn action_level() -> Self {
        Self {
            stage: Stage::ActionLevel,
            group_size: 8,
            temperature: 1.0,
            max_steps: DEFAULT_MAX_STEPS,
            parallel_envs: 2,
            window: DEFAULT_WINDOW,
            judge_retries: 3,
            policy_retries: 3,
            judge_fallback: JudgeFallback::Reject,
            verdict_mode: VerdictMode::FirstInteger,
            std_floor: DEFAULT_STD_FLOOR,
            matching: MatchConfig::default(),
        }
    }

    pub fn task_level() -> Self {
        Self { stage: Stage::TaskLevel, group_size: 4, ..Self::action_level() }
    }

    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::ActionLevel => Self::action_level(),
            Stage::TaskLevel => Self::task_level(),
        }
    }

    pub fn validate(&self) -> Result<(), RolloutError> {
        let bad = |m: &str| Err(RolloutError::Config(m.into()));
        if self.group_size < 2 {
            return bad("group_size must be >= 2");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return bad("temperature must be >= 0");
        }
        if self.max_steps == 0 || self.window == 0 || self.parallel_envs == 0 {
            return bad("max_steps, window and parallel_envs must be >= 1");
        }
        if self.judge_retries == 0 || self.policy_retries == 0 {
            return bad("retry limits must be >= 1");
        }
        if self.std_floor.is_nan() || self.std_floor < 0.0 {
            return bad("std_floor must be >= 0");
        }
        Ok(())
    }

    fn run_config(&self) -> RunConfig {
        RunConfig { window: self.window, max_steps: Some(self.max_steps) }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("judge transport failed: {0}")]
    Transport(String),
    #[error("malformed verdict: {0}")]
    Malformed(String),
    #[error("verdict level {0} outside 0..=4")]
    OutOfRange(i64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error("invalid stage config: {0}")]
    Config(String),
    #[error("policy failed for member {member}: {error}")]
    Policy { member: usize, error: PolicyError },
    #[error("judge failed for member {member} after {calls} calls: {error}")]
    Judge { member: usize, calls: usize, error: JudgeError },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("reward {value} of member {member} outside [{min}, {max}]")]
    RewardRange { member: usize, value: f64, min: f64, max: f64 },
}

/// Retries transport and protocol failures up to `attempts` calls per turn.
pub struct RetryingPolicy<P> {
    pub inner: P,
    pub attempts: usize,
}

impl<P: Policy> Policy for RetryingPolicy<P> {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        let mut last = PolicyError::Transport("no attempts".into());
        for _ in 0..self.attempts.max(1) {
            match self.inner.respond(obs) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

// ---------------------------------------------------------------------------
// Stage 2: single-step groups
// ---------------------------------------------------------------------------

/// One single-turn query: the screens so far (last is current), the prior
/// turns and the reference action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Query {
    pub query_id: String,
    pub task: TaskSpec,
    pub states: Vec<EnvState>,
    pub history: Vec<String>,
    pub ground_truth: GroundTruthStep,
}

/// One query per step of the oracle path through `task`.
pub fn stage2_queries(script: &AppScript, task: &TaskSpec) -> Vec<Stage2Query> {
    let rollout = run_task(&mut OraclePolicy, script, task, &RunConfig::default(), &task.task_id);
    let mut history = Vec::new();
    let mut out = Vec::new();
    for (i, step) in rollout.trajectory.steps.iter().enumerate() {
        if let Some(gt) = &step.ground_truth {
            out.push(Stage2Query {
                query_id: format!("{}/{i:02}", task.task_id),
                task: task.clone(),
                states: rollout.states[..=i].to_vec(),
                history: history.clone(),
                ground_truth: gt.clone(),
            });
        }
        history.push(step.turn.raw.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMember {
    pub turn: AgentTurn,
    pub reward: ActionReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionGroup {
    pub query_id: String,
    pub members: Vec<ActionMember>,
    pub stats: GroupStats,
}

/// Samples `cfg.group_size` independent responses to one query and scores
/// each with the action-level reward.
pub fn rollout_group_stage2(
    script: &AppScript,
    query: &Stage2Query,
    cfg: &StageConfig,
    policies: &dyn PolicyFactory,
    group: usize,
) -> Result<ActionGroup, RolloutError> {
    cfg.validate()?;
    let state = query.states.last().ok_or_else(|| RolloutError::Config("query without states".into()))?;
    let bounds = script.screen(&state.screen).map(|s| s.size);
    let mut members = Vec::with_capacity(cfg.group_size);
    for m in 0..cfg.group_size {
        let obs = Observation {
            task: &query.task,
            script,
            state,
            window: ObservationWindow::assemble(&query.states, &query.history, cfg.window),
            step_index: query.history.len(),
            reference: &query.ground_truth,
        };
        let mut policy = RetryingPolicy { inner: policies.policy(group, m), attempts: cfg.policy_retries };
        let raw = policy.respond(&obs).map_err(|error| RolloutError::Policy { member: m, error })?;
        let turn = parse_turn(&raw, bounds);
        let reward = action_reward(&turn, &query.ground_truth, cfg.matching)?;
        members.push(ActionMember { turn, reward });
    }
    let rewards: Vec<f64> = members.iter().map(|m| f64::from(m.reward.r_action)).collect();
    check_rewards(&rewards, 0.0, 2.0)?;
    let stats = group_stats(&rewards, cfg.std_floor)?;
    Ok(ActionGroup { query_id: query.query_id.clone(), members, stats })
}

fn check_rewards(rewards: &[f64], min: f64, max: f64) -> Result<(), RolloutError> {
    match rewards.iter().position(|r| !(min..=max).contains(r)) {
        Some(member) => Err(RolloutError::RewardRange { member, value: rewards[member], min, max }),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Judge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub level: u8,
    pub rationale: String,
}

/// Everything a judge may look at. `states` pairs with the trajectory:
/// `states[i]` was on screen before step `i`, the last entry is final.
pub struct JudgeRequest<'a> {
    pub prompt: String,
    pub task: &'a TaskSpec,
    pub trajectory: &'a Trajectory,
    pub script: &'a AppScript,
    pub states: &'a [EnvState],
}

impl<'a> JudgeRequest<'a> {
    pub fn new(task: &'a TaskSpec, script: &'a AppScript, rollout: &'a Rollout) -> Self {
        Self {
            prompt: judge_prompt(&rollout.trajectory),
            task,
            trajectory: &rollout.trajectory,
            script,
            states: &rollout.states,
        }
    }
}

/// A trajectory scorer returning raw reply text; parsing happens here.
pub trait Judge: Sync {
    fn complete(&self, req: &JudgeRequest<'_>) -> Result<String, JudgeError>;
}

/// Extracts the rubric level from a judge reply.
pub fn parse_verdict(reply: &str, mode: VerdictMode) -> Result<JudgeVerdict, JudgeError> {
    let level = match mode {
        VerdictMode::FirstInteger => first_integer(reply),
        VerdictMode::Structured => reply.lines().rev().find_map(|line| {
            let line = line.trim();
            let rest = line.get(..6).filter(|p| p.eq_ignore_ascii_case("level:")).map(|_| &line[6..])?;
            let rest = rest.trim();
            let digits = rest.strip_prefix('-').unwrap_or(rest);
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            first_integer(rest)
        }),
    };
    let level = level.ok_or_else(|| JudgeError::Malformed(truncate(reply, 80)))?;
    if !(0..=4).contains(&level) {
        return Err(JudgeError::OutOfRange(level));
    }
    Ok(JudgeVerdict { level: level as u8, rationale: reply.trim().into() })
}

fn first_integer(text: &str) -> Option<i64> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let end = bytes[start..].iter().position(|b| !b.is_ascii_digit()).map_or(bytes.len(), |n| start + n);
    let negative = start > 0 && bytes[start - 1] == b'-';
    let magnitude = text[start..end].parse::<i64>().unwrap_or(i64::MAX);
    Some(if negative { -magnitude } else { magnitude })
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    pub verdict: JudgeVerdict,
    pub calls: usize,
}

/// Calls the judge at most `max_calls` times. Transport failures and
/// malformed replies are retried; an out-of-range level is final.
pub fn judge_score(
    judge: &dyn Judge,
    req: &JudgeRequest<'_>,
    max_calls: usize,
    mode: VerdictMode,
) -> Result<JudgeOutcome, (JudgeError, usize)> {
    let mut last = JudgeError::Transport("no calls made".into());
    for call in 1..=max_calls.max(1) {
        let parsed = judge.complete(req).and_then(|reply| parse_verdict(&reply, mode));
        match parsed {
            Ok(verdict) => return Ok(JudgeOutcome { verdict, calls: call }),
            Err(e @ JudgeError::OutOfRange(_)) => return Err((e, call)),
            Err(e) => last = e,
        }
    }
    Err((last, max_calls.max(1)))
}

/// Scores with the task's own success predicate: `success_level` when it
/// holds on the final state, otherwise `failure_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredicateJudge {
    pub success_level: u8,
    pub failure_level: u8,
}

impl Default for PredicateJudge {
    fn default() -> Self {
        Self { success_level: 4, failure_level: 0 }
    }
}

impl Judge for PredicateJudge {
    fn complete(&self, req: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let ok = req.trajectory.final_success == Some(true);
        let (level, why) = if ok {
            (self.success_level, "The final screen satisfies the task.")
        } else {
            (self.failure_level, "The final screen does not satisfy the task.")
        };
        Ok(format!("{why}\nLevel: {level}"))
    }
}

/// Replies with a fixed text every time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedJudge(pub String);

impl Judge for FixedJudge {
    fn complete(&self, _req: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        Ok(self.0.clone())
    }
}

/// Replays a list of replies in order, repeating the last one; counts calls.
#[derive(Debug)]
pub struct ScriptedJudge {
    replies: Vec<Result<String, JudgeError>>,
    calls: AtomicUsize,
}

impl ScriptedJudge {
    pub fn new(replies: Vec<Result<String, JudgeError>>) -> Self {
        Self { replies, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Judge for ScriptedJudge {
    fn complete(&self, _req: &JudgeRequest<'_>) -> Result<String, JudgeError> {
        let i = self.calls.fetch_add(1, Ordering::SeqCst);
        match self.replies.get(i.min(self.replies.len().saturating_sub(1))) {
            Some(r) => r.clone(),
            None => Err(JudgeError::Transport("no scripted reply".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// Stage 3: multi-turn groups
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Judge,
    PredicateFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMember {
    /// Carries the filled-in reward breakdown.
    pub rollout: Rollout,
    pub verdict: JudgeVerdict,
    pub judge_calls: usize,
    pub source: VerdictSource,
}

impl TaskMember {
    pub fn reward(&self) -> f64 {
        self.rollout.trajectory.reward.as_ref().map_or(f64::NAN, |r| r.r_task)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGroup {
    pub task_id: String,
    pub members: Vec<TaskMember>,
    pub stats: GroupStats,
}

/// Runs and scores one member of a task-level group on a fresh environment.
pub fn stage3_member(
    script: &AppScript,
    task: &TaskSpec,
    cfg: &StageConfig,
    policies: &dyn PolicyFactory,
    judge: &dyn Judge,
    group: usize,
    member: usize,
) -> Result<TaskMember, RolloutError> {
    let mut policy = FailureRecorder {
        inner: RetryingPolicy { inner: policies.policy(group, member), attempts: cfg.policy_retries },
        error: None,
    };
    let id = format!("{}-g{group}-m{member}", task.task_id);
    let mut rollout = run_task(&mut policy, script, task, &cfg.run_config(), &id);
    if rollout.trajectory.terminal_status == TerminalStatus::EnvError {
        let error = policy.error.unwrap_or(PolicyError::Transport("environment error".into()));
        return Err(RolloutError::Policy { member, error });
    }
    let (verdict, judge_calls, source) = {
        let req = JudgeRequest::new(task, script, &rollout);
        match judge_score(judge, &req, cfg.judge_retries, cfg.verdict_mode) {
            Ok(out) => (out.verdict, out.calls, VerdictSource::Judge),
            Err((error, calls)) => match cfg.judge_fallback {
                JudgeFallback::Reject => return Err(RolloutError::Judge { member, calls, error }),
                JudgeFallback::PredicateScore => {
                    let level = if rollout.trajectory.final_success == Some(true) { 4 } else { 0 };
                    let rationale = format!("judge unavailable ({error}); predicate score");
                    (JudgeVerdict { level, rationale }, calls, VerdictSource::PredicateFallback)
                }
            },
        }
    };
    let traj = &rollout.trajectory;
    let steps = traj
        .steps
        .iter()
        .filter_map(|s| s.ground_truth.as_ref().map(|gt| action_reward(&s.turn, gt, cfg.matching)))
        .collect::<Result<Vec<_>, _>>()?;
    let r_traj = normalize_judge_score(i64::from(verdict.level))?;
    let breakdown = RewardBreakdown::for_trajectory(traj.format_compliance(), steps, r_traj)?;
    rollout.trajectory.reward = Some(breakdown);
    Ok(TaskMember { rollout, verdict, judge_calls, source })
}

/// Collects scored members into a group and computes advantages.
pub fn assemble_task_group(
    task_id: &str,
    members: Vec<TaskMember>,
    cfg: &StageConfig,
) -> Result<TaskGroup, RolloutError> {
    let rewards: Vec<f64> = members.iter().map(TaskMember::reward).collect();
    check_rewards(&rewards, -1.0, 2.0)?;
    let stats = group_stats(&rewards, cfg.std_floor)?;
    Ok(TaskGroup { task_id: task_id.into(), members, stats })
}

/// Runs `cfg.group_size` full episodes of `task` sequentially.
pub fn rollout_group_stage3(
    script: &AppScript,
    task: &TaskSpec,
    cfg: &StageConfig,
    policies: &dyn PolicyFactory,
    judge: &dyn Judge,
    group: usize,
) -> Result<TaskGroup, RolloutError> {
    cfg.validate()?;
    let members = (0..cfg.group_size)
        .map(|m| stage3_member(script, task, cfg, policies, judge, group, m))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_task_group(&task.task_id, members, cfg)
}

struct FailureRecorder<P> {
    inner: P,
    error: Option<PolicyError>,
}

impl<P: Policy> Policy for FailureRecorder<P> {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        self.inner.respond(obs).inspect_err(|e| self.error = Some(e.clone()))
    }
}
