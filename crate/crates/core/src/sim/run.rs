use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{step, AppScript, EnvState, GuideTracker, TaskSpec};
use crate::protocol::{parse_turn, Action};
use crate::reward::GroundTruthStep;
use crate::trajectory::{ObservationWindow, Step, TerminalStatus, Trajectory, TransitionResult, DEFAULT_WINDOW};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy transport failed: {0}")]
    Transport(String),
    #[error("policy protocol error: {0}")]
    Protocol(String),
}

/// Everything a policy may look at before producing one turn.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub task: &'a TaskSpec,
    pub script: &'a AppScript,
    pub state: &'a EnvState,
    pub window: ObservationWindow<EnvState>,
    pub step_index: usize,
    /// Simulator-side reference action for the current state. Only scripted
    /// mock policies read it; transports never forward it.
    pub reference: &'a GroundTruthStep,
}

/// A source of raw agent responses, one per turn.
pub trait Policy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &mut P {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        (**self).respond(obs)
    }
}

impl<P: Policy + ?Sized> Policy for alloc::boxed::Box<P> {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        (**self).respond(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub window: usize,
    /// Overrides the task's own budget when set.
    pub max_steps: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, max_steps: None }
    }
}

/// A trajectory plus the environment states it visited:
/// `states[i]` is the state observed before step `i`, and the last entry is
/// the final state.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rollout {
    pub trajectory: Trajectory,
    pub states: Vec<EnvState>,
}

/// Runs one episode. Malformed turns consume a step without touching the
/// environment. Stops on a terminate action, on the success predicate, at the
/// step budget, or on a policy transport failure (`EnvError`).
pub fn run_task(
    policy: &mut dyn Policy,
    script: &AppScript,
    task: &TaskSpec,
    cfg: &RunConfig,
    trajectory_id: &str,
) -> Rollout {
    let max_steps = cfg.max_steps.unwrap_or(task.max_steps);
    let mut tracker = GuideTracker::new(task);
    let mut state = EnvState::initial(script);
    let bounds = script.screen(&state.screen).map(|s| s.size);
    let mut states = alloc::vec![state.clone()];
    let mut history: Vec<String> = Vec::new();
    let mut actions: Vec<Action> = Vec::new();
    let mut steps = Vec::new();
    let mut status = TerminalStatus::StepLimit;

    for t in 0..max_steps {
        let reference = tracker.expected(&state);
        let obs = Observation {
            task,
            script,
            state: &state,
            window: ObservationWindow::assemble(&states, &history, cfg.window),
            step_index: t,
            reference: &reference,
        };
        let raw = match policy.respond(&obs) {
            Ok(text) => text,
            Err(_) => {
                status = TerminalStatus::EnvError;
                break;
            }
        };
        let screen_bounds = script.screen(&state.screen).map(|s| s.size).or(bounds);
        let turn = parse_turn(&raw, screen_bounds);
        let (next, result) = match (&turn.tool_call, turn.format_ok()) {
            (Some(action), true) => {
                tracker.observe(&state, action);
                actions.push(action.clone());
                step(script, &state, action)
            }
            _ => (state.clone(), TransitionResult::NoOp),
        };
        steps.push(Step { screenshot_ref: format!("{t:03}.png"), turn, result, ground_truth: Some(reference) });
        history.push(raw);
        state = next;
        states.push(state.clone());
        if result == TransitionResult::Terminated {
            status = TerminalStatus::TerminatedByAgent;
            break;
        }
        if task.success.eval(&state, &actions) {
            status = TerminalStatus::Completed;
            break;
        }
    }

    let final_success = Some(task.success.eval(&state, &actions));
    Rollout {
        trajectory: Trajectory {
            trajectory_id: trajectory_id.into(),
            task_id: task.task_id.clone(),
            app: task.app.clone(),
            instruction: task.instruction.clone(),
            steps,
            terminal_status: status,
            final_success,
            reward: None,
        },
        states,
    }
}
