use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AppScript, EnvState, ScriptError, SCRIPT_FORMAT_VERSION};
use crate::protocol::{Action, SystemButton, TerminateStatus};
use crate::reward::{action_matches, GroundTruthStep, MatchConfig};

/// Step budget per task during training rollouts.
pub const DEFAULT_MAX_STEPS: usize = 14;
/// Step budget used when collecting raw trajectories.
pub const COLLECTION_MAX_STEPS: usize = 25;

fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}

/// Declarative success condition over the final state and action history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    ReachedScreen { screen: String },
    Flag { flag: String },
    TypedText { element: String, text: String },
    TerminatedWith { status: TerminateStatus },
    All { of: Vec<Predicate> },
    Any { of: Vec<Predicate> },
}

impl Predicate {
    pub fn eval(&self, state: &EnvState, history: &[Action]) -> bool {
        match self {
            Self::ReachedScreen { screen } => &state.screen == screen,
            Self::Flag { flag } => state.flags.contains(flag),
            Self::TypedText { element, text } => state.inputs.get(element) == Some(text),
            Self::TerminatedWith { status } => {
                matches!(history.last(), Some(Action::Terminate { status: s }) if s == status)
            }
            Self::All { of } => of.iter().all(|p| p.eval(state, history)),
            Self::Any { of } => of.iter().any(|p| p.eval(state, history)),
        }
    }
}

/// Reference action expected on `screen` while following the intended path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideStep {
    pub screen: String,
    pub expect: GroundTruthStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub format_version: u32,
    pub task_id: String,
    pub app: String,
    pub instruction: String,
    pub success: Predicate,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Intended path; drives per-step ground truth and the oracle policy.
    pub guide: Vec<GuideStep>,
}

impl TaskSpec {
    pub fn validate(&self, script: &AppScript) -> Result<(), ScriptError> {
        let err = |message: String| ScriptError::Task { task: self.task_id.clone(), message };
        if self.format_version != SCRIPT_FORMAT_VERSION {
            return Err(ScriptError::Version(self.format_version));
        }
        if self.app != script.app {
            return Err(err(format!("app `{}` does not match script `{}`", self.app, script.app)));
        }
        if self.max_steps == 0 {
            return Err(err("max_steps must be positive".into()));
        }
        for g in &self.guide {
            if script.screen(&g.screen).is_none() {
                return Err(err(format!("guide references unknown screen `{}`", g.screen)));
            }
            g.expect.validate().map_err(|e| err(format!("{e}")))?;
        }
        Ok(())
    }
}

/// Tracks progress along a task's guide to produce per-step ground truth.
///
/// On the intended path the expected action is the next guide step. Off the
/// path (the current screen is not the one the next guide step expects) the
/// expected action is `system_button(Back)`.
#[derive(Debug, Clone)]
pub struct GuideTracker<'a> {
    guide: &'a [GuideStep],
    pos: usize,
}

impl<'a> GuideTracker<'a> {
    pub fn new(task: &'a TaskSpec) -> Self {
        Self { guide: &task.guide, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn on_path(&self, state: &EnvState) -> Option<&'a GuideStep> {
        self.guide.get(self.pos).filter(|g| g.screen == state.screen)
    }

    pub fn expected(&self, state: &EnvState) -> GroundTruthStep {
        match self.on_path(state) {
            Some(g) => g.expect.clone(),
            None if self.pos >= self.guide.len() => GroundTruthStep::terminate(TerminateStatus::Success),
            None => GroundTruthStep::button(SystemButton::Back),
        }
    }

    /// Advances past the current guide step when `action` satisfied it.
    pub fn observe(&mut self, state_before: &EnvState, action: &Action) {
        if let Some(g) = self.on_path(state_before) {
            if action_matches(action, &g.expect, MatchConfig::default()).unwrap_or(false) {
                self.pos += 1;
            }
        }
    }
}
