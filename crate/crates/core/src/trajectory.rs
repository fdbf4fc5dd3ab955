//! Multi-turn trajectories and the sliding observation window.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::protocol::{ActionKind, AgentTurn};
use crate::reward::{GroundTruthStep, RewardBreakdown};

/// Default number of historical screenshots shown to the policy.
pub const DEFAULT_WINDOW: usize = 3;

/// Screenshots are shrunk by this factor in both dimensions when a window
/// is assembled for a policy request.
pub const DOWNSAMPLE_FACTOR: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    /// The task's success predicate became true.
    Completed,
    TerminatedByAgent,
    StepLimit,
    EnvError,
}

impl TerminalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::TerminatedByAgent => "terminated_by_agent",
            Self::StepLimit => "step_limit",
            Self::EnvError => "env_error",
        }
    }
}

/// Environment response to one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionResult {
    Moved,
    NoOp,
    InputAccepted,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub screenshot_ref: String,
    pub turn: AgentTurn,
    pub result: TransitionResult,
    /// Reference action for this step, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub trajectory_id: String,
    pub task_id: String,
    pub app: String,
    pub instruction: String,
    pub steps: Vec<Step>,
    pub terminal_status: TerminalStatus,
    /// Final-state task completion; `None` when no evidence exists.
    #[serde(default)]
    pub final_success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardBreakdown>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn format_compliance(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.turn.format_ok()).collect()
    }

    /// Structural invariants: at least one step (unless the environment
    /// failed) and a terminate action, if any, only at the final step.
    pub fn validate(&self) -> Result<(), String> {
        if self.steps.is_empty() && self.terminal_status != TerminalStatus::EnvError {
            return Err(format!("{}: trajectory has no steps", self.trajectory_id));
        }
        let last = self.steps.len().saturating_sub(1);
        for (i, step) in self.steps.iter().enumerate() {
            let terminates = step.turn.format_ok()
                && step.turn.tool_call.as_ref().is_some_and(|a| a.kind() == ActionKind::Terminate);
            if terminates && i != last {
                return Err(format!("{}: terminate at step {i} is not the final step", self.trajectory_id));
            }
            if step.screenshot_ref.is_empty() {
                return Err(format!("{}: step {i} has no screenshot", self.trajectory_id));
            }
        }
        Ok(())
    }
}

/// What the policy sees before acting: the most recent `W` screens and the
/// complete textual history of previous turns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow<S> {
    pub visual: Vec<S>,
    pub textual: Vec<String>,
}

impl<S: Clone> ObservationWindow<S> {
    /// `visual` keeps the last `min(w, screens.len())` screens, oldest first;
    /// `textual` keeps every prior turn verbatim. `w` below 1 is treated as 1.
    pub fn assemble(screens: &[S], turns: &[String], w: usize) -> Self {
        let w = w.max(1);
        let start = screens.len().saturating_sub(w);
        Self { visual: screens[start..].to_vec(), textual: turns.to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn prefix(t: usize) -> (Vec<usize>, Vec<String>) {
        ((0..t).collect(), (0..t).map(|i| i.to_string()).collect())
    }

    #[test]
    fn short_prefix() {
        let (s, a) = prefix(2);
        let w = ObservationWindow::assemble(&s, &a, 3);
        assert_eq!(w.visual, vec![0, 1]);
        assert_eq!(w.textual.len(), 2);
    }

    #[test]
    fn long_prefix_keeps_last_three() {
        let (s, a) = prefix(10);
        let w = ObservationWindow::assemble(&s, &a, 3);
        assert_eq!(w.visual, vec![7, 8, 9]);
        assert_eq!(w.textual.len(), 10);
    }

    #[test]
    fn exhaustive_window_sizes() {
        for t in 1..=30 {
            for width in 1..=10 {
                let (s, a) = prefix(t);
                let win = ObservationWindow::assemble(&s, &a, width);
                assert_eq!(win.visual.len(), width.min(t));
                assert_eq!(win.textual, a);
                assert_eq!(*win.visual.last().unwrap(), t - 1);
            }
        }
    }
}
