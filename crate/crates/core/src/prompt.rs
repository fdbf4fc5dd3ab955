//! Prompt texts sent to policies and judges, and the policy request shape.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::trajectory::Trajectory;

const SYSTEM_PROMPT_HEAD: &str = "You are a mobile GUI agent. You are given a task and your action history, with screenshots. You need to perform the next action to complete the task.

You are provided with function signatures within <tools></tools> XML tags:
<tools>
{
  \"name\": \"mobile_use\",
  \"arguments\": {
    \"type\": \"function\",
    \"function\": {
      \"name_for_human\": \"mobile_use\",
      \"name\": \"mobile_use\",
      \"description\": \"Use a touchscreen to interact with a mobile device.\"
    }
  }
}
</tools>

For each function call, return a json object with function name and arguments within <tool_call></tool_call> XML tags:
<tool_call>
{
    \"name\": <function-name>,
    \"arguments\": <args-json-object>
}
</tool_call>

Analyze the task and historical actions, and predict the next step.
Output your reasoning process within the <think></think> tag.
Output the action to be performed in this step within the <action></action> tag.
Output the final answer within the <tool_call></tool_call> tag.
User Task: ";

/// Training-time system prompt for `instruction`.
pub fn system_prompt(instruction: &str) -> String {
    format!("{SYSTEM_PROMPT_HEAD}{instruction}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 1.0, max_tokens: 512 }
    }
}

/// One policy query. `I` is the image payload: screen states in process,
/// base64 PNG strings on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest<I> {
    pub system: String,
    pub instruction: String,
    /// Every prior raw turn, oldest first.
    pub history: Vec<String>,
    /// At most `W` screenshots, oldest first; the last one is the current screen.
    pub images: Vec<I>,
    pub sampling: Sampling,
}

impl<I> PolicyRequest<I> {
    pub fn new(instruction: &str, history: Vec<String>, images: Vec<I>, sampling: Sampling) -> Self {
        Self { system: system_prompt(instruction), instruction: instruction.into(), history, images, sampling }
    }

    pub fn map_images<J>(self, f: impl FnMut(I) -> J) -> PolicyRequest<J> {
        PolicyRequest {
            system: self.system,
            instruction: self.instruction,
            history: self.history,
            images: self.images.into_iter().map(f).collect(),
            sampling: self.sampling,
        }
    }
}

pub const JUDGE_RUBRIC: &str = "You grade a recorded mobile GUI agent episode. You receive the user task, \
the screenshot after every step, and the agent's reasoning, action description and tool call at each step.

Judge two criteria together.
Trajectory Coherence: each step serves the task, actions are concrete, detours are few and are undone quickly.
Task Completion: the final screen shows the task done, with every required input entered and every required control operated.

Levels:
4 - task fully completed along a clean path.
3 - task completed, with detours or redundant steps.
2 - substantial progress, but the task is not finished.
1 - some relevant progress, mostly off track.
0 - no relevant progress, or the episode ended in an error.

Write a short rationale, then finish with a final line of the form `Level: N` where N is 0, 1, 2, 3 or 4.";

/// Judge prompt: rubric, task, and one block per step. Screenshots travel
/// as separate image parts in step order.
pub fn judge_prompt(traj: &Trajectory) -> String {
    let mut out = String::new();
    let _ = write!(out, "{JUDGE_RUBRIC}\n\nUser task: {}\nSteps: {}\n", traj.instruction, traj.len());
    for (i, step) in traj.steps.iter().enumerate() {
        let _ = write!(out, "\n## Step {} (screenshot {})\n{}\n", i + 1, step.screenshot_ref, step.turn.raw.trim());
    }
    let _ = write!(out, "\nEpisode ended: {}\n", traj.terminal_status.as_str());
    out
}
