//! Verifiable rewards.
//!
//! Action level: `r_action = r_act + r_fmt`, both binary. Trajectory level:
//! `r_task = r_fmt_traj + r_traj`, where `r_fmt_traj = 2 * mean(r_fmt) - 1`
//! lies in `[-1, 1]` and `r_traj` is the judge level divided by 4.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::protocol::{Action, ActionKind, AgentTurn, Point, SystemButton, TerminateStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("ground truth misconfigured: {0}")]
    Config(String),
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("{what} = {value} outside [{min}, {max}]")]
    OutOfRange { what: &'static str, value: f64, min: f64, max: f64 },
    #[error("judge level {0} outside 0..=4")]
    JudgeLevel(i64),
}

/// Axis-aligned box `[x1, y1, x2, y2]` in pixels. [`BBox::new`] requires
/// `x1 < x2` and `y1 < y2`; deserialization accepts any corners so that
/// malformed annotations reach [`GroundTruthStep::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self, RewardError> {
        if x1 < x2 && y1 < y2 {
            Ok(Self { x1, y1, x2, y2 })
        } else {
            Err(RewardError::Config(format!("degenerate bbox [{x1},{y1},{x2},{y2}]")))
        }
    }

    /// Edge-inclusive containment.
    pub fn contains(&self, p: Point) -> bool {
        (self.x1..=self.x2).contains(&p.x) && (self.y1..=self.y2).contains(&p.y)
    }

    pub fn is_valid(&self) -> bool {
        self.x1 < self.x2 && self.y1 < self.y2
    }

    pub fn center(&self) -> Point {
        let mid = |a: u32, b: u32| a.min(b) + a.abs_diff(b) / 2;
        Point::new(mid(self.x1, self.x2), mid(self.y1, self.y2))
    }
}

impl From<[u32; 4]> for BBox {
    fn from([x1, y1, x2, y2]: [u32; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Direction of finger motion on screen (y grows downwards).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

/// Dominant axis of a swipe; `None` for ties, including zero-length swipes.
pub fn dominant_direction(start: Point, end: Point) -> Option<Direction> {
    let dx = i64::from(end.x) - i64::from(start.x);
    let dy = i64::from(end.y) - i64::from(start.y);
    if dx.abs() > dy.abs() {
        Some(if dx > 0 { Direction::Right } else { Direction::Left })
    } else if dy.abs() > dx.abs() {
        Some(if dy > 0 { Direction::Down } else { Direction::Up })
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwipeTruth {
    pub start_bbox: BBox,
    pub direction: Direction,
}

/// Annotated correct action for one step.
///
/// Exactly the fields relevant to `expected_variant` are present:
/// click/long_press carry `target_bbox`, swipe carries `expected_swipe`,
/// key/type/system_button/terminate carry `expected_argument`, wait carries none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthStep {
    pub expected_variant: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_argument: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_swipe: Option<SwipeTruth>,
}

impl GroundTruthStep {
    fn bare(kind: ActionKind) -> Self {
        Self { expected_variant: kind, target_bbox: None, expected_argument: None, expected_swipe: None }
    }

    pub fn click(bbox: BBox) -> Self {
        Self { target_bbox: Some(bbox), ..Self::bare(ActionKind::Click) }
    }

    pub fn long_press(bbox: BBox) -> Self {
        Self { target_bbox: Some(bbox), ..Self::bare(ActionKind::LongPress) }
    }

    pub fn swipe(start_bbox: BBox, direction: Direction) -> Self {
        Self { expected_swipe: Some(SwipeTruth { start_bbox, direction }), ..Self::bare(ActionKind::Swipe) }
    }

    pub fn typed(text: &str) -> Self {
        Self { expected_argument: Some(text.to_owned()), ..Self::bare(ActionKind::Type) }
    }

    pub fn key(keyevent: &str) -> Self {
        Self { expected_argument: Some(keyevent.to_owned()), ..Self::bare(ActionKind::Key) }
    }

    pub fn button(button: SystemButton) -> Self {
        Self { expected_argument: Some(button.as_str().to_owned()), ..Self::bare(ActionKind::SystemButton) }
    }

    pub fn terminate(status: TerminateStatus) -> Self {
        Self { expected_argument: Some(status.as_str().to_owned()), ..Self::bare(ActionKind::Terminate) }
    }

    pub fn wait() -> Self {
        Self::bare(ActionKind::Wait)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let kind = self.expected_variant;
        let has = (self.target_bbox.is_some(), self.expected_argument.is_some(), self.expected_swipe.is_some());
        let wanted = match kind {
            ActionKind::Click | ActionKind::LongPress => (true, false, false),
            ActionKind::Swipe => (false, false, true),
            ActionKind::Key | ActionKind::Type | ActionKind::SystemButton | ActionKind::Terminate => {
                (false, true, false)
            }
            ActionKind::Wait => (false, false, false),
        };
        if has != wanted {
            return Err(RewardError::Config(format!(
                "`{kind}` ground truth needs bbox={}, argument={}, swipe={}",
                wanted.0, wanted.1, wanted.2
            )));
        }
        let boxes = self.target_bbox.into_iter().chain(self.expected_swipe.map(|s| s.start_bbox));
        for b in boxes {
            BBox::new(b.x1, b.y1, b.x2, b.y2)?;
        }
        let arg = self.expected_argument.as_deref().map(str::trim);
        match (kind, arg) {
            (ActionKind::SystemButton, Some(a)) if SystemButton::from_name(a).is_none() => {
                Err(RewardError::Config(format!("unknown system button `{a}`")))
            }
            (ActionKind::Terminate, Some(a)) if TerminateStatus::from_name(a).is_none() => {
                Err(RewardError::Config(format!("unknown terminate status `{a}`")))
            }
            (ActionKind::Key, Some("")) => Err(RewardError::Config("empty key event".to_owned())),
            _ => Ok(()),
        }
    }

    /// An action that satisfies this ground truth: bbox centers, exact
    /// arguments, and a 300 px swipe (shorter near the screen edge).
    pub fn canonical_action(&self) -> Result<Action, RewardError> {
        self.validate()?;
        let arg = || self.expected_argument.as_deref().unwrap_or_default().trim();
        let center = || self.target_bbox.map(|b| b.center()).unwrap_or(Point::new(0, 0));
        Ok(match self.expected_variant {
            ActionKind::Click => Action::Click { at: center() },
            ActionKind::LongPress => Action::LongPress { at: center(), seconds: 1.0 },
            ActionKind::Swipe => {
                let truth = self.expected_swipe.ok_or_else(|| RewardError::Config("swipe".into()))?;
                let start = truth.start_bbox.center();
                const LEN: u32 = 300;
                let end = match truth.direction {
                    Direction::Up => Point::new(start.x, start.y.saturating_sub(LEN)),
                    Direction::Down => Point::new(start.x, start.y.saturating_add(LEN)),
                    Direction::Left => Point::new(start.x.saturating_sub(LEN), start.y),
                    Direction::Right => Point::new(start.x.saturating_add(LEN), start.y),
                };
                Action::Swipe { start, end }
            }
            ActionKind::Type => Action::Type { text: arg().to_owned() },
            ActionKind::Key => Action::Key { keyevent: arg().to_owned() },
            ActionKind::SystemButton => {
                Action::SystemButton { button: SystemButton::from_name(arg()).unwrap_or(SystemButton::Back) }
            }
            ActionKind::Terminate => {
                Action::Terminate { status: TerminateStatus::from_name(arg()).unwrap_or(TerminateStatus::Success) }
            }
            ActionKind::Wait => Action::Wait { seconds: 1.0 },
        })
    }
}

/// String matching policy for type/key arguments. Both sides are trimmed;
/// comparison is case-sensitive unless `case_insensitive` is set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    pub case_insensitive: bool,
}

impl MatchConfig {
    fn eq(&self, a: &str, b: &str) -> bool {
        let (a, b) = (a.trim(), b.trim());
        if self.case_insensitive {
            a.to_lowercase() == b.to_lowercase()
        } else {
            a == b
        }
    }
}

/// Whether `action` is correct for `gt`, ignoring response format.
pub fn action_matches(action: &Action, gt: &GroundTruthStep, cfg: MatchConfig) -> Result<bool, RewardError> {
    gt.validate()?;
    if action.kind() != gt.expected_variant {
        return Ok(false);
    }
    let arg = gt.expected_argument.as_deref().unwrap_or_default();
    Ok(match action {
        Action::Click { at } | Action::LongPress { at, .. } => gt.target_bbox.is_some_and(|b| b.contains(*at)),
        Action::Swipe { start, end } => gt.expected_swipe.is_some_and(|truth| {
            truth.start_bbox.contains(*start) && dominant_direction(*start, *end) == Some(truth.direction)
        }),
        Action::Type { text } => cfg.eq(text, arg),
        Action::Key { keyevent } => cfg.eq(keyevent, arg),
        Action::SystemButton { button } => cfg.eq(button.as_str(), arg),
        Action::Terminate { status } => cfg.eq(status.as_str(), arg),
        Action::Wait { .. } => true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionReward {
    pub r_act: u8,
    pub r_fmt: u8,
    pub r_action: u8,
}

/// Per-step reward. `r_act` is forced to 0 when the response is not format-compliant.
pub fn action_reward(turn: &AgentTurn, gt: &GroundTruthStep, cfg: MatchConfig) -> Result<ActionReward, RewardError> {
    gt.validate()?;
    let r_fmt = u8::from(turn.format_ok());
    let r_act = match (&turn.tool_call, r_fmt) {
        (Some(action), 1) => u8::from(action_matches(action, gt, cfg)?),
        _ => 0,
    };
    Ok(ActionReward { r_act, r_fmt, r_action: r_act + r_fmt })
}

/// `2 * mean(compliance) - 1`.
pub fn trajectory_format_reward(compliance: &[bool]) -> Result<f64, RewardError> {
    if compliance.is_empty() {
        return Err(RewardError::EmptyTrajectory);
    }
    let n = compliance.len() as f64;
    let ones = compliance.iter().filter(|&&ok| ok).count() as f64;
    Ok((2.0 * ones - n) / n)
}

fn check_range(what: &'static str, value: f64, min: f64, max: f64) -> Result<(), RewardError> {
    if (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(RewardError::OutOfRange { what, value, min, max })
    }
}

pub fn task_reward(r_fmt_traj: f64, r_traj: f64) -> Result<f64, RewardError> {
    check_range("r_fmt_traj", r_fmt_traj, -1.0, 1.0)?;
    check_range("r_traj", r_traj, 0.0, 1.0)?;
    Ok(r_fmt_traj + r_traj)
}

/// Judge rubric level `0..=4` mapped onto `[0, 1]`.
pub fn normalize_judge_score(level: i64) -> Result<f64, RewardError> {
    if (0..=4).contains(&level) {
        Ok(level as f64 / 4.0)
    } else {
        Err(RewardError::JudgeLevel(level))
    }
}

/// All reward components of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// Per-step action rewards; empty when steps carry no ground truth.
    pub steps: Vec<ActionReward>,
    pub format_steps: Vec<bool>,
    pub r_fmt_traj: f64,
    pub r_traj: f64,
    pub r_task: f64,
}

impl RewardBreakdown {
    pub fn for_trajectory(format_steps: Vec<bool>, steps: Vec<ActionReward>, r_traj: f64) -> Result<Self, RewardError> {
        let r_fmt_traj = trajectory_format_reward(&format_steps)?;
        let r_task = task_reward(r_fmt_traj, r_traj)?;
        Ok(Self { steps, format_steps, r_fmt_traj, r_traj, r_task })
    }
}
