//! Deterministic scripted GUI environment.
//!
//! An [`AppScript`] is a screen graph: screens hold interactive elements,
//! transitions map `(screen, trigger)` to a target screen. [`step`] applies
//! one [`Action`] to an [`EnvState`] and never consults randomness, so a
//! script plus an action sequence fully determines the state trace.

pub mod fixtures;
pub mod render;
mod run;
mod task;

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::protocol::{Action, Point, ScreenSize, SystemButton};
use crate::reward::{dominant_direction, BBox, Direction};
use crate::trajectory::TransitionResult;

pub use run::{run_task, Observation, Policy, PolicyError, Rollout, RunConfig};
pub use task::{GuideStep, GuideTracker, Predicate, TaskSpec, COLLECTION_MAX_STEPS, DEFAULT_MAX_STEPS};

/// Schema version written into script and task files.
pub const SCRIPT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptError {
    #[error("unsupported format_version {0}")]
    Version(u32),
    #[error("duplicate screen `{0}`")]
    DuplicateScreen(String),
    #[error("initial screen `{0}` does not exist")]
    MissingInitial(String),
    #[error("screen `{screen}`: duplicate element `{element}`")]
    DuplicateElement { screen: String, element: String },
    #[error("screen `{screen}`: element `{element}` has a degenerate box or lies outside the screen")]
    ElementOutOfBounds { screen: String, element: String },
    #[error("transition from unknown screen `{0}`")]
    UnknownSource(String),
    #[error("transition to unknown screen `{0}`")]
    UnknownTarget(String),
    #[error("screen `{screen}` has no element `{element}`")]
    UnknownElement { screen: String, element: String },
    #[error("duplicate transition from `{0}`")]
    DuplicateTransition(String),
    #[error("task `{task}`: {message}")]
    Task { task: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Icon,
    Button,
    Tab,
    Input,
    ListItem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub id: String,
    pub bbox: BBox,
    pub label: String,
    pub kind: ElementKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub id: String,
    pub size: ScreenSize,
    pub elements: Vec<Element>,
}

impl Screen {
    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// Topmost (last listed) element containing `p`.
    pub fn hit(&self, p: Point) -> Option<&Element> {
        self.elements.iter().rev().find(|e| e.bbox.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    Tap { element: String },
    LongPress { element: String },
    Swipe { direction: Direction },
    TypeInto { element: String },
    SystemButton { button: SystemButton },
    Key { keyevent: String },
}

impl Trigger {
    fn element(&self) -> Option<&str> {
        match self {
            Self::Tap { element } | Self::LongPress { element } | Self::TypeInto { element } => Some(element),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub screen: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_flags: Vec<String>,
    /// Input element focused on arrival.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focus: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: String,
    pub trigger: Trigger,
    pub to: Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppScript {
    pub format_version: u32,
    pub app: String,
    pub initial_screen: String,
    pub screens: Vec<Screen>,
    pub transitions: Vec<Transition>,
}

impl AppScript {
    pub fn screen(&self, id: &str) -> Option<&Screen> {
        self.screens.iter().find(|s| s.id == id)
    }

    fn transition(&self, from: &str, trigger: &Trigger) -> Option<&Target> {
        self.transitions.iter().find(|t| t.from == from && &t.trigger == trigger).map(|t| &t.to)
    }

    /// Load-time checks: every referenced screen and element exists, element
    /// boxes fit their screen, ids are unique, no trigger is ambiguous.
    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.format_version != SCRIPT_FORMAT_VERSION {
            return Err(ScriptError::Version(self.format_version));
        }
        let mut ids = BTreeSet::new();
        for screen in &self.screens {
            if !ids.insert(screen.id.as_str()) {
                return Err(ScriptError::DuplicateScreen(screen.id.clone()));
            }
            let mut elements = BTreeSet::new();
            for e in &screen.elements {
                if !elements.insert(e.id.as_str()) {
                    return Err(ScriptError::DuplicateElement { screen: screen.id.clone(), element: e.id.clone() });
                }
                if !e.bbox.is_valid() || e.bbox.x2 >= screen.size.width || e.bbox.y2 >= screen.size.height {
                    return Err(ScriptError::ElementOutOfBounds { screen: screen.id.clone(), element: e.id.clone() });
                }
            }
        }
        if self.screen(&self.initial_screen).is_none() {
            return Err(ScriptError::MissingInitial(self.initial_screen.clone()));
        }
        let mut seen = Vec::new();
        for t in &self.transitions {
            let from = self.screen(&t.from).ok_or_else(|| ScriptError::UnknownSource(t.from.clone()))?;
            let to = self.screen(&t.to.screen).ok_or_else(|| ScriptError::UnknownTarget(t.to.screen.clone()))?;
            if let Some(el) = t.trigger.element() {
                if from.element(el).is_none() {
                    return Err(ScriptError::UnknownElement { screen: from.id.clone(), element: el.into() });
                }
            }
            if let Some(focus) = &t.to.focus {
                if to.element(focus).is_none() {
                    return Err(ScriptError::UnknownElement { screen: to.id.clone(), element: focus.clone() });
                }
            }
            if seen.contains(&(&t.from, &t.trigger)) {
                return Err(ScriptError::DuplicateTransition(t.from.clone()));
            }
            seen.push((&t.from, &t.trigger));
        }
        Ok(())
    }
}

/// Mutable environment state. Screens themselves are immutable script data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub screen: String,
    pub focused_input: Option<String>,
    /// Text stored per input element id.
    pub inputs: BTreeMap<String, String>,
    pub flags: BTreeSet<String>,
    /// Screens to return to on Back.
    pub back_stack: Vec<String>,
    pub elapsed_wait: f64,
}

impl EnvState {
    pub fn initial(script: &AppScript) -> Self {
        Self {
            screen: script.initial_screen.clone(),
            focused_input: None,
            inputs: BTreeMap::new(),
            flags: BTreeSet::new(),
            back_stack: Vec::new(),
            elapsed_wait: 0.0,
        }
    }

    fn apply(&mut self, target: &Target) {
        if target.screen != self.screen {
            let previous = core::mem::replace(&mut self.screen, target.screen.clone());
            self.back_stack.push(previous);
        }
        self.focused_input = target.focus.clone();
        self.flags.extend(target.set_flags.iter().cloned());
    }
}

/// Applies one action. Actions that hit nothing, or whose trigger has no
/// transition, leave the state unchanged and report [`TransitionResult::NoOp`].
pub fn step(script: &AppScript, state: &EnvState, action: &Action) -> (EnvState, TransitionResult) {
    let mut next = state.clone();
    let Some(screen) = script.screen(&state.screen) else {
        return (next, TransitionResult::NoOp);
    };
    let go = |next: &mut EnvState, trigger: Trigger| match script.transition(&state.screen, &trigger) {
        Some(target) => {
            next.apply(target);
            TransitionResult::Moved
        }
        None => TransitionResult::NoOp,
    };
    let result = match action {
        Action::Click { at } => match screen.hit(*at) {
            Some(el) => match go(&mut next, Trigger::Tap { element: el.id.clone() }) {
                TransitionResult::NoOp
                    if el.kind == ElementKind::Input && next.focused_input.as_ref() != Some(&el.id) =>
                {
                    next.focused_input = Some(el.id.clone());
                    TransitionResult::Moved
                }
                r => r,
            },
            None => TransitionResult::NoOp,
        },
        Action::LongPress { at, .. } => match screen.hit(*at) {
            Some(el) => go(&mut next, Trigger::LongPress { element: el.id.clone() }),
            None => TransitionResult::NoOp,
        },
        Action::Swipe { start, end } => match dominant_direction(*start, *end) {
            Some(direction) if screen.size.contains(*start) => go(&mut next, Trigger::Swipe { direction }),
            _ => TransitionResult::NoOp,
        },
        Action::Type { text } => match state.focused_input.clone() {
            Some(input) => {
                next.inputs.insert(input.clone(), text.clone());
                go(&mut next, Trigger::TypeInto { element: input });
                TransitionResult::InputAccepted
            }
            None => TransitionResult::NoOp,
        },
        Action::SystemButton { button } => match go(&mut next, Trigger::SystemButton { button: *button }) {
            TransitionResult::NoOp => match button {
                SystemButton::Back => match next.back_stack.pop() {
                    Some(previous) => {
                        next.screen = previous;
                        next.focused_input = None;
                        TransitionResult::Moved
                    }
                    None => TransitionResult::NoOp,
                },
                SystemButton::Home if state.screen != script.initial_screen => {
                    next.screen = script.initial_screen.clone();
                    next.back_stack.clear();
                    next.focused_input = None;
                    TransitionResult::Moved
                }
                _ => TransitionResult::NoOp,
            },
            r => r,
        },
        Action::Key { keyevent } => go(&mut next, Trigger::Key { keyevent: keyevent.clone() }),
        Action::Terminate { .. } => TransitionResult::Terminated,
        Action::Wait { seconds } => {
            next.elapsed_wait += seconds;
            TransitionResult::NoOp
        }
    };
    (next, result)
}

/// Human-readable description of a screen for think texts and judge prompts.
pub fn describe_screen(script: &AppScript, state: &EnvState) -> String {
    match script.screen(&state.screen) {
        Some(s) => format!("{} screen of {}", s.id, script.app),
        None => format!("unknown screen {}", state.screen),
    }
}
