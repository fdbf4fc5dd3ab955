//! Unified action space and the `<think>` / `<action>` / `<tool_call>` response format.
//!
//! A well-formed agent response is exactly three tagged blocks in that order,
//! separated only by whitespace. The `<tool_call>` body is a JSON envelope
//!
//! ```text
//! {"name":"mobile_use","arguments":{"action":"click","coordinate":[540,960]}}
//! ```
//!
//! whose argument keys form a closed schema: `coordinate`, `coordinate2`,
//! `text`, `time`, `button` and `status`, plus the `action` discriminator.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

/// Function name every tool call must use.
pub const FUNCTION_NAME: &str = "mobile_use";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub const fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

impl ScreenSize {
    pub const fn new(width: u32, height: u32) -> Self {
        Self { width, height }
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x < self.width && p.y < self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemButton {
    Back,
    Home,
    Menu,
    Enter,
}

impl SystemButton {
    pub const ALL: [SystemButton; 4] = [Self::Back, Self::Home, Self::Menu, Self::Enter];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Back => "Back",
            Self::Home => "Home",
            Self::Menu => "Menu",
            Self::Enter => "Enter",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminateStatus {
    Success,
    Failure,
}

impl TerminateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Success => "success",
            Self::Failure => "failure",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "success" => Some(Self::Success),
            "failure" => Some(Self::Failure),
            _ => None,
        }
    }
}

/// The eight action variants, without arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Key,
    Click,
    Swipe,
    LongPress,
    Type,
    SystemButton,
    Terminate,
    Wait,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        Self::Key,
        Self::Click,
        Self::Swipe,
        Self::LongPress,
        Self::Type,
        Self::SystemButton,
        Self::Terminate,
        Self::Wait,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Key => "key",
            Self::Click => "click",
            Self::Swipe => "swipe",
            Self::LongPress => "long_press",
            Self::Type => "type",
            Self::SystemButton => "system_button",
            Self::Terminate => "terminate",
            Self::Wait => "wait",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Argument keys (besides `action`) this variant requires, in canonical order.
    pub fn argument_keys(self) -> &'static [&'static str] {
        match self {
            Self::Key | Self::Type => &["text"],
            Self::Click => &["coordinate"],
            Self::Swipe => &["coordinate", "coordinate2"],
            Self::LongPress => &["coordinate", "time"],
            Self::SystemButton => &["button"],
            Self::Terminate => &["status"],
            Self::Wait => &["time"],
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One atomic GUI action.
///
/// Durations are seconds and strictly positive. Serialized (serde) as the
/// canonical tool-call envelope string.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// adb `keyevent` name, e.g. `KEYCODE_ENTER`.
    Key {
        keyevent: String,
    },
    Click {
        at: Point,
    },
    Swipe {
        start: Point,
        end: Point,
    },
    LongPress {
        at: Point,
        seconds: f64,
    },
    Type {
        text: String,
    },
    SystemButton {
        button: SystemButton,
    },
    Terminate {
        status: TerminateStatus,
    },
    Wait {
        seconds: f64,
    },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Self::Key { .. } => ActionKind::Key,
            Self::Click { .. } => ActionKind::Click,
            Self::Swipe { .. } => ActionKind::Swipe,
            Self::LongPress { .. } => ActionKind::LongPress,
            Self::Type { .. } => ActionKind::Type,
            Self::SystemButton { .. } => ActionKind::SystemButton,
            Self::Terminate { .. } => ActionKind::Terminate,
            Self::Wait { .. } => ActionKind::Wait,
        }
    }

    pub fn click(x: u32, y: u32) -> Self {
        Self::Click { at: Point::new(x, y) }
    }

    /// Every screen coordinate the action carries.
    pub fn points(&self) -> Vec<Point> {
        match self {
            Self::Click { at } | Self::LongPress { at, .. } => alloc::vec![*at],
            Self::Swipe { start, end } => alloc::vec![*start, *end],
            _ => Vec::new(),
        }
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&serialize_action(self))
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_tool_call(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tag {
    Think,
    Action,
    ToolCall,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::Think, Tag::Action, Tag::ToolCall];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Action => "action",
            Tag::ToolCall => "tool_call",
        }
    }

    pub fn open(self) -> &'static str {
        match self {
            Tag::Think => "<think>",
            Tag::Action => "<action>",
            Tag::ToolCall => "<tool_call>",
        }
    }

    pub fn close(self) -> &'static str {
        match self {
            Tag::Think => "</think>",
            Tag::Action => "</action>",
            Tag::ToolCall => "</tool_call>",
        }
    }
}

/// Why a response is not format-compliant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    #[error("missing <{}> block", tag.name())]
    MissingTag { tag: Tag },
    #[error("more than one <{}> block", tag.name())]
    DuplicateTag { tag: Tag },
    #[error("<{}> block is not closed properly", tag.name())]
    UnclosedTag { tag: Tag },
    #[error("blocks are not in think, action, tool_call order")]
    TagOrder,
    #[error("non-whitespace text outside the tagged blocks")]
    TrailingText,
    #[error("tool-call envelope: {message}")]
    Envelope { message: String },
    #[error("unknown action `{name}`")]
    UnknownAction { name: String },
    #[error("argument `{key}`: {reason}")]
    BadArgument { key: String, reason: String },
    #[error("coordinate ({x}, {y}) outside {width}x{height} screen")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },
}

impl Diagnostic {
    fn envelope(message: impl Into<String>) -> Self {
        Self::Envelope { message: message.into() }
    }

    fn bad(key: &str, reason: impl Into<String>) -> Self {
        Self::BadArgument { key: key.to_owned(), reason: reason.into() }
    }
}

/// A parsed agent response.
///
/// `tool_call` is `None` when the `<tool_call>` block is absent or its body
/// does not parse into a valid [`Action`]; the reason is in `diagnostics`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub raw: String,
    pub think_text: Option<String>,
    pub action_text: Option<String>,
    pub tool_call: Option<Action>,
    pub diagnostics: Vec<Diagnostic>,
}

impl AgentTurn {
    /// Full compliance with the response format. Implies `tool_call.is_some()`.
    pub fn format_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Clone, Copy)]
struct Block {
    open_start: usize,
    body_start: usize,
    body_end: usize,
    close_end: usize,
}

fn locate(raw: &str, tag: Tag) -> Result<Option<Block>, Diagnostic> {
    let opens: Vec<usize> = raw.match_indices(tag.open()).map(|(i, _)| i).collect();
    let closes: Vec<usize> = raw.match_indices(tag.close()).map(|(i, _)| i).collect();
    match (opens.as_slice(), closes.as_slice()) {
        ([], []) => Ok(None),
        ([open], [close]) if *close >= open + tag.open().len() => Ok(Some(Block {
            open_start: *open,
            body_start: open + tag.open().len(),
            body_end: *close,
            close_end: close + tag.close().len(),
        })),
        (o, c) if o.len() > 1 || c.len() > 1 => Err(Diagnostic::DuplicateTag { tag }),
        _ => Err(Diagnostic::UnclosedTag { tag }),
    }
}

/// Parses a raw agent response. Total: malformed input yields a turn with
/// `format_ok() == false` and at least one diagnostic.
///
/// With `bounds`, coordinates outside the screen are reported as
/// [`Diagnostic::OutOfBounds`]; the parsed action is still returned.
pub fn parse_turn(raw: &str, bounds: Option<ScreenSize>) -> AgentTurn {
    let mut diagnostics = Vec::new();
    let mut blocks: [Option<Block>; 3] = [None; 3];
    for (slot, tag) in blocks.iter_mut().zip(Tag::ALL) {
        match locate(raw, tag) {
            Ok(Some(b)) => *slot = Some(b),
            Ok(None) => diagnostics.push(Diagnostic::MissingTag { tag }),
            Err(d) => diagnostics.push(d),
        }
    }

    if let [Some(think), Some(action), Some(call)] = blocks {
        if think.close_end > action.open_start || action.close_end > call.open_start {
            diagnostics.push(Diagnostic::TagOrder);
        } else {
            let outside = [
                &raw[..think.open_start],
                &raw[think.close_end..action.open_start],
                &raw[action.close_end..call.open_start],
                &raw[call.close_end..],
            ];
            if outside.iter().any(|s| !s.trim().is_empty()) {
                diagnostics.push(Diagnostic::TrailingText);
            }
        }
    }

    let body = |b: Option<Block>| b.map(|b| raw[b.body_start..b.body_end].trim().to_owned());
    let think_text = body(blocks[0]);
    let action_text = body(blocks[1]);
    let tool_call = match body(blocks[2]) {
        Some(text) => match parse_tool_call(&text) {
            Ok(action) => {
                if let Some(size) = bounds {
                    for p in action.points() {
                        if !size.contains(p) {
                            diagnostics.push(Diagnostic::OutOfBounds {
                                x: p.x,
                                y: p.y,
                                width: size.width,
                                height: size.height,
                            });
                        }
                    }
                }
                Some(action)
            }
            Err(d) => {
                diagnostics.push(d);
                None
            }
        },
        None => None,
    };

    AgentTurn { raw: raw.to_owned(), think_text, action_text, tool_call, diagnostics }
}

/// Parses a tool-call envelope (the body of a `<tool_call>` block).
pub fn parse_tool_call(text: &str) -> Result<Action, Diagnostic> {
    let value: Value =
        serde_json::from_str(text.trim()).map_err(|e| Diagnostic::envelope(format!("invalid JSON: {e}")))?;
    let Value::Object(mut envelope) = value else {
        return Err(Diagnostic::envelope("not a JSON object"));
    };
    if let Some(key) = envelope.keys().find(|k| *k != "name" && *k != "arguments") {
        return Err(Diagnostic::envelope(format!("unknown key `{key}`")));
    }
    match envelope.get("name") {
        Some(Value::String(name)) if name == FUNCTION_NAME => {}
        Some(Value::String(name)) => {
            return Err(Diagnostic::envelope(format!("function name `{name}` is not `{FUNCTION_NAME}`")))
        }
        Some(_) => return Err(Diagnostic::envelope("`name` is not a string")),
        None => return Err(Diagnostic::envelope("missing `name`")),
    }
    let Some(Value::Object(args)) = envelope.remove("arguments") else {
        return Err(Diagnostic::envelope("`arguments` missing or not an object"));
    };
    parse_arguments(args)
}

fn parse_arguments(args: Map<String, Value>) -> Result<Action, Diagnostic> {
    let kind = match args.get("action") {
        Some(Value::String(name)) => {
            ActionKind::from_name(name).ok_or_else(|| Diagnostic::UnknownAction { name: name.clone() })?
        }
        Some(_) => return Err(Diagnostic::envelope("`action` is not a string")),
        None => return Err(Diagnostic::envelope("missing `action`")),
    };
    let expected = kind.argument_keys();
    if let Some(key) = args.keys().find(|k| *k != "action" && !expected.contains(&k.as_str())) {
        return Err(Diagnostic::bad(key, format!("not an argument of `{kind}`")));
    }
    let get = |key: &str| args.get(key).ok_or_else(|| Diagnostic::bad(key, "missing"));

    Ok(match kind {
        ActionKind::Key => {
            let keyevent = string_arg("text", get("text")?)?;
            if keyevent.trim().is_empty() {
                return Err(Diagnostic::bad("text", "empty key event"));
            }
            Action::Key { keyevent }
        }
        ActionKind::Type => Action::Type { text: string_arg("text", get("text")?)? },
        ActionKind::Click => Action::Click { at: point_arg("coordinate", get("coordinate")?)? },
        ActionKind::Swipe => Action::Swipe {
            start: point_arg("coordinate", get("coordinate")?)?,
            end: point_arg("coordinate2", get("coordinate2")?)?,
        },
        ActionKind::LongPress => Action::LongPress {
            at: point_arg("coordinate", get("coordinate")?)?,
            seconds: duration_arg("time", get("time")?)?,
        },
        ActionKind::Wait => Action::Wait { seconds: duration_arg("time", get("time")?)? },
        ActionKind::SystemButton => {
            let name = string_arg("button", get("button")?)?;
            let button = SystemButton::from_name(&name)
                .ok_or_else(|| Diagnostic::bad("button", format!("`{name}` is not one of Back, Home, Menu, Enter")))?;
            Action::SystemButton { button }
        }
        ActionKind::Terminate => {
            let name = string_arg("status", get("status")?)?;
            let status = TerminateStatus::from_name(&name)
                .ok_or_else(|| Diagnostic::bad("status", format!("`{name}` is not one of success, failure")))?;
            Action::Terminate { status }
        }
    })
}

fn string_arg(key: &str, v: &Value) -> Result<String, Diagnostic> {
    v.as_str().map(ToOwned::to_owned).ok_or_else(|| Diagnostic::bad(key, "expected a string"))
}

fn point_arg(key: &str, v: &Value) -> Result<Point, Diagnostic> {
    let Value::Array(items) = v else {
        return Err(Diagnostic::bad(key, "expected [x, y]"));
    };
    if items.len() != 2 {
        return Err(Diagnostic::bad(key, format!("expected 2 components, got {}", items.len())));
    }
    let component = |c: &Value| -> Result<u32, Diagnostic> {
        let Value::Number(n) = c else {
            return Err(Diagnostic::bad(key, "coordinate components must be numbers"));
        };
        if let Some(u) = n.as_u64() {
            u32::try_from(u).map_err(|_| Diagnostic::bad(key, "coordinate too large"))
        } else if n.is_i64() {
            Err(Diagnostic::bad(key, "coordinates must be non-negative"))
        } else {
            Err(Diagnostic::bad(key, "coordinates must be integers"))
        }
    };
    Ok(Point::new(component(&items[0])?, component(&items[1])?))
}

fn duration_arg(key: &str, v: &Value) -> Result<f64, Diagnostic> {
    let secs = v.as_f64().ok_or_else(|| Diagnostic::bad(key, "expected a number of seconds"))?;
    if secs.is_finite() && secs > 0.0 {
        Ok(secs)
    } else {
        Err(Diagnostic::bad(key, "duration must be positive"))
    }
}

/// Canonical envelope text for an action. Keys appear as `name`, `arguments`;
/// inside `arguments`, `action` first, then the variant's keys in schema order.
pub fn serialize_action(action: &Action) -> String {
    fn json_str(s: &str) -> String {
        serde_json::to_string(s).unwrap_or_default()
    }
    fn json_f64(v: f64) -> String {
        serde_json::to_string(&v).unwrap_or_default()
    }
    fn point(p: Point) -> String {
        format!("[{},{}]", p.x, p.y)
    }

    let args = match action {
        Action::Key { keyevent } => format!(",\"text\":{}", json_str(keyevent)),
        Action::Type { text } => format!(",\"text\":{}", json_str(text)),
        Action::Click { at } => format!(",\"coordinate\":{}", point(*at)),
        Action::Swipe { start, end } => {
            format!(",\"coordinate\":{},\"coordinate2\":{}", point(*start), point(*end))
        }
        Action::LongPress { at, seconds } => {
            format!(",\"coordinate\":{},\"time\":{}", point(*at), json_f64(*seconds))
        }
        Action::Wait { seconds } => format!(",\"time\":{}", json_f64(*seconds)),
        Action::SystemButton { button } => format!(",\"button\":{}", json_str(button.as_str())),
        Action::Terminate { status } => format!(",\"status\":{}", json_str(status.as_str())),
    };
    format!("{{\"name\":\"{FUNCTION_NAME}\",\"arguments\":{{\"action\":\"{}\"{args}}}}}", action.kind().as_str())
}

/// Renders a complete, well-formed three-block response.
pub fn render_turn(think: &str, action_text: &str, action: &Action) -> String {
    format!("<think>{think}</think><action>{action_text}</action><tool_call>{}</tool_call>", serialize_action(action))
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_action(self))
    }
}

/// Short human description of an action, used as `<action>` text by scripted policies.
pub fn describe(action: &Action) -> String {
    match action {
        Action::Key { keyevent } => format!("press key {keyevent}"),
        Action::Click { at } => format!("click at ({}, {})", at.x, at.y),
        Action::Swipe { start, end } => {
            format!("swipe from ({}, {}) to ({}, {})", start.x, start.y, end.x, end.y)
        }
        Action::LongPress { at, seconds } => format!("long press ({}, {}) for {seconds}s", at.x, at.y),
        Action::Type { text } => format!("type \"{text}\""),
        Action::SystemButton { button } => format!("press the {} button", button.as_str()),
        Action::Terminate { status } => format!("finish the task with {}", status.as_str()),
        Action::Wait { seconds } => format!("wait {seconds}s"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAOBAO: &str = "<think>on home screen, next click Taobao to open it</think><action>click the Taobao icon</action><tool_call>{\"name\":\"mobile_use\",\"arguments\":{\"action\":\"click\",\"coordinate\":[540,960]}}</tool_call>";

    fn wrap(call: &str) -> String {
        format!("<think>a, b, c</think><action>do it</action><tool_call>{call}</tool_call>")
    }

    #[test]
    fn well_formed_click() {
        let turn = parse_turn(TAOBAO, None);
        assert!(turn.format_ok(), "{:?}", turn.diagnostics);
        assert_eq!(turn.tool_call, Some(Action::click(540, 960)));
        assert_eq!(turn.action_text.as_deref(), Some("click the Taobao icon"));
    }

    #[test]
    fn only_think_reports_both_missing_tags() {
        let turn = parse_turn("<think>done</think>", None);
        assert!(!turn.format_ok());
        assert_eq!(
            turn.diagnostics,
            vec![Diagnostic::MissingTag { tag: Tag::Action }, Diagnostic::MissingTag { tag: Tag::ToolCall }]
        );
        assert_eq!(turn.tool_call, None);
    }

    #[test]
    fn terminate_status_outside_enum() {
        let turn =
            parse_turn(&wrap(r#"{"name":"mobile_use","arguments":{"action":"terminate","status":"done"}}"#), None);
        assert!(!turn.format_ok());
        assert_eq!(turn.diagnostics.len(), 1);
        assert!(matches!(&turn.diagnostics[0], Diagnostic::BadArgument { key, .. } if key == "status"));
    }

    #[test]
    fn whitespace_between_blocks_is_fine_text_is_not() {
        let spaced = "  <think>x</think>\n<action>y</action>\n\n<tool_call> {\"name\":\"mobile_use\",\"arguments\":{\"action\":\"wait\",\"time\":2}} </tool_call>\n";
        assert!(parse_turn(spaced, None).format_ok());
        let chatty = format!("Sure! {}", wrap(r#"{"name":"mobile_use","arguments":{"action":"wait","time":2}}"#));
        assert_eq!(parse_turn(&chatty, None).diagnostics, vec![Diagnostic::TrailingText]);
    }

    #[test]
    fn order_and_duplicates() {
        let call = r#"{"name":"mobile_use","arguments":{"action":"wait","time":1}}"#;
        let swapped = format!("<action>y</action><think>x</think><tool_call>{call}</tool_call>");
        assert_eq!(parse_turn(&swapped, None).diagnostics, vec![Diagnostic::TagOrder]);
        let doubled = format!("<think>x</think><think>x</think><action>y</action><tool_call>{call}</tool_call>");
        assert_eq!(parse_turn(&doubled, None).diagnostics, vec![Diagnostic::DuplicateTag { tag: Tag::Think }]);
        let unclosed = format!("<think>x<action>y</action><tool_call>{call}</tool_call>");
        assert_eq!(parse_turn(&unclosed, None).diagnostics, vec![Diagnostic::UnclosedTag { tag: Tag::Think }]);
    }

    #[test]
    fn fractional_and_negative_coordinates_rejected() {
        for call in [
            r#"{"name":"mobile_use","arguments":{"action":"click","coordinate":[540.0,960]}}"#,
            r#"{"name":"mobile_use","arguments":{"action":"click","coordinate":[540.5,960]}}"#,
            r#"{"name":"mobile_use","arguments":{"action":"click","coordinate":[-1,960]}}"#,
            r#"{"name":"mobile_use","arguments":{"action":"click","coordinate":[1,2,3]}}"#,
        ] {
            let turn = parse_turn(&wrap(call), None);
            assert!(
                matches!(turn.diagnostics.as_slice(), [Diagnostic::BadArgument { key, .. }] if key == "coordinate"),
                "{call}: {:?}",
                turn.diagnostics
            );
        }
    }

    #[test]
    fn envelope_violations() {
        let cases = [
            (r#"{"name":"other","arguments":{"action":"wait","time":1}}"#, "envelope"),
            (r#"{"name":"mobile_use","arguments":{"action":"wait","time":1},"extra":1}"#, "envelope"),
            (r#"{"name":"mobile_use"}"#, "envelope"),
            (r#"not json"#, "envelope"),
            (r#"{"name":"mobile_use","arguments":{"action":"fly"}}"#, "unknown"),
            (r#"{"name":"mobile_use","arguments":{"action":"wait","time":1,"text":"x"}}"#, "bad"),
            (r#"{"name":"mobile_use","arguments":{"action":"wait"}}"#, "bad"),
            (r#"{"name":"mobile_use","arguments":{"action":"wait","time":0}}"#, "bad"),
            (r#"{"name":"mobile_use","arguments":{"action":"system_button","button":"back"}}"#, "bad"),
        ];
        for (call, class) in cases {
            let d = parse_tool_call(call).unwrap_err();
            let got = match d {
                Diagnostic::Envelope { .. } => "envelope",
                Diagnostic::UnknownAction { .. } => "unknown",
                Diagnostic::BadArgument { .. } => "bad",
                _ => "other",
            };
            assert_eq!(got, class, "{call}");
        }
    }

    #[test]
    fn out_of_bounds_is_distinct() {
        let turn = parse_turn(TAOBAO, Some(ScreenSize::new(540, 2400)));
        assert_eq!(turn.diagnostics, vec![Diagnostic::OutOfBounds { x: 540, y: 960, width: 540, height: 2400 }]);
        assert_eq!(turn.tool_call, Some(Action::click(540, 960)));
        assert!(parse_turn(TAOBAO, Some(ScreenSize::new(1080, 2400))).format_ok());
    }

    #[test]
    fn canonical_forms() {
        assert_eq!(
            serialize_action(&Action::click(100, 200)),
            r#"{"name":"mobile_use","arguments":{"action":"click","coordinate":[100,200]}}"#
        );
        assert_eq!(
            serialize_action(&Action::Terminate { status: TerminateStatus::Success }),
            r#"{"name":"mobile_use","arguments":{"action":"terminate","status":"success"}}"#
        );
        assert_eq!(
            serialize_action(&Action::LongPress { at: Point::new(1, 2), seconds: 2.0 }),
            r#"{"name":"mobile_use","arguments":{"action":"long_press","coordinate":[1,2],"time":2.0}}"#
        );
    }

    #[test]
    fn serde_uses_envelope_string() {
        let a = Action::Type { text: "iPhone \"16\"".into() };
        let json = serde_json::to_string(&a).unwrap();
        let back: Action = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }
}
