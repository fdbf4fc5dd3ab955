//! Annotated step records, annotation lint and dataset statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::protocol::{parse_tool_call, render_turn};
use crate::reward::GroundTruthStep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstructionLevel {
    /// e.g. "create an event for tomorrow at 2 pm"
    Task,
    /// e.g. "click the icon in the top left corner"
    Action,
}

/// One annotated step of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub trajectory_id: String,
    pub app: String,
    pub instruction: String,
    pub instruction_level: InstructionLevel,
    pub step_index: usize,
    pub screenshot_ref: String,
    pub think: String,
    pub action: String,
    /// Tool-call envelope JSON (the `<tool_call>` body).
    pub tool_call: String,
    pub ground_truth: GroundTruthStep,
}

impl DatasetRecord {
    /// The annotation as a complete three-block response.
    pub fn target_response(&self) -> String {
        format!(
            "<think>{}</think><action>{}</action><tool_call>{}</tool_call>",
            self.think, self.action, self.tool_call
        )
    }

    /// Same as [`Self::target_response`] but with the tool call re-serialized
    /// canonically; `None` when the tool call does not parse.
    pub fn canonical_response(&self) -> Option<String> {
        parse_tool_call(&self.tool_call).ok().map(|a| render_turn(&self.think, &self.action, &a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LintViolation {
    MissingInstruction,
    MissingThink,
    /// Think text lacks the state / next action / goal clauses.
    ThinkShape,
    MissingAction,
    ToolCallParseFailure,
    GroundTruthInvalid,
    /// Tool-call variant differs from the ground-truth variant.
    VariantMismatch,
}

impl LintViolation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MissingInstruction => "missing-instruction",
            Self::MissingThink => "missing-think",
            Self::ThinkShape => "think-shape",
            Self::MissingAction => "missing-action",
            Self::ToolCallParseFailure => "tool-call-parse-failure",
            Self::GroundTruthInvalid => "ground-truth-invalid",
            Self::VariantMismatch => "variant-mismatch",
        }
    }
}

const CLAUSE_PUNCTUATION: &[char] = &[',', '.', ';', ':', '!', '?', '，', '。', '；', '：', '、', '！', '？'];
const PURPOSE_MARKERS: &[&str] = &[" in order to ", " so that ", " to ", "为了", "以便", "以"];

/// Number of nonempty clauses, splitting on punctuation and on purpose
/// connectives ("... to enter Taobao").
pub fn think_clauses(think: &str) -> usize {
    let mut count = 0;
    for segment in think.split(CLAUSE_PUNCTUATION) {
        let mut pieces: Vec<&str> = alloc::vec![segment];
        for marker in PURPOSE_MARKERS {
            pieces = pieces.iter().flat_map(|p| p.split(marker)).collect();
        }
        count += pieces.iter().filter(|p| !p.trim().is_empty()).count();
    }
    count
}

/// Checks one record. An empty result means the record is clean.
pub fn lint_record(rec: &DatasetRecord) -> Vec<LintViolation> {
    let mut out = Vec::new();
    if rec.instruction.trim().is_empty() {
        out.push(LintViolation::MissingInstruction);
    }
    if rec.think.trim().is_empty() {
        out.push(LintViolation::MissingThink);
    } else if think_clauses(&rec.think) < 3 {
        out.push(LintViolation::ThinkShape);
    }
    if rec.action.trim().is_empty() {
        out.push(LintViolation::MissingAction);
    }
    let gt_ok = rec.ground_truth.validate().is_ok();
    if !gt_ok {
        out.push(LintViolation::GroundTruthInvalid);
    }
    match parse_tool_call(&rec.tool_call) {
        Ok(action) if gt_ok && action.kind() != rec.ground_truth.expected_variant => {
            out.push(LintViolation::VariantMismatch)
        }
        Ok(_) => {}
        Err(_) => out.push(LintViolation::ToolCallParseFailure),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatsIssue {
    DuplicateStep { trajectory_id: String, step_index: usize },
    ConflictingTrajectory { trajectory_id: String },
    Unreadable { source: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub apps: usize,
    pub instructions: usize,
    pub trajectories: usize,
    pub steps: usize,
    /// trajectory length -> number of trajectories
    pub length_histogram: BTreeMap<usize, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<StatsIssue>,
}

/// Counts apps, distinct (app, instruction) pairs, trajectories and steps.
/// Duplicate `(trajectory_id, step_index)` pairs are reported and counted once;
/// a trajectory id reused across apps or instructions is reported.
pub fn dataset_stats<'a, I>(records: I) -> DatasetStats
where
    I: IntoIterator<Item = &'a DatasetRecord>,
{
    let mut apps = BTreeSet::new();
    let mut instructions = BTreeSet::new();
    let mut per_traj: BTreeMap<&str, (BTreeSet<usize>, &str, &str)> = BTreeMap::new();
    let mut issues = Vec::new();
    for rec in records {
        apps.insert(rec.app.as_str());
        instructions.insert((rec.app.as_str(), rec.instruction.as_str()));
        let entry = per_traj
            .entry(rec.trajectory_id.as_str())
            .or_insert_with(|| (BTreeSet::new(), rec.app.as_str(), rec.instruction.as_str()));
        if (entry.1, entry.2) != (rec.app.as_str(), rec.instruction.as_str()) {
            issues.push(StatsIssue::ConflictingTrajectory { trajectory_id: rec.trajectory_id.clone() });
        }
        if !entry.0.insert(rec.step_index) {
            issues.push(StatsIssue::DuplicateStep {
                trajectory_id: rec.trajectory_id.clone(),
                step_index: rec.step_index,
            });
        }
    }
    let mut length_histogram = BTreeMap::new();
    let mut steps = 0;
    for (idx, _, _) in per_traj.values() {
        steps += idx.len();
        *length_histogram.entry(idx.len()).or_insert(0) += 1;
    }
    DatasetStats {
        apps: apps.len(),
        instructions: instructions.len(),
        trajectories: per_traj.len(),
        steps,
        length_histogram,
        issues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{serialize_action, Action};
    use crate::reward::BBox;
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn clean(traj: &str, step: usize) -> DatasetRecord {
        DatasetRecord {
            trajectory_id: traj.to_string(),
            app: "Taobao".into(),
            instruction: "Open Taobao".into(),
            instruction_level: InstructionLevel::Task,
            step_index: step,
            screenshot_ref: format!("{step:03}.png"),
            think: "Currently on the phone home screen, the next step is to click the Taobao app to enter Taobao."
                .into(),
            action: "click the Taobao icon".into(),
            tool_call: serialize_action(&Action::click(540, 960)),
            ground_truth: GroundTruthStep::click(BBox::new(500, 900, 600, 1000).unwrap()),
        }
    }

    #[test]
    fn clean_record() {
        assert!(lint_record(&clean("t", 0)).is_empty());
    }

    #[test]
    fn unparseable_tool_call() {
        let rec = DatasetRecord { tool_call: "{\"name\":\"mobile_use\"".into(), ..clean("t", 0) };
        assert_eq!(lint_record(&rec), vec![LintViolation::ToolCallParseFailure]);
    }

    #[test]
    fn empty_think() {
        let rec = DatasetRecord { think: "  ".into(), ..clean("t", 0) };
        assert_eq!(lint_record(&rec), vec![LintViolation::MissingThink]);
    }

    #[test]
    fn think_shape() {
        assert_eq!(think_clauses("on home, click Taobao, to open it"), 3);
        assert_eq!(think_clauses("在手机主屏幕，下一步点击淘宝，以进入淘宝。"), 3);
        let rec = DatasetRecord { think: "click it".into(), ..clean("t", 0) };
        assert_eq!(lint_record(&rec), vec![LintViolation::ThinkShape]);
    }

    #[test]
    fn variant_mismatch_and_bad_truth() {
        let rec = DatasetRecord { tool_call: serialize_action(&Action::Type { text: "x".into() }), ..clean("t", 0) };
        assert_eq!(lint_record(&rec), vec![LintViolation::VariantMismatch]);
        let mut rec = clean("t", 0);
        rec.ground_truth.expected_argument = Some("x".into());
        assert_eq!(lint_record(&rec), vec![LintViolation::GroundTruthInvalid]);
    }

    #[test]
    fn lint_is_idempotent() {
        let rec = DatasetRecord { think: "".into(), action: "".into(), ..clean("t", 0) };
        assert_eq!(lint_record(&rec), lint_record(&rec));
    }

    #[test]
    fn empty_stats() {
        let stats = dataset_stats(&[]);
        assert_eq!(stats, DatasetStats::default());
    }

    #[test]
    fn histogram_by_hand() {
        let mut recs = Vec::new();
        for (t, len) in [("a", 2), ("b", 3), ("c", 5)] {
            for s in 0..len {
                recs.push(clean(t, s));
            }
        }
        let stats = dataset_stats(&recs);
        assert_eq!(stats.steps, 10);
        assert_eq!(stats.trajectories, 3);
        assert_eq!(stats.apps, 1);
        assert_eq!(stats.instructions, 1);
        assert_eq!(stats.length_histogram, BTreeMap::from([(2, 1), (3, 1), (5, 1)]));
        assert!(stats.issues.is_empty());
    }

    #[test]
    fn duplicate_steps_reported() {
        let recs = vec![clean("a", 0), clean("a", 0), clean("a", 1)];
        let stats = dataset_stats(&recs);
        assert_eq!(stats.steps, 2);
        assert_eq!(stats.issues, vec![StatsIssue::DuplicateStep { trajectory_id: "a".into(), step_index: 0 }]);
    }
}
