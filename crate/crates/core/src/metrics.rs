//! Benchmark metrics over graded trajectories.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::protocol::Action;
use crate::reward::{action_matches, GroundTruthStep, MatchConfig};
use crate::trajectory::{Step, Trajectory};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no {0} to evaluate")]
    Empty(&'static str),
    #[error("pass@k needs 1 <= k <= n and c <= n (n={n}, c={c}, k={k})")]
    PassAtK { n: usize, c: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub format_ok: bool,
    /// Action graded on its own, even when the response format failed.
    pub action_ok: bool,
    pub combined_ok: bool,
}

impl StepVerdict {
    pub fn new(format_ok: bool, action_ok: bool) -> Self {
        Self { format_ok, action_ok, combined_ok: format_ok && action_ok }
    }
}

/// Grades one step against its ground truth; `None` when the step has none.
pub fn step_verdict(step: &Step, cfg: MatchConfig) -> Option<StepVerdict> {
    let gt = step.ground_truth.as_ref()?;
    let action_ok = step.turn.tool_call.as_ref().is_some_and(|a| action_matches(a, gt, cfg).unwrap_or(false));
    Some(StepVerdict::new(step.turn.format_ok(), action_ok))
}

pub fn trajectory_verdicts(traj: &Trajectory, cfg: MatchConfig) -> Vec<StepVerdict> {
    traj.steps.iter().filter_map(|s| step_verdict(s, cfg)).collect()
}

fn percent(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

/// Percentage of steps that are both well-formed and correct.
pub fn step_accuracy(verdicts: &[StepVerdict]) -> Result<f64, MetricsError> {
    if verdicts.is_empty() {
        return Err(MetricsError::Empty("steps"));
    }
    Ok(percent(verdicts.iter().filter(|v| v.combined_ok).count(), verdicts.len()))
}

/// A trajectory counts when it has at least one graded step and all of them
/// are correct.
pub fn trajectory_all_correct(verdicts: &[StepVerdict]) -> bool {
    !verdicts.is_empty() && verdicts.iter().all(|v| v.combined_ok)
}

/// Percentage of trajectories executed entirely correctly.
pub fn task_success(trajectories: &[Vec<StepVerdict>]) -> Result<f64, MetricsError> {
    if trajectories.is_empty() {
        return Err(MetricsError::Empty("trajectories"));
    }
    let ok = trajectories.iter().filter(|t| trajectory_all_correct(t)).count();
    Ok(percent(ok, trajectories.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSuccess {
    pub percent: f64,
    pub evaluated: usize,
    /// Indices of inputs without final-state evidence.
    pub excluded: Vec<usize>,
}

/// Percentage of trajectories whose final state completes the task.
/// Entries without evidence are excluded and listed.
pub fn tail_success(final_success: &[Option<bool>]) -> Result<TailSuccess, MetricsError> {
    let excluded: Vec<usize> = final_success.iter().enumerate().filter(|(_, f)| f.is_none()).map(|(i, _)| i).collect();
    let evaluated = final_success.len() - excluded.len();
    if evaluated == 0 {
        return Err(MetricsError::Empty("trajectories with final-state evidence"));
    }
    let ok = final_success.iter().filter(|f| **f == Some(true)).count();
    Ok(TailSuccess { percent: percent(ok, evaluated), evaluated, excluded })
}

/// Number of steps whose action is wrong. Format-only failures do not count.
pub fn avg_err(verdicts: &[StepVerdict]) -> usize {
    verdicts.iter().filter(|v| !v.action_ok).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeExactMatch {
    pub tm: bool,
    pub em: bool,
}

/// Type match compares the action variant; exact match also grades the
/// arguments with the reward rules.
pub fn type_exact_match(predicted: &Action, gt: &GroundTruthStep, cfg: MatchConfig) -> TypeExactMatch {
    let tm = predicted.kind() == gt.expected_variant;
    let em = tm && action_matches(predicted, gt, cfg).unwrap_or(false);
    TypeExactMatch { tm, em }
}

/// Unbiased pass@k from `n` attempts with `c` successes:
/// `1 - C(n-c, k) / C(n, k)`, evaluated as a running product.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64, MetricsError> {
    if k == 0 || k > n || c > n {
        return Err(MetricsError::PassAtK { n, c, k });
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut miss = 1.0;
    for i in (n - c + 1)..=n {
        miss *= 1.0 - k as f64 / i as f64;
    }
    Ok(1.0 - miss)
}

/// Mean pass@k over tasks, each given as its list of attempt outcomes.
pub fn mean_pass_at_k<'a, I>(tasks: I, k: usize) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = &'a [bool]>,
{
    let mut sum = 0.0;
    let mut count = 0usize;
    for attempts in tasks {
        let c = attempts.iter().filter(|x| **x).count();
        sum += pass_at_k(attempts.len(), c, k)?;
        count += 1;
    }
    if count == 0 {
        return Err(MetricsError::Empty("tasks"));
    }
    Ok(sum / count as f64)
}

/// Attempt outcomes per task id: an attempt succeeds when every graded step
/// is correct.
pub fn attempts_by_task(trajs: &[Trajectory], cfg: MatchConfig) -> BTreeMap<String, Vec<bool>> {
    let mut out: BTreeMap<String, Vec<bool>> = BTreeMap::new();
    for t in trajs {
        out.entry(t.task_id.clone()).or_default().push(trajectory_all_correct(&trajectory_verdicts(t, cfg)));
    }
    out
}

/// Mean pass@k over the tasks in `trajs` for each `k`.
pub fn pass_at_k_curve(trajs: &[Trajectory], ks: &[usize], cfg: MatchConfig) -> Result<Vec<PassAtK>, MetricsError> {
    let by_task = attempts_by_task(trajs, cfg);
    ks.iter().map(|&k| Ok(PassAtK { k, value: mean_pass_at_k(by_task.values().map(Vec::as_slice), k)? })).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub trajectories: usize,
    pub steps: usize,
    pub accuracy: f64,
    pub task_success: f64,
    /// `None` when no trajectory has final-state evidence.
    pub tail_success: Option<f64>,
    pub avg_err: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMatchRates {
    pub tm: f64,
    pub em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAtK {
    pub k: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format_version: u32,
    pub overall: MetricRow,
    pub per_app: BTreeMap<String, MetricRow>,
    /// Trajectory ids left out of tail success for lack of evidence.
    pub tail_excluded: Vec<String>,
    pub type_match: TypeMatchRates,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pass_at_k: Vec<PassAtK>,
}

fn metric_row(trajs: &[&Trajectory], cfg: MatchConfig) -> Result<MetricRow, MetricsError> {
    let per_traj: Vec<Vec<StepVerdict>> = trajs.iter().map(|t| trajectory_verdicts(t, cfg)).collect();
    let flat: Vec<StepVerdict> = per_traj.iter().flatten().copied().collect();
    let finals: Vec<Option<bool>> = trajs.iter().map(|t| t.final_success).collect();
    Ok(MetricRow {
        trajectories: trajs.len(),
        steps: flat.len(),
        accuracy: step_accuracy(&flat)?,
        task_success: task_success(&per_traj)?,
        tail_success: tail_success(&finals).ok().map(|t| t.percent),
        avg_err: avg_err(&flat),
    })
}

/// Full report over graded trajectories.
pub fn benchmark_report(trajs: &[Trajectory], cfg: MatchConfig) -> Result<BenchmarkReport, MetricsError> {
    let all: Vec<&Trajectory> = trajs.iter().collect();
    let overall = metric_row(&all, cfg)?;
    let mut by_app: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajs {
        by_app.entry(t.app.as_str()).or_default().push(t);
    }
    let mut per_app = BTreeMap::new();
    for (app, ts) in by_app {
        if let Ok(row) = metric_row(&ts, cfg) {
            per_app.insert(app.into(), row);
        }
    }
    let tail_excluded = trajs.iter().filter(|t| t.final_success.is_none()).map(|t| t.trajectory_id.clone()).collect();
    let (mut tm, mut em, mut n) = (0usize, 0usize, 0usize);
    for step in trajs.iter().flat_map(|t| &t.steps) {
        if let Some(gt) = &step.ground_truth {
            n += 1;
            if let Some(a) = &step.turn.tool_call {
                let m = type_exact_match(a, gt, cfg);
                tm += usize::from(m.tm);
                em += usize::from(m.em);
            }
        }
    }
    Ok(BenchmarkReport {
        format_version: REPORT_FORMAT_VERSION,
        overall,
        per_app,
        tail_excluded,
        type_match: TypeMatchRates { tm: percent(tm, n), em: percent(em, n) },
        pass_at_k: Vec::new(),
    })
}

/// Fixed-width text table, percentages to two decimals.
pub fn render_table(report: &BenchmarkReport) -> String {
    let mut out = String::new();
    let tail = |t: Option<f64>| t.map_or_else(|| String::from("n/a"), |v| format!("{v:.2}"));
    let _ = writeln!(
        out,
        "{:<20} {:>6} {:>7} {:>8} {:>11} {:>11} {:>8}",
        "app", "trajs", "steps", "Acc.", "Task Succ.", "Tail Succ.", "Avg Err"
    );
    let mut row = |name: &str, r: &MetricRow| {
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>7} {:>8.2} {:>11.2} {:>11} {:>8}",
            name,
            r.trajectories,
            r.steps,
            r.accuracy,
            r.task_success,
            tail(r.tail_success),
            r.avg_err
        );
    };
    for (app, r) in &report.per_app {
        row(app, r);
    }
    row("ALL", &report.overall);
    let _ = writeln!(out, "TM {:.2}  EM {:.2}", report.type_match.tm, report.type_match.em);
    for p in &report.pass_at_k {
        let _ = writeln!(out, "pass@{} {:.2}", p.k, 100.0 * p.value);
    }
    if !report.tail_excluded.is_empty() {
        let _ =
            writeln!(out, "excluded from tail success (no final-state evidence): {}", report.tail_excluded.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Point;
    use crate::reward::BBox;
    use alloc::vec;

    fn v(format_ok: bool, action_ok: bool) -> StepVerdict {
        StepVerdict::new(format_ok, action_ok)
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(step_accuracy(&[v(true, true); 4]).unwrap(), 100.0);
        assert_eq!(step_accuracy(&[v(true, true), v(true, true), v(true, true), v(false, true)]).unwrap(), 75.0);
        assert_eq!(step_accuracy(&[]), Err(MetricsError::Empty("steps")));
        let mut steps = vec![v(true, true); 1447];
        steps.extend(vec![v(true, false); 1842 - 1447]);
        assert!((step_accuracy(&steps).unwrap() - 78.55).abs() <= 0.01);
    }

    #[test]
    fn task_success_examples() {
        let good = vec![v(true, true); 3];
        let bad = vec![v(true, true), v(true, false), v(true, true)];
        assert_eq!(task_success(&[good.clone(), bad]).unwrap(), 50.0);
        assert_eq!(task_success(&[good.clone(), good]).unwrap(), 100.0);
        assert!(task_success(&[]).is_err());
    }

    #[test]
    fn tail_success_excludes_missing() {
        let t = tail_success(&[Some(true), None, Some(false), Some(true)]).unwrap();
        assert_eq!((t.evaluated, t.excluded.clone()), (3, vec![1]));
        assert!((t.percent - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(tail_success(&[Some(false); 3]).unwrap().percent, 0.0);
        assert!(tail_success(&[None]).is_err());
    }

    #[test]
    fn avg_err_ignores_format_only_failures() {
        assert_eq!(avg_err(&[v(false, true), v(true, false), v(false, false)]), 2);
        assert_eq!(avg_err(&[v(true, true); 5]), 0);
        let mut steps = vec![v(true, true); 1000];
        steps.extend(vec![v(true, false); 241]);
        assert_eq!(avg_err(&steps), 241);
    }

    #[test]
    fn tm_em_examples() {
        let gt = GroundTruthStep::click(BBox::new(100, 100, 200, 200).unwrap());
        let m = type_exact_match(&Action::Click { at: Point::new(300, 300) }, &gt, MatchConfig::default());
        assert_eq!(m, TypeExactMatch { tm: true, em: false });
        let m =
            type_exact_match(&Action::Type { text: "a".into() }, &GroundTruthStep::typed("a"), MatchConfig::default());
        assert_eq!(m, TypeExactMatch { tm: true, em: true });
    }

    #[test]
    fn pass_at_k_small_cases() {
        assert_eq!(pass_at_k(4, 0, 2).unwrap(), 0.0);
        assert_eq!(pass_at_k(4, 4, 1).unwrap(), 1.0);
        assert!((pass_at_k(4, 1, 1).unwrap() - 0.25).abs() < 1e-15);
        assert!((pass_at_k(4, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(pass_at_k(4, 3, 2).unwrap(), 1.0);
        assert!(pass_at_k(3, 1, 4).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
    }
}
