//! Command implementations behind the `guirl` binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use guirl_core::dataset::{dataset_stats, lint_record, DatasetRecord, LintViolation};
use guirl_core::metrics::{benchmark_report, pass_at_k_curve, render_table, BenchmarkReport};
use guirl_core::policies::{slot_seed, MockFactory, MockKind, PolicyFactory};
use guirl_core::prompt::Sampling;
use guirl_core::reward::MatchConfig;
use guirl_core::rollout::{ActionGroup, Judge, PredicateJudge, StageConfig, TaskGroup};
use guirl_core::synthetic::{inject_defect, reference_shaped_dataset, ALL_VIOLATIONS};
use guirl_core::toy::{train_bandit, GuiBandit};
use guirl_core::trajectory::{Trajectory, DEFAULT_WINDOW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{HarnessConfig, JudgeKind};
use crate::judge::{HttpJudge, LimitedJudge};
use crate::plot::{line_chart, Series};
use crate::rundir::{RunDir, RunStatus};
use crate::runner::{parallel_map, run_stage2, run_stage3, select_tasks};
use crate::scripts::{builtin_suite, load_suite, write_suite, AppFile};
use crate::store::{self, read_jsonl, to_canonical_json, write_jsonl};
use crate::wire::{probe, WireFactory};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Validation(_) => 2,
            Self::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

/// Options shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Vec<PathBuf>,
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Recorded verbatim in the run manifest.
    pub argv: Vec<String>,
}

impl Common {
    pub fn load(&self) -> Result<HarnessConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("run.seed={seed}"));
        }
        if let Some(dir) = &self.out_dir {
            overrides.push(format!("run.out_dir={}", toml::Value::String(dir.display().to_string())));
        }
        HarnessConfig::load(&self.config, &overrides).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn run_dir(&self, cfg: &HarnessConfig, command: &str) -> Result<RunDir, CliError> {
        RunDir::create(&cfg.run.out_dir, command, self.argv.clone(), cfg.run.seed, &cfg.to_toml()).map_err(runtime)
    }
}

/// Result of a command that produced a run directory.
#[derive(Debug)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub status: RunStatus,
    pub message: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::ValidationFailed => 2,
            RunStatus::Failed => 3,
            _ => 0,
        }
    }
}

fn finish(run: RunDir, status: RunStatus, message: String) -> Result<Outcome, CliError> {
    let code = match status {
        RunStatus::ValidationFailed => 2,
        RunStatus::Failed => 3,
        _ => 0,
    };
    let run_dir = run.finish(status, code).map_err(runtime)?;
    Ok(Outcome { run_dir, status, message })
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

// ---------------------------------------------------------------------------
// rollout
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum PolicySpec {
    Mock(MockKind),
    Bridge(String),
}

impl PolicySpec {
    /// `mock:oracle`, `mock:random[:T]`, `mock:mixture[:P]`, `mock:malformed`
    /// or `bridge:<host:port>`. A random policy without `T` samples at
    /// `temperature`.
    pub fn parse(spec: &str, temperature: f64) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("unknown policy `{spec}`"));
        if let Some(endpoint) = spec.strip_prefix("bridge:") {
            if endpoint.is_empty() {
                return Err(bad());
            }
            return Ok(Self::Bridge(endpoint.into()));
        }
        let rest = spec.strip_prefix("mock:").ok_or_else(bad)?;
        let (name, arg) = match rest.split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<f64>().map_err(|_| bad())?)),
            None => (rest, None),
        };
        let kind = match (MockKind::parse(name).ok_or_else(bad)?, arg) {
            (MockKind::Random { malformed_rate, .. }, t) => {
                MockKind::Random { temperature: t.unwrap_or(temperature), malformed_rate }
            }
            (MockKind::Mixture { .. }, Some(p)) if (0.0..=1.0).contains(&p) => MockKind::Mixture { p_oracle: p },
            (MockKind::Mixture { .. }, Some(_)) => return Err(bad()),
            (k, None) => k,
            (_, Some(_)) => return Err(bad()),
        };
        Ok(Self::Mock(kind))
    }
}

#[derive(Serialize)]
struct Replay<'a> {
    policy: &'a str,
    seed: u64,
    member_seeds: Vec<u64>,
}

#[derive(Serialize)]
struct Stage2Line<'a> {
    group: usize,
    app: &'a str,
    replay: Replay<'a>,
    #[serde(flatten)]
    record: &'a ActionGroup,
}

#[derive(Serialize)]
struct MemberSummary<'a> {
    trajectory_id: &'a str,
    reward: f64,
    level: u8,
    rationale: &'a str,
    judge_calls: usize,
    source: guirl_core::rollout::VerdictSource,
    terminal_status: &'static str,
    final_success: Option<bool>,
    steps: usize,
}

#[derive(Serialize)]
struct Stage3Line<'a> {
    group: usize,
    task_id: &'a str,
    app: &'a str,
    replay: Replay<'a>,
    stats: &'a guirl_core::grpo::GroupStats,
    members: Vec<MemberSummary<'a>>,
}

fn load_apps(cfg: &HarnessConfig) -> Result<Vec<AppFile>, CliError> {
    match cfg.apps_dir() {
        None => Ok(builtin_suite()),
        Some(dir) if !dir.is_dir() => Err(CliError::Usage(format!("apps directory {} does not exist", dir.display()))),
        Some(dir) => load_suite(dir).map_err(|e| CliError::Validation(e.to_string())),
    }
}

fn replay<'a>(policy: &'a str, seed: u64, group: usize, members: usize) -> Replay<'a> {
    Replay { policy, seed, member_seeds: (0..members).map(|m| slot_seed(seed, group, m)).collect() }
}

pub fn rollout(common: &Common, stage: u8, tasks: &[String], policy: &str) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let stage_cfg: StageConfig = match stage {
        2 => cfg.stage2,
        3 => cfg.stage3,
        s => return Err(CliError::Usage(format!("--stage must be 2 or 3, got {s}"))),
    };
    if stage_cfg.window == DEFAULT_WINDOW {
        log::warn!("visual window W = {DEFAULT_WINDOW} is a harness default, not a measured setting");
    }
    let spec = PolicySpec::parse(policy, stage_cfg.temperature)?;
    let apps = load_apps(&cfg)?;
    let selected = select_tasks(&apps, tasks);
    if selected.is_empty() {
        return Err(CliError::Usage(format!("no tasks match {tasks:?}")));
    }
    let seed = cfg.run.seed;
    let factory: Box<dyn PolicyFactory> = match &spec {
        PolicySpec::Mock(kind) => Box::new(MockFactory { kind: *kind, seed }),
        PolicySpec::Bridge(endpoint) => {
            let timeout = Duration::from_secs(cfg.policy.timeout_secs.max(1));
            probe(endpoint, timeout).map_err(|e| runtime(anyhow::anyhow!("bridge unreachable: {e}")))?;
            let sampling = Sampling { temperature: stage_cfg.temperature, max_tokens: cfg.policy.max_tokens };
            Box::new(WireFactory { endpoint: endpoint.clone(), timeout, sampling, downsample: cfg.policy.downsample })
        }
    };
    let mut run = common.run_dir(&cfg, &format!("rollout-stage{stage}"))?;
    let g = stage_cfg.group_size;

    let message = if stage == 2 {
        let groups = run_stage2(&selected, &stage_cfg, factory.as_ref()).map_err(runtime)?;
        let queries: Vec<&str> = selected
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.app.script.app.as_str(), s.task.guide.len().max(1)))
            .collect();
        let mut text = String::new();
        for (i, group) in groups.iter().enumerate() {
            let app = group
                .query_id
                .split('/')
                .next()
                .and_then(|tid| selected.iter().find(|s| s.task.task_id == tid).map(|s| s.app.script.app.as_str()));
            let line = Stage2Line {
                group: i,
                app: app.or(queries.get(i).copied()).unwrap_or_default(),
                replay: replay(policy, seed, i, g),
                record: group,
            };
            text.push_str(&json_line(&line));
            text.push('\n');
        }
        run.write("groups.jsonl", text).map_err(runtime)?;
        let rewards: Vec<f64> = groups.iter().flat_map(|gr| gr.stats.rewards.iter().copied()).collect();
        let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        let flat = groups.iter().filter(|gr| gr.stats.std <= stage_cfg.std_floor).count();
        let summary = serde_json::json!({
            "stage": 2, "groups": groups.len(), "group_size": g, "mean_reward": mean, "zero_variance_groups": flat,
        });
        run.write("summary.json", to_canonical_json(&summary)).map_err(runtime)?;
        format!("stage 2: {} groups of {g}, mean reward {mean:.4}, {flat} zero-variance groups", groups.len())
    } else {
        let judge: Box<dyn Judge> = match cfg.judge.kind {
            JudgeKind::Predicate => Box::new(PredicateJudge::default()),
            JudgeKind::Http => Box::new(LimitedJudge::new(HttpJudge::new(cfg.judge.http()), cfg.judge.max_concurrency)),
        };
        let groups: Vec<TaskGroup> =
            run_stage3(&selected, &stage_cfg, factory.as_ref(), judge.as_ref()).map_err(runtime)?;
        let traj_root = run.file("trajectories");
        let jobs: Vec<_> = groups
            .iter()
            .zip(&selected)
            .flat_map(|(g, sel)| g.members.iter().map(move |m| (&m.rollout, &sel.app.script)))
            .collect();
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        parallel_map(jobs.len(), workers, |i| store::write_rollout(&traj_root, jobs[i].0, jobs[i].1))
            .map_err(runtime)?;
        let mut text = String::new();
        let mut trajectories: Vec<Trajectory> = Vec::new();
        for (i, (group, sel)) in groups.iter().zip(&selected).enumerate() {
            let mut members = Vec::with_capacity(group.members.len());
            for m in &group.members {
                let t = &m.rollout.trajectory;
                members.push(MemberSummary {
                    trajectory_id: &t.trajectory_id,
                    reward: m.reward(),
                    level: m.verdict.level,
                    rationale: &m.verdict.rationale,
                    judge_calls: m.judge_calls,
                    source: m.source,
                    terminal_status: t.terminal_status.as_str(),
                    final_success: t.final_success,
                    steps: t.len(),
                });
                trajectories.push(t.clone());
            }
            let line = Stage3Line {
                group: i,
                task_id: &group.task_id,
                app: &sel.app.script.app,
                replay: replay(policy, seed, i, g),
                stats: &group.stats,
                members,
            };
            text.push_str(&json_line(&line));
            text.push('\n');
        }
        run.record("trajectories");
        run.write("groups.jsonl", text).map_err(runtime)?;
        let report = benchmark_report(&trajectories, stage_cfg.matching).map_err(runtime)?;
        run.write("report.json", to_canonical_json(&report)).map_err(runtime)?;
        let rewards: Vec<f64> = groups.iter().flat_map(|gr| gr.stats.rewards.iter().copied()).collect();
        let mean = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;
        let summary = serde_json::json!({
            "stage": 3, "groups": groups.len(), "group_size": g, "trajectories": trajectories.len(),
            "mean_reward": mean, "task_success": report.overall.task_success,
            "tail_success": report.overall.tail_success, "avg_err": report.overall.avg_err,
        });
        run.write("summary.json", to_canonical_json(&summary)).map_err(runtime)?;
        format!(
            "stage 3: {} groups of {g}, {} trajectories, mean reward {mean:.4}, task success {:.2}%, avg err {}",
            groups.len(),
            trajectories.len(),
            report.overall.task_success,
            report.overall.avg_err
        )
    };
    finish(run, RunStatus::Ok, message)
}

// ---------------------------------------------------------------------------
// train-sim
// ---------------------------------------------------------------------------

pub fn train_sim(common: &Common) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let bandit_cfg = cfg.train.bandit(cfg.run.seed);
    let (policy, curve) = train_bandit(&GuiBandit::default(), &bandit_cfg)
        .map_err(|e| runtime(anyhow::anyhow!("training aborted: {e}")))?;
    if let Some(p) = curve.points.iter().find(|p| !p.objective.is_finite() || !p.mean_reward.is_finite()) {
        return Err(runtime(anyhow::anyhow!("training diverged at update {}: objective {}", p.step, p.objective)));
    }
    let mut run = common.run_dir(&cfg, "train-sim")?;
    let mut text = String::new();
    for p in &curve.points {
        text.push_str(&json_line(p));
        text.push('\n');
    }
    run.write("curve.jsonl", text).map_err(runtime)?;
    let w = cfg.train.smoothing;
    let raw: Vec<f64> = curve.points.iter().map(|p| p.mean_reward).collect();
    let smooth = curve.smoothed(w);
    let svg = line_chart(
        "Toy GRPO: mean reward per update",
        "mean reward",
        &[
            Series { label: "mean reward", color: "#9db4d6", values: &raw },
            Series { label: "smoothed", color: "#1f4e9a", values: &smooth },
        ],
    );
    run.write("curve.svg", svg).map_err(runtime)?;
    let (initial, last) = curve.initial_and_final(w);
    let summary = serde_json::json!({
        "updates": curve.points.len(), "smoothing": w, "initial": initial, "final": last,
        "gain": last - initial, "target_prob": policy.probs(0)[0],
    });
    run.write("summary.json", to_canonical_json(&summary)).map_err(runtime)?;
    let msg = format!(
        "train-sim: {} updates, smoothed reward {initial:.4} -> {last:.4} (gain {:.4}), target arm p={:.4}",
        curve.points.len(),
        last - initial,
        policy.probs(0)[0]
    );
    finish(run, RunStatus::Ok, msg)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct Thresholds {
    pub min_accuracy: Option<f64>,
    pub min_task_success: Option<f64>,
    pub min_tail_success: Option<f64>,
    pub max_avg_err: Option<usize>,
}

impl Thresholds {
    fn or(self, cfg: &crate::config::EvalSection) -> Self {
        Self {
            min_accuracy: self.min_accuracy.or(cfg.min_accuracy),
            min_task_success: self.min_task_success.or(cfg.min_task_success),
            min_tail_success: self.min_tail_success.or(cfg.min_tail_success),
            max_avg_err: self.max_avg_err.or(cfg.max_avg_err),
        }
    }

    /// Human-readable violations; empty when all hold.
    pub fn violations(&self, report: &BenchmarkReport) -> Vec<String> {
        let o = &report.overall;
        let mut out = Vec::new();
        let mut floor = |name: &str, value: Option<f64>, min: Option<f64>| {
            if let Some(min) = min {
                match value {
                    Some(v) if v >= min => {}
                    Some(v) => out.push(format!("{name} {v:.2} < {min:.2}")),
                    None => out.push(format!("{name} unavailable, minimum {min:.2}")),
                }
            }
        };
        floor("accuracy", Some(o.accuracy), self.min_accuracy);
        floor("task_success", Some(o.task_success), self.min_task_success);
        floor("tail_success", o.tail_success, self.min_tail_success);
        if let Some(max) = self.max_avg_err {
            if o.avg_err > max {
                out.push(format!("avg_err {} > {max}", o.avg_err));
            }
        }
        out
    }
}

/// Loads trajectories from a `.jsonl` file, a run directory with a
/// `trajectories/` folder, or a folder of trajectory directories.
pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    let trajs = if path.is_file() {
        read_jsonl::<Trajectory>(path).map_err(|e| CliError::Validation(e.to_string()))?
    } else {
        let root = if path.join("trajectories").is_dir() { path.join("trajectories") } else { path.to_path_buf() };
        store::read_trajectories(&root).map_err(|e| CliError::Validation(e.to_string()))?
    };
    if trajs.is_empty() {
        return Err(CliError::Usage(format!("no trajectories found in {}", path.display())));
    }
    for t in &trajs {
        t.validate().map_err(CliError::Validation)?;
    }
    Ok(trajs)
}

pub fn eval(common: &Common, path: &Path, passk: &[usize], thresholds: Thresholds) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let trajs = load_trajectories(path)?;
    let matching = MatchConfig { case_insensitive: cfg.eval.case_insensitive };
    let mut report = benchmark_report(&trajs, matching).map_err(|e| CliError::Validation(e.to_string()))?;
    let ks: Vec<usize> = if passk.is_empty() { cfg.eval.passk.clone() } else { passk.to_vec() };
    if !passk.is_empty() || ks.iter().all(|&k| k <= min_attempts(&trajs)) {
        if ks.contains(&0) {
            return Err(CliError::Usage("--passk values must be >= 1".into()));
        }
        report.pass_at_k = pass_at_k_curve(&trajs, &ks, matching)
            .map_err(|e| CliError::Usage(format!("pass@k needs at least k attempts per task: {e}")))?;
    }
    let mut run = common.run_dir(&cfg, "eval")?;
    run.write("report.json", to_canonical_json(&report)).map_err(runtime)?;
    let table = render_table(&report);
    run.write("report.txt", &table).map_err(runtime)?;
    let mut msg = table;
    for id in &report.tail_excluded {
        let _ = writeln!(msg, "no final_success recorded: {id}");
    }
    let violations = thresholds.or(&cfg.eval).violations(&report);
    for v in &violations {
        let _ = writeln!(msg, "threshold violated: {v}");
    }
    let status = if violations.is_empty() { RunStatus::Ok } else { RunStatus::ValidationFailed };
    finish(run, status, msg.trim_end().to_string())
}

fn min_attempts(trajs: &[Trajectory]) -> usize {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in trajs {
        *counts.entry(&t.task_id).or_default() += 1;
    }
    counts.values().copied().min().unwrap_or(0)
}

// ---------------------------------------------------------------------------
// dataset tools
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RecordViolations {
    pub trajectory_id: String,
    pub step_index: usize,
    pub violations: Vec<LintViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct LintReport {
    pub records: usize,
    pub flagged: usize,
    pub counts: BTreeMap<LintViolation, usize>,
    pub violations: Vec<RecordViolations>,
}

pub fn lint_dataset(records: &[DatasetRecord]) -> LintReport {
    let mut counts = BTreeMap::new();
    let mut violations = Vec::new();
    for r in records {
        let v = lint_record(r);
        for k in &v {
            *counts.entry(*k).or_insert(0) += 1;
        }
        if !v.is_empty() {
            violations.push(RecordViolations {
                trajectory_id: r.trajectory_id.clone(),
                step_index: r.step_index,
                violations: v,
            });
        }
    }
    LintReport { records: records.len(), flagged: violations.len(), counts, violations }
}

fn read_records(path: &Path) -> Result<Vec<DatasetRecord>, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{} is not a dataset file", path.display())));
    }
    store::read_dataset(path).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn validate_dataset(common: &Common, path: &Path) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let records = read_records(path)?;
    let report = lint_dataset(&records);
    let mut run = common.run_dir(&cfg, "validate-dataset")?;
    run.write("lint.json", to_canonical_json(&report)).map_err(runtime)?;
    let mut msg = String::new();
    for r in &report.violations {
        let kinds: Vec<&str> = r.violations.iter().map(|v| v.as_str()).collect();
        let _ = writeln!(msg, "{}/{}: {}", r.trajectory_id, r.step_index, kinds.join(", "));
    }
    let _ = write!(msg, "{} records, {} flagged", report.records, report.flagged);
    let status = if report.flagged == 0 { RunStatus::Ok } else { RunStatus::ValidationFailed };
    finish(run, status, msg)
}

pub fn stats(common: &Common, path: &Path) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let records = read_records(path)?;
    let stats = dataset_stats(&records);
    let mut run = common.run_dir(&cfg, "stats")?;
    run.write("stats.json", to_canonical_json(&stats)).map_err(runtime)?;
    let mut msg = format!(
        "apps {}\ninstructions {}\ntrajectories {}\nsteps {}\nlength histogram:",
        stats.apps, stats.instructions, stats.trajectories, stats.steps
    );
    for (len, n) in &stats.length_histogram {
        let _ = write!(msg, "\n  {len:>3} {n}");
    }
    for issue in &stats.issues {
        let _ = write!(msg, "\nissue: {}", json_line(issue));
    }
    finish(run, RunStatus::Ok, msg)
}

// ---------------------------------------------------------------------------
// export / fixtures
// ---------------------------------------------------------------------------

pub fn export_trajectories(common: &Common, path: &Path) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let trajs = load_trajectories(path)?;
    let mut run = common.run_dir(&cfg, "export")?;
    let out = run.file("trajectories.jsonl");
    write_jsonl(&out, &trajs).map_err(runtime)?;
    run.record("trajectories.jsonl");
    finish(run, RunStatus::Ok, format!("exported {} trajectories", trajs.len()))
}

pub fn export_sft(common: &Common, path: &Path, window: Option<usize>) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let records = read_records(path)?;
    let pairs = store::sft_pairs(&records, window.unwrap_or(cfg.stage3.window));
    let mut run = common.run_dir(&cfg, "export")?;
    write_jsonl(&run.file("sft.jsonl"), &pairs).map_err(runtime)?;
    run.record("sft.jsonl");
    let schedule = serde_json::json!({ "stage1": cfg.schedule.stage1 });
    run.write("schedule.json", to_canonical_json(&schedule)).map_err(runtime)?;
    finish(run, RunStatus::Ok, format!("exported {} prompt/target pairs", pairs.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ExpectedDefect {
    pub trajectory_id: String,
    pub step_index: usize,
    pub violation: LintViolation,
}

/// Writes the app suite, the reference-shaped dataset and `defects` seeded
/// single-defect records with their expected lint findings.
pub fn fixtures(common: &Common, defects: usize) -> Result<Outcome, CliError> {
    let cfg = common.load()?;
    let mut run = common.run_dir(&cfg, "fixtures")?;
    let apps = builtin_suite();
    write_suite(&run.file("apps"), &apps).map_err(runtime)?;
    run.record("apps");
    let data = reference_shaped_dataset(cfg.run.seed);
    write_jsonl(&run.file("dataset.jsonl"), &data).map_err(runtime)?;
    run.record("dataset.jsonl");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed ^ 0x5eed);
    let mut seeded = Vec::with_capacity(defects);
    let mut expected = Vec::with_capacity(defects);
    for i in 0..defects {
        let base = &data[rng.gen_range(0..data.len())];
        let violation = ALL_VIOLATIONS[i % ALL_VIOLATIONS.len()];
        let mut rec = inject_defect(base, violation, &mut rng);
        rec.trajectory_id = format!("defect-{i:04}");
        rec.step_index = 0;
        expected.push(ExpectedDefect { trajectory_id: rec.trajectory_id.clone(), step_index: 0, violation });
        seeded.push(rec);
    }
    write_jsonl(&run.file("defects.jsonl"), &seeded).map_err(runtime)?;
    run.record("defects.jsonl");
    write_jsonl(&run.file("defects_expected.jsonl"), &expected).map_err(runtime)?;
    run.record("defects_expected.jsonl");
    let msg = format!(
        "{} apps, {} tasks, {} dataset records, {} seeded defects",
        apps.len(),
        apps.iter().map(|a| a.tasks.len()).sum::<usize>(),
        data.len(),
        defects
    );
    finish(run, RunStatus::Ok, msg)
}
