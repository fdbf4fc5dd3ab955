//! End-to-end runs of the `guirl` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use guirl::commands::{ExpectedDefect, LintReport};
use guirl::store::{read_trajectories, rewrite_trajectory, write_jsonl};
use guirl_core::metrics::BenchmarkReport;
use guirl_core::protocol::{parse_turn, render_turn, Action, ScreenSize, TerminateStatus};
use guirl_core::reward::{BBox, GroundTruthStep};
use guirl_core::synthetic::{REFERENCE_APP_TABLE, REFERENCE_INSTRUCTIONS};
use guirl_core::trajectory::{Step, TerminalStatus, Trajectory, TransitionResult};
use serde_json::Value;

fn run(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guirl")).args(args).arg("--out-dir").arg(out_dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    let text = stdout(o);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .unwrap_or_else(|| panic!("no run directory in output:\n{text}\n{}", String::from_utf8_lossy(&o.stderr)));
    PathBuf::from(line)
}

fn ok(args: &[&str], out_dir: &Path) -> PathBuf {
    let o = run(args, out_dir);
    assert!(o.status.success(), "{args:?}\n{}\n{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    run_dir(&o)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn oracle_stage3_completes_every_task() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = ok(&["rollout", "--stage", "3", "--policy", "mock:oracle"], tmp.path());
    let groups = jsonl(&dir.join("groups.jsonl"));
    assert_eq!(groups.len(), 100);
    for g in &groups {
        let members = g["members"].as_array().unwrap();
        assert_eq!(members.len(), 4);
        assert_eq!(g["replay"]["member_seeds"].as_array().unwrap().len(), 4);
        assert!(members.iter().all(|m| m["reward"] == 2.0 && m["final_success"] == true));
    }
    let trajs = read_trajectories(&dir.join("trajectories")).unwrap();
    assert_eq!(trajs.len(), 400);
    assert!(trajs.iter().all(|t| t.terminal_status == TerminalStatus::Completed));
    let summary = json(&dir.join("summary.json"));
    assert_eq!(summary["task_success"], 100.0);
    assert_eq!(summary["avg_err"], 0);
    let manifest = json(&dir.join("run.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["exit_code"], 0);

    let eval = ok(&["eval", dir.to_str().unwrap(), "--passk", "1,4", "--min-task-success", "99"], tmp.path());
    let report: BenchmarkReport = serde_json::from_value(json(&eval.join("report.json"))).unwrap();
    assert_eq!(report.overall.trajectories, 400);
    assert_eq!(report.overall.accuracy, 100.0);
    assert!(report.pass_at_k.iter().all(|p| p.value == 1.0));
}

#[test]
fn seeded_stage2_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["rollout", "--stage", "2", "--policy", "mock:random", "--seed", "11", "--tasks", "cliptv,tripnest-01"];
    let a = ok(&args, tmp.path());
    let b = ok(&args, tmp.path());
    assert_ne!(a, b);
    let (ga, gb) = (fs::read(a.join("groups.jsonl")).unwrap(), fs::read(b.join("groups.jsonl")).unwrap());
    assert_eq!(ga, gb);
    let groups = jsonl(&a.join("groups.jsonl"));
    assert!(groups.iter().all(|g| g["members"].as_array().unwrap().len() == 8));
    let c = ok(
        &["rollout", "--stage", "2", "--policy", "mock:random", "--seed", "12", "--tasks", "cliptv,tripnest-01"],
        tmp.path(),
    );
    assert_ne!(ga, fs::read(c.join("groups.jsonl")).unwrap());
}

#[test]
fn mixture_pass_at_k_grows_with_k() {
    let tmp = tempfile::tempdir().unwrap();
    let dir =
        ok(&["rollout", "--stage", "3", "--policy", "mock:mixture:0.4", "--tasks", "mallgo,bargainhub"], tmp.path());
    let eval = ok(&["eval", dir.to_str().unwrap(), "--passk", "1,2,3,4"], tmp.path());
    let report: BenchmarkReport = serde_json::from_value(json(&eval.join("report.json"))).unwrap();
    let v: Vec<f64> = report.pass_at_k.iter().map(|p| p.value).collect();
    assert_eq!(v.len(), 4);
    assert!(v.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{v:?}");
    assert!(v[3] > v[0], "{v:?}");
    let too_many = run(&["eval", dir.to_str().unwrap(), "--passk", "5"], tmp.path());
    assert_eq!(too_many.status.code(), Some(1));
}

fn traj(
    id: &str,
    task: &str,
    app: &str,
    steps: Vec<(String, GroundTruthStep)>,
    final_success: Option<bool>,
) -> Trajectory {
    let screen = Some(ScreenSize::new(1080, 2400));
    Trajectory {
        trajectory_id: id.into(),
        task_id: task.into(),
        app: app.into(),
        instruction: format!("{task} instruction"),
        steps: steps
            .into_iter()
            .enumerate()
            .map(|(i, (raw, gt))| Step {
                screenshot_ref: format!("{i:03}.png"),
                turn: parse_turn(&raw, screen),
                result: TransitionResult::Moved,
                ground_truth: Some(gt),
            })
            .collect(),
        terminal_status: TerminalStatus::TerminatedByAgent,
        final_success,
        reward: None,
    }
}

fn well(action: Action) -> String {
    render_turn("The page is open and the button is visible, so I press it", "press", &action)
}

/// Three trajectories whose metrics are worked out by hand below.
fn hand_graded() -> Vec<Trajectory> {
    let target = GroundTruthStep::click(BBox::new(100, 100, 300, 300).unwrap());
    let hit = Action::click(200, 200);
    let miss = Action::click(900, 900);
    let no_action_block = format!(
        "<think>The page is open, so I press it</think><tool_call>{}</tool_call>",
        well(hit.clone()).split("<tool_call>").nth(1).unwrap().trim_end_matches("</tool_call>")
    );
    vec![
        traj(
            "a1",
            "A-1",
            "Alpha",
            vec![
                (well(hit.clone()), target.clone()),
                (well(Action::Type { text: "hi".into() }), GroundTruthStep::typed("hi")),
                (
                    well(Action::Terminate { status: TerminateStatus::Success }),
                    GroundTruthStep::terminate(TerminateStatus::Success),
                ),
            ],
            Some(true),
        ),
        traj(
            "a2",
            "A-1",
            "Alpha",
            vec![(well(hit.clone()), target.clone()), (well(miss), target.clone())],
            Some(false),
        ),
        traj("b1", "B-1", "Beta", vec![(no_action_block, target.clone()), (well(hit), target)], None),
    ]
}

#[test]
fn eval_matches_hand_computed_report() {
    let tmp = tempfile::tempdir().unwrap();
    let trajs = hand_graded();
    let b1 = &trajs[2].steps[0].turn;
    assert!(!b1.format_ok() && b1.tool_call.is_some(), "{b1:?}");
    let file = tmp.path().join("graded.jsonl");
    write_jsonl(&file, &trajs).unwrap();

    let dir = ok(&["eval", file.to_str().unwrap(), "--passk", "1"], tmp.path());
    let r: BenchmarkReport = serde_json::from_value(json(&dir.join("report.json"))).unwrap();
    // 7 graded steps, 5 both well-formed and correct.
    assert_eq!(r.overall.steps, 7);
    assert!((r.overall.accuracy - 500.0 / 7.0).abs() < 1e-9);
    // Only a1 is correct throughout.
    assert!((r.overall.task_success - 100.0 / 3.0).abs() < 1e-9);
    // b1 has no final evidence: 1 of 2.
    assert_eq!(r.overall.tail_success, Some(50.0));
    assert_eq!(r.tail_excluded, ["b1"]);
    // The missed click counts; b1's format-only failure does not.
    assert_eq!(r.overall.avg_err, 1);
    assert_eq!(r.type_match.tm, 100.0);
    assert!((r.type_match.em - 600.0 / 7.0).abs() < 1e-9);
    let alpha = &r.per_app["Alpha"];
    assert_eq!((alpha.trajectories, alpha.steps, alpha.accuracy, alpha.task_success), (2, 5, 80.0, 50.0));
    let beta = &r.per_app["Beta"];
    assert_eq!((beta.accuracy, beta.task_success, beta.tail_success, beta.avg_err), (50.0, 0.0, None, 0));
    // Task A-1: one of two attempts succeeds; B-1: none.
    assert_eq!(r.pass_at_k[0].value, 0.25);
    let text = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(text.contains("71.43") && text.contains("33.33"), "{text}");

    let strict = run(&["eval", file.to_str().unwrap(), "--passk", "1", "--min-accuracy", "90"], tmp.path());
    assert_eq!(strict.status.code(), Some(2));
    assert!(stdout(&strict).contains("threshold violated: accuracy"));
    assert_eq!(json(&run_dir(&strict).join("run.json"))["status"], "validation_failed");
    let k2 = run(&["eval", file.to_str().unwrap(), "--passk", "2"], tmp.path());
    assert_eq!(k2.status.code(), Some(1));
}

#[test]
fn eval_rejects_missing_and_empty_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["eval", empty.to_str().unwrap()], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["eval", "/nonexistent/path"], tmp.path()).status.code(), Some(1));
    let blank = tmp.path().join("blank.jsonl");
    fs::write(&blank, "").unwrap();
    assert_eq!(run(&["eval", blank.to_str().unwrap()], tmp.path()).status.code(), Some(1));
    let bad = tmp.path().join("bad.jsonl");
    fs::write(&bad, "{\"not\": \"a trajectory\"}\n").unwrap();
    assert_eq!(run(&["eval", bad.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn fixtures_validate_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = ok(&["fixtures", "--defects", "35"], tmp.path());
    assert_eq!(fs::read_dir(fx.join("apps")).unwrap().count(), 5);

    let clean = run(&["validate-dataset", fx.join("dataset.jsonl").to_str().unwrap()], tmp.path());
    assert_eq!(clean.status.code(), Some(0), "{}", stdout(&clean));

    let dirty = run(&["validate-dataset", fx.join("defects.jsonl").to_str().unwrap()], tmp.path());
    assert_eq!(dirty.status.code(), Some(2));
    let report: LintReport = serde_json::from_value(json(&run_dir(&dirty).join("lint.json"))).unwrap();
    let expected: Vec<ExpectedDefect> = fs::read_to_string(fx.join("defects_expected.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(report.flagged, expected.len());
    for (got, want) in report.violations.iter().zip(&expected) {
        assert_eq!((&got.trajectory_id, got.violations.as_slice()), (&want.trajectory_id, [want.violation].as_slice()));
    }

    let stats = ok(&["stats", fx.join("dataset.jsonl").to_str().unwrap()], tmp.path());
    let s = json(&stats.join("stats.json"));
    assert_eq!(s["apps"], REFERENCE_APP_TABLE.len());
    assert_eq!(s["instructions"], REFERENCE_INSTRUCTIONS);
    assert_eq!(s["trajectories"], REFERENCE_APP_TABLE.iter().map(|r| r.2).sum::<usize>());
    assert_eq!(s["steps"], REFERENCE_APP_TABLE.iter().map(|r| r.1).sum::<usize>());

    let sft = ok(&["export", "sft", fx.join("dataset.jsonl").to_str().unwrap(), "--window", "2"], tmp.path());
    let first = fs::read_to_string(sft.join("sft.jsonl")).unwrap();
    let pair: Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert!(pair["target"].as_str().unwrap().contains("<tool_call>"));

    let broken = tmp.path().join("broken.jsonl");
    fs::write(&broken, "{\"trajectory_id\": 3}\n").unwrap();
    assert_eq!(run(&["validate-dataset", broken.to_str().unwrap()], tmp.path()).status.code(), Some(2));
}

#[test]
fn train_sim_improves_reward() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = ok(&["train-sim", "--seed", "3"], tmp.path());
    let s = json(&dir.join("summary.json"));
    assert!(s["gain"].as_f64().unwrap() > 0.2, "{s}");
    assert_eq!(jsonl(&dir.join("curve.jsonl")).len(), 200);
    assert!(fs::read_to_string(dir.join("curve.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn stored_trajectories_rewrite_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = ok(&["rollout", "--stage", "3", "--policy", "mock:random", "--tasks", "marketplus-0"], tmp.path());
    let src = dir.join("trajectories");
    let dst = tmp.path().join("copy");
    for entry in fs::read_dir(&src).unwrap() {
        let path = entry.unwrap().path();
        let out = rewrite_trajectory(&path, &dst).unwrap();
        for file in fs::read_dir(&path).unwrap() {
            let name = file.unwrap().file_name();
            assert_eq!(fs::read(path.join(&name)).unwrap(), fs::read(out.join(&name)).unwrap(), "{name:?}");
        }
    }
    let exported = ok(&["export", "trajectories", dir.to_str().unwrap()], tmp.path());
    let from_jsonl = ok(&["eval", exported.join("trajectories.jsonl").to_str().unwrap(), "--passk", "1"], tmp.path());
    let from_dir = ok(&["eval", dir.to_str().unwrap(), "--passk", "1"], tmp.path());
    assert_eq!(fs::read(from_jsonl.join("report.json")).unwrap(), fs::read(from_dir.join("report.json")).unwrap());
}

#[test]
fn usage_errors_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["rollout", "--stage", "4"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["rollout", "--stage", "2", "--policy", "mock:nope"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["rollout", "--stage", "2", "--tasks", "zzz"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["config", "--set", "stage3.nonsense=1"], tmp.path()).status.code(), Some(1));
    assert_eq!(run(&["config", "--set", "stage3.group_size=0"], tmp.path()).status.code(), Some(1));
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let unreachable = run(&["rollout", "--stage", "3", "--policy", &format!("bridge:{port}")], tmp.path());
    assert_eq!(unreachable.status.code(), Some(3));

    let o = run(&["config", "--set", "stage3.window=5"], tmp.path());
    assert!(o.status.success());
    let cfg: toml::Table = stdout(&o).parse().unwrap();
    assert_eq!(cfg["stage3"]["window"].as_integer(), Some(5));
    assert_eq!(cfg["stage3"]["group_size"].as_integer(), Some(4));
    assert_eq!(cfg["stage2"]["group_size"].as_integer(), Some(8));

    let help = Command::new(env!("CARGO_BIN_EXE_guirl")).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}
