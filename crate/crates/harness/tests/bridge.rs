//! Policies served over the wire protocol, driven through the simulator.

use std::collections::HashMap;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use guirl::imaging::decode_png;
use guirl::wire::{serve, ErrorKind, RequestFrame, WirePolicy, WIRE_VERSION};
use guirl_core::policies::{MockFactory, MockKind, PolicyFactory};
use guirl_core::prompt::{system_prompt, Sampling};
use guirl_core::sim::fixtures::suite;
use guirl_core::sim::{run_task, RunConfig};
use guirl_core::trajectory::TerminalStatus;

const T: Duration = Duration::from_secs(10);

/// Oracle turns for every fixture task, keyed by instruction.
fn oracle_script() -> HashMap<String, Vec<String>> {
    let oracle = MockFactory { kind: MockKind::Oracle, seed: 0 };
    let mut out = HashMap::new();
    for app in suite() {
        for task in &app.tasks {
            let r = run_task(oracle.policy(0, 0).as_mut(), &app.script, task, &RunConfig::default(), "o");
            assert_eq!(r.trajectory.terminal_status, TerminalStatus::Completed);
            let turns = r.trajectory.steps.iter().map(|s| s.turn.raw.clone()).collect();
            out.entry(task.instruction.clone()).or_insert(turns);
        }
    }
    out
}

type Log = Arc<Mutex<Vec<RequestFrame>>>;

fn replay_backend(log: Log) -> impl Fn(&RequestFrame) -> Result<String, (ErrorKind, String)> + Send + Sync {
    let script = oracle_script();
    move |f: &RequestFrame| {
        log.lock().unwrap().push(f.clone());
        let turns = script.get(&f.request.instruction).ok_or((ErrorKind::BadRequest, "unknown instruction".into()))?;
        turns.get(f.request.history.len()).cloned().ok_or((ErrorKind::BackendError, "past the end".into()))
    }
}

#[test]
fn wire_policy_completes_tasks_and_forwards_the_window() {
    let log: Log = Arc::default();
    let server = serve("127.0.0.1:0", Arc::new(replay_backend(log.clone())), vec![WIRE_VERSION]).unwrap();
    let apps = suite();
    let app = &apps[0];
    let sampling = Sampling { temperature: 1.0, max_tokens: 256 };
    for (i, task) in app.tasks.iter().take(6).enumerate() {
        log.lock().unwrap().clear();
        let mut policy = WirePolicy::new(&server.endpoint(), T, sampling, &format!("t{i}-"));
        let cfg = RunConfig { window: 3, max_steps: None };
        let rollout = run_task(&mut policy, &app.script, task, &cfg, "wire");
        assert_eq!(rollout.trajectory.terminal_status, TerminalStatus::Completed, "{}", task.task_id);
        assert_eq!(rollout.trajectory.final_success, Some(true));

        let frames = log.lock().unwrap().clone();
        assert_eq!(frames.len(), rollout.trajectory.len());
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(f.request_id, format!("t{i}-{t}"));
            assert_eq!(f.request.system, system_prompt(&task.instruction));
            assert_eq!(f.request.sampling, sampling);
            let expected_history: Vec<&str> =
                rollout.trajectory.steps[..t].iter().map(|s| s.turn.raw.as_str()).collect();
            assert_eq!(f.request.history, expected_history);
            assert_eq!(f.request.images.len(), 3.min(t + 1), "step {t}");
            for img in &f.request.images {
                let raster = decode_png(&B64.decode(img).unwrap()).unwrap();
                assert_eq!((raster.width, raster.height), (540, 1200));
            }
        }
    }
}

#[test]
fn window_width_controls_image_count() {
    let log: Log = Arc::default();
    let server = serve("127.0.0.1:0", Arc::new(replay_backend(log.clone())), vec![WIRE_VERSION]).unwrap();
    let apps = suite();
    let app = &apps[1];
    let task = app.tasks.iter().max_by_key(|t| t.guide.len()).unwrap();
    for w in [1, 2, 5] {
        log.lock().unwrap().clear();
        let mut policy = WirePolicy::new(&server.endpoint(), T, Sampling { temperature: 0.0, max_tokens: 64 }, "w-");
        let r = run_task(&mut policy, &app.script, task, &RunConfig { window: w, max_steps: None }, "w");
        assert_eq!(r.trajectory.final_success, Some(true));
        let counts: Vec<usize> = log.lock().unwrap().iter().map(|f| f.request.images.len()).collect();
        let want: Vec<usize> = (0..counts.len()).map(|t| w.min(t + 1)).collect();
        assert_eq!(counts, want, "W = {w}");
    }
}

#[test]
fn backend_failure_ends_the_episode_as_env_error() {
    let backend = |_: &RequestFrame| Err((ErrorKind::Overloaded, String::from("busy")));
    let server = serve("127.0.0.1:0", Arc::new(backend), vec![WIRE_VERSION]).unwrap();
    let apps = suite();
    let mut policy = WirePolicy::new(&server.endpoint(), T, Sampling { temperature: 1.0, max_tokens: 64 }, "e-");
    let r = run_task(&mut policy, &apps[0].script, &apps[0].tasks[0], &RunConfig::default(), "e");
    assert_eq!(r.trajectory.terminal_status, TerminalStatus::EnvError);
}

#[test]
fn cli_rollout_through_a_bridge() {
    let log: Log = Arc::default();
    let server = serve("127.0.0.1:0", Arc::new(replay_backend(log.clone())), vec![WIRE_VERSION]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_guirl"))
        .args(["rollout", "--stage", "3", "--tasks", "mallgo-0", "--policy"])
        .arg(format!("bridge:{}", server.endpoint()))
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("task success 100.00%"), "{stdout}");
    assert!(!log.lock().unwrap().is_empty());
}
