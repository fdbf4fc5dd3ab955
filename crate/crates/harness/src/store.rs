//! On-disk trajectory and dataset formats.
//!
//! A trajectory directory holds `manifest.json` (task, app, status, step
//! list, reward), `annotations.json` (parsed turns and reference actions per
//! step) and one PNG per observed screen. JSON files are written pretty-printed
//! with a trailing newline, so reading and rewriting a canonical directory
//! reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use guirl_core::dataset::DatasetRecord;
use guirl_core::prompt::system_prompt;
use guirl_core::sim::{AppScript, Rollout};
use guirl_core::trajectory::{Step, TerminalStatus, Trajectory, TransitionResult};
use guirl_core::{AgentTurn, GroundTruthStep, RewardBreakdown};
use serde::{Deserialize, Serialize};

use crate::imaging::{screenshot_png, ImagingError};

pub const STORE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const FINAL_SCREENSHOT: &str = "final.png";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: malformed {what}: {message}")]
    Malformed { path: PathBuf, what: &'static str, message: String },
    #[error("{path}: unsupported format_version {found} (expected {STORE_FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: already exists")]
    Exists { path: PathBuf },
    #[error("{path}: locked by another writer")]
    Locked { path: PathBuf },
    #[error("{path}: screenshot {screenshot} missing")]
    MissingScreenshot { path: PathBuf, screenshot: String },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestStep {
    pub index: usize,
    pub screenshot: String,
    pub result: TransitionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryManifest {
    pub format_version: u32,
    pub trajectory_id: String,
    pub task_id: String,
    pub app: String,
    pub instruction: String,
    pub terminal_status: TerminalStatus,
    pub final_success: Option<bool>,
    pub steps: Vec<ManifestStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_screenshot: Option<String>,
    pub reward: Option<RewardBreakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepAnnotation {
    pub index: usize,
    pub turn: AgentTurn,
    pub ground_truth: Option<GroundTruthStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotations {
    pub format_version: u32,
    pub steps: Vec<StepAnnotation>,
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("store types always serialize");
    s.push('\n');
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &'static str) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Malformed { path: path.into(), what, message: e.to_string() })
}

/// Held while a trajectory directory is being written.
struct WriteLock(PathBuf);

impl WriteLock {
    fn acquire(dir: &Path) -> Result<Self, StoreError> {
        let lock = dir.with_extension("lock");
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Self(lock)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::Locked { path: dir.into() }),
            Err(e) => Err(StoreError::Io { path: lock, source: e }),
        }
    }
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

fn manifest_of(traj: &Trajectory, final_screenshot: Option<String>) -> TrajectoryManifest {
    TrajectoryManifest {
        format_version: STORE_FORMAT_VERSION,
        trajectory_id: traj.trajectory_id.clone(),
        task_id: traj.task_id.clone(),
        app: traj.app.clone(),
        instruction: traj.instruction.clone(),
        terminal_status: traj.terminal_status,
        final_success: traj.final_success,
        steps: traj
            .steps
            .iter()
            .enumerate()
            .map(|(index, s)| ManifestStep { index, screenshot: s.screenshot_ref.clone(), result: s.result })
            .collect(),
        final_screenshot,
        reward: traj.reward.clone(),
    }
}

fn annotations_of(traj: &Trajectory) -> Annotations {
    Annotations {
        format_version: STORE_FORMAT_VERSION,
        steps: traj
            .steps
            .iter()
            .enumerate()
            .map(|(index, s)| StepAnnotation { index, turn: s.turn.clone(), ground_truth: s.ground_truth.clone() })
            .collect(),
    }
}

fn safe_component(name: &str) -> bool {
    !name.is_empty() && name != "." && name != ".." && !name.contains(['/', '\\'])
}

/// Writes `rollout` under `root/<trajectory_id>/`, rendering one PNG per
/// visited state at full resolution. Refuses to overwrite.
pub fn write_rollout(root: &Path, rollout: &Rollout, script: &AppScript) -> Result<PathBuf, StoreError> {
    let traj = &rollout.trajectory;
    if rollout.states.len() != traj.steps.len() + 1 {
        return Err(StoreError::Invalid {
            path: root.join(&traj.trajectory_id),
            message: format!("{} states for {} steps", rollout.states.len(), traj.steps.len()),
        });
    }
    let mut pngs: Vec<(String, Vec<u8>)> = Vec::with_capacity(rollout.states.len());
    for (step, state) in traj.steps.iter().zip(&rollout.states) {
        pngs.push((step.screenshot_ref.clone(), screenshot_png(script, state, 1)?));
    }
    let last = rollout.states.last().expect("checked length");
    pngs.push((FINAL_SCREENSHOT.into(), screenshot_png(script, last, 1)?));
    write_trajectory(root, traj, &pngs)
}

/// Writes the manifest, annotations and the given screenshot files.
pub fn write_trajectory(
    root: &Path,
    traj: &Trajectory,
    screenshots: &[(String, Vec<u8>)],
) -> Result<PathBuf, StoreError> {
    let dir = root.join(&traj.trajectory_id);
    if !safe_component(&traj.trajectory_id) {
        return Err(StoreError::Invalid { path: dir, message: "trajectory id is not a plain name".into() });
    }
    traj.validate().map_err(|message| StoreError::Invalid { path: dir.clone(), message })?;
    fs::create_dir_all(root).map_err(io_err(root))?;
    let _lock = WriteLock::acquire(&dir)?;
    match fs::create_dir(&dir) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(StoreError::Exists { path: dir }),
        Err(e) => return Err(StoreError::Io { path: dir, source: e }),
    }
    let mut final_screenshot = None;
    for (name, bytes) in screenshots {
        if !safe_component(name) {
            return Err(StoreError::Invalid { path: dir, message: format!("bad screenshot name {name:?}") });
        }
        if name == FINAL_SCREENSHOT {
            final_screenshot = Some(name.clone());
        }
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
    }
    for step in &traj.steps {
        if !dir.join(&step.screenshot_ref).is_file() {
            return Err(StoreError::MissingScreenshot { path: dir, screenshot: step.screenshot_ref.clone() });
        }
    }
    let p = dir.join(MANIFEST_FILE);
    fs::write(&p, to_canonical_json(&manifest_of(traj, final_screenshot))).map_err(io_err(&p))?;
    let p = dir.join(ANNOTATIONS_FILE);
    fs::write(&p, to_canonical_json(&annotations_of(traj))).map_err(io_err(&p))?;
    Ok(dir)
}

/// Reads one trajectory directory and checks every screenshot resolves.
pub fn read_trajectory(dir: &Path) -> Result<Trajectory, StoreError> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: TrajectoryManifest = read_json(&mpath, "manifest")?;
    if manifest.format_version != STORE_FORMAT_VERSION {
        return Err(StoreError::Version { path: mpath, found: manifest.format_version });
    }
    let apath = dir.join(ANNOTATIONS_FILE);
    let ann: Annotations = read_json(&apath, "annotations")?;
    if ann.format_version != STORE_FORMAT_VERSION {
        return Err(StoreError::Version { path: apath, found: ann.format_version });
    }
    if ann.steps.len() != manifest.steps.len() {
        return Err(StoreError::Invalid {
            path: dir.into(),
            message: format!("manifest lists {} steps, annotations {}", manifest.steps.len(), ann.steps.len()),
        });
    }
    let mut steps = Vec::with_capacity(manifest.steps.len());
    for (i, (m, a)) in manifest.steps.into_iter().zip(ann.steps).enumerate() {
        if m.index != i || a.index != i {
            return Err(StoreError::Invalid { path: dir.into(), message: format!("step {i} out of order") });
        }
        if !safe_component(&m.screenshot) || !dir.join(&m.screenshot).is_file() {
            return Err(StoreError::MissingScreenshot { path: dir.into(), screenshot: m.screenshot });
        }
        steps.push(Step { screenshot_ref: m.screenshot, turn: a.turn, result: m.result, ground_truth: a.ground_truth });
    }
    let traj = Trajectory {
        trajectory_id: manifest.trajectory_id,
        task_id: manifest.task_id,
        app: manifest.app,
        instruction: manifest.instruction,
        steps,
        terminal_status: manifest.terminal_status,
        final_success: manifest.final_success,
        reward: manifest.reward,
    };
    traj.validate().map_err(|message| StoreError::Invalid { path: dir.into(), message })?;
    Ok(traj)
}

/// Reads every trajectory directory directly under `root`, sorted by name.
pub fn read_trajectories(root: &Path) -> Result<Vec<Trajectory>, StoreError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    dirs.iter().map(|d| read_trajectory(d)).collect()
}

/// Copies a trajectory directory through a read and a write.
pub fn rewrite_trajectory(src: &Path, dst_root: &Path) -> Result<PathBuf, StoreError> {
    let traj = read_trajectory(src)?;
    let mut files = Vec::new();
    for entry in fs::read_dir(src).map_err(io_err(src))? {
        let p = entry.map_err(io_err(src))?.path();
        if p.extension().is_some_and(|e| e == "png") {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            files.push((name, fs::read(&p).map_err(io_err(&p))?));
        }
    }
    files.sort();
    write_trajectory(dst_root, &traj, &files)
}

// ---------------------------------------------------------------------------
// Line-delimited records
// ---------------------------------------------------------------------------

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<(), StoreError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| StoreError::Io { path: path.into(), source: e.into() })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parses one record per non-blank line; errors name the line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            path: path.into(),
            what: "record",
            message: format!("line {}: {e}", n + 1),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, StoreError> {
    read_jsonl(path)
}

/// One supervised pair: the request a policy would see and the annotated
/// response it should produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftPair {
    pub id: String,
    pub system: String,
    pub instruction: String,
    /// Earlier annotated responses of the same trajectory, oldest first.
    pub history: Vec<String>,
    pub images: Vec<String>,
    pub target: String,
}

/// Builds prompt/target pairs per annotated step, with each trajectory's
/// earlier responses as history and the last `window` screenshots as images.
pub fn sft_pairs(records: &[DatasetRecord], window: usize) -> Vec<SftPair> {
    let mut by_traj: BTreeMap<&str, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        by_traj.entry(&r.trajectory_id).or_default().push(r);
    }
    let mut out = Vec::with_capacity(records.len());
    for steps in by_traj.values_mut() {
        steps.sort_by_key(|r| r.step_index);
        for (i, rec) in steps.iter().enumerate() {
            let start = (i + 1).saturating_sub(window.max(1));
            out.push(SftPair {
                id: format!("{}/{}", rec.trajectory_id, rec.step_index),
                system: system_prompt(&rec.instruction),
                instruction: rec.instruction.clone(),
                history: steps[..i].iter().map(|r| r.target_response()).collect(),
                images: steps[start..=i].iter().map(|r| r.screenshot_ref.clone()).collect(),
                target: rec.target_response(),
            });
        }
    }
    out
}
