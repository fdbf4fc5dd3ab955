//! Declarative app files: one JSON document per app holding its screen
//! graph and task specs.

use std::fs;
use std::path::{Path, PathBuf};

use guirl_core::sim::fixtures::{self, FixtureApp};
use guirl_core::sim::{AppScript, ScriptError, TaskSpec, SCRIPT_FORMAT_VERSION};
use serde::{Deserialize, Serialize};

use crate::store::to_canonical_json;

#[derive(Debug, thiserror::Error)]
pub enum AppFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error("{0}: no app files found")]
    Empty(PathBuf),
    #[error("{path}: duplicate task id `{task}`")]
    DuplicateTask { path: PathBuf, task: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppFile {
    pub format_version: u32,
    pub script: AppScript,
    pub tasks: Vec<TaskSpec>,
}

impl From<FixtureApp> for AppFile {
    fn from(app: FixtureApp) -> Self {
        Self { format_version: SCRIPT_FORMAT_VERSION, script: app.script, tasks: app.tasks }
    }
}

impl AppFile {
    pub fn validate(&self) -> Result<(), ScriptError> {
        if self.format_version != SCRIPT_FORMAT_VERSION {
            return Err(ScriptError::Version(self.format_version));
        }
        self.script.validate()?;
        self.tasks.iter().try_for_each(|t| t.validate(&self.script))
    }
}

pub fn load_app(path: &Path) -> Result<AppFile, AppFileError> {
    let text = fs::read_to_string(path).map_err(|source| AppFileError::Io { path: path.into(), source })?;
    let app: AppFile = serde_json::from_str(&text)
        .map_err(|e| AppFileError::Malformed { path: path.into(), message: e.to_string() })?;
    app.validate().map_err(|source| AppFileError::Script { path: path.into(), source })?;
    Ok(app)
}

/// Loads every `*.json` under `dir` in file-name order; task ids must be
/// unique across the suite.
pub fn load_suite(dir: &Path) -> Result<Vec<AppFile>, AppFileError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| AppFileError::Io { path: dir.into(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(AppFileError::Empty(dir.into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut apps = Vec::with_capacity(paths.len());
    for p in &paths {
        let app = load_app(p)?;
        for t in &app.tasks {
            if !seen.insert(t.task_id.clone()) {
                return Err(AppFileError::DuplicateTask { path: p.clone(), task: t.task_id.clone() });
            }
        }
        apps.push(app);
    }
    Ok(apps)
}

/// The built-in fixture suite (5 apps, 20 tasks each).
pub fn builtin_suite() -> Vec<AppFile> {
    fixtures::suite().into_iter().map(AppFile::from).collect()
}

/// Writes one `NN-<app>.json` per app; returns the file paths.
pub fn write_suite(dir: &Path, apps: &[AppFile]) -> Result<Vec<PathBuf>, AppFileError> {
    fs::create_dir_all(dir).map_err(|source| AppFileError::Io { path: dir.into(), source })?;
    let mut out = Vec::new();
    for (i, app) in apps.iter().enumerate() {
        let name = format!("{i:02}-{}.json", app.script.app.to_lowercase().replace(' ', "_"));
        let p = dir.join(name);
        fs::write(&p, to_canonical_json(app)).map_err(|source| AppFileError::Io { path: p.clone(), source })?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_round_trips_through_files() {
        let tmp = tempfile::tempdir().unwrap();
        let apps = builtin_suite();
        write_suite(tmp.path(), &apps).unwrap();
        assert_eq!(load_suite(tmp.path()).unwrap(), apps);
    }

    #[test]
    fn dangling_transition_is_rejected_at_load() {
        let tmp = tempfile::tempdir().unwrap();
        let mut app = builtin_suite().swap_remove(0);
        app.script.transitions[0].to.screen = "nowhere".into();
        let p = tmp.path().join("bad.json");
        fs::write(&p, to_canonical_json(&app)).unwrap();
        let err = load_app(&p).unwrap_err();
        assert!(matches!(err, AppFileError::Script { source: ScriptError::UnknownTarget(_), .. }), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("x.json");
        let mut v = serde_json::to_value(builtin_suite().swap_remove(0)).unwrap();
        v["extra"] = 1.into();
        fs::write(&p, v.to_string()).unwrap();
        assert!(matches!(load_app(&p), Err(AppFileError::Malformed { .. })));
    }

    #[test]
    fn empty_dir_is_an_error() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(load_suite(tmp.path()), Err(AppFileError::Empty(_))));
    }
}
