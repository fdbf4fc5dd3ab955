//! Layered TOML configuration: shipped defaults, then user files in order,
//! then `key.path=value` overrides.

use std::path::{Path, PathBuf};

use guirl_core::grpo::GrpoConfig;
use guirl_core::rollout::StageConfig;
use guirl_core::toy::BanditTrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::judge::HttpJudgeConfig;

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("override `{0}`: expected key.path=value")]
    Override(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub apps: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSchedule {
    pub epochs: u32,
    pub learning_rate: f64,
    pub gradient_accumulation: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub stage1: PhaseSchedule,
    pub stage2: PhaseSchedule,
    pub stage3: PhaseSchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub timeout_secs: u64,
    pub max_tokens: u32,
    pub downsample: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    Predicate,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    pub kind: JudgeKind,
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_concurrency: usize,
    pub downsample: u32,
    pub max_tokens: u32,
}

impl JudgeSection {
    pub fn http(&self) -> HttpJudgeConfig {
        HttpJudgeConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs,
            downsample: self.downsample,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub updates: usize,
    pub groups_per_update: usize,
    pub initial_logits: [f64; 2],
    pub smoothing: usize,
    pub grpo: GrpoConfig,
}

impl TrainSection {
    pub fn bandit(&self, seed: u64) -> BanditTrainConfig {
        BanditTrainConfig {
            updates: self.updates,
            groups_per_update: self.groups_per_update,
            grpo: self.grpo,
            initial_logits: self.initial_logits,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub case_insensitive: bool,
    pub passk: Vec<usize>,
    #[serde(default)]
    pub min_accuracy: Option<f64>,
    #[serde(default)]
    pub min_task_success: Option<f64>,
    #[serde(default)]
    pub min_tail_success: Option<f64>,
    #[serde(default)]
    pub max_avg_err: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    pub run: RunSection,
    pub stage2: StageConfig,
    pub stage3: StageConfig,
    pub schedule: Schedule,
    pub policy: PolicySection,
    pub judge: JudgeSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

fn parse_table(text: &str, origin: &str) -> Result<Table, ConfigError> {
    text.parse::<Table>().map_err(|e| ConfigError::Parse { origin: origin.into(), message: e.to_string() })
}

/// Recursively overlays `top` onto `base`; tables merge, everything else replaces.
pub fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`; the value is read as a TOML literal, falling back
/// to a bare string.
pub fn apply_override(root: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ConfigError::Override(spec.into()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.trim().into()));
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::Override(spec.into()))?;
    }
    table.insert(keys[keys.len() - 1].into(), value);
    Ok(())
}

impl HarnessConfig {
    pub fn load(files: &[PathBuf], overrides: &[String]) -> Result<Self, ConfigError> {
        let mut root = parse_table(DEFAULT_CONFIG, "default config")?;
        for f in files {
            let text = std::fs::read_to_string(f).map_err(|source| ConfigError::Io { path: f.clone(), source })?;
            merge(&mut root, parse_table(&text, &f.display().to_string())?);
        }
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        let cfg: Self = Value::Table(root).try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            origin: "merged config".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults() -> Self {
        Self::load(&[], &[]).expect("shipped default config is valid")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        use guirl_core::rollout::Stage;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        for (name, s, want) in
            [("stage2", &self.stage2, Stage::ActionLevel), ("stage3", &self.stage3, Stage::TaskLevel)]
        {
            if s.stage != want {
                return invalid(format!("{name}.stage must be {want:?}"));
            }
            s.validate().map_err(|e| ConfigError::Invalid(format!("{name}: {e}")))?;
        }
        self.train.grpo.validate().map_err(|e| ConfigError::Invalid(format!("train.grpo: {e}")))?;
        if self.train.smoothing == 0 || self.train.updates == 0 {
            return invalid("train.smoothing and train.updates must be >= 1".into());
        }
        if self.policy.downsample == 0 || self.judge.downsample == 0 {
            return invalid("downsample factors must be >= 1".into());
        }
        if self.judge.kind == JudgeKind::Http && self.judge.endpoint.is_empty() {
            return invalid("judge.kind = \"http\" needs judge.endpoint".into());
        }
        if self.eval.passk.contains(&0) {
            return invalid("eval.passk entries must be >= 1".into());
        }
        Ok(())
    }

    pub fn apps_dir(&self) -> Option<&Path> {
        (!self.run.apps.as_os_str().is_empty()).then_some(self.run.apps.as_path())
    }

    /// The merged configuration as TOML, for run manifests.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use guirl_core::rollout::StageConfig;

    #[test]
    fn shipped_defaults_match_stage_defaults() {
        let cfg = HarnessConfig::defaults();
        assert_eq!(cfg.stage2, StageConfig::action_level());
        assert_eq!(cfg.stage3, StageConfig::task_level());
        assert_eq!(cfg.train.bandit(0), BanditTrainConfig::default());
        assert_eq!(cfg.schedule.stage2.learning_rate, 1e-7);
        assert_eq!(cfg.schedule.stage3.learning_rate, 1e-6);
    }

    #[test]
    fn layering_order() {
        let tmp = tempfile::tempdir().unwrap();
        let a = tmp.path().join("a.toml");
        let b = tmp.path().join("b.toml");
        std::fs::write(&a, "[stage3]\ngroup_size = 6\nmax_steps = 9\n").unwrap();
        std::fs::write(&b, "[stage3]\ngroup_size = 5\n").unwrap();
        let cfg = HarnessConfig::load(&[a, b], &["stage3.max_steps=7".into()]).unwrap();
        assert_eq!((cfg.stage3.group_size, cfg.stage3.max_steps), (5, 7));
        assert_eq!(cfg.stage3.temperature, 1.0);
    }

    #[test]
    fn overrides_parse_literals_and_strings() {
        let cfg = HarnessConfig::load(&[], &["judge.model=gpt-x".into(), "run.seed=9".into()]).unwrap();
        assert_eq!(cfg.judge.model, "gpt-x");
        assert_eq!(cfg.run.seed, 9);
    }

    #[test]
    fn typos_and_bad_values_are_rejected() {
        assert!(matches!(HarnessConfig::load(&[], &["stage3.groupsize=4".into()]), Err(ConfigError::Parse { .. })));
        assert!(matches!(HarnessConfig::load(&[], &["stage3.group_size=1".into()]), Err(ConfigError::Invalid(_))));
        assert!(matches!(HarnessConfig::load(&[], &["judge.kind=http".into()]), Err(ConfigError::Invalid(_))));
        assert!(matches!(HarnessConfig::load(&[], &["nonsense".into()]), Err(ConfigError::Override(_))));
    }

    #[test]
    fn manifest_toml_reloads() {
        let cfg = HarnessConfig::defaults();
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("c.toml");
        std::fs::write(&p, cfg.to_toml()).unwrap();
        assert_eq!(HarnessConfig::load(&[p], &[]).unwrap(), cfg);
    }
}
