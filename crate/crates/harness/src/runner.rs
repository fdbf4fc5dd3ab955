//! Parallel rollout workers. Each job runs on its own environment instance
//! and policy; results are collected on the calling thread and returned in
//! job order, so output does not depend on scheduling.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use guirl_core::policies::PolicyFactory;
use guirl_core::rollout::{
    assemble_task_group, rollout_group_stage2, stage2_queries, stage3_member, ActionGroup, Judge, RolloutError,
    Stage2Query, StageConfig, TaskGroup, TaskMember,
};
use guirl_core::sim::TaskSpec;

use crate::scripts::AppFile;

/// Runs `job(0..n)` on `workers` threads. Stops handing out jobs after the
/// first failure and returns the failure with the lowest job index.
pub fn parallel_map<T, E, F>(n: usize, workers: usize, job: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<T, E>)>();
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let mut first_err: Option<(usize, E)> = None;
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            let tx = tx.clone();
            let (next, failed, job) = (&next, &failed, &job);
            s.spawn(move || loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let out = job(i);
                if out.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                if tx.send((i, out)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, out) in rx {
            match out {
                Ok(v) => slots[i] = Some(v),
                Err(e) => {
                    if first_err.as_ref().is_none_or(|(j, _)| i < *j) {
                        first_err = Some((i, e));
                    }
                }
            }
        }
    });
    if let Some((_, e)) = first_err {
        return Err(e);
    }
    Ok(slots.into_iter().map(|v| v.expect("every job reported")).collect())
}

/// A task selected for a run, with its app and group index.
#[derive(Debug, Clone, Copy)]
pub struct Selected<'a> {
    pub app: &'a AppFile,
    pub task: &'a TaskSpec,
}

/// Tasks whose id equals or starts with one of `selectors` (all when empty),
/// in suite order.
pub fn select_tasks<'a>(apps: &'a [AppFile], selectors: &[String]) -> Vec<Selected<'a>> {
    apps.iter()
        .flat_map(|app| app.tasks.iter().map(move |task| Selected { app, task }))
        .filter(|s| selectors.is_empty() || selectors.iter().any(|p| s.task.task_id.starts_with(p.as_str())))
        .collect()
}

/// One single-step group per oracle-path step of every selected task.
pub fn run_stage2(
    tasks: &[Selected<'_>],
    cfg: &StageConfig,
    policies: &dyn PolicyFactory,
) -> Result<Vec<ActionGroup>, RolloutError> {
    cfg.validate()?;
    let queries: Vec<(&Selected<'_>, Stage2Query)> =
        tasks.iter().flat_map(|s| stage2_queries(&s.app.script, s.task).into_iter().map(move |q| (s, q))).collect();
    parallel_map(queries.len(), cfg.parallel_envs, |i| {
        let (sel, query) = &queries[i];
        rollout_group_stage2(&sel.app.script, query, cfg, policies, i)
    })
}

/// One task-level group per selected task. Members run as independent jobs.
pub fn run_stage3(
    tasks: &[Selected<'_>],
    cfg: &StageConfig,
    policies: &dyn PolicyFactory,
    judge: &dyn Judge,
) -> Result<Vec<TaskGroup>, RolloutError> {
    cfg.validate()?;
    let g = cfg.group_size;
    let members: Vec<TaskMember> = parallel_map(tasks.len() * g, cfg.parallel_envs, |i| {
        let (group, member) = (i / g, i % g);
        let sel = &tasks[group];
        stage3_member(&sel.app.script, sel.task, cfg, policies, judge, group, member)
    })?;
    let mut members = members.into_iter();
    tasks.iter().map(|sel| assemble_task_group(&sel.task.task_id, members.by_ref().take(g).collect(), cfg)).collect()
}
