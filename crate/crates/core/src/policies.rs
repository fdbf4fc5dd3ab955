//! Scripted mock policies for tests, fixtures and CLI runs. None of them
//! look at pixels; the oracle reads the simulator's reference action.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::protocol::{describe, render_turn, Action, ActionKind, Point, ScreenSize, SystemButton, TerminateStatus};
use crate::sim::{Observation, Policy, PolicyError};

/// Renders a well-formed three-tag turn for `action` on the observed screen.
pub fn formatted_turn(obs: &Observation<'_>, action: &Action) -> String {
    let summary = describe(action);
    let think = format!(
        "The screen `{}` is open, the next move is {}, so that the task progresses: {}",
        obs.state.screen, summary, obs.task.instruction
    );
    render_turn(&think, &summary, action)
}

/// Uniform draw over all action variants with in-bounds coordinates and
/// arbitrary (possibly non-ASCII) text.
pub fn random_action<R: Rng>(rng: &mut R, screen: ScreenSize) -> Action {
    let point = |rng: &mut R| Point::new(rng.gen_range(0..screen.width), rng.gen_range(0..screen.height));
    let text = |rng: &mut R| -> String {
        const POOL: &[char] = &[
            'a',
            'Z',
            '0',
            ' ',
            '"',
            '\\',
            '\n',
            '<',
            '>',
            '{',
            '}',
            '/',
            '\u{e9}',
            '\u{641c}',
            '\u{7d22}',
            '\u{1f600}',
        ];
        (0..rng.gen_range(0..12)).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect()
    };
    let seconds = |rng: &mut R| f64::from(rng.gen_range(1..400u32)) / 8.0;
    match ActionKind::ALL[rng.gen_range(0..ActionKind::ALL.len())] {
        ActionKind::Key => Action::Key { keyevent: format!("KEYCODE_{}", rng.gen_range(0..300)) },
        ActionKind::Click => Action::Click { at: point(rng) },
        ActionKind::Swipe => Action::Swipe { start: point(rng), end: point(rng) },
        ActionKind::LongPress => Action::LongPress { at: point(rng), seconds: seconds(rng) },
        ActionKind::Type => Action::Type { text: text(rng) },
        ActionKind::SystemButton => Action::SystemButton { button: SystemButton::ALL[rng.gen_range(0..4)] },
        ActionKind::Terminate => Action::Terminate {
            status: if rng.gen_bool(0.5) { TerminateStatus::Success } else { TerminateStatus::Failure },
        },
        ActionKind::Wait => Action::Wait { seconds: seconds(rng) },
    }
}

/// Always answers the reference action for the current state.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePolicy;

impl Policy for OraclePolicy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        let action =
            obs.reference.canonical_action().map_err(|e| PolicyError::Protocol(format!("reference action: {e}")))?;
        Ok(formatted_turn(obs, &action))
    }
}

pub const MALFORMED_TEXT: &str = "I should tap the search box next. click(540, 210)";

/// Never produces a parseable turn.
#[derive(Debug, Clone, Copy, Default)]
pub struct MalformedPolicy;

impl Policy for MalformedPolicy {
    fn respond(&mut self, _obs: &Observation<'_>) -> Result<String, PolicyError> {
        Ok(MALFORMED_TEXT.into())
    }
}

/// Replays a fixed action list, then terminates with failure.
#[derive(Debug, Clone)]
pub struct TranscriptPolicy {
    actions: Vec<Action>,
    pos: usize,
}

impl TranscriptPolicy {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions, pos: 0 }
    }
}

impl Policy for TranscriptPolicy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        let action =
            self.actions.get(self.pos).cloned().unwrap_or(Action::Terminate { status: TerminateStatus::Failure });
        self.pos += 1;
        Ok(formatted_turn(obs, &action))
    }
}

/// Seeded noise policy. At temperature 0 it ignores its generator and always
/// taps the first element of the current screen, so every member of a group
/// is identical.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
    pub temperature: f64,
    /// Probability of answering with unparseable text.
    pub malformed_rate: f64,
}

impl RandomPolicy {
    pub fn new(seed: u64, temperature: f64, malformed_rate: f64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), temperature, malformed_rate }
    }

    fn sample(&mut self, obs: &Observation<'_>) -> Option<Action> {
        let screen = obs.script.screen(&obs.state.screen)?;
        let (w, h) = (screen.size.width, screen.size.height);
        if self.temperature <= 0.0 {
            return screen.elements.first().map(|e| Action::Click { at: e.bbox.center() });
        }
        if self.rng.gen_bool(self.malformed_rate.clamp(0.0, 1.0)) {
            return None;
        }
        let rng = &mut self.rng;
        let point = |rng: &mut ChaCha8Rng| Point::new(rng.gen_range(0..w), rng.gen_range(0..h));
        Some(match rng.gen_range(0..10) {
            0..=4 if !screen.elements.is_empty() => {
                let e = &screen.elements[rng.gen_range(0..screen.elements.len())];
                Action::Click { at: e.bbox.center() }
            }
            0..=5 => Action::Click { at: point(rng) },
            6 => Action::Swipe { start: point(rng), end: point(rng) },
            7 => Action::SystemButton { button: SystemButton::Back },
            8 => Action::Type { text: format!("q{}", rng.gen_range(0..100)) },
            _ => Action::LongPress { at: point(rng), seconds: 1.0 },
        })
    }
}

impl Policy for RandomPolicy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        Ok(match self.sample(obs) {
            Some(action) => formatted_turn(obs, &action),
            None => MALFORMED_TEXT.into(),
        })
    }
}

/// Oracle with probability `p_oracle`, otherwise a [`RandomPolicy`] draw.
#[derive(Debug, Clone)]
pub struct MixturePolicy {
    rng: ChaCha8Rng,
    pub p_oracle: f64,
    noise: RandomPolicy,
}

impl MixturePolicy {
    pub fn new(seed: u64, p_oracle: f64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            p_oracle,
            noise: RandomPolicy::new(seed ^ 0x9e37_79b9_7f4a_7c15, 1.0, 0.1),
        }
    }
}

impl Policy for MixturePolicy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        if self.rng.gen_bool(self.p_oracle.clamp(0.0, 1.0)) {
            OraclePolicy.respond(obs)
        } else {
            self.noise.respond(obs)
        }
    }
}

/// Answers `ok_calls` times with the oracle, then fails every call with a
/// transport error.
#[derive(Debug, Clone, Copy)]
pub struct FailingPolicy {
    pub ok_calls: usize,
    calls: usize,
}

impl FailingPolicy {
    pub fn new(ok_calls: usize) -> Self {
        Self { ok_calls, calls: 0 }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl Policy for FailingPolicy {
    fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
        self.calls += 1;
        if self.calls > self.ok_calls {
            return Err(PolicyError::Transport("connection reset".into()));
        }
        OraclePolicy.respond(obs)
    }
}

/// Named mock policy, as selected on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockKind {
    Oracle,
    Random { temperature: f64, malformed_rate: f64 },
    Mixture { p_oracle: f64 },
    Malformed,
}

impl MockKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "oracle" => Self::Oracle,
            "random" => Self::Random { temperature: 1.0, malformed_rate: 0.1 },
            "mixture" => Self::Mixture { p_oracle: 0.5 },
            "malformed" => Self::Malformed,
            _ => return None,
        })
    }
}

/// Builds one independent policy per (group, member) slot with a derived
/// seed, so results do not depend on scheduling order.
pub trait PolicyFactory: Sync {
    fn policy(&self, group: usize, member: usize) -> Box<dyn Policy + Send>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockFactory {
    pub kind: MockKind,
    pub seed: u64,
}

/// SplitMix64 finalizer over the slot coordinates.
pub fn slot_seed(seed: u64, group: usize, member: usize) -> u64 {
    let mut z = seed
        .wrapping_add((group as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add((member as u64 + 1).wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl PolicyFactory for MockFactory {
    fn policy(&self, group: usize, member: usize) -> Box<dyn Policy + Send> {
        let seed = slot_seed(self.seed, group, member);
        match self.kind {
            MockKind::Oracle => Box::new(OraclePolicy),
            MockKind::Random { temperature, malformed_rate } => {
                Box::new(RandomPolicy::new(seed, temperature, malformed_rate))
            }
            MockKind::Mixture { p_oracle } => Box::new(MixturePolicy::new(seed, p_oracle)),
            MockKind::Malformed => Box::new(MalformedPolicy),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::parse_turn;
    use crate::sim::{fixtures, run_task, RunConfig};
    use crate::trajectory::TerminalStatus;

    #[test]
    fn oracle_turns_are_well_formed() {
        let app = &fixtures::suite()[0];
        let mut seen = 0;
        struct Check<'s>(&'s mut usize);
        impl Policy for Check<'_> {
            fn respond(&mut self, obs: &Observation<'_>) -> Result<String, PolicyError> {
                let text = OraclePolicy.respond(obs)?;
                let turn = parse_turn(&text, None);
                assert!(turn.format_ok(), "{:?}", turn.diagnostics);
                *self.0 += 1;
                Ok(text)
            }
        }
        for task in &app.tasks {
            run_task(&mut Check(&mut seen), &app.script, task, &RunConfig::default(), "t");
        }
        assert!(seen >= 20);
    }

    #[test]
    fn greedy_random_policy_is_constant() {
        let app = &fixtures::suite()[1];
        let f = MockFactory { kind: MockKind::Random { temperature: 0.0, malformed_rate: 0.5 }, seed: 3 };
        let runs: Vec<_> = (0..4)
            .map(|m| {
                run_task(&mut f.policy(0, m), &app.script, &app.tasks[0], &RunConfig::default(), "t").trajectory.steps
            })
            .collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn failing_policy_gives_env_error() {
        let app = &fixtures::suite()[0];
        let mut p = FailingPolicy::new(1);
        let r = run_task(&mut p, &app.script, &app.tasks[12], &RunConfig::default(), "t");
        assert_eq!(r.trajectory.terminal_status, TerminalStatus::EnvError);
        assert_eq!(r.trajectory.len(), 1);
    }

    #[test]
    fn slot_seeds_differ() {
        assert_ne!(slot_seed(0, 0, 0), slot_seed(0, 0, 1));
        assert_ne!(slot_seed(0, 0, 1), slot_seed(0, 1, 0));
        assert_eq!(slot_seed(7, 2, 3), slot_seed(7, 2, 3));
    }
}
