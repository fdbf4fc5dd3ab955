//! Synthetic annotated datasets: a full-scale manifest with the reference
//! per-app step and trajectory counts, and seeded single-defect records for
//! lint recall checks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetRecord, InstructionLevel, LintViolation};
use crate::policies::random_action;
use crate::protocol::{describe, serialize_action, Action, ActionKind, ScreenSize};
use crate::reward::{BBox, Direction, GroundTruthStep};

/// `(app, annotated steps, trajectories)` of the reference dataset.
pub const REFERENCE_APP_TABLE: [(&str, usize, usize); 28] = [
    ("Alipay", 5, 1),
    ("Amap", 446, 93),
    ("App Store", 16, 4),
    ("Baidu", 439, 106),
    ("Baidu Maps", 1844, 308),
    ("Bilibili", 2457, 376),
    ("Browser", 213, 39),
    ("Calculator", 443, 56),
    ("Calendar", 390, 69),
    ("Dianping", 4, 1),
    ("Douyin", 447, 106),
    ("Eleme", 538, 129),
    ("Fliggy", 2934, 593),
    ("Idle Fish", 29, 5),
    ("JD", 1092, 211),
    ("Kuaishou", 2938, 619),
    ("Luckin Coffee", 144, 18),
    ("Meituan", 520, 93),
    ("Mobile System", 38, 7),
    ("Notes", 110, 19),
    ("Pinduoduo", 707, 115),
    ("Quark", 390, 67),
    ("Taobao", 4326, 821),
    ("Tencent Maps", 912, 177),
    ("WeChat", 33, 6),
    ("Weather", 396, 91),
    ("Xiaohongshu", 2706, 504),
    ("Zhuanzhuan", 4, 1),
];

/// Distinct instructions in the reference dataset.
pub const REFERENCE_INSTRUCTIONS: usize = 1510;
/// Longest trajectory allowed during collection.
pub const MAX_TRAJECTORY_LEN: usize = 25;

const SCREEN: ScreenSize = ScreenSize::new(1080, 2400);

/// Splits `total` into parts proportional to `weights` (largest remainder),
/// each part clamped to `[1, cap_i]`.
pub fn apportion(total: usize, weights: &[usize], caps: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    let mut parts: Vec<usize> = weights.iter().map(|w| (total * w / sum.max(1)).max(1)).collect();
    for (p, cap) in parts.iter_mut().zip(caps) {
        *p = (*p).min(*cap);
    }
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by_key(|&i| core::cmp::Reverse(((total * weights[i]) % sum.max(1), weights[i])));
    let mut assigned: usize = parts.iter().sum();
    while assigned != total {
        let mut changed = false;
        for &i in &order {
            if assigned < total && parts[i] < caps[i] {
                parts[i] += 1;
                assigned += 1;
                changed = true;
            } else if assigned > total && parts[i] > 1 {
                parts[i] -= 1;
                assigned -= 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    parts
}

/// Random trajectory lengths in `[1, MAX_TRAJECTORY_LEN]` summing to `steps`.
fn lengths<R: Rng>(steps: usize, trajectories: usize, rng: &mut R) -> Vec<usize> {
    let mut out: Vec<usize> =
        (0..trajectories).map(|i| steps / trajectories + usize::from(i < steps % trajectories)).collect();
    if trajectories < 2 {
        return out;
    }
    for _ in 0..trajectories * 4 {
        let (a, b) = (rng.gen_range(0..trajectories), rng.gen_range(0..trajectories));
        let d = rng.gen_range(1..4);
        if a != b && out[a] > d && out[b] + d <= MAX_TRAJECTORY_LEN {
            out[a] -= d;
            out[b] += d;
        }
    }
    out
}

/// Ground truth that the given action satisfies.
pub fn truth_for(action: &Action) -> GroundTruthStep {
    let around = |p: crate::protocol::Point| BBox {
        x1: p.x.saturating_sub(40),
        y1: p.y.saturating_sub(40),
        x2: (p.x + 40).min(1079),
        y2: (p.y + 40).min(2399),
    };
    match action {
        Action::Click { at } => GroundTruthStep::click(around(*at)),
        Action::LongPress { at, .. } => GroundTruthStep::long_press(around(*at)),
        Action::Swipe { start, end } => {
            let dir = crate::reward::dominant_direction(*start, *end).unwrap_or(Direction::Up);
            GroundTruthStep::swipe(around(*start), dir)
        }
        Action::Type { text } => GroundTruthStep::typed(text),
        Action::Key { keyevent } => GroundTruthStep::key(keyevent),
        Action::SystemButton { button } => GroundTruthStep::button(*button),
        Action::Terminate { status } => GroundTruthStep::terminate(*status),
        Action::Wait { .. } => GroundTruthStep::wait(),
    }
}

fn annotated_step<R: Rng>(rng: &mut R, last: bool) -> (Action, String) {
    let action = loop {
        let a = random_action(rng, SCREEN);
        let is_terminate = a.kind() == ActionKind::Terminate;
        let swipe_tie =
            matches!(&a, Action::Swipe { start, end } if crate::reward::dominant_direction(*start, *end).is_none());
        let blank = matches!(&a, Action::Type { text } if text.trim().is_empty());
        if is_terminate == last && !swipe_tie && !blank {
            break a;
        }
        if last {
            break Action::Terminate { status: crate::protocol::TerminateStatus::Success };
        }
    };
    let think = format!(
        "The current page shows step {} of the flow, I will {}, to move the task forward",
        rng.gen_range(1..100),
        describe(&action)
    );
    (action, think)
}

/// Full-scale synthetic dataset matching [`REFERENCE_APP_TABLE`] and
/// [`REFERENCE_INSTRUCTIONS`]. Every record lints clean.
pub fn reference_shaped_dataset(seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs: Vec<usize> = REFERENCE_APP_TABLE.iter().map(|r| r.2).collect();
    let instructions = apportion(REFERENCE_INSTRUCTIONS, &trajs, &trajs);
    let mut out = Vec::new();
    for ((app, steps, n_traj), n_instr) in REFERENCE_APP_TABLE.iter().zip(instructions) {
        let lens = lengths(*steps, *n_traj, &mut rng);
        for (t, len) in lens.into_iter().enumerate() {
            let instr = t % n_instr;
            let level = if instr % 5 == 4 { InstructionLevel::Action } else { InstructionLevel::Task };
            let trajectory_id = format!("{}-{t:04}", app.to_lowercase().replace(' ', "_"));
            for step_index in 0..len {
                let (action, think) = annotated_step(&mut rng, step_index + 1 == len);
                out.push(DatasetRecord {
                    trajectory_id: trajectory_id.clone(),
                    app: String::from(*app),
                    instruction: format!("{app} task #{instr}"),
                    instruction_level: level,
                    step_index,
                    screenshot_ref: format!("{trajectory_id}/{step_index:03}.png"),
                    think,
                    action: describe(&action),
                    tool_call: serialize_action(&action),
                    ground_truth: truth_for(&action),
                });
            }
        }
    }
    out
}

/// Every lint violation kind, in declaration order.
pub const ALL_VIOLATIONS: [LintViolation; 7] = [
    LintViolation::MissingInstruction,
    LintViolation::MissingThink,
    LintViolation::ThinkShape,
    LintViolation::MissingAction,
    LintViolation::ToolCallParseFailure,
    LintViolation::GroundTruthInvalid,
    LintViolation::VariantMismatch,
];

/// Copies `rec` with exactly one defect of kind `defect`.
pub fn inject_defect<R: Rng>(rec: &DatasetRecord, defect: LintViolation, rng: &mut R) -> DatasetRecord {
    let mut r = rec.clone();
    match defect {
        LintViolation::MissingInstruction => r.instruction = [" ", "", "\n\t"][rng.gen_range(0..3)].into(),
        LintViolation::MissingThink => r.think = ["", "  ", "\n"][rng.gen_range(0..3)].into(),
        LintViolation::ThinkShape => r.think = ["tap it", "tap the icon, now", "点击图标"][rng.gen_range(0..3)].into(),
        LintViolation::MissingAction => r.action = String::new(),
        LintViolation::ToolCallParseFailure => {
            let broken = [
                String::from(&r.tool_call[..r.tool_call.len() - 1]),
                r.tool_call.replace("mobile_use", "computer_use"),
                String::from("click(540, 210)"),
                r.tool_call.replacen("\"action\":\"", "\"action\":\"x_", 1),
            ];
            r.tool_call = broken[rng.gen_range(0..broken.len())].clone();
        }
        LintViolation::GroundTruthInvalid => {
            r.ground_truth.target_bbox = Some(BBox { x1: 500, y1: 500, x2: 100, y2: 100 });
            r.ground_truth.expected_variant = ActionKind::Click;
            r.ground_truth.expected_argument = None;
            r.ground_truth.expected_swipe = None;
        }
        LintViolation::VariantMismatch => {
            let current = r.ground_truth.expected_variant;
            r.ground_truth =
                if current == ActionKind::Wait { GroundTruthStep::typed("other") } else { GroundTruthStep::wait() };
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::lint_record;

    #[test]
    fn apportion_hits_total_within_caps() {
        let w = [1, 4, 821, 6, 1];
        let parts = apportion(20, &w, &w);
        assert_eq!(parts.iter().sum::<usize>(), 20);
        assert!(parts.iter().zip(&w).all(|(p, c)| *p >= 1 && p <= c));
    }

    #[test]
    fn lengths_sum_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = lengths(443, 56, &mut rng);
        assert_eq!(l.iter().sum::<usize>(), 443);
        assert!(l.iter().all(|&n| (1..=MAX_TRAJECTORY_LEN).contains(&n)));
    }

    #[test]
    fn injected_defects_are_flagged_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = reference_shaped_dataset(0);
        for (i, rec) in base.iter().step_by(97).take(200).enumerate() {
            assert!(lint_record(rec).is_empty(), "{rec:?}");
            let defect = ALL_VIOLATIONS[i % ALL_VIOLATIONS.len()];
            assert_eq!(lint_record(&inject_defect(rec, defect, &mut rng)), [defect]);
        }
    }
}
