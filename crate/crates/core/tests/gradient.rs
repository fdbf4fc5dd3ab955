use guirl_core::grpo::{
    group_advantages, objective_and_grad, snapshot_log_probs, DifferentiablePolicy, GrpoConfig, Sample,
};
use guirl_core::toy::{SoftmaxPolicy, TokenChoice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;

fn random_batch(rng: &mut ChaCha8Rng, contexts: usize, choices: usize) -> Vec<Vec<Sample<TokenChoice>>> {
    (0..rng.gen_range(1..4))
        .map(|_| {
            (0..rng.gen_range(2..6))
                .map(|_| Sample {
                    tokens: (0..rng.gen_range(1..5))
                        .map(|_| TokenChoice { context: rng.gen_range(0..contexts), choice: rng.gen_range(0..choices) })
                        .collect(),
                    reward: f64::from(rng.gen_range(0..3u8)),
                })
                .collect()
        })
        .collect()
}

/// Largest relative error between the analytic gradient and a central
/// difference, skipping points whose ratio sits within a step of a clip edge.
fn check(seed: u64, kl_coef: f64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (contexts, choices) = (3, 4);
    let mut policy = SoftmaxPolicy::new(contexts, choices);
    policy.params_mut().iter_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
    let batch = random_batch(&mut rng, contexts, choices);
    let cfg = GrpoConfig { kl_coef, ..GrpoConfig::default() };
    let adv: Vec<Vec<f64>> = batch
        .iter()
        .map(|g| group_advantages(&g.iter().map(|s| s.reward).collect::<Vec<_>>(), cfg.std_floor).unwrap())
        .collect();
    let old = snapshot_log_probs(&policy, &batch);
    // move away from the snapshot so ratios differ from 1
    policy.params_mut().iter_mut().for_each(|p| *p += rng.gen_range(-0.3..0.3));

    let near_edge = batch.iter().flatten().zip(old.iter().flatten()).any(|(s, o)| {
        s.tokens.iter().zip(o).any(|(t, lo)| {
            let r = (policy.log_prob(t) - lo).exp();
            [1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon].iter().any(|e| (r - e).abs() < 1e-4)
        })
    });
    if near_edge {
        return None;
    }
    let eval = objective_and_grad(&policy, &batch, &old, &adv, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..policy.params().len() {
        let mut plus = policy.clone();
        plus.params_mut()[k] += H;
        let mut minus = policy.clone();
        minus.params_mut()[k] -= H;
        let fp = objective_and_grad(&plus, &batch, &old, &adv, &cfg).unwrap().value;
        let fm = objective_and_grad(&minus, &batch, &old, &adv, &cfg).unwrap().value;
        let fd = (fp - fm) / (2.0 * H);
        let a = eval.grad[k];
        let scale = a.abs().max(fd.abs());
        let err = if scale < 1e-8 { (a - fd).abs() } else { (a - fd).abs() / scale };
        worst = worst.max(err);
    }
    Some(worst)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut checked = 0;
    for seed in 0..200 {
        if let Some(err) = check(seed, 0.0) {
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
            checked += 1;
        }
    }
    assert!(checked >= 190, "only {checked} points away from clip edges");
}

#[test]
fn gradient_with_kl_term_matches_central_differences() {
    for seed in 0..100 {
        if let Some(err) = check(1000 + seed, 0.05) {
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }
}
