use coca_core::group::RolloutGroup;
use coca_core::rewards::{gesr, group_normalize};
use coca_core::rng::{substream, uniform, Purpose};
use coca_core::trainer::{
    batch_gradient, draw_prompt, group_gradient, joint_step, kl_penalty, rlcr_step, rollout_group,
    segmented_step, SegmentAdvantages, SurrogateParams,
};
use coca_core::{Mode, Objective, PolicyParams, PolicyShape, PolicySnapshot, TaskSpec, TrainConfig, Trajectory, Vocabulary};

fn setup() -> (Vocabulary, TaskSpec, PolicyShape) {
    let spec = TaskSpec::default_spec();
    let vocab = Vocabulary::new(8, 1, 21).unwrap();
    let shape = PolicyShape::new(&vocab, &spec);
    (vocab, spec, shape)
}

fn random_params(shape: PolicyShape, seed: u64) -> PolicyParams {
    let mut rng = substream(seed, 0, 0, Purpose::Instance);
    let mut p = PolicyParams::zeros(shape);
    for x in p.conf_logits.iter_mut().chain(p.ans_logits.iter_mut()) {
        *x = 2.0 * uniform(&mut rng) - 1.0;
    }
    p
}

fn group(params: &PolicyParams, vocab: &Vocabulary, spec: &TaskSpec, seed: u64, g: usize) -> RolloutGroup {
    let mut rng = substream(seed, 1, 0, Purpose::Instance);
    let inst = draw_prompt(spec, vocab, 0, &mut rng).unwrap();
    let mut tok = substream(seed, 1, 0, Purpose::Rollout);
    let mut key = substream(seed, 1, 0, Purpose::AnswerKey);
    rollout_group(&PolicySnapshot::take(params), vocab, spec, inst, g, 1e-8, &mut tok, &mut key)
}

#[test]
fn saturated_policy_gives_identical_responses_and_zero_advantages() {
    let (vocab, spec, _) = setup();
    let spec = TaskSpec { answer_key: coca_core::AnswerKey::Shared, ..spec };
    let p = PolicyParams::analytic_optimum(&vocab, &spec, 800.0);
    for seed in 0..20 {
        let g = group(&p, &vocab, &spec, seed, 16);
        assert!(g.trajectories.iter().all(|t| t.tokens == g.trajectories[0].tokens));
        assert!(g.adv_conf.iter().chain(&g.adv_ans).all(|&a| a == 0.0));
    }
}

#[test]
fn stored_advantages_match_brute_force_recomputation() {
    let (vocab, spec, shape) = setup();
    for seed in 0..50 {
        let p = random_params(shape, seed);
        let g = group(&p, &vocab, &spec, seed, 2 + seed as usize % 31);
        assert!(g.check_invariants());
        let n = g.size() as f64;
        for (rewards, adv) in [(&g.acc_rewards, &g.adv_ans), (&g.conf_rewards, &g.adv_conf)] {
            let mean = rewards.iter().sum::<f64>() / n;
            let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
            let all_equal = rewards.iter().all(|&r| r == rewards[0]);
            for (r, a) in rewards.iter().zip(adv.iter()) {
                let want = if all_equal { 0.0 } else { (r - mean) / (std + 1e-8) };
                assert!((a - want).abs() < 1e-12, "{a} vs {want}");
            }
        }
        let k = g.acc_rewards.iter().filter(|&&r| r == 1.0).count();
        assert_eq!(g.gesr, k as f64 / n);
    }
}

#[test]
fn zero_advantages_leave_params_unchanged_except_version() {
    let (vocab, spec, _) = setup();
    let spec = TaskSpec { answer_key: coca_core::AnswerKey::Shared, ..spec };
    let p = PolicyParams::analytic_optimum(&vocab, &spec, 800.0);
    let groups: Vec<_> = (0..4).map(|s| group(&p, &vocab, &spec, s, 8)).collect();
    let cfg = TrainConfig::new(Mode::Coca, 0);
    let (out, report) = segmented_step(&p, &vocab, &groups, &cfg, 0).unwrap();
    assert_eq!(out.params.conf_logits, p.conf_logits);
    assert_eq!(out.params.ans_logits, p.ans_logits);
    assert_eq!(out.params.version, p.version + 1);
    assert_eq!(report.step, 0);
    assert_eq!(report.mean_response_len, 2.0);
}

#[test]
fn step_functions_check_the_objective() {
    let (vocab, spec, shape) = setup();
    let p = random_params(shape, 3);
    let groups = vec![group(&p, &vocab, &spec, 3, 8)];
    let cfg = TrainConfig::new(Mode::Joint, 0);
    let err = segmented_step(&p, &vocab, &groups, &cfg, 0).unwrap_err();
    assert_eq!(err.expected, Objective::Segmented);
    assert_eq!(err.found, Objective::Joint);
    assert!(joint_step(&p, None, &vocab, &groups, &cfg, 0).is_ok());
}

#[test]
fn joint_with_zero_confidence_reward_equals_rlvr() {
    let (vocab, spec, shape) = setup();
    let sp = SurrogateParams { clip_eps: 0.2, kl_beta: 0.0, reference: None };
    for seed in 0..20 {
        let p = random_params(shape, seed);
        let mut g = group(&p, &vocab, &spec, seed, 16);
        g.conf_rewards.iter_mut().for_each(|r| *r = 0.0);
        let joint = SegmentAdvantages::for_group(&g, Objective::Joint, 1e-8);
        let rlvr = SegmentAdvantages::for_group(&g, Objective::Accuracy, 1e-8);
        assert_eq!(group_gradient(&p, &vocab, &g, &joint, sp), group_gradient(&p, &vocab, &g, &rlvr, sp));
    }
}

#[test]
fn kl_gradient_vanishes_at_the_reference() {
    let (vocab, spec, shape) = setup();
    for seed in 0..20 {
        let p = random_params(shape, seed);
        let g = group(&p, &vocab, &spec, seed, 16);
        let adv = SegmentAdvantages::for_group(&g, Objective::Joint, 1e-8);
        let without = group_gradient(&p, &vocab, &g, &adv, SurrogateParams { clip_eps: 0.2, kl_beta: 0.0, reference: None });
        let with = group_gradient(&p, &vocab, &g, &adv, SurrogateParams { clip_eps: 0.2, kl_beta: 0.7, reference: Some(&p) });
        for (a, b) in without.iter().zip(with.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(kl_penalty(&p, &p, &g.instance), 0.0);
    }
}

#[test]
fn kl_is_nonnegative() {
    let (vocab, spec, shape) = setup();
    for seed in 0..50 {
        let p = random_params(shape, seed);
        let q = random_params(shape, seed + 1000);
        let g = group(&p, &vocab, &spec, seed, 2);
        assert!(kl_penalty(&p, &q, &g.instance) >= 0.0);
    }
}

#[test]
fn rlcr_all_correct_and_certain_does_not_move() {
    let (vocab, _, _) = setup();
    let spec = TaskSpec { answer_key: coca_core::AnswerKey::Shared, ..TaskSpec::latent([1.0], 8, 1) };
    let shape = PolicyShape::new(&vocab, &spec);
    let mut p = PolicyParams::zeros(shape);
    // confidence 1.0 and the modal answer, both saturated
    p.conf_logits[20] = 800.0;
    p.ans_logits[0] = 800.0;
    let groups = vec![group(&p, &vocab, &spec, 0, 8)];
    assert!(groups[0].acc_rewards.iter().all(|&r| r == 1.0));
    let cfg = TrainConfig::new(Mode::Rlcr, 0);
    let (out, _) = rlcr_step(&p, None, &vocab, &groups, &cfg, 0).unwrap();
    assert_eq!(out.params.conf_logits, p.conf_logits);
    assert_eq!(out.params.ans_logits, p.ans_logits);
}

#[test]
fn whole_sequence_advantage_reaches_the_confidence_head() {
    let (vocab, spec, shape) = setup();
    let p = random_params(shape, 1);
    let sp = SurrogateParams { clip_eps: 0.2, kl_beta: 0.0, reference: None };
    let reached = (0..20).any(|seed| {
        let g = group(&p, &vocab, &spec, seed, 16);
        let adv = SegmentAdvantages::for_group(&g, Objective::Accuracy, 1e-8);
        group_gradient(&p, &vocab, &g, &adv, sp).conf.iter().any(|&x| x != 0.0)
    });
    assert!(reached);
}

#[test]
fn first_evaluation_after_snapshot_is_on_policy() {
    let (vocab, spec, shape) = setup();
    let p = random_params(shape, 8);
    let g = group(&p, &vocab, &spec, 8, 16);
    for t in &g.trajectories {
        for pos in t.learnable_positions() {
            assert!((p.prob_ratio(&vocab, &g.instance, t, pos).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn batch_gradient_is_the_ordered_sum() {
    let (vocab, spec, shape) = setup();
    let p = random_params(shape, 4);
    let groups: Vec<_> = (0..6).map(|s| group(&p, &vocab, &spec, s, 8)).collect();
    let advs: Vec<_> = groups.iter().map(|g| SegmentAdvantages::for_group(g, Objective::Segmented, 1e-8)).collect();
    let sp = SurrogateParams { clip_eps: 0.2, kl_beta: 0.0, reference: None };
    let mut manual = coca_core::Gradient::zeros(shape);
    for (g, a) in groups.iter().zip(&advs) {
        manual.add_assign(&group_gradient(&p, &vocab, g, a, sp));
    }
    assert_eq!(batch_gradient(&p, &vocab, &groups, &advs, sp), manual);
}

#[test]
fn gesr_takes_values_on_the_counting_grid() {
    let (vocab, spec, shape) = setup();
    for seed in 0..30 {
        let p = random_params(shape, seed);
        let g = group(&p, &vocab, &spec, seed, 16);
        let k = g.gesr * 16.0;
        assert_eq!(k, k.round());
        assert_eq!(gesr(&g.acc_rewards).unwrap(), g.gesr);
        assert!(group_normalize(&g.acc_rewards, 1e-8).is_ok());
    }
}

#[test]
fn score_rejects_foreign_trajectories() {
    let (vocab, _, _) = setup();
    let bad = vec![vocab.conf_open, vocab.choice_token(0), vocab.conf_close, vocab.choice_token(0), vocab.eos];
    assert!(Trajectory::from_tokens(bad, vec![0.0; 5], &vocab).is_err());
}
