use coca_core::rng::{substream, uniform, Purpose};
use coca_core::trainer::{
    clipped_surrogate, group_gradient, group_objective, rollout_group, SegmentAdvantages, SurrogateParams,
};
use coca_core::{Objective, PolicyParams, PolicyShape, PolicySnapshot, RolloutGroup, TaskSpec, Vocabulary};
use rand_chacha::ChaCha8Rng;

const CLIP: f64 = 0.2;

fn setup() -> (Vocabulary, TaskSpec) {
    let spec = TaskSpec::default_spec();
    let vocab = Vocabulary::new(spec.n_answers, spec.answer_len, 21).unwrap();
    (vocab, spec)
}

fn random_params(shape: PolicyShape, scale: f64, rng: &mut ChaCha8Rng) -> PolicyParams {
    let mut p = PolicyParams::zeros(shape);
    for x in p.conf_logits.iter_mut().chain(p.ans_logits.iter_mut()) {
        *x = scale * (2.0 * uniform(rng) - 1.0);
    }
    p
}

fn jitter(p: &PolicyParams, scale: f64, rng: &mut ChaCha8Rng) -> PolicyParams {
    let mut q = p.clone();
    for x in q.conf_logits.iter_mut().chain(q.ans_logits.iter_mut()) {
        *x += scale * (2.0 * uniform(rng) - 1.0);
    }
    q
}

/// A group sampled by `old`, plus live params near `old`. Cases where any ratio sits
/// close to a clip boundary are redrawn so the finite differences stay on one branch.
fn case(seed: u64, vocab: &Vocabulary, spec: &TaskSpec, g: usize) -> (PolicyParams, RolloutGroup) {
    let shape = PolicyShape::new(vocab, spec);
    for attempt in 0.. {
        let mut rng = substream(seed, attempt, 0, Purpose::Instance);
        let old = random_params(shape, 2.0, &mut rng);
        let live = jitter(&old, 0.3, &mut rng);
        let inst = coca_core::trainer::draw_prompt(spec, vocab, 0, &mut rng).unwrap();
        let mut tok = substream(seed, attempt, 0, Purpose::Rollout);
        let mut key = substream(seed, attempt, 0, Purpose::AnswerKey);
        let group = rollout_group(&PolicySnapshot::take(&old), vocab, spec, inst, g, 1e-8, &mut tok, &mut key);
        let near_kink = group.trajectories.iter().any(|t| {
            t.learnable_positions().any(|pos| {
                let rho = live.prob_ratio(vocab, &group.instance, t, pos).unwrap();
                (rho - (1.0 - CLIP)).abs() < 1e-3 || (rho - (1.0 + CLIP)).abs() < 1e-3
            })
        });
        if !near_kink {
            return (live, group);
        }
    }
    unreachable!()
}

fn check_fd(
    live: &PolicyParams,
    vocab: &Vocabulary,
    group: &RolloutGroup,
    adv: &SegmentAdvantages,
    sp: SurrogateParams<'_>,
) -> usize {
    let grad = group_gradient(live, vocab, group, adv, sp);
    let h = 1e-5;
    let mut checked = 0;
    let n_conf = live.conf_logits.len();
    for k in 0..n_conf + live.ans_logits.len() {
        let analytic = if k < n_conf { grad.conf[k] } else { grad.ans[k - n_conf] };
        let eval = |delta: f64| {
            let mut p = live.clone();
            if k < n_conf {
                p.conf_logits[k] += delta;
            } else {
                p.ans_logits[k - n_conf] += delta;
            }
            group_objective(&p, vocab, group, adv, sp)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        if analytic.abs() > 1e-6 {
            let rel = (fd - analytic).abs() / analytic.abs();
            assert!(rel < 1e-5, "coordinate {k}: analytic {analytic}, fd {fd}, rel {rel}");
            checked += 1;
        } else {
            assert!(fd.abs() < 1e-6, "coordinate {k}: analytic {analytic}, fd {fd}");
        }
    }
    checked
}

#[test]
fn segmented_gradient_matches_finite_differences() {
    let (vocab, spec) = setup();
    let mut checked = 0;
    for seed in 0..100 {
        let g = 2 + (seed as usize * 7) % 15;
        let (live, group) = case(seed, &vocab, &spec, g);
        let adv = SegmentAdvantages::for_group(&group, Objective::Segmented, 1e-8);
        let sp = SurrogateParams { clip_eps: CLIP, kl_beta: 0.0, reference: None };
        checked += check_fd(&live, &vocab, &group, &adv, sp);
    }
    assert!(checked > 100, "only {checked} coordinates checked");
}

#[test]
fn whole_sequence_gradients_with_kl_match_finite_differences() {
    let (vocab, spec) = setup();
    let reference = PolicyParams::zeros(PolicyShape::new(&vocab, &spec));
    for (seed, objective) in (1000..1040).zip([Objective::Joint, Objective::Accuracy, Objective::Rlcr, Objective::ConfidenceOnly].into_iter().cycle()) {
        let (live, group) = case(seed, &vocab, &spec, 8);
        let adv = SegmentAdvantages::for_group(&group, objective, 1e-8);
        let sp = SurrogateParams { clip_eps: CLIP, kl_beta: 0.05, reference: Some(&reference) };
        check_fd(&live, &vocab, &group, &adv, sp);
    }
}

#[test]
fn score_function_has_zero_mean() {
    // sum_a pi(a) grad log pi(a) = 0 on every row, by enumeration
    let (vocab, spec) = setup();
    let shape = PolicyShape::new(&vocab, &spec);
    let mut rng = substream(5, 0, 0, Purpose::Instance);
    let params = random_params(shape, 3.0, &mut rng);
    let inst = coca_core::trainer::draw_prompt(&spec, &vocab, 0, &mut rng).unwrap();
    let base = params.sample_response(&vocab, &inst, 1.0, &mut rng);
    let conf_probs = params.probs(params.confidence_head(inst.class_id as usize), 1.0);
    let mut total = coca_core::Gradient::zeros(shape);
    for (b, p) in conf_probs.iter().enumerate() {
        let mut t = base.clone();
        t.tokens[1] = vocab.bin_token(b);
        let mut g = params.logprob_grad(&vocab, &inst, &t, 1).unwrap();
        g.scale(*p);
        total.add_assign(&g);
    }
    let ans_probs = params.probs(params.answer_head(&inst, 0), 1.0);
    for (c, p) in ans_probs.iter().enumerate() {
        let mut t = base.clone();
        t.tokens[3] = vocab.choice_token(c);
        let mut g = params.logprob_grad(&vocab, &inst, &t, 3).unwrap();
        g.scale(*p);
        total.add_assign(&g);
    }
    assert!(total.max_abs() < 1e-15, "{}", total.max_abs());
}

#[test]
fn segmented_channels_do_not_leak() {
    // confidence rows see only the confidence advantage, answer rows only the answer one
    let (vocab, spec) = setup();
    let sp = SurrogateParams { clip_eps: CLIP, kl_beta: 0.0, reference: None };
    for seed in 0..50 {
        let (live, group) = case(seed, &vocab, &spec, 16);
        let full = SegmentAdvantages::for_group(&group, Objective::Segmented, 1e-8);
        let g_full = group_gradient(&live, &vocab, &group, &full, sp);
        let g_conf = group_gradient(&live, &vocab, &group, &full.clone().without_ans(), sp);
        let g_ans = group_gradient(&live, &vocab, &group, &full.clone().without_conf(), sp);
        assert_eq!(g_full.conf, g_conf.conf);
        assert!(g_conf.ans.iter().all(|&x| x == 0.0));
        assert_eq!(g_full.ans, g_ans.ans);
        assert!(g_ans.conf.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn objective_at_snapshot_is_mean_advantage_sum() {
    // rho = 1 everywhere, so the objective is (1/G) sum_i (|conf| A_c + |ans| A_a) = 0
    let (vocab, spec) = setup();
    let shape = PolicyShape::new(&vocab, &spec);
    let mut rng = substream(9, 0, 0, Purpose::Instance);
    let p = random_params(shape, 1.0, &mut rng);
    let inst = coca_core::trainer::draw_prompt(&spec, &vocab, 0, &mut rng).unwrap();
    let mut tok = substream(9, 0, 0, Purpose::Rollout);
    let mut key = substream(9, 0, 0, Purpose::AnswerKey);
    let group = rollout_group(&PolicySnapshot::take(&p), &vocab, &spec, inst, 16, 1e-8, &mut tok, &mut key);
    let adv = SegmentAdvantages::for_group(&group, Objective::Segmented, 1e-8);
    let sp = SurrogateParams { clip_eps: CLIP, kl_beta: 0.0, reference: None };
    let expected: f64 = adv.conf.iter().zip(&adv.ans).map(|(c, a)| clipped_surrogate(1.0, *c, CLIP) + a).sum::<f64>() / 16.0;
    assert!((group_objective(&p, &vocab, &group, &adv, sp) - expected).abs() < 1e-12);
    assert!(expected.abs() < 1e-9);
}
