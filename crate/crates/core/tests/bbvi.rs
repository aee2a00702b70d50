use rand::Rng;
use yn_crowd::bbvi::*;
use yn_crowd::benchmark::{Scenario, SyntheticCampaign};
use yn_crowd::gibbs::{gibbs_fit, summarize_posterior, ChainConfig};
use yn_crowd::math::{digamma, ln_beta, softplus, softplus_inv};
use yn_crowd::model::{
    BetaParams, ClassPrior, CredibilityPosterior, LabelAssignment, LabelerId, LabelingProblem, ResponsePair,
    VoteTable,
};
use yn_crowd::rng::stream;
use yn_crowd::Error;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}

/// Central difference of `f` at `x`.
fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-5 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[test]
fn beta_scores_match_finite_differences() {
    let mut rng = stream(1, &[]);
    for _ in 0..200 {
        let a = softplus_inv(rng.random_range(0.5..20.0));
        let b = softplus_inv(rng.random_range(0.5..20.0));
        let t = rng.random_range(0.05..0.95);
        let (ga, gb) = beta_score_unconstrained(a, b, t);
        let fa = central(|x| beta_log_q(softplus(x), softplus(b), t), a);
        let fb = central(|x| beta_log_q(softplus(a), softplus(x), t), b);
        assert!(rel_err(ga, fa) < 1e-5, "{ga} vs {fa}");
        assert!(rel_err(gb, fb) < 1e-5, "{gb} vs {fb}");
    }
}

#[test]
fn categorical_scores_match_finite_differences() {
    let mut rng = stream(2, &[]);
    for _ in 0..200 {
        let k = rng.random_range(2..6);
        let u: Vec<f64> = (0..k).map(|_| softplus_inv(rng.random_range(0.5..20.0))).collect();
        let z = rng.random_range(0..k);
        let mut g = vec![0.0; k];
        categorical_score_unconstrained(&u, z, &mut g);
        for m in 0..k {
            let f = |x: f64| {
                let mut v = u.clone();
                v[m] = x;
                let s: Vec<f64> = v.iter().map(|&w| softplus(w)).collect();
                let total: f64 = s.iter().sum();
                categorical_log_q(&s.iter().map(|x| x / total).collect::<Vec<_>>(), z)
            };
            assert!(rel_err(g[m], central(f, u[m])) < 1e-5);
        }
    }
}

#[test]
fn dirichlet_scores_match_finite_differences() {
    let mut rng = stream(3, &[]);
    for _ in 0..200 {
        let k = rng.random_range(2..6);
        let u: Vec<f64> = (0..k).map(|_| softplus_inv(rng.random_range(0.5..20.0))).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let pi: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let mut g = vec![0.0; k];
        dirichlet_score_unconstrained(&u, &pi, &mut g);
        for m in 0..k {
            let f = |x: f64| {
                let mut v = u.clone();
                v[m] = x;
                dirichlet_log_q(&v.iter().map(|&w| softplus(w)).collect::<Vec<_>>(), &pi)
            };
            assert!(rel_err(g[m], central(f, u[m])) < 1e-5);
        }
    }
}

#[test]
fn constrained_scores_have_textbook_form() {
    let (ga, gb) = beta_score(2.0, 3.0, 0.4);
    assert!((ga - (0.4f64.ln() + digamma(5.0) - digamma(2.0))).abs() < 1e-14);
    assert!((gb - (0.6f64.ln() + digamma(5.0) - digamma(3.0))).abs() < 1e-14);
    let mut g = vec![0.0; 3];
    categorical_score(&[0.2, 0.5, 0.3], 1, &mut g);
    assert_eq!(g, vec![0.0, 2.0, 0.0]);
    dirichlet_score(&[1.0, 2.0, 3.0], &[0.2, 0.3, 0.5], &mut g);
    assert!((g[2] - (0.5f64.ln() - digamma(3.0) + digamma(6.0))).abs() < 1e-14);
}

/// One object, one labeler, one "yes" to class 0; θ priors concentrated at
/// `θ[0][0] = 0.9`, `θ[1][0] = 0.2`.
fn single_vote_problem(strength: f64, rho: [f64; 2]) -> LabelingProblem {
    let mut votes = VoteTable::new(2);
    votes.insert_yn("L1".into(), "x".into(), 0, ResponsePair::YES).unwrap();
    let mut prior = CredibilityPosterior::new(2);
    let cell = |m: f64| BetaParams::new(m * strength, (1.0 - m) * strength).unwrap();
    prior
        .insert(LabelerId::from("L1"), vec![cell(0.9), cell(0.5), cell(0.2), cell(0.5)])
        .unwrap();
    LabelingProblem::two_stage(&votes, &prior, &ClassPrior::new(rho.to_vec()).unwrap()).unwrap()
}

#[test]
fn elbo_of_exact_posterior_matches_log_evidence() {
    // With concentrated priors the posterior over (Θ, π) is the prior, and the
    // label posterior is (9/11, 2/11); evidence = 0.5·0.9 + 0.5·0.2.
    let problem = single_vote_problem(1e5, [1e5, 1e5]);
    let mut state = VariationalState::initial(&problem, true);
    let offset = state.num_parameters() - 4;
    state.params[offset] = softplus_inv(9.0);
    state.params[offset + 1] = softplus_inv(2.0);
    let p = state.label_probs(0);
    assert!((p[0] - 9.0 / 11.0).abs() < 1e-12);
    let elbo = elbo_estimate(&state, &problem, 20_000, &mut stream(4, &[]));
    assert!((elbo - 0.55f64.ln()).abs() < 0.05, "elbo {elbo}");
}

#[test]
fn elbo_noise_shrinks_with_square_root_of_samples() {
    let problem = single_vote_problem(50.0, [2.0, 3.0]);
    let state = VariationalState::initial(&problem, true);
    let mut rng = stream(5, &[]);
    let mut sd = |s: usize| {
        let xs: Vec<f64> = (0..300).map(|_| elbo_estimate(&state, &problem, s, &mut rng)).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
    };
    let ratio = sd(16) / sd(1024);
    assert!((ratio / 8.0 - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn gradient_vanishes_when_q_equals_prior_without_data() {
    let problem = LabelingProblem {
        num_classes: 2,
        labelers: vec![LabelerId::from("L1")],
        objects: vec![],
        votes: vec![],
        by_object: vec![],
        theta_prior: vec![
            BetaParams::new(2.0, 5.0).unwrap(),
            BetaParams::new(1.5, 1.5).unwrap(),
            BetaParams::new(3.0, 1.0).unwrap(),
            BetaParams::new(0.8, 2.0).unwrap(),
        ],
        rho: vec![2.0, 3.0],
        fixed: vec![],
    };
    let state = VariationalState::initial(&problem, true);
    let mut rng = stream(6, &[]);
    let draws = 10_000;
    let mut sum = vec![0.0; state.num_parameters()];
    let mut sum_sq = vec![0.0; state.num_parameters()];
    for _ in 0..draws / 10 {
        let (g, _) = estimate_gradient(&state, &problem, GradientEstimator::Global, 10, &mut rng).unwrap();
        for ((s, q), x) in sum.iter_mut().zip(&mut sum_sq).zip(&g) {
            *s += x;
            *q += x * x;
        }
    }
    let n = (draws / 10) as f64;
    for (s, q) in sum.iter().zip(&sum_sq) {
        let mean = s / n;
        let se = ((q / n - mean * mean).max(0.0) / n).sqrt();
        assert!(mean.abs() <= 3.0 * se + 1e-9, "mean {mean} se {se}");
    }
}

/// ELBO of `q(θ) = Beta(α, β)` for one known object with one "yes" vote
/// under a `Beta(1,1)` prior: `E[ln θ] + H[q]`.
fn closed_form_elbo(a: f64, b: f64) -> f64 {
    let (alpha, beta) = (softplus(a), softplus(b));
    let e_ln_theta = digamma(alpha) - digamma(alpha + beta);
    let entropy = ln_beta(alpha, beta) - (alpha - 1.0) * digamma(alpha) - (beta - 1.0) * digamma(beta)
        + (alpha + beta - 2.0) * digamma(alpha + beta);
    e_ln_theta + entropy
}

#[test]
fn score_estimator_is_unbiased_on_one_parameter_toy() {
    let mut votes = VoteTable::new(2);
    votes.insert_yn("L1".into(), "x".into(), 0, ResponsePair::YES).unwrap();
    let known: LabelAssignment = [("x".into(), 0)].into_iter().collect();
    let problem = LabelingProblem::joint(&votes, &known, BetaParams::uniform(), &ClassPrior::flat(2)).unwrap();
    let mut state = VariationalState::initial(&problem, false);
    let (a, b) = (softplus_inv(2.5), softplus_inv(1.5));
    state.params[0] = a;
    state.params[1] = b;
    let exact = central(|x| closed_form_elbo(x, b), a);
    let mut rng = stream(7, &[]);
    let batches: Vec<f64> = (0..100)
        .map(|_| estimate_gradient(&state, &problem, GradientEstimator::Global, 1000, &mut rng).unwrap().0[0])
        .collect();
    let mean = batches.iter().sum::<f64>() / 100.0;
    let se = (batches.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 99.0 / 100.0).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "mean {mean} exact {exact} se {se}");
    let local: Vec<f64> = (0..100)
        .map(|_| estimate_gradient(&state, &problem, GradientEstimator::Local, 1000, &mut rng).unwrap().0[0])
        .collect();
    let local_mean = local.iter().sum::<f64>() / 100.0;
    assert!((local_mean - exact).abs() < 3.0 * se.max(1e-3));
}

#[test]
fn converged_labels_match_exact_posterior_on_single_vote() {
    let problem = single_vote_problem(1e4, [1e4, 1e4]);
    let fit = fit_bbvi_problem(problem, &BbviConfig::default()).unwrap();
    let p = fit.labels.get(&"x".into()).unwrap();
    assert!((p[0] - 9.0 / 11.0).abs() < 0.03, "{p:?}");
}

#[test]
fn flat_likelihood_recovers_class_prior() {
    let mut votes = VoteTable::new(2);
    votes.insert_yn("L1".into(), "x".into(), 0, ResponsePair::YES).unwrap();
    votes.insert_yn("L1".into(), "x".into(), 1, ResponsePair::NO).unwrap();
    let prior = CredibilityPosterior::filled(2, [LabelerId::from("L1")].iter(), BetaParams::new(5e4, 5e4).unwrap());
    let rho = ClassPrior::new(vec![20.0, 60.0]).unwrap();
    let fit = fit_bbvi(&votes, &prior, &rho, &BbviConfig::default()).unwrap();
    let p = fit.labels.get(&"x".into()).unwrap();
    assert!((p[0] - 0.25).abs() < 0.02, "{p:?}");
}

#[test]
fn parameter_counts_match_state_layout() {
    let c = SyntheticCampaign::generate(&Scenario::default(), 1).unwrap();
    let split = c.split(36);
    let problem = split.two_stage_problem(BetaParams::uniform()).unwrap();
    let (j, k, n) = (problem.labelers.len(), problem.num_classes, problem.objects.len());
    assert_eq!(VariationalState::initial(&problem, true).num_parameters(), stage2_parameter_count(j, k, n));
    let stage1 = LabelingProblem::joint(&split.votes_known, &split.known, BetaParams::uniform(), &split.rho()).unwrap();
    assert_eq!(VariationalState::initial(&stage1, false).num_parameters(), stage1_parameter_count(j, k));
    assert_eq!(stage2_parameter_count(6, 4, 214), 6 * 16 * 2 + 214 * 4 + 4);
}

#[test]
fn constrained_parameters_stay_positive() {
    let problem = single_vote_problem(5.0, [1.0, 1.0]);
    let mut state = VariationalState::initial(&problem, true);
    let config = BbviConfig {
        rates: LearningRates::global(5.0),
        ..BbviConfig::default()
    };
    let mut opt = AdaGrad::new(state.rate_vector(config.rates));
    let mut rng = stream(8, &[]);
    for _ in 0..200 {
        score_gradient_step(&mut state, &mut opt, &problem, &config, &mut rng).unwrap();
        for c in 0..4 {
            let b = state.beta_params(c);
            assert!(b.alpha > 0.0 && b.beta > 0.0);
        }
        assert!(state.dirichlet_params().iter().all(|&d| d > 0.0));
        let p = state.label_probs(0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn non_finite_parameter_names_its_factor() {
    let problem = single_vote_problem(5.0, [1.0, 1.0]);
    let mut state = VariationalState::initial(&problem, true);
    state.params[2] = f64::NAN;
    match estimate_gradient(&state, &problem, GradientEstimator::Global, 4, &mut stream(9, &[])) {
        Err(Error::NonFinite { factor, .. }) => assert_eq!(factor, "theta[L1,0,1].alpha"),
        other => panic!("expected NonFinite, got {other:?}"),
    }
}

#[test]
fn fixed_seed_is_reproducible() {
    let problem = single_vote_problem(5.0, [1.0, 1.0]);
    let config = BbviConfig {
        max_steps: 50,
        stopping: Stopping::FixedSteps,
        seed: 3,
        ..BbviConfig::default()
    };
    let a = fit_bbvi_problem(problem.clone(), &config).unwrap();
    let b = fit_bbvi_problem(problem, &config).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.elbo_trace, b.elbo_trace);
    assert_eq!(a.steps, 50);
}

fn tiny_instance(seed: u64) -> (VoteTable, CredibilityPosterior, ClassPrior) {
    let mut rng = stream(seed, &[]);
    let mut votes = VoteTable::new(2);
    for j in ["L1", "L2"] {
        for i in ["a", "b", "c"] {
            for k in 0..2 {
                votes
                    .insert_yn(j.into(), i.into(), k, ResponsePair::from_answer(rng.random_bool(0.5)))
                    .unwrap();
            }
        }
    }
    let mut prior = CredibilityPosterior::new(2);
    for j in ["L1", "L2"] {
        prior
            .insert(
                j.into(),
                vec![
                    BetaParams::new(6.0, 2.0).unwrap(),
                    BetaParams::new(2.0, 6.0).unwrap(),
                    BetaParams::new(2.0, 6.0).unwrap(),
                    BetaParams::new(6.0, 2.0).unwrap(),
                ],
            )
            .unwrap();
    }
    (votes, prior, ClassPrior::flat(2))
}

#[test]
fn elbo_moving_average_rises_on_tiny_instance() {
    // Successive window means may only dip by Monte-Carlo noise (3 standard errors).
    let window = 50;
    let mut passing = 0;
    for seed in 0..10 {
        let (votes, prior, rho) = tiny_instance(seed);
        let config = BbviConfig {
            max_steps: 500,
            stopping: Stopping::FixedSteps,
            seed,
            ..BbviConfig::default()
        };
        let fit = fit_bbvi(&votes, &prior, &rho, &config).unwrap();
        let blocks: Vec<(f64, f64)> = fit
            .elbo_trace
            .chunks(window)
            .map(|b| {
                let m = b.iter().sum::<f64>() / b.len() as f64;
                let v = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
                (m, (v / b.len() as f64).sqrt())
            })
            .collect();
        let ok = blocks
            .windows(2)
            .all(|w| w[1].0 >= w[0].0 - 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
        if ok {
            passing += 1;
        }
    }
    assert!(passing >= 9, "{passing}/10 seeds with a rising ELBO");
}

#[test]
fn tiny_instance_agrees_with_gibbs() {
    let mut agree = 0;
    let mut total = 0;
    for seed in 0..10 {
        let (votes, prior, rho) = tiny_instance(seed);
        let chains = ChainConfig {
            n_chains: 4,
            burn_in: 500,
            n_iterations: 5000,
            thinning: 1,
            seed,
        };
        let gibbs = summarize_posterior(&gibbs_fit(&votes, &prior, &rho, &chains).unwrap()).unwrap();
        let bbvi = fit_bbvi(&votes, &prior, &rho, &BbviConfig { seed, ..BbviConfig::default() }).unwrap();
        let (g, b) = (gibbs.labels.argmax(), bbvi.labels.argmax());
        for (o, c) in g.iter() {
            // Near-ties are decided by sampling noise on both sides.
            let p = gibbs.labels.get(o).unwrap();
            if (p[0] - 0.5).abs() < 0.05 {
                continue;
            }
            total += 1;
            agree += (b.get(o) == Some(c)) as usize;
        }
    }
    assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total}");
}

#[test]
fn benchmark_accuracy_close_to_gibbs() {
    let (mut acc_gibbs, mut acc_bbvi) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let c = SyntheticCampaign::generate(&Scenario::default(), seed).unwrap();
        let split = c.split(36);
        let prior = split.credibility_stage(BetaParams::uniform()).unwrap();
        let chains = ChainConfig {
            n_chains: 4,
            burn_in: 500,
            n_iterations: 1000,
            thinning: 1,
            seed,
        };
        let g = summarize_posterior(&gibbs_fit(&split.votes_unknown, &prior, &split.rho(), &chains).unwrap()).unwrap();
        let b = fit_bbvi(&split.votes_unknown, &prior, &split.rho(), &BbviConfig { seed, ..BbviConfig::default() }).unwrap();
        let score = |pred: &LabelAssignment| {
            pred.iter().filter(|(o, z)| split.truth_unknown.get(o) == Some(*z)).count() as f64 / pred.len() as f64
        };
        acc_gibbs += score(&g.labels.argmax());
        acc_bbvi += score(&b.labels.argmax());
    }
    let gap = (acc_gibbs - acc_bbvi) / seeds as f64;
    assert!(gap.abs() < 0.02, "accuracy gap {gap}");
}
