use yn_crowd::benchmark::{Scenario, SyntheticCampaign};
use yn_crowd::experiments::*;
use yn_crowd::gibbs::ChainConfig;
use yn_crowd::model::BetaParams;

fn light() -> ExperimentSettings {
    ExperimentSettings {
        chains: ChainConfig {
            n_chains: 2,
            burn_in: 100,
            n_iterations: 200,
            thinning: 1,
            seed: 0,
        },
        ..ExperimentSettings::default()
    }
}

fn small_campaign(seed: u64) -> SyntheticCampaign {
    let scenario = Scenario {
        n_objects: 120,
        ..Scenario::default()
    };
    SyntheticCampaign::generate(&scenario, seed).unwrap()
}

#[test]
fn sweep_rows_follow_requested_counts() {
    let c = small_campaign(1);
    let rows = known_count_sweep(&c, &[4, 20, 36], &light()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n_known).collect::<Vec<_>>(), vec![4, 20, 36]);
    // More known objects can only add conjugate evidence.
    assert!(rows[2].stage1_mse < rows[0].stage1_mse);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
}

#[test]
fn question_curves_grow_with_answers() {
    let c = small_campaign(2);
    let q = question_curves(&c, 36, &[0.2, 0.6, 1.0], &light()).unwrap();
    assert_eq!(q.yn.len(), 3);
    for curve in [&q.yn, &q.abcd] {
        assert!(curve.windows(2).all(|w| w[0].questions < w[1].questions));
    }
    // All answers: 6 labelers, Random(1,4) → about 15 yes/no and 6 full answers per object.
    assert!((q.yn[2].questions - 15.0).abs() < 1.5, "{}", q.yn[2].questions);
    assert!((q.abcd[2].questions - 6.0).abs() < 1e-9);
}

#[test]
fn convergence_check_validates_sweeps() {
    let c = small_campaign(3);
    let chains = ChainConfig {
        n_chains: 2,
        burn_in: 100,
        n_iterations: 1,
        thinning: 1,
        seed: 0,
    };
    assert!(convergence_check(&c, 36, &chains, 100, 200, BetaParams::uniform()).is_err());
    let row = convergence_check(&c, 36, &chains, 200, 400, BetaParams::uniform()).unwrap();
    assert!(row.max_psrf.is_finite());
}

#[test]
fn average_curves_is_pointwise_mean() {
    use yn_crowd::eval::CurvePoint;
    let a = vec![CurvePoint { questions: 1.0, accuracy: 0.5 }];
    let b = vec![CurvePoint { questions: 3.0, accuracy: 0.7 }];
    let m = average_curves(&[a, b]);
    assert_eq!(m.len(), 1);
    assert!((m[0].questions - 2.0).abs() < 1e-12 && (m[0].accuracy - 0.6).abs() < 1e-12);
}
