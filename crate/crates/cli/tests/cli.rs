#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use yn_crowd::io::{load_classes, load_labels, load_predictions, load_votes, parse_votes};
use yn_crowd::model::{LabelPosterior, ObjectId};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_yn-crowd"))
}

fn run(args: &[&str]) -> Output {
    bin().env_remove("YN_CROWD_THREADS").args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["simulate", "--seed", "7", "--out", s(&a)]);
    ok(&["--seed", "7", "--out", s(&b), "simulate"]);
    ok(&["simulate", "--seed", "8", "--out", s(&c)]);
    let (da, db) = (dir_contents(&a), dir_contents(&b));
    assert_eq!(da.len(), 7);
    assert_eq!(da, db);
    assert_ne!(da["votes.csv"], dir_contents(&c)["votes.csv"]);
    let classes = load_classes(&a.join("classes.csv")).unwrap();
    assert_eq!(load_labels(&a.join("truth.csv"), &classes).unwrap().len(), 250);
    assert_eq!(load_labels(&a.join("known_labels.csv"), &classes).unwrap().len(), 36);
}

/// Exact label marginals of the tiny fixture, with the credibility stage
/// counted by hand from the known objects.
fn fixture_oracle() -> (Vec<ObjectId>, Vec<Vec<f64>>) {
    let dir = tiny();
    let classes = load_classes(&dir.join("classes.csv")).unwrap();
    let known = load_labels(&dir.join("known_labels.csv"), &classes).unwrap();
    let votes = load_votes(&dir.join("votes.csv"), &classes).unwrap();
    let labelers: Vec<_> = votes.labelers().into_iter().collect();
    let unknown: Vec<ObjectId> = votes.objects().into_iter().filter(|o| !known.contains(o)).collect();
    let k = classes.len();
    let mut counts = vec![(1.0, 1.0); labelers.len() * k * k];
    let mut yn = Vec::new();
    for (j, o, asked, r) in votes.yn_votes() {
        let jn = labelers.iter().position(|l| l == j).unwrap();
        match known.get(o) {
            Some(z) => {
                let cell = &mut counts[(jn * k + z) * k + asked];
                if r.is_yes() {
                    cell.0 += 1.0;
                } else {
                    cell.1 += 1.0;
                }
            }
            None => yn.push((jn, unknown.iter().position(|u| u == o).unwrap(), asked, r.is_yes())),
        }
    }
    let rho: Vec<f64> = known.class_counts(k).iter().map(|&c| c as f64 + 1.0).collect();
    let marg = oracle::yn_marginals(&yn, labelers.len(), unknown.len(), k, |j, t, a| counts[(j * k + t) * k + a], &rho);
    (unknown, marg)
}

fn rows(p: &LabelPosterior, objects: &[ObjectId]) -> Vec<Vec<f64>> {
    objects.iter().map(|o| p.get(o).unwrap().to_vec()).collect()
}

#[test]
fn checked_in_oracle_is_current() {
    let (objects, marg) = fixture_oracle();
    let classes = load_classes(&tiny().join("classes.csv")).unwrap();
    let path = tiny().join("oracle_predictions.csv");
    if std::env::var_os("YN_CROWD_BLESS").is_some() {
        let mut p = LabelPosterior::new();
        for (o, m) in objects.iter().zip(&marg) {
            p.insert(o.clone(), m.clone()).unwrap();
        }
        yn_crowd::io::save_predictions(&p, &classes, &path).unwrap();
    }
    let stored = load_predictions(&path, &classes).unwrap();
    assert_eq!(stored.len(), objects.len());
    assert!(oracle::max_tv(&rows(&stored, &objects), &marg) < 1e-8);
}

#[test]
fn gibbs_fit_matches_oracle_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tiny();
    let out = tmp.path().join("fit");
    ok(&[
        "fit",
        "--campaign",
        s(&dir),
        "--backend",
        "gibbs",
        "--config",
        s(&dir.join("config.txt")),
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    let classes = load_classes(&dir.join("classes.csv")).unwrap();
    let fitted = load_predictions(&out.join("predictions.csv"), &classes).unwrap();
    let oracle = load_predictions(&dir.join("oracle_predictions.csv"), &classes).unwrap();
    let objects: Vec<ObjectId> = oracle.iter().map(|(o, _)| o.clone()).collect();
    assert_eq!(fitted.len(), objects.len());
    let tv = oracle::max_tv(&rows(&fitted, &objects), &rows(&oracle, &objects));
    assert!(tv < 0.02, "max TV {tv}");
    for name in ["credibility.csv", "stage1_credibility.csv", "pi.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn bbvi_and_joint_fits_agree_with_oracle_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tiny();
    let classes = load_classes(&dir.join("classes.csv")).unwrap();
    let oracle = load_predictions(&dir.join("oracle_predictions.csv"), &classes).unwrap();
    for (backend, stage) in [("bbvi", "two"), ("gibbs", "joint"), ("bbvi", "joint")] {
        let out = tmp.path().join(format!("{backend}-{stage}"));
        ok(&["fit", "--campaign", s(&dir), "--backend", backend, "--stage", stage, "--out", s(&out)]);
        let fitted = load_predictions(&out.join("predictions.csv"), &classes).unwrap();
        assert_eq!(fitted.len(), oracle.len(), "{backend} {stage}");
        if stage == "two" {
            // Mean-field modes need only match where the exact posterior is decisive.
            for (o, p) in oracle.iter() {
                let mut sorted = p.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                if sorted[0] - sorted[1] > 0.1 {
                    assert_eq!(fitted.argmax().get(o), oracle.argmax().get(o), "{backend} {stage} {o}");
                }
            }
        }
    }
    assert!(tmp.path().join("bbvi-two/elbo.csv").exists());
}

#[test]
fn keep_samples_writes_trace() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fit");
    ok(&["fit", "--campaign", s(&tiny()), "--keep-samples", "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("samples.jsonl")).unwrap();
    // Header plus 4 chains of 1000 retained draws.
    assert_eq!(text.lines().count(), 1 + 4 * 1000);
    let header: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["objects"], serde_json::json!(["u1", "u2", "u3", "u4"]));
    let out = run(&["fit", "--campaign", s(&tiny()), "--backend", "bbvi", "--keep-samples"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_perfect_predictions_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tiny();
    let pred = tmp.path().join("pred.csv");
    std::fs::write(
        &pred,
        "object_id,class_id,probability\nk1,a,1\nk1,b,0\nk1,c,0\nk2,a,0\nk2,b,1\nk2,c,0\nk3,a,0\nk3,b,0\nk3,c,1\n",
    )
    .unwrap();
    let out = tmp.path().join("ev");
    ok(&[
        "evaluate",
        "--predictions",
        s(&pred),
        "--truth",
        s(&dir.join("known_labels.csv")),
        "--classes",
        s(&dir.join("classes.csv")),
        "--out",
        s(&out),
    ]);
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(report.starts_with("metric,value\nn_scored,3\nn_missing,1\naccuracy,1.00000000e0\n"), "{report}");
}

#[test]
fn usage_and_validation_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["fit"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let cfg = tmp.path().join("bad.txt");
    std::fs::write(&cfg, "gibbs.chans = 3\n").unwrap();
    let out = run(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gibbs.chans"));

    let camp = tmp.path().join("camp");
    std::fs::create_dir(&camp).unwrap();
    std::fs::copy(tiny().join("classes.csv"), camp.join("classes.csv")).unwrap();
    std::fs::write(
        camp.join("votes.csv"),
        "labeler_id,object_id,class_id,question_type,response\nL1,o1,a,yn,yes\nL1,o1,a,yn,no\n",
    )
    .unwrap();
    let out = run(&["fit", "--campaign", s(&camp), "--out", s(&tmp.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("votes.csv:3"), "{}", String::from_utf8_lossy(&out.stderr));

    let out = bin()
        .env("YN_CROWD_THREADS", "zero")
        .args(["simulate", "--out", s(&tmp.path().join("z"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["fit", "--campaign", s(&tiny()), "--out", s(&a)]);
    let out = bin()
        .env("YN_CROWD_THREADS", "1")
        .args(["fit", "--campaign", s(&tiny()), "--out", s(&b)])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(dir_contents(&a), dir_contents(&b));
}

#[test]
fn diagnose_reports_every_variable() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    ok(&["diagnose", "--campaign", s(&tiny()), "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("psrf.csv")).unwrap();
    let kinds: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    // 2 labelers × 3×3 cells, 3 proportions, 4 unknown objects.
    assert_eq!(kinds.iter().filter(|k| **k == "theta").count(), 18);
    assert_eq!(kinds.iter().filter(|k| **k == "pi").count(), 3);
    assert_eq!(kinds.iter().filter(|k| **k == "label").count(), 4);

    let cfg = tmp.path().join("one.txt");
    std::fs::write(&cfg, "gibbs.chains = 1\n").unwrap();
    let out = run(&["diagnose", "--campaign", s(&tiny()), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cost_analysis_of_identical_curves_is_zero_at_unit_factor() {
    let tmp = tempfile::tempdir().unwrap();
    let curves = tmp.path().join("curves.csv");
    std::fs::write(&curves, "strategy,questions,accuracy\nyn,1,0.5\nyn,2,0.8\nabcd,1,0.5\nabcd,2,0.8\n").unwrap();
    let out = tmp.path().join("c");
    ok(&["cost-analysis", "--curves", s(&curves), "--factors", "1", "--yn-seconds", "2", "--abcd-seconds", "6", "--out", s(&out)]);
    let text = std::fs::read_to_string(out.join("cost.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.ends_with(",0.00000000e0"), "{line}");
    }
    let time = std::fs::read_to_string(out.join("time_cost.csv")).unwrap();
    assert!(time.contains("abcd,2.00000000e0,1.20000000e1,8.00000000e-1"), "{time}");
}

#[test]
fn export_writes_service_campaign_files() {
    use yn_crowd_service::{BudgetSpec, CampaignSpec, Next, Ordering, Store};
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let store = Store::open(&data).unwrap();
    let spec = CampaignSpec {
        id: "c1".into(),
        classes: load_classes(&tiny().join("classes.csv")).unwrap().classes().to_vec(),
        objects: ["o1", "o2"]
            .iter()
            .map(|o| yn_crowd::io::ObjectRecord {
                id: (*o).into(),
                payload: yn_crowd::io::Payload::None,
            })
            .collect(),
        known: BTreeMap::new(),
        full_unknown: Default::default(),
        seed: 1,
        budget: BudgetSpec { min: 1, max: 1 },
        ordering: Ordering::Uniform,
    };
    store.create(spec).unwrap();
    store.register("c1", "ann").unwrap();
    let Next::Question(q) = store.next_question("c1", "ann").unwrap() else {
        panic!("expected a question")
    };
    store.record_response("c1", "ann", &q.question_token, "yes", None).unwrap();

    let out = tmp.path().join("export");
    ok(&["export", "--data-dir", s(&data), "--campaign", "c1", "--out", s(&out)]);
    let classes = load_classes(&out.join("classes.csv")).unwrap();
    let votes = parse_votes(std::fs::read(out.join("votes.csv")).unwrap().as_slice(), "votes", &classes).unwrap();
    assert_eq!(votes.yn_len(), 1);
    assert_eq!(run(&["export", "--data-dir", s(&data), "--campaign", "nope", "--out", s(&out)]).status.code(), Some(2));
}

#[test]
fn import_legacy_writes_canonical_votes() {
    let tmp = tempfile::tempdir().unwrap();
    let wide = tmp.path().join("wide.csv");
    std::fs::write(&wide, "labeler,object,a,b,c,full\nL1,o1,1,0,,a\nL2,o1,nan,1,,\n").unwrap();
    let out = tmp.path().join("imp");
    ok(&["import-legacy", "--input", s(&wide), "--classes", s(&tiny().join("classes.csv")), "--out", s(&out)]);
    assert_eq!(
        std::fs::read_to_string(out.join("votes.csv")).unwrap(),
        "labeler_id,object_id,class_id,question_type,response\nL1,o1,a,yn,yes\nL1,o1,b,yn,no\nL2,o1,b,yn,yes\nL1,o1,,full,a\n"
    );
}
