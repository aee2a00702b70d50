//! One function per subcommand.

use std::fs::File;
use std::path::{Path, PathBuf};

use yn_crowd::baselines::average_vote;
use yn_crowd::bbvi::{fit_bbvi, fit_bbvi_joint, BbviFit};
use yn_crowd::benchmark::{Scenario, SyntheticCampaign};
use yn_crowd::eval::{
    accuracy, cost_analysis, credibility_mse, crossover, dominates_beyond_crossover, per_class_accuracy, spearman,
    time_cost_table, CostRow, CurvePoint,
};
use yn_crowd::experiments::{
    average_curves, baseline_comparison, convergence_check, known_count_sweep, question_curves,
};
use yn_crowd::gibbs::{
    diagnose_run, fit_credibility_stage, gibbs_fit, gibbs_fit_joint, summarize_posterior, PosteriorSamples,
    PosteriorSummary, ReportStatus, VariableKind,
};
use yn_crowd::io::{
    convert_legacy_votes, fmt_float, load_classes, load_credibility, load_labels, load_predictions, load_theta,
    load_votes, save_classes, save_credibility, save_labels, save_objects, save_predictions, save_theta, save_votes,
    write_samples_jsonl, ObjectRecord, Payload, Rows, TableWriter,
};
use yn_crowd::model::{ClassPrior, ClassSpace, CredibilityPosterior, LabelAssignment, LabelPosterior, VoteTable};
use yn_crowd_service::store::read_log;

use crate::error::{CliError, CliResult};
use crate::settings::Settings;
use crate::{Backend, Command, EvaluateArgs, Experiment, Stage};

pub fn dispatch(command: &Command, settings: &Settings, out: &Path, threads: Option<usize>) -> CliResult<()> {
    match command {
        Command::Simulate => simulate(settings, out),
        Command::Fit {
            campaign,
            backend,
            stage,
            keep_samples,
        } => fit(settings, out, campaign, *backend, *stage, *keep_samples),
        Command::Predict {
            campaign,
            credibility,
            backend,
        } => predict(settings, out, campaign, credibility, *backend),
        Command::Evaluate(args) => evaluate(settings, out, args),
        Command::Diagnose { campaign, stage } => diagnose(settings, out, campaign, *stage),
        Command::CostAnalysis {
            curves,
            factors,
            yn_seconds,
            abcd_seconds,
        } => cost(out, curves, factors, yn_seconds.zip(*abcd_seconds)),
        Command::Serve {
            addr,
            data_dir,
            static_dir,
        } => serve(*addr, data_dir, static_dir.clone(), threads),
        Command::Export { data_dir, campaign } => export(out, data_dir, campaign),
        Command::ImportLegacy { input, classes } => import_legacy(out, input, classes),
    }
}

fn table(out: &Path, name: &str, header: &[&str]) -> CliResult<TableWriter<File>> {
    std::fs::create_dir_all(out)?;
    Ok(TableWriter::new(File::create(out.join(name))?, header)?)
}

fn f(x: f64) -> String {
    fmt_float(x)
}

// -------------------------------------------------------------- campaigns

/// The canonical files of a campaign directory.
pub struct CampaignFiles {
    pub classes: ClassSpace,
    pub votes: VoteTable,
    /// Empty when `known_labels.csv` is absent.
    pub known: LabelAssignment,
}

impl CampaignFiles {
    pub fn load(dir: &Path) -> CliResult<Self> {
        let classes = load_classes(&dir.join("classes.csv"))?;
        let votes = load_votes(&dir.join("votes.csv"), &classes)?;
        let known_path = dir.join("known_labels.csv");
        let known = if known_path.exists() {
            load_labels(&known_path, &classes)?
        } else {
            LabelAssignment::new()
        };
        Ok(Self { classes, votes, known })
    }

    /// Add-one smoothed known class counts.
    pub fn rho(&self) -> ClassPrior {
        ClassPrior::from_counts(&self.known.class_counts(self.classes.len()))
    }

    /// Yes/no votes split into known and unknown objects.
    pub fn split(&self) -> (VoteTable, VoteTable) {
        self.votes.yn_only().partition_by_object(|o| self.known.contains(o))
    }
}

// --------------------------------------------------------------- simulate

fn simulate(settings: &Settings, out: &Path) -> CliResult<()> {
    let c = SyntheticCampaign::generate(&settings.scenario, settings.seed)?;
    let objects: Vec<ObjectRecord> = c
        .truth
        .objects()
        .map(|o| ObjectRecord {
            id: o.clone(),
            payload: Payload::None,
        })
        .collect();
    save_classes(&c.classes, &out.join("classes.csv"))?;
    save_objects(&objects, &out.join("objects.csv"))?;
    save_labels(&c.known_labels(settings.scenario.n_known), &c.classes, &out.join("known_labels.csv"))?;
    save_labels(&c.truth, &c.classes, &out.join("truth.csv"))?;
    save_votes(&c.yn_votes, &c.classes, &out.join("votes.csv"))?;
    save_votes(&c.full_votes, &c.classes, &out.join("full_votes.csv"))?;
    save_theta(&c.true_credibilities(), &c.classes, &out.join("theta.csv"))?;
    Ok(())
}

// -------------------------------------------------------------------- fit

enum Fitted {
    Gibbs(PosteriorSamples, PosteriorSummary),
    Bbvi(BbviFit),
}

impl Fitted {
    fn labels(&self) -> &LabelPosterior {
        match self {
            Fitted::Gibbs(_, s) => &s.labels,
            Fitted::Bbvi(f) => &f.labels,
        }
    }

    fn credibility(&self) -> CredibilityPosterior {
        match self {
            Fitted::Gibbs(_, s) => s.theta.to_beta_posterior(),
            Fitted::Bbvi(f) => f.credibility_posterior(),
        }
    }

    fn pi(&self) -> (&[f64], &[f64]) {
        match self {
            Fitted::Gibbs(_, s) => (&s.pi_mean, &s.pi_variance),
            Fitted::Bbvi(f) => (&f.pi_mean, &f.pi_variance),
        }
    }
}

fn labeling_stage(
    settings: &Settings,
    backend: Backend,
    votes_unknown: &VoteTable,
    prior: &CredibilityPosterior,
    rho: &ClassPrior,
) -> CliResult<Fitted> {
    if votes_unknown.is_empty() {
        return Err(CliError::Usage("no yes/no votes on unknown objects; nothing to label".into()));
    }
    Ok(match backend {
        Backend::Gibbs => {
            let samples = gibbs_fit(votes_unknown, prior, rho, &settings.chains)?;
            let summary = summarize_posterior(&samples)?;
            Fitted::Gibbs(samples, summary)
        }
        Backend::Bbvi => Fitted::Bbvi(fit_bbvi(votes_unknown, prior, rho, &settings.bbvi)?),
    })
}

fn write_fit(out: &Path, classes: &ClassSpace, fitted: &Fitted, keep_samples: bool) -> CliResult<()> {
    save_predictions(fitted.labels(), classes, &out.join("predictions.csv"))?;
    save_credibility(&fitted.credibility(), classes, &out.join("credibility.csv"))?;
    let (mean, var) = fitted.pi();
    let mut w = table(out, "pi.csv", &["class_id", "mean", "variance"])?;
    for (c, (m, v)) in mean.iter().zip(var).enumerate() {
        w.row(&[classes.id(c).to_string(), f(*m), f(*v)])?;
    }
    w.finish()?;
    match fitted {
        Fitted::Gibbs(samples, _) if keep_samples => {
            write_samples_jsonl(samples, classes, File::create(out.join("samples.jsonl"))?)?;
        }
        Fitted::Bbvi(fit) => {
            let mut w = table(out, "elbo.csv", &["step", "elbo"])?;
            for (t, e) in fit.elbo_trace.iter().enumerate() {
                w.row(&[(t + 1).to_string(), f(*e)])?;
            }
            w.finish()?;
            if !fit.converged {
                eprintln!("warning: BBVI stopped at the step limit ({}) before the ELBO plateaued", fit.steps);
            }
        }
        _ => {}
    }
    Ok(())
}

fn fit(
    settings: &Settings,
    out: &Path,
    dir: &Path,
    backend: Backend,
    stage: Stage,
    keep_samples: bool,
) -> CliResult<()> {
    if keep_samples && backend == Backend::Bbvi {
        return Err(CliError::Usage("--keep-samples needs the gibbs backend".into()));
    }
    let campaign = CampaignFiles::load(dir)?;
    let rho = campaign.rho();
    let fitted = match stage {
        Stage::Two => {
            let (votes_known, votes_unknown) = campaign.split();
            let mut stage1 = fit_credibility_stage(&votes_known, &campaign.known, settings.theta_prior)?;
            stage1.ensure_labelers(votes_unknown.labelers().iter(), settings.theta_prior);
            save_credibility(&stage1, &campaign.classes, &out.join("stage1_credibility.csv"))?;
            labeling_stage(settings, backend, &votes_unknown, &stage1, &rho)?
        }
        Stage::Joint => {
            let yn = campaign.votes.yn_only();
            match backend {
                Backend::Gibbs => {
                    let samples = gibbs_fit_joint(&yn, &campaign.known, settings.theta_prior, &rho, &settings.chains)?;
                    let summary = summarize_posterior(&samples)?;
                    Fitted::Gibbs(samples, summary)
                }
                Backend::Bbvi => Fitted::Bbvi(fit_bbvi_joint(
                    &yn,
                    &campaign.known,
                    settings.theta_prior,
                    &rho,
                    &settings.bbvi,
                )?),
            }
        }
    };
    write_fit(out, &campaign.classes, &fitted, keep_samples)
}

fn predict(settings: &Settings, out: &Path, dir: &Path, credibility: &Path, backend: Backend) -> CliResult<()> {
    let campaign = CampaignFiles::load(dir)?;
    let (_, votes_unknown) = campaign.split();
    let mut prior = load_credibility(credibility, &campaign.classes)?;
    prior.ensure_labelers(votes_unknown.labelers().iter(), settings.theta_prior);
    let fitted = labeling_stage(settings, backend, &votes_unknown, &prior, &campaign.rho())?;
    save_predictions(fitted.labels(), &campaign.classes, &out.join("predictions.csv"))?;
    Ok(())
}

// --------------------------------------------------------------- evaluate

fn evaluate(settings: &Settings, out: &Path, args: &EvaluateArgs) -> CliResult<()> {
    match (&args.predictions, args.experiments.is_empty()) {
        (Some(p), _) => score(out, args, p),
        (None, false) => {
            let mut exps = args.experiments.clone();
            exps.sort();
            exps.dedup();
            for e in exps {
                run_experiment(settings, out, e)?;
            }
            Ok(())
        }
        (None, true) => Err(CliError::Usage(
            "evaluate needs --predictions (with --truth and --classes) or --experiments".into(),
        )),
    }
}

fn score(out: &Path, args: &EvaluateArgs, predictions: &Path) -> CliResult<()> {
    let classes = load_classes(args.classes.as_deref().expect("clap requires --classes"))?;
    let truth = load_labels(args.truth.as_deref().expect("clap requires --truth"), &classes)?;
    let pred = load_predictions(predictions, &classes)?.argmax();
    let scored = truth.filtered(|o| pred.contains(o));
    let pred = pred.filtered(|o| scored.contains(o));
    if scored.is_empty() {
        return Err(CliError::Usage("no predicted object has a true label".into()));
    }
    let mut w = table(out, "report.csv", &["metric", "value"])?;
    w.row(&["n_scored", &scored.len().to_string()])?;
    w.row(&["n_missing", &(truth.len() - scored.len()).to_string()])?;
    w.row(&["accuracy", &f(accuracy(&pred, &scored)?)])?;
    for (c, a) in per_class_accuracy(&pred, &scored, classes.len())?.into_iter().enumerate() {
        if let Some(a) = a {
            w.row(&[format!("accuracy_{}", classes.id(c)), f(a)])?;
        }
    }
    if let (Some(cred), Some(theta)) = (&args.credibility, &args.true_theta) {
        let estimated = load_credibility(cred, &classes)?.means();
        let truth = load_theta(theta, &classes)?;
        let mse = credibility_mse(&truth, &estimated)?;
        w.row(&["credibility_mse", &f(mse.aggregate)])?;
        for (j, m) in mse.per_labeler() {
            w.row(&[format!("credibility_mse_{j}"), f(m)])?;
        }
    }
    w.finish()?;
    Ok(())
}

fn campaigns(settings: &Settings, scenario: &Scenario) -> impl Iterator<Item = CliResult<SyntheticCampaign>> {
    let (scenario, first) = (scenario.clone(), settings.seed);
    (0..settings.evaluate.seeds).map(move |s| Ok(SyntheticCampaign::generate(&scenario, first + s)?))
}

fn run_experiment(settings: &Settings, out: &Path, experiment: Experiment) -> CliResult<()> {
    let exp = settings.experiment();
    let ev = &settings.evaluate;
    match experiment {
        Experiment::KnownSweep => {
            let mut w = table(out, "known_sweep.csv", &["seed", "n_known", "accuracy", "stage1_mse", "stage2_mse"])?;
            let n = ev.known_counts.len();
            let mut sums = vec![[0.0; 3]; n];
            let mut finals = (Vec::new(), Vec::new());
            for c in campaigns(settings, &settings.scenario) {
                let rows = known_count_sweep(&c?, &ev.known_counts, &exp)?;
                for (s, r) in sums.iter_mut().zip(&rows) {
                    w.row(&[r.seed.to_string(), r.n_known.to_string(), f(r.accuracy), f(r.stage1_mse), f(r.stage2_mse)])?;
                    s[0] += r.accuracy;
                    s[1] += r.stage1_mse;
                    s[2] += r.stage2_mse;
                }
                let last = rows.last().expect("non-empty known counts");
                finals.0.push(last.accuracy);
                finals.1.push(last.stage1_mse);
            }
            w.finish()?;
            let seeds = ev.seeds as f64;
            let mut w = table(out, "known_sweep_mean.csv", &["n_known", "accuracy", "stage1_mse", "stage2_mse"])?;
            for (count, s) in ev.known_counts.iter().zip(&sums) {
                w.row(&[count.to_string(), f(s[0] / seeds), f(s[1] / seeds), f(s[2] / seeds)])?;
            }
            w.finish()?;
            let mut w = table(out, "known_sweep_correlation.csv", &["n_known", "spearman_accuracy_mse"])?;
            let rho = spearman(&finals.0, &finals.1).map_or_else(|_| "nan".to_string(), f);
            w.row(&[ev.known_counts[n - 1].to_string(), rho])?;
            w.finish()?;
        }
        Experiment::Baselines => {
            let scenario = Scenario {
                n_labelers: settings.scenario.n_labelers.max(Scenario::seven_labelers().n_labelers),
                ..settings.scenario.clone()
            };
            let mut w = table(
                out,
                "baselines.csv",
                &["seed", "yn", "probe_majority", "best_labeler", "average_vote", "full_majority", "abcd"],
            )?;
            let mut per = table(out, "baseline_labelers.csv", &["seed", "labeler_id", "probe_score", "full_score"])?;
            for c in campaigns(settings, &scenario) {
                let r = baseline_comparison(&c?, ev.known, &exp)?;
                w.row(&[
                    r.seed.to_string(),
                    f(r.yn_accuracy),
                    f(r.probe_majority_accuracy),
                    f(r.best_labeler),
                    f(average_vote(&r.labeler_scores)),
                    f(r.full_majority_accuracy),
                    f(r.abcd_accuracy),
                ])?;
                for (j, s) in &r.labeler_scores {
                    let full = r.labeler_full_scores.get(j).map_or_else(String::new, |x| f(*x));
                    per.row(&[r.seed.to_string(), j.to_string(), f(*s), full])?;
                }
            }
            w.finish()?;
            per.finish()?;
        }
        Experiment::Curves => {
            let mut w = table(out, "curves_by_seed.csv", &["seed", "strategy", "questions", "accuracy"])?;
            let (mut yn, mut abcd) = (Vec::new(), Vec::new());
            for c in campaigns(settings, &settings.scenario) {
                let q = question_curves(&c?, ev.known, &ev.fractions, &exp)?;
                for (name, curve) in [("yn", &q.yn), ("abcd", &q.abcd)] {
                    for p in curve {
                        w.row(&[q.seed.to_string(), name.to_string(), f(p.questions), f(p.accuracy)])?;
                    }
                }
                yn.push(q.yn);
                abcd.push(q.abcd);
            }
            w.finish()?;
            let (yn, abcd) = (average_curves(&yn), average_curves(&abcd));
            write_curves(out, &yn, &abcd)?;
            write_cost(out, &cost_analysis(&yn, &abcd, &ev.factors)?, &ev.factors)?;
        }
        Experiment::Convergence => {
            let cv = &settings.convergence;
            let mut w = table(
                out,
                "convergence.csv",
                &["seed", "max_psrf", "all_continuous_converged", "short_accuracy", "long_accuracy"],
            )?;
            for c in campaigns(settings, &settings.scenario) {
                let r = convergence_check(&c?, ev.known, &cv.chains, cv.short, cv.long, settings.theta_prior)?;
                w.row(&[
                    r.seed.to_string(),
                    f(r.max_psrf),
                    r.all_continuous_converged.to_string(),
                    f(r.short_accuracy),
                    f(r.long_accuracy),
                ])?;
            }
            w.finish()?;
        }
    }
    Ok(())
}

fn write_curves(out: &Path, yn: &[CurvePoint], abcd: &[CurvePoint]) -> CliResult<()> {
    let mut w = table(out, "curves.csv", &["strategy", "questions", "accuracy"])?;
    for (name, curve) in [("yn", yn), ("abcd", abcd)] {
        for p in curve {
            w.row(&[name.to_string(), f(p.questions), f(p.accuracy)])?;
        }
    }
    w.finish()?;
    Ok(())
}

fn write_cost(out: &Path, rows: &[CostRow], factors: &[f64]) -> CliResult<()> {
    let mut w = table(
        out,
        "cost.csv",
        &["factor", "equivalent_questions", "yn_accuracy", "abcd_accuracy", "difference"],
    )?;
    for r in rows {
        w.row(&[f(r.factor), f(r.equivalent_questions), f(r.yn_accuracy), f(r.abcd_accuracy), f(r.difference)])?;
    }
    w.finish()?;
    let mut w = table(out, "cost_summary.csv", &["factor", "crossover", "dominates_beyond_crossover"])?;
    for &e in factors {
        let rows: Vec<CostRow> = rows.iter().filter(|r| r.factor == e).copied().collect();
        let cross = crossover(&rows).map_or_else(String::new, f);
        w.row(&[f(e), cross, dominates_beyond_crossover(&rows, 0.0).to_string()])?;
    }
    w.finish()?;
    Ok(())
}

// ----------------------------------------------------------- cost-analysis

pub fn load_curves(path: &Path) -> CliResult<(Vec<CurvePoint>, Vec<CurvePoint>)> {
    let rows = Rows::open(path, &["strategy", "questions", "accuracy"])?;
    let (mut yn, mut abcd) = (Vec::new(), Vec::new());
    rows.each(|ctx, fields| {
        let p = CurvePoint {
            questions: ctx.float(fields[1], "question count")?,
            accuracy: ctx.float(fields[2], "accuracy")?,
        };
        match fields[0] {
            "yn" => yn.push(p),
            "abcd" => abcd.push(p),
            other => return Err(ctx.error(format!("unknown strategy {other:?}; expected yn or abcd"))),
        }
        Ok(())
    })?;
    if yn.is_empty() || abcd.is_empty() {
        return Err(CliError::Usage(format!("{}: needs both yn and abcd rows", path.display())));
    }
    Ok((yn, abcd))
}

fn cost(out: &Path, curves: &Path, factors: &[f64], seconds: Option<(f64, f64)>) -> CliResult<()> {
    let (yn, abcd) = load_curves(curves)?;
    write_cost(out, &cost_analysis(&yn, &abcd, factors)?, factors)?;
    if let Some((yn_s, abcd_s)) = seconds {
        let mut w = table(out, "time_cost.csv", &["strategy", "questions", "seconds", "accuracy"])?;
        for r in time_cost_table(&yn, &abcd, yn_s, abcd_s)? {
            w.row(&[r.strategy, f(r.questions), f(r.seconds), f(r.accuracy)])?;
        }
        w.finish()?;
    }
    Ok(())
}

// --------------------------------------------------------------- diagnose

fn diagnose(settings: &Settings, out: &Path, dir: &Path, stage: Stage) -> CliResult<()> {
    let campaign = CampaignFiles::load(dir)?;
    let rho = campaign.rho();
    let samples = match stage {
        Stage::Two => {
            let (votes_known, votes_unknown) = campaign.split();
            let mut stage1 = fit_credibility_stage(&votes_known, &campaign.known, settings.theta_prior)?;
            stage1.ensure_labelers(votes_unknown.labelers().iter(), settings.theta_prior);
            gibbs_fit(&votes_unknown, &stage1, &rho, &settings.chains)?
        }
        Stage::Joint => gibbs_fit_joint(
            &campaign.votes.yn_only(),
            &campaign.known,
            settings.theta_prior,
            &rho,
            &settings.chains,
        )?,
    };
    let report = diagnose_run(&samples);
    if let ReportStatus::Refused(reason) = &report.status {
        return Err(CliError::Usage(format!("diagnostics refused: {reason}")));
    }
    let classes = &campaign.classes;
    let mut w = table(
        out,
        "psrf.csv",
        &[
            "kind",
            "labeler_id",
            "true_class_id",
            "asked_class_id",
            "class_id",
            "object_id",
            "psrf",
            "agreement",
            "converged",
        ],
    )?;
    for r in &report.rows {
        let mut fields = vec![String::new(); 6];
        match &r.variable {
            VariableKind::Theta {
                labeler,
                true_class,
                asked_class,
            } => {
                fields[0] = "theta".into();
                fields[1] = labeler.clone();
                fields[2] = classes.id(*true_class).into();
                fields[3] = classes.id(*asked_class).into();
            }
            VariableKind::Pi { class } => {
                fields[0] = "pi".into();
                fields[4] = classes.id(*class).into();
            }
            VariableKind::Label { object } => {
                fields[0] = "label".into();
                fields[5] = object.clone();
            }
        }
        fields.push(f(r.psrf));
        fields.push(r.agreement.map_or_else(String::new, f));
        fields.push(r.converged.to_string());
        w.row(&fields)?;
    }
    w.finish()?;
    eprintln!(
        "{} chains x {} draws; max theta/pi PSRF {:.4}; all converged: {}",
        report.n_chains,
        report.n_retained,
        report.max_continuous_psrf(),
        report.all_converged()
    );
    Ok(())
}

// ------------------------------------------------------- service and files

fn serve(
    addr: std::net::SocketAddr,
    data_dir: &Path,
    static_dir: Option<PathBuf>,
    threads: Option<usize>,
) -> CliResult<()> {
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = threads {
        rt.worker_threads(n);
    }
    let rt = rt.enable_all().build()?;
    rt.block_on(yn_crowd_service::serve(addr, data_dir.to_path_buf(), static_dir))?;
    Ok(())
}

fn export(out: &Path, data_dir: &Path, campaign: &str) -> CliResult<()> {
    if !yn_crowd::io::is_valid_id(campaign) {
        return Err(CliError::Usage(format!("invalid campaign id {campaign:?}")));
    }
    let state = read_log(&data_dir.join(format!("{campaign}.jsonl")))?;
    let bundle = yn_crowd_service::export(&state)?;
    std::fs::create_dir_all(out)?;
    for (name, body) in &bundle.files {
        std::fs::write(out.join(name), body)?;
    }
    Ok(())
}

fn import_legacy(out: &Path, input: &Path, classes: &Path) -> CliResult<()> {
    let classes = load_classes(classes)?;
    let file = File::open(input).map_err(|e| yn_crowd::Error::Format {
        path: input.display().to_string(),
        line: 0,
        message: e.to_string(),
    })?;
    let votes = convert_legacy_votes(file, &input.display().to_string(), &classes)?;
    save_classes(&classes, &out.join("classes.csv"))?;
    save_votes(&votes, &classes, &out.join("votes.csv"))?;
    Ok(())
}
