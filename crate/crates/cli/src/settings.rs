//! Settings resolved from the config file, the seed flag and defaults.
//!
//! Recognised keys (all optional):
//!
//! ```text
//! seed                              overridden by --seed
//! scenario.labelers  scenario.classes  scenario.objects  scenario.known
//! scenario.budget_min  scenario.budget_max  scenario.max_expert_classes
//! scenario.pi                       comma-separated class proportions
//! prior.alpha  prior.beta           Beta prior of every credibility cell
//! gibbs.chains  gibbs.burn_in  gibbs.iterations  gibbs.thinning
//! bbvi.samples  bbvi.max_steps  bbvi.rate  bbvi.window  bbvi.tolerance
//! bbvi.estimator                    global | local
//! abcd.row_prior                    Dirichlet pseudo-count per confusion cell
//! evaluate.seeds                    seeds per experiment
//! evaluate.known_counts             known-object counts of the sweep
//! evaluate.known                    known objects for baselines and curves
//! evaluate.fractions                answer fractions of the curves
//! evaluate.factors                  equivalence factors of the cost table
//! convergence.chains  convergence.burn_in  convergence.short  convergence.long
//! ```

use std::path::Path;

use yn_crowd::bbvi::{BbviConfig, GradientEstimator, LearningRates, Stopping};
use yn_crowd::benchmark::Scenario;
use yn_crowd::config::Config;
use yn_crowd::experiments::ExperimentSettings;
use yn_crowd::gibbs::ChainConfig;
use yn_crowd::model::BetaParams;
use yn_crowd::simulation::QuestionBudget;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSettings {
    pub seeds: u64,
    pub known_counts: Vec<usize>,
    pub known: usize,
    pub fractions: Vec<f64>,
    pub factors: Vec<f64>,
}

impl Default for EvaluateSettings {
    fn default() -> Self {
        Self {
            seeds: 20,
            known_counts: vec![2, 4, 8, 12, 16, 20, 24, 28, 32, 36],
            known: 36,
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            factors: vec![1.0, 2.0, 3.0, 4.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSettings {
    pub chains: ChainConfig,
    /// Sweep counts, burn-in included.
    pub short: usize,
    pub long: usize,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            chains: ChainConfig::default(),
            short: 3000,
            long: 6000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub scenario: Scenario,
    pub theta_prior: BetaParams,
    pub chains: ChainConfig,
    pub bbvi: BbviConfig,
    pub abcd_row_prior: f64,
    pub evaluate: EvaluateSettings,
    pub convergence: ConvergenceSettings,
}

impl Default for Settings {
    fn default() -> Self {
        let exp = ExperimentSettings::default();
        Self {
            seed: 0,
            scenario: Scenario::default(),
            theta_prior: exp.theta_prior,
            chains: exp.chains,
            bbvi: exp.bbvi,
            abcd_row_prior: exp.abcd_row_prior,
            evaluate: EvaluateSettings::default(),
            convergence: ConvergenceSettings::default(),
        }
    }
}

impl Settings {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> CliResult<Self> {
        let config = match path {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let mut s = Self::from_config(&config)?;
        if let Some(seed) = seed {
            s.seed = seed;
        }
        s.chains.seed = s.seed;
        s.bbvi.seed = s.seed;
        s.convergence.chains.seed = s.seed;
        Ok(s)
    }

    pub fn from_config(c: &Config) -> CliResult<Self> {
        let d = Self::default();
        let sc = &d.scenario;
        let n_classes = c.get_or("scenario.classes", sc.n_classes)?;
        let budget = match (c.get::<usize>("scenario.budget_min")?, c.get::<usize>("scenario.budget_max")?) {
            (None, None) => sc.budget,
            (min, max) => QuestionBudget::random(min.unwrap_or(1), max.unwrap_or(n_classes)),
        };
        let scenario = Scenario {
            n_labelers: c.get_or("scenario.labelers", sc.n_labelers)?,
            n_classes,
            n_objects: c.get_or("scenario.objects", sc.n_objects)?,
            n_known: c.get_or("scenario.known", sc.n_known)?,
            budget,
            max_expert_classes: c.get_or("scenario.max_expert_classes", sc.max_expert_classes)?,
            pi_true: c.get_list("scenario.pi")?.unwrap_or_else(|| vec![1.0 / n_classes as f64; n_classes]),
        };
        scenario.validate()?;

        let theta_prior = BetaParams::new(
            c.get_or("prior.alpha", d.theta_prior.alpha)?,
            c.get_or("prior.beta", d.theta_prior.beta)?,
        )?;
        let chains = ChainConfig {
            n_chains: c.get_or("gibbs.chains", d.chains.n_chains)?,
            burn_in: c.get_or("gibbs.burn_in", d.chains.burn_in)?,
            n_iterations: c.get_or("gibbs.iterations", d.chains.n_iterations)?,
            thinning: c.get_or("gibbs.thinning", d.chains.thinning)?,
            seed: 0,
        };
        chains.validate()?;

        let (window, tolerance) = match d.bbvi.stopping {
            Stopping::Plateau { window, tolerance } => (window, tolerance),
            Stopping::FixedSteps => unreachable!("default stopping is a plateau"),
        };
        let estimator = match c.raw("bbvi.estimator") {
            None | Some("global") => GradientEstimator::Global,
            Some("local") => GradientEstimator::Local,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "bbvi.estimator must be global or local, got {other:?}"
                )))
            }
        };
        let bbvi = BbviConfig {
            samples: c.get_or("bbvi.samples", d.bbvi.samples)?,
            max_steps: c.get_or("bbvi.max_steps", d.bbvi.max_steps)?,
            stopping: Stopping::Plateau {
                window: c.get_or("bbvi.window", window)?,
                tolerance: c.get_or("bbvi.tolerance", tolerance)?,
            },
            rates: LearningRates::global(c.get_or("bbvi.rate", d.bbvi.rates.theta)?),
            estimator,
            seed: 0,
        };
        bbvi.validate()?;

        let abcd_row_prior = c.get_or("abcd.row_prior", d.abcd_row_prior)?;
        if !(abcd_row_prior > 0.0) {
            return Err(CliError::Usage("abcd.row_prior must be positive".into()));
        }

        let e = &d.evaluate;
        let evaluate = EvaluateSettings {
            seeds: c.get_or("evaluate.seeds", e.seeds)?,
            known_counts: c.get_list("evaluate.known_counts")?.unwrap_or_else(|| e.known_counts.clone()),
            known: c.get_or("evaluate.known", e.known)?,
            fractions: c.get_list("evaluate.fractions")?.unwrap_or_else(|| e.fractions.clone()),
            factors: c.get_list("evaluate.factors")?.unwrap_or_else(|| e.factors.clone()),
        };
        if evaluate.seeds == 0 || evaluate.known_counts.is_empty() || evaluate.fractions.is_empty() {
            return Err(CliError::Usage("evaluate needs seeds, known counts and fractions".into()));
        }
        if evaluate.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(CliError::Usage("evaluate.fractions must lie in (0, 1]".into()));
        }

        let cv = &d.convergence;
        let convergence = ConvergenceSettings {
            chains: ChainConfig {
                n_chains: c.get_or("convergence.chains", cv.chains.n_chains)?,
                burn_in: c.get_or("convergence.burn_in", cv.chains.burn_in)?,
                ..cv.chains
            },
            short: c.get_or("convergence.short", cv.short)?,
            long: c.get_or("convergence.long", cv.long)?,
        };

        let seed = c.get_or("seed", 0)?;
        c.finish()?;
        Ok(Self {
            seed,
            scenario,
            theta_prior,
            chains,
            bbvi,
            abcd_row_prior,
            evaluate,
            convergence,
        })
    }

    pub fn experiment(&self) -> ExperimentSettings {
        ExperimentSettings {
            chains: self.chains,
            theta_prior: self.theta_prior,
            abcd_row_prior: self.abcd_row_prior,
            bbvi: self.bbvi,
        }
    }
}
