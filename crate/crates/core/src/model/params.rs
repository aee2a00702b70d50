use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::votes::LabelerId;
use crate::error::{Error, Result};

/// Probabilities are kept inside `[THETA_EPS, 1 - THETA_EPS]`.
pub const THETA_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::domain(format!(
                "Beta parameters must be positive and finite, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    /// Beta(1, 1).
    pub fn uniform() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    /// Beta(0.5, 0.5).
    pub fn jeffreys() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.5,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.alpha * self.beta / (s * s * (s + 1.0))
    }

    /// Conjugate update with `yes` successes and `no` failures.
    pub fn updated(&self, yes: f64, no: f64) -> Self {
        Self {
            alpha: self.alpha + yes,
            beta: self.beta + no,
        }
    }
}

/// A labeler's `K×K` credibility grid. `theta[k][k']` is the probability of
/// answering "yes" to a class-`k'` question when the true class is `k`.
/// Rows are not normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredibilityMatrix {
    k: usize,
    values: Vec<f64>,
}

impl CredibilityMatrix {
    /// Builds a matrix from row-major values, clamping into the open interval.
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != k * k {
            return Err(Error::invalid(format!(
                "credibility matrix for K={k} needs {} values, got {}",
                k * k,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!("credibility value {v} outside [0,1]")));
        }
        let values = values
            .into_iter()
            .map(|v| v.clamp(THETA_EPS, 1.0 - THETA_EPS))
            .collect();
        Ok(Self { k, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("credibility rows must form a square grid"));
        }
        Self::new(k, rows.concat())
    }

    pub fn constant(k: usize, value: f64) -> Result<Self> {
        Self::new(k, vec![value; k * k])
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, true_class: usize, asked_class: usize) -> f64 {
        self.values[true_class * self.k + asked_class]
    }

    pub fn row(&self, true_class: usize) -> &[f64] {
        &self.values[true_class * self.k..(true_class + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-labeler credibility matrices.
pub type Credibilities = BTreeMap<LabelerId, CredibilityMatrix>;

/// Beta posterior (or prior) for every credibility cell of every labeler.
#[derive(Debug, Clone, PartialEq)]
pub struct CredibilityPosterior {
    k: usize,
    cells: BTreeMap<LabelerId, Vec<BetaParams>>,
}

impl CredibilityPosterior {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            cells: BTreeMap::new(),
        }
    }

    /// Every listed labeler gets `prior` in every cell.
    pub fn filled<'a>(k: usize, labelers: impl IntoIterator<Item = &'a LabelerId>, prior: BetaParams) -> Self {
        let mut out = Self::new(k);
        for j in labelers {
            out.cells.insert(j.clone(), vec![prior; k * k]);
        }
        out
    }

    pub fn insert(&mut self, labeler: LabelerId, grid: Vec<BetaParams>) -> Result<()> {
        if grid.len() != self.k * self.k {
            return Err(Error::invalid(format!(
                "credibility grid for labeler {labeler} has {} cells, expected {}",
                grid.len(),
                self.k * self.k
            )));
        }
        self.cells.insert(labeler, grid);
        Ok(())
    }

    /// Adds `prior` grids for labelers that are not yet covered.
    pub fn ensure_labelers<'a>(&mut self, labelers: impl IntoIterator<Item = &'a LabelerId>, prior: BetaParams) {
        for j in labelers {
            self.cells
                .entry(j.clone())
                .or_insert_with(|| vec![prior; self.k * self.k]);
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn labelers(&self) -> impl Iterator<Item = &LabelerId> {
        self.cells.keys()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn grid(&self, labeler: &LabelerId) -> Option<&[BetaParams]> {
        self.cells.get(labeler).map(Vec::as_slice)
    }

    pub fn cell(&self, labeler: &LabelerId, true_class: usize, asked_class: usize) -> Option<BetaParams> {
        self.grid(labeler).map(|g| g[true_class * self.k + asked_class])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LabelerId, &[BetaParams])> {
        self.cells.iter().map(|(j, g)| (j, g.as_slice()))
    }

    /// Posterior-mean credibility matrices.
    pub fn means(&self) -> Credibilities {
        self.cells
            .iter()
            .map(|(j, g)| {
                let values = g.iter().map(BetaParams::mean).collect();
                (j.clone(), CredibilityMatrix::new(self.k, values).expect("Beta means lie in (0,1)"))
            })
            .collect()
    }
}

/// Dirichlet hyperparameters `ρ` for the class proportions, with an optional
/// fixed proportion vector `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrior {
    rho: Vec<f64>,
    pi: Option<Vec<f64>>,
}

impl ClassPrior {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.len() < 2 || rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::domain(format!(
                "Dirichlet hyperparameters must be ≥2 positive values, got {rho:?}"
            )));
        }
        Ok(Self { rho, pi: None })
    }

    pub fn flat(k: usize) -> Self {
        Self {
            rho: vec![1.0; k],
            pi: None,
        }
    }

    pub fn with_pi(mut self, pi: Vec<f64>) -> Result<Self> {
        check_simplex(&pi)?;
        if pi.len() != self.rho.len() {
            return Err(Error::invalid("π and ρ lengths differ"));
        }
        self.pi = Some(pi);
        Ok(self)
    }

    /// Add-one smoothed class counts of the known labels.
    pub fn from_counts(counts: &[usize]) -> Self {
        Self {
            rho: counts.iter().map(|&c| c as f64 + 1.0).collect(),
            pi: None,
        }
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn pi(&self) -> Option<&[f64]> {
        self.pi.as_deref()
    }

    /// `ρ / Σρ`.
    pub fn mean(&self) -> Vec<f64> {
        let total: f64 = self.rho.iter().sum();
        self.rho.iter().map(|r| r / total).collect()
    }
}

/// Checks that `p` is non-negative and sums to one within `1e-9`.
pub(crate) fn check_simplex(p: &[f64]) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::domain(format!("probability vector {p:?} has negative entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("probability vector sums to {total}, not 1")));
    }
    Ok(())
}
