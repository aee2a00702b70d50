use serde::{Deserialize, Serialize};

use super::sampler::PosteriorSamples;
use crate::error::{Error, Result};

/// Traces with a PSRF below this value are treated as converged.
pub const PSRF_THRESHOLD: f64 = 1.1;

/// Shortest trace accepted by [`gelman_rubin`].
pub const MIN_TRACE_LEN: usize = 10;

/// Potential scale reduction factor of `m ≥ 2` equal-length chains.
///
/// With `n` draws per chain, `B = n/(m-1) Σ (x̄_j - x̄)²`, `W` the mean
/// within-chain variance, `V = (n-1)/n W + B/n` and `R = sqrt(V/W)`.
/// Constant traces give 1 when all chains agree and infinity otherwise.
pub fn gelman_rubin(traces: &[Vec<f64>]) -> Result<f64> {
    let m = traces.len();
    if m < 2 {
        return Err(Error::invalid("PSRF needs at least two chains"));
    }
    let n = traces[0].len();
    if traces.iter().any(|t| t.len() != n) {
        return Err(Error::invalid("PSRF traces have different lengths"));
    }
    if n < MIN_TRACE_LEN {
        return Err(Error::invalid(format!("PSRF needs traces of length ≥ {MIN_TRACE_LEN}")));
    }
    let nf = n as f64;
    let means: Vec<f64> = traces.iter().map(|t| t.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let b = nf / (m as f64 - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = traces
        .iter()
        .zip(&means)
        .map(|(t, mean)| t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let v = (nf - 1.0) / nf * w + b / nf;
    Ok((v / w).sqrt())
}

/// Which latent variable a report row describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariableKind {
    Theta {
        labeler: String,
        true_class: usize,
        asked_class: usize,
    },
    Pi {
        class: usize,
    },
    Label {
        object: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub variable: VariableKind,
    pub psrf: f64,
    /// For labels: fraction of chains whose own modal class equals the pooled mode.
    pub agreement: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "snake_case")]
pub enum ReportStatus {
    Complete,
    Refused(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub status: ReportStatus,
    pub n_chains: usize,
    pub n_retained: usize,
    pub rows: Vec<DiagnosticRow>,
}

impl DiagnosticReport {
    pub fn all_converged(&self) -> bool {
        self.status == ReportStatus::Complete && self.rows.iter().all(|r| r.converged)
    }

    /// Largest PSRF over θ and π rows.
    pub fn max_continuous_psrf(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| !matches!(r.variable, VariableKind::Label { .. }))
            .map(|r| r.psrf)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn row(variable: VariableKind, traces: &[Vec<f64>], agreement: Option<f64>) -> Result<DiagnosticRow> {
    let psrf = gelman_rubin(traces)?;
    Ok(DiagnosticRow {
        variable,
        psrf,
        agreement,
        converged: psrf < PSRF_THRESHOLD,
    })
}

fn modal(counts: &[usize]) -> usize {
    // First maximum, so ties resolve to the lowest class.
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// PSRF for every θ cell, every π component and every object label (as the
/// indicator of its pooled modal class). Refuses single-chain or too-short runs.
pub fn diagnose_run(samples: &PosteriorSamples) -> DiagnosticReport {
    let n_chains = samples.n_chains();
    let n_retained = samples.n_retained();
    let refuse = |reason: String| DiagnosticReport {
        status: ReportStatus::Refused(reason),
        n_chains,
        n_retained,
        rows: Vec::new(),
    };
    if n_chains < 2 {
        return refuse("convergence diagnostics need at least two chains".into());
    }
    if n_retained < MIN_TRACE_LEN {
        return refuse(format!("convergence diagnostics need at least {MIN_TRACE_LEN} retained draws per chain"));
    }
    let samples = samples.truncated(n_retained);
    let problem = &samples.problem;
    let k = problem.num_classes;
    let mut rows = Vec::with_capacity(problem.num_cells() + k + problem.objects.len());
    let build = || -> Result<Vec<DiagnosticRow>> {
        let mut rows = Vec::new();
        for (j, labeler) in problem.labelers.iter().enumerate() {
            for t in 0..k {
                for a in 0..k {
                    let cell = problem.cell(j, t, a);
                    let traces: Vec<Vec<f64>> = (0..n_chains).map(|c| samples.theta_trace(c, cell)).collect();
                    let variable = VariableKind::Theta {
                        labeler: labeler.to_string(),
                        true_class: t,
                        asked_class: a,
                    };
                    rows.push(row(variable, &traces, None)?);
                }
            }
        }
        for class in 0..k {
            let traces: Vec<Vec<f64>> = (0..n_chains).map(|c| samples.pi_trace(c, class)).collect();
            rows.push(row(VariableKind::Pi { class }, &traces, None)?);
        }
        for (i, object) in problem.objects.iter().enumerate() {
            let z: Vec<Vec<u16>> = (0..n_chains).map(|c| samples.z_trace(c, i)).collect();
            let mut pooled = vec![0usize; k];
            let mut chain_modes = Vec::with_capacity(n_chains);
            for trace in &z {
                let mut counts = vec![0usize; k];
                for &v in trace {
                    counts[v as usize] += 1;
                }
                chain_modes.push(modal(&counts));
                for (p, c) in pooled.iter_mut().zip(&counts) {
                    *p += c;
                }
            }
            let mode = modal(&pooled);
            let agreement = chain_modes.iter().filter(|&&m| m == mode).count() as f64 / n_chains as f64;
            let traces: Vec<Vec<f64>> = z
                .iter()
                .map(|t| t.iter().map(|&v| if v as usize == mode { 1.0 } else { 0.0 }).collect())
                .collect();
            rows.push(row(VariableKind::Label { object: object.to_string() }, &traces, Some(agreement))?);
        }
        Ok(rows)
    };
    match build() {
        Ok(r) => rows.extend(r),
        Err(e) => return refuse(e.to_string()),
    }
    DiagnosticReport {
        status: ReportStatus::Complete,
        n_chains,
        n_retained,
        rows,
    }
}
