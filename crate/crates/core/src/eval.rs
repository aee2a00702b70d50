//! Accuracy, credibility recovery and question-cost metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Credibilities, LabelAssignment, LabelerId};

/// Fraction of objects whose predicted class equals the truth. Both
/// assignments must cover the same objects.
pub fn accuracy(pred: &LabelAssignment, truth: &LabelAssignment) -> Result<f64> {
    if pred.len() != truth.len() || pred.objects().any(|o| !truth.contains(o)) {
        return Err(Error::consistency(format!(
            "prediction covers {} objects, truth {}; object sets differ",
            pred.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::invalid("accuracy of an empty assignment"));
    }
    let hits = pred.iter().filter(|(o, c)| truth.get(o) == Some(*c)).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy over the objects of each true class; `None` for absent classes.
pub fn per_class_accuracy(pred: &LabelAssignment, truth: &LabelAssignment, k: usize) -> Result<Vec<Option<f64>>> {
    accuracy(pred, truth)?;
    let mut hits = vec![0usize; k];
    let mut totals = vec![0usize; k];
    for (o, z) in truth.iter() {
        if z >= k {
            return Err(Error::invalid(format!("class index {z} out of range")));
        }
        totals[z] += 1;
        hits[z] += (pred.get(o) == Some(z)) as usize;
    }
    Ok(hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect())
}

/// Squared errors of estimated credibilities against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    /// Per labeler, the `K×K` squared errors in row-major order.
    pub cells: BTreeMap<LabelerId, Vec<f64>>,
    /// Mean over all cells of all labelers.
    pub aggregate: f64,
}

impl MseReport {
    /// Mean squared error of one labeler's row `true_class`.
    pub fn row(&self, labeler: &LabelerId, true_class: usize) -> Option<f64> {
        let cells = self.cells.get(labeler)?;
        let k = (cells.len() as f64).sqrt() as usize;
        let row = cells.get(true_class * k..(true_class + 1) * k)?;
        Some(row.iter().sum::<f64>() / k as f64)
    }

    /// Mean squared error of each labeler.
    pub fn per_labeler(&self) -> BTreeMap<LabelerId, f64> {
        self.cells
            .iter()
            .map(|(j, c)| (j.clone(), c.iter().sum::<f64>() / c.len() as f64))
            .collect()
    }
}

/// MSE between true credibility matrices and estimates (posterior means).
/// Every labeler of `truth` must be estimated with the same `K`.
pub fn credibility_mse(truth: &Credibilities, estimated: &Credibilities) -> Result<MseReport> {
    let mut cells = BTreeMap::new();
    let mut total = 0.0;
    let mut n = 0usize;
    for (j, t) in truth {
        let e = estimated
            .get(j)
            .ok_or_else(|| Error::consistency(format!("no estimate for labeler {j}")))?;
        if e.num_classes() != t.num_classes() {
            return Err(Error::consistency(format!("dimension mismatch for labeler {j}")));
        }
        let sq: Vec<f64> = t.values().iter().zip(e.values()).map(|(a, b)| (a - b).powi(2)).collect();
        total += sq.iter().sum::<f64>();
        n += sq.len();
        cells.insert(j.clone(), sq);
    }
    if n == 0 {
        return Err(Error::invalid("no credibility cells to compare"));
    }
    Ok(MseReport {
        cells,
        aggregate: total / n as f64,
    })
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && x[order[end + 1]] == x[order[start]] {
            end += 1;
        }
        // Tied values share the average of their 1-based ranks.
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = rank;
        }
        start = end + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("Spearman correlation needs two equal-length series of length ≥ 2"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("Spearman correlation of a constant series"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Accuracy measured after a given number of questions per object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub questions: f64,
    pub accuracy: f64,
}

/// One row of the question-cost comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    /// Yes/no answers assumed to cost as much as one full answer.
    pub factor: f64,
    /// Yes/no questions divided by `factor`.
    pub equivalent_questions: f64,
    pub yn_accuracy: f64,
    /// Full-question accuracy interpolated at `equivalent_questions`.
    pub abcd_accuracy: f64,
    pub difference: f64,
}

/// Piecewise-linear interpolation of a curve sorted by `questions`, clamped
/// to the end values outside its range.
pub fn interpolate(curve: &[CurvePoint], x: f64) -> f64 {
    let first = curve[0];
    let last = curve[curve.len() - 1];
    if x <= first.questions {
        return first.accuracy;
    }
    if x >= last.questions {
        return last.accuracy;
    }
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x <= b.questions {
            if b.questions == a.questions {
                return b.accuracy;
            }
            let t = (x - a.questions) / (b.questions - a.questions);
            return a.accuracy + t * (b.accuracy - a.accuracy);
        }
    }
    last.accuracy
}

fn sorted(curve: &[CurvePoint]) -> Result<Vec<CurvePoint>> {
    if curve.is_empty() {
        return Err(Error::invalid("empty accuracy curve"));
    }
    let mut c = curve.to_vec();
    c.sort_by(|a, b| a.questions.total_cmp(&b.questions));
    Ok(c)
}

/// Rescales the yes/no curve by each equivalence factor and compares it with
/// the full-question curve at the same equivalent cost.
pub fn cost_analysis(yn: &[CurvePoint], abcd: &[CurvePoint], factors: &[f64]) -> Result<Vec<CostRow>> {
    let yn = sorted(yn)?;
    let abcd = sorted(abcd)?;
    let mut rows = Vec::with_capacity(yn.len() * factors.len());
    for &e in factors {
        if !(e > 0.0) {
            return Err(Error::domain(format!("equivalence factor must be positive, got {e}")));
        }
        for p in &yn {
            let x = p.questions / e;
            let other = interpolate(&abcd, x);
            rows.push(CostRow {
                factor: e,
                equivalent_questions: x,
                yn_accuracy: p.accuracy,
                abcd_accuracy: other,
                difference: p.accuracy - other,
            });
        }
    }
    Ok(rows)
}

/// First equivalent cost at which the yes/no curve matches or beats the
/// full-question curve, among the rows of one factor.
pub fn crossover(rows: &[CostRow]) -> Option<f64> {
    rows.iter().find(|r| r.difference >= 0.0).map(|r| r.equivalent_questions)
}

/// True when every row at or after the crossover has a non-negative
/// difference (within `tolerance`). False when there is no crossover.
pub fn dominates_beyond_crossover(rows: &[CostRow], tolerance: f64) -> bool {
    match rows.iter().position(|r| r.difference >= 0.0) {
        Some(start) => rows[start..].iter().all(|r| r.difference >= -tolerance),
        None => false,
    }
}

/// Accuracy against total labeling time for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCostRow {
    pub strategy: String,
    pub questions: f64,
    pub seconds: f64,
    pub accuracy: f64,
}

/// Converts both curves to time using measured seconds per question.
pub fn time_cost_table(
    yn: &[CurvePoint],
    abcd: &[CurvePoint],
    yn_seconds_per_question: f64,
    abcd_seconds_per_question: f64,
) -> Result<Vec<TimeCostRow>> {
    if !(yn_seconds_per_question > 0.0 && abcd_seconds_per_question > 0.0) {
        return Err(Error::domain("seconds per question must be positive"));
    }
    let mut out = Vec::new();
    for (name, curve, secs) in [("yn", yn, yn_seconds_per_question), ("abcd", abcd, abcd_seconds_per_question)] {
        for p in sorted(curve)? {
            out.push(TimeCostRow {
                strategy: name.to_string(),
                questions: p.questions,
                seconds: p.questions * secs,
                accuracy: p.accuracy,
            });
        }
    }
    Ok(out)
}
