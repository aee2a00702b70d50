//! Brute-force posteriors for tiny instances, computed by enumerating every
//! label vector with all continuous parameters integrated out analytically.

#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

/// A yes/no answer `(labeler, object, asked class, yes)` by dense index.
pub type YnVote = (usize, usize, usize, bool);
/// A full answer `(labeler, object, chosen class)` by dense index.
pub type FullVote = (usize, usize, usize);

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln` of the Dirichlet-multinomial probability of one ordered sequence
/// with the given counts.
fn ln_dirichlet_multinomial(alpha: &[f64], counts: &[usize]) -> f64 {
    let a: f64 = alpha.iter().sum();
    let n: usize = counts.iter().sum();
    let mut out = ln_gamma(a) - ln_gamma(a + n as f64);
    for (&al, &c) in alpha.iter().zip(counts) {
        out += ln_gamma(al + c as f64) - ln_gamma(al);
    }
    out
}

fn assignments(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..k.pow(n as u32)).map(move |mut code| {
        (0..n)
            .map(|_| {
                let c = code % k;
                code /= k;
                c
            })
            .collect()
    })
}

fn marginals(n: usize, k: usize, mut ln_weight: impl FnMut(&[usize]) -> f64) -> Vec<Vec<f64>> {
    let all: Vec<(Vec<usize>, f64)> = assignments(n, k).map(|z| {
        let w = ln_weight(&z);
        (z, w)
    }).collect();
    let max = all.iter().map(|(_, w)| *w).fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![vec![0.0; k]; n];
    let mut total = 0.0;
    for (z, w) in &all {
        let p = (w - max).exp();
        total += p;
        for (i, &c) in z.iter().enumerate() {
            out[i][c] += p;
        }
    }
    for row in &mut out {
        row.iter_mut().for_each(|p| *p /= total);
    }
    out
}

/// Label marginals of the yes/no model. `prior(j, true, asked)` gives the
/// Beta prior of each credibility cell.
pub fn yn_marginals(
    votes: &[YnVote],
    n_labelers: usize,
    n_objects: usize,
    k: usize,
    prior: impl Fn(usize, usize, usize) -> (f64, f64),
    rho: &[f64],
) -> Vec<Vec<f64>> {
    marginals(n_objects, k, |z| {
        let mut counts = vec![0usize; k];
        z.iter().for_each(|&c| counts[c] += 1);
        let mut ln_w = ln_dirichlet_multinomial(rho, &counts);
        let mut yes = vec![0usize; n_labelers * k * k];
        let mut no = vec![0usize; n_labelers * k * k];
        for &(j, i, a, y) in votes {
            let cell = (j * k + z[i]) * k + a;
            if y {
                yes[cell] += 1;
            } else {
                no[cell] += 1;
            }
        }
        for j in 0..n_labelers {
            for t in 0..k {
                for a in 0..k {
                    let cell = (j * k + t) * k + a;
                    let (al, be) = prior(j, t, a);
                    ln_w += ln_beta(al + yes[cell] as f64, be + no[cell] as f64) - ln_beta(al, be);
                }
            }
        }
        ln_w
    })
}

/// Label marginals of the confusion-matrix model with a symmetric
/// Dirichlet(`row_prior`) on every confusion row.
pub fn abcd_marginals(
    votes: &[FullVote],
    n_labelers: usize,
    n_objects: usize,
    k: usize,
    row_prior: f64,
    rho: &[f64],
) -> Vec<Vec<f64>> {
    marginals(n_objects, k, |z| {
        let mut counts = vec![0usize; k];
        z.iter().for_each(|&c| counts[c] += 1);
        let mut ln_w = ln_dirichlet_multinomial(rho, &counts);
        let mut rows = vec![vec![0usize; k]; n_labelers * k];
        for &(j, i, c) in votes {
            rows[j * k + z[i]][c] += 1;
        }
        let alpha = vec![row_prior; k];
        for r in &rows {
            ln_w += ln_dirichlet_multinomial(&alpha, r);
        }
        ln_w
    })
}

/// Largest total-variation distance between matching rows.
pub fn max_tv(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| 0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
