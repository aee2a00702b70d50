//! Special functions and parameter transforms shared by the densities and
//! the variational backend.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Lower bound applied to every soft-plus image so digamma arguments stay finite.
pub const SOFTPLUS_FLOOR: f64 = 1e-6;

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln(1 + e^x)` without overflow, floored at [`SOFTPLUS_FLOOR`].
pub fn softplus(x: f64) -> f64 {
    let raw = if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    };
    raw.max(SOFTPLUS_FLOOR)
}

/// Derivative of [`softplus`]; zero on the floored region.
pub fn softplus_grad(x: f64) -> f64 {
    if x.exp().ln_1p() < SOFTPLUS_FLOOR {
        0.0
    } else {
        sigmoid(x)
    }
}

/// Inverse of the soft-plus map for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Normalizes log-weights in place into a probability vector.
pub fn normalize_log_weights(weights: &mut [f64]) {
    let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
}

/// `ln Σ exp(x)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
