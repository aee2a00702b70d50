//! Log-densities of the variational factors and their score functions, both
//! with respect to the constrained parameters and chain-ruled through the
//! soft-plus transforms.

use crate::math::{digamma, ln_beta, ln_gamma, softplus, softplus_grad};

/// `ln Beta(θ | α, β)`.
pub fn beta_log_q(alpha: f64, beta: f64, theta: f64) -> f64 {
    (alpha - 1.0) * theta.ln() + (beta - 1.0) * (1.0 - theta).ln() - ln_beta(alpha, beta)
}

/// `(∂/∂α, ∂/∂β) ln Beta(θ | α, β)`.
pub fn beta_score(alpha: f64, beta: f64, theta: f64) -> (f64, f64) {
    let both = digamma(alpha + beta);
    (theta.ln() + both - digamma(alpha), (1.0 - theta).ln() + both - digamma(beta))
}

/// Score of `ln Beta(θ | softplus(a), softplus(b))` with respect to `(a, b)`.
pub fn beta_score_unconstrained(a: f64, b: f64, theta: f64) -> (f64, f64) {
    let (ga, gb) = beta_score(softplus(a), softplus(b), theta);
    (ga * softplus_grad(a), gb * softplus_grad(b))
}

/// `ln p_z`.
pub fn categorical_log_q(p: &[f64], z: usize) -> f64 {
    p[z].ln()
}

/// `∂/∂p_m ln p_z = δ_{mz} / p_z`, treating `p` as free coordinates.
pub fn categorical_score(p: &[f64], z: usize, out: &mut [f64]) {
    for (m, o) in out.iter_mut().enumerate() {
        *o = if m == z { 1.0 / p[z] } else { 0.0 };
    }
}

/// Score of `ln p_z` where `p_m = s_m / Σ s` and `s_m = softplus(u_m)`:
/// `∂/∂u_m = σ(u_m) (δ_{mz} / s_z − 1 / Σ s)`.
pub fn categorical_score_unconstrained(u: &[f64], z: usize, out: &mut [f64]) {
    let total: f64 = u.iter().map(|&x| softplus(x)).sum();
    let sz = softplus(u[z]);
    for (m, o) in out.iter_mut().enumerate() {
        let direct = if m == z { 1.0 / sz } else { 0.0 };
        *o = softplus_grad(u[m]) * (direct - 1.0 / total);
    }
}

/// `ln Dirichlet(π | d)`.
pub fn dirichlet_log_q(d: &[f64], pi: &[f64]) -> f64 {
    let total: f64 = d.iter().sum();
    let mut out = ln_gamma(total);
    for (&dk, &pk) in d.iter().zip(pi) {
        out += (dk - 1.0) * pk.ln() - ln_gamma(dk);
    }
    out
}

/// `∂/∂d_k ln Dirichlet(π | d) = ln π_k − ψ(d_k) + ψ(Σ d)`.
pub fn dirichlet_score(d: &[f64], pi: &[f64], out: &mut [f64]) {
    let both = digamma(d.iter().sum());
    for ((o, &dk), &pk) in out.iter_mut().zip(d).zip(pi) {
        *o = pk.ln() - digamma(dk) + both;
    }
}

/// Score of `ln Dirichlet(π | softplus(u))` with respect to `u`.
pub fn dirichlet_score_unconstrained(u: &[f64], pi: &[f64], out: &mut [f64]) {
    let d: Vec<f64> = u.iter().map(|&x| softplus(x)).collect();
    dirichlet_score(&d, pi, out);
    for (o, &x) in out.iter_mut().zip(u) {
        *o *= softplus_grad(x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::softplus_inv;

    #[test]
    fn symmetric_beta_scores_agree_at_half() {
        for a in [0.7, 1.0, 3.0, 12.5] {
            let (ga, gb) = beta_score(a, a, 0.5);
            assert!((ga - gb).abs() < 1e-15);
        }
    }

    #[test]
    fn categorical_score_at_uniform() {
        let k = 4;
        let p = vec![0.25; k];
        let mut g = vec![0.0; k];
        categorical_score(&p, 2, &mut g);
        assert_eq!(g, vec![0.0, 0.0, 4.0, 0.0]);
    }

    #[test]
    fn unconstrained_categorical_sums_to_zero_for_equal_slopes() {
        // Equal σ(u_m) for all m: Σ_m ∂/∂u_m ln p_z = σ (1/s_z − K/Σs) = 0 when uniform.
        let u = vec![softplus_inv(0.3); 3];
        let mut g = vec![0.0; 3];
        categorical_score_unconstrained(&u, 1, &mut g);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn flat_dirichlet_log_density() {
        assert!((dirichlet_log_q(&[1.0, 1.0, 1.0], &[0.2, 0.5, 0.3]) - 2f64.ln()).abs() < 1e-12);
    }
}
