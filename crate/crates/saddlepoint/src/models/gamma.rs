//! Gamma-family models: the fixed-rate gamma with an i.i.d.-sum count, and
//! the multivariate gamma whose rate parameter moves the variance but not the
//! mean. Both carry exact log-likelihoods (and cancellation-free analytic
//! gradients, which the sample-size sweeps need to resolve n⁻³ effects).

use crate::cgf::{CgfNode, ParamExpr};
use crate::error::{Error, Result};
use crate::mle::Transform;
use crate::models::special::{ln_gamma, stirling_corr};

/// Sum of `n` i.i.d. Gamma(α, rate 1) variables, θ = (α). `n` is real-valued.
pub fn build_gamma_fixed_rate(n: f64) -> Result<CgfNode> {
    if !n.is_finite() || n < 1.0 {
        return Err(Error::domain("iid count must satisfy n >= 1"));
    }
    Ok(CgfNode::iid_sum(
        ParamExpr::constant(n),
        CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0)),
    ))
}

pub fn gamma_transforms() -> Vec<Transform> {
    vec![Transform::Log]
}

/// Exact log-likelihood of Gamma(nα, 1) at x.
pub fn true_loglik_gamma(alpha: f64, x: f64, n: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::domain("shape must be positive"));
    }
    if x <= 0.0 {
        return Err(Error::domain("gamma observations must be positive"));
    }
    Ok((n * alpha - 1.0) * x.ln() - x - ln_gamma(n * alpha))
}

/// d/dα of the exact log-likelihood, written as
/// n·[ln(x/(nα)) + (ln(nα) − ψ(nα))] so no large terms cancel.
pub fn true_loglik_gamma_grad(alpha: f64, x: f64, n: f64) -> Result<Vec<f64>> {
    if alpha <= 0.0 || x <= 0.0 {
        return Err(Error::domain("shape and observation must be positive"));
    }
    let z = n * alpha;
    Ok(vec![n * ((x / z).ln() + stirling_corr(z))])
}

/// Independent blocks X_ij ~ Gamma(ω_i τ, τ) for i = 1..k (each replicated
/// m times), θ = (ω_1, …, ω_k, τ). The mean of each block is ω_i regardless of τ.
pub fn build_mvgamma(k: usize, m: usize) -> Result<CgfNode> {
    if k < 1 || m < 1 {
        return Err(Error::domain("mvgamma needs k >= 1 and m >= 1"));
    }
    let tau = ParamExpr::theta(k);
    let mut blocks = Vec::with_capacity(k * m);
    for i in 0..k {
        for _ in 0..m {
            blocks.push(CgfNode::gamma(
                ParamExpr::product(ParamExpr::theta(i), tau.clone()),
                tau.clone(),
            ));
        }
    }
    CgfNode::concat(blocks)
}

pub fn mvgamma_transforms(k: usize) -> Vec<Transform> {
    vec![Transform::Log; k + 1]
}

/// Mean vector of the mvgamma observable (block i repeats ω_i m times).
pub fn mvgamma_mean(omega: &[f64], m: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(omega.len() * m);
    for &w in omega {
        for _ in 0..m {
            u.push(w);
        }
    }
    u
}

/// Exact log-likelihood of the n-fold i.i.d. sum: entry (i, j) of x follows
/// Gamma(n ω_i τ, τ).
pub fn true_loglik_mvgamma(theta: &[f64], x: &[f64], k: usize, m: usize, n: f64) -> Result<f64> {
    check_mvgamma_args(theta, x, k, m)?;
    let tau = theta[k];
    let mut acc = 0.0;
    for i in 0..k {
        let shape = n * theta[i] * tau;
        let lg = ln_gamma(shape);
        for j in 0..m {
            let xv = x[i * m + j];
            if xv <= 0.0 {
                return Err(Error::domain("gamma observations must be positive"));
            }
            acc += shape * tau.ln() + (shape - 1.0) * xv.ln() - tau * xv - lg;
        }
    }
    Ok(acc)
}

/// Analytic gradient of [`true_loglik_mvgamma`] in (ω, τ), cancellation-free.
pub fn true_loglik_mvgamma_grad(
    theta: &[f64],
    x: &[f64],
    k: usize,
    m: usize,
    n: f64,
) -> Result<Vec<f64>> {
    check_mvgamma_args(theta, x, k, m)?;
    let tau = theta[k];
    let mut grad = vec![0.0; k + 1];
    for i in 0..k {
        let z = n * theta[i] * tau;
        let corr = stirling_corr(z);
        for j in 0..m {
            let xv = x[i * m + j];
            if xv <= 0.0 {
                return Err(Error::domain("gamma observations must be positive"));
            }
            // ln(xτ) − ψ(nωτ) = ln(x/(nω)) + corr(nωτ)
            let rel = (xv / (n * theta[i])).ln() + corr;
            grad[i] += n * tau * rel;
            grad[k] += n * theta[i] * rel + (n * theta[i] - xv);
        }
    }
    Ok(grad)
}

fn check_mvgamma_args(theta: &[f64], x: &[f64], k: usize, m: usize) -> Result<()> {
    if theta.len() != k + 1 {
        return Err(Error::dim(k + 1, theta.len()));
    }
    if x.len() != k * m {
        return Err(Error::dim(k * m, x.len()));
    }
    if theta.iter().any(|&v| v <= 0.0) {
        return Err(Error::domain("mvgamma parameters must be positive"));
    }
    Ok(())
}
