//! Linear birth-death population trajectories.
//!
//! Conditional on the previous count, each yearly count is a sum of z_{j-1}
//! i.i.d. offspring variables, so the whole trajectory becomes a vector of
//! independent blocks with CGFs z_{j-1}·K_U(t_j; λ, μ). The exact transition
//! probability (offspring distribution is a zero-inflated geometric) is also
//! provided so saddlepoint fits can be compared against true-likelihood fits
//! when data are available.

use crate::cgf::{CgfNode, ParamExpr};
use crate::error::{Error, Result};
use crate::mle::Transform;
use crate::models::special::ln_gamma;

/// Observed population counts z_0, …, z_k (all at least 1) with per-individual
/// birth and death rates as the parameters to infer.
#[derive(Debug, Clone)]
pub struct TrajectoryModel {
    pub counts: Vec<u64>,
}

impl TrajectoryModel {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::domain("a trajectory needs at least two counts"));
        }
        if counts.contains(&0) {
            return Err(Error::domain(
                "trajectory counts must be at least 1 (conditioning requires survivors)",
            ));
        }
        Ok(TrajectoryModel { counts })
    }

    pub fn steps(&self) -> usize {
        self.counts.len() - 1
    }

    /// The observation vector (z_1, …, z_k) the CGF tree models.
    pub fn observation(&self) -> Vec<f64> {
        self.counts[1..].iter().map(|&z| z as f64).collect()
    }
}

/// Concat over steps j of IidSum(z_{j-1}, offspring(λ, μ)); θ = (λ, μ).
pub fn build_birth_death(trajectory: &TrajectoryModel) -> CgfNode {
    let blocks: Vec<CgfNode> = trajectory.counts[..trajectory.counts.len() - 1]
        .iter()
        .map(|&z| {
            CgfNode::iid_sum(
                ParamExpr::constant(z as f64),
                CgfNode::birth_death_offspring(ParamExpr::theta(0), ParamExpr::theta(1)),
            )
        })
        .collect();
    CgfNode::concat(blocks).expect("trajectory has at least one step")
}

pub fn birth_death_transforms() -> Vec<Transform> {
    vec![Transform::Log, Transform::Log]
}

/// Offspring-distribution parameters over unit time: P(U = 0) = a and
/// P(U = n) = (1−a)(1−b) b^{n−1} for n ≥ 1.
fn offspring_geometric(lambda: f64, mu: f64) -> (f64, f64) {
    let h = lambda - mu;
    if h.abs() > 1e-8 {
        let w = h.exp();
        let a = mu * (w - 1.0) / (lambda * w - mu);
        let b = lambda * a / mu;
        (a, b)
    } else {
        let a = lambda / (1.0 + lambda);
        (a, a)
    }
}

/// Exact log-likelihood of the trajectory under the linear birth-death model.
pub fn true_loglik_birth_death(trajectory: &TrajectoryModel, theta: &[f64]) -> Result<f64> {
    if theta.len() != 2 {
        return Err(Error::dim(2, theta.len()));
    }
    let (lambda, mu) = (theta[0], theta[1]);
    if lambda <= 0.0 || mu <= 0.0 {
        return Err(Error::domain("rates must be positive"));
    }
    let (a, b) = offspring_geometric(lambda, mu);
    if !(0.0..1.0).contains(&a) || !(0.0..1.0).contains(&b) {
        return Err(Error::domain("offspring parameters left (0,1)"));
    }
    let mut acc = 0.0;
    for j in 1..trajectory.counts.len() {
        let i = trajectory.counts[j - 1];
        let n = trajectory.counts[j];
        acc += log_transition(i, n, a, b)?;
    }
    Ok(acc)
}

/// log P(sum of i offspring = n): condition on the number s of parents with
/// surviving lines; the survivors contribute a negative-binomial total.
fn log_transition(i: u64, n: u64, a: f64, b: f64) -> Result<f64> {
    let (ln_a, ln_1ma, ln_b, ln_1mb) = (a.ln(), (1.0 - a).ln(), b.ln(), (1.0 - b).ln());
    if n == 0 {
        return Ok(i as f64 * ln_a);
    }
    let s_max = i.min(n);
    let mut terms = Vec::with_capacity(s_max as usize);
    for s in 1..=s_max {
        let (sf, ifl, nf) = (s as f64, i as f64, n as f64);
        let ln_choose_is = ln_gamma(ifl + 1.0) - ln_gamma(sf + 1.0) - ln_gamma(ifl - sf + 1.0);
        let ln_choose_ns = ln_gamma(nf) - ln_gamma(sf) - ln_gamma(nf - sf + 1.0);
        terms.push(
            ln_choose_is
                + (ifl - sf) * ln_a
                + sf * ln_1ma
                + ln_choose_ns
                + sf * ln_1mb
                + (nf - sf) * ln_b,
        );
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}
