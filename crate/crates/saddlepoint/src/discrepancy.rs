//! The gradient of the correction term and the approximated discrepancy.
//!
//! Writing θ̂ for the maximizer of the first-order saddlepoint log-likelihood,
//! the estimated gap to the true MLE is the single Newton step
//!
//! ```text
//! δ̂ = −[∇²_θ log L̂(θ̂; x)]⁻¹ ∇_θᵀ T(θ̂, x)
//! ```
//!
//! toward a stationary point of the second-order log-likelihood. The default
//! route to ∇_θ T seeds θ with dual numbers and differentiates the factorized
//! correction term straight through the implicit function t̂(θ; x); the
//! explicit four-term expansion of that total derivative is kept behind
//! [`grad_correction_t_expanded`] as a low-dimension verification oracle.

use serde_json::json;

use crate::cgf::CgfNode;
use crate::dual::{seed_gradient, Dual, DualScalar};
use crate::error::{Error, Result};
use crate::linalg::{ldl_factor, vec_inf_norm, Mat};
use crate::loglik::{correction_t_generic, spa_loglik_grad, spa_loglik_hess, HessMode};
use crate::solve::{lift_t_hat, solve_saddlepoint, SolveOptions};

/// Condition-number guard for the Hessian solve.
const MAX_CONDITION: f64 = 1e12;

/// Per-parameter approximated discrepancy with its scale context.
#[derive(Debug, Clone)]
pub struct DiscrepancyReport {
    pub delta_hat: Vec<f64>,
    pub grad_t: Vec<f64>,
    pub hessian_used: Mat<f64>,
    pub standard_errors: Vec<f64>,
    /// δ̂_i divided by the standard error of parameter i.
    pub ratio: Vec<f64>,
}

impl DiscrepancyReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "delta_hat": self.delta_hat,
            "se": self.standard_errors,
            "ratio": self.ratio,
        })
    }
}

/// Total derivative of the correction term in θ at fixed x, exact via
/// dual-seeded evaluation through t̂(θ; x).
pub fn grad_correction_t(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let sol = solve_saddlepoint(node, theta, x, &SolveOptions::default())?;
    let theta_d = seed_gradient(theta);
    let t_d = lift_t_hat(&node.clone(), &theta_d, x, &sol.t_hat)?;
    let v = correction_t_generic::<DualScalar>(node, &t_d, &theta_d)?;
    Ok((0..theta.len()).map(|k| v.partial(k)).collect())
}

/// The same gradient assembled from its explicit four-term expansion over Q
/// entries and θ-gradients of the t-derivative tensors. Verification oracle;
/// the index sums cost d^8, so the dimension is capped.
#[allow(clippy::needless_range_loop)]
pub fn grad_correction_t_expanded(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let d = node.dim();
    const LIMIT: usize = 5;
    if d > LIMIT {
        return Err(Error::DimensionTooLarge { limit: LIMIT, got: d });
    }
    let p = theta.len();
    let sol = solve_saddlepoint(node, theta, x, &SolveOptions::default())?;
    let q = &sol.q;

    let theta_d = seed_gradient(theta);
    let t_d = lift_t_hat(node, &theta_d, x, &sol.t_hat)?;
    let basis: Vec<Vec<DualScalar>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| Dual::constant(if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();

    // t-derivative tensors carrying total θ-gradients in their partials
    let mut t3 = vec![Dual::constant(0.0); d * d * d];
    for j1 in 0..d {
        for j2 in 0..d {
            for j3 in 0..d {
                t3[(j1 * d + j2) * d + j3] =
                    node.k3_contract(&t_d, &theta_d, &basis[j1], &basis[j2], &basis[j3])?;
            }
        }
    }
    let mut t4 = vec![Dual::constant(0.0); d * d * d * d];
    for j1 in 0..d {
        for j2 in 0..d {
            for j3 in 0..d {
                for j4 in 0..d {
                    t4[((j1 * d + j2) * d + j3) * d + j4] = node.k4_contract(
                        &t_d,
                        &theta_d,
                        &basis[j1],
                        &basis[j2],
                        &basis[j3],
                        &basis[j4],
                    )?;
                }
            }
        }
    }
    let h2 = node.hess_t(&t_d, &theta_d)?;

    let mut out = vec![0.0; p];
    for m in 0..p {
        let mut acc = 0.0;

        // (1/8) Σ Q12 Q34 ∇(∂⁴K)
        for j1 in 0..d {
            for j2 in 0..d {
                for j3 in 0..d {
                    for j4 in 0..d {
                        acc += 0.125
                            * q[(j1, j2)]
                            * q[(j3, j4)]
                            * t4[((j1 * d + j2) * d + j3) * d + j4].partial(m);
                    }
                }
            }
        }

        // −(1/12) Σ (3 Q12 Q34 Q56 + 2 Q14 Q25 Q36) ∂³K_456 ∇(∂³K_123)
        for j1 in 0..d {
            for j2 in 0..d {
                for j3 in 0..d {
                    let grad_left = t3[(j1 * d + j2) * d + j3].partial(m);
                    if grad_left == 0.0 {
                        continue;
                    }
                    for j4 in 0..d {
                        for j5 in 0..d {
                            for j6 in 0..d {
                                let weights = 3.0 * q[(j1, j2)] * q[(j3, j4)] * q[(j5, j6)]
                                    + 2.0 * q[(j1, j4)] * q[(j2, j5)] * q[(j3, j6)];
                                acc -= weights * t3[(j4 * d + j5) * d + j6].value * grad_left
                                    / 12.0;
                            }
                        }
                    }
                }
            }
        }

        // −(1/4) Σ Q12 Q35 Q46 ∂⁴K_1234 ∇(∂²K_56)
        for j5 in 0..d {
            for j6 in 0..d {
                let grad_h = h2[(j5, j6)].partial(m);
                if grad_h == 0.0 {
                    continue;
                }
                for j1 in 0..d {
                    for j2 in 0..d {
                        for j3 in 0..d {
                            for j4 in 0..d {
                                acc -= 0.25
                                    * q[(j1, j2)]
                                    * q[(j3, j5)]
                                    * q[(j4, j6)]
                                    * t4[((j1 * d + j2) * d + j3) * d + j4].value
                                    * grad_h;
                            }
                        }
                    }
                }
            }
        }

        // +(1/8) Σ (2 Q12 Q34 Q57 Q86 + Q12 Q56 Q37 Q84 + 2 Q63 Q14 Q57 Q82)
        //        ∂³K_123 ∂³K_456 ∇(∂²K_78)
        for j7 in 0..d {
            for j8 in 0..d {
                let grad_h = h2[(j7, j8)].partial(m);
                if grad_h == 0.0 {
                    continue;
                }
                for j1 in 0..d {
                    for j2 in 0..d {
                        for j3 in 0..d {
                            let left = t3[(j1 * d + j2) * d + j3].value;
                            if left == 0.0 {
                                continue;
                            }
                            for j4 in 0..d {
                                for j5 in 0..d {
                                    for j6 in 0..d {
                                        let weights = 2.0
                                            * q[(j1, j2)]
                                            * q[(j3, j4)]
                                            * q[(j5, j7)]
                                            * q[(j8, j6)]
                                            + q[(j1, j2)] * q[(j5, j6)] * q[(j3, j7)] * q[(j8, j4)]
                                            + 2.0
                                                * q[(j6, j3)]
                                                * q[(j1, j4)]
                                                * q[(j5, j7)]
                                                * q[(j8, j2)];
                                        acc += 0.125
                                            * weights
                                            * left
                                            * t3[(j4 * d + j5) * d + j6].value
                                            * grad_h;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }

        out[m] = acc;
    }
    Ok(out)
}

/// δ̂ = −H⁻¹ ∇_θᵀ T at a stationary point θ̂ of the saddlepoint log-likelihood.
pub fn approx_discrepancy(node: &CgfNode, theta_spa: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Ok(discrepancy_report(node, theta_spa, x, HessMode::default())?.delta_hat)
}

/// Full report: δ̂ together with the Hessian used, Wald standard errors, and
/// the δ̂/SE ratio that puts the discrepancy on the scale of inference.
pub fn discrepancy_report(
    node: &CgfNode,
    theta_spa: &[f64],
    x: &[f64],
    hess_mode: HessMode,
) -> Result<DiscrepancyReport> {
    let grad = spa_loglik_grad(node, theta_spa, x)?;
    let grad_norm = vec_inf_norm(&grad);
    if grad_norm > 1e-6 {
        return Err(Error::NotAStationaryPoint { grad_norm, threshold: 1e-6 });
    }

    let hessian = spa_loglik_hess(node, theta_spa, x, hess_mode)?;
    let grad_t = grad_correction_t(node, theta_spa, x)?;
    let delta_hat = solve_neg_definite(&hessian, &grad_t)?;

    let p = theta_spa.len();
    let neg = negate(&hessian);
    let ldl = ldl_factor(&neg).ok_or_else(|| {
        Error::IndefiniteHessian("log-likelihood Hessian is not negative definite".into())
    })?;
    let cov = ldl.inverse();
    let standard_errors: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let ratio: Vec<f64> = delta_hat
        .iter()
        .zip(&standard_errors)
        .map(|(d, s)| d / s)
        .collect();

    Ok(DiscrepancyReport { delta_hat, grad_t, hessian_used: hessian, standard_errors, ratio })
}

fn negate(h: &Mat<f64>) -> Mat<f64> {
    let mut neg = h.clone();
    for v in neg.data.iter_mut() {
        *v = -*v;
    }
    neg
}

/// Solve −H δ = gᵀ for a negative-definite H by factorization, with a
/// condition estimate from the factor diagonal.
pub(crate) fn solve_neg_definite(hessian: &Mat<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let neg = negate(hessian);
    let ldl = ldl_factor(&neg).ok_or_else(|| {
        Error::IndefiniteHessian("log-likelihood Hessian is not negative definite".into())
    })?;
    let dmax = ldl.diag.iter().cloned().fold(f64::MIN, f64::max);
    let dmin = ldl.diag.iter().cloned().fold(f64::MAX, f64::min);
    if dmin <= 0.0 || !dmin.is_finite() || dmax / dmin > MAX_CONDITION {
        return Err(Error::IndefiniteHessian(format!(
            "pivot range [{dmin:.3e}, {dmax:.3e}] exceeds the conditioning limit"
        )));
    }
    Ok(ldl.solve(rhs))
}

/// δ = θ̂_true − θ̂_spa, componentwise.
pub fn true_discrepancy(theta_true: &[f64], theta_spa: &[f64]) -> Result<Vec<f64>> {
    if theta_true.len() != theta_spa.len() {
        return Err(Error::dim(theta_true.len(), theta_spa.len()));
    }
    Ok(theta_true.iter().zip(theta_spa).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::{CellSpec, ParamExpr};
    use crate::loglik::correction_t;
    use crate::solve::solve_saddlepoint;

    fn gamma_node() -> CgfNode {
        CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0))
    }

    /// Stationary shape parameter of the gamma saddlepoint log-likelihood:
    /// ln x − ln α + 1/(2α) = 0, solved by bisection.
    fn gamma_spa_mle(x: f64) -> f64 {
        let f = |a: f64| x.ln() - a.ln() + 0.5 / a;
        let (mut lo, mut hi) = (1e-6, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gamma_grad_t_closed_form() {
        // T = −1/(12α) so ∇T = 1/(12α²)
        for (alpha, x) in [(5.0, 4.0), (2.0, 2.6), (1.1, 0.9)] {
            let g = grad_correction_t(&gamma_node(), &[alpha], &[x]).unwrap();
            let expected = 1.0 / (12.0 * alpha * alpha);
            assert!((g[0] - expected).abs() < 1e-12, "{} vs {expected}", g[0]);
        }
    }

    #[test]
    fn gaussian_grad_t_is_zero() {
        let cov = Mat::from_rows(vec![vec![1.5, 0.2], vec![0.2, 0.9]]);
        let node = CgfNode::multivariate_normal(
            vec![ParamExpr::theta(0), ParamExpr::theta(1)],
            cov,
        )
        .unwrap();
        let g = grad_correction_t(&node, &[0.2, -0.4], &[0.9, 0.1]).unwrap();
        assert!(vec_inf_norm(&g) < 1e-14);
    }

    #[test]
    fn expanded_route_matches_dual_route() {
        let cases: Vec<(CgfNode, Vec<f64>, Vec<f64>)> = vec![
            (gamma_node(), vec![2.5], vec![3.0]),
            (
                CgfNode::concat(vec![
                    gamma_node(),
                    CgfNode::gamma(ParamExpr::theta(1), ParamExpr::constant(2.0)),
                ])
                .unwrap(),
                vec![2.0, 3.0],
                vec![2.4, 1.2],
            ),
            (
                CgfNode::linear_map(
                    Mat::from_rows(vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]),
                    CgfNode::multinomial(
                        ParamExpr::theta(0),
                        CellSpec::Probs(vec![
                            ParamExpr::theta(1),
                            ParamExpr::theta(2),
                            ParamExpr::theta(3),
                        ]),
                    ),
                )
                .unwrap(),
                vec![25.0, 0.25, 0.45, 0.3],
                vec![18.0, 17.5],
            ),
        ];
        for (node, theta, x) in cases {
            let dual = grad_correction_t(&node, &theta, &x).unwrap();
            let expanded = grad_correction_t_expanded(&node, &theta, &x).unwrap();
            for (a, b) in dual.iter().zip(&expanded) {
                assert!(
                    (a - b).abs() < 1e-8 * (1.0 + a.abs()),
                    "dual {dual:?} vs expanded {expanded:?}"
                );
            }
        }
    }

    #[test]
    fn grad_t_matches_finite_differences() {
        let a = Mat::from_rows(vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]);
        let node = CgfNode::linear_map(
            a,
            CgfNode::multinomial(
                ParamExpr::theta(0),
                CellSpec::Probs(vec![
                    ParamExpr::theta(1),
                    ParamExpr::theta(2),
                    ParamExpr::theta(3),
                ]),
            ),
        )
        .unwrap();
        let theta = [22.0, 0.3, 0.45, 0.25];
        let x = [15.0, 14.0];
        let g = grad_correction_t(&node, &theta, &x).unwrap();
        let t_of = |th: &[f64]| {
            let sol = solve_saddlepoint(&node, th, &x, &SolveOptions::default()).unwrap();
            correction_t(&node, &sol, th).unwrap()
        };
        let eps = f64::EPSILON.cbrt();
        for i in 0..theta.len() {
            let h = eps * (1.0 + theta[i].abs());
            let mut up = theta.to_vec();
            up[i] += h;
            let mut dn = theta.to_vec();
            dn[i] -= h;
            let fd = (t_of(&up) - t_of(&dn)) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "param {i}: {} vs {fd}",
                g[i]
            );
        }
    }

    #[test]
    fn gamma_delta_hat_closed_form() {
        let x = 1.58177;
        let alpha_hat = gamma_spa_mle(x);
        let delta = approx_discrepancy(&gamma_node(), &[alpha_hat], &[x]).unwrap();
        let expected = 1.0 / (6.0 * (2.0 * alpha_hat + 1.0));
        assert!((delta[0] - expected).abs() < 1e-8, "{} vs {expected}", delta[0]);
    }

    #[test]
    fn iid_gamma_delta_hat_closed_form() {
        // for X = sum of n copies: δ̂ = 1 / (6 n (2 n α̂ + 1))
        let n = 10.0;
        let u = 1.4;
        // stationarity: n ln(u/α) + 1/(2α) = 0
        let f = |a: f64| n * (u / a).ln() + 0.5 / a;
        let (mut lo, mut hi) = (1e-3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let alpha_hat = 0.5 * (lo + hi);
        let node = CgfNode::iid_sum(ParamExpr::constant(n), gamma_node());
        let delta = approx_discrepancy(&node, &[alpha_hat], &[n * u]).unwrap();
        let expected = 1.0 / (6.0 * n * (2.0 * n * alpha_hat + 1.0));
        assert!(
            (delta[0] - expected).abs() < 1e-8 * (1.0 + expected.abs()),
            "{} vs {expected}",
            delta[0]
        );
    }

    #[test]
    fn gaussian_delta_hat_is_zero() {
        let cov = Mat::from_rows(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let node = CgfNode::multivariate_normal(
            vec![ParamExpr::theta(0), ParamExpr::theta(1)],
            cov,
        )
        .unwrap();
        let x = [0.8, -0.3];
        // the Gaussian mean model is stationary at θ = x
        let delta = approx_discrepancy(&node, &x, &x).unwrap();
        assert!(vec_inf_norm(&delta) < 1e-12);
    }

    #[test]
    fn non_stationary_point_is_rejected() {
        let err = approx_discrepancy(&gamma_node(), &[4.0], &[30.0]);
        assert!(matches!(err, Err(Error::NotAStationaryPoint { .. })));
    }

    #[test]
    fn true_discrepancy_basics() {
        assert_eq!(true_discrepancy(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let d = true_discrepancy(&[2.0564], &[2.0248]).unwrap();
        assert!((d[0] - 0.0316).abs() < 1e-12);
        assert!(true_discrepancy(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_reproduces_newton_step() {
        let x = 2.9;
        let alpha_hat = gamma_spa_mle(x);
        let report =
            discrepancy_report(&gamma_node(), &[alpha_hat], &[x], HessMode::NestedDual).unwrap();
        // δ̂ must reproduce −H⁻¹ ∇Tᵀ from the stored fields
        let back = solve_neg_definite(&report.hessian_used, &report.grad_t).unwrap();
        assert!((back[0] - report.delta_hat[0]).abs() < 1e-10);
        assert!(report.standard_errors[0] > 0.0);
        let j = report.to_json_value();
        assert!(j.get("delta_hat").is_some() && j.get("se").is_some() && j.get("ratio").is_some());
    }
}
