//! Saddlepoint log-likelihoods and the second-order correction term.
//!
//! The first-order saddlepoint log-likelihood is
//!
//! ```text
//! log L̂(θ; x) = K(t̂; θ) − t̂ x − (d/2) log 2π − ½ log det K''(t̂; θ)
//! ```
//!
//! with t̂ solving K'(t̂; θ) = x. Adding the correction term `T` built from
//! third- and fourth-cumulant contractions gives the second-order version.
//! `T` is evaluated in its factorized form: with Q = K''(t̂)⁻¹ = Σ_l d_l A_l A_lᵀ,
//!
//! ```text
//! T = 1/8 Σ_{l1,l2} d_{l1} d_{l2} K4(A_{l1}, A_{l1}, A_{l2}, A_{l2})
//!   − 1/8 Σ_{l2} d_{l2} [Σ_{l1} d_{l1} K3(A_{l1}, A_{l1}, A_{l2})]²
//!   − 1/12 Σ_{l1,l2,l3} d_{l1} d_{l2} d_{l3} K3(A_{l1}, A_{l2}, A_{l3})²,
//! ```
//!
//! which never materializes a third- or fourth-order array. A direct
//! nested-index evaluation over Q entries is kept as a cross-checking oracle
//! for small dimensions.

use std::f64::consts::PI;

use crate::cgf::CgfNode;
use crate::dual::{constants, seed_gradient, seed_hessian, Dual, DualScalar, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{ldl_factor, Mat};
use crate::solve::{solve_and_lift, solve_saddlepoint, SaddlepointSolution, SolveOptions};

/// How `spa_loglik_hess` obtains second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HessMode {
    /// Central finite differences of the analytic gradient, per-coordinate
    /// step `cbrt(ε)·(1 + |θ_i|)`.
    #[default]
    FdOfGrad,
    /// Nested dual (dual-over-dual) propagation; exact but costlier.
    NestedDual,
}

/// First-order saddlepoint log-likelihood at (θ, x).
pub fn spa_loglik(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<f64> {
    let sol = solve_saddlepoint(node, theta, x, &SolveOptions::default())?;
    spa_loglik_at(node, theta, x, &sol)
}

/// Same, reusing an existing saddlepoint solution.
pub fn spa_loglik_at(
    node: &CgfNode,
    theta: &[f64],
    x: &[f64],
    sol: &SaddlepointSolution,
) -> Result<f64> {
    let k = node.k(&sol.t_hat, theta)?;
    let tx: f64 = sol.t_hat.iter().zip(x).map(|(t, xi)| t * xi).sum();
    let d = node.dim() as f64;
    Ok(k - tx - 0.5 * d * (2.0 * PI).ln() - 0.5 * sol.log_det_k2)
}

/// Generic evaluation with a θ-seeded scalar type; the tilt is lifted through
/// the implicit function t̂(θ; x) so the result carries total derivatives.
pub fn spa_loglik_generic<S: Scalar>(node: &CgfNode, theta: &[S], x: &[f64]) -> Result<S> {
    let (_, t) = solve_and_lift(node, theta, x, &SolveOptions::default())?;
    loglik_from_tilt(node, &t, theta, x)
}

fn loglik_from_tilt<S: Scalar>(node: &CgfNode, t: &[S], theta: &[S], x: &[f64]) -> Result<S> {
    let k = node.k(t, theta)?;
    let mut tx = S::zero();
    for (ti, xi) in t.iter().zip(x) {
        tx = tx + ti.scale(*xi);
    }
    let k2 = node.hess_t(t, theta)?;
    let ldl = ldl_factor(&k2).ok_or(Error::SingularHessian)?;
    let d = node.dim() as f64;
    let c = 0.5 * d * (2.0 * PI).ln();
    Ok(k - tx - S::from_f64(c) - ldl.log_det().scale(0.5))
}

/// Total θ-gradient of `spa_loglik`, exact via dual-seeded evaluation.
pub fn spa_loglik_grad(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let theta_d = seed_gradient(theta);
    let v = spa_loglik_generic::<DualScalar>(node, &theta_d, x)?;
    Ok((0..theta.len()).map(|k| v.partial(k)).collect())
}

/// The same gradient assembled from its closed composition:
/// `∇_θ K(t̂; θ) − ½ tr[Q (∂_θ K'' + Σ_k K3(·,·,e_k) (∇_θ t̂)_k)]`,
/// with `∇_θ t̂ᵀ = −Q ∇_θ K'`. Kept as a cross-check of the dual route.
#[allow(clippy::needless_range_loop)]
pub fn spa_loglik_grad_composed(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let sol = solve_saddlepoint(node, theta, x, &SolveOptions::default())?;
    let p = theta.len();
    let d = node.dim();
    let theta_d = seed_gradient(theta);
    let t_const: Vec<DualScalar> = constants(&sol.t_hat);

    let k_d = node.k(&t_const, &theta_d)?;
    let grad_d = node.grad_t(&t_const, &theta_d)?;
    let hess_d = node.hess_t(&t_const, &theta_d)?;

    // ∇_θ t̂ᵀ = −Q ∂_θK' (d × p)
    let mut dt = vec![vec![0.0; p]; d];
    for m in 0..p {
        let col: Vec<f64> = (0..d).map(|i| grad_d[i].partial(m)).collect();
        let qcol = sol.q.matvec(&col);
        for i in 0..d {
            dt[i][m] = -qcol[i];
        }
    }

    let r = sol.ldl_d.len();
    let cols: Vec<Vec<f64>> = (0..r).map(|l| sol.ldl_a.column(l)).collect();
    let mut out = vec![0.0; p];
    for m in 0..p {
        // tr(Q ∂_θm K'')
        let mut trace = 0.0;
        for i in 0..d {
            for j in 0..d {
                trace += sol.q[(i, j)] * hess_d[(i, j)].partial(m);
            }
        }
        // Σ_l d_l K3(A_l, A_l, ∇_θ t̂ᵀ e_m)
        let w: Vec<f64> = (0..d).map(|i| dt[i][m]).collect();
        let mut k3_term = 0.0;
        for l in 0..r {
            k3_term +=
                sol.ldl_d[l] * node.k3_contract(&sol.t_hat, theta, &cols[l], &cols[l], &w)?;
        }
        out[m] = k_d.partial(m) - 0.5 * (trace + k3_term);
    }
    Ok(out)
}

/// θ-Hessian of `spa_loglik`, symmetrized as (H + Hᵀ)/2.
pub fn spa_loglik_hess(node: &CgfNode, theta: &[f64], x: &[f64], mode: HessMode) -> Result<Mat<f64>> {
    let p = theta.len();
    let mut h = Mat::<f64>::zeros(p, p);
    match mode {
        HessMode::FdOfGrad => {
            let eps = f64::EPSILON.cbrt();
            for i in 0..p {
                let step = eps * (1.0 + theta[i].abs());
                let mut up = theta.to_vec();
                up[i] += step;
                let mut dn = theta.to_vec();
                dn[i] -= step;
                let gp = spa_loglik_grad(node, &up, x)?;
                let gm = spa_loglik_grad(node, &dn, x)?;
                for j in 0..p {
                    h[(i, j)] = (gp[j] - gm[j]) / (2.0 * step);
                }
            }
        }
        HessMode::NestedDual => {
            let theta_d = seed_hessian(theta);
            let v = spa_loglik_generic(node, &theta_d, x)?;
            for i in 0..p {
                for j in 0..p {
                    h[(i, j)] = v.partial(i).partial(j);
                }
            }
        }
    }
    symmetrize_checked(h)
}

fn symmetrize_checked(mut h: Mat<f64>) -> Result<Mat<f64>> {
    let p = h.nrows;
    for i in 0..p {
        for j in 0..i {
            let avg = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = avg;
            h[(j, i)] = avg;
        }
    }
    if h.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteHessian);
    }
    Ok(h)
}

/// Correction term T at a solved saddlepoint, in the factorized (rank-one sum)
/// form. Summation order is fixed (ascending indices) for reproducibility.
pub fn correction_t(node: &CgfNode, sol: &SaddlepointSolution, theta: &[f64]) -> Result<f64> {
    correction_from_factors(node, &sol.t_hat, theta, &sol.ldl_a, &sol.ldl_d)
}

/// Correction term with generic scalars; refactorizes K'' at the given tilt.
pub fn correction_t_generic<S: Scalar>(node: &CgfNode, t: &[S], theta: &[S]) -> Result<S> {
    let k2 = node.hess_t(t, theta)?;
    let ldl_k2 = ldl_factor(&k2).ok_or(Error::SingularHessian)?;
    let q = ldl_k2.inverse();
    let ldl_q = ldl_factor(&q).ok_or(Error::SingularHessian)?;
    correction_from_factors(node, t, theta, &ldl_q.lower, &ldl_q.diag)
}

fn correction_from_factors<S: Scalar>(
    node: &CgfNode,
    t: &[S],
    theta: &[S],
    a: &Mat<S>,
    diag: &[S],
) -> Result<S> {
    let r = diag.len();
    let cols: Vec<Vec<S>> = (0..r).map(|l| a.column(l)).collect();

    let mut term1 = S::zero();
    for l1 in 0..r {
        for l2 in l1..r {
            let k4 = node.k4_contract(t, theta, &cols[l1], &cols[l1], &cols[l2], &cols[l2])?;
            let w = diag[l1].clone() * diag[l2].clone() * k4;
            term1 = term1 + if l1 == l2 { w } else { w.scale(2.0) };
        }
    }

    // the two inner K3 sums of the second term coincide by symmetry
    let mut term2 = S::zero();
    for l2 in 0..r {
        let mut inner = S::zero();
        for l1 in 0..r {
            let k3 = node.k3_contract(t, theta, &cols[l1], &cols[l1], &cols[l2])?;
            inner = inner + diag[l1].clone() * k3;
        }
        term2 = term2 + diag[l2].clone() * inner.clone() * inner;
    }

    let mut term3 = S::zero();
    for l1 in 0..r {
        for l2 in l1..r {
            for l3 in l2..r {
                let k3 = node.k3_contract(t, theta, &cols[l1], &cols[l2], &cols[l3])?;
                let mult = if l1 == l3 {
                    1.0
                } else if l1 == l2 || l2 == l3 {
                    3.0
                } else {
                    6.0
                };
                let w = diag[l1].clone() * diag[l2].clone() * diag[l3].clone() * k3.clone() * k3;
                term3 = term3 + w.scale(mult);
            }
        }
    }

    Ok(term1.scale(0.125) - term2.scale(0.125) - term3.scale(1.0 / 12.0))
}

/// Test oracle: the correction term evaluated as raw nested index sums over
/// the entries of Q, exactly mirroring its defining expression. Cost grows as
/// d^6, so the dimension is capped.
pub fn correction_t_direct(node: &CgfNode, sol: &SaddlepointSolution, theta: &[f64]) -> Result<f64> {
    let d = node.dim();
    const LIMIT: usize = 8;
    if d > LIMIT {
        return Err(Error::DimensionTooLarge { limit: LIMIT, got: d });
    }
    let t = &sol.t_hat;
    let q = &sol.q;

    let basis: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            e
        })
        .collect();

    let mut t3 = vec![0.0; d * d * d];
    for j1 in 0..d {
        for j2 in 0..d {
            for j3 in 0..d {
                t3[(j1 * d + j2) * d + j3] =
                    node.k3_contract(t, theta, &basis[j1], &basis[j2], &basis[j3])?;
            }
        }
    }
    let mut t4 = vec![0.0; d * d * d * d];
    for j1 in 0..d {
        for j2 in 0..d {
            for j3 in 0..d {
                for j4 in 0..d {
                    t4[((j1 * d + j2) * d + j3) * d + j4] = node.k4_contract(
                        t,
                        theta,
                        &basis[j1],
                        &basis[j2],
                        &basis[j3],
                        &basis[j4],
                    )?;
                }
            }
        }
    }

    let mut term1 = 0.0;
    for j1 in 0..d {
        for j2 in 0..d {
            for j3 in 0..d {
                for j4 in 0..d {
                    term1 += t4[((j1 * d + j2) * d + j3) * d + j4] * q[(j1, j2)] * q[(j3, j4)];
                }
            }
        }
    }

    let mut term2 = 0.0;
    let mut term3 = 0.0;
    for j1 in 0..d {
        for j2 in 0..d {
            for j3 in 0..d {
                let left = t3[(j1 * d + j2) * d + j3];
                for j4 in 0..d {
                    for j5 in 0..d {
                        for j6 in 0..d {
                            let right = t3[(j4 * d + j5) * d + j6];
                            term2 += left * right * q[(j1, j2)] * q[(j3, j4)] * q[(j5, j6)];
                            term3 += left * right * q[(j1, j4)] * q[(j2, j5)] * q[(j3, j6)];
                        }
                    }
                }
            }
        }
    }

    Ok(term1 / 8.0 - term2 / 8.0 - term3 / 12.0)
}

/// Second-order saddlepoint log-likelihood: `spa_loglik + T`.
pub fn spa_loglik2(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<f64> {
    let sol = solve_saddlepoint(node, theta, x, &SolveOptions::default())?;
    Ok(spa_loglik_at(node, theta, x, &sol)? + correction_t(node, &sol, theta)?)
}

/// Generic second-order log-likelihood (shares one tilt lift between the base
/// term and the correction).
pub fn spa_loglik2_generic<S: Scalar>(node: &CgfNode, theta: &[S], x: &[f64]) -> Result<S> {
    let (_, t) = solve_and_lift(node, theta, x, &SolveOptions::default())?;
    let base = loglik_from_tilt(node, &t, theta, x)?;
    let corr = correction_t_generic(node, &t, theta)?;
    Ok(base + corr)
}

/// Total θ-gradient of the second-order log-likelihood.
pub fn spa_loglik2_grad(node: &CgfNode, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let theta_d = seed_gradient(theta);
    let v = spa_loglik2_generic::<Dual<f64>>(node, &theta_d, x)?;
    Ok((0..theta.len()).map(|k| v.partial(k)).collect())
}
