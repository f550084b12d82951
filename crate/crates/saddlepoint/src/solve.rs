//! Newton solver for the saddlepoint equation K'(t̂; θ) = x.

use crate::cgf::{CgfNode, TiltVector};
use crate::dual::{constants, primals, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{ldl_factor, vec_inf_diff, vec_inf_norm, Ldl, Mat};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Convergence threshold, relative to the observation scale:
    /// `‖K'(t̂) − x‖_∞ ≤ tol · (1 + ‖x‖_∞)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Optional warm start; defaults to t = 0, the mean point.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 100, initial: None }
    }
}

/// The solved tilt together with the factorized Hessian at the solution.
///
/// `ldl_a` (unit lower-triangular) and `ldl_d` factor the *inverse* Hessian:
/// Q = K''(t̂)⁻¹ = Σ_l d_l A_{·l} A_{·l}ᵀ, the form the correction-term
/// contractions consume. `log_det_k2` comes from the factorization of K''
/// itself, never from a determinant routine.
#[derive(Debug, Clone)]
pub struct SaddlepointSolution {
    pub t_hat: Vec<f64>,
    pub k2: Mat<f64>,
    pub q: Mat<f64>,
    pub ldl_a: Mat<f64>,
    pub ldl_d: Vec<f64>,
    pub log_det_k2: f64,
    pub residual_norm: f64,
    pub iterations: usize,
}

impl SaddlepointSolution {
    pub fn tilt(&self) -> TiltVector {
        TiltVector(self.t_hat.clone())
    }
}

const MAX_HALVINGS: usize = 50;

/// Solve K'(t̂; θ) = x by damped Newton iteration from the mean point.
///
/// Steps are halved both to stay inside the CGF domain and to decrease the
/// residual. After the tolerance is met, iteration continues while the
/// residual keeps improving, so downstream θ-derivatives are not polluted by
/// a loosely solved t̂.
pub fn solve_saddlepoint(
    node: &CgfNode,
    theta: &[f64],
    x: &[f64],
    opts: &SolveOptions,
) -> Result<SaddlepointSolution> {
    let d = node.dim();
    if x.len() != d {
        return Err(Error::dim(d, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("observation contains non-finite entries"));
    }
    if node.singular_covariance() {
        return Err(Error::SingularHessian);
    }

    let mut t = opts.initial.clone().unwrap_or_else(|| vec![0.0; d]);
    if !node.in_domain(&t, theta) {
        return Err(Error::domain("initial tilt lies outside the CGF domain"));
    }
    let tol = opts.tol * (1.0 + vec_inf_norm(x));

    let mut grad = node.grad_t(&t, theta)?;
    let mut residual = vec_inf_diff(&grad, x);
    let mut converged_at: Option<usize> = None;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        if residual <= tol && converged_at.is_none() {
            converged_at = Some(iter - 1);
        }
        // Polish a little past the tolerance: quadratic convergence makes the
        // extra steps nearly free and the residual floor is what limits the
        // accuracy of everything differentiated through t̂.
        if let Some(k) = converged_at {
            if iter > k + 3 || residual == 0.0 {
                break;
            }
        }

        let k2 = node.hess_t(&t, theta)?;
        let ldl = ldl_factor(&k2).ok_or(Error::SingularHessian)?;
        let rhs: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - gi).collect();
        let step = ldl.solve(&rhs);

        let mut scale = 1.0f64;
        let mut accepted = false;
        let mut domain_blocked = true;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = t.iter().zip(&step).map(|(ti, si)| ti + scale * si).collect();
            if node.in_domain(&cand, theta) {
                domain_blocked = false;
                let cand_grad = node.grad_t(&cand, theta)?;
                let cand_res = vec_inf_diff(&cand_grad, x);
                if cand_res < residual {
                    t = cand;
                    grad = cand_grad;
                    residual = cand_res;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        iterations = iter;
        if !accepted {
            if converged_at.is_some() {
                break; // already inside tolerance; the floor has been reached
            }
            if domain_blocked {
                return Err(Error::DomainExit);
            }
            return Err(Error::NotConverged { iterations, residual });
        }
    }

    if residual > tol {
        return Err(Error::NotConverged { iterations, residual });
    }
    // An observation on (or beyond) the boundary of the mean range drives the
    // tilt off to infinity while the residual still shrinks; report that as a
    // domain exit instead of extrapolating.
    if vec_inf_norm(&t) > 1e6 || t.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainExit);
    }

    package_solution(node, theta, t, residual, iterations)
}

fn package_solution(
    node: &CgfNode,
    theta: &[f64],
    t_hat: Vec<f64>,
    residual_norm: f64,
    iterations: usize,
) -> Result<SaddlepointSolution> {
    let k2 = node.hess_t(&t_hat, theta)?;
    let ldl_k2 = ldl_factor(&k2).ok_or(Error::SingularHessian)?;
    let log_det_k2 = ldl_k2.log_det();
    let q = ldl_k2.inverse();
    let ldl_q = ldl_factor(&q).ok_or(Error::SingularHessian)?;

    // Reconstruction check: Q K2 must be the identity to 1e-10.
    let prod = q.matmul(&k2);
    let d = k2.nrows;
    let mut err = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((prod[(i, j)] - target).abs());
        }
    }
    if err > 1e-10 {
        return Err(Error::SingularHessian);
    }

    Ok(SaddlepointSolution {
        t_hat,
        k2,
        q,
        ldl_a: ldl_q.lower,
        ldl_d: ldl_q.diag,
        log_det_k2,
        residual_norm,
        iterations,
    })
}

/// Lift a solved tilt into dual arithmetic consistent with seeded parameters.
///
/// Starting from the `f64` solution as constants, each full Newton step in
/// `S` arithmetic makes one more derivative order of t̂(θ; x) exact (the
/// Newton map has vanishing derivative at the fixed point), so `S::ORDER`
/// steps suffice.
pub fn lift_t_hat<S: Scalar>(
    node: &CgfNode,
    theta: &[S],
    x: &[f64],
    t_hat: &[f64],
) -> Result<Vec<S>> {
    let mut t: Vec<S> = constants(t_hat);
    let x_s: Vec<S> = constants(x);
    for _ in 0..S::ORDER {
        let grad = node.grad_t(&t, theta)?;
        let k2 = node.hess_t(&t, theta)?;
        let ldl = ldl_factor(&k2).ok_or(Error::SingularHessian)?;
        let rhs: Vec<S> = x_s
            .iter()
            .zip(&grad)
            .map(|(xi, gi)| xi.clone() - gi.clone())
            .collect();
        let step = ldl.solve(&rhs);
        for (ti, si) in t.iter_mut().zip(step) {
            *ti = ti.clone() + si;
        }
    }
    Ok(t)
}

/// Solve and lift in one call; the common entry point for θ-seeded evaluation.
pub fn solve_and_lift<S: Scalar>(
    node: &CgfNode,
    theta: &[S],
    x: &[f64],
    opts: &SolveOptions,
) -> Result<(SaddlepointSolution, Vec<S>)> {
    let sol = solve_saddlepoint(node, &primals(theta), x, opts)?;
    let t = lift_t_hat(node, theta, x, &sol.t_hat)?;
    Ok((sol, t))
}

/// LDL factors of the Hessian K''(t̂; θ) in generic arithmetic, for callers
/// that need the factorized inverse with seeds attached.
pub fn factor_hessian<S: Scalar>(node: &CgfNode, t: &[S], theta: &[S]) -> Result<(Mat<S>, Ldl<S>)> {
    let k2 = node.hess_t(t, theta)?;
    let ldl = ldl_factor(&k2).ok_or(Error::SingularHessian)?;
    Ok((k2, ldl))
}
