//! Quasi-Newton maximization of saddlepoint (or model-supplied true)
//! log-likelihoods with per-parameter transforms.
//!
//! BFGS with a backtracking line search runs in the unconstrained transformed
//! space; after convergence a few Newton polishing steps (finite differences
//! of the analytic gradient) push the gradient down to its rounding floor,
//! which the sample-size sweeps rely on to resolve discrepancy differences of
//! order n⁻³. Reported Hessians and standard errors are mapped back to the
//! original parameterization by the delta method.

use serde_json::json;

use crate::cgf::{CgfNode, ParamVector};
use crate::discrepancy::{discrepancy_report, DiscrepancyReport};
use crate::error::{Error, Result};
use crate::linalg::{ldl_factor, vec_inf_norm, Mat};
use crate::loglik::{spa_loglik, spa_loglik2, spa_loglik2_grad, spa_loglik_grad, HessMode};

/// Smooth bijection between an unconstrained optimizer coordinate and one
/// model parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// θ = exp(φ) for positive parameters.
    Log,
    /// θ = 1/(1+e^{−φ}) for probabilities in (0, 1).
    Logit,
}

impl Transform {
    pub fn unconstrain(&self, theta: f64) -> f64 {
        match self {
            Transform::Identity => theta,
            Transform::Log => theta.ln(),
            Transform::Logit => (theta / (1.0 - theta)).ln(),
        }
    }

    pub fn constrain(&self, phi: f64) -> f64 {
        match self {
            Transform::Identity => phi,
            Transform::Log => phi.exp(),
            Transform::Logit => 1.0 / (1.0 + (-phi).exp()),
        }
    }

    /// dθ/dφ evaluated at φ.
    pub fn jacobian(&self, phi: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => phi.exp(),
            Transform::Logit => {
                let s = 1.0 / (1.0 + (-phi).exp());
                s * (1.0 - s)
            }
        }
    }
}

pub fn constrain_all(transforms: &[Transform], phi: &[f64]) -> Vec<f64> {
    transforms.iter().zip(phi).map(|(t, &v)| t.constrain(v)).collect()
}

pub fn unconstrain_all(transforms: &[Transform], theta: &[f64]) -> Vec<f64> {
    transforms.iter().zip(theta).map(|(t, &v)| t.unconstrain(v)).collect()
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Relative gradient test: converged when `‖∇‖_∞ ≤ grad_tol · (1 + |loglik|)`
    /// in the original parameterization.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Line-search step-size floor.
    pub step_floor: f64,
    /// Newton-polish the gradient toward its rounding floor after convergence.
    pub polish: bool,
    /// How the reported Hessian is computed.
    pub hess_mode: HessMode,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tol: 1e-6,
            max_iter: 500,
            step_floor: 1e-12,
            polish: true,
            hess_mode: HessMode::FdOfGrad,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxIter,
    LineSearchFailed,
}

impl FitStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIter => "max_iter",
            FitStatus::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Spa,
    Spa2,
    TrueOracle,
}

impl ObjectiveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectiveKind::Spa => "spa",
            ObjectiveKind::Spa2 => "spa2",
            ObjectiveKind::TrueOracle => "true_oracle",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    pub loglik: f64,
    pub grad_norm: f64,
    /// Hessian of the objective at θ̂, original parameterization.
    pub hessian: Mat<f64>,
    /// Wald standard errors; present when −hessian is positive definite.
    pub standard_errors: Option<Vec<f64>>,
    pub status: FitStatus,
    pub objective_kind: ObjectiveKind,
    pub iterations: usize,
}

impl FitResult {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        json!({
            "theta": self.theta_hat.0,
            "se": self.standard_errors,
            "loglik": self.loglik,
            "status": self.status.as_str(),
        })
    }
}

/// An objective with a gradient; the default gradient is central finite
/// differences of the value.
pub trait Objective {
    fn value(&self, theta: &[f64]) -> Result<f64>;

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        fd_gradient(&|th| self.value(th), theta)
    }
}

/// Central finite differences with per-coordinate steps, falling back to a
/// one-sided stencil when a probe point leaves the objective's domain.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> Result<f64>, theta: &[f64]) -> Result<Vec<f64>> {
    let eps = f64::EPSILON.cbrt();
    let mut g = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        let h = eps * (1.0 + theta[i].abs());
        let mut up = theta.to_vec();
        up[i] += h;
        let mut dn = theta.to_vec();
        dn[i] -= h;
        g[i] = match (f(&up), f(&dn)) {
            (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
            (Ok(a), Err(_)) => (a - f(theta)?) / h,
            (Err(_), Ok(b)) => (f(theta)? - b) / h,
            (Err(e), Err(_)) => return Err(e),
        };
    }
    Ok(g)
}

struct SpaObjective<'a> {
    node: &'a CgfNode,
    x: &'a [f64],
    second_order: bool,
}

impl Objective for SpaObjective<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        if self.second_order {
            spa_loglik2(self.node, theta, self.x)
        } else {
            spa_loglik(self.node, theta, self.x)
        }
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if self.second_order {
            spa_loglik2_grad(self.node, theta, self.x)
        } else {
            spa_loglik_grad(self.node, theta, self.x)
        }
    }
}

type ValueFn<'a> = Box<dyn Fn(&[f64]) -> Result<f64> + 'a>;
type GradientFn<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>;

/// Wrap value/gradient callbacks as an [`Objective`]; used for model-supplied
/// true log-likelihoods.
pub struct CallbackObjective<'a> {
    value_fn: ValueFn<'a>,
    gradient_fn: Option<GradientFn<'a>>,
}

impl<'a> CallbackObjective<'a> {
    pub fn new(value_fn: impl Fn(&[f64]) -> Result<f64> + 'a) -> Self {
        CallbackObjective { value_fn: Box::new(value_fn), gradient_fn: None }
    }

    /// Attach an analytic gradient, overriding the finite-difference default.
    pub fn with_gradient(
        mut self,
        gradient_fn: impl Fn(&[f64]) -> Result<Vec<f64>> + 'a,
    ) -> Self {
        self.gradient_fn = Some(Box::new(gradient_fn));
        self
    }
}

impl Objective for CallbackObjective<'_> {
    fn value(&self, theta: &[f64]) -> Result<f64> {
        (self.value_fn)(theta)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match &self.gradient_fn {
            Some(g) => g(theta),
            None => fd_gradient(&|th| self.value(th), theta),
        }
    }
}

/// Maximize the first-order saddlepoint log-likelihood.
pub fn find_spa_mle(
    node: &CgfNode,
    x: &[f64],
    theta0: &[f64],
    transforms: &[Transform],
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = SpaObjective { node, x, second_order: false };
    maximize(&obj, theta0, transforms, opts, ObjectiveKind::Spa)
}

/// Maximize the second-order saddlepoint log-likelihood.
pub fn find_spa2_mle(
    node: &CgfNode,
    x: &[f64],
    theta0: &[f64],
    transforms: &[Transform],
    opts: &FitOptions,
) -> Result<FitResult> {
    let obj = SpaObjective { node, x, second_order: true };
    maximize(&obj, theta0, transforms, opts, ObjectiveKind::Spa2)
}

/// Maximize a model-supplied exact log-likelihood through the same optimizer.
pub fn find_true_mle(
    objective: &dyn Objective,
    theta0: &[f64],
    transforms: &[Transform],
    opts: &FitOptions,
) -> Result<FitResult> {
    maximize(objective, theta0, transforms, opts, ObjectiveKind::TrueOracle)
}

/// Fit the saddlepoint MLE, then evaluate the approximated discrepancy at it.
pub fn fit_with_discrepancy(
    node: &CgfNode,
    x: &[f64],
    theta0: &[f64],
    transforms: &[Transform],
    opts: &FitOptions,
) -> Result<(FitResult, DiscrepancyReport)> {
    let fit = find_spa_mle(node, x, theta0, transforms, opts)?;
    let report = discrepancy_report(node, fit.theta_hat.as_slice(), x, opts.hess_mode)?;
    Ok((fit, report))
}

struct Transformed<'a> {
    obj: &'a dyn Objective,
    transforms: &'a [Transform],
}

impl Transformed<'_> {
    fn theta(&self, phi: &[f64]) -> Vec<f64> {
        constrain_all(self.transforms, phi)
    }

    fn value(&self, phi: &[f64]) -> Result<f64> {
        let v = self.obj.value(&self.theta(phi))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::domain("objective evaluated to a non-finite value"))
        }
    }

    /// Returns (value, gradient in φ, gradient in θ).
    fn value_grads(&self, phi: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let theta = self.theta(phi);
        let v = self.obj.value(&theta)?;
        let g_theta = self.obj.gradient(&theta)?;
        let g_phi = g_theta
            .iter()
            .zip(self.transforms.iter().zip(phi))
            .map(|(g, (tr, &p))| g * tr.jacobian(p))
            .collect();
        Ok((v, g_phi, g_theta))
    }
}

fn maximize(
    obj: &dyn Objective,
    theta0: &[f64],
    transforms: &[Transform],
    opts: &FitOptions,
    kind: ObjectiveKind,
) -> Result<FitResult> {
    let p = theta0.len();
    if transforms.len() != p {
        return Err(Error::dim(p, transforms.len()));
    }
    let wrapped = Transformed { obj, transforms };
    let mut phi = unconstrain_all(transforms, theta0);
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("initial parameters violate their transforms"));
    }

    let (mut f, mut g_phi, mut g_theta) = wrapped.value_grads(&phi)?;
    let mut h_inv = Mat::<f64>::identity(p);
    let mut scaled = false;
    let mut status = FitStatus::MaxIter;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter {
        iterations = iter;
        if vec_inf_norm(&g_theta) <= opts.grad_tol * (1.0 + f.abs()) {
            status = FitStatus::Converged;
            break;
        }

        // ascent direction H⁻¹ g, reset to steepest ascent if not uphill
        let mut dir = h_inv.matvec(&g_phi);
        let mut slope: f64 = dir.iter().zip(&g_phi).map(|(d, g)| d * g).sum();
        let uphill = slope > 0.0 && dir.iter().all(|v| v.is_finite());
        if !uphill {
            h_inv = Mat::identity(p);
            scaled = false;
            dir = g_phi.clone();
            slope = g_phi.iter().map(|g| g * g).sum();
        }

        // backtracking Armijo line search; the cushion keeps rounding noise in
        // f from rejecting every step once improvements fall below 1 ulp
        let cushion = 4.0 * f64::EPSILON * (1.0 + f.abs());
        let mut step = 1.0f64;
        let mut found = None;
        for _ in 0..60 {
            let cand: Vec<f64> = phi.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            if let Ok(v) = wrapped.value(&cand) {
                if v >= f + 1e-4 * step * slope - cushion {
                    found = Some((cand, v));
                    break;
                }
            }
            step *= 0.5;
            if step * vec_inf_norm(&dir) < opts.step_floor {
                break;
            }
        }
        let Some((phi_new, f_new)) = found else {
            status = FitStatus::LineSearchFailed;
            break;
        };

        let (_, g_phi_new, g_theta_new) = wrapped.value_grads(&phi_new)?;
        let s: Vec<f64> = phi_new.iter().zip(&phi).map(|(a, b)| a - b).collect();
        // minimization convention for the update: y = ∇m_new − ∇m_old = g_old − g_new
        let y: Vec<f64> = g_phi.iter().zip(&g_phi_new).map(|(old, new)| old - new).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-10 * yy.sqrt() * s.iter().map(|v| v * v).sum::<f64>().sqrt() {
            if !scaled {
                h_inv = Mat::identity(p);
                let tau = sy / yy;
                for i in 0..p {
                    h_inv[(i, i)] = tau;
                }
                scaled = true;
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }

        phi = phi_new;
        f = f_new;
        g_phi = g_phi_new;
        g_theta = g_theta_new;
    }

    // Polish also rescues a stalled line search or a near-converged MaxIter
    // run: the Newton iteration on the gradient accepts only norm-decreasing
    // steps, so it cannot make a converged result worse.
    let near = vec_inf_norm(&g_theta) <= 1e3 * opts.grad_tol * (1.0 + f.abs());
    if opts.polish && (status != FitStatus::MaxIter || near) {
        polish(&wrapped, &mut phi, &mut f, &mut g_phi, &mut g_theta);
    }
    if vec_inf_norm(&g_theta) <= opts.grad_tol * (1.0 + f.abs()) {
        status = FitStatus::Converged;
    }

    let theta_hat = wrapped.theta(&phi);
    let hessian = hessian_original(&wrapped, &phi)?;
    let standard_errors = wald_errors(&hessian);

    Ok(FitResult {
        theta_hat: ParamVector(theta_hat),
        loglik: f,
        grad_norm: vec_inf_norm(&g_theta),
        hessian,
        standard_errors,
        status,
        objective_kind: kind,
        iterations,
    })
}

fn bfgs_update(h_inv: &mut Mat<f64>, s: &[f64], y: &[f64], sy: f64) {
    let p = s.len();
    let rho = 1.0 / sy;
    let hy = h_inv.matvec(y);
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    // H ← H − ρ(s yᵀH + H y sᵀ) + ρ²(yᵀH y)s sᵀ + ρ s sᵀ
    for i in 0..p {
        for j in 0..p {
            let v = h_inv[(i, j)] - rho * (s[i] * hy[j] + hy[i] * s[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
            h_inv[(i, j)] = v;
        }
    }
}

/// Newton iteration on the transformed gradient, using a finite-difference
/// Jacobian of the analytic gradient. Accepts steps only while the gradient
/// norm decreases; near the optimum this reaches the rounding floor in a few
/// iterations.
fn polish(
    wrapped: &Transformed<'_>,
    phi: &mut Vec<f64>,
    f: &mut f64,
    g_phi: &mut Vec<f64>,
    g_theta: &mut Vec<f64>,
) {
    let p = phi.len();
    let eps = f64::EPSILON.cbrt();
    for _ in 0..8 {
        let gnorm = vec_inf_norm(g_phi);
        if gnorm == 0.0 {
            break;
        }
        let mut jac = Mat::<f64>::zeros(p, p);
        let mut ok = true;
        for i in 0..p {
            let h = eps * (1.0 + phi[i].abs());
            let mut up = phi.clone();
            up[i] += h;
            let mut dn = phi.clone();
            dn[i] -= h;
            match (wrapped.value_grads(&up), wrapped.value_grads(&dn)) {
                (Ok((_, gu, _)), Ok((_, gd, _))) => {
                    for j in 0..p {
                        jac[(i, j)] = (gu[j] - gd[j]) / (2.0 * h);
                    }
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        for i in 0..p {
            for j in 0..i {
                let avg = 0.5 * (jac[(i, j)] + jac[(j, i)]);
                jac[(i, j)] = avg;
                jac[(j, i)] = avg;
            }
        }
        // solve (−J) Δ = g so that φ + Δ is the Newton step
        let mut neg = jac;
        for v in neg.data.iter_mut() {
            *v = -*v;
        }
        let Some(ldl) = ldl_factor(&neg) else { break };
        let delta = ldl.solve(g_phi);

        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..10 {
            let cand: Vec<f64> =
                phi.iter().zip(&delta).map(|(a, b)| a + scale * b).collect();
            if let Ok((fv, gp, gt)) = wrapped.value_grads(&cand) {
                if vec_inf_norm(&gp) < gnorm {
                    *phi = cand;
                    *f = fv;
                    *g_phi = gp;
                    *g_theta = gt;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
}

/// Hessian of the objective in the original parameterization: finite
/// differences of the gradient in φ, pulled back by the delta method
/// (the first-order term vanishes at a stationary point).
fn hessian_original(wrapped: &Transformed<'_>, phi: &[f64]) -> Result<Mat<f64>> {
    let p = phi.len();
    let eps = f64::EPSILON.cbrt();
    let mut h_phi = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        let h = eps * (1.0 + phi[i].abs());
        let mut up = phi.to_vec();
        up[i] += h;
        let mut dn = phi.to_vec();
        dn[i] -= h;
        let (_, gu, _) = wrapped.value_grads(&up)?;
        let (_, gd, _) = wrapped.value_grads(&dn)?;
        for j in 0..p {
            h_phi[(i, j)] = (gu[j] - gd[j]) / (2.0 * h);
        }
    }
    let mut out = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let ji = wrapped.transforms[i].jacobian(phi[i]);
            let jj = wrapped.transforms[j].jacobian(phi[j]);
            out[(i, j)] = 0.5 * (h_phi[(i, j)] + h_phi[(j, i)]) / (ji * jj);
        }
    }
    if out.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteHessian);
    }
    Ok(out)
}

fn wald_errors(hessian: &Mat<f64>) -> Option<Vec<f64>> {
    let p = hessian.nrows;
    let mut neg = hessian.clone();
    for v in neg.data.iter_mut() {
        *v = -*v;
    }
    let ldl = ldl_factor(&neg)?;
    let cov = ldl.inverse();
    Some((0..p).map(|i| cov[(i, i)].sqrt()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgf::ParamExpr;

    fn gamma_node() -> CgfNode {
        CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0))
    }

    #[test]
    fn gaussian_mean_mle_is_observation() {
        let cov = Mat::from_rows(vec![vec![1.0, 0.2], vec![0.2, 2.0]]);
        let node = CgfNode::multivariate_normal(
            vec![ParamExpr::theta(0), ParamExpr::theta(1)],
            cov,
        )
        .unwrap();
        let x = [0.7, -1.1];
        let fit = find_spa_mle(
            &node,
            &x,
            &[0.0, 0.0],
            &[Transform::Identity, Transform::Identity],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged());
        for (t, xi) in fit.theta_hat.as_slice().iter().zip(&x) {
            assert!((t - xi).abs() < 1e-9);
        }
    }

    #[test]
    fn gamma_spa_mle_solves_stationarity() {
        // stationarity: ln x − ln α + 1/(2α) = 0, independently solved by bisection
        let x = 1.58177f64;
        let f = |a: f64| x.ln() - a.ln() + 0.5 / a;
        let (mut lo, mut hi) = (0.1, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let fit = find_spa_mle(
            &gamma_node(),
            &[x],
            &[1.0],
            &[Transform::Log],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged());
        assert!((fit.theta_hat.0[0] - oracle).abs() < 1e-9, "{} vs {oracle}", fit.theta_hat.0[0]);
        // reference value for this observation
        assert!((fit.theta_hat.0[0] - 2.0248).abs() < 5e-4);
        assert!(fit.grad_norm <= 1e-6 * (1.0 + fit.loglik.abs()));
    }

    #[test]
    fn transform_invariance_of_the_optimum() {
        let x = [2.3];
        let with_log = find_spa_mle(
            &gamma_node(),
            &x,
            &[1.5],
            &[Transform::Log],
            &FitOptions::default(),
        )
        .unwrap();
        let plain = find_spa_mle(
            &gamma_node(),
            &x,
            &[1.5],
            &[Transform::Identity],
            &FitOptions::default(),
        )
        .unwrap();
        assert!((with_log.theta_hat.0[0] - plain.theta_hat.0[0]).abs() < 1e-6);
    }

    #[test]
    fn true_mle_via_callback() {
        use crate::models::special::ln_gamma;
        // gamma true likelihood: ψ(α̂) = ln x
        let x = 1.58177f64;
        let obj = CallbackObjective::new(move |theta: &[f64]| {
            let a = theta[0];
            if a <= 0.0 {
                return Err(Error::domain("shape must be positive"));
            }
            Ok((a - 1.0) * x.ln() - x - ln_gamma(a))
        });
        let fit = find_true_mle(&obj, &[1.0], &[Transform::Log], &FitOptions::default()).unwrap();
        assert!(fit.converged());
        assert!((fit.theta_hat.0[0] - 2.0564).abs() < 5e-4, "{}", fit.theta_hat.0[0]);
        assert_eq!(fit.objective_kind, ObjectiveKind::TrueOracle);
    }

    #[test]
    fn fit_with_discrepancy_gamma() {
        let (fit, report) = fit_with_discrepancy(
            &gamma_node(),
            &[1.58177],
            &[1.0],
            &[Transform::Log],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged());
        assert!((report.delta_hat[0] - 0.033).abs() < 1e-3);
        // closed form δ̂ = 1/(6(2α̂+1))
        let a = fit.theta_hat.0[0];
        assert!((report.delta_hat[0] - 1.0 / (6.0 * (2.0 * a + 1.0))).abs() < 1e-8);
    }

    #[test]
    fn concat_gamma_blockwise_discrepancy() {
        let node = CgfNode::concat(vec![
            CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0)),
            CgfNode::gamma(ParamExpr::theta(1), ParamExpr::constant(1.0)),
        ])
        .unwrap();
        let x = [1.9, 3.4];
        let (fit, report) = fit_with_discrepancy(
            &node,
            &x,
            &[1.0, 1.0],
            &[Transform::Log, Transform::Log],
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged());
        for i in 0..2 {
            let a = fit.theta_hat.0[i];
            let expected = 1.0 / (6.0 * (2.0 * a + 1.0));
            assert!(
                (report.delta_hat[i] - expected).abs() < 1e-8,
                "block {i}: {} vs {expected}",
                report.delta_hat[i]
            );
        }
    }

    #[test]
    fn second_order_objective_shifts_optimum_toward_truth() {
        use crate::models::special::ln_gamma;
        let x = 1.58177;
        let spa = find_spa_mle(&gamma_node(), &[x], &[1.0], &[Transform::Log], &FitOptions::default())
            .unwrap();
        let spa2 =
            find_spa2_mle(&gamma_node(), &[x], &[1.0], &[Transform::Log], &FitOptions::default())
                .unwrap();
        let obj = CallbackObjective::new(move |theta: &[f64]| {
            let a = theta[0];
            if a <= 0.0 {
                return Err(Error::domain("shape must be positive"));
            }
            Ok((a - 1.0) * x.ln() - x - ln_gamma(a))
        });
        let truth = find_true_mle(&obj, &[1.0], &[Transform::Log], &FitOptions::default()).unwrap();
        let d_spa = (spa.theta_hat.0[0] - truth.theta_hat.0[0]).abs();
        let d_spa2 = (spa2.theta_hat.0[0] - truth.theta_hat.0[0]).abs();
        assert!(d_spa2 < d_spa, "{d_spa2} !< {d_spa}");
    }

    #[test]
    fn json_shape() {
        let fit = find_spa_mle(
            &gamma_node(),
            &[2.0],
            &[1.0],
            &[Transform::Log],
            &FitOptions::default(),
        )
        .unwrap();
        let v = fit.to_json_value();
        for key in ["theta", "se", "loglik", "status"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
