//! Composable cumulant generating functions.
//!
//! A [`CgfNode`] is a tree whose leaves are base distributions and whose inner
//! nodes are combinators (i.i.d. sums, linear maps, concatenation of
//! independent blocks, sums of independent variables). Every node exposes five
//! operations, all generic over [`Scalar`]:
//!
//! * `k`           — the CGF value K(t; θ)
//! * `grad_t`      — K'(t; θ), the mean vector at t = 0
//! * `hess_t`      — K''(t; θ), the covariance at t = 0
//! * `k3_contract` — trilinear contraction of the third t-derivative tensor
//! * `k4_contract` — quadrilinear contraction of the fourth t-derivative tensor
//!
//! The contraction operators never materialize third- or fourth-order arrays:
//! multinomial contractions reduce to weighted moments of the contraction
//! vectors under the exponentially tilted cell weights, and combinators push
//! vectors through the tree. Seeding `t` or `θ` with [`Dual`] values yields
//! exact directional derivatives of any of the five operations.

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{mat_vec_generic, tr_mat_vec_generic, Mat};

/// Below this |birth - death| the birth-death CGF switches to a series
/// expansion in the rate difference, keeping the equal-rates limit finite and
/// smoothly differentiable.
const BD_EQUAL_RATES_EPS: f64 = 1e-4;

/// Model parameters θ (column vector of length p).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("parameter vector must have length >= 1"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("parameter vector contains non-finite entries"));
        }
        Ok(ParamVector(entries))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The CGF argument t (row vector of length d).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltVector(pub Vec<f64>);

impl TiltVector {
    pub fn zeros(dim: usize) -> Self {
        TiltVector(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An observed value x (column vector of length d), optionally tagged with the
/// i.i.d. replication count for sum models where x = n u.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub entries: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iid_count: Option<f64>,
}

impl Observation {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("observation contains non-finite entries"));
        }
        Ok(Observation { entries, iid_count: None })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Mapping from the global parameter vector θ to one node-local scalar.
///
/// Index selection plus the small closure of smooth maps needed by the bundled
/// models (a product shows up as gamma shapes of the form ω·τ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamExpr {
    Const(f64),
    Theta(usize),
    Product(Box<ParamExpr>, Box<ParamExpr>),
    Affine { terms: Vec<(f64, usize)>, offset: f64 },
    Exp(Box<ParamExpr>),
    Sigmoid(Box<ParamExpr>),
}

impl ParamExpr {
    pub fn theta(i: usize) -> Self {
        ParamExpr::Theta(i)
    }

    pub fn constant(v: f64) -> Self {
        ParamExpr::Const(v)
    }

    pub fn product(a: ParamExpr, b: ParamExpr) -> Self {
        ParamExpr::Product(Box::new(a), Box::new(b))
    }

    pub fn eval<S: Scalar>(&self, theta: &[S]) -> Result<S> {
        match self {
            ParamExpr::Const(v) => Ok(S::from_f64(*v)),
            ParamExpr::Theta(i) => theta
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::dim(*i + 1, theta.len())),
            ParamExpr::Product(a, b) => Ok(a.eval(theta)? * b.eval(theta)?),
            ParamExpr::Affine { terms, offset } => {
                let mut acc = S::from_f64(*offset);
                for (c, i) in terms {
                    let th = theta
                        .get(*i)
                        .cloned()
                        .ok_or_else(|| Error::dim(*i + 1, theta.len()))?;
                    acc = acc + th.scale(*c);
                }
                Ok(acc)
            }
            ParamExpr::Exp(inner) => Ok(inner.eval(theta)?.exp()),
            ParamExpr::Sigmoid(inner) => {
                let x = inner.eval(theta)?;
                let e = (-x).exp();
                Ok((S::one() + e).recip())
            }
        }
    }

    fn max_theta_index(&self) -> Option<usize> {
        match self {
            ParamExpr::Const(_) => None,
            ParamExpr::Theta(i) => Some(*i),
            ParamExpr::Product(a, b) => a.max_theta_index().max(b.max_theta_index()),
            ParamExpr::Affine { terms, .. } => terms.iter().map(|(_, i)| *i).max(),
            ParamExpr::Exp(inner) | ParamExpr::Sigmoid(inner) => inner.max_theta_index(),
        }
    }
}

/// How a multinomial node obtains its cell probabilities from θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellSpec {
    /// Cell probabilities given directly, one expression per cell.
    Probs(Vec<ParamExpr>),
    /// Latent capture-history cells over `occasions` occasions: each animal is
    /// captured on occasion t with probability `capture[t]` and then correctly
    /// identified with probability `alpha`, independently. Cells are ordered by
    /// the base-3 history index with occasion 0 as the most significant digit,
    /// outcome codes 0 = not captured, 1 = captured-correct, 2 = misidentified.
    MtAlphaHistories {
        occasions: usize,
        alpha: ParamExpr,
        capture: Vec<ParamExpr>,
    },
}

/// Latent capture histories in canonical order (see [`CellSpec::MtAlphaHistories`]).
pub fn mtalpha_latent_histories(occasions: usize) -> Vec<Vec<u8>> {
    let total = 3usize.pow(occasions as u32);
    (0..total)
        .map(|h| {
            let mut digits = vec![0u8; occasions];
            let mut rem = h;
            for t in (0..occasions).rev() {
                digits[t] = (rem % 3) as u8;
                rem /= 3;
            }
            digits
        })
        .collect()
}

impl CellSpec {
    pub fn dim(&self) -> usize {
        match self {
            CellSpec::Probs(p) => p.len(),
            CellSpec::MtAlphaHistories { occasions, .. } => 3usize.pow(*occasions as u32),
        }
    }

    pub fn probs<S: Scalar>(&self, theta: &[S]) -> Result<Vec<S>> {
        match self {
            CellSpec::Probs(exprs) => {
                let mut out = Vec::with_capacity(exprs.len());
                for e in exprs {
                    let v = e.eval(theta)?;
                    if v.primal() < 0.0 || !v.primal().is_finite() {
                        return Err(Error::domain("multinomial cell probability must be >= 0"));
                    }
                    out.push(v);
                }
                Ok(out)
            }
            CellSpec::MtAlphaHistories { occasions, alpha, capture } => {
                if capture.len() != *occasions {
                    return Err(Error::dim(*occasions, capture.len()));
                }
                let a = alpha.eval(theta)?;
                let ap = a.primal();
                if !(0.0..=1.0).contains(&ap) {
                    return Err(Error::domain("identification probability must lie in [0, 1]"));
                }
                let mut p = Vec::with_capacity(*occasions);
                for c in capture {
                    let v = c.eval(theta)?;
                    let vp = v.primal();
                    if !(0.0..=1.0).contains(&vp) {
                        return Err(Error::domain("capture probability must lie in [0, 1]"));
                    }
                    p.push(v);
                }
                let histories = mtalpha_latent_histories(*occasions);
                let mut out = Vec::with_capacity(histories.len());
                for hist in &histories {
                    let mut prob = S::one();
                    for (t, &d) in hist.iter().enumerate() {
                        let factor = match d {
                            0 => S::one() - p[t].clone(),
                            1 => p[t].clone() * a.clone(),
                            _ => p[t].clone() * (S::one() - a.clone()),
                        };
                        prob = prob * factor;
                    }
                    out.push(prob);
                }
                Ok(out)
            }
        }
    }

    fn max_theta_index(&self) -> Option<usize> {
        match self {
            CellSpec::Probs(exprs) => exprs.iter().filter_map(ParamExpr::max_theta_index).max(),
            CellSpec::MtAlphaHistories { alpha, capture, .. } => capture
                .iter()
                .filter_map(ParamExpr::max_theta_index)
                .max()
                .max(alpha.max_theta_index()),
        }
    }
}

/// A node in a CGF composition tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CgfNode {
    Gamma {
        shape: ParamExpr,
        rate: ParamExpr,
    },
    Poisson {
        rate: ParamExpr,
    },
    MultivariateNormal {
        mean: Vec<ParamExpr>,
        cov: Mat<f64>,
    },
    /// Counts over `cells.dim()` cells summing to the (real-valued) index.
    /// The covariance is singular; this node must sit beneath a `LinearMap`
    /// that restores non-singularity before being used as an observable.
    Multinomial {
        index: ParamExpr,
        cells: CellSpec,
    },
    /// Offspring count of a linear birth-death process over unit time,
    /// starting from a single individual.
    BirthDeathOffspring {
        birth: ParamExpr,
        death: ParamExpr,
    },
    IidSum {
        count: ParamExpr,
        child: Box<CgfNode>,
    },
    LinearMap {
        matrix: Mat<f64>,
        child: Box<CgfNode>,
    },
    Concat {
        children: Vec<CgfNode>,
    },
    SumIndependent {
        children: Vec<CgfNode>,
    },
}

impl CgfNode {
    pub fn gamma(shape: ParamExpr, rate: ParamExpr) -> Self {
        CgfNode::Gamma { shape, rate }
    }

    pub fn poisson(rate: ParamExpr) -> Self {
        CgfNode::Poisson { rate }
    }

    pub fn multivariate_normal(mean: Vec<ParamExpr>, cov: Mat<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows != d || cov.ncols != d {
            return Err(Error::dim(d * d, cov.nrows * cov.ncols));
        }
        for i in 0..d {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * (1.0 + cov[(i, j)].abs()) {
                    return Err(Error::domain("covariance matrix must be symmetric"));
                }
            }
        }
        Ok(CgfNode::MultivariateNormal { mean, cov })
    }

    pub fn multinomial(index: ParamExpr, cells: CellSpec) -> Self {
        CgfNode::Multinomial { index, cells }
    }

    pub fn birth_death_offspring(birth: ParamExpr, death: ParamExpr) -> Self {
        CgfNode::BirthDeathOffspring { birth, death }
    }

    pub fn iid_sum(count: ParamExpr, child: CgfNode) -> Self {
        CgfNode::IidSum { count, child: Box::new(child) }
    }

    pub fn linear_map(matrix: Mat<f64>, child: CgfNode) -> Result<Self> {
        if matrix.ncols != child.dim() {
            return Err(Error::dim(child.dim(), matrix.ncols));
        }
        Ok(CgfNode::LinearMap { matrix, child: Box::new(child) })
    }

    pub fn concat(children: Vec<CgfNode>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::domain("concat needs at least one child"));
        }
        Ok(CgfNode::Concat { children })
    }

    pub fn sum_independent(children: Vec<CgfNode>) -> Result<Self> {
        let Some(first) = children.first() else {
            return Err(Error::domain("sum_independent needs at least one child"));
        };
        let d = first.dim();
        if children.iter().any(|c| c.dim() != d) {
            return Err(Error::domain("sum_independent children must share a dimension"));
        }
        Ok(CgfNode::SumIndependent { children })
    }

    /// Observable dimension d.
    pub fn dim(&self) -> usize {
        match self {
            CgfNode::Gamma { .. } | CgfNode::Poisson { .. } | CgfNode::BirthDeathOffspring { .. } => 1,
            CgfNode::MultivariateNormal { mean, .. } => mean.len(),
            CgfNode::Multinomial { cells, .. } => cells.dim(),
            CgfNode::IidSum { child, .. } => child.dim(),
            CgfNode::LinearMap { matrix, .. } => matrix.nrows,
            CgfNode::Concat { children } => children.iter().map(CgfNode::dim).sum(),
            CgfNode::SumIndependent { children } => children[0].dim(),
        }
    }

    /// Number of parameters the tree reads from θ (1 + highest index).
    pub fn param_len(&self) -> usize {
        self.max_theta_index().map_or(0, |i| i + 1)
    }

    fn max_theta_index(&self) -> Option<usize> {
        match self {
            CgfNode::Gamma { shape, rate } => shape.max_theta_index().max(rate.max_theta_index()),
            CgfNode::Poisson { rate } => rate.max_theta_index(),
            CgfNode::MultivariateNormal { mean, .. } => {
                mean.iter().filter_map(ParamExpr::max_theta_index).max()
            }
            CgfNode::Multinomial { index, cells } => {
                index.max_theta_index().max(cells.max_theta_index())
            }
            CgfNode::BirthDeathOffspring { birth, death } => {
                birth.max_theta_index().max(death.max_theta_index())
            }
            CgfNode::IidSum { count, child } => {
                count.max_theta_index().max(child.max_theta_index())
            }
            CgfNode::LinearMap { child, .. } => child.max_theta_index(),
            CgfNode::Concat { children } | CgfNode::SumIndependent { children } => {
                children.iter().filter_map(CgfNode::max_theta_index).max()
            }
        }
    }

    /// True when the node's covariance is structurally singular (multinomial
    /// counts sum to their index). A `LinearMap` is assumed to restore
    /// non-singularity; the factorization in the solver still verifies this
    /// numerically.
    pub fn singular_covariance(&self) -> bool {
        match self {
            CgfNode::Multinomial { .. } => true,
            CgfNode::Gamma { .. }
            | CgfNode::Poisson { .. }
            | CgfNode::MultivariateNormal { .. }
            | CgfNode::BirthDeathOffspring { .. }
            | CgfNode::LinearMap { .. } => false,
            CgfNode::IidSum { child, .. } => child.singular_covariance(),
            CgfNode::Concat { children } => children.iter().any(CgfNode::singular_covariance),
            CgfNode::SumIndependent { children } => {
                children.iter().all(CgfNode::singular_covariance)
            }
        }
    }

    /// Whether the (primal) tilt lies inside the CGF domain.
    pub fn in_domain(&self, t: &[f64], theta: &[f64]) -> bool {
        if t.len() != self.dim() {
            return false;
        }
        match self {
            CgfNode::Gamma { rate, .. } => match rate.eval(theta) {
                Ok(r) => t[0] < r,
                Err(_) => false,
            },
            CgfNode::Poisson { .. }
            | CgfNode::MultivariateNormal { .. }
            | CgfNode::Multinomial { .. } => true,
            CgfNode::BirthDeathOffspring { birth, death } => {
                match (birth.eval(theta), death.eval(theta)) {
                    (Ok(b), Ok(m)) => bd_in_domain(t[0], b, m),
                    _ => false,
                }
            }
            CgfNode::IidSum { child, .. } => child.in_domain(t, theta),
            CgfNode::LinearMap { matrix, child } => {
                let s = tr_mat_vec_generic(matrix, t);
                child.in_domain(&s, theta)
            }
            CgfNode::Concat { children } => {
                let mut offset = 0;
                children.iter().all(|c| {
                    let d = c.dim();
                    let ok = c.in_domain(&t[offset..offset + d], theta);
                    offset += d;
                    ok
                })
            }
            CgfNode::SumIndependent { children } => {
                children.iter().all(|c| c.in_domain(t, theta))
            }
        }
    }

    fn check_t_len<S>(&self, t: &[S]) -> Result<()> {
        if t.len() != self.dim() {
            return Err(Error::dim(self.dim(), t.len()));
        }
        Ok(())
    }

    /// K(t; θ).
    pub fn k<S: Scalar>(&self, t: &[S], theta: &[S]) -> Result<S> {
        self.check_t_len(t)?;
        match self {
            CgfNode::Gamma { shape, rate } => {
                let (a, r) = gamma_params(shape, rate, theta)?;
                gamma_domain(&t[0], &r)?;
                // K = -a ln(1 - t/r)
                let z = (-(t[0].clone() / r)).ln_1p();
                Ok(-(a * z))
            }
            CgfNode::Poisson { rate } => {
                let lam = poisson_rate(rate, theta)?;
                Ok(lam * t[0].exp_m1())
            }
            CgfNode::MultivariateNormal { mean, cov } => {
                let d = mean.len();
                let mut acc = S::zero();
                for i in 0..d {
                    acc = acc + t[i].clone() * mean[i].eval(theta)?;
                    for j in 0..d {
                        acc = acc + (t[i].clone() * t[j].clone()).scale(0.5 * cov[(i, j)]);
                    }
                }
                Ok(acc)
            }
            CgfNode::Multinomial { index, cells } => {
                let n = index.eval(theta)?;
                let pi = cells.probs(theta)?;
                let (log_z, _) = tilted_log_norm(&pi, t);
                Ok(n * log_z)
            }
            CgfNode::BirthDeathOffspring { birth, death } => {
                let (b, m) = bd_params(birth, death, theta)?;
                bd_cgf(t[0].clone(), b, m)
            }
            CgfNode::IidSum { count, child } => {
                let c = iid_count(count, theta)?;
                Ok(c * child.k(t, theta)?)
            }
            CgfNode::LinearMap { matrix, child } => {
                let s = tr_mat_vec_generic(matrix, t);
                child.k(&s, theta)
            }
            CgfNode::Concat { children } => {
                let mut acc = S::zero();
                let mut offset = 0;
                for c in children {
                    let d = c.dim();
                    acc = acc + c.k(&t[offset..offset + d], theta)?;
                    offset += d;
                }
                Ok(acc)
            }
            CgfNode::SumIndependent { children } => {
                let mut acc = S::zero();
                for c in children {
                    acc = acc + c.k(t, theta)?;
                }
                Ok(acc)
            }
        }
    }

    /// K'(t; θ) as a column vector; at t = 0 this is the mean.
    pub fn grad_t<S: Scalar>(&self, t: &[S], theta: &[S]) -> Result<Vec<S>> {
        self.check_t_len(t)?;
        match self {
            CgfNode::Gamma { shape, rate } => {
                let (a, r) = gamma_params(shape, rate, theta)?;
                gamma_domain(&t[0], &r)?;
                Ok(vec![a / (r - t[0].clone())])
            }
            CgfNode::Poisson { rate } => {
                let lam = poisson_rate(rate, theta)?;
                Ok(vec![lam * t[0].exp()])
            }
            CgfNode::MultivariateNormal { mean, cov } => {
                let d = mean.len();
                let mut out = Vec::with_capacity(d);
                for i in 0..d {
                    let mut acc = mean[i].eval(theta)?;
                    for j in 0..d {
                        acc = acc + t[j].scale(cov[(i, j)]);
                    }
                    out.push(acc);
                }
                Ok(out)
            }
            CgfNode::Multinomial { index, cells } => {
                let n = index.eval(theta)?;
                let pi = cells.probs(theta)?;
                let (_, w) = tilted_log_norm(&pi, t);
                Ok(w.into_iter().map(|wi| n.clone() * wi).collect())
            }
            CgfNode::BirthDeathOffspring { birth, death } => {
                let (b, m) = bd_params(birth, death, theta)?;
                Ok(vec![bd_deriv1(t[0].clone(), b, m)?])
            }
            CgfNode::IidSum { count, child } => {
                let c = iid_count(count, theta)?;
                Ok(child
                    .grad_t(t, theta)?
                    .into_iter()
                    .map(|g| c.clone() * g)
                    .collect())
            }
            CgfNode::LinearMap { matrix, child } => {
                let s = tr_mat_vec_generic(matrix, t);
                let g = child.grad_t(&s, theta)?;
                Ok(mat_vec_generic(matrix, &g))
            }
            CgfNode::Concat { children } => {
                let mut out = Vec::with_capacity(self.dim());
                let mut offset = 0;
                for c in children {
                    let d = c.dim();
                    out.extend(c.grad_t(&t[offset..offset + d], theta)?);
                    offset += d;
                }
                Ok(out)
            }
            CgfNode::SumIndependent { children } => {
                let mut acc = children[0].grad_t(t, theta)?;
                for c in &children[1..] {
                    for (a, g) in acc.iter_mut().zip(c.grad_t(t, theta)?) {
                        *a = a.clone() + g;
                    }
                }
                Ok(acc)
            }
        }
    }

    /// K''(t; θ), symmetric by construction.
    pub fn hess_t<S: Scalar>(&self, t: &[S], theta: &[S]) -> Result<Mat<S>> {
        self.check_t_len(t)?;
        match self {
            CgfNode::Gamma { shape, rate } => {
                let (a, r) = gamma_params(shape, rate, theta)?;
                gamma_domain(&t[0], &r)?;
                let z = r - t[0].clone();
                Ok(Mat::from_rows(vec![vec![a / (z.clone() * z)]]))
            }
            CgfNode::Poisson { rate } => {
                let lam = poisson_rate(rate, theta)?;
                Ok(Mat::from_rows(vec![vec![lam * t[0].exp()]]))
            }
            CgfNode::MultivariateNormal { mean, cov } => {
                let _ = mean; // K'' is the constant covariance
                Ok(cov.lift())
            }
            CgfNode::Multinomial { index, cells } => {
                let n = index.eval(theta)?;
                let pi = cells.probs(theta)?;
                let (_, w) = tilted_log_norm(&pi, t);
                let d = w.len();
                let mut h = Mat::zeros(d, d);
                for i in 0..d {
                    for j in 0..=i {
                        let mut v = -(w[i].clone() * w[j].clone());
                        if i == j {
                            v = v + w[i].clone();
                        }
                        let v = n.clone() * v;
                        h[(i, j)] = v.clone();
                        h[(j, i)] = v;
                    }
                }
                Ok(h)
            }
            CgfNode::BirthDeathOffspring { birth, death } => {
                let (b, m) = bd_params(birth, death, theta)?;
                Ok(Mat::from_rows(vec![vec![bd_deriv2(t[0].clone(), b, m)?]]))
            }
            CgfNode::IidSum { count, child } => {
                let c = iid_count(count, theta)?;
                let mut h = child.hess_t(t, theta)?;
                for v in h.data.iter_mut() {
                    *v = c.clone() * v.clone();
                }
                Ok(h)
            }
            CgfNode::LinearMap { matrix, child } => {
                let s = tr_mat_vec_generic(matrix, t);
                let hc = child.hess_t(&s, theta)?;
                // A H A^T
                let (dx, dy) = (matrix.nrows, matrix.ncols);
                let mut out = Mat::zeros(dx, dx);
                for i in 0..dx {
                    for j in 0..=i {
                        let mut acc = S::zero();
                        for k in 0..dy {
                            let aik = matrix[(i, k)];
                            if aik == 0.0 {
                                continue;
                            }
                            for l in 0..dy {
                                let ajl = matrix[(j, l)];
                                if ajl == 0.0 {
                                    continue;
                                }
                                acc = acc + hc[(k, l)].scale(aik * ajl);
                            }
                        }
                        out[(i, j)] = acc.clone();
                        out[(j, i)] = acc;
                    }
                }
                Ok(out)
            }
            CgfNode::Concat { children } => {
                let d = self.dim();
                let mut out = Mat::zeros(d, d);
                let mut offset = 0;
                for c in children {
                    let dc = c.dim();
                    let h = c.hess_t(&t[offset..offset + dc], theta)?;
                    for i in 0..dc {
                        for j in 0..dc {
                            out[(offset + i, offset + j)] = h[(i, j)].clone();
                        }
                    }
                    offset += dc;
                }
                Ok(out)
            }
            CgfNode::SumIndependent { children } => {
                let mut acc = children[0].hess_t(t, theta)?;
                for c in &children[1..] {
                    let h = c.hess_t(t, theta)?;
                    for (a, b) in acc.data.iter_mut().zip(h.data) {
                        *a = a.clone() + b;
                    }
                }
                Ok(acc)
            }
        }
    }

    /// Trilinear contraction of the third t-derivative tensor with `v1,v2,v3`.
    pub fn k3_contract<S: Scalar>(&self, t: &[S], theta: &[S], v1: &[S], v2: &[S], v3: &[S]) -> Result<S> {
        self.check_t_len(t)?;
        for v in [v1, v2, v3] {
            if v.len() != self.dim() {
                return Err(Error::dim(self.dim(), v.len()));
            }
        }
        match self {
            CgfNode::Gamma { shape, rate } => {
                let (a, r) = gamma_params(shape, rate, theta)?;
                gamma_domain(&t[0], &r)?;
                let z = (r - t[0].clone()).powi(3);
                Ok((a / z).scale(2.0) * v1[0].clone() * v2[0].clone() * v3[0].clone())
            }
            CgfNode::Poisson { rate } => {
                let lam = poisson_rate(rate, theta)?;
                Ok(lam * t[0].exp() * v1[0].clone() * v2[0].clone() * v3[0].clone())
            }
            CgfNode::MultivariateNormal { .. } => Ok(S::zero()),
            CgfNode::Multinomial { index, cells } => {
                let n = index.eval(theta)?;
                let pi = cells.probs(theta)?;
                let (_, w) = tilted_log_norm(&pi, t);
                Ok(n * multinomial_k3(&w, v1, v2, v3))
            }
            CgfNode::BirthDeathOffspring { birth, death } => {
                let (b, m) = bd_params(birth, death, theta)?;
                let d3 = bd_deriv3(t[0].clone(), b, m)?;
                Ok(d3 * v1[0].clone() * v2[0].clone() * v3[0].clone())
            }
            CgfNode::IidSum { count, child } => {
                let c = iid_count(count, theta)?;
                Ok(c * child.k3_contract(t, theta, v1, v2, v3)?)
            }
            CgfNode::LinearMap { matrix, child } => {
                let s = tr_mat_vec_generic(matrix, t);
                let w1 = tr_mat_vec_generic(matrix, v1);
                let w2 = tr_mat_vec_generic(matrix, v2);
                let w3 = tr_mat_vec_generic(matrix, v3);
                child.k3_contract(&s, theta, &w1, &w2, &w3)
            }
            CgfNode::Concat { children } => {
                let mut acc = S::zero();
                let mut offset = 0;
                for c in children {
                    let d = c.dim();
                    let r = offset..offset + d;
                    acc = acc
                        + c.k3_contract(&t[r.clone()], theta, &v1[r.clone()], &v2[r.clone()], &v3[r])?;
                    offset += d;
                }
                Ok(acc)
            }
            CgfNode::SumIndependent { children } => {
                let mut acc = S::zero();
                for c in children {
                    acc = acc + c.k3_contract(t, theta, v1, v2, v3)?;
                }
                Ok(acc)
            }
        }
    }

    /// Quadrilinear contraction of the fourth t-derivative tensor.
    pub fn k4_contract<S: Scalar>(
        &self,
        t: &[S],
        theta: &[S],
        v1: &[S],
        v2: &[S],
        v3: &[S],
        v4: &[S],
    ) -> Result<S> {
        self.check_t_len(t)?;
        for v in [v1, v2, v3, v4] {
            if v.len() != self.dim() {
                return Err(Error::dim(self.dim(), v.len()));
            }
        }
        match self {
            CgfNode::Gamma { shape, rate } => {
                let (a, r) = gamma_params(shape, rate, theta)?;
                gamma_domain(&t[0], &r)?;
                let z = (r - t[0].clone()).powi(4);
                Ok((a / z).scale(6.0)
                    * v1[0].clone()
                    * v2[0].clone()
                    * v3[0].clone()
                    * v4[0].clone())
            }
            CgfNode::Poisson { rate } => {
                let lam = poisson_rate(rate, theta)?;
                Ok(lam * t[0].exp() * v1[0].clone() * v2[0].clone() * v3[0].clone() * v4[0].clone())
            }
            CgfNode::MultivariateNormal { .. } => Ok(S::zero()),
            CgfNode::Multinomial { index, cells } => {
                let n = index.eval(theta)?;
                let pi = cells.probs(theta)?;
                let (_, w) = tilted_log_norm(&pi, t);
                Ok(n * multinomial_k4(&w, v1, v2, v3, v4))
            }
            CgfNode::BirthDeathOffspring { birth, death } => {
                let (b, m) = bd_params(birth, death, theta)?;
                let d4 = bd_deriv4(t[0].clone(), b, m)?;
                Ok(d4 * v1[0].clone() * v2[0].clone() * v3[0].clone() * v4[0].clone())
            }
            CgfNode::IidSum { count, child } => {
                let c = iid_count(count, theta)?;
                Ok(c * child.k4_contract(t, theta, v1, v2, v3, v4)?)
            }
            CgfNode::LinearMap { matrix, child } => {
                let s = tr_mat_vec_generic(matrix, t);
                let w1 = tr_mat_vec_generic(matrix, v1);
                let w2 = tr_mat_vec_generic(matrix, v2);
                let w3 = tr_mat_vec_generic(matrix, v3);
                let w4 = tr_mat_vec_generic(matrix, v4);
                child.k4_contract(&s, theta, &w1, &w2, &w3, &w4)
            }
            CgfNode::Concat { children } => {
                let mut acc = S::zero();
                let mut offset = 0;
                for c in children {
                    let d = c.dim();
                    let r = offset..offset + d;
                    acc = acc
                        + c.k4_contract(
                            &t[r.clone()],
                            theta,
                            &v1[r.clone()],
                            &v2[r.clone()],
                            &v3[r.clone()],
                            &v4[r],
                        )?;
                    offset += d;
                }
                Ok(acc)
            }
            CgfNode::SumIndependent { children } => {
                let mut acc = S::zero();
                for c in children {
                    acc = acc + c.k4_contract(t, theta, v1, v2, v3, v4)?;
                }
                Ok(acc)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Partial derivatives with respect to θ of a CGF quantity at fixed (t, θ),
/// one output entry per seed direction. The closure receives dual-seeded
/// copies of `t` (held constant) and `θ`; chain-rule propagation makes the
/// result exact to machine precision.
pub fn differentiate_wrt_params<F>(
    t: &[f64],
    theta: &[f64],
    seeds: &[Vec<f64>],
    f: F,
) -> Result<Vec<f64>>
where
    F: FnOnce(&[Dual<f64>], &[Dual<f64>]) -> Result<Dual<f64>>,
{
    let arity = seeds.len();
    for s in seeds {
        if s.len() != theta.len() {
            return Err(Error::dim(theta.len(), s.len()));
        }
    }
    let theta_d: Vec<Dual<f64>> = theta
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual::new(v, (0..arity).map(|k| seeds[k][i]).collect()))
        .collect();
    let t_d: Vec<Dual<f64>> = t.iter().map(|&v| Dual::constant(v)).collect();
    let out = f(&t_d, &theta_d)?;
    Ok((0..arity).map(|k| out.partial(k)).collect())
}

/// Gradient of K(t; θ) in θ at fixed t (one seed per parameter).
pub fn grad_k_wrt_params(node: &CgfNode, t: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    let p = theta.len();
    let seeds: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut e = vec![0.0; p];
            e[i] = 1.0;
            e
        })
        .collect();
    differentiate_wrt_params(t, theta, &seeds, |t_d, th_d| node.k(t_d, th_d))
}

fn gamma_params<S: Scalar>(shape: &ParamExpr, rate: &ParamExpr, theta: &[S]) -> Result<(S, S)> {
    let a = shape.eval(theta)?;
    let r = rate.eval(theta)?;
    if a.primal() <= 0.0 || r.primal() <= 0.0 {
        return Err(Error::domain("gamma shape and rate must be positive"));
    }
    Ok((a, r))
}

fn gamma_domain<S: Scalar>(t: &S, r: &S) -> Result<()> {
    if t.primal() < r.primal() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "gamma CGF requires t < rate (t = {}, rate = {})",
            t.primal(),
            r.primal()
        )))
    }
}

fn poisson_rate<S: Scalar>(rate: &ParamExpr, theta: &[S]) -> Result<S> {
    let lam = rate.eval(theta)?;
    if lam.primal() <= 0.0 {
        return Err(Error::domain("poisson rate must be positive"));
    }
    Ok(lam)
}

fn bd_params<S: Scalar>(birth: &ParamExpr, death: &ParamExpr, theta: &[S]) -> Result<(S, S)> {
    let b = birth.eval(theta)?;
    let m = death.eval(theta)?;
    if b.primal() <= 0.0 || m.primal() <= 0.0 {
        return Err(Error::domain("birth and death rates must be positive"));
    }
    Ok((b, m))
}

fn iid_count<S: Scalar>(count: &ParamExpr, theta: &[S]) -> Result<S> {
    let c = count.eval(theta)?;
    if c.primal() <= 0.0 {
        return Err(Error::domain("iid-sum count must be positive"));
    }
    Ok(c)
}

/// Log-normalizer and tilted weights of a multinomial node. The normalizer is
/// written as `Z = 1 + Σ_i π_i (e^{t_i} − 1)`, which equals `Σ_i π_i e^{t_i}`
/// on the probability simplex but bakes the constraint `Σπ = 1` into the
/// functional form: K(0; θ) = 0 and ∇_θ K(0; θ) = 0 hold exactly, and
/// θ-derivatives treat the cells as a point on the simplex rather than as
/// free coordinates. Since ∂Z/∂t_j = Z w_j, every higher t-derivative keeps
/// the usual tilted-weight structure.
fn tilted_log_norm<S: Scalar>(pi: &[S], t: &[S]) -> (S, Vec<S>) {
    let mut zm1 = S::zero();
    for (pii, ti) in pi.iter().zip(t) {
        zm1 = zm1 + pii.clone() * ti.exp_m1();
    }
    let log_z = zm1.ln_1p();
    let z = S::one() + zm1;
    let w = t
        .iter()
        .zip(pi)
        .map(|(ti, pii)| pii.clone() * ti.exp() / z.clone())
        .collect();
    (log_z, w)
}

/// Third multinomial cumulant contraction per unit index, via weighted moments
/// of the contraction vectors under the tilted weights.
fn multinomial_k3<S: Scalar>(w: &[S], a: &[S], b: &[S], c: &[S]) -> S {
    let mut ma = S::zero();
    let mut mb = S::zero();
    let mut mc = S::zero();
    let mut mab = S::zero();
    let mut mac = S::zero();
    let mut mbc = S::zero();
    let mut mabc = S::zero();
    for i in 0..w.len() {
        let wi = w[i].clone();
        let (ai, bi, ci) = (a[i].clone(), b[i].clone(), c[i].clone());
        ma = ma + wi.clone() * ai.clone();
        mb = mb + wi.clone() * bi.clone();
        mc = mc + wi.clone() * ci.clone();
        mab = mab + wi.clone() * ai.clone() * bi.clone();
        mac = mac + wi.clone() * ai.clone() * ci.clone();
        mbc = mbc + wi.clone() * bi.clone() * ci.clone();
        mabc = mabc + wi * ai * bi * ci;
    }
    mabc - mab * mc.clone() - mac * mb.clone() - mbc * ma.clone()
        + (ma * mb * mc).scale(2.0)
}

/// Fourth multinomial cumulant contraction per unit index.
fn multinomial_k4<S: Scalar>(w: &[S], a: &[S], b: &[S], c: &[S], d: &[S]) -> S {
    let mut m = [(); 15].map(|_| S::zero());
    // order: a b c d ab ac ad bc bd cd abc abd acd bcd abcd
    for i in 0..w.len() {
        let wi = w[i].clone();
        let (ai, bi, ci, di) = (a[i].clone(), b[i].clone(), c[i].clone(), d[i].clone());
        m[0] = m[0].clone() + wi.clone() * ai.clone();
        m[1] = m[1].clone() + wi.clone() * bi.clone();
        m[2] = m[2].clone() + wi.clone() * ci.clone();
        m[3] = m[3].clone() + wi.clone() * di.clone();
        m[4] = m[4].clone() + wi.clone() * ai.clone() * bi.clone();
        m[5] = m[5].clone() + wi.clone() * ai.clone() * ci.clone();
        m[6] = m[6].clone() + wi.clone() * ai.clone() * di.clone();
        m[7] = m[7].clone() + wi.clone() * bi.clone() * ci.clone();
        m[8] = m[8].clone() + wi.clone() * bi.clone() * di.clone();
        m[9] = m[9].clone() + wi.clone() * ci.clone() * di.clone();
        m[10] = m[10].clone() + wi.clone() * ai.clone() * bi.clone() * ci.clone();
        m[11] = m[11].clone() + wi.clone() * ai.clone() * bi.clone() * di.clone();
        m[12] = m[12].clone() + wi.clone() * ai.clone() * ci.clone() * di.clone();
        m[13] = m[13].clone() + wi.clone() * bi.clone() * ci.clone() * di.clone();
        m[14] = m[14].clone() + wi * ai * bi * ci * di;
    }
    let [ma, mb, mc, md, mab, mac, mad, mbc, mbd, mcd, mabc, mabd, macd, mbcd, mabcd] = m;
    mabcd
        - (mabc * md.clone() + mabd * mc.clone() + macd * mb.clone() + mbcd * ma.clone())
        - (mab.clone() * mcd.clone() + mac.clone() * mbd.clone() + mad.clone() * mbc.clone())
        + (mab * mc.clone() * md.clone()
            + mac * mb.clone() * md.clone()
            + mad * mb.clone() * mc.clone()
            + mbc * ma.clone() * md.clone()
            + mbd * ma.clone() * mc.clone()
            + mcd * ma.clone() * mb.clone())
        .scale(2.0)
        - (ma * mb * mc * md).scale(6.0)
}

/// Probability generating function pieces of the unit-time linear birth-death
/// offspring distribution, evaluated at s = e^t:
///
///   F(s) = (μ(s-1) - e^{-(λ-μ)}(λs-μ)) / (λ(s-1) - e^{-(λ-μ)}(λs-μ)),
///
/// with the equal-rates case handled by a series in h = λ - μ around h = 0.
fn bd_fraction_parts<S: Scalar>(s: S, birth: S, death: S) -> (S, S) {
    let h = birth.clone() - death.clone();
    let sm1 = s.clone() - S::one();
    if h.primal().abs() > BD_EQUAL_RATES_EPS {
        let g = (-h).exp();
        let w = birth.clone() * s - death.clone();
        let num = death * sm1.clone() - g.clone() * w.clone();
        let den = birth * sm1 - g * w;
        (num, den)
    } else {
        // num = -h (A - hB + h^2 C - h^3 D), den = -h (A' - hB + h^2 C - h^3 D)
        // with A = s - μ(s-1), A' = 1 - μ(s-1); the common -h factor cancels.
        let ms = death * sm1.clone();
        let a = s.clone() - ms.clone();
        let ap = S::one() - ms.clone();
        let b = s.clone() - ms.scale(0.5);
        let c = s.scale(0.5) - ms.scale(1.0 / 6.0);
        let d = s.scale(1.0 / 6.0) - ms.scale(1.0 / 24.0);
        let poly = ((d * (-h.clone()) + c) * h.clone() - b) * h;
        (a + poly.clone(), ap + poly)
    }
}

fn bd_in_domain<S: Scalar>(t: f64, birth: S, death: S) -> bool {
    let bp = birth.primal();
    let mp = death.primal();
    if !(bp > 0.0 && mp > 0.0 && t.is_finite()) {
        return false;
    }
    let s = t.exp();
    let (num, den) = bd_fraction_parts(s, bp, mp);
    if bp - mp > BD_EQUAL_RATES_EPS {
        // supercritical branch: both factors negative between s = 1 and the
        // generating-function singularity
        num < 0.0 && den < 0.0
    } else {
        num > 0.0 && den > 0.0
    }
}

fn bd_cgf<S: Scalar>(t: S, birth: S, death: S) -> Result<S> {
    if !bd_in_domain(t.primal(), birth.clone(), death.clone()) {
        return Err(Error::domain(format!(
            "birth-death CGF undefined at t = {}",
            t.primal()
        )));
    }
    let s = t.exp();
    let (num, den) = bd_fraction_parts(s, birth, death);
    Ok((num / den).ln())
}

fn bd_lift1<S: Scalar>(t: S, birth: S, death: S) -> Result<Dual<S>> {
    bd_cgf(
        Dual::new(t, vec![S::one()]),
        Dual::constant(birth),
        Dual::constant(death),
    )
}

fn bd_deriv1<S: Scalar>(t: S, birth: S, death: S) -> Result<S> {
    Ok(bd_lift1(t, birth, death)?.partial(0))
}

fn bd_deriv2<S: Scalar>(t: S, birth: S, death: S) -> Result<S> {
    let d = bd_lift1(
        Dual::new(t, vec![S::one()]),
        Dual::constant(birth),
        Dual::constant(death),
    )?;
    Ok(d.partial(0).partial(0))
}

fn bd_deriv3<S: Scalar>(t: S, birth: S, death: S) -> Result<S> {
    let t2: Dual<Dual<S>> = Dual::new(Dual::new(t, vec![S::one()]), vec![Dual::constant(S::one())]);
    let d = bd_lift1(t2, Dual::constant(Dual::constant(birth)), Dual::constant(Dual::constant(death)))?;
    Ok(d.partial(0).partial(0).partial(0))
}

fn bd_deriv4<S: Scalar>(t: S, birth: S, death: S) -> Result<S> {
    let t2: Dual<Dual<S>> = Dual::new(Dual::new(t, vec![S::one()]), vec![Dual::constant(S::one())]);
    let t3: Dual<Dual<Dual<S>>> = Dual::new(t2, vec![Dual::constant(Dual::constant(S::one()))]);
    let d = bd_lift1(
        t3,
        Dual::constant(Dual::constant(Dual::constant(birth))),
        Dual::constant(Dual::constant(Dual::constant(death))),
    )?;
    Ok(d.partial(0).partial(0).partial(0).partial(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::seed_gradient;

    fn f(v: f64) -> Vec<f64> {
        vec![v]
    }

    fn gamma51() -> CgfNode {
        CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0))
    }

    #[test]
    fn gamma_k_values() {
        let node = gamma51();
        let th = [5.0];
        assert!(node.k(&f(0.0), &th).unwrap().abs() < 1e-14);
        let k = node.k(&f(0.5), &th).unwrap();
        assert!((k - (-5.0 * 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn poisson_k_value() {
        let node = CgfNode::poisson(ParamExpr::theta(0));
        let k = node.k(&f(2.0f64.ln()), &[2.0]).unwrap();
        assert!((k - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gamma_grad_and_hess() {
        let node = gamma51();
        let th = [5.0];
        assert!((node.grad_t(&f(0.0), &th).unwrap()[0] - 5.0).abs() < 1e-14);
        assert!((node.grad_t(&f(0.5), &th).unwrap()[0] - 10.0).abs() < 1e-12);
        assert!((node.hess_t(&f(0.0), &th).unwrap()[(0, 0)] - 5.0).abs() < 1e-14);
        assert!((node.hess_t(&f(0.5), &th).unwrap()[(0, 0)] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_domain_error() {
        let node = gamma51();
        assert!(matches!(node.k(&f(1.0), &[5.0]), Err(Error::Domain(_))));
        assert!(matches!(node.k(&f(1.5), &[5.0]), Err(Error::Domain(_))));
        assert!(node.in_domain(&f(0.999), &[5.0]));
        assert!(!node.in_domain(&f(1.0), &[5.0]));
    }

    #[test]
    fn multinomial_mean() {
        let node = CgfNode::multinomial(
            ParamExpr::constant(10.0),
            CellSpec::Probs(vec![
                ParamExpr::constant(0.2),
                ParamExpr::constant(0.3),
                ParamExpr::constant(0.5),
            ]),
        );
        let mean = node.grad_t(&[0.0, 0.0, 0.0], &[]).unwrap();
        assert!((mean[0] - 2.0).abs() < 1e-13);
        assert!((mean[1] - 3.0).abs() < 1e-13);
        assert!((mean[2] - 5.0).abs() < 1e-13);
        assert!(node.k(&[0.0; 3], &[]).unwrap().abs() < 1e-14);
        assert!(node.singular_covariance());
    }

    #[test]
    fn gamma_third_fourth_cumulants() {
        let node = CgfNode::gamma(ParamExpr::constant(1.0), ParamExpr::constant(1.0));
        let one = [1.0];
        let k3 = node.k3_contract(&f(0.0), &[], &one, &one, &one).unwrap();
        assert!((k3 - 2.0).abs() < 1e-14);
        let k4 = node.k4_contract(&f(0.0), &[], &one, &one, &one, &one).unwrap();
        assert!((k4 - 6.0).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_cumulants() {
        let node = CgfNode::multinomial(
            ParamExpr::constant(1.0),
            CellSpec::Probs(vec![ParamExpr::constant(0.5), ParamExpr::constant(0.5)]),
        );
        let e1 = [1.0, 0.0];
        let t0 = [0.0, 0.0];
        let k3 = node.k3_contract(&t0, &[], &e1, &e1, &e1).unwrap();
        assert!(k3.abs() < 1e-14, "symmetric bernoulli third cumulant: {k3}");
        let k4 = node.k4_contract(&t0, &[], &e1, &e1, &e1, &e1).unwrap();
        assert!((k4 + 0.125).abs() < 1e-14, "bernoulli fourth cumulant: {k4}");
    }

    #[test]
    fn gaussian_higher_cumulants_vanish() {
        let cov = Mat::from_rows(vec![vec![2.0, 0.3], vec![0.3, 1.0]]);
        let node = CgfNode::multivariate_normal(
            vec![ParamExpr::constant(1.0), ParamExpr::constant(-2.0)],
            cov.clone(),
        )
        .unwrap();
        let t = [0.4, -0.7];
        let v = [1.3, 2.2];
        assert_eq!(node.k3_contract(&t, &[], &v, &v, &v).unwrap(), 0.0);
        assert_eq!(node.k4_contract(&t, &[], &v, &v, &v, &v).unwrap(), 0.0);
        let h = node.hess_t(&t, &[]).unwrap();
        assert_eq!(h, cov);
    }

    #[test]
    fn param_derivatives_match_hand_formulas() {
        // d/dα of K for Gamma(α, 1) at t = 0.5 is -ln(0.5)
        let node = gamma51();
        let g = grad_k_wrt_params(&node, &[0.5], &[5.0]).unwrap();
        assert!((g[0] + 0.5f64.ln()).abs() < 1e-13);

        // K(0; θ) = 0 for all θ, so the θ-gradient at t = 0 vanishes
        let pois = CgfNode::poisson(ParamExpr::theta(0));
        let g = grad_k_wrt_params(&pois, &[0.0], &[2.0]).unwrap();
        assert!(g[0].abs() < 1e-14);
    }

    #[test]
    fn multinomial_mean_param_derivative() {
        // mean entry 1 is N p1, so its derivative in p1 is N = 10
        let node = CgfNode::multinomial(
            ParamExpr::constant(10.0),
            CellSpec::Probs(vec![
                ParamExpr::theta(0),
                ParamExpr::theta(1),
                ParamExpr::theta(2),
            ]),
        );
        let theta = seed_gradient(&[0.2, 0.3, 0.5]);
        let t = crate::dual::constants(&[0.0, 0.0, 0.0]);
        let mean = node.grad_t(&t, &theta).unwrap();
        assert!((mean[0].partial(0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn iid_sum_scales_operations() {
        let child = gamma51();
        let node = CgfNode::iid_sum(ParamExpr::constant(7.0), child.clone());
        let th = [1.3];
        let t = f(0.4);
        let v = [0.9];
        let k = node.k(&t, &th).unwrap();
        assert!((k - 7.0 * child.k(&t, &th).unwrap()).abs() < 1e-13);
        let k3 = node.k3_contract(&t, &th, &v, &v, &v).unwrap();
        assert!((k3 - 7.0 * child.k3_contract(&t, &th, &v, &v, &v).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn linear_map_identity_reproduces_child() {
        let child = CgfNode::concat(vec![gamma51(), CgfNode::poisson(ParamExpr::theta(1))]).unwrap();
        let node = CgfNode::linear_map(Mat::identity(2), child.clone()).unwrap();
        let th = [2.0, 3.0];
        let t = [0.3, -0.2];
        let v1 = [1.0, 2.0];
        let v2 = [-0.5, 0.7];
        let v3 = [0.2, 0.1];
        let v4 = [1.1, -0.4];
        assert_eq!(node.k(&t, &th).unwrap(), child.k(&t, &th).unwrap());
        assert_eq!(node.grad_t(&t, &th).unwrap(), child.grad_t(&t, &th).unwrap());
        let (h1, h2) = (node.hess_t(&t, &th).unwrap(), child.hess_t(&t, &th).unwrap());
        for (a, b) in h1.data.iter().zip(&h2.data) {
            assert!((a - b).abs() < 1e-14);
        }
        let k3a = node.k3_contract(&t, &th, &v1, &v2, &v3).unwrap();
        let k3b = child.k3_contract(&t, &th, &v1, &v2, &v3).unwrap();
        assert!((k3a - k3b).abs() < 1e-14);
        let k4a = node.k4_contract(&t, &th, &v1, &v2, &v3, &v4).unwrap();
        let k4b = child.k4_contract(&t, &th, &v1, &v2, &v3, &v4).unwrap();
        assert!((k4a - k4b).abs() < 1e-14);
    }

    #[test]
    fn sum_independent_adds() {
        let a = gamma51();
        let b = CgfNode::poisson(ParamExpr::theta(1));
        let node = CgfNode::sum_independent(vec![a.clone(), b.clone()]).unwrap();
        let th = [2.0, 3.0];
        let t = f(0.2);
        let k = node.k(&t, &th).unwrap();
        assert!((k - (a.k(&t, &th).unwrap() + b.k(&t, &th).unwrap())).abs() < 1e-14);
    }

    #[test]
    fn birth_death_zero_at_origin_and_mean() {
        for (lam, mu) in [(0.3, 0.2), (0.15, 0.25), (0.2, 0.2)] {
            let node = CgfNode::birth_death_offspring(ParamExpr::theta(0), ParamExpr::theta(1));
            let th = [lam, mu];
            let k0 = node.k(&f(0.0), &th).unwrap();
            assert!(k0.abs() < 1e-12, "K(0) = {k0} for ({lam}, {mu})");
            let mean = node.grad_t(&f(0.0), &th).unwrap()[0];
            let expected = (lam - mu).exp();
            assert!(
                (mean - expected).abs() < 1e-9 * expected,
                "mean {mean} vs {expected} for ({lam}, {mu})"
            );
        }
    }

    #[test]
    fn birth_death_series_matches_exact_near_equal_rates(){
        // evaluate just on either side of the switchover
        let node = CgfNode::birth_death_offspring(ParamExpr::theta(0), ParamExpr::theta(1));
        let t = f(0.3);
        let k_above = node.k(&t, &[0.2 + 1.2e-4, 0.2]).unwrap();
        let k_below = node.k(&t, &[0.2 + 0.8e-4, 0.2]).unwrap();
        let k_mid = node.k(&t, &[0.2 + 1.0e-4, 0.2]).unwrap();
        // continuity across the branch: the three values should be nearly collinear
        let interp = 0.5 * (k_above + k_below);
        assert!((k_mid - interp).abs() < 1e-9, "branch mismatch: {k_mid} vs {interp}");
    }

    #[test]
    fn mtalpha_cells_sum_to_one() {
        let cells = CellSpec::MtAlphaHistories {
            occasions: 3,
            alpha: ParamExpr::theta(0),
            capture: vec![ParamExpr::theta(1), ParamExpr::theta(2), ParamExpr::theta(3)],
        };
        let pi = cells.probs(&[0.8, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(pi.len(), 27);
        let total: f64 = pi.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // captured-correct on occasion 1 only: p1 α (1-p2)(1-p3); history (1,0,0)
        // sits at base-3 index 1*9 = 9
        let expect = 0.4 * 0.8 * 0.5 * 0.4;
        assert!((pi[9] - expect).abs() < 1e-14);
    }

    #[test]
    fn iid_count_can_be_a_parameter() {
        // θ = (n, α): K = n·K_gamma(α), so ∂K/∂n = K_gamma
        let child = CgfNode::gamma(ParamExpr::theta(1), ParamExpr::constant(1.0));
        let node = CgfNode::iid_sum(ParamExpr::theta(0), child.clone());
        let theta = [7.0, 1.3];
        let t = f(0.4);
        let k_child = child.k(&t, &theta).unwrap();
        assert!((node.k(&t, &theta).unwrap() - 7.0 * k_child).abs() < 1e-13);
        let g = grad_k_wrt_params(&node, &t, &theta).unwrap();
        assert!((g[0] - k_child).abs() < 1e-13);
    }

    #[test]
    fn adapter_expressions_evaluate() {
        let theta = [2.0f64, -0.5];
        let product = ParamExpr::product(ParamExpr::theta(0), ParamExpr::theta(1));
        assert_eq!(product.eval(&theta).unwrap(), -1.0);
        let affine = ParamExpr::Affine { terms: vec![(3.0, 0), (-2.0, 1)], offset: 0.5 };
        assert_eq!(affine.eval(&theta).unwrap(), 3.0 * 2.0 + 1.0 + 0.5);
        let exp = ParamExpr::Exp(Box::new(ParamExpr::theta(1)));
        assert!((exp.eval(&theta).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        let sig = ParamExpr::Sigmoid(Box::new(ParamExpr::theta(0)));
        assert!((sig.eval(&theta).unwrap() - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!(matches!(
            ParamExpr::theta(5).eval(&theta),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let cov = Mat::from_rows(vec![vec![1.0, 0.1], vec![0.1, 2.0]]);
        let node = CgfNode::concat(vec![
            CgfNode::iid_sum(ParamExpr::constant(3.0), gamma51()),
            CgfNode::linear_map(
                Mat::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
                CgfNode::multivariate_normal(
                    vec![ParamExpr::theta(1), ParamExpr::theta(2)],
                    cov,
                )
                .unwrap(),
            )
            .unwrap(),
        ])
        .unwrap();
        let text = node.to_json().unwrap();
        let back = CgfNode::from_json(&text).unwrap();
        assert_eq!(node, back);
    }

    #[test]
    fn k_at_zero_vanishes_across_nodes() {
        let nodes: Vec<(CgfNode, Vec<f64>)> = vec![
            (gamma51(), vec![2.7]),
            (CgfNode::poisson(ParamExpr::theta(0)), vec![1.4]),
            (
                CgfNode::multinomial(
                    ParamExpr::constant(6.0),
                    CellSpec::Probs(vec![
                        ParamExpr::constant(0.1),
                        ParamExpr::constant(0.6),
                        ParamExpr::constant(0.3),
                    ]),
                ),
                vec![],
            ),
            (
                CgfNode::birth_death_offspring(ParamExpr::theta(0), ParamExpr::theta(1)),
                vec![0.19, 0.15],
            ),
        ];
        for (node, theta) in nodes {
            let t = vec![0.0; node.dim()];
            let k = node.k(&t, &theta).unwrap();
            assert!(k.abs() < 1e-14, "K(0) = {k} for {node:?}");
        }
    }
}
