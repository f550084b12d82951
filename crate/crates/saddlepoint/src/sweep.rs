//! Sample-size sweep harnesses.
//!
//! Each sweep fixes the standardized observation and re-fits both the true
//! and saddlepoint MLEs along a log-spaced grid of replication counts n,
//! recording the true discrepancy δ, its approximation δ̂, and their
//! difference. Log-log slope fits on those columns measure the empirical
//! decay rates (n⁻² for δ and δ̂ with a fully mean-identified model, n⁻³ for
//! their difference; n⁻¹/n⁻² for variance-only parameters).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist};

use crate::discrepancy::{approx_discrepancy, true_discrepancy};
use crate::error::{Error, Result};
use crate::mle::{find_spa_mle, find_true_mle, CallbackObjective, FitOptions};
use crate::models::gamma::{
    build_gamma_fixed_rate, build_mvgamma, gamma_transforms, mvgamma_mean, mvgamma_transforms,
    true_loglik_gamma, true_loglik_gamma_grad, true_loglik_mvgamma, true_loglik_mvgamma_grad,
};

/// One row of a sweep: replication count, per-parameter discrepancies, and
/// the per-parameter |δ − δ̂| used for difference-rate fits. Failed rows keep
/// their error text instead of being dropped, so grids stay aligned.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub n: f64,
    pub delta: Vec<f64>,
    pub delta_hat: Vec<f64>,
    pub diff: Vec<f64>,
    pub error: Option<String>,
}

impl ExperimentRecord {
    fn failed(n: f64, p: usize, message: String) -> Self {
        ExperimentRecord {
            n,
            delta: vec![f64::NAN; p],
            delta_hat: vec![f64::NAN; p],
            diff: vec![f64::NAN; p],
            error: Some(message),
        }
    }

    pub fn param_len(&self) -> usize {
        self.delta.len()
    }
}

/// Which column of a record a slope fit consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepField {
    Delta,
    DeltaHat,
    Diff,
}

impl SweepField {
    fn value(&self, record: &ExperimentRecord, param: usize) -> f64 {
        match self {
            SweepField::Delta => record.delta[param],
            SweepField::DeltaHat => record.delta_hat[param],
            SweepField::Diff => record.diff[param],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepField::Delta => "delta",
            SweepField::DeltaHat => "delta_hat",
            SweepField::Diff => "diff",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Log-spaced grid of `points` values in [lo, hi].
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Default 16-point grid over n ∈ [10, 10⁴] with 3 burn-in rows.
pub fn default_grid() -> Vec<f64> {
    log_grid(10.0, 1e4, 16)
}

pub const DEFAULT_BURN_IN: usize = 3;

/// Fully mean-identified sweep: X_n is the n-fold i.i.d. sum of Gamma(α, 1)
/// and the observation is held at x_n = n u0.
pub fn sweep_theorem1(u0: f64, grid: &[f64]) -> Result<Vec<ExperimentRecord>> {
    if u0 <= 0.0 {
        return Err(Error::domain("u0 must be positive"));
    }
    Ok(parallel_map(grid, |&n| match theorem1_row(u0, n) {
        Ok(record) => record,
        Err(e) => ExperimentRecord::failed(n, 1, e.to_string()),
    }))
}

fn theorem1_row(u0: f64, n: f64) -> Result<ExperimentRecord> {
    let node = build_gamma_fixed_rate(n)?;
    let x = n * u0;
    let opts = FitOptions::default();
    let transforms = gamma_transforms();

    let spa = find_spa_mle(&node, &[x], &[u0], &transforms, &opts)?;
    if !spa.converged() {
        return Err(Error::MaxIter);
    }
    let delta_hat = approx_discrepancy(&node, spa.theta_hat.as_slice(), &[x])?;

    let objective = CallbackObjective::new(move |th: &[f64]| true_loglik_gamma(th[0], x, n))
        .with_gradient(move |th: &[f64]| true_loglik_gamma_grad(th[0], x, n));
    let truth = find_true_mle(&objective, &[u0], &transforms, &opts)?;
    if !truth.converged() {
        return Err(Error::MaxIter);
    }

    let delta = true_discrepancy(truth.theta_hat.as_slice(), spa.theta_hat.as_slice())?;
    let diff = delta.iter().zip(&delta_hat).map(|(a, b)| a - b).collect();
    Ok(ExperimentRecord { n, delta, delta_hat, diff, error: None })
}

/// Partially mean-identified sweep: the mvgamma model with observations
/// x_n = n u0 + √n z0, the standardized deviation z0 held fixed across n.
/// Records split by parameter index: 0..k are the mean block ω, index k is τ.
pub fn sweep_theorem3(
    omega0: &[f64],
    tau0: f64,
    m: usize,
    z0: &[f64],
    grid: &[f64],
) -> Result<Vec<ExperimentRecord>> {
    let k = omega0.len();
    if z0.len() != k * m {
        return Err(Error::dim(k * m, z0.len()));
    }
    if tau0 <= 0.0 || omega0.iter().any(|&w| w <= 0.0) {
        return Err(Error::domain("mvgamma parameters must be positive"));
    }
    let u0 = mvgamma_mean(omega0, m);
    let mut theta0 = omega0.to_vec();
    theta0.push(tau0);

    Ok(parallel_map(grid, |&n| {
        match theorem3_row(&theta0, &u0, z0, k, m, n) {
            Ok(record) => record,
            Err(e) => ExperimentRecord::failed(n, k + 1, e.to_string()),
        }
    }))
}

fn theorem3_row(
    theta0: &[f64],
    u0: &[f64],
    z0: &[f64],
    k: usize,
    m: usize,
    n: f64,
) -> Result<ExperimentRecord> {
    let base = build_mvgamma(k, m)?;
    let node = crate::cgf::CgfNode::iid_sum(crate::cgf::ParamExpr::constant(n), base);
    let x: Vec<f64> = u0
        .iter()
        .zip(z0)
        .map(|(&u, &z)| n * u + n.sqrt() * z)
        .collect();
    if x.iter().any(|&v| v <= 0.0) {
        return Err(Error::domain("scaled observation left the positive orthant"));
    }
    let opts = FitOptions::default();
    let transforms = mvgamma_transforms(k);

    let spa = find_spa_mle(&node, &x, theta0, &transforms, &opts)?;
    if !spa.converged() {
        return Err(Error::MaxIter);
    }
    let delta_hat = approx_discrepancy(&node, spa.theta_hat.as_slice(), &x)?;

    let x_for_true = x.clone();
    let x_for_grad = x.clone();
    let objective =
        CallbackObjective::new(move |th: &[f64]| true_loglik_mvgamma(th, &x_for_true, k, m, n))
            .with_gradient(move |th: &[f64]| {
                true_loglik_mvgamma_grad(th, &x_for_grad, k, m, n)
            });
    let truth = find_true_mle(&objective, theta0, &transforms, &opts)?;
    if !truth.converged() {
        return Err(Error::MaxIter);
    }

    let delta = true_discrepancy(truth.theta_hat.as_slice(), spa.theta_hat.as_slice())?;
    let diff = delta.iter().zip(&delta_hat).map(|(a, b)| a - b).collect();
    Ok(ExperimentRecord { n, delta, delta_hat, diff, error: None })
}

/// One standardized draw z0 ~ U − E(U) for the mvgamma model, reproducible
/// from the seed and then held fixed across the sweep.
pub fn draw_mvgamma_z0(omega0: &[f64], tau0: f64, m: usize, seed: u64) -> Result<Vec<f64>> {
    if tau0 <= 0.0 {
        return Err(Error::domain("tau0 must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z0 = Vec::with_capacity(omega0.len() * m);
    for &w in omega0 {
        if w <= 0.0 {
            return Err(Error::domain("omega entries must be positive"));
        }
        let dist = GammaDist::new(w * tau0, 1.0 / tau0)
            .map_err(|e| Error::domain(format!("gamma sampler: {e}")))?;
        for _ in 0..m {
            z0.push(dist.sample(&mut rng) - w);
        }
    }
    Ok(z0)
}

/// Ordinary least squares on (ln n, ln |value|), discarding the first
/// `burn_in` rows and any failed or zero-valued rows.
pub fn fit_slope(
    records: &[ExperimentRecord],
    field: SweepField,
    param: usize,
    burn_in: usize,
) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .enumerate()
        .filter(|(i, r)| *i >= burn_in && r.error.is_none() && param < r.param_len())
        .filter_map(|(_, r)| {
            let v = field.value(r, param).abs();
            (v.is_finite() && v > 0.0).then(|| (r.n.ln(), v.ln()))
        })
        .collect();
    const NEEDED: usize = 4;
    if pts.len() < NEEDED {
        return Err(Error::InsufficientPoints { needed: NEEDED, found: pts.len() });
    }
    let len = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r2, points: pts.len() })
}

/// Format with 17 significant digits, enough to round-trip an `f64` exactly.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// CSV emission: one row per n with per-parameter |δ|, |δ̂|, |δ − δ̂| columns
/// and an error column for failed rows.
pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let p = records.iter().map(ExperimentRecord::param_len).max().unwrap_or(0);
    let mut out = String::from("n");
    for field in ["abs_delta", "abs_delta_hat", "abs_diff"] {
        for i in 1..=p {
            out.push_str(&format!(",{field}_{i}"));
        }
    }
    out.push_str(",error\n");
    for r in records {
        out.push_str(&format_f64(r.n));
        for values in [&r.delta, &r.delta_hat, &r.diff] {
            for i in 0..p {
                out.push(',');
                let v = values.get(i).copied().unwrap_or(f64::NAN);
                if v.is_finite() {
                    out.push_str(&format_f64(v.abs()));
                }
            }
        }
        out.push(',');
        if let Some(e) = &r.error {
            out.push_str(&e.replace(',', ";"));
        }
        out.push('\n');
    }
    out
}

/// Map rows across worker threads (count from `SADDLEPOINT_THREADS`, default
/// all available), preserving input order. Rows are independent; outputs do
/// not depend on the thread count.
pub fn parallel_map<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> U + Sync,
) -> Vec<U> {
    let threads = std::env::var("SADDLEPOINT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|v| v.get()).unwrap_or(1)
        })
        .min(items.len().max(1));
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let mut results: Vec<Vec<U>> = Vec::new();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for piece in items.chunks(chunk) {
            let f = &f;
            handles.push(scope.spawn(move || piece.iter().map(f).collect::<Vec<U>>()));
        }
        for h in handles {
            results.push(h.join().expect("sweep worker panicked"));
        }
    });
    results.into_iter().flatten().collect()
}
