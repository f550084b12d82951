//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with its runtime (run with `--nocapture` to see them).
//!
//! Criterion 3 is split: the δ and δ̂ rate assertions hold, while the stated
//! −3 slope for |δ − δ̂| is provably not attainable on this model (the n⁻³
//! coefficient cancels; see the test message), so that assertion is kept
//! faithful and expected to fail.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use saddlepoint::cgf::{CellSpec, CgfNode, ParamExpr};
use saddlepoint::discrepancy::{
    approx_discrepancy, discrepancy_report, grad_correction_t, true_discrepancy,
};
use saddlepoint::linalg::{ldl_factor, Mat};
use saddlepoint::loglik::{
    correction_t, correction_t_direct, spa_loglik, spa_loglik2_grad, spa_loglik_grad, HessMode,
};
use saddlepoint::mle::{
    find_spa_mle, find_true_mle, fit_with_discrepancy, CallbackObjective, FitOptions,
};
use saddlepoint::models::{
    birth_death_transforms, build_birth_death, build_gamma_fixed_rate, build_mtalpha,
    build_mtalpha_fixed_capture, build_mvgamma, gamma_transforms, mtalpha_fixed_capture_oracle,
    mtalpha_fixed_capture_transforms, mvgamma_mean, read_trajectory_csv, simulate_mtalpha,
    true_loglik_birth_death, true_loglik_gamma, true_loglik_gamma_grad, TrajectoryModel,
};
use saddlepoint::solve::{solve_saddlepoint, SolveOptions};
use saddlepoint::sweep::{
    draw_mvgamma_z0, fit_slope, log_grid, sweep_theorem1, sweep_theorem3, SweepField,
    DEFAULT_BURN_IN,
};

fn report(name: &str, start: Instant, budget_s: f64) {
    let elapsed = start.elapsed().as_secs_f64();
    println!("acceptance {name}: PASS ({elapsed:.2}s, budget {budget_s}s)");
    assert!(
        elapsed < budget_s,
        "{name} exceeded its runtime budget: {elapsed:.2}s >= {budget_s}s"
    );
}

fn gamma_node() -> CgfNode {
    build_gamma_fixed_rate(1.0).unwrap()
}

/// Criterion 1 — the worked single-observation gamma example.
#[test]
fn acceptance_1_gamma_worked_example() {
    let start = Instant::now();
    let x = 1.58177;
    let node = gamma_node();
    let opts = FitOptions::default();
    let transforms = gamma_transforms();

    let (fit, report_delta) =
        fit_with_discrepancy(&node, &[x], &[1.0], &transforms, &opts).unwrap();
    assert!(fit.converged());
    let alpha_spa = fit.theta_hat.0[0];

    let objective = CallbackObjective::new(move |th: &[f64]| true_loglik_gamma(th[0], x, 1.0))
        .with_gradient(move |th: &[f64]| true_loglik_gamma_grad(th[0], x, 1.0));
    let truth = find_true_mle(&objective, &[1.0], &transforms, &opts).unwrap();
    assert!(truth.converged());
    let alpha_true = truth.theta_hat.0[0];

    let delta = true_discrepancy(truth.theta_hat.as_slice(), fit.theta_hat.as_slice()).unwrap()[0];
    let delta_hat = report_delta.delta_hat[0];

    assert!((alpha_true - 2.0564).abs() <= 5e-4, "alpha_true = {alpha_true}");
    assert!((alpha_spa - 2.0248).abs() <= 5e-4, "alpha_spa = {alpha_spa}");
    assert!((delta - 0.032).abs() <= 1e-3, "delta = {delta}");
    assert!((delta_hat - 0.033).abs() <= 1e-3, "delta_hat = {delta_hat}");
    report("1 (gamma worked example)", start, 1.0);
}

/// Criterion 2 — closed-form gamma identities.
#[test]
fn acceptance_2_gamma_closed_forms() {
    let start = Instant::now();
    let node = gamma_node();

    for alpha in [0.5, 1.0, 2.0, 5.0, 17.0, 60.0, 100.0] {
        let x = 1.2 * alpha;
        let sol = solve_saddlepoint(&node, &[alpha], &[x], &SolveOptions::default()).unwrap();
        let t = correction_t(&node, &sol, &[alpha]).unwrap();
        assert!(
            (t + 1.0 / (12.0 * alpha)).abs() <= 1e-10,
            "T at alpha = {alpha}: {t}"
        );
        let gt = grad_correction_t(&node, &[alpha], &[x]).unwrap()[0];
        assert!(
            (gt - 1.0 / (12.0 * alpha * alpha)).abs() <= 1e-8,
            "grad T at alpha = {alpha}: {gt}"
        );
    }

    // δ̂ closed form at the spa optimum for several observations
    let opts = FitOptions::default();
    for x in [0.8, 1.58177, 3.0, 9.0] {
        let fit = find_spa_mle(&node, &[x], &[x], &gamma_transforms(), &opts).unwrap();
        let alpha_hat = fit.theta_hat.0[0];
        let delta_hat = approx_discrepancy(&node, fit.theta_hat.as_slice(), &[x]).unwrap()[0];
        let expected = 1.0 / (6.0 * (2.0 * alpha_hat + 1.0));
        assert!(
            (delta_hat - expected).abs() <= 1e-8,
            "x = {x}: {delta_hat} vs {expected}"
        );
    }

    // Stirling remainder across the shape range
    use saddlepoint::models::special::ln_gamma;
    let mut alpha = 0.5;
    while alpha <= 100.0 {
        let x = 1.37 * alpha;
        let spa = spa_loglik(&node, &[alpha], &[x]).unwrap();
        let truth = (alpha - 1.0) * x.ln() - x - ln_gamma(alpha);
        let remainder = ln_gamma(alpha) - (alpha - 0.5) * alpha.ln() + alpha
            - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!(
            (spa - truth - remainder).abs() <= 1e-10,
            "alpha = {alpha}: {} vs {remainder}",
            spa - truth
        );
        alpha *= 1.31;
    }
    report("2 (closed-form gamma identities)", start, 1.0);
}

/// Criterion 3 — fully identified sweep rates (the attainable assertions).
#[test]
fn acceptance_3_theorem1_sweep_rates() {
    let start = Instant::now();
    let grid = log_grid(10.0, 1e4, 16);
    let records = sweep_theorem1(1.3045, &grid).unwrap();
    assert!(records.iter().all(|r| r.error.is_none()), "rows failed");

    let slope_hat = fit_slope(&records, SweepField::DeltaHat, 0, DEFAULT_BURN_IN).unwrap();
    assert!(
        (slope_hat.slope + 2.0).abs() <= 0.05,
        "delta_hat slope = {}",
        slope_hat.slope
    );
    let slope_true = fit_slope(&records, SweepField::Delta, 0, DEFAULT_BURN_IN).unwrap();
    assert!(
        (slope_true.slope + 2.0).abs() <= 0.05,
        "delta slope = {}",
        slope_true.slope
    );

    // ratio convergence at the largest n
    let last = records.last().unwrap();
    let ratio = last.delta_hat[0] / last.delta[0];
    assert!((ratio - 1.0).abs() <= 0.01, "delta_hat/delta = {ratio}");

    // monotone decay beyond burn-in
    for w in records[DEFAULT_BURN_IN..].windows(2) {
        assert!(w[1].delta_hat[0].abs() < w[0].delta_hat[0].abs());
    }
    report("3 (theorem1 sweep rates)", start, 30.0);
}

/// Criterion 3, difference-rate assertion exactly as stated. This fails, and
/// is expected to: for the fixed-rate gamma family the n⁻³ coefficient of
/// δ − δ̂ cancels exactly, leaving δ − δ̂ = −(3/160)·α⁻³ n⁻⁴ + O(n⁻⁵)
/// (series expansion of both stationarity equations, confirmed with 50-digit
/// arithmetic), so the measured log-log slope on n ∈ [10, 10⁴] is ≈ −3.9,
/// outside the stated −3.0 ± 0.2. The multi-parameter sweep in criterion 4
/// does exhibit the −3 difference rate.
#[test]
fn acceptance_3_diff_slope_as_stated() {
    let start = Instant::now();
    let grid = log_grid(10.0, 1e4, 16);
    let records = sweep_theorem1(1.3045, &grid).unwrap();
    let slope_diff = fit_slope(&records, SweepField::Diff, 0, DEFAULT_BURN_IN).unwrap();
    let _ = start;
    assert!(
        (slope_diff.slope + 3.0).abs() <= 0.2,
        "|delta − delta_hat| slope = {:.3}; the true decay for this model is n⁻⁴ \
         (the n⁻³ coefficient vanishes identically for the one-parameter gamma \
         family), so the −3.0 ± 0.2 target cannot be met",
        slope_diff.slope
    );
}

/// Criterion 4 — partially identified sweep rates on the mvgamma model.
/// Mean-block parameters ω decay at n⁻² (differences n⁻³); the variance-only
/// parameter τ at n⁻¹ (differences n⁻²).
#[test]
fn acceptance_4_theorem3_sweep_rates() {
    let start = Instant::now();
    let omega0 = [1.5, 3.6, 5.8];
    let tau0 = 2.0;
    let (k, m) = (3, 5);
    let z0 = draw_mvgamma_z0(&omega0, tau0, m, 1).unwrap();
    // the n-range keeps the ω-difference column above the f64 rounding floor
    // of the two MLE fits; slopes, not point values, are the targets
    let grid = log_grid(10.0, 1e3, 16);
    let records = sweep_theorem3(&omega0, tau0, m, &z0, &grid).unwrap();
    assert!(records.iter().all(|r| r.error.is_none()), "rows failed");

    for param in 0..k {
        let d = fit_slope(&records, SweepField::Delta, param, DEFAULT_BURN_IN).unwrap();
        assert!((d.slope + 2.0).abs() <= 0.1, "omega_{param} delta slope = {}", d.slope);
        let dh = fit_slope(&records, SweepField::DeltaHat, param, DEFAULT_BURN_IN).unwrap();
        assert!((dh.slope + 2.0).abs() <= 0.1, "omega_{param} delta_hat slope = {}", dh.slope);
        let diff = fit_slope(&records, SweepField::Diff, param, DEFAULT_BURN_IN).unwrap();
        assert!((diff.slope + 3.0).abs() <= 0.3, "omega_{param} diff slope = {}", diff.slope);
    }
    let d_tau = fit_slope(&records, SweepField::Delta, k, DEFAULT_BURN_IN).unwrap();
    assert!((d_tau.slope + 1.0).abs() <= 0.05, "tau delta slope = {}", d_tau.slope);
    let dh_tau = fit_slope(&records, SweepField::DeltaHat, k, DEFAULT_BURN_IN).unwrap();
    assert!((dh_tau.slope + 1.0).abs() <= 0.05, "tau delta_hat slope = {}", dh_tau.slope);
    let diff_tau = fit_slope(&records, SweepField::Diff, k, DEFAULT_BURN_IN).unwrap();
    assert!((diff_tau.slope + 2.0).abs() <= 0.1, "tau diff slope = {}", diff_tau.slope);
    report("4 (theorem3 sweep rates)", start, 120.0);
}

/// Criterion 5 — Gaussian exactness over 100 randomized cases.
#[test]
fn acceptance_5_gaussian_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let d = 2 + (case % 2);
        // random SPD covariance via A Aᵀ + I/2
        let mut a = Mat::<f64>::zeros(d, d);
        for v in a.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut cov = Mat::<f64>::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    cov[(i, j)] += a[(i, l)] * a[(j, l)];
                }
            }
            cov[(i, i)] += 0.5;
        }
        let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x: Vec<f64> = mu.iter().map(|m| m + rng.gen_range(-1.5..1.5)).collect();
        let node = CgfNode::multivariate_normal(
            (0..d).map(ParamExpr::theta).collect(),
            cov.clone(),
        )
        .unwrap();

        let spa = spa_loglik(&node, &mu, &x).unwrap();
        let ldl = ldl_factor(&cov).unwrap();
        let diff: Vec<f64> = x.iter().zip(&mu).map(|(a, b)| a - b).collect();
        let sol = ldl.solve(&diff);
        let quad: f64 = diff.iter().zip(&sol).map(|(a, b)| a * b).sum();
        let exact = -0.5 * quad - 0.5 * ldl.log_det()
            - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        assert!((spa - exact).abs() <= 1e-12, "case {case}: {spa} vs {exact}");

        let sp_sol = solve_saddlepoint(&node, &mu, &x, &SolveOptions::default()).unwrap();
        let t = correction_t(&node, &sp_sol, &mu).unwrap();
        assert!(t.abs() <= 1e-14, "case {case}: T = {t}");

        // the Gaussian mean model is stationary at μ = x
        let delta_hat = approx_discrepancy(&node, &x, &x).unwrap();
        assert!(
            delta_hat.iter().all(|v| v.abs() <= 1e-12),
            "case {case}: delta_hat = {delta_hat:?}"
        );
    }
    report("5 (gaussian exactness)", start, 1.0);
}

/// Criterion 6 — correction-term oracle equivalence on 50 randomized models
/// with d ≤ 5, and gradient-vs-FD agreement on every bundled model.
#[test]
fn acceptance_6_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    for case in 0..50 {
        let (node, theta, x): (CgfNode, Vec<f64>, Vec<f64>) = match case % 3 {
            0 => {
                // concat of gamma blocks, d in 2..=5
                let d = 2 + (case / 3) % 4;
                let mut theta = Vec::new();
                let mut x = Vec::new();
                let mut blocks = Vec::new();
                for i in 0..d {
                    let shape: f64 = rng.gen_range(0.5..4.0);
                    let rate: f64 = rng.gen_range(0.5..2.0);
                    blocks.push(CgfNode::gamma(
                        ParamExpr::theta(i),
                        ParamExpr::constant(rate),
                    ));
                    x.push(shape / rate * rng.gen_range(0.7..1.4));
                    theta.push(shape);
                }
                (CgfNode::concat(blocks).unwrap(), theta, x)
            }
            1 => {
                // mapped multinomial, observable d = 2 from 3 cells
                let n: f64 = rng.gen_range(10.0..40.0);
                let raw: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
                let total: f64 = raw.iter().sum();
                let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
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
                let theta = vec![n, probs[0], probs[1], probs[2]];
                // draw the observation as K' at a random interior tilt, so it
                // is always inside the reachable mean cone
                let t = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
                let x = node.grad_t(&t, &theta).unwrap();
                (node, theta, x)
            }
            _ => {
                // independent sum of a gamma and a poisson plus a gamma block
                let node = CgfNode::concat(vec![
                    CgfNode::sum_independent(vec![
                        CgfNode::gamma(ParamExpr::theta(0), ParamExpr::constant(1.0)),
                        CgfNode::poisson(ParamExpr::theta(1)),
                    ])
                    .unwrap(),
                    CgfNode::gamma(ParamExpr::theta(2), ParamExpr::constant(2.0)),
                ])
                .unwrap();
                let theta = vec![
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.5..3.0),
                ];
                let x = vec![
                    (theta[0] + theta[1]) * rng.gen_range(0.8..1.3),
                    theta[2] / 2.0 * rng.gen_range(0.8..1.3),
                ];
                (node, theta, x)
            }
        };
        let sol = solve_saddlepoint(&node, &theta, &x, &SolveOptions::default()).unwrap();
        let fast = correction_t(&node, &sol, &theta).unwrap();
        let direct = correction_t_direct(&node, &sol, &theta).unwrap();
        assert!(
            (fast - direct).abs() <= 1e-10 * (1.0 + fast.abs()),
            "case {case}: {fast} vs {direct}"
        );
    }

    // gradient of T against central finite differences on the bundled models
    let (mtalpha_node, mtalpha_design) = build_mtalpha(2).unwrap();
    let mtalpha_x = simulate_mtalpha(&mtalpha_design, &[25.0, 0.8, 0.5, 0.6], 3)
        .unwrap()
        .entries;
    let trajectory = TrajectoryModel::new(vec![8, 9, 7]).unwrap();
    let bd_node = build_birth_death(&trajectory);
    let bundled: Vec<(&str, CgfNode, Vec<f64>, Vec<f64>)> = vec![
        (
            "gamma_fixed_rate",
            build_gamma_fixed_rate(3.0).unwrap(),
            vec![1.4],
            vec![3.0 * 1.7],
        ),
        (
            "mvgamma",
            build_mvgamma(2, 2).unwrap(),
            vec![1.5, 2.5, 2.0],
            vec![1.6, 1.4, 2.6, 2.4],
        ),
        ("mtalpha", mtalpha_node, vec![25.0, 0.8, 0.5, 0.6], mtalpha_x),
        ("birth_death", bd_node, vec![0.3, 0.22], trajectory.observation()),
    ];
    let eps = f64::EPSILON.cbrt();
    for (name, node, theta, x) in &bundled {
        let g = grad_correction_t(node, theta, x).unwrap();
        for i in 0..theta.len() {
            let h = eps * (1.0 + theta[i].abs());
            let mut up = theta.clone();
            up[i] += h;
            let mut dn = theta.clone();
            dn[i] -= h;
            let t_of = |th: &[f64]| {
                let sol = solve_saddlepoint(node, th, x, &SolveOptions::default()).unwrap();
                correction_t(node, &sol, th).unwrap()
            };
            let fd = (t_of(&up) - t_of(&dn)) / (2.0 * h);
            assert!(
                (g[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                "{name} param {i}: {} vs fd {fd}",
                g[i]
            );
        }
    }
    report("6 (oracle equivalence)", start, 30.0);
}

/// Criterion 7 — i.i.d.-sum scaling of the tilt and the correction term.
#[test]
fn acceptance_7_iid_sum_scaling() {
    let start = Instant::now();
    let cases: Vec<(CgfNode, Vec<f64>, Vec<f64>)> = vec![
        (gamma_node(), vec![1.9], vec![2.3]),
        (
            build_mvgamma(3, 2).unwrap(),
            vec![1.5, 3.6, 5.8, 2.0],
            mvgamma_mean(&[1.5, 3.6, 5.8], 2)
                .iter()
                .map(|u| u * 1.1)
                .collect(),
        ),
    ];
    for (child, theta, u) in cases {
        let sol_u = solve_saddlepoint(&child, &theta, &u, &SolveOptions::default()).unwrap();
        let t_u = correction_t(&child, &sol_u, &theta).unwrap();
        for n in [2.0, 10.0, 1000.0] {
            let node = CgfNode::iid_sum(ParamExpr::constant(n), child.clone());
            let x: Vec<f64> = u.iter().map(|v| n * v).collect();
            let sol = solve_saddlepoint(&node, &theta, &x, &SolveOptions::default()).unwrap();
            for (a, b) in sol.t_hat.iter().zip(&sol_u.t_hat) {
                assert!((a - b).abs() <= 1e-12, "tilt at n = {n}: {a} vs {b}");
            }
            let t_x = correction_t(&node, &sol, &theta).unwrap();
            assert!(
                (t_x - t_u / n).abs() <= 1e-12 * (1.0 + (t_u / n).abs()),
                "T at n = {n}: {t_x} vs {}",
                t_u / n
            );
        }
    }
    report("7 (iid-sum scaling)", start, 1.0);
}

/// Criterion 8 — tiny capture-recapture model against the enumeration oracle.
/// The two-occasion design identifies (N, α) with the capture probabilities
/// held at their known values; the free-p⃗ variant has more parameters than
/// observed cells and no unique maximizer.
#[test]
fn acceptance_8_mtalpha_oracle() {
    let start = Instant::now();
    let capture = [0.5, 0.6];
    let theta_sim = [20.0, 0.8, 0.5, 0.6];
    let (_, design) = build_mtalpha(2).unwrap();
    let (node, _) = build_mtalpha_fixed_capture(2, &capture).unwrap();
    let transforms = mtalpha_fixed_capture_transforms();
    let opts = FitOptions::default();

    let mut raw_err: Vec<Vec<f64>> = vec![Vec::new(); 2];
    let mut adj_err: Vec<Vec<f64>> = vec![Vec::new(); 2];
    let mut converged = 0;

    for seed in 1..=20u64 {
        let obs = simulate_mtalpha(&design, &theta_sim, seed).unwrap();
        let outcome = (|| -> saddlepoint::Result<()> {
            let fit = find_spa_mle(&node, &obs.entries, &[20.0, 0.8], &transforms, &opts)?;
            if !fit.converged() {
                return Err(saddlepoint::Error::MaxIter);
            }
            let theta_spa = fit.theta_hat.as_slice().to_vec();
            let rep = discrepancy_report(&node, &theta_spa, &obs.entries, HessMode::FdOfGrad)?;

            // (a) Newton-step identity: δ̂ reproduces −H⁻¹ ∇ᵀ(log L̂₂ − log L̂)
            let g2 = spa_loglik2_grad(&node, &theta_spa, &obs.entries)?;
            let g1 = spa_loglik_grad(&node, &theta_spa, &obs.entries)?;
            let gt: Vec<f64> = g2.iter().zip(&g1).map(|(a, b)| a - b).collect();
            let mut neg = rep.hessian_used.clone();
            for v in neg.data.iter_mut() {
                *v = -*v;
            }
            let newton = ldl_factor(&neg).unwrap().solve(&gt);
            for (a, b) in newton.iter().zip(&rep.delta_hat) {
                assert!(
                    (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
                    "seed {seed}: newton step {a} vs delta_hat {b}"
                );
            }

            // (b) oracle MLE by exhaustive enumeration
            let x = obs.entries.clone();
            let design_ref = &design;
            let oracle = CallbackObjective::new(move |th: &[f64]| {
                mtalpha_fixed_capture_oracle(design_ref, &capture, &x, th)
            });
            let truth = find_true_mle(&oracle, &theta_spa, &transforms, &opts)?;
            if !truth.converged() {
                return Err(saddlepoint::Error::MaxIter);
            }
            for i in 0..2 {
                raw_err[i].push((theta_spa[i] - truth.theta_hat.0[i]).abs());
                adj_err[i]
                    .push((theta_spa[i] + rep.delta_hat[i] - truth.theta_hat.0[i]).abs());
            }
            Ok(())
        })();
        if outcome.is_ok() {
            converged += 1;
        }
    }

    assert!(converged >= 10, "only {converged}/20 datasets converged");
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.len() % 2 == 1 {
            v[v.len() / 2]
        } else {
            0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
        }
    };
    for i in 0..2 {
        let raw = median(&mut raw_err[i]);
        let adj = median(&mut adj_err[i]);
        assert!(
            adj < raw,
            "component {i}: median |spa + delta_hat − oracle| = {adj} !< {raw}"
        );
    }
    println!("acceptance 8: {converged}/20 datasets converged");
    report("8 (tiny capture-recapture oracle)", start, 300.0);
}

/// Criterion 9 — exact single-dataset estimates and simulation scatter are
/// not reproducible at desk scale (single random datasets with unknown seeds;
/// the reference census series is not bundled). When the 1938–2007 annual
/// count file is supplied via `BIRTH_DEATH_COUNTS_CSV`, the reference rate
/// check runs against it.
#[test]
fn acceptance_9_external_data_check() {
    let Some(path) = std::env::var_os("BIRTH_DEATH_COUNTS_CSV") else {
        println!(
            "acceptance 9: SKIP (single-dataset estimates and simulation scatter are not \
             reproducible; set BIRTH_DEATH_COUNTS_CSV=<year,count csv> to run the reference \
             trajectory check)"
        );
        return;
    };
    let start = Instant::now();
    let trajectory = read_trajectory_csv(std::path::Path::new(&path)).unwrap();
    let node = build_birth_death(&trajectory);
    let x = trajectory.observation();
    let opts = FitOptions::default();
    let transforms = birth_death_transforms();
    let (fit, rep) = fit_with_discrepancy(&node, &x, &[0.2, 0.15], &transforms, &opts).unwrap();
    let traj = trajectory.clone();
    let objective = CallbackObjective::new(move |th: &[f64]| true_loglik_birth_death(&traj, th));
    let truth = find_true_mle(&objective, fit.theta_hat.as_slice(), &transforms, &opts).unwrap();

    let (lambda_spa, mu_spa) = (fit.theta_hat.0[0], fit.theta_hat.0[1]);
    let (lambda_true, mu_true) = (truth.theta_hat.0[0], truth.theta_hat.0[1]);
    assert!((lambda_spa - 0.1952).abs() <= 5e-4, "lambda_spa = {lambda_spa}");
    assert!((lambda_true - 0.1928).abs() <= 5e-4, "lambda_true = {lambda_true}");
    assert!((mu_spa - 0.1515).abs() <= 5e-4, "mu_spa = {mu_spa}");
    assert!((mu_true - 0.1492).abs() <= 5e-4, "mu_true = {mu_true}");
    for i in 0..2 {
        let true_delta = [lambda_true - lambda_spa, mu_true - mu_spa][i];
        assert!((true_delta + 0.0024).abs() <= 5e-4);
        assert!((rep.delta_hat[i] + 0.0026).abs() <= 5e-4);
    }
    report("9 (trajectory data check)", start, 60.0);
}
