//! Per-individual birth and death rates from a population trajectory. Each
//! yearly transition is a sum of i.i.d. offspring counts, so the saddlepoint
//! machinery applies block by block; the exact transition probability is
//! available for comparison.
//!
//! Run with: `cargo run --release --example birth_death_fit`

use saddlepoint::mle::{find_true_mle, fit_with_discrepancy, CallbackObjective, FitOptions};
use saddlepoint::models::{
    birth_death_transforms, build_birth_death, true_loglik_birth_death, TrajectoryModel,
};

fn main() {
    // a synthetic upward trajectory
    let counts = vec![14u64, 16, 15, 18, 21, 20, 24, 27, 26, 31, 33, 36, 40];
    let trajectory = TrajectoryModel::new(counts).expect("trajectory");
    let node = build_birth_death(&trajectory);
    let x = trajectory.observation();
    let opts = FitOptions::default();
    let transforms = birth_death_transforms();

    let (fit, report) =
        fit_with_discrepancy(&node, &x, &[0.3, 0.2], &transforms, &opts).expect("spa fit");
    let traj = trajectory.clone();
    let objective = CallbackObjective::new(move |th: &[f64]| true_loglik_birth_death(&traj, th));
    let truth =
        find_true_mle(&objective, fit.theta_hat.as_slice(), &transforms, &opts).expect("true fit");

    let labels = ["birth rate", "death rate"];
    println!("{:>12} {:>12} {:>12} {:>12} {:>12}", "parameter", "spa", "true", "delta", "delta_hat");
    for (i, label) in labels.iter().enumerate() {
        let spa = fit.theta_hat.0[i];
        let exact = truth.theta_hat.0[i];
        println!(
            "{:>12} {:>12.6} {:>12.6} {:>+12.2e} {:>+12.2e}",
            label,
            spa,
            exact,
            exact - spa,
            report.delta_hat[i]
        );
    }
    println!(
        "\ndelta_hat / SE = [{:+.4e}, {:+.4e}] — the approximation error is tiny\non the scale of inferential uncertainty",
        report.ratio[0], report.ratio[1]
    );
}
