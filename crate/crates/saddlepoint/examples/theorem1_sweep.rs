//! Rate verification for a model fully identified by its sample mean: the
//! discrepancy and its estimate both decay as n⁻² along an i.i.d.-sum sweep
//! with the standardized observation held fixed.
//!
//! Run with: `cargo run --release --example theorem1_sweep`

use saddlepoint::sweep::{
    fit_slope, log_grid, sweep_theorem1, SweepField, DEFAULT_BURN_IN,
};

fn main() {
    let u0 = 1.3045;
    let grid = log_grid(10.0, 1e4, 16);
    let records = sweep_theorem1(u0, &grid).expect("sweep");

    println!("{:>12} {:>14} {:>14} {:>14}", "n", "|delta|", "|delta_hat|", "|difference|");
    for r in &records {
        match &r.error {
            None => println!(
                "{:12.2} {:14.6e} {:14.6e} {:14.6e}",
                r.n,
                r.delta[0].abs(),
                r.delta_hat[0].abs(),
                r.diff[0].abs()
            ),
            Some(e) => println!("{:12.2} failed: {e}", r.n),
        }
    }

    println!();
    for field in [SweepField::Delta, SweepField::DeltaHat, SweepField::Diff] {
        let fit = fit_slope(&records, field, 0, DEFAULT_BURN_IN).expect("slope");
        println!(
            "{:>10} slope = {:+.4} (intercept {:+.3}, r² = {:.6})",
            field.as_str(),
            fit.slope,
            fit.intercept,
            fit.r2
        );
    }
    let last = records.last().unwrap();
    println!(
        "\nat n = {:.0}: delta_hat/delta = {:.6}",
        last.n,
        last.delta_hat[0] / last.delta[0]
    );
}
