//! Builders, simulators, and exact-likelihood oracles for the bundled models,
//! plus the small CSV formats the command-line front end reads and writes.

pub mod birth_death;
pub mod gamma;
pub mod mtalpha;
pub mod special;

use std::path::Path;

use crate::cgf::Observation;
use crate::error::{Error, Result};

pub use birth_death::{
    birth_death_transforms, build_birth_death, true_loglik_birth_death, TrajectoryModel,
};
pub use gamma::{
    build_gamma_fixed_rate, build_mvgamma, gamma_transforms, mvgamma_mean, mvgamma_transforms,
    true_loglik_gamma, true_loglik_gamma_grad, true_loglik_mvgamma, true_loglik_mvgamma_grad,
};
pub use mtalpha::{
    build_mtalpha, build_mtalpha_fixed_capture, mtalpha_cell_probs,
    mtalpha_fixed_capture_oracle, mtalpha_fixed_capture_transforms, mtalpha_theta0,
    mtalpha_transforms, mtalpha_true_loglik_oracle, simulate_mtalpha, MtAlphaDesign,
};

/// Write an observation as `name,value` rows, one per component.
pub fn write_observation_csv(path: &Path, names: &[String], values: &[f64]) -> Result<()> {
    if names.len() != values.len() {
        return Err(Error::dim(names.len(), values.len()));
    }
    let mut out = String::new();
    for (name, value) in names.iter().zip(values) {
        out.push_str(&format!("{name},{}\n", crate::sweep::format_f64(*value)));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read `name,value` rows; returns component names and values in file order.
pub fn read_observation_csv(path: &Path) -> Result<(Vec<String>, Observation)> {
    let text = std::fs::read_to_string(path)?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "name,value" {
            continue;
        }
        let (name, value) = line.split_once(',').ok_or_else(|| {
            Error::Config(format!("line {}: expected `name,value`", lineno + 1))
        })?;
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::Config(format!("line {}: `{value}` is not a number", lineno + 1))
        })?;
        names.push(name.trim().to_string());
        values.push(value);
    }
    if values.is_empty() {
        return Err(Error::Config("observation file has no rows".into()));
    }
    Ok((names, Observation::new(values)?))
}

/// Read a `year,count` trajectory file into a [`TrajectoryModel`].
pub fn read_trajectory_csv(path: &Path) -> Result<TrajectoryModel> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(i64, u64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "year,count" {
            continue;
        }
        let (year, count) = line.split_once(',').ok_or_else(|| {
            Error::Config(format!("line {}: expected `year,count`", lineno + 1))
        })?;
        let year: i64 = year.trim().parse().map_err(|_| {
            Error::Config(format!("line {}: `{year}` is not a year", lineno + 1))
        })?;
        let count: u64 = count.trim().parse().map_err(|_| {
            Error::Config(format!("line {}: `{count}` is not a count", lineno + 1))
        })?;
        rows.push((year, count));
    }
    rows.sort_by_key(|&(year, _)| year);
    TrajectoryModel::new(rows.into_iter().map(|(_, count)| count).collect())
}
