//! Capture-recapture with misidentification.
//!
//! Over `T` occasions, each of `N` animals is independently captured on
//! occasion t with probability p_t and, when captured, correctly identified
//! with probability α. A misidentified capture is never matched to its animal:
//! it surfaces as a single-capture "ghost" individual on that occasion. The
//! latent history counts Y (cells over {not captured, captured-correct,
//! misidentified}^T) are multinomial with index N, and the observed history
//! counts are X = A Y for a known 0/1 split matrix A, so the observable's CGF
//! is the latent CGF evaluated at tA.
//!
//! θ = (N, α, p_1, …, p_T). N is treated as a continuous positive parameter.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cgf::{mtalpha_latent_histories, CellSpec, CgfNode, Observation, ParamExpr};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mle::Transform;
use crate::models::special::{ln_gamma, ln_factorial};

/// Split-matrix design for the misidentification model.
#[derive(Debug, Clone)]
pub struct MtAlphaDesign {
    pub occasions: usize,
    /// Latent histories in canonical base-3 order; digit t is the occasion-t
    /// outcome (0 = not captured, 1 = captured-correct, 2 = misidentified).
    pub latent: Vec<Vec<u8>>,
    /// Observed histories as capture bitmasks (bit t = captured on occasion t),
    /// in increasing mask order; the all-zero history is unobservable and
    /// excluded.
    pub observed_masks: Vec<u32>,
    /// 0/1 matrix mapping latent counts to observed counts.
    pub a: Mat<f64>,
}

impl MtAlphaDesign {
    pub fn observed_dim(&self) -> usize {
        self.observed_masks.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.latent.len()
    }

    /// Photograph-style label for an observed history, e.g. "101".
    pub fn observed_label(&self, row: usize) -> String {
        let mask = self.observed_masks[row];
        (0..self.occasions)
            .map(|t| if mask >> t & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// Row index of an observed capture mask.
    fn row_of(&self, mask: u32) -> usize {
        (mask - 1) as usize
    }

    /// Columns of A listed as the observed rows each latent history feeds.
    fn column_rows(&self) -> Vec<Vec<usize>> {
        self.latent
            .iter()
            .map(|hist| {
                let mut rows = Vec::new();
                let mut own_mask = 0u32;
                for (t, &d) in hist.iter().enumerate() {
                    if d == 1 {
                        own_mask |= 1 << t;
                    } else if d == 2 {
                        rows.push(self.row_of(1 << t));
                    }
                }
                if own_mask != 0 {
                    rows.push(self.row_of(own_mask));
                }
                rows
            })
            .collect()
    }
}

/// Build the CGF tree and design for `T` capture occasions.
/// θ layout: (N, α, p_1, …, p_T).
pub fn build_mtalpha(occasions: usize) -> Result<(CgfNode, MtAlphaDesign)> {
    if !(2..=6).contains(&occasions) {
        return Err(Error::TooManyOccasions(occasions));
    }
    let latent = mtalpha_latent_histories(occasions);
    let observed_masks: Vec<u32> = (1..(1u32 << occasions)).collect();
    let d_obs = observed_masks.len();
    let d_lat = latent.len();

    let design = MtAlphaDesign {
        occasions,
        latent: latent.clone(),
        observed_masks,
        a: Mat::zeros(d_obs, d_lat),
    };
    let mut a = Mat::<f64>::zeros(d_obs, d_lat);
    for (col, rows) in design.column_rows().iter().enumerate() {
        for &row in rows {
            a[(row, col)] += 1.0;
        }
    }
    let design = MtAlphaDesign { a: a.clone(), ..design };

    let cells = CellSpec::MtAlphaHistories {
        occasions,
        alpha: ParamExpr::theta(1),
        capture: (0..occasions).map(|t| ParamExpr::theta(2 + t)).collect(),
    };
    let node = CgfNode::linear_map(a, CgfNode::multinomial(ParamExpr::theta(0), cells))?;
    Ok((node, design))
}

pub fn mtalpha_transforms(occasions: usize) -> Vec<Transform> {
    let mut t = vec![Transform::Log, Transform::Logit];
    t.extend(std::iter::repeat_n(Transform::Logit, occasions));
    t
}

/// Variant with the capture probabilities held at known values, θ = (N, α).
///
/// With T occasions the full model has T + 2 parameters against 2^T − 1
/// observed cells; at T = 2 that is over-parameterized (4 > 3), the moment
/// equations can be matched exactly along a ridge, and neither MLE is unique
/// (the saddlepoint likelihood even diverges along the ridge as the implied
/// covariance collapses). Fixing p⃗ keeps tiny-occasion designs identifiable.
pub fn build_mtalpha_fixed_capture(
    occasions: usize,
    capture: &[f64],
) -> Result<(CgfNode, MtAlphaDesign)> {
    if capture.len() != occasions {
        return Err(Error::dim(occasions, capture.len()));
    }
    if capture.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::domain("capture probability must lie in [0, 1]"));
    }
    let (_, design) = build_mtalpha(occasions)?;
    let cells = CellSpec::MtAlphaHistories {
        occasions,
        alpha: ParamExpr::theta(1),
        capture: capture.iter().map(|&p| ParamExpr::constant(p)).collect(),
    };
    let node = CgfNode::linear_map(
        design.a.clone(),
        CgfNode::multinomial(ParamExpr::theta(0), cells),
    )?;
    Ok((node, design))
}

pub fn mtalpha_fixed_capture_transforms() -> Vec<Transform> {
    vec![Transform::Log, Transform::Logit]
}

/// Oracle log-likelihood for the fixed-capture submodel, θ = (N, α).
pub fn mtalpha_fixed_capture_oracle(
    design: &MtAlphaDesign,
    capture: &[f64],
    x: &[f64],
    theta: &[f64],
) -> Result<f64> {
    if theta.len() != 2 {
        return Err(Error::dim(2, theta.len()));
    }
    let mut full = vec![theta[0], theta[1]];
    full.extend_from_slice(capture);
    mtalpha_true_loglik_oracle(design, x, &full)
}

/// Latent cell probabilities for parameters (α, p⃗).
pub fn mtalpha_cell_probs(occasions: usize, alpha: f64, capture: &[f64]) -> Result<Vec<f64>> {
    let cells = CellSpec::MtAlphaHistories {
        occasions,
        alpha: ParamExpr::theta(0),
        capture: (0..occasions).map(|t| ParamExpr::theta(1 + t)).collect(),
    };
    let mut theta = vec![alpha];
    theta.extend_from_slice(capture);
    cells.probs(&theta)
}

/// Exact log P(X = x; θ) by exhaustive enumeration of latent count vectors y
/// with A y = x. The all-uncaptured count absorbs N − Σy as a real-valued
/// slack through the gamma function, so N need not be an integer.
pub fn mtalpha_true_loglik_oracle(
    design: &MtAlphaDesign,
    x: &[f64],
    theta: &[f64],
) -> Result<f64> {
    if design.occasions > 3 {
        return Err(Error::OracleTooLarge(format!(
            "enumeration over {} occasions",
            design.occasions
        )));
    }
    let d_obs = design.observed_dim();
    if x.len() != d_obs {
        return Err(Error::dim(d_obs, x.len()));
    }
    if theta.len() != design.occasions + 2 {
        return Err(Error::dim(design.occasions + 2, theta.len()));
    }
    let counts: Vec<u64> = x
        .iter()
        .map(|&v| {
            let r = v.round();
            if (v - r).abs() > 1e-9 || r < 0.0 {
                Err(Error::domain("observed history counts must be non-negative integers"))
            } else {
                Ok(r as u64)
            }
        })
        .collect::<Result<_>>()?;
    let total_observed: u64 = counts.iter().sum();
    if total_observed > 240 {
        return Err(Error::OracleTooLarge(format!(
            "{total_observed} observed capture events"
        )));
    }

    let big_n = theta[0];
    let alpha = theta[1];
    let capture = &theta[2..];
    if big_n <= 0.0 {
        return Err(Error::domain("population size must be positive"));
    }
    let pi = mtalpha_cell_probs(design.occasions, alpha, capture)?;
    let column_rows = design.column_rows();
    // cells other than the all-uncaptured history, which has an empty column
    let cells: Vec<usize> = (0..design.latent_dim())
        .filter(|&c| !column_rows[c].is_empty())
        .collect();
    // suffix coverage: can any cell from position i onward still feed row r?
    let mut suffix_touch = vec![vec![false; d_obs]; cells.len() + 1];
    for i in (0..cells.len()).rev() {
        let mut row_flags = suffix_touch[i + 1].clone();
        for &r in &column_rows[cells[i]] {
            row_flags[r] = true;
        }
        suffix_touch[i] = row_flags;
    }

    let mut terms: Vec<f64> = Vec::new();
    let mut rem = counts.clone();
    let mut assignment = vec![0u64; cells.len()];
    enumerate_consistent(
        &cells,
        &column_rows,
        &suffix_touch,
        0,
        &mut rem,
        &mut assignment,
        &mut |assign: &[u64]| {
            let used: u64 = assign.iter().sum();
            let slack = big_n - used as f64;
            if slack < 0.0 {
                return;
            }
            let mut term = ln_gamma(big_n + 1.0) - ln_gamma(slack + 1.0);
            // all-uncaptured cell is index 0 in the canonical order
            if slack > 0.0 {
                if pi[0] <= 0.0 {
                    return;
                }
                term += slack * pi[0].ln();
            }
            for (pos, &cell) in cells.iter().enumerate() {
                let y = assign[pos];
                if y == 0 {
                    continue;
                }
                if pi[cell] <= 0.0 {
                    return;
                }
                term += y as f64 * pi[cell].ln() - ln_factorial(y as f64);
            }
            terms.push(term);
        },
    );

    if terms.is_empty() {
        return Err(Error::domain(
            "no latent configuration is consistent with the observation at this N",
        ));
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln())
}

#[allow(clippy::too_many_arguments)]
fn enumerate_consistent(
    cells: &[usize],
    column_rows: &[Vec<usize>],
    suffix_touch: &[Vec<bool>],
    pos: usize,
    rem: &mut Vec<u64>,
    assignment: &mut Vec<u64>,
    emit: &mut impl FnMut(&[u64]),
) {
    if pos == cells.len() {
        if rem.iter().all(|&r| r == 0) {
            emit(assignment);
        }
        return;
    }
    // a row with remaining demand that no later cell can feed kills the branch
    for (r, &remaining) in rem.iter().enumerate() {
        if remaining > 0 && !suffix_touch[pos][r] {
            return;
        }
    }
    let rows = &column_rows[cells[pos]];
    let cap = rows.iter().map(|&r| rem[r]).min().unwrap_or(0);
    for y in 0..=cap {
        if y > 0 {
            for &r in rows {
                rem[r] -= 1;
            }
        }
        assignment[pos] = y;
        enumerate_consistent(
            cells,
            column_rows,
            suffix_touch,
            pos + 1,
            rem,
            assignment,
            emit,
        );
    }
    for &r in rows {
        rem[r] += cap;
    }
    assignment[pos] = 0;
}

/// Draw one observed-count vector: N latent histories i.i.d. from the cell
/// probabilities, then mapped through A. Deterministic for a fixed seed.
pub fn simulate_mtalpha(design: &MtAlphaDesign, theta: &[f64], seed: u64) -> Result<Observation> {
    if theta.len() != design.occasions + 2 {
        return Err(Error::dim(design.occasions + 2, theta.len()));
    }
    let n = theta[0].round();
    if n < 1.0 {
        return Err(Error::domain("population size must be at least 1"));
    }
    let pi = mtalpha_cell_probs(design.occasions, theta[1], &theta[2..])?;
    let column_rows = design.column_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; design.observed_dim()];
    for _ in 0..(n as u64) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut cell = pi.len() - 1;
        for (c, &p) in pi.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = c;
                break;
            }
        }
        for &row in &column_rows[cell] {
            x[row] += 1.0;
        }
    }
    let mut obs = Observation::new(x)?;
    obs.iid_count = None;
    Ok(obs)
}

/// Rough moment-style starting point: ghosts ignored, capture probabilities
/// from per-occasion totals against a population guess.
pub fn mtalpha_theta0(design: &MtAlphaDesign, x: &[f64]) -> Vec<f64> {
    let t = design.occasions;
    let mut per_occasion = vec![0.0; t];
    let mut total_animals = 0.0;
    for (row, &mask) in design.observed_masks.iter().enumerate() {
        total_animals += x[row];
        for (occ, tally) in per_occasion.iter_mut().enumerate() {
            if mask >> occ & 1 == 1 {
                *tally += x[row];
            }
        }
    }
    let n0 = (2.0 * total_animals).max(4.0);
    let mut theta = vec![n0, 0.8];
    theta.extend(per_occasion.iter().map(|&c| (c / n0).clamp(0.05, 0.95)));
    theta
}
