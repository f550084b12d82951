//! Maximum-likelihood estimation through saddlepoint-approximated likelihoods.
//!
//! When a model's likelihood is intractable but its cumulant generating
//! function (CGF) is available, the saddlepoint approximation turns the CGF
//! into a tractable surrogate likelihood. Maximizing the surrogate instead of
//! the true likelihood shifts the estimate; this crate both performs the
//! surrogate fit and computes an explicit estimate of that shift per
//! parameter, so the adequacy of the surrogate can be judged without ever
//! evaluating the true likelihood.
//!
//! The pieces, bottom to top:
//!
//! * [`cgf`] — composable CGF objects with exact derivative operators, built
//!   on forward-mode dual arithmetic ([`dual`]);
//! * [`solve`] — the saddlepoint equation solver;
//! * [`loglik`] — first- and second-order saddlepoint log-likelihoods and the
//!   cumulant-contraction correction term that separates them;
//! * [`discrepancy`] — the gradient of the correction term and the one-step
//!   estimate of (true MLE − saddlepoint MLE);
//! * [`mle`] — quasi-Newton maximization with parameter transforms;
//! * [`models`] — builders, simulators, and exact-likelihood oracles for the
//!   bundled example models;
//! * [`sweep`] — sample-size sweep harnesses that measure the decay rates of
//!   the discrepancy and of its estimation error;
//! * [`cli`] — the command-line front end used by the `saddlepoint` binary.
//!
//! See the crate `examples/` directory for one runnable example per
//! capability.

pub mod cgf;
pub mod cli;
pub mod discrepancy;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod loglik;
pub mod mle;
pub mod models;
pub mod solve;
pub mod sweep;

pub use cgf::{CellSpec, CgfNode, Observation, ParamExpr, ParamVector, TiltVector};
pub use discrepancy::{approx_discrepancy, grad_correction_t, true_discrepancy, DiscrepancyReport};
pub use dual::{Dual, Dual2, DualScalar, Scalar};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use loglik::{
    correction_t, correction_t_direct, spa_loglik, spa_loglik2, spa_loglik_grad, spa_loglik_hess,
    HessMode,
};
pub use mle::{
    find_spa_mle, find_true_mle, fit_with_discrepancy, FitOptions, FitResult, FitStatus,
    ObjectiveKind, Transform,
};
pub use solve::{solve_saddlepoint, SaddlepointSolution, SolveOptions};
