//! Exponentially decaying self-similar solutions of the LSW coarsening model
//! with encounters, built by the contraction-mapping construction: a
//! homogeneous solution `ψ` with a boundary layer at `z = 1/2`, a two
//! parameter compatibility solve for `(ε, ε̃)`, and the profile iteration
//! `Φ ↦ ε·J[Φ*Φ]`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod homogeneous;
pub mod kernels;
pub mod params;
pub mod profiles;
pub mod quadrature;
pub mod solver;

pub use diagnostics::{moment, sweep_scaling, tail_fit, MomentOrder, SweepRecord, SweepRow, TailFit};
pub use error::{Error, Result};
pub use homogeneous::{compute_psi, PsiProfile};
pub use kernels::{
    build_log_weight, eval_a, eval_b, kappa, lambda_lsw, law_constant, phi_lsw, r_delta, r_zero, rho_delta, LogWeight,
    ParamState,
};
pub use params::{compute_g, compute_gamma, GSplit, GammaIndex, GammaTable, ParamContext, ParamSolveResult};
pub use profiles::{convolve, NormSpec, Profile, ZNorm};
pub use quadrature::{Grid, GridMeta};
pub use solver::{
    apply_j, solve_profile, split_j, FixedPointResult, MuPolicy, ResultSummary, Solver, SolverConfig, StartProfile,
};
