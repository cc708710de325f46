//! Critical points of regularized deep matrix factorization.
//!
//! The loss `F(W) = ||W_L ... W_1 - Y||_F^2 + sum_l lambda_l ||W_l||_F^2` has a
//! critical set that can be written down in closed form from the SVD of `Y`
//! and the positive roots of a one-dimensional polynomial. This crate builds
//! those points, classifies them (global minimizer, spurious local minimizer,
//! strict or non-strict saddle), and provides numerical checks: exact and
//! finite-difference curvature, descent certificates, gradient descent and
//! two-dimensional loss slices.

pub mod classify;
pub mod critical;
pub mod error;
pub mod loss;
pub mod problem;
pub mod scalar;
pub mod stack;
pub mod svd;
pub mod verify;

pub use classify::{
    certificate_direction, certificate_for, check_partially_benign, classify, classify_l2, global_min_value, Certificate,
    CertificateKind, Classification, Clause, CritClass, RegularizationReport,
};
pub use critical::{
    balancedness_residual, canonical_dressing, construct, enumerate_specs, global_specs, random_dressing, validate_spec, Caps,
    CriticalSpec, Dressing, SpecFamily, SpecViolation,
};
pub use error::{DmfError, Result};
pub use loss::{
    directional_poly, grad_f, grad_g, gradient, hessian_quadform, loss, loss_and_gradient, loss_f, loss_g, rescale_f_to_g,
    rescale_g_to_f, Objective,
};
pub use problem::{spectral_decompose, Landscape, ProblemFile, ProblemSpec, SpectralDecomposition, Tolerances, YSpec};
pub use scalar::{
    eval_f, eval_f_dx, eval_f_dxx, eval_g, lambda_critical, positive_roots, root_profile, scalar_argmin_g, thresholds, tie_band,
    RootKind, RootLabel, RootProfile, ScalarMinResult, Thresholds,
};
pub use stack::{end_to_end_product, DirectionStack, FactorStack};
pub use verify::{
    classify_numerically, fd_gradient, fd_quadform, gradient_descent, landscape_slice, probe_min_quadform, train_seeds,
    GdConfig, Init, LandscapeGrid, NumericClassification, NumericTols, ProbeReport, SliceConfig, TrainResult,
};
