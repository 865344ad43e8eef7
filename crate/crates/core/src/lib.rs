//! Numerical laboratory for the ends of convex projective surfaces carried
//! by a cubic differential with a pole of order at most three.
//!
//! The crate solves the structure equation for the affine-sphere metric on
//! model end geometries, integrates the associated frame system to extract
//! holonomy, classifies the end from the residue alone, detects vertical
//! twist signs by developing rays into RP², and verifies holonomy
//! continuity along plumbing degenerations.

pub mod config;
pub mod developing;
pub mod error;
pub mod geometry;
pub mod levinson;
pub mod projlin;
pub mod spectrum;
pub mod wang;

pub use error::{LabError, Result};
pub use geometry::{
    ansatz_metric, cusp_factor, curvature, flat_factor, grafted_metric, norm_u_squared,
    plumbing_differential, plumbing_tail_bound, smoothstep5, ConformalMetric, CubicLaurent,
    PlumbingDatum,
};
pub use projlin::{
    classify_matrix, eigenvalues_sl3, fixed_points, principal_triangle, project, twist_matrix,
    Classification, EndClass, FixedPoint, PrincipalTriangle, ProjPoint, Stability,
    TriangleLocation, TwistParams, UnimodularMatrix, TOL_CLASSIFY, TOL_DET,
};
pub use spectrum::{
    boundary_eigenvalues, chi_coefficients, chi_roots, class_symmetry_check, classify_residue,
    direction_eigenvalues, discriminant, eta_branch, residues_for_spectrum, spectrum_report,
    tie_rays, twist_sign, xi_branch, SpectrumReport, TwistSign,
};
pub use developing::{
    ambient_holonomy, detect_twist, develop_ray, direction_generator, fundamental_solution,
    grid_field, holonomy_loop, holonomy_log_spectrum, initial_frame, limit_matrix, transport,
    triangle_model_frame, volume_drift, AffineFrame, DevelopedCurve, FrameCoefficients,
    FrameDefects, GridField, TransportField, TwistDetection, TwistWitness, DEFAULT_Y_MAX, MAX_STEP,
};
pub use levinson::{
    error_bound, iterate_solution, parameter_continuity_scan, split_index, AsymptoticSolution,
    PerturbedSystem,
};
pub use wang::{
    auto_alpha, build_barriers, gradient_bound_check, neck_barrier, solve_wang, solve_wang_from,
    wang_residual, BarrierPair, BoundaryCondition, CylinderGrid, GradientBound, NeckBarrier,
    SolveReport, DEFAULT_SOLVE_TOL,
};
