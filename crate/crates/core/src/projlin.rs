//! Projective linear algebra over RP².
//!
//! Points of RP² are represented by unit vectors with a deterministic sign
//! convention (first component of magnitude above 1e-14 is positive), so
//! equal projective points have equal representatives.  Holonomy matrices
//! live in SL(3,R); classification splits positive-real-spectrum matrices
//! into hyperbolic (distinct), quasi-hyperbolic (repeated eigenvalue with a
//! one-dimensional eigenspace), and parabolic (unipotent, single Jordan
//! block) types, refusing to guess inside the configured gray zone.

use crate::error::{LabError, Result};
use nalgebra::{Matrix3, Vector3};

/// Default determinant tolerance for [`UnimodularMatrix`].
pub const TOL_DET: f64 = 1e-9;
/// Default eigenvalue-gap tolerance for [`classify_matrix`].
pub const TOL_CLASSIFY: f64 = 1e-7;

/// Holonomy / end type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndClass {
    /// Three distinct positive eigenvalues.
    Hyperbolic,
    /// Repeated eigenvalue with a nontrivial Jordan block.
    QuasiHyperbolic,
    /// Unipotent with a single Jordan block of size 3.
    Parabolic,
}

impl std::fmt::Display for EndClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EndClass::Hyperbolic => "hyperbolic",
            EndClass::QuasiHyperbolic => "quasi-hyperbolic",
            EndClass::Parabolic => "parabolic",
        })
    }
}

/// Dynamical type of a fixed point of a projective transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Attracting,
    Saddle,
    Repelling,
    /// Fixed point supported on a Jordan block (neutral direction).
    Parabolic,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Attracting => "attracting",
            Stability::Saddle => "saddle",
            Stability::Repelling => "repelling",
            Stability::Parabolic => "parabolic",
        })
    }
}

/// A point of RP² stored as a sign-normalized unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjPoint {
    rep: Vector3<f64>,
}

impl ProjPoint {
    /// The normalized representative (unit norm, deterministic sign).
    #[must_use]
    pub fn rep(&self) -> Vector3<f64> {
        self.rep
    }

    /// Distance insensitive to the sign of either representative:
    /// `min(|a - b|, |a + b|)` for unit representatives.
    #[must_use]
    pub fn chart_distance(&self, other: &ProjPoint) -> f64 {
        let d_minus = (self.rep - other.rep).norm();
        let d_plus = (self.rep + other.rep).norm();
        d_minus.min(d_plus)
    }
}

/// Project a nonzero vector to RP² with the canonical representative.
pub fn project(v: Vector3<f64>) -> Result<ProjPoint> {
    let norm = v.norm();
    if !(norm.is_finite() && norm > 1e-150) {
        return Err(LabError::ZeroVector(norm));
    }
    let mut rep = v / norm;
    // First component of magnitude above 1e-14 fixes the sign.
    for k in 0..3 {
        if rep[k].abs() > 1e-14 {
            if rep[k] < 0.0 {
                rep = -rep;
            }
            break;
        }
    }
    Ok(ProjPoint { rep })
}

/// Vertical twist parameters of an end: `sigma` moves along the boundary
/// geodesic, `tau` along the transverse eigendirection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistParams {
    pub sigma: f64,
    pub tau: f64,
}

/// An SL(3,R) matrix checked for unimodularity at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnimodularMatrix {
    m: Matrix3<f64>,
}

impl UnimodularMatrix {
    /// Wrap a matrix, requiring `|det - 1| <= tol`.
    pub fn new(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let defect = (m.determinant() - 1.0).abs();
        if defect <= tol {
            Ok(Self { m })
        } else {
            Err(LabError::NotUnimodular { defect, tol })
        }
    }

    /// The wrapped matrix.
    #[must_use]
    pub fn matrix(&self) -> Matrix3<f64> {
        self.m
    }
}

/// Diagonal twist flow `diag(e^{-sigma-tau}, e^{2 tau}, e^{sigma-tau})`;
/// exactly unimodular for every parameter pair, and a homomorphism from
/// (R², +) into SL(3,R).
#[must_use]
pub fn twist_matrix(params: TwistParams) -> UnimodularMatrix {
    let TwistParams { sigma, tau } = params;
    let m = Matrix3::from_diagonal(&Vector3::new(
        (-sigma - tau).exp(),
        (2.0 * tau).exp(),
        (sigma - tau).exp(),
    ));
    UnimodularMatrix { m }
}

/// Result of [`classify_matrix`]: the type together with the eigenvalues
/// sorted in descending order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub class: EndClass,
    /// Eigenvalues sorted descending; repeated entries are averaged.
    pub eigenvalues: [f64; 3],
}

/// Eigenvalues of a positive-real-spectrum 3x3 matrix, sorted descending,
/// with the smallest recomputed as `det / (l1 * l2)`.
///
/// For holonomy matrices the dynamic range reaches e^{4 pi sqrt 3} ~ 3e9,
/// and Schur noise is absolute (~eps * |M|); the determinant identity
/// restores full relative accuracy on the smallest eigenvalue, which the
/// convergence diagnostics measure to 1e-6 relative.
pub fn eigenvalues_sl3(m: &Matrix3<f64>, tol: f64) -> Result<[f64; 3]> {
    let eig = m.complex_eigenvalues();
    let scale = eig.iter().map(|lambda| lambda.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(LabError::NonPositiveSpectrum("zero matrix".into()));
    }
    let mut real = [0.0f64; 3];
    for (slot, lambda) in real.iter_mut().zip(eig.iter()) {
        if lambda.im.abs() > tol * scale {
            return Err(LabError::NonPositiveSpectrum(format!(
                "complex eigenvalue {:.6e} + {:.6e}i",
                lambda.re, lambda.im
            )));
        }
        if lambda.re <= 0.0 {
            return Err(LabError::NonPositiveSpectrum(format!(
                "non-positive eigenvalue {:.6e}",
                lambda.re
            )));
        }
        *slot = lambda.re;
    }
    real.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    let det = m.determinant();
    if det > 0.0 {
        real[2] = det / (real[0] * real[1]);
    }
    Ok(real)
}

/// Rank of `m` with singular values thresholded at `threshold`.
fn svd_rank(m: &Matrix3<f64>, threshold: f64) -> usize {
    m.singular_values().iter().filter(|&&s| s > threshold).count()
}

/// Null vector of a (numerically) rank-deficient matrix: the right singular
/// vector of the smallest singular value.
fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let svd = m.svd(true, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut idx = 0;
    for k in 1..3 {
        if svd.singular_values[k] < svd.singular_values[idx] {
            idx = k;
        }
    }
    v_t.row(idx).transpose()
}

/// Classify a matrix with positive real spectrum into the three end types.
///
/// Pairwise relative eigenvalue gaps at most `tol` count as ties; gaps in
/// the gray zone `[tol, 10 tol]` are refused as [`LabError::NumericallyAmbiguous`].
/// A repeated eigenvalue with a full eigenspace (diagonalizable) is outside
/// the end-holonomy normal-form family and is likewise refused, as is a
/// unipotent matrix whose Jordan structure is not a single size-3 block.
pub fn classify_matrix(m: &Matrix3<f64>, tol: f64) -> Result<Classification> {
    let lam = eigenvalues_sl3(m, tol)?;
    let norm_m = m.norm();
    let rel_gap = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
    let gaps = [rel_gap(lam[0], lam[1]), rel_gap(lam[1], lam[2]), rel_gap(lam[0], lam[2])];
    for gap in gaps {
        if gap > tol && gap < 10.0 * tol {
            return Err(LabError::NumericallyAmbiguous(format!(
                "eigenvalue gap {gap:.3e} inside gray zone [{:.1e}, {:.1e}]",
                tol,
                10.0 * tol
            )));
        }
    }
    let tie01 = gaps[0] <= tol;
    let tie12 = gaps[1] <= tol;
    match (tie01, tie12) {
        (false, false) => Ok(Classification {
            class: EndClass::Hyperbolic,
            eigenvalues: lam,
        }),
        (true, true) => {
            // Triple eigenvalue; unimodularity pins it to 1 (up to sign,
            // excluded by positivity).  Parabolic requires a single Jordan
            // block: rank(M - I) = 2 and rank((M - I)^2) = 1.
            let avg = (lam[0] + lam[1] + lam[2]) / 3.0;
            let shifted = m - Matrix3::identity() * avg;
            let r1 = svd_rank(&shifted, tol * norm_m.max(1.0));
            let r2 = svd_rank(&(shifted * shifted), tol * norm_m.max(1.0).powi(2));
            if r1 == 2 && r2 == 1 {
                Ok(Classification {
                    class: EndClass::Parabolic,
                    eigenvalues: [avg; 3],
                })
            } else {
                Err(LabError::NumericallyAmbiguous(format!(
                    "triple eigenvalue with rank(M - I) = {r1}, rank((M - I)^2) = {r2}: \
                     not a single size-3 Jordan block"
                )))
            }
        }
        _ => {
            // One repeated pair.  Quasi-hyperbolic needs a genuine Jordan
            // block there: rank(M - beta I) = 2.  A full eigenspace (rank 1)
            // is diagonalizable-with-repetition and outside the family.
            let beta = if tie01 {
                (lam[0] + lam[1]) / 2.0
            } else {
                (lam[1] + lam[2]) / 2.0
            };
            let rank = svd_rank(&(m - Matrix3::identity() * beta), tol * norm_m.max(1.0));
            if rank == 2 {
                let eigenvalues = if tie01 {
                    [beta, beta, lam[2]]
                } else {
                    [lam[0], beta, beta]
                };
                Ok(Classification {
                    class: EndClass::QuasiHyperbolic,
                    eigenvalues,
                })
            } else {
                Err(LabError::NumericallyAmbiguous(format!(
                    "repeated eigenvalue {beta:.6e} with rank(M - beta I) = {rank}: \
                     diagonalizable repetition is outside the normal-form family"
                )))
            }
        }
    }
}

/// A fixed point of a projective transformation with its dynamical type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub point: ProjPoint,
    pub stability: Stability,
    pub eigenvalue: f64,
}

/// Fixed points in RP² of a positive-spectrum matrix, ordered by descending
/// eigenvalue.
///
/// Hyperbolic: three points (attracting, saddle, repelling).
/// Quasi-hyperbolic: two points — the simple eigenvalue's point (attracting
/// or repelling by comparison with the repeated value) and the Jordan
/// block's point (parabolic type).  Parabolic: one point.
pub fn fixed_points(m: &Matrix3<f64>, tol: f64) -> Result<Vec<FixedPoint>> {
    let classification = classify_matrix(m, tol)?;
    let lam = classification.eigenvalues;
    let eigvec = |lambda: f64| -> Result<ProjPoint> {
        project(null_vector(&(m - Matrix3::identity() * lambda)))
    };
    match classification.class {
        EndClass::Hyperbolic => {
            let stabilities = [Stability::Attracting, Stability::Saddle, Stability::Repelling];
            lam.iter()
                .zip(stabilities)
                .map(|(&lambda, stability)| {
                    Ok(FixedPoint {
                        point: eigvec(lambda)?,
                        stability,
                        eigenvalue: lambda,
                    })
                })
                .collect()
        }
        EndClass::QuasiHyperbolic => {
            let (simple, repeated) = if (lam[0] - lam[1]).abs() <= tol * lam[0].abs() {
                (lam[2], lam[0])
            } else {
                (lam[0], lam[1])
            };
            let simple_stability = if simple > repeated {
                Stability::Attracting
            } else {
                Stability::Repelling
            };
            let mut out = vec![
                FixedPoint {
                    point: eigvec(simple)?,
                    stability: simple_stability,
                    eigenvalue: simple,
                },
                FixedPoint {
                    point: eigvec(repeated)?,
                    stability: Stability::Parabolic,
                    eigenvalue: repeated,
                },
            ];
            out.sort_by(|a, b| b.eigenvalue.partial_cmp(&a.eigenvalue).expect("finite"));
            Ok(out)
        }
        EndClass::Parabolic => Ok(vec![FixedPoint {
            point: eigvec(lam[0])?,
            stability: Stability::Parabolic,
            eigenvalue: lam[0],
        }]),
    }
}

/// Where a point sits relative to a [`PrincipalTriangle`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriangleLocation {
    Interior,
    /// Open edge spanned by vertices `(i, j)`, `i < j`.
    Edge(usize, usize),
    /// Vertex `i`.
    Vertex(usize),
    Outside,
}

/// The invariant triangle of a hyperbolic element: vertices are the
/// attracting (index 0), saddle (index 1), and repelling (index 2) fixed
/// points.
#[derive(Debug, Clone, Copy)]
pub struct PrincipalTriangle {
    pub vertices: [ProjPoint; 3],
    basis_inv: Matrix3<f64>,
}

/// Principal triangle of a hyperbolic matrix; other classes refuse.
pub fn principal_triangle(m: &Matrix3<f64>, tol: f64) -> Result<PrincipalTriangle> {
    let classification = classify_matrix(m, tol)?;
    if classification.class != EndClass::Hyperbolic {
        return Err(LabError::NotHyperbolic(format!(
            "principal triangle needs distinct eigenvalues, got {} type",
            classification.class
        )));
    }
    let fixed = fixed_points(m, tol)?;
    let vertices = [fixed[0].point, fixed[1].point, fixed[2].point];
    let basis = Matrix3::from_columns(&[vertices[0].rep(), vertices[1].rep(), vertices[2].rep()]);
    let basis_inv = basis.try_inverse().ok_or_else(|| {
        LabError::Numerical("eigenvector basis is numerically singular".into())
    })?;
    Ok(PrincipalTriangle { vertices, basis_inv })
}

impl PrincipalTriangle {
    /// Locate `p` by the sign pattern of its eigenbasis coordinates.
    ///
    /// Components of magnitude at most `tol * |x|_inf` count as zero; the
    /// remaining components must share a sign, else the point is outside
    /// the closed triangle.
    #[must_use]
    pub fn locate(&self, p: &ProjPoint, tol: f64) -> TriangleLocation {
        let x = self.basis_inv * p.rep();
        let scale = x.amax();
        let mut zeros = [false; 3];
        let mut pos = 0usize;
        let mut neg = 0usize;
        for k in 0..3 {
            if x[k].abs() <= tol * scale {
                zeros[k] = true;
            } else if x[k] > 0.0 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if pos > 0 && neg > 0 {
            return TriangleLocation::Outside;
        }
        match zeros.iter().filter(|&&z| z).count() {
            0 => TriangleLocation::Interior,
            1 => {
                let k = zeros.iter().position(|&z| z).expect("one zero");
                match k {
                    0 => TriangleLocation::Edge(1, 2),
                    1 => TriangleLocation::Edge(0, 2),
                    _ => TriangleLocation::Edge(0, 1),
                }
            }
            2 => {
                let k = zeros.iter().position(|&z| !z).expect("one nonzero");
                TriangleLocation::Vertex(k)
            }
            _ => TriangleLocation::Outside, // all-zero coordinates: degenerate
        }
    }
}
