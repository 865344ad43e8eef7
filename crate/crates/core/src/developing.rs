//! Frame transport, holonomy extraction, and ray development.
//!
//! The affine-sphere frame (f, f_w, f_w̄) satisfies the first-order system
//!
//! ```text
//! d/dw  (f, f_w, f_w̄) :  f_ww = psi_w f_w + U e^{-psi} f_w̄,   f_ww̄ = 1/2 e^psi f,
//! ```
//!
//! together with the conjugate w̄-half; splitting into x- and y-derivatives
//! on the cylinder w = x + i y gives two linear non-autonomous systems
//! integrated here by classical RK4.  Horizontal monodromy, expressed in
//! the real frame {f, f_x, f_y}, is the end holonomy; rays developed to
//! RP² detect the vertical twist sign through which boundary segment of
//! the principal triangle their limits land on.

use crate::error::{LabError, Result};
use crate::geometry::{plumbing_differential, ConformalMetric, CubicLaurent, PlumbingDatum};
use crate::projlin::{fixed_points, project, FixedPoint, ProjPoint, UnimodularMatrix, TOL_CLASSIFY};
use crate::spectrum::{twist_sign, xi_branch, TwistSign};
use crate::wang::CylinderGrid;
use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Maximum admissible RK4 step.
pub const MAX_STEP: f64 = 0.01;
/// Internal step for holonomy loops.
const HOLONOMY_STEP: f64 = 2.0 * PI / 1600.0;
/// Chart-distance tolerance of the ray-limit Cauchy criterion.
const LIMIT_TOL: f64 = 1e-6;
/// Number of trailing samples the Cauchy criterion inspects.
const LIMIT_WINDOW: usize = 10;
/// Arc-length spacing of developed-curve samples.
const SAMPLE_SPACING: f64 = 0.25;
/// Default ray height budget.
pub const DEFAULT_Y_MAX: f64 = 40.0;

fn i_c() -> Complex64 {
    Complex64::new(0.0, 1.0)
}

fn omega() -> Complex64 {
    Complex64::new(-0.5, 0.5 * 3.0f64.sqrt())
}

/// Affine frame: rows (f, f_w, f_w̄) at a base point, with the metric
/// potential there.
#[derive(Debug, Clone)]
pub struct AffineFrame {
    /// Rows f, f_w, f_w̄.
    pub rows: Matrix3<Complex64>,
    /// psi at the frame's base point.
    pub psi_at: f64,
}

/// Deviations of a frame from its structural invariants.
#[derive(Debug, Clone, Copy)]
pub struct FrameDefects {
    /// max |Im f| relative to the frame scale.
    pub reality: f64,
    /// max |row3 - conj(row2)| relative to the frame scale.
    pub conjugacy: f64,
    /// |det - 1/2 i e^psi| / (1/2 e^psi).
    pub det_rel: f64,
}

impl AffineFrame {
    /// Measure the reality, conjugacy, and determinant invariants.
    #[must_use]
    pub fn invariant_defects(&self) -> FrameDefects {
        let scale = self
            .rows
            .iter()
            .map(|v| v.norm())
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let reality = (0..3)
            .map(|j| self.rows[(0, j)].im.abs())
            .fold(0.0f64, f64::max)
            / scale;
        let conjugacy = (0..3)
            .map(|j| (self.rows[(2, j)] - self.rows[(1, j)].conj()).norm())
            .fold(0.0f64, f64::max)
            / scale;
        let target = 0.5 * i_c() * Complex64::new(self.psi_at.exp(), 0.0);
        let det_rel = (self.rows.determinant() - target).norm() / target.norm();
        FrameDefects {
            reality,
            conjugacy,
            det_rel,
        }
    }
}

/// The eigenbasis frame scaled so that det = 1/2 i e^{psi0}: rows
/// (1,1,1), (1,w²,w), (1,w,w²) times (e^{psi0}/2)^{1/3}/sqrt(3), w the
/// primitive cube root of unity.
#[must_use]
pub fn initial_frame(psi0: f64) -> AffineFrame {
    let s = (psi0.exp() / 2.0).cbrt() / 3.0f64.sqrt();
    let one = Complex64::new(s, 0.0);
    let w = omega() * s;
    let w2 = omega() * omega() * s;
    let rows = Matrix3::new(one, one, one, one, w2, w, one, w, w2);
    AffineFrame {
        rows,
        psi_at: psi0,
    }
}

/// Exact closed-form frame of the triangle model (e^psi = 2, U = 2) at
/// coordinates (sigma, tau): f = (e^{2σ}, e^{−σ+√3τ}, e^{−σ−√3τ})/√3.
#[must_use]
pub fn triangle_model_frame(sigma: f64, tau: f64) -> AffineFrame {
    let r3 = 3.0f64.sqrt();
    let e = [
        (2.0 * sigma).exp(),
        (-sigma + r3 * tau).exp(),
        (-sigma - r3 * tau).exp(),
    ];
    let w = omega();
    let w2 = w * w;
    let row = |a: Complex64, b: Complex64| {
        [
            Complex64::new(e[0] / r3, 0.0),
            a * (e[1] / r3),
            b * (e[2] / r3),
        ]
    };
    let one = Complex64::new(1.0, 0.0);
    let f = row(one, one);
    let fw = row(w2, w);
    let fwb = row(w, w2);
    let rows = Matrix3::new(
        f[0], f[1], f[2], fw[0], fw[1], fw[2], fwb[0], fwb[1], fwb[2],
    );
    AffineFrame {
        rows,
        psi_at: 2.0f64.ln(),
    }
}

/// Coefficient bundle of the frame system at a point.
#[derive(Debug, Clone, Copy)]
pub struct FrameCoefficients {
    pub e_psi: f64,
    pub psi_w: Complex64,
    /// U e^{-psi} (finite also in the zero-residue limit).
    pub u_e: Complex64,
}

/// Coefficient field the transport integrates over.
#[derive(Debug, Clone)]
pub enum TransportField {
    /// Exact model end of residue R: e^psi = 2^{1/3}|R|^{2/3}, U = -iR,
    /// psi_w = 0.  R = 0 gives the nilpotent limit system.
    ExactModel { residue: Complex64 },
    /// Triangle model: e^psi = 2, U = 2, psi_w = 0.
    TriangleModel,
    /// Interpolated solved-grid background.
    Grid(Box<GridField>),
}

/// Where a grid field's analytic differential coefficient comes from.
#[derive(Debug, Clone)]
enum DifferentialSource {
    /// Laurent series in the end chart z = e^{i w}.
    Laurent(CubicLaurent),
    /// Plumbing series in the neck coordinate l = i w - shift (shift 0
    /// for the collar-centered chart, (1/2) log t for the one-sided
    /// chart of a grafted neck).
    Plumbing { datum: PlumbingDatum, shift: f64 },
}

impl DifferentialSource {
    /// Coefficient of dw^3 at the strip point w.
    fn upstairs_value(&self, w: Complex64) -> Result<Complex64> {
        match self {
            DifferentialSource::Laurent(d) => d.upstairs_value(w),
            DifferentialSource::Plumbing { datum, shift } => {
                let ell = i_c() * w - shift;
                Ok(-i_c() * plumbing_differential(datum, ell)?)
            }
        }
    }
}

/// Solved-grid coefficient field: analytic phi and U, bicubic
/// interpolation for the solved correction u and its first derivatives.
#[derive(Debug, Clone)]
pub struct GridField {
    metric: ConformalMetric,
    differential: DifferentialSource,
    nx: usize,
    ny: usize,
    y0: f64,
    y1: f64,
    hx: f64,
    hy: f64,
    u: Vec<f64>,
    ux: Vec<f64>,
    uy: Vec<f64>,
}

/// Build a grid-backed transport field from a solved correction field.
/// The differential must be holomorphic; its Laurent form guarantees it,
/// and a finite-difference Cauchy-Riemann spot check guards the wiring.
pub fn grid_field(
    metric: ConformalMetric,
    differential: CubicLaurent,
    grid: &CylinderGrid,
    solution: &[f64],
) -> Result<TransportField> {
    grid_field_from_source(metric, DifferentialSource::Laurent(differential), grid, solution)
}

/// Grid-backed transport field of a plumbing neck: the differential is
/// the plumbing series in the neck coordinate l = i w - ell_shift, the
/// metric supplies phi as on any other grid.
pub fn plumbing_grid_field(
    metric: ConformalMetric,
    datum: PlumbingDatum,
    ell_shift: f64,
    grid: &CylinderGrid,
    solution: &[f64],
) -> Result<TransportField> {
    grid_field_from_source(
        metric,
        DifferentialSource::Plumbing {
            datum,
            shift: ell_shift,
        },
        grid,
        solution,
    )
}

fn grid_field_from_source(
    metric: ConformalMetric,
    differential: DifferentialSource,
    grid: &CylinderGrid,
    solution: &[f64],
) -> Result<TransportField> {
    grid.require_populated()?;
    if solution.len() != grid.len() {
        return Err(LabError::InvalidArgument(
            "solution field length does not match the grid".into(),
        ));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut ux = vec![0.0; solution.len()];
    let mut uy = vec![0.0; solution.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            ux[i] = (solution[iy * nx + (ix + 1) % nx] - solution[iy * nx + (ix + nx - 1) % nx])
                / (2.0 * hx);
            uy[i] = if iy == 0 {
                (-3.0 * solution[i] + 4.0 * solution[nx + ix] - solution[2 * nx + ix]) / (2.0 * hy)
            } else if iy == ny - 1 {
                (3.0 * solution[i] - 4.0 * solution[(ny - 2) * nx + ix]
                    + solution[(ny - 3) * nx + ix])
                    / (2.0 * hy)
            } else {
                (solution[(iy + 1) * nx + ix] - solution[(iy - 1) * nx + ix]) / (2.0 * hy)
            };
        }
    }
    // Cauchy-Riemann spot check of the differential on a coarse sample.
    let h = 1e-4;
    for k in 0..8 {
        let w = Complex64::new(0.7 * k as f64, grid.y0 + 0.5 * (grid.y1 - grid.y0));
        let dx = (differential.upstairs_value(w + h)? - differential.upstairs_value(w - h)?)
            / (2.0 * h);
        let dy = (differential.upstairs_value(w + h * i_c())?
            - differential.upstairs_value(w - h * i_c())?)
            / (2.0 * h);
        let defect = (dx + i_c() * dy).norm();
        let scale = 1.0 + differential.upstairs_value(w)?.norm();
        if defect > 1e-5 * scale {
            return Err(LabError::FieldDomainError(format!(
                "differential fails the Cauchy-Riemann check: defect {defect:.3e}"
            )));
        }
    }
    Ok(TransportField::Grid(Box::new(GridField {
        metric,
        differential,
        nx,
        ny,
        y0: grid.y0,
        y1: grid.y1,
        hx,
        hy,
        u: solution.to_vec(),
        ux,
        uy,
    })))
}

/// Catmull-Rom evaluation on four uniform samples at offsets -1,0,1,2,
/// parameter s in [0,1] inside the middle cell.
fn catmull_rom(p: [f64; 4], s: f64) -> f64 {
    p[1] + 0.5
        * s
        * (p[2] - p[0]
            + s * (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]
                + s * (3.0 * (p[1] - p[2]) + p[3] - p[0])))
}

/// Cubic Lagrange interpolation through (xs, vs) at x.
fn lagrange4(xs: [f64; 4], vs: [f64; 4], x: f64) -> f64 {
    let mut acc = 0.0;
    for j in 0..4 {
        let mut term = vs[j];
        for k in 0..4 {
            if k != j {
                term *= (x - xs[k]) / (xs[j] - xs[k]);
            }
        }
        acc += term;
    }
    acc
}

impl GridField {
    /// Bicubic interpolation of a node field: periodic Catmull-Rom in x;
    /// Catmull-Rom in y on interior cells, shifted Lagrange on the two
    /// boundary cells (C¹ in x everywhere, C¹ in y away from the first
    /// and last cell seams).
    fn interp(&self, values: &[f64], x: f64, y: f64) -> f64 {
        let xn = x.rem_euclid(2.0 * PI) / self.hx;
        let ix = (xn.floor() as usize).min(self.nx - 1);
        let sx = xn - ix as f64;
        let ty = (y - self.y0) / self.hy;
        let iy = (ty.floor() as isize).clamp(0, self.ny as isize - 2) as usize;
        let row_val = |jy: usize| -> f64 {
            let p: [f64; 4] = std::array::from_fn(|k| {
                let jx = (ix + self.nx + k - 1) % self.nx;
                values[jy * self.nx + jx]
            });
            catmull_rom(p, sx)
        };
        if iy >= 1 && iy <= self.ny - 3 {
            let p: [f64; 4] = std::array::from_fn(|k| row_val(iy - 1 + k));
            catmull_rom(p, ty - iy as f64)
        } else {
            let j0 = if iy == 0 { 0 } else { self.ny - 4 };
            let xs: [f64; 4] = std::array::from_fn(|k| (j0 + k) as f64);
            let vs: [f64; 4] = std::array::from_fn(|k| row_val(j0 + k));
            lagrange4(xs, vs, ty)
        }
    }

    /// Fourth-order Richardson derivative of the background potential.
    fn phi_dy(&self, y: f64) -> Result<f64> {
        let h = 1e-3;
        let f = |yy: f64| self.metric.phi_upstairs(yy);
        Ok((8.0 * (f(y + h)? - f(y - h)?) - (f(y + 2.0 * h)? - f(y - 2.0 * h)?)) / (12.0 * h))
    }
}

impl TransportField {
    /// Metric potential psi at a point.
    pub fn psi(&self, x: f64, y: f64) -> Result<f64> {
        match self {
            TransportField::ExactModel { residue } => {
                let r_abs = residue.norm();
                if r_abs == 0.0 {
                    return Err(LabError::DomainError(
                        "psi undefined on the zero-residue limit field".into(),
                    ));
                }
                Ok((2.0f64.powf(1.0 / 3.0) * r_abs.powf(2.0 / 3.0)).ln())
            }
            TransportField::TriangleModel => Ok(2.0f64.ln()),
            TransportField::Grid(g) => {
                Ok(g.metric.phi_upstairs(y)? + g.interp(&g.u, x, y))
            }
        }
    }

    /// Whether (x, y) lies in the field's domain.
    #[must_use]
    pub fn contains(&self, _x: f64, y: f64) -> bool {
        match self {
            TransportField::ExactModel { .. } | TransportField::TriangleModel => true,
            TransportField::Grid(g) => y >= g.y0 && y <= g.y1,
        }
    }

    /// Coefficients of the frame system at a point.
    pub fn coefficients(&self, x: f64, y: f64) -> Result<FrameCoefficients> {
        match self {
            TransportField::ExactModel { residue } => {
                let r_abs = residue.norm();
                if r_abs == 0.0 {
                    return Ok(FrameCoefficients {
                        e_psi: 0.0,
                        psi_w: Complex64::new(0.0, 0.0),
                        u_e: Complex64::new(0.0, 0.0),
                    });
                }
                let e_psi = 2.0f64.powf(1.0 / 3.0) * r_abs.powf(2.0 / 3.0);
                Ok(FrameCoefficients {
                    e_psi,
                    psi_w: Complex64::new(0.0, 0.0),
                    u_e: -i_c() * residue / e_psi,
                })
            }
            TransportField::TriangleModel => Ok(FrameCoefficients {
                e_psi: 2.0,
                psi_w: Complex64::new(0.0, 0.0),
                u_e: Complex64::new(1.0, 0.0),
            }),
            TransportField::Grid(g) => {
                if !self.contains(x, y) {
                    return Err(LabError::FieldDomainError(format!(
                        "point ({x:.3}, {y:.3}) outside grid band [{:.3}, {:.3}]",
                        g.y0, g.y1
                    )));
                }
                let phi = g.metric.phi_upstairs(y)?;
                let u = g.interp(&g.u, x, y);
                let psi = phi + u;
                let e_psi = psi.exp();
                let phi_w = Complex64::new(0.0, -0.5 * g.phi_dy(y)?);
                let u_w = Complex64::new(
                    0.5 * g.interp(&g.ux, x, y),
                    -0.5 * g.interp(&g.uy, x, y),
                );
                let big_u = g.differential.upstairs_value(Complex64::new(x, y))?;
                Ok(FrameCoefficients {
                    e_psi,
                    psi_w: phi_w + u_w,
                    u_e: big_u * (-psi).exp(),
                })
            }
        }
    }
}

fn m_x(fc: &FrameCoefficients) -> Matrix3<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let h = Complex64::new(0.5 * fc.e_psi, 0.0);
    Matrix3::new(
        z,
        one,
        one,
        h,
        fc.psi_w,
        fc.u_e,
        h,
        fc.u_e.conj(),
        fc.psi_w.conj(),
    )
}

fn m_y(fc: &FrameCoefficients) -> Matrix3<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let i = i_c();
    let h = Complex64::new(0.5 * fc.e_psi, 0.0);
    Matrix3::new(
        z,
        i,
        -i,
        -i * h,
        i * fc.psi_w,
        i * fc.u_e,
        i * h,
        -i * fc.u_e.conj(),
        -i * fc.psi_w.conj(),
    )
}

/// Generator of transport in direction (cx, cy) at a point.
fn direction_matrix(
    field: &TransportField,
    x: f64,
    y: f64,
    cx: f64,
    cy: f64,
) -> Result<Matrix3<Complex64>> {
    let fc = field.coefficients(x, y)?;
    let cxx = Complex64::new(cx, 0.0);
    let cyy = Complex64::new(cy, 0.0);
    Ok(m_x(&fc) * cxx + m_y(&fc) * cyy)
}

/// Generator of frame transport at (x, y) along the unit direction with
/// angle `iota`: the matrix M with G' = M G along the ray.
pub fn direction_generator(
    field: &TransportField,
    x: f64,
    y: f64,
    iota: f64,
) -> Result<Matrix3<Complex64>> {
    direction_matrix(field, x, y, iota.cos(), iota.sin())
}

/// Horizontal-transport generator assembled from explicit coefficients:
/// the matrix M with G' = M G along x.
#[must_use]
pub fn frame_x_generator(fc: &FrameCoefficients) -> Matrix3<Complex64> {
    m_x(fc)
}

/// One RK4 step of G' = M(p) G along direction (cx, cy) from arc s.
fn rk4_step(
    field: &TransportField,
    g: &Matrix3<Complex64>,
    x: f64,
    y: f64,
    cx: f64,
    cy: f64,
    h: f64,
) -> Result<Matrix3<Complex64>> {
    let m1 = direction_matrix(field, x, y, cx, cy)?;
    let m2 = direction_matrix(field, x + 0.5 * h * cx, y + 0.5 * h * cy, cx, cy)?;
    let m4 = direction_matrix(field, x + h * cx, y + h * cy, cx, cy)?;
    let k1 = m1 * g;
    let k2 = m2 * (g + k1 * Complex64::new(0.5 * h, 0.0));
    let k3 = m2 * (g + k2 * Complex64::new(0.5 * h, 0.0));
    let k4 = m4 * (g + k3 * Complex64::new(h, 0.0));
    Ok(g + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
        * Complex64::new(h / 6.0, 0.0))
}

fn check_step(step: f64) -> Result<()> {
    if step.is_nan() || step <= 0.0 {
        return Err(LabError::InvalidArgument(format!(
            "step must be positive, got {step}"
        )));
    }
    if step > MAX_STEP {
        return Err(LabError::StepTooLarge {
            got: step,
            max: MAX_STEP,
        });
    }
    Ok(())
}

/// Integrate the matrix G along a polyline, G evolving by the direction
/// system of each segment.
fn integrate_polyline(
    field: &TransportField,
    start: Matrix3<Complex64>,
    path: &[(f64, f64)],
    step: f64,
) -> Result<Matrix3<Complex64>> {
    check_step(step)?;
    if path.is_empty() {
        return Err(LabError::InvalidArgument("empty transport path".into()));
    }
    for &(x, y) in path {
        if !field.contains(x, y) {
            return Err(LabError::FieldDomainError(format!(
                "path vertex ({x:.3}, {y:.3}) outside the field domain"
            )));
        }
    }
    let mut g = start;
    for seg in path.windows(2) {
        let (x0, y0) = seg[0];
        let (x1, y1) = seg[1];
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        if len == 0.0 {
            continue;
        }
        let (cx, cy) = ((x1 - x0) / len, (y1 - y0) / len);
        let n = (len / step).ceil() as usize;
        let h = len / n as f64;
        for k in 0..n {
            let s = k as f64 * h;
            g = rk4_step(field, &g, x0 + s * cx, y0 + s * cy, cx, cy, h)?;
        }
    }
    Ok(g)
}

/// Transport a frame along a polyline path by RK4 with the given step.
pub fn transport(
    frame: &AffineFrame,
    field: &TransportField,
    path: &[(f64, f64)],
    step: f64,
) -> Result<AffineFrame> {
    let rows = integrate_polyline(field, frame.rows, path, step)?;
    let &(xe, ye) = path.last().expect("nonempty path");
    Ok(AffineFrame {
        rows,
        psi_at: field.psi(xe, ye)?,
    })
}

/// Fundamental solution of the frame system along a polyline (identity
/// initial condition).
pub fn fundamental_solution(
    field: &TransportField,
    path: &[(f64, f64)],
    step: f64,
) -> Result<Matrix3<Complex64>> {
    integrate_polyline(field, Matrix3::identity(), path, step)
}

fn c_matrix() -> Matrix3<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let i = i_c();
    Matrix3::new(one, z, z, z, one, one, z, i, -i)
}

fn c_inverse() -> Matrix3<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let half = Complex64::new(0.5, 0.0);
    let half_i = Complex64::new(0.0, 0.5);
    Matrix3::new(one, z, z, z, half, -half_i, z, half, half_i)
}

/// Widen a determinant tolerance by the f64 evaluation-noise floor: the
/// determinant of a matrix H cannot be computed more accurately than
/// about eps * |H| * |adj H|, which for holonomies with eigenvalue
/// spread e^{2 pi sqrt(3)} sits near 1e-4 while the true RK4 determinant
/// drift is orders smaller.
fn unimodular_tol(m: &Matrix3<f64>, base: f64) -> f64 {
    let c = [m.column(0), m.column(1), m.column(2)];
    let adj_scale = [
        c[1].cross(&c[2]).norm(),
        c[2].cross(&c[0]).norm(),
        c[0].cross(&c[1]).norm(),
    ]
    .into_iter()
    .fold(0.0f64, f64::max);
    base.max(8192.0 * f64::EPSILON * m.norm() * adj_scale)
}

/// Extract the real part of a matrix that should be real, failing if the
/// imaginary residue exceeds tolerance relative to the real scale.
fn realize(m: &Matrix3<Complex64>, what: &str) -> Result<Matrix3<f64>> {
    let re_scale = m.iter().map(|v| v.re.abs()).fold(0.0f64, f64::max);
    let im_max = m.iter().map(|v| v.im.abs()).fold(0.0f64, f64::max);
    if im_max > 1e-8 * (1.0 + re_scale) {
        return Err(LabError::Numerical(format!(
            "{what}: imaginary residue {im_max:.3e} against real scale {re_scale:.3e}"
        )));
    }
    Ok(m.map(|v| v.re))
}

/// Horizontal holonomy at height y: the fundamental solution over one
/// x-period expressed in the real frame {f, f_x, f_y}.
pub fn holonomy_loop(field: &TransportField, y: f64) -> Result<UnimodularMatrix> {
    let phi = fundamental_solution(field, &[(0.0, y), (2.0 * PI, y)], HOLONOMY_STEP)?;
    let h_real = realize(&(c_matrix() * phi * c_inverse()), "holonomy realification")?;
    UnimodularMatrix::new(h_real, unimodular_tol(&h_real, 1e-9))
}

/// Log-eigenvalues of the holonomy at height y, descending.
///
/// The largest eigenvalue comes from the forward loop and the smallest
/// from the reversed loop (whose dominant eigenvalue is its reciprocal),
/// so both carry the relative accuracy of the dominant branch of an RK4
/// flow instead of inheriting the determinant evaluation noise that
/// floors around eps * |H| * |adj H| at large eigenvalue spread.
pub fn holonomy_log_spectrum(field: &TransportField, y: f64) -> Result<[f64; 3]> {
    let top = |path: &[(f64, f64)]| -> Result<f64> {
        let phi = fundamental_solution(field, path, HOLONOMY_STEP)?;
        let h = realize(&(c_matrix() * phi * c_inverse()), "holonomy realification")?;
        let mut best = Complex64::new(f64::NEG_INFINITY, 0.0);
        for l in h.complex_eigenvalues().iter() {
            if l.re > best.re {
                best = *l;
            }
        }
        if best.re <= 0.0 || best.im.abs() > 1e-9 * (1.0 + best.re) {
            return Err(LabError::Numerical(format!(
                "dominant holonomy eigenvalue {best} is not positive real"
            )));
        }
        Ok(best.re)
    };
    let l1 = top(&[(0.0, y), (2.0 * PI, y)])?;
    let l3_inv = top(&[(2.0 * PI, y), (0.0, y)])?;
    let (a, c) = (l1.ln(), -l3_inv.ln());
    let mut logs = [a, -(a + c), c];
    logs.sort_by(|p, q| q.partial_cmp(p).expect("finite logs"));
    Ok(logs)
}

/// Monodromy acting on developed points (column convention): the
/// transpose of G0^{-1} Phi(2 pi) G0 where G0 is the base frame; real for
/// frames satisfying the reality/conjugacy invariants.
pub fn ambient_holonomy(
    field: &TransportField,
    y: f64,
    frame: &AffineFrame,
) -> Result<UnimodularMatrix> {
    let phi = fundamental_solution(field, &[(0.0, y), (2.0 * PI, y)], HOLONOMY_STEP)?;
    let g0 = frame.rows;
    let inv = g0.try_inverse().ok_or_else(|| {
        LabError::Numerical("ambient holonomy: frame matrix not invertible".into())
    })?;
    let amb = (inv * phi * g0).transpose();
    let real = realize(&amb, "ambient holonomy realification")?;
    UnimodularMatrix::new(real, unimodular_tol(&real, 1e-8))
}

/// The x-translation generator of the exact model end: the constant
/// matrix A with characteristic polynomial equal to the residue's cubic.
/// R = 0 zeroes every entry outside the first row.
#[must_use]
pub fn limit_matrix(r: Complex64) -> Matrix3<Complex64> {
    let fc = match (TransportField::ExactModel { residue: r }).coefficients(0.0, 0.0) {
        Ok(fc) => fc,
        Err(_) => unreachable!("exact model coefficients are total"),
    };
    m_x(&fc)
}

/// A developed ray: projective samples along increasing arc length and
/// the detected limit point.
#[derive(Debug, Clone)]
pub struct DevelopedCurve {
    /// (arc parameter, developed point) samples.
    pub samples: Vec<(f64, ProjPoint)>,
    /// Limit point, present exactly when the Cauchy criterion fired.
    pub limit: Option<ProjPoint>,
}

/// Develop the f-row along the ray from the field's base point in
/// direction cos(iota) d/dx + sin(iota) d/dy until the limit stabilizes
/// (trailing window within chart distance 1e-6) or the height budget
/// y_max runs out.
///
/// End fields require iota in (0, pi); the triangle model admits any
/// direction, with y_max read as an arc-length budget.
pub fn develop_ray(
    field: &TransportField,
    iota: f64,
    y_max: f64,
    step: f64,
) -> Result<DevelopedCurve> {
    check_step(step)?;
    let (base_x, base_y) = match field {
        TransportField::Grid(g) => (0.0, g.y0),
        _ => (0.0, 0.0),
    };
    let triangle = matches!(field, TransportField::TriangleModel);
    if !triangle && !(iota > 0.0 && iota < PI) {
        return Err(LabError::DomainError(format!(
            "ray direction must lie in (0, pi), got {iota:.4}"
        )));
    }
    let (cx, cy) = (iota.cos(), iota.sin());
    let s_max = if triangle {
        y_max
    } else {
        if let TransportField::Grid(g) = field {
            if y_max > g.y1 + 1e-12 {
                return Err(LabError::FieldDomainError(format!(
                    "ray height budget {y_max} exceeds the grid band top {}",
                    g.y1
                )));
            }
        }
        (y_max - base_y) / cy
    };
    if s_max.is_nan() || s_max <= 0.0 {
        return Err(LabError::InvalidArgument(format!(
            "empty ray: y_max {y_max} at base height {base_y}"
        )));
    }

    let mut g = initial_frame(field.psi(base_x, base_y)?).rows;
    let mut samples: Vec<(f64, ProjPoint)> = Vec::new();
    let record =
        |g: &Matrix3<Complex64>, s: f64, samples: &mut Vec<(f64, ProjPoint)>| -> Result<()> {
            let v = Vector3::new(g[(0, 0)].re, g[(0, 1)].re, g[(0, 2)].re);
            samples.push((s, project(v)?));
            Ok(())
        };
    record(&g, 0.0, &mut samples)?;

    let n_legs = (s_max / SAMPLE_SPACING).ceil() as usize;
    let leg = s_max / n_legs as f64;
    let n_sub = (leg / step).ceil() as usize;
    let h = leg / n_sub as f64;
    let mut s = 0.0;
    for _ in 0..n_legs {
        for k in 0..n_sub {
            let sk = s + k as f64 * h;
            g = rk4_step(field, &g, base_x + sk * cx, base_y + sk * cy, cx, cy, h)?;
        }
        s += leg;
        // Projective data only: rescale to dodge overflow on long rays.
        let scale = g.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if scale > 1e100 {
            g /= Complex64::new(scale, 0.0);
        }
        record(&g, s, &mut samples)?;
        if samples.len() > LIMIT_WINDOW {
            let last = samples[samples.len() - 1].1;
            let spread = samples[samples.len() - LIMIT_WINDOW..]
                .iter()
                .map(|(_, p)| p.chart_distance(&last))
                .fold(0.0f64, f64::max);
            if spread <= LIMIT_TOL {
                return Ok(DevelopedCurve {
                    samples,
                    limit: Some(last),
                });
            }
        }
    }
    Err(LabError::NoConvergenceByYmax {
        y_max,
        detail: format!(
            "ray at iota = {iota:.4} had not stabilized after {} samples",
            samples.len()
        ),
    })
}

/// Identify which boundary line of the monodromy's invariant triangle
/// carries the point: exactly one eigenbasis coordinate must vanish
/// (below `tol` of the largest) with the other two bounded away from
/// zero.  The answer is independent of eigenvector representative signs,
/// unlike a side-of-segment judgement.
fn limit_boundary_pair(fixed: &[FixedPoint], p: &ProjPoint, tol: f64) -> Result<(usize, usize)> {
    let basis = Matrix3::from_columns(&[
        fixed[0].point.rep(),
        fixed[1].point.rep(),
        fixed[2].point.rep(),
    ]);
    let inv = basis.try_inverse().ok_or_else(|| {
        LabError::Numerical("fixed-point basis is numerically singular".into())
    })?;
    let x = inv * p.rep();
    let scale = x.amax();
    let mut k = 0usize;
    for j in 1..3 {
        if x[j].abs() < x[k].abs() {
            k = j;
        }
    }
    if x[k].abs() > tol * scale {
        return Err(LabError::InconsistentWitness(format!(
            "limit is off the monodromy triangle boundary: smallest eigenbasis \
             coordinate {:.3e} against scale {:.3e}",
            x[k].abs(),
            scale
        )));
    }
    let (i, j) = match k {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    if x[i].abs() <= 1e-3 * scale || x[j].abs() <= 1e-3 * scale {
        return Err(LabError::InconsistentWitness(
            "limit sits at a monodromy fixed point, not on an open edge".into(),
        ));
    }
    Ok((i, j))
}

/// One witnessed boundary segment of a twist detection.
#[derive(Debug, Clone)]
pub struct TwistWitness {
    /// Ray direction developed.
    pub iota: f64,
    /// Developed limit point.
    pub limit: ProjPoint,
    /// Principal-triangle edge the limit landed on, as indices into the
    /// eigenvalue-sorted vertex list (0 attracting, 2 repelling).
    pub edge: (usize, usize),
}

/// Result of a twist-sign detection.
#[derive(Debug, Clone)]
pub struct TwistDetection {
    pub sign: TwistSign,
    pub witnesses: Vec<TwistWitness>,
}

/// Detect the vertical twist sign of an end field with Re R != 0 by
/// developing the top-tie rays and locating their limits on the boundary
/// of the principal triangle of the ambient monodromy.
///
/// Re R > 0: the single top-tie ray iota = pi/3 + arg(xi) limits on the
/// principal segment joining the attracting and repelling fixed points;
/// the principal geodesic lies in the boundary and the twist is
/// minus_infinity.  Re R < 0: the two top-tie rays pi/3 + arg(xi) and
/// pi + arg(xi) limit on the two segments adjacent to the neutral fixed
/// point, and the twist is plus_infinity.
pub fn detect_twist(field: &TransportField, r: Complex64, y_max: f64) -> Result<TwistDetection> {
    if r.re == 0.0 {
        return Err(LabError::DomainError(
            "twist sign requires Re R != 0 (tie rays degenerate otherwise)".into(),
        ));
    }
    let arg_xi = xi_branch(r)?.arg();
    let expected: Vec<(f64, (usize, usize))> = if r.re > 0.0 {
        vec![(PI / 3.0 + arg_xi, (0, 2))]
    } else {
        vec![(PI / 3.0 + arg_xi, (0, 1)), (PI + arg_xi, (1, 2))]
    };
    let base_y = match field {
        TransportField::Grid(g) => g.y0,
        _ => 0.0,
    };
    let frame0 = initial_frame(field.psi(0.0, base_y)?);
    let amb = ambient_holonomy(field, base_y, &frame0)?;
    let fixed = fixed_points(&amb.matrix(), TOL_CLASSIFY)?;
    if fixed.len() != 3 {
        return Err(LabError::NotHyperbolic(
            "twist detection needs a hyperbolic ambient monodromy".into(),
        ));
    }

    let mut witnesses = Vec::new();
    for (iota, want) in expected {
        let curve = develop_ray(field, iota, y_max, MAX_STEP / 2.0)?;
        let limit = curve.limit.expect("develop_ray success carries a limit");
        let pair = limit_boundary_pair(&fixed, &limit, 1e-4)?;
        if pair != want {
            return Err(LabError::InconsistentWitness(format!(
                "ray at iota = {iota:.4} limits on boundary line {pair:?}, expected {want:?}"
            )));
        }
        witnesses.push(TwistWitness {
            iota,
            limit,
            edge: pair,
        });
    }
    let sign = if r.re > 0.0 {
        TwistSign::MinusInfinity
    } else {
        TwistSign::PlusInfinity
    };
    if twist_sign(r) != Some(sign) {
        return Err(LabError::InconsistentWitness(format!(
            "developed witnesses give {sign:?} but the residue classifier disagrees"
        )));
    }
    Ok(TwistDetection { sign, witnesses })
}

/// Maximum deviation of the conserved frame volume det = 1/2 i e^psi
/// over a trajectory of frames.
pub fn volume_drift(frames: &[AffineFrame]) -> Result<f64> {
    if frames.is_empty() {
        return Err(LabError::InvalidArgument(
            "volume drift needs a nonempty trajectory".into(),
        ));
    }
    Ok(frames
        .iter()
        .map(|f| {
            let target = 0.5 * i_c() * Complex64::new(f.psi_at.exp(), 0.0);
            (f.rows.determinant() / target - Complex64::new(1.0, 0.0)).norm()
        })
        .fold(0.0, f64::max))
}
