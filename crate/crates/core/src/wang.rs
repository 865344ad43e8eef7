//! Discretization and solution of the structure equation
//!
//! ```text
//! L(u) = Lap u + 4 e^{-2u} ||U||^2 - 2 e^u - 2 kappa = 0
//! ```
//!
//! on periodic cylinder grids covering model-end collars, with
//! sub/supersolution barriers, a damped Newton iteration whose linearized
//! operator is symmetric positive definite, and decay diagnostics for the
//! solved field.  Upstairs coordinates w = x + i y, x periodic in
//! [0, 2 pi), and `Lap = e^{-phi} (d_xx + d_yy)`.

use crate::error::{LabError, Result};
use crate::geometry::{norm_u_squared, ConformalMetric, CubicLaurent};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Default solve tolerance on the infinity-norm residual.
pub const DEFAULT_SOLVE_TOL: f64 = 1e-10;
/// Absolute slack for barrier sign checks.
const SIGN_TOL: f64 = 1e-10;
/// Maximum beta doublings before barrier construction gives up.
const MAX_DOUBLINGS: u32 = 40;
/// Maximum Newton line-search halvings.
const MAX_HALVINGS: u32 = 30;
/// Maximum Newton iterations.
const MAX_NEWTON: u32 = 60;

/// Periodic-in-x cylinder grid with the five node fields of the problem.
/// Node index `iy * nx + ix` (y-outer), `x = ix * hx`, `y = y0 + iy * hy`.
#[derive(Debug, Clone)]
pub struct CylinderGrid {
    pub nx: usize,
    pub ny: usize,
    pub y0: f64,
    pub y1: f64,
    /// Log conformal factor (upstairs) per node.
    pub phi: Vec<f64>,
    /// Solution field per node.
    pub u: Vec<f64>,
    /// Cubic-differential coefficient (upstairs, of dw^3) per node.
    pub big_u: Vec<Complex64>,
    /// Background curvature per node.
    pub kappa: Vec<f64>,
}

impl CylinderGrid {
    /// An empty grid: geometry fixed, all fields unpopulated.
    pub fn empty(nx: usize, ny: usize, y0: f64, y1: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(LabError::InvalidArgument(format!(
                "grid needs Nx >= 8 and Ny >= 8, got {nx} x {ny}"
            )));
        }
        if y1.is_nan() || y0.is_nan() || y1 <= y0 {
            return Err(LabError::InvalidArgument(format!(
                "grid needs y1 > y0, got [{y0}, {y1}]"
            )));
        }
        Ok(Self {
            nx,
            ny,
            y0,
            y1,
            phi: Vec::new(),
            u: Vec::new(),
            big_u: Vec::new(),
            kappa: Vec::new(),
        })
    }

    #[must_use]
    pub fn hx(&self) -> f64 {
        2.0 * PI / self.nx as f64
    }

    #[must_use]
    pub fn hy(&self) -> f64 {
        (self.y1 - self.y0) / (self.ny - 1) as f64
    }

    #[must_use]
    pub fn idx(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    #[must_use]
    pub fn x(&self, ix: usize) -> f64 {
        ix as f64 * self.hx()
    }

    #[must_use]
    pub fn y(&self, iy: usize) -> f64 {
        self.y0 + iy as f64 * self.hy()
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Check that every field is populated with one value per node.
    pub fn require_populated(&self) -> Result<()> {
        let n = self.len();
        for (name, len) in [
            ("phi", self.phi.len()),
            ("u", self.u.len()),
            ("U", self.big_u.len()),
            ("kappa", self.kappa.len()),
        ] {
            if len != n {
                return Err(LabError::UnpopulatedField(format!(
                    "field `{name}` has {len} of {n} nodes"
                )));
            }
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(LabError::UnpopulatedField("non-finite phi value".into()));
        }
        Ok(())
    }

    /// Invariant squared norm of the differential at a node:
    /// `|U|^2 e^{-3 phi}`.
    #[must_use]
    pub fn norm_u_sq(&self, i: usize) -> f64 {
        norm_u_squared(self.big_u[i], self.phi[i].exp())
    }

    /// Populate from a background metric and a Laurent differential:
    /// phi from the metric's upstairs factor, U from the upstairs
    /// coefficient `-i z^3 U(z)`, kappa from the metric's curvature, u = 0.
    pub fn populate_model_end(
        &mut self,
        metric: &ConformalMetric,
        differential: &CubicLaurent,
    ) -> Result<()> {
        let n = self.len();
        let mut phi = Vec::with_capacity(n);
        let mut big_u = Vec::with_capacity(n);
        let mut kappa = Vec::with_capacity(n);
        for iy in 0..self.ny {
            let y = self.y(iy);
            let phi_y = metric.phi_upstairs(y)?;
            let z = Complex64::from_polar((-y).exp(), 0.0);
            let kappa_y = crate::geometry::curvature(metric, z)?;
            for ix in 0..self.nx {
                let w = Complex64::new(self.x(ix), y);
                phi.push(phi_y);
                big_u.push(differential.upstairs_value(w)?);
                kappa.push(kappa_y);
            }
        }
        self.phi = phi;
        self.big_u = big_u;
        self.kappa = kappa;
        self.u = vec![0.0; n];
        Ok(())
    }
}

/// Discrete residual `L(u)` at every node.
///
/// Interior rows use the standard centered 5-point Laplacian (periodic in
/// x); the first and last y-rows use a second-order one-sided stencil for
/// u_yy so the returned field is defined everywhere.
pub fn wang_residual(grid: &CylinderGrid) -> Result<Vec<f64>> {
    grid.require_populated()?;
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx2, hy2) = (grid.hx() * grid.hx(), grid.hy() * grid.hy());
    let mut out = vec![0.0; grid.len()];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.idx(ix, iy);
            let u = grid.u[i];
            let u_e = grid.u[grid.idx((ix + 1) % nx, iy)];
            let u_w = grid.u[grid.idx((ix + nx - 1) % nx, iy)];
            let uxx = (u_e + u_w - 2.0 * u) / hx2;
            let uyy = if iy == 0 {
                let u1 = grid.u[grid.idx(ix, 1)];
                let u2 = grid.u[grid.idx(ix, 2)];
                let u3 = grid.u[grid.idx(ix, 3)];
                (2.0 * u - 5.0 * u1 + 4.0 * u2 - u3) / hy2
            } else if iy == ny - 1 {
                let u1 = grid.u[grid.idx(ix, ny - 2)];
                let u2 = grid.u[grid.idx(ix, ny - 3)];
                let u3 = grid.u[grid.idx(ix, ny - 4)];
                (2.0 * u - 5.0 * u1 + 4.0 * u2 - u3) / hy2
            } else {
                let u_n = grid.u[grid.idx(ix, iy + 1)];
                let u_s = grid.u[grid.idx(ix, iy - 1)];
                (u_n + u_s - 2.0 * u) / hy2
            };
            let lap = (-grid.phi[i]).exp() * (uxx + uyy);
            out[i] = lap + 4.0 * (-2.0 * u).exp() * grid.norm_u_sq(i) - 2.0 * u.exp()
                - 2.0 * grid.kappa[i];
        }
    }
    Ok(out)
}

/// Residual of an arbitrary field v on the grid's background (used for
/// barrier sign checks); interior rows only, boundary rows copy the
/// algebraic part.
fn residual_of_field(grid: &CylinderGrid, v: &[f64]) -> Vec<f64> {
    let mut probe = grid.clone();
    probe.u = v.to_vec();
    wang_residual(&probe).expect("populated grid")
}

/// Sub/supersolution pair bracketing the solution.
#[derive(Debug, Clone)]
pub struct BarrierPair {
    /// Upper barrier (supersolution), nodewise >= 0.
    pub upper: Vec<f64>,
    /// Lower barrier (subsolution), nodewise <= 0.
    pub lower: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// True for the exponential family `beta e^{-2 alpha y}`, false for
    /// the constant pair used on parabolic/cusp collars.
    pub exponential: bool,
}

/// Build a barrier pair on the grid.
///
/// Grids whose differential never vanishes get the exponential family
/// `S = beta e^{-2 alpha y}`, `s = -S`, with beta doubled from `beta_init`
/// until the discrete sign checks `L(S) <= 0 <= L(s)` pass at every
/// interior node.  Grids with a vanishing differential (parabolic and
/// cusp collars) get a constant pair `(M, -M)` with M from the scalar
/// inequality `4 max||U||^2 - 2 E^3 - 2 kappa_min E^2 <= 0`, `E = e^M`,
/// solved by bisection and then doubled until the nodewise checks pass.
///
/// Failure after 40 doublings reports which side failed and where; for
/// the exponential family this signals `4 alpha^2 e^{-phi}` too large
/// (the linear term of the expansion beats the cubic-inequality margin at
/// small barrier values, i.e. at the far end of the grid).
pub fn build_barriers(grid: &CylinderGrid, alpha: f64, beta_init: f64) -> Result<BarrierPair> {
    grid.require_populated()?;
    if alpha.is_nan() || alpha < 0.0 || beta_init.is_nan() || beta_init <= 0.0 {
        return Err(LabError::InvalidArgument(format!(
            "need alpha >= 0 and beta_init > 0, got alpha = {alpha}, beta = {beta_init}"
        )));
    }
    let min_norm_u = (0..grid.len())
        .map(|i| grid.norm_u_sq(i))
        .fold(f64::INFINITY, f64::min);
    let exponential = min_norm_u > 1e-16;

    let mut beta = if exponential {
        beta_init
    } else {
        // Seed M by bisection on the worst-case scalar inequality.
        let u2 = (0..grid.len()).map(|i| grid.norm_u_sq(i)).fold(0.0, f64::max);
        let kmin = grid.kappa.iter().copied().fold(f64::INFINITY, f64::min);
        let ineq = |m: f64| {
            let e = m.exp();
            4.0 * u2 - 2.0 * e.powi(3) - 2.0 * kmin * e * e
        };
        let mut lo = 1e-6;
        let mut hi = 1.0;
        while ineq(hi) > 0.0 && hi < 700.0 {
            hi *= 2.0;
        }
        if ineq(lo) <= 0.0 {
            lo
        } else {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if ineq(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi.max(beta_init)
        }
    };

    for doubling in 0..=MAX_DOUBLINGS {
        let field = |sign: f64| -> Vec<f64> {
            (0..grid.len())
                .map(|i| {
                    let y = grid.y(i / grid.nx);
                    if exponential {
                        sign * beta * (-2.0 * alpha * y).exp()
                    } else {
                        sign * beta
                    }
                })
                .collect()
        };
        let upper = field(1.0);
        let lower = field(-1.0);
        let r_up = residual_of_field(grid, &upper);
        let r_lo = residual_of_field(grid, &lower);
        let mut ok = true;
        let mut detail = String::new();
        for iy in 1..grid.ny - 1 {
            for ix in 0..grid.nx {
                let i = grid.idx(ix, iy);
                if r_up[i] > SIGN_TOL {
                    ok = false;
                    detail = format!(
                        "L(S) = {:.3e} > 0 at (x, y) = ({:.3}, {:.3})",
                        r_up[i],
                        grid.x(ix),
                        grid.y(iy)
                    );
                    break;
                }
                if r_lo[i] < -SIGN_TOL {
                    ok = false;
                    detail = format!(
                        "L(s) = {:.3e} < 0 at (x, y) = ({:.3}, {:.3})",
                        r_lo[i],
                        grid.x(ix),
                        grid.y(iy)
                    );
                    break;
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            return Ok(BarrierPair {
                upper,
                lower,
                alpha: if exponential { alpha } else { 0.0 },
                beta,
                exponential,
            });
        }
        if doubling == MAX_DOUBLINGS {
            return Err(LabError::BarrierFailure {
                doublings: MAX_DOUBLINGS,
                detail,
            });
        }
        beta *= 2.0;
    }
    unreachable!("loop returns or errors")
}

/// Boundary condition for [`solve_wang`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// u = 0 on both y-boundary rows (end-exhaustion choice).
    DirichletZero,
    /// Keep the grid's current boundary rows (neck problems).
    DirichletField,
}

/// Result of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub u: Vec<f64>,
    pub residual_inf: f64,
    pub newton_iters: u32,
    pub bracketed: bool,
    /// The barrier pair used for the bracket check, when one exists.
    pub barriers: Option<BarrierPair>,
}

/// Default barrier decay rate for a grid: keeps
/// `4 alpha^2 e^{-phi} <= 2.4` at the least favorable node, inside the
/// always-valid range of the exponential family.
#[must_use]
pub fn auto_alpha(grid: &CylinderGrid) -> f64 {
    let min_phi = grid.phi.iter().copied().fold(f64::INFINITY, f64::min);
    (0.6 * min_phi.exp()).sqrt().min(1.5)
}

/// Solve `L(u) = 0` by damped Newton from u = 0.
pub fn solve_wang(grid: &CylinderGrid, bc: BoundaryCondition, tol: f64) -> Result<SolveReport> {
    let mut init = grid.u.clone();
    if bc == BoundaryCondition::DirichletZero {
        init.iter_mut().for_each(|v| *v = 0.0);
    } else {
        // Interior initial guess still u = 0; boundary rows kept.
        for iy in 1..grid.ny - 1 {
            for ix in 0..grid.nx {
                init[grid.idx(ix, iy)] = 0.0;
            }
        }
    }
    solve_wang_from(grid, bc, tol, &init)
}

/// Solve from an arbitrary initial field (boundary rows of `init` are used
/// as the Dirichlet data under `DirichletField`, zeroed under
/// `DirichletZero`).
pub fn solve_wang_from(
    grid: &CylinderGrid,
    bc: BoundaryCondition,
    tol: f64,
    init: &[f64],
) -> Result<SolveReport> {
    grid.require_populated()?;
    if tol.is_nan() || tol < 1e-12 {
        return Err(LabError::InvalidArgument(format!(
            "solve tolerance must be >= 1e-12, got {tol:e}"
        )));
    }
    if init.len() != grid.len() {
        return Err(LabError::InvalidArgument(
            "initial field length does not match the grid".into(),
        ));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let mut work = grid.clone();
    work.u = init.to_vec();
    if bc == BoundaryCondition::DirichletZero {
        for ix in 0..nx {
            work.u[ix] = 0.0;
            work.u[(ny - 1) * nx + ix] = 0.0;
        }
    }

    let interior_inf = |r: &[f64]| -> f64 {
        let mut m = 0.0f64;
        for iy in 1..ny - 1 {
            for ix in 0..nx {
                m = m.max(r[iy * nx + ix].abs());
            }
        }
        m
    };

    let mut residual = wang_residual(&work)?;
    let mut res_inf = interior_inf(&residual);
    let mut iters = 0u32;
    while res_inf > tol {
        if iters >= MAX_NEWTON {
            return Err(LabError::NewtonDivergence(format!(
                "residual {res_inf:.3e} after {iters} iterations"
            )));
        }
        let delta = newton_step(&work, &residual)?;
        // Damped update: halve until the residual norm decreases.
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = work.clone();
            for iy in 1..ny - 1 {
                for ix in 0..nx {
                    let i = iy * nx + ix;
                    let k = (iy - 1) * nx + ix;
                    trial.u[i] += step * delta[k];
                }
            }
            let trial_res = wang_residual(&trial)?;
            let trial_inf = interior_inf(&trial_res);
            if trial_inf < res_inf {
                work = trial;
                residual = trial_res;
                res_inf = trial_inf;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(LabError::NewtonDivergence(format!(
                "line search exhausted at residual {res_inf:.3e}"
            )));
        }
        iters += 1;
    }

    // Bracket check against automatically tuned barriers (diagnostic; a
    // grid whose background admits no barrier still returns a report).
    // Only the decay-to-zero end problem is bracketed by this pair —
    // prescribed nonzero boundary data escapes it legitimately.
    let barriers = if bc == BoundaryCondition::DirichletZero {
        build_barriers(grid, auto_alpha(grid), 1e-3).ok()
    } else {
        None
    };
    let mut bracketed = false;
    if let Some(pair) = &barriers {
        let slack = 1e-9 * (1.0 + interior_inf(&work.u));
        let mut inside = true;
        for i in 0..grid.len() {
            if work.u[i] > pair.upper[i] + slack || work.u[i] < pair.lower[i] - slack {
                inside = false;
                break;
            }
        }
        if !inside {
            return Err(LabError::BracketsViolated(
                "converged field escapes the barrier pair: discretization too coarse".into(),
            ));
        }
        bracketed = true;
    }

    Ok(SolveReport {
        u: work.u,
        residual_inf: res_inf,
        newton_iters: iters,
        bracketed,
        barriers,
    })
}

/// One Newton step: solve `(-Lap + e^phi d) delta = e^phi r` with
/// `d = 8 e^{-2u} ||U||^2 + 2 e^u > 0`, which is symmetric positive
/// definite, by banded Cholesky; returns delta over interior nodes.
fn newton_step(grid: &CylinderGrid, residual: &[f64]) -> Result<Vec<f64>> {
    let (nx, ny) = (grid.nx, grid.ny);
    let n = nx * (ny - 2);
    let bw = nx; // half-bandwidth: x-wrap at nx-1, y-neighbor at nx
    let (hx2, hy2) = (grid.hx() * grid.hx(), grid.hy() * grid.hy());
    let mut band = vec![0.0f64; n * (bw + 1)];
    let mut rhs = vec![0.0f64; n];
    for iy in 1..ny - 1 {
        for ix in 0..nx {
            let node = iy * nx + ix;
            let k = (iy - 1) * nx + ix;
            let e_phi = grid.phi[node].exp();
            let d = 8.0 * (-2.0 * grid.u[node]).exp() * grid.norm_u_sq(node)
                + 2.0 * grid.u[node].exp();
            band[k * (bw + 1)] = 2.0 / hx2 + 2.0 / hy2 + e_phi * d;
            if ix > 0 {
                band[k * (bw + 1) + 1] = -1.0 / hx2;
            } else {
                // wrap partner handled from the other endpoint
            }
            if ix == nx - 1 {
                band[k * (bw + 1) + (nx - 1)] = -1.0 / hx2;
            }
            if iy > 1 {
                band[k * (bw + 1) + nx] = -1.0 / hy2;
            }
            rhs[k] = e_phi * residual[node];
        }
    }
    cholesky_banded(&mut band, n, bw)?;
    solve_banded(&band, n, bw, &mut rhs);
    Ok(rhs)
}

/// In-place banded Cholesky `A = L L^T`; `band[r*(bw+1)+d]` holds the
/// entry `(r, r-d)` of the lower triangle.
fn cholesky_banded(band: &mut [f64], n: usize, bw: usize) -> Result<()> {
    let w = bw + 1;
    for j in 0..n {
        let lo = j.saturating_sub(bw);
        let mut s = band[j * w];
        for k in lo..j {
            let l_jk = band[j * w + (j - k)];
            s -= l_jk * l_jk;
        }
        if s <= 0.0 {
            return Err(LabError::Numerical(format!(
                "banded Cholesky broke down at row {j}: pivot {s:.3e}"
            )));
        }
        let l_jj = s.sqrt();
        band[j * w] = l_jj;
        let hi = (j + bw).min(n - 1);
        for i in (j + 1)..=hi {
            let lo_i = i.saturating_sub(bw).max(lo);
            let mut s = if i - j <= bw { band[i * w + (i - j)] } else { 0.0 };
            for k in lo_i..j {
                s -= band[i * w + (i - k)] * band[j * w + (j - k)];
            }
            band[i * w + (i - j)] = s / l_jj;
        }
    }
    Ok(())
}

/// Solve `L L^T x = b` in place given the banded Cholesky factor.
fn solve_banded(band: &[f64], n: usize, bw: usize, b: &mut [f64]) {
    let w = bw + 1;
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        let mut s = b[i];
        for k in lo..i {
            s -= band[i * w + (i - k)] * b[k];
        }
        b[i] = s / band[i * w];
    }
    for i in (0..n).rev() {
        let hi = (i + bw).min(n - 1);
        let mut s = b[i];
        for k in (i + 1)..=hi {
            s -= band[k * w + (k - i)] * b[k];
        }
        b[i] = s / band[i * w];
    }
}

/// Three-piece neck barrier profile in the collar coordinate mu = Re l:
/// `beta |t|^alpha e^{2 alpha |mu|}` for |mu| >= 1 and the C^2-matching
/// quartic
///
/// ```text
/// I_t(mu) = Q [ (1 - 5/4 a + 1/2 a^2) + (3/2 a - a^2) mu^2
///               + (-1/4 a + 1/2 a^2) mu^4 ],   Q = beta |t|^alpha e^{2 alpha},
/// ```
///
/// on [-1, 1].
#[derive(Debug, Clone, Copy)]
pub struct NeckBarrier {
    pub t_abs: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Construct the neck barrier; requires `|t|` below the squared collar
/// radius (default collar K = 1/2, so |t| < 1/4).
pub fn neck_barrier(t: Complex64, alpha: f64, beta: f64) -> Result<NeckBarrier> {
    let t_abs = t.norm();
    let limit = crate::geometry::DEFAULT_COLLAR_K * crate::geometry::DEFAULT_COLLAR_K;
    if !(t_abs > 0.0 && t_abs < limit) {
        return Err(LabError::NeckTooWide(format!(
            "need 0 < |t| < {limit}, got {t_abs:.3e}"
        )));
    }
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(LabError::InvalidArgument(
            "neck barrier needs alpha > 0 and beta > 0".into(),
        ));
    }
    Ok(NeckBarrier { t_abs, alpha, beta })
}

impl NeckBarrier {
    /// Barrier value at collar coordinate mu.
    #[must_use]
    pub fn eval(&self, mu: f64) -> f64 {
        let a = self.alpha;
        let q = self.beta * self.t_abs.powf(a) * (2.0 * a).exp();
        if mu.abs() >= 1.0 {
            self.beta * self.t_abs.powf(a) * (2.0 * a * mu.abs()).exp()
        } else {
            let m2 = mu * mu;
            q * ((1.0 - 1.25 * a + 0.5 * a * a)
                + (1.5 * a - a * a) * m2
                + (-0.25 * a + 0.5 * a * a) * m2 * m2)
        }
    }

    /// The matching value `Q` at mu = +-1.
    #[must_use]
    pub fn matching_value(&self) -> f64 {
        self.beta * self.t_abs.powf(self.alpha) * (2.0 * self.alpha).exp()
    }
}

/// Gradient-decay diagnostics of a solved field.
#[derive(Debug, Clone, Copy)]
pub struct GradientBound {
    /// `max` over interior nodes of `e^{-phi/2} |grad u| e^{2 alpha y}`.
    pub sup_weighted: f64,
    /// Exponent b of a least-squares fit `max_x |grad u|(y) ~ C e^{-b y}`
    /// over the upper half of the grid.
    pub decay_exponent: f64,
    /// The alpha used for the weight (from the report's barriers, else 0).
    pub alpha: f64,
}

/// Metric-normalized gradient diagnostics: weighted supremum and fitted
/// exponential decay rate of `|grad u|` in y.
pub fn gradient_bound_check(report: &SolveReport, grid: &CylinderGrid) -> Result<GradientBound> {
    grid.require_populated()?;
    if report.u.len() != grid.len() {
        return Err(LabError::InvalidArgument(
            "report field length does not match the grid".into(),
        ));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx(), grid.hy());
    let alpha = report.barriers.as_ref().map_or(0.0, |b| b.alpha);
    let mut sup_weighted = 0.0f64;
    let mut row_max = vec![0.0f64; ny];
    for (iy, rm) in row_max.iter_mut().enumerate().take(ny - 1).skip(1) {
        let y = grid.y(iy);
        for ix in 0..nx {
            let i = iy * nx + ix;
            let gx = (report.u[iy * nx + (ix + 1) % nx] - report.u[iy * nx + (ix + nx - 1) % nx])
                / (2.0 * hx);
            let gy = (report.u[(iy + 1) * nx + ix] - report.u[(iy - 1) * nx + ix]) / (2.0 * hy);
            let g = (gx * gx + gy * gy).sqrt();
            *rm = rm.max(g);
            let weighted = (-0.5 * grid.phi[i]).exp() * g * (2.0 * alpha * y).exp();
            sup_weighted = sup_weighted.max(weighted);
        }
    }
    // Log-linear fit of row maxima over the upper half (tail) rows.
    let lo = ny / 2;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (iy, &rm) in row_max.iter().enumerate().take(ny - 1).skip(lo.max(1)) {
        if rm > 1e-300 {
            pts.push((grid.y(iy), rm.ln()));
        }
    }
    let decay_exponent = if pts.len() < 3 {
        0.0
    } else {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-12 {
            0.0
        } else {
            -(n * sxy - sx * sy) / denom
        }
    };
    Ok(GradientBound {
        sup_weighted,
        decay_exponent,
        alpha,
    })
}
