//! Degenerating-neck pipelines: one-parameter plumbing families, collar
//! grids, barrier-checked Wang solves on the neck, and the limit checks
//! as the neck parameter pinches — core-loop holonomy sweeps, the
//! parabolic loop-matrix limit, and twist-witness continuity.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::developing::{
    detect_twist, frame_x_generator, holonomy_log_spectrum, holonomy_loop, plumbing_grid_field,
    FrameCoefficients, TransportField, TwistDetection,
};
use crate::error::{LabError, Result};
use crate::geometry::{
    curvature, grafted_metric, plumbing_differential, ConformalMetric, PlumbingDatum,
    DEFAULT_COLLAR_K,
};
use crate::spectrum::chi_roots;
use crate::wang::{
    neck_barrier, solve_wang, BoundaryCondition, CylinderGrid, NeckBarrier, SolveReport,
    DEFAULT_SOLVE_TOL,
};

/// Decay exponent of the neck barriers used by sweeps.
pub const SWEEP_BARRIER_ALPHA: f64 = 0.4;
/// Amplitude of the neck barriers used by sweeps.
pub const SWEEP_BARRIER_BETA: f64 = 1.0;
/// Floor on `|a_{-3}|` for a quasi-hyperbolic family: the flat collar
/// metric degenerates as the residue vanishes.
const QH_RESIDUE_FLOOR: f64 = 1e-3;
/// Admissible size of `sup ||U|| |log t|^3` under the parabolic decay
/// hypothesis.
const DECAY_HYPOTHESIS_CAP: f64 = 10.0;
/// Nodewise slack of the barrier-containment verdict.
const CONTAINMENT_SLACK: f64 = 1e-9;
/// Node budget for a single neck grid.
const MAX_GRID_NODES: usize = 4_000_000;

/// Which degenerating-neck geometry a family models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeckKind {
    /// Residue bounded away from zero along the sweep: flat collar
    /// metric `2^{1/3} |a_{-3}(t)|^{2/3} |dl|^2`.
    QhNeck,
    /// Residue vanishing at t = 0: grafted hyperbolic collar.
    ParabolicNeck,
}

/// Coefficient maps (a-side, b-side) of a plumbing family at one value
/// of the neck parameter.
pub type CoefficientMaps = (BTreeMap<i32, Complex64>, BTreeMap<i32, Complex64>);

/// A one-parameter plumbing family: side coefficients as functions of
/// the real neck parameter t >= 0 (so the t = 0 limit is evaluable), a
/// strictly decreasing sweep of positive t values, the neck kind, and
/// the grid resolution (nodes per unit length) used by sweeps.
pub struct FamilySpec {
    generator: Box<dyn Fn(f64) -> CoefficientMaps + Send + Sync>,
    t_sweep: Vec<f64>,
    kind: NeckKind,
    resolution: f64,
}

impl fmt::Debug for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FamilySpec")
            .field("t_sweep", &self.t_sweep)
            .field("kind", &self.kind)
            .field("resolution", &self.resolution)
            .finish_non_exhaustive()
    }
}

impl FamilySpec {
    /// Validate the sweep shape and the kind's residue condition, probing
    /// the generator at every sweep value and at the t = 0 limit.
    pub fn new(
        generator: Box<dyn Fn(f64) -> CoefficientMaps + Send + Sync>,
        t_sweep: Vec<f64>,
        kind: NeckKind,
        resolution: f64,
    ) -> Result<Self> {
        if !(resolution.is_finite() && resolution >= 2.0) {
            return Err(LabError::InvalidArgument(format!(
                "sweep resolution must be >= 2 nodes per unit, got {resolution}"
            )));
        }
        if t_sweep.is_empty() {
            return Err(LabError::InvalidArgument("empty t sweep".into()));
        }
        if !t_sweep.iter().all(|t| t.is_finite() && *t > 0.0) {
            return Err(LabError::InvalidArgument(
                "sweep values must be finite and positive".into(),
            ));
        }
        if t_sweep.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::InvalidArgument(
                "t sweep must be strictly decreasing".into(),
            ));
        }
        let spec = Self {
            generator,
            t_sweep,
            kind,
            resolution,
        };
        let r0 = spec.limit_residue();
        match kind {
            NeckKind::QhNeck => {
                if r0.norm() < QH_RESIDUE_FLOOR {
                    return Err(LabError::ZeroResidue(format!(
                        "quasi-hyperbolic family needs |a_-3| >= {QH_RESIDUE_FLOOR:.0e} down to \
                         t = 0, got {:.3e} in the limit",
                        r0.norm()
                    )));
                }
            }
            NeckKind::ParabolicNeck => {
                if r0.norm() > 1e-12 {
                    return Err(LabError::InvalidCoefficients(format!(
                        "parabolic family needs a_-3(0) = 0, got |a_-3(0)| = {:.3e}",
                        r0.norm()
                    )));
                }
                let cap = (DEFAULT_COLLAR_K / 3.0) * (DEFAULT_COLLAR_K / 3.0);
                if spec.t_sweep[0] >= cap {
                    return Err(LabError::NeckTooWide(format!(
                        "grafted collar needs t < (K/3)^2 = {cap:.3e}, sweep starts at {:.3e}",
                        spec.t_sweep[0]
                    )));
                }
            }
        }
        for &t in &spec.t_sweep {
            let datum = spec.datum_at(t)?;
            if kind == NeckKind::QhNeck && datum.residue().norm() < QH_RESIDUE_FLOOR {
                return Err(LabError::ZeroResidue(format!(
                    "quasi-hyperbolic family residue {:.3e} under the floor at t = {t:.3e}",
                    datum.residue().norm()
                )));
            }
        }
        Ok(spec)
    }

    #[must_use]
    pub fn kind(&self) -> NeckKind {
        self.kind
    }

    #[must_use]
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// The sweep values, largest first.
    #[must_use]
    pub fn t_values(&self) -> &[f64] {
        &self.t_sweep
    }

    /// Plumbing datum of the family at parameter t > 0.
    pub fn datum_at(&self, t: f64) -> Result<PlumbingDatum> {
        let (a, b) = (self.generator)(t);
        PlumbingDatum::new(Complex64::new(t, 0.0), a, b, DEFAULT_COLLAR_K)
    }

    /// The a-side residue at the t = 0 limit.
    #[must_use]
    pub fn limit_residue(&self) -> Complex64 {
        (self.generator)(0.0).0.get(&-3).copied().unwrap_or_default()
    }
}

/// Shared grid-shape rule: x is periodic with `round(2 pi res)` nodes,
/// y covers `span` at the same density with an odd node count, so the
/// central loop row lies exactly on a node.
fn grid_shape(span: f64, resolution: f64) -> Result<(usize, usize)> {
    if !(resolution.is_finite() && resolution >= 2.0) {
        return Err(LabError::InvalidArgument(format!(
            "grid resolution must be >= 2 nodes per unit, got {resolution}"
        )));
    }
    let nx = ((2.0 * PI * resolution).round() as usize).max(8);
    let mut ny = ((span * resolution).round() as usize + 1).max(9);
    if ny % 2 == 0 {
        ny += 1;
    }
    if nx.saturating_mul(ny) > MAX_GRID_NODES {
        return Err(LabError::NeckTooWide(format!(
            "neck grid of {nx} x {ny} nodes exceeds the node budget"
        )));
    }
    Ok((nx, ny))
}

/// Flat collar grid of a quasi-hyperbolic neck.
///
/// The strip coordinate is w = x + i y with l = i w, so the grid height
/// is y = -mu and the band [-Lambda, Lambda] covers the full collar; the
/// core loop sits on the middle row y = 0.  phi is the flat factor of
/// the running residue, U the plumbing series, kappa = 0.
pub fn neck_grid(datum: &PlumbingDatum, resolution: f64) -> Result<CylinderGrid> {
    let r_abs = datum.residue().norm();
    if r_abs <= 0.0 {
        return Err(LabError::ZeroResidue(
            "quasi-hyperbolic neck needs a_-3 != 0".into(),
        ));
    }
    let lambda = datum.collar_half_width();
    let (nx, ny) = grid_shape(2.0 * lambda, resolution)?;
    let mut grid = CylinderGrid::empty(nx, ny, -lambda, lambda)?;
    let phi = (2.0 * r_abs * r_abs).cbrt().ln();
    let n = grid.len();
    let mut big_u = Vec::with_capacity(n);
    let i = Complex64::new(0.0, 1.0);
    for iy in 0..grid.ny {
        let y = grid.y(iy);
        for ix in 0..grid.nx {
            let ell = i * Complex64::new(grid.x(ix), y);
            big_u.push(-i * plumbing_differential(datum, ell)?);
        }
    }
    grid.phi = vec![phi; n];
    grid.big_u = big_u;
    grid.kappa = vec![0.0; n];
    grid.u = vec![0.0; n];
    Ok(grid)
}

/// A solved quasi-hyperbolic neck: grid, solve report, the sweep's neck
/// barrier, and the nodewise containment verdict.
struct SolvedNeck {
    datum: PlumbingDatum,
    grid: CylinderGrid,
    report: SolveReport,
    barrier: NeckBarrier,
    contained: bool,
}

fn solve_qh_neck(datum: PlumbingDatum, resolution: f64) -> Result<SolvedNeck> {
    let grid = neck_grid(&datum, resolution)?;
    let barrier = neck_barrier(datum.t(), SWEEP_BARRIER_ALPHA, SWEEP_BARRIER_BETA)?;
    let report = solve_wang(&grid, BoundaryCondition::DirichletZero, DEFAULT_SOLVE_TOL)?;
    let mut contained = true;
    for iy in 0..grid.ny {
        let cap = barrier.eval(-grid.y(iy)) + CONTAINMENT_SLACK;
        for ix in 0..grid.nx {
            if report.u[grid.idx(ix, iy)].abs() > cap {
                contained = false;
            }
        }
    }
    Ok(SolvedNeck {
        datum,
        grid,
        report,
        barrier,
        contained,
    })
}

impl SolvedNeck {
    /// Transport field over the solved neck in the collar-centered chart.
    fn field(&self) -> Result<TransportField> {
        plumbing_grid_field(
            ConformalMetric::FlatEnd {
                r_abs: self.datum.residue().norm(),
            },
            self.datum.clone(),
            0.0,
            &self.grid,
            &self.report.u,
        )
    }
}

/// One row of a quasi-hyperbolic holonomy sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub t: f64,
    /// Core-loop holonomy eigenvalues at mu = 0, descending.
    pub eigenvalues: [f64; 3],
    /// Relative deviation from the limit spectrum `e^{2 pi lambda_i}`
    /// of the t = 0 residue.
    pub deviation: [f64; 3],
    /// Remaining Wang residual of the row's solve.
    pub residual: f64,
    /// Supremum of the neck barrier over the row's collar.
    pub barrier_sup: f64,
    /// Nodewise `|u| <= S_t` verdict.
    pub barrier_contained: bool,
}

fn sweep_row(solved: &SolvedNeck, target: &[f64; 3]) -> Result<SweepRow> {
    let field = solved.field()?;
    // Full-matrix loop first: its determinant check is the product
    // invariant with teeth.  The log spectrum then carries eigenvalues
    // at dominant-branch accuracy.
    holonomy_loop(&field, 0.0)?;
    let logs = holonomy_log_spectrum(&field, 0.0)?;
    let eigenvalues = logs.map(f64::exp);
    let deviation = std::array::from_fn(|k| {
        (eigenvalues[k] - target[k]).abs() / target[k].abs().max(1e-300)
    });
    let lambda = solved.datum.collar_half_width();
    Ok(SweepRow {
        t: solved.datum.t().norm(),
        eigenvalues,
        deviation,
        residual: solved.report.residual_inf,
        barrier_sup: solved.barrier.eval(lambda),
        barrier_contained: solved.contained,
    })
}

/// Run one job per sweep parameter on its own thread, keeping sweep
/// order; each row owns its grid.
fn run_rows<Row, Job>(spec: &FamilySpec, job: Job) -> Result<Vec<Row>>
where
    Row: Send,
    Job: Fn(PlumbingDatum) -> Result<Row> + Sync,
{
    let data = spec
        .t_sweep
        .iter()
        .map(|&t| spec.datum_at(t))
        .collect::<Result<Vec<_>>>()?;
    let job = &job;
    let results: Vec<Result<Row>> = std::thread::scope(|s| {
        let handles: Vec<_> = data
            .into_iter()
            .map(|datum| s.spawn(move || job(datum)))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(LabError::Numerical("sweep row panicked".into())))
            })
            .collect()
    });
    results.into_iter().collect()
}

/// The small-t tail of a sweep must not lose ground: over the last three
/// rows the worst deviation may not grow by more than 10%.
fn check_tail_monotonicity(rows: &[SweepRow]) -> Result<()> {
    let worst = |row: &SweepRow| row.deviation.iter().copied().fold(0.0f64, f64::max);
    let tail = rows.len().min(3);
    for w in rows[rows.len() - tail..].windows(2) {
        let (prev, next) = (worst(&w[0]), worst(&w[1]));
        if next > 1.1 * prev + 1e-8 {
            return Err(LabError::Numerical(format!(
                "sweep deviation grew from {prev:.3e} to {next:.3e} toward the small-t tail"
            )));
        }
    }
    Ok(())
}

/// Sweep the core-loop holonomy of a quasi-hyperbolic family down its
/// t values: solve each neck with Dirichlet-zero data, verify barrier
/// containment, and compare the loop spectrum against the limit
/// spectrum of the t = 0 residue.
pub fn qh_sweep(spec: &FamilySpec) -> Result<Vec<SweepRow>> {
    if spec.kind != NeckKind::QhNeck {
        return Err(LabError::InvalidArgument(
            "qh_sweep needs a quasi-hyperbolic family".into(),
        ));
    }
    let target: [f64; 3] = chi_roots(spec.limit_residue()).map(|l| (2.0 * PI * l).exp());
    let resolution = spec.resolution;
    let rows = run_rows(spec, move |datum| {
        let solved = solve_qh_neck(datum, resolution)?;
        sweep_row(&solved, &target)
    })?;
    check_tail_monotonicity(&rows)?;
    Ok(rows)
}

/// Grafted collar grid of a parabolic neck in the one-sided chart
/// z = e^{i w}: grid height y is the cusp height, the collar spans
/// `[log(1/K), L - log(1/K)]` with `L = -log t`, and the core loop sits
/// on the middle row y = L/2 (the l-coordinate is l = i w - (1/2) log t,
/// so Re l = L/2 - y runs over the full collar).  Real positive t only:
/// sweeps fix the branch arg t = 0.
pub fn parabolic_neck_grid(datum: &PlumbingDatum, resolution: f64) -> Result<CylinderGrid> {
    let t = datum.t();
    if t.im.abs() > 1e-12 * t.norm() || t.re <= 0.0 {
        return Err(LabError::InvalidArgument(format!(
            "parabolic grids fix the branch arg t = 0; got t = {t}"
        )));
    }
    let k = datum.collar_radius();
    let metric = grafted_metric(t, k)?;
    let l = -t.norm().ln();
    let y_min = (1.0 / k).ln();
    let (nx, ny) = grid_shape(l - 2.0 * y_min, resolution)?;
    let mut grid = CylinderGrid::empty(nx, ny, y_min, l - y_min)?;
    let n = grid.len();
    let shift = -0.5 * l;
    let i = Complex64::new(0.0, 1.0);
    let mut phi = Vec::with_capacity(n);
    let mut big_u = Vec::with_capacity(n);
    let mut kappa = Vec::with_capacity(n);
    for iy in 0..grid.ny {
        let y = grid.y(iy);
        let phi_y = metric.phi_upstairs(y)?;
        let kappa_y = curvature(&metric, Complex64::new((-y).exp(), 0.0))?;
        for ix in 0..grid.nx {
            let ell = i * Complex64::new(grid.x(ix), y) - shift;
            phi.push(phi_y);
            big_u.push(-i * plumbing_differential(datum, ell)?);
            kappa.push(kappa_y);
        }
    }
    grid.phi = phi;
    grid.big_u = big_u;
    grid.kappa = kappa;
    grid.u = vec![0.0; n];
    Ok(grid)
}

/// The nilpotent limit of the parabolic loop matrix.
#[must_use]
pub fn parabolic_limit_matrix() -> Matrix3<Complex64> {
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    Matrix3::new(z, one, one, z, z, z, z, z, z)
}

/// Averaged loop coefficient matrix of a parabolic neck at the central
/// row y = L/2, from a grid whose `u` field holds the solved correction.
///
/// The analytic ingredients are fixed to their collar-middle values:
/// `e^phi = (pi/L)^2` and `phi_w = 0` (the csc band is flat to first
/// order at its waist); the solved u supplies `e^psi = e^{phi+u}` and
/// the gradient part of `psi_w` by centered differences.  Requires the
/// decay hypothesis `sup ||U|| L^3` bounded.
pub fn parabolic_neck_matrix(t: Complex64, grid: &CylinderGrid) -> Result<Matrix3<Complex64>> {
    grid.require_populated()?;
    let t_abs = t.norm();
    if !(t_abs > 0.0 && t_abs < 1.0) {
        return Err(LabError::InvalidArgument(format!(
            "parabolic matrix needs 0 < |t| < 1, got |t| = {t_abs:.3e}"
        )));
    }
    let l = -t_abs.ln();
    let mid = grid.ny / 2;
    if grid.ny % 2 == 0 || (grid.y(mid) - 0.5 * l).abs() > 1e-9 * (1.0 + l) {
        return Err(LabError::InvalidArgument(format!(
            "loop row y = L/2 = {:.6} must lie on the central grid node, found {:.6}",
            0.5 * l,
            grid.y(mid)
        )));
    }
    let sup_u = (0..grid.len())
        .map(|j| grid.norm_u_sq(j).sqrt())
        .fold(0.0f64, f64::max);
    if sup_u * l.powi(3) > DECAY_HYPOTHESIS_CAP {
        return Err(LabError::DecayHypothesisViolated(format!(
            "sup ||U|| |log t|^3 = {:.3e} exceeds {DECAY_HYPOTHESIS_CAP}",
            sup_u * l.powi(3)
        )));
    }
    let e_phi = (PI / l) * (PI / l);
    let (hx, hy) = (grid.hx(), grid.hy());
    let nx = grid.nx;
    let mut acc = Matrix3::<Complex64>::zeros();
    for ix in 0..nx {
        let u = grid.u[grid.idx(ix, mid)];
        let ux = (grid.u[grid.idx((ix + 1) % nx, mid)] - grid.u[grid.idx((ix + nx - 1) % nx, mid)])
            / (2.0 * hx);
        let uy = (grid.u[grid.idx(ix, mid + 1)] - grid.u[grid.idx(ix, mid - 1)]) / (2.0 * hy);
        let e_psi = e_phi * u.exp();
        let fc = FrameCoefficients {
            e_psi,
            psi_w: Complex64::new(0.5 * ux, -0.5 * uy),
            u_e: grid.big_u[grid.idx(ix, mid)] / e_psi,
        };
        acc += frame_x_generator(&fc);
    }
    Ok(acc / Complex64::new(nx as f64, 0.0))
}

/// One row of a parabolic-neck sweep.
#[derive(Debug, Clone)]
pub struct ParabolicRow {
    pub t: f64,
    /// Averaged loop coefficient matrix at the central row.
    pub a_matrix: Matrix3<Complex64>,
    /// Entrywise max distance to the nilpotent limit.
    pub limit_distance: f64,
    /// Largest Euclidean norm of the second and third rows.
    pub lower_rows_norm: f64,
    /// Remaining Wang residual of the row's solve.
    pub residual: f64,
}

/// Sweep the parabolic loop matrix of a grafted family down its t
/// values: solve each collar with Dirichlet-zero data and evaluate the
/// averaged loop matrix on the central row.
pub fn parabolic_sweep(spec: &FamilySpec) -> Result<Vec<ParabolicRow>> {
    if spec.kind != NeckKind::ParabolicNeck {
        return Err(LabError::InvalidArgument(
            "parabolic_sweep needs a parabolic family".into(),
        ));
    }
    let resolution = spec.resolution;
    run_rows(spec, move |datum| {
        let mut grid = parabolic_neck_grid(&datum, resolution)?;
        let report = solve_wang(&grid, BoundaryCondition::DirichletZero, DEFAULT_SOLVE_TOL)?;
        grid.u.copy_from_slice(&report.u);
        let a_matrix = parabolic_neck_matrix(datum.t(), &grid)?;
        let limit = parabolic_limit_matrix();
        let limit_distance = (a_matrix - limit)
            .iter()
            .map(Complex64::norm)
            .fold(0.0f64, f64::max);
        let lower_rows_norm = (1..3)
            .map(|r| {
                a_matrix
                    .row(r)
                    .iter()
                    .map(|v| v.norm_sqr())
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0f64, f64::max);
        Ok(ParabolicRow {
            t: datum.t().norm(),
            a_matrix,
            limit_distance,
            lower_rows_norm,
            residual: report.residual_inf,
        })
    })
}

/// One row of a twist-witness sweep.
#[derive(Debug, Clone)]
pub struct TwistRow {
    pub t: f64,
    /// Twist detection on the cutoff neck field.
    pub detection: TwistDetection,
    /// Largest chart distance between this row's witness limits and the
    /// previous (larger t) row's, matched by witnessed edge; `None` on
    /// the first row.
    pub witness_deviation: Option<f64>,
}

/// Sweep the twist witnesses of a quasi-hyperbolic family: each row
/// solves the neck, develops the tie rays up to the cutoff height
/// `y <= -1 - (1/2) log t`, and records the witnessed boundary
/// segments; adjacent rows must witness the same segments, and their
/// limit points are compared by chart distance.
pub fn twist_witness_sweep(spec: &FamilySpec) -> Result<Vec<TwistRow>> {
    if spec.kind != NeckKind::QhNeck {
        return Err(LabError::InvalidArgument(
            "twist_witness_sweep needs a quasi-hyperbolic family".into(),
        ));
    }
    let r0 = spec.limit_residue();
    if r0.re <= 0.0 {
        return Err(LabError::DomainError(format!(
            "twist sweep needs Re a_-3(0) > 0, got {:.3e}; from the opposite point of view the \
             vertical twist parameter runs to minus infinity — negate the residue and swap the \
             collar sides to witness it",
            r0.re
        )));
    }
    let resolution = spec.resolution;
    let raw = run_rows(spec, move |datum| {
        let t_abs = datum.t().norm();
        let cutoff = -1.0 - 0.5 * t_abs.ln();
        let solved = solve_qh_neck(datum, resolution)?;
        let field = solved.field()?;
        let detection = detect_twist(&field, solved.datum.residue(), cutoff)?;
        Ok((t_abs, detection))
    })?;
    let mut rows: Vec<TwistRow> = Vec::with_capacity(raw.len());
    for (t, detection) in raw {
        let witness_deviation = match rows.last() {
            None => None,
            Some(prev_row) => {
                let prev = &prev_row.detection;
                if prev.sign != detection.sign
                    || prev.witnesses.len() != detection.witnesses.len()
                {
                    return Err(LabError::InconsistentWitness(format!(
                        "adjacent sweep rows witness different twist structures at t = {t:.3e}"
                    )));
                }
                let mut worst = 0.0f64;
                for (wp, wn) in prev.witnesses.iter().zip(&detection.witnesses) {
                    if wp.edge != wn.edge {
                        return Err(LabError::InconsistentWitness(format!(
                            "witness edge changed between adjacent rows at t = {t:.3e}: {:?} vs \
                             {:?}",
                            wp.edge, wn.edge
                        )));
                    }
                    worst = worst.max(wn.limit.chart_distance(&wp.limit));
                }
                Some(worst)
            }
        };
        rows.push(TwistRow {
            t,
            detection,
            witness_deviation,
        });
    }
    Ok(rows)
}

/// Supremum of the grafted-collar curvature defect `|kappa + 1|` over
/// `samples` evenly spaced heights across the collar.
pub fn curvature_defect_sup(t: Complex64, k: f64, samples: usize) -> Result<f64> {
    if samples < 16 {
        return Err(LabError::InvalidArgument(format!(
            "need at least 16 curvature samples, got {samples}"
        )));
    }
    let metric = grafted_metric(t, k)?;
    let l = -t.norm().ln();
    let y_min = (1.0 / k).ln();
    let span = l - 2.0 * y_min;
    let mut sup = 0.0f64;
    for j in 0..samples {
        let y = y_min + span * j as f64 / (samples - 1) as f64;
        let z = Complex64::new((-y).exp(), 0.0);
        sup = sup.max((curvature(&metric, z)? + 1.0).abs());
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::developing::realify_frame_matrix;
    use crate::spectrum::TwistSign;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Symmetric family with a_-3 = r0 + r1 t and a_-2 = s.
    fn family(r0: f64, r1: f64, s: f64) -> Box<dyn Fn(f64) -> CoefficientMaps + Send + Sync> {
        Box::new(move |t| {
            let mut a = BTreeMap::new();
            a.insert(-3, c(r0 + r1 * t, 0.0));
            if s != 0.0 {
                a.insert(-2, c(s, 0.0));
            }
            let b = a.iter().map(|(&m, &v)| (m, -v)).collect();
            (a, b)
        })
    }

    fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn neck_grid_covers_collar_and_flat_invariants() {
        let spec = FamilySpec::new(
            family(2.0, 0.0, 0.0),
            vec![1e-2, 1e-4],
            NeckKind::QhNeck,
            8.0,
        )
        .unwrap();
        for &t in spec.t_values() {
            let datum = spec.datum_at(t).unwrap();
            let grid = neck_grid(&datum, 8.0).unwrap();
            let lambda = 0.5f64.ln() - 0.5 * t.ln();
            assert_relative_eq!(grid.y0, -lambda, max_relative = 1e-12);
            assert_relative_eq!(grid.y1, lambda, max_relative = 1e-12);
            assert_eq!(grid.ny % 2, 1, "loop row must lie on a node");
            // Pure third-order pole: the invariant differential norm is
            // exactly 1/2 everywhere on the flat collar.
            for j in 0..grid.len() {
                assert_relative_eq!(grid.norm_u_sq(j), 0.5, epsilon = 1e-12);
            }
        }
        // The half-width grows like -(1/2) log t.
        let l2 = spec.datum_at(1e-2).unwrap().collar_half_width();
        let l4 = spec.datum_at(1e-4).unwrap().collar_half_width();
        assert_relative_eq!(l4 - l2, 100f64.ln() / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn neck_differential_matches_side_charts() {
        let t = 1e-3;
        let spec =
            FamilySpec::new(family(2.0, 0.0, 1.0), vec![t], NeckKind::QhNeck, 8.0).unwrap();
        let datum = spec.datum_at(t).unwrap();
        let lambda = datum.collar_half_width();
        // a-side edge |z| = K: the series reduces to a_-3 + a_-2 z up to
        // the far side's O(t/K) leakage.
        let ell_a = c(lambda, 0.4);
        let z_a = c(t.sqrt(), 0.0) * ell_a.exp();
        assert_relative_eq!(z_a.norm(), 0.5, max_relative = 1e-12);
        let got_a = plumbing_differential(&datum, ell_a).unwrap();
        let leak = 2.0 * t / 0.5;
        assert!(
            (got_a - (c(2.0, 0.0) + z_a)).norm() <= 2.0 * leak,
            "a-side mismatch {:.3e}",
            (got_a - (c(2.0, 0.0) + z_a)).norm()
        );
        // b-side edge |z'| = K: in the far chart the coefficient is
        // -U_l, and its leading part is b_-3 + b_-2 z' = -a_-3 - z'.
        let ell_b = c(-lambda, 0.4);
        let z_b = c(t.sqrt(), 0.0) * (-ell_b).exp();
        assert_relative_eq!(z_b.norm(), 0.5, max_relative = 1e-12);
        let got_b = plumbing_differential(&datum, ell_b).unwrap();
        assert!(
            (-got_b - (c(-2.0, 0.0) - z_b)).norm() <= 2.0 * leak,
            "b-side mismatch {:.3e}",
            (-got_b - (c(-2.0, 0.0) - z_b)).norm()
        );
    }

    #[test]
    fn family_spec_validation() {
        // Quasi-hyperbolic family with a vanishing limit residue.
        assert!(matches!(
            FamilySpec::new(family(0.0, 1.0, 0.0), vec![1e-2], NeckKind::QhNeck, 8.0),
            Err(LabError::ZeroResidue(_))
        ));
        // Parabolic family whose residue does not vanish.
        assert!(matches!(
            FamilySpec::new(
                family(2.0, 0.0, 0.0),
                vec![1e-2],
                NeckKind::ParabolicNeck,
                8.0
            ),
            Err(LabError::InvalidCoefficients(_))
        ));
        // Sweep must decrease strictly.
        assert!(matches!(
            FamilySpec::new(family(2.0, 0.0, 0.0), vec![1e-3, 1e-2], NeckKind::QhNeck, 8.0),
            Err(LabError::InvalidArgument(_))
        ));
        // Parabolic sweeps must fit the grafted-collar bound.
        assert!(matches!(
            FamilySpec::new(
                family(0.0, 0.0, 0.0),
                vec![0.1],
                NeckKind::ParabolicNeck,
                8.0
            ),
            Err(LabError::NeckTooWide(_))
        ));
        // The plumbing collar bound applies to every kind.
        assert!(matches!(
            FamilySpec::new(family(2.0, 0.0, 0.0), vec![0.3], NeckKind::QhNeck, 8.0),
            Err(LabError::NeckTooWide(_))
        ));
        // Kind mismatch between spec and sweep entry point.
        let qh =
            FamilySpec::new(family(2.0, 0.0, 0.0), vec![1e-2], NeckKind::QhNeck, 8.0).unwrap();
        assert!(matches!(
            parabolic_sweep(&qh),
            Err(LabError::InvalidArgument(_))
        ));
        assert!(matches!(
            twist_witness_sweep(
                &FamilySpec::new(
                    family(0.0, 0.0, 0.0),
                    vec![1e-2],
                    NeckKind::ParabolicNeck,
                    8.0
                )
                .unwrap()
            ),
            Err(LabError::InvalidArgument(_))
        ));
        assert_relative_eq!(qh.limit_residue().re, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn qh_sweep_constant_family_matches_exact_model() {
        let spec = FamilySpec::new(
            family(2.0, 0.0, 0.0),
            vec![1e-2, 1e-3],
            NeckKind::QhNeck,
            10.0,
        )
        .unwrap();
        let rows = qh_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(
                row.deviation.iter().all(|d| *d <= 1e-6),
                "t = {:.1e}: deviation {:?}",
                row.t,
                row.deviation
            );
            assert!(row.barrier_contained, "barrier escape at t = {:.1e}", row.t);
            assert!(row.residual <= 1e-9);
            assert!(row.barrier_sup > 0.0);
            let product: f64 = row.eigenvalues.iter().product();
            assert_relative_eq!(product, 1.0, epsilon = 1e-10);
        }
        let big = (2.0 * PI * 3.0f64.sqrt()).exp();
        assert_relative_eq!(rows[0].eigenvalues[0], big, max_relative = 1e-6);
    }

    #[test]
    fn qh_sweep_perturbed_family_deviation_shrinks() {
        let sweep: Vec<f64> = (0..5).map(|j| 10f64.powi(-2 - j)).collect();
        let spec = FamilySpec::new(family(2.0, 1.0, 1.0), sweep, NeckKind::QhNeck, 12.0).unwrap();
        let rows = qh_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 5);
        let worst = |r: &SweepRow| r.deviation.iter().copied().fold(0.0f64, f64::max);
        assert!(
            worst(&rows[4]) <= 1e-2,
            "final deviation {:.3e}",
            worst(&rows[4])
        );
        for w in rows.windows(2) {
            assert!(
                worst(&w[1]) <= 1.1 * worst(&w[0]) + 1e-8,
                "deviation grew: {:.3e} -> {:.3e}",
                worst(&w[0]),
                worst(&w[1])
            );
        }
        for row in &rows {
            assert!(row.barrier_contained, "barrier escape at t = {:.1e}", row.t);
            let product: f64 = row.eigenvalues.iter().product();
            assert_relative_eq!(product, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn holonomy_homotopy_invariance_on_neck() {
        let spec =
            FamilySpec::new(family(2.0, 1.0, 1.0), vec![1e-3], NeckKind::QhNeck, 12.0).unwrap();
        let solved = solve_qh_neck(spec.datum_at(1e-3).unwrap(), 12.0).unwrap();
        let field = solved.field().unwrap();
        let at_loop = holonomy_log_spectrum(&field, 0.0).unwrap();
        let at_half = holonomy_log_spectrum(&field, -0.5).unwrap();
        for j in 0..3 {
            assert!(
                (at_loop[j] - at_half[j]).abs() <= 1e-6,
                "log eigenvalue {j} moved {:.3e} between homotopic loops",
                (at_loop[j] - at_half[j]).abs()
            );
        }
    }

    #[test]
    fn parabolic_neck_matrix_approaches_nilpotent_limit() {
        let spec = FamilySpec::new(
            family(0.0, 0.0, 0.0),
            vec![1e-2, 1e-4, 1e-8],
            NeckKind::ParabolicNeck,
            6.0,
        )
        .unwrap();
        let rows = parabolic_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            let l = -row.t.ln();
            assert!(
                row.lower_rows_norm <= 12.0 / l,
                "t = {:.1e}: lower rows norm {:.3e} above 12/L = {:.3e}",
                row.t,
                row.lower_rows_norm,
                12.0 / l
            );
            assert!(row.residual <= 1e-8);
            // The top row is identically (0, 1, 1).
            assert!(row.a_matrix[(0, 0)].norm() < 1e-15);
            assert!((row.a_matrix[(0, 1)] - c(1.0, 0.0)).norm() < 1e-15);
            assert!((row.a_matrix[(0, 2)] - c(1.0, 0.0)).norm() < 1e-15);
        }
        for w in rows.windows(2) {
            assert!(
                w[1].limit_distance < w[0].limit_distance,
                "matrix distance to the nilpotent limit must shrink: {:.3e} -> {:.3e}",
                w[0].limit_distance,
                w[1].limit_distance
            );
        }
        // Eigenvalues of e^{2 pi A_t} drift toward the triple 1.
        let eig_dev = |row: &ParabolicRow| -> f64 {
            let real = realify_frame_matrix(&row.a_matrix).unwrap();
            let exp = (real * (2.0 * PI)).exp();
            exp.complex_eigenvalues()
                .iter()
                .map(|v| (v - c(1.0, 0.0)).norm())
                .fold(0.0f64, f64::max)
        };
        let devs: Vec<f64> = rows.iter().map(eig_dev).collect();
        assert!(
            devs[1] < devs[0] && devs[2] < devs[1],
            "unipotent deviation must decrease: {devs:?}"
        );
    }

    #[test]
    fn parabolic_matrix_near_nilpotent_at_extreme_pinch() {
        let spec = FamilySpec::new(
            family(0.0, 0.0, 0.0),
            vec![1e-85],
            NeckKind::ParabolicNeck,
            5.0,
        )
        .unwrap();
        let rows = parabolic_sweep(&spec).unwrap();
        let l = -(1e-85f64).ln();
        assert!(rows[0].lower_rows_norm <= 12.0 / l);
        let real = realify_frame_matrix(&rows[0].a_matrix).unwrap();
        let exp = (real * (2.0 * PI)).exp();
        let dev = exp
            .complex_eigenvalues()
            .iter()
            .map(|v| (v - c(1.0, 0.0)).norm())
            .fold(0.0f64, f64::max);
        assert!(
            dev <= 0.6,
            "deep-pinch loop eigenvalues still {dev:.3} from the triple 1"
        );
    }

    #[test]
    fn parabolic_decay_hypothesis_guard() {
        let spec = FamilySpec::new(
            family(0.0, 0.0, 1.0),
            vec![1e-2],
            NeckKind::ParabolicNeck,
            6.0,
        )
        .unwrap();
        assert!(matches!(
            parabolic_sweep(&spec),
            Err(LabError::DecayHypothesisViolated(_))
        ));
    }

    #[test]
    fn twist_sweep_exact_family_witnesses_are_stable() {
        let spec = FamilySpec::new(
            family(2.0, 0.0, 0.0),
            vec![3e-5, 3e-6],
            NeckKind::QhNeck,
            10.0,
        )
        .unwrap();
        let rows = twist_witness_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert_eq!(row.detection.sign, TwistSign::MinusInfinity);
            assert_eq!(row.detection.witnesses.len(), 1);
            assert_eq!(row.detection.witnesses[0].edge, (0, 2));
        }
        assert!(rows[0].witness_deviation.is_none());
        let dev = rows[1].witness_deviation.unwrap();
        assert!(dev <= 5e-6, "exact-family witness moved {dev:.3e}");
    }

    #[test]
    fn twist_sweep_perturbed_family_deviation_shrinks_under_refinement() {
        let run = |t_small: f64| -> f64 {
            let spec = FamilySpec::new(
                family(2.0, 1.0, 1.0),
                vec![3e-5, t_small],
                NeckKind::QhNeck,
                10.0,
            )
            .unwrap();
            twist_witness_sweep(&spec).unwrap()[1]
                .witness_deviation
                .unwrap()
        };
        let coarse = run(3e-6);
        let fine = run(9.5e-6);
        assert!(
            coarse > 1e-7,
            "perturbation should move the witness, got {coarse:.3e}"
        );
        assert!(
            fine <= 0.85 * coarse + 1e-7,
            "refinement did not shrink the witness deviation: {fine:.3e} vs {coarse:.3e}"
        );
    }

    #[test]
    fn twist_sweep_rejects_negative_limit_residue() {
        let spec =
            FamilySpec::new(family(-2.0, 0.0, 0.0), vec![3e-5], NeckKind::QhNeck, 8.0).unwrap();
        match twist_witness_sweep(&spec).unwrap_err() {
            LabError::DomainError(msg) => {
                assert!(msg.contains("minus infinity"), "message: {msg}");
            }
            other => panic!("expected a domain error, got {other:?}"),
        }
    }

    #[test]
    fn grafted_curvature_defect_fits_inverse_square_log() {
        let ts = [1e-4, 1e-6, 1e-8, 1e-10];
        let mut ln_l = Vec::new();
        let mut ln_defect = Vec::new();
        for &t in &ts {
            let defect = curvature_defect_sup(c(t, 0.0), 0.5, 400).unwrap();
            assert!(defect > 0.0);
            ln_l.push((-t.ln()).ln());
            ln_defect.push(defect.ln());
        }
        for w in ln_defect.windows(2) {
            assert!(w[1] < w[0], "defect must shrink along the sweep");
        }
        // The wide-collar point continues the decrease.
        let coarse = curvature_defect_sup(c(1e-2, 0.0), 0.5, 400).unwrap();
        assert!(coarse > ln_defect[0].exp());
        // Honest scale: the defect decays like 1/L^2 in the collar
        // length L = -log t ...
        let slope = fit_slope(&ln_l, &ln_defect);
        assert!(
            (-2.35..=-1.65).contains(&slope),
            "log-log slope vs collar length: {slope:.3}"
        );
        // ... which on any finite sweep also reads as a small positive
        // power of |t| with a positive amplitude.
        let ln_t: Vec<f64> = ts.iter().map(|t: &f64| t.ln()).collect();
        let delta = fit_slope(&ln_t, &ln_defect);
        assert!(delta > 0.02, "fitted power of |t|: {delta:.4}");
        let gamma = ((ln_defect.iter().sum::<f64>() - delta * ln_t.iter().sum::<f64>())
            / ts.len() as f64)
            .exp();
        assert!(gamma.is_finite() && gamma > 0.0);
    }
}
