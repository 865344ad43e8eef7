//! Conformal background metrics on model ends, Laurent representations of
//! cubic differentials, and plumbing-family data.
//!
//! Two charts are used throughout.  Downstairs: the punctured disk with
//! coordinate z.  Upstairs: the half-plane strip with coordinate
//! w = x + i y, x periodic of period 2 pi, related by z = e^{i w}, so
//! |z| = e^{-y}.  Conformal factors transform by
//! `e^{phi_up} = |z|^2 e^{phi_down}`; curvature `kappa = -1/2 Lap_h phi`
//! is chart-independent.

use crate::error::{LabError, Result};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

/// Default inner interpolation radius for [`ansatz_metric`].
pub const DEFAULT_C_INNER: f64 = 0.1;
/// Default outer interpolation radius for [`ansatz_metric`].
pub const DEFAULT_C_OUTER: f64 = 0.5;
/// Default collar radius for plumbing and grafting.
pub const DEFAULT_COLLAR_K: f64 = 0.5;
/// Default Laurent truncation degree.
pub const DEFAULT_TRUNCATION: i32 = 16;

/// Quintic smoothstep: C^2 weight with vanishing first and second
/// derivatives at both ends.
#[must_use]
pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

/// A cubic differential on the punctured disk, `U = sum a_m z^m dz^3`
/// with pole order at most three (m >= -3), finitely many coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicLaurent {
    coeffs: BTreeMap<i32, Complex64>,
    truncation: i32,
}

impl CubicLaurent {
    /// Build from coefficient pairs; zero coefficients are dropped.
    pub fn new(pairs: &[(i32, Complex64)]) -> Result<Self> {
        Self::with_truncation(pairs, DEFAULT_TRUNCATION)
    }

    /// Build with an explicit truncation degree.
    pub fn with_truncation(pairs: &[(i32, Complex64)], truncation: i32) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for &(m, a) in pairs {
            if m < -3 {
                return Err(LabError::InvalidCoefficients(format!(
                    "order {m} below -3: pole order at most three"
                )));
            }
            if m > truncation {
                return Err(LabError::InvalidCoefficients(format!(
                    "order {m} above truncation degree {truncation}"
                )));
            }
            if !(a.re.is_finite() && a.im.is_finite()) {
                return Err(LabError::InvalidCoefficients(format!(
                    "non-finite coefficient at order {m}"
                )));
            }
            if a.norm() > 0.0 && coeffs.insert(m, a).is_some() {
                return Err(LabError::InvalidCoefficients(format!(
                    "duplicate coefficient at order {m}"
                )));
            }
        }
        Ok(Self { coeffs, truncation })
    }

    /// Pure third-order pole `R z^{-3} dz^3`.
    pub fn pure_pole(residue: Complex64) -> Result<Self> {
        Self::new(&[(-3, residue)])
    }

    /// The residue `a_{-3}`.
    #[must_use]
    pub fn residue(&self) -> Complex64 {
        self.coeffs.get(&-3).copied().unwrap_or_default()
    }

    /// Coefficient map (ascending order).
    #[must_use]
    pub fn coefficients(&self) -> &BTreeMap<i32, Complex64> {
        &self.coeffs
    }

    /// Truncation degree.
    #[must_use]
    pub fn truncation(&self) -> i32 {
        self.truncation
    }

    /// Value of the coefficient of dz^3 at z (downstairs).
    pub fn value(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() == 0.0 && self.coeffs.keys().any(|&m| m < 0) {
            return Err(LabError::ZeroPoint);
        }
        let mut acc = Complex64::default();
        for (&m, &a) in &self.coeffs {
            acc += a * z.powi(m);
        }
        Ok(acc)
    }

    /// Value of the coefficient of dw^3 upstairs at w = x + i y:
    /// `U dz^3 = U (iz)^3 dw^3 = -i z^3 U dw^3` for z = e^{iw}.
    pub fn upstairs_value(&self, w: Complex64) -> Result<Complex64> {
        let z = (Complex64::new(0.0, 1.0) * w).exp();
        // -i z^3 * sum a_m z^m = -i sum a_m z^{m+3}: no negative powers,
        // defined for all y (z -> 0 as y -> infinity).
        let mut acc = Complex64::default();
        for (&m, &a) in &self.coeffs {
            acc += a * z.powi(m + 3);
        }
        Ok(Complex64::new(0.0, -1.0) * acc)
    }

    /// Serialize as `m re im` lines (ascending m), full float precision.
    #[must_use]
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (&m, &a) in &self.coeffs {
            out.push_str(&format!("{} {:.17e} {:.17e}\n", m, a.re, a.im));
        }
        out
    }

    /// Parse the `m re im` line format (blank lines and `#` comments ok).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(LabError::ParseError(format!(
                    "line {}: expected `m re im`, got `{line}`",
                    lineno + 1
                )));
            }
            let m: i32 = fields[0]
                .parse()
                .map_err(|_| LabError::ParseError(format!("line {}: bad order", lineno + 1)))?;
            let re: f64 = fields[1]
                .parse()
                .map_err(|_| LabError::ParseError(format!("line {}: bad re", lineno + 1)))?;
            let im: f64 = fields[2]
                .parse()
                .map_err(|_| LabError::ParseError(format!("line {}: bad im", lineno + 1)))?;
            pairs.push((m, Complex64::new(re, im)));
        }
        let max_order = pairs.iter().map(|&(m, _)| m).max().unwrap_or(0);
        Self::with_truncation(&pairs, DEFAULT_TRUNCATION.max(max_order))
    }
}

/// Hyperbolic cusp conformal factor `4 / (|z|^2 (log |z|^2)^2)` on the
/// punctured unit disk; constant curvature -1.
pub fn cusp_factor(z: Complex64) -> Result<f64> {
    let r = z.norm();
    if !(r > 0.0 && r < 1.0) {
        return Err(LabError::DomainError(format!(
            "cusp metric needs 0 < |z| < 1, got |z| = {r}"
        )));
    }
    let log_r2 = 2.0 * r.ln();
    Ok(4.0 / (r * r * log_r2 * log_r2))
}

/// Flat-end conformal factor `2^{1/3} |R|^{2/3} / |z|^2`; curvature 0, and
/// the norm of `R z^{-3} dz^3` in this metric is identically 1/sqrt 2.
pub fn flat_factor(r_abs: f64, z: Complex64) -> Result<f64> {
    if r_abs.is_nan() || r_abs <= 0.0 {
        return Err(LabError::ZeroResidue(format!(
            "flat factor needs |R| > 0, got {r_abs}"
        )));
    }
    let r = z.norm();
    if r == 0.0 {
        return Err(LabError::ZeroPoint);
    }
    Ok((2.0 * r_abs * r_abs).cbrt() / (r * r))
}

/// Squared norm of a cubic-differential value in the conformal metric:
/// `|U|^2 e^{-3 phi}`.
#[must_use]
pub fn norm_u_squared(u_value: Complex64, e_phi: f64) -> f64 {
    u_value.norm_sqr() * e_phi.powi(-3)
}

/// A conformal background metric on a model-end domain.
#[derive(Debug, Clone)]
pub enum ConformalMetric {
    /// Hyperbolic cusp on the punctured unit disk.
    Cusp,
    /// Flat end of a pure third-order pole with residue modulus `r_abs`.
    FlatEnd { r_abs: f64 },
    /// Flat-to-cusp interpolation for a Laurent differential.
    Ansatz {
        u: CubicLaurent,
        c_inner: f64,
        c_outer: f64,
    },
    /// Grafted hyperbolic collar of a plumbing neck.
    GraftedCollar { t: Complex64, k: f64 },
}

impl ConformalMetric {
    /// Downstairs conformal factor `e^{phi}` at z.
    pub fn factor(&self, z: Complex64) -> Result<f64> {
        Ok(self.phi_downstairs(z)?.exp())
    }

    /// Downstairs log conformal factor at z.
    pub fn phi_downstairs(&self, z: Complex64) -> Result<f64> {
        let r = z.norm();
        if r == 0.0 {
            return Err(LabError::ZeroPoint);
        }
        match self {
            ConformalMetric::Cusp => Ok(cusp_factor(z)?.ln()),
            ConformalMetric::FlatEnd { r_abs } => Ok(flat_factor(*r_abs, z)?.ln()),
            ConformalMetric::Ansatz { u, c_inner, c_outer } => {
                if r >= 1.0 {
                    return Err(LabError::DomainError(format!(
                        "ansatz metric needs |z| < 1, got {r}"
                    )));
                }
                let phi_flat = |zz: Complex64| -> Result<f64> {
                    let val = u.value(zz)?.norm();
                    if val <= 0.0 {
                        return Err(LabError::DomainError(
                            "cubic differential vanishes in the flat zone".into(),
                        ));
                    }
                    Ok((2.0 * val * val).cbrt().ln())
                };
                if r <= *c_inner {
                    phi_flat(z)
                } else if r >= *c_outer {
                    Ok(cusp_factor(z)?.ln())
                } else {
                    let tau = (r.ln() - c_inner.ln()) / (c_outer.ln() - c_inner.ln());
                    let w = smoothstep5(tau);
                    Ok((1.0 - w) * phi_flat(z)? + w * cusp_factor(z)?.ln())
                }
            }
            ConformalMetric::GraftedCollar { t, k } => {
                let y = -r.ln();
                let phi_up = grafted_phi_upstairs(y, -t.norm().ln(), *k)?;
                Ok(phi_up + 2.0 * y)
            }
        }
    }

    /// Upstairs log conformal factor at height y (all kinds are radial,
    /// so the factor depends on y only).
    pub fn phi_upstairs(&self, y: f64) -> Result<f64> {
        match self {
            ConformalMetric::Cusp => {
                if y <= 0.0 {
                    return Err(LabError::DomainError(format!(
                        "cusp strip needs y > 0, got {y}"
                    )));
                }
                Ok(-2.0 * y.ln())
            }
            ConformalMetric::FlatEnd { r_abs } => {
                if r_abs.is_nan() || *r_abs <= 0.0 {
                    return Err(LabError::ZeroResidue("flat end needs |R| > 0".into()));
                }
                Ok((2.0 * r_abs * r_abs).cbrt().ln())
            }
            ConformalMetric::GraftedCollar { t, k } => {
                grafted_phi_upstairs(y, -t.norm().ln(), *k)
            }
            ConformalMetric::Ansatz { .. } => {
                let z = Complex64::new((-y).exp(), 0.0);
                Ok(self.phi_downstairs(z)? - 2.0 * y)
            }
        }
    }

    /// Curvature of the grafted collar's interpolation seams and other
    /// analytic-zone boundaries (upstairs heights), for diagnostics.
    #[must_use]
    pub fn grafted_seams(&self) -> Option<[f64; 4]> {
        match self {
            ConformalMetric::GraftedCollar { t, k } => {
                let l = -t.norm().ln();
                let y1 = (3.0 / (2.0 * k)).ln();
                let y2 = (3.0 / k).ln();
                Some([y1, y2, l - y2, l - y1])
            }
            _ => None,
        }
    }
}

/// Upstairs grafted-collar factor at height y for neck length
/// `L = -log |t|` and collar radius `K`:
/// cusp `-2 log y` for y in [log(1/K), log(3/(2K))], a quintic blend on
/// [log(3/(2K)), log(3/K)], the hyperbolic csc band
/// `2 log((pi/L) csc(pi y / L))` across the middle, then the mirror zones.
fn grafted_phi_upstairs(y: f64, l: f64, k: f64) -> Result<f64> {
    let y_min = (1.0 / k).ln();
    let y1 = (3.0 / (2.0 * k)).ln();
    let y2 = (3.0 / k).ln();
    let slack = 1e-9 * (1.0 + l);
    if y < y_min - slack || y > l - y_min + slack {
        return Err(LabError::DomainError(format!(
            "height {y} outside grafted collar [{y_min}, {}]",
            l - y_min
        )));
    }
    let phi_cusp_low = |y: f64| -2.0 * y.ln();
    let phi_cusp_high = |y: f64| -2.0 * (l - y).ln();
    let phi_csc = |y: f64| 2.0 * ((PI / l) / (PI * y / l).sin()).ln();
    if y <= y1 {
        Ok(phi_cusp_low(y.max(y_min - slack).max(0.5 * y_min)))
    } else if y < y2 {
        let w = smoothstep5((y - y1) / (y2 - y1));
        Ok((1.0 - w) * phi_cusp_low(y) + w * phi_csc(y))
    } else if y <= l - y2 {
        Ok(phi_csc(y))
    } else if y < l - y1 {
        let w = smoothstep5((y - (l - y2)) / (y2 - y1));
        Ok((1.0 - w) * phi_csc(y) + w * phi_cusp_high(y))
    } else {
        Ok(phi_cusp_high(y.min(l - 0.5 * y_min)))
    }
}

/// Flat-to-cusp interpolation metric for a Laurent cubic differential.
///
/// Zero residue leaves the hyperbolic cusp metric untouched.  Otherwise
/// the differential must not degenerate anywhere in `|z| <= c_outer`:
/// checked by the winding number of `z^3 U(z)` around `|z| = c_outer`
/// (zero count inside) plus a minimum-modulus sample on the ring.
pub fn ansatz_metric(u: &CubicLaurent, c_inner: f64, c_outer: f64) -> Result<ConformalMetric> {
    if !(0.0 < c_inner && c_inner < c_outer && c_outer < 1.0) {
        return Err(LabError::BadRadii(format!(
            "need 0 < c < C < 1, got c = {c_inner}, C = {c_outer}"
        )));
    }
    if u.residue().norm() == 0.0 {
        return Ok(ConformalMetric::Cusp);
    }
    // g(z) = z^3 U(z) is holomorphic on the closed disk |z| <= c_outer and
    // g(0) = a_{-3} != 0; zeros of U inside are zeros of g, counted by the
    // winding number of g around the circle.
    let samples = 720;
    let mut winding = 0.0f64;
    let mut prev_arg = 0.0f64;
    let mut min_mod = f64::INFINITY;
    let mut max_mod = 0.0f64;
    for k in 0..=samples {
        let theta = 2.0 * PI * k as f64 / samples as f64;
        let z = Complex64::from_polar(c_outer, theta);
        let g = u.value(z)? * z.powi(3);
        let modulus = g.norm();
        min_mod = min_mod.min(modulus);
        max_mod = max_mod.max(modulus);
        let arg = g.arg();
        if k > 0 {
            let mut diff = arg - prev_arg;
            while diff > PI {
                diff -= 2.0 * PI;
            }
            while diff < -PI {
                diff += 2.0 * PI;
            }
            winding += diff;
        }
        prev_arg = arg;
    }
    if min_mod <= 1e-9 * max_mod {
        return Err(LabError::ZeroOnRing(min_mod));
    }
    let zeros_inside = (winding / (2.0 * PI)).round();
    if zeros_inside != 0.0 {
        return Err(LabError::ZeroOnRing(min_mod));
    }
    // Direct minimum-modulus sample over the interpolation ring.
    let mut ring_min = f64::INFINITY;
    for kr in 0..=16 {
        let r = c_inner * (c_outer / c_inner).powf(kr as f64 / 16.0);
        for ka in 0..48 {
            let theta = 2.0 * PI * ka as f64 / 48.0;
            let z = Complex64::from_polar(r, theta);
            ring_min = ring_min.min(u.value(z)?.norm() * r.powi(3));
        }
    }
    if ring_min <= 1e-9 * max_mod {
        return Err(LabError::ZeroOnRing(ring_min));
    }
    Ok(ConformalMetric::Ansatz {
        u: u.clone(),
        c_inner,
        c_outer,
    })
}

/// Grafted hyperbolic collar metric of neck parameter t; requires
/// `0 < |t| < (K/3)^2` so the csc band does not collapse.
pub fn grafted_metric(t: Complex64, k: f64) -> Result<ConformalMetric> {
    if !(0.0 < k && k < 1.0) {
        return Err(LabError::BadRadii(format!("collar radius K = {k} not in (0,1)")));
    }
    let limit = (k / 3.0) * (k / 3.0);
    let t_abs = t.norm();
    if !(t_abs > 0.0 && t_abs < limit) {
        return Err(LabError::NeckTooWide(format!(
            "need 0 < |t| < (K/3)^2 = {limit:.3e}, got |t| = {t_abs:.3e}"
        )));
    }
    Ok(ConformalMetric::GraftedCollar { t, k })
}

/// Curvature `kappa = -1/2 Lap_h phi` at z: analytic for the exact metric
/// kinds and zones, centered finite differences with relative step
/// `1e-4 |z|` across interpolation seams.
pub fn curvature(metric: &ConformalMetric, z: Complex64) -> Result<f64> {
    match metric {
        ConformalMetric::Cusp => {
            cusp_factor(z)?;
            Ok(-1.0)
        }
        ConformalMetric::FlatEnd { r_abs } => {
            flat_factor(*r_abs, z)?;
            Ok(0.0)
        }
        ConformalMetric::Ansatz { c_inner, c_outer, .. } => {
            let r = z.norm();
            if r == 0.0 {
                return Err(LabError::ZeroPoint);
            }
            if r < *c_inner * 0.995 {
                Ok(0.0) // flat zone: |U|^{2/3} metric of a holomorphic cubic differential
            } else if r > *c_outer * 1.005 {
                cusp_factor(z)?;
                Ok(-1.0)
            } else {
                fd_curvature(metric, z)
            }
        }
        ConformalMetric::GraftedCollar { t, k } => {
            let l = -t.norm().ln();
            let y = -z.norm().ln();
            let y1 = (3.0 / (2.0 * k)).ln();
            let y2 = (3.0 / k).ln();
            let in_blend = (y > y1 * 0.999 && y < y2 * 1.001)
                || (y > (l - y2) * 0.999 && y < (l - y1) * 1.001);
            if in_blend {
                fd_curvature(metric, z)
            } else {
                // Cusp zones and csc band are exactly hyperbolic.
                metric.phi_downstairs(z)?;
                Ok(-1.0)
            }
        }
    }
}

/// Five-point finite-difference curvature with step `1e-4 |z|`.
fn fd_curvature(metric: &ConformalMetric, z: Complex64) -> Result<f64> {
    let h = 1e-4 * z.norm();
    let phi = |zz: Complex64| metric.phi_downstairs(zz);
    let center = phi(z)?;
    let lap = (phi(z + Complex64::new(h, 0.0))?
        + phi(z - Complex64::new(h, 0.0))?
        + phi(z + Complex64::new(0.0, h))?
        + phi(z - Complex64::new(0.0, h))?
        - 4.0 * center)
        / (h * h);
    Ok(-0.5 * (-center).exp() * lap)
}

/// Plumbing-family data for one degenerating neck: coefficient maps on the
/// two sides, matched by `b_{-3} = -a_{-3}`.
#[derive(Debug, Clone)]
pub struct PlumbingDatum {
    t: Complex64,
    a: BTreeMap<i32, Complex64>,
    b: BTreeMap<i32, Complex64>,
    k: f64,
}

impl PlumbingDatum {
    /// Validate `|t| < K^2`, pole orders, and the residue matching.
    pub fn new(
        t: Complex64,
        a: BTreeMap<i32, Complex64>,
        b: BTreeMap<i32, Complex64>,
        k: f64,
    ) -> Result<Self> {
        if !(0.0 < k && k < 1.0) {
            return Err(LabError::BadRadii(format!("collar radius K = {k} not in (0,1)")));
        }
        if !(t.norm() > 0.0 && t.norm() < k * k) {
            return Err(LabError::NeckTooWide(format!(
                "need 0 < |t| < K^2 = {:.3e}, got |t| = {:.3e}",
                k * k,
                t.norm()
            )));
        }
        for (name, map) in [("a", &a), ("b", &b)] {
            for (&m, &coeff) in map {
                if m < -3 {
                    return Err(LabError::InvalidCoefficients(format!(
                        "{name}-side order {m} below -3"
                    )));
                }
                if !(coeff.re.is_finite() && coeff.im.is_finite()) {
                    return Err(LabError::InvalidCoefficients(format!(
                        "{name}-side non-finite coefficient at order {m}"
                    )));
                }
            }
        }
        let a3 = a.get(&-3).copied().unwrap_or_default();
        let b3 = b.get(&-3).copied().unwrap_or_default();
        if (b3 + a3).norm() > 1e-14 * (1.0 + a3.norm()) {
            return Err(LabError::InvalidCoefficients(format!(
                "regular matching requires b_-3 = -a_-3, got a_-3 = {a3}, b_-3 = {b3}"
            )));
        }
        Ok(Self { t, a, b, k })
    }

    /// Symmetric family: `b_m = -a_m` for all m (always satisfies matching).
    pub fn symmetric(t: Complex64, a: BTreeMap<i32, Complex64>, k: f64) -> Result<Self> {
        let b = a.iter().map(|(&m, &v)| (m, -v)).collect();
        Self::new(t, a, b, k)
    }

    #[must_use]
    pub fn t(&self) -> Complex64 {
        self.t
    }

    #[must_use]
    pub fn collar_radius(&self) -> f64 {
        self.k
    }

    /// Neck residue `a_{-3}(t)`.
    #[must_use]
    pub fn residue(&self) -> Complex64 {
        self.a.get(&-3).copied().unwrap_or_default()
    }

    /// A copy with a different neck parameter (same coefficient maps).
    pub fn at_parameter(&self, t: Complex64) -> Result<Self> {
        Self::new(t, self.a.clone(), self.b.clone(), self.k)
    }

    /// Half-width of the collar in the neck coordinate: Re l ranges over
    /// `[-Lambda, Lambda]` with `Lambda = log K - (1/2) log |t|`.
    #[must_use]
    pub fn collar_half_width(&self) -> f64 {
        self.k.ln() - 0.5 * self.t.norm().ln()
    }
}

/// Coefficient of dl^3 of the plumbing differential at neck coordinate
/// l = log z - (1/2) log t:
///
/// ```text
/// U_t(l) = -sum_{n>=1} b_{n-3} t^{n/2} e^{-n l} + a_{-3}
///          + sum_{n>=1} a_{n-3} t^{n/2} e^{n l},
/// ```
///
/// with `t^{1/2}` the principal square root.  The b-series carries the
/// minus sign from `dl' = -dl` on the far side.
pub fn plumbing_differential(d: &PlumbingDatum, ell: Complex64) -> Result<Complex64> {
    let half_width = d.collar_half_width();
    if ell.re.abs() > half_width + 1e-12 {
        return Err(LabError::OutsideCollar(format!(
            "Re l = {} outside [-{half_width}, {half_width}]",
            ell.re
        )));
    }
    let sqrt_t = d.t.sqrt();
    let mut acc = d.residue();
    for (&m, &coeff) in &d.a {
        let n = m + 3;
        if n >= 1 {
            acc += coeff * sqrt_t.powi(n) * (ell * n as f64).exp();
        }
    }
    for (&m, &coeff) in &d.b {
        let n = m + 3;
        if n >= 1 {
            acc -= coeff * sqrt_t.powi(n) * (-ell * n as f64).exp();
        }
    }
    Ok(acc)
}

/// Geometric bound on the truncated tail of the plumbing series past the
/// highest stored order, assuming later coefficients stay below the
/// largest stored modulus.
pub fn plumbing_tail_bound(d: &PlumbingDatum, ell: Complex64) -> Result<f64> {
    let half_width = d.collar_half_width();
    if ell.re.abs() > half_width + 1e-12 {
        return Err(LabError::OutsideCollar(format!(
            "Re l = {} outside [-{half_width}, {half_width}]",
            ell.re
        )));
    }
    let sqrt_abs = d.t.norm().sqrt();
    let mut bound = 0.0f64;
    for (map, direction) in [(&d.a, 1.0), (&d.b, -1.0)] {
        let n_max = map.keys().map(|&m| m + 3).max().unwrap_or(0).max(0);
        let coeff_max = map.values().map(|c| c.norm()).fold(0.0, f64::max);
        let ratio = sqrt_abs * (direction * ell.re).exp();
        if ratio < 1.0 {
            bound += coeff_max * ratio.powi(n_max + 1) / (1.0 - ratio);
        } else {
            bound = f64::INFINITY;
        }
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Finite-difference curvature oracle straight from a factor function.
    fn fd_kappa_of(factor: impl Fn(Complex64) -> f64, z: Complex64, h: f64) -> f64 {
        let phi = |zz: Complex64| factor(zz).ln();
        let lap = (phi(z + c(h, 0.0)) + phi(z - c(h, 0.0)) + phi(z + c(0.0, h))
            + phi(z - c(0.0, h))
            - 4.0 * phi(z))
            / (h * h);
        -0.5 * lap / factor(z)
    }

    #[test]
    fn cusp_factor_frozen_values() {
        let e = std::f64::consts::E;
        assert_relative_eq!(
            cusp_factor(c((-1.0f64).exp(), 0.0)).unwrap(),
            e * e,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            cusp_factor(c(0.0, (-PI).exp())).unwrap(),
            (2.0 * PI).exp() / (PI * PI),
            max_relative = 1e-13
        );
        assert!(cusp_factor(c(0.0, 0.0)).is_err());
        assert!(cusp_factor(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn cusp_curvature_is_minus_one() {
        for &z in &[c(0.3, 0.1), c(-0.2, 0.4), c(0.01, -0.05)] {
            let kappa = fd_kappa_of(|zz| cusp_factor(zz).unwrap(), z, 1e-4 * z.norm());
            assert_relative_eq!(kappa, -1.0, max_relative = 1e-6);
        }
        assert_eq!(curvature(&ConformalMetric::Cusp, c(0.3, 0.1)).unwrap(), -1.0);
    }

    #[test]
    fn flat_factor_frozen_values_and_norm() {
        assert_relative_eq!(flat_factor(2.0, c(1.0, 0.0)).unwrap(), 2.0, max_relative = 1e-15);
        // |U| = |R|/|z|^3 for a pure pole: its metric norm is 1/sqrt 2
        // everywhere, independently of z and R.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0020);
        for _ in 0..100 {
            let r_abs = rng.gen_range(0.1..5.0);
            let z = c(rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
            if z.norm() < 1e-3 {
                continue;
            }
            let e_phi = flat_factor(r_abs, z).unwrap();
            let u_val = c(r_abs, 0.0) * z.powi(-3);
            assert_relative_eq!(norm_u_squared(u_val, e_phi), 0.5, max_relative = 1e-12);
            let kappa = fd_kappa_of(|zz| flat_factor(r_abs, zz).unwrap(), z, 1e-4 * z.norm());
            assert!(kappa.abs() < 2e-7, "flat curvature {kappa:e}");
        }
        assert!(matches!(flat_factor(0.0, c(0.5, 0.0)), Err(LabError::ZeroResidue(_))));
        assert!(matches!(flat_factor(2.0, c(0.0, 0.0)), Err(LabError::ZeroPoint)));
    }

    #[test]
    fn norm_u_squared_examples() {
        assert_relative_eq!(norm_u_squared(c(2.0, 0.0), 2.0), 0.5, max_relative = 1e-15);
        assert_eq!(norm_u_squared(c(0.0, 0.0), 3.0), 0.0);
        let base = norm_u_squared(c(1.0, 2.0), 1.7);
        let scaled = norm_u_squared(c(3.0, 6.0), 1.7);
        assert_relative_eq!(scaled, 9.0 * base, max_relative = 1e-14);
    }

    #[test]
    fn ansatz_zero_residue_is_pure_cusp() {
        let u = CubicLaurent::new(&[(-2, c(1.0, 0.0))]).unwrap();
        let metric = ansatz_metric(&u, 0.1, 0.5).unwrap();
        assert!(matches!(metric, ConformalMetric::Cusp));
    }

    #[test]
    fn ansatz_flat_zone_matches_flat_factor() {
        let u = CubicLaurent::pure_pole(c(2.0, 0.0)).unwrap();
        let metric = ansatz_metric(&u, 0.1, 0.5).unwrap();
        for &z in &[c(0.05, 0.0), c(0.0, -0.03), c(0.02, 0.02)] {
            assert_relative_eq!(
                metric.factor(z).unwrap(),
                flat_factor(2.0, z).unwrap(),
                max_relative = 1e-13
            );
        }
        // Outside the outer radius it is exactly the cusp metric.
        for &z in &[c(0.6, 0.0), c(0.0, 0.8)] {
            assert_relative_eq!(
                metric.factor(z).unwrap(),
                cusp_factor(z).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn ansatz_joins_are_c2() {
        let u = CubicLaurent::pure_pole(c(2.0, 0.0)).unwrap();
        let metric = ansatz_metric(&u, 0.1, 0.5).unwrap();
        // phi as a function of s = log r along a radial line; centered
        // second difference on both sides of each seam must agree.
        let phi_of_s = |s: f64| metric.phi_downstairs(c(s.exp(), 0.0)).unwrap();
        // One-sided second derivatives evaluated AT each seam from both
        // sides (second-order stencils confined to one zone); a C^2 join
        // makes them agree up to O(h^2) truncation.
        let h = 1e-3;
        for seam in [0.1f64.ln(), 0.5f64.ln()] {
            let one_sided = |sgn: f64| {
                (2.0 * phi_of_s(seam) - 5.0 * phi_of_s(seam + sgn * h)
                    + 4.0 * phi_of_s(seam + 2.0 * sgn * h)
                    - phi_of_s(seam + 3.0 * sgn * h))
                    / (h * h)
            };
            let jump = (one_sided(-1.0) - one_sided(1.0)).abs();
            assert!(jump < 5e-3, "second derivative jump {jump:.3e} at seam {seam}");
        }
        // Curvature stays finite and bounded across the interpolation zone.
        let mut max_kappa = 0.0f64;
        for k in 0..=40 {
            let r = 0.1 * (0.5f64 / 0.1).powf(k as f64 / 40.0);
            let kappa = curvature(&metric, c(r, 0.0)).unwrap();
            assert!(kappa.is_finite());
            max_kappa = max_kappa.max(kappa.abs());
        }
        assert!(max_kappa < 50.0, "interpolation curvature bound {max_kappa}");
    }

    #[test]
    fn ansatz_rejects_degenerate_differentials_and_bad_radii() {
        // z^{-3} (1 + 5 z) vanishes at z = -0.2, inside the outer disk.
        let u = CubicLaurent::new(&[(-3, c(1.0, 0.0)), (-2, c(5.0, 0.0))]).unwrap();
        assert!(matches!(
            ansatz_metric(&u, 0.1, 0.5),
            Err(LabError::ZeroOnRing(_))
        ));

        let ok = CubicLaurent::new(&[(-3, c(2.0, 0.0)), (-2, c(0.1, 0.0))]).unwrap();
        assert!(ansatz_metric(&ok, 0.1, 0.5).is_ok());
        assert!(matches!(
            ansatz_metric(&ok, 0.5, 0.1),
            Err(LabError::BadRadii(_))
        ));
        assert!(matches!(
            ansatz_metric(&ok, 0.0, 0.5),
            Err(LabError::BadRadii(_))
        ));
    }

    #[test]
    fn ansatz_asymptotic_defect_vanishes_toward_puncture() {
        let u = CubicLaurent::new(&[(-3, c(2.0, 0.0)), (-2, c(0.3, 0.0))]).unwrap();
        let metric = ansatz_metric(&u, 0.1, 0.5).unwrap();
        let defect = |r: f64| {
            let z = c(r, 0.0);
            let e_phi = metric.factor(z).unwrap();
            let norm2 = norm_u_squared(u.value(z).unwrap(), e_phi);
            let kappa = curvature(&metric, z).unwrap();
            (-4.0 * norm2 + 2.0 + 2.0 * kappa).abs()
        };
        // Inside the flat zone the defect is identically zero.
        let mut prev = defect(0.09);
        assert!(prev < 1e-10, "flat-zone defect {prev:e}");
        for k in 1..6 {
            let d = defect(0.09 * 0.5f64.powi(k));
            assert!(d < 1e-10, "defect {d:e} at radius index {k}");
            prev = prev.max(d);
        }
    }

    #[test]
    fn laurent_serialization_roundtrip() {
        let u = CubicLaurent::new(&[(-3, c(2.0, -1.0)), (0, c(0.25, 0.0)), (2, c(0.0, 1e-3))])
            .unwrap();
        let text = u.to_text();
        let back = CubicLaurent::from_text(&text).unwrap();
        assert_eq!(u.coefficients(), back.coefficients());
        assert!(CubicLaurent::from_text("-4 1 0").is_err());
        assert!(CubicLaurent::from_text("0 1").is_err());
    }

    #[test]
    fn laurent_upstairs_value() {
        // Pure pole: U_w = -i R, constant.
        let u = CubicLaurent::pure_pole(c(2.0, 0.0)).unwrap();
        for &w in &[c(0.0, 3.0), c(1.0, 5.0), c(-2.0, 0.5)] {
            let v = u.upstairs_value(w).unwrap();
            assert!((v - c(0.0, -2.0)).norm() < 1e-13);
        }
        // Perturbed pole: U_w = -i R (1 + 0.1 e^{iw}) for a_{-2} = 0.1 R.
        let up = CubicLaurent::new(&[(-3, c(2.0, 0.0)), (-2, c(0.2, 0.0))]).unwrap();
        let w = c(0.7, 2.0);
        let z = (c(0.0, 1.0) * w).exp();
        let expect = c(0.0, -1.0) * (c(2.0, 0.0) + c(0.2, 0.0) * z);
        assert!((up.upstairs_value(w).unwrap() - expect).norm() < 1e-13);
    }

    #[test]
    fn plumbing_differential_examples() {
        let t = c(1e-4, 0.0);
        let mut a = BTreeMap::new();
        a.insert(-3, c(2.0, 0.0));
        let d = PlumbingDatum::symmetric(t, a.clone(), 0.5).unwrap();
        // Only a_{-3} nonzero: exactly the residue everywhere in the collar.
        assert!((plumbing_differential(&d, c(0.0, 0.3)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);
        assert!((plumbing_differential(&d, c(1.5, 0.0)).unwrap() - c(2.0, 0.0)).norm() < 1e-15);

        // With higher coefficients, t -> 0 at fixed l recovers a_{-3}(0).
        a.insert(-2, c(1.0, 0.0));
        a.insert(0, c(0.0, 0.5));
        let ell = c(0.8, 0.2);
        let mut prev_gap = f64::INFINITY;
        for &tt in &[1e-2, 1e-4, 1e-6] {
            let dt = PlumbingDatum::symmetric(c(tt, 0.0), a.clone(), 0.5).unwrap();
            let gap = (plumbing_differential(&dt, ell).unwrap() - c(2.0, 0.0)).norm();
            assert!(gap < prev_gap, "limit monotone in t");
            prev_gap = gap;
        }
        assert!(prev_gap < 1e-2);

        // Symmetric datum (b_m = -a_m): the series value is even in l.
        let ds = PlumbingDatum::symmetric(c(1e-3, 0.0), a.clone(), 0.5).unwrap();
        let v_plus = plumbing_differential(&ds, c(0.9, 0.4)).unwrap();
        let v_minus = plumbing_differential(&ds, c(-0.9, -0.4)).unwrap();
        assert!((v_plus - v_minus).norm() < 1e-14);

        // Out-of-collar and mismatched residues error.
        assert!(matches!(
            plumbing_differential(&ds, c(5.0, 0.0)),
            Err(LabError::OutsideCollar(_))
        ));
        let mut bad_b = BTreeMap::new();
        bad_b.insert(-3, c(-1.9, 0.0));
        assert!(matches!(
            PlumbingDatum::new(c(1e-3, 0.0), a.clone(), bad_b, 0.5),
            Err(LabError::InvalidCoefficients(_))
        ));
        let tail = plumbing_tail_bound(&ds, c(0.0, 0.0)).unwrap();
        assert!(tail.is_finite() && tail >= 0.0);
    }

    #[test]
    fn grafted_metric_core_and_zones() {
        let t = c(1e-4, 0.0);
        let k = 0.5;
        let metric = grafted_metric(t, k).unwrap();
        let l = -(1e-4f64).ln();
        // Core: e^{phi_up} = (pi / L)^2 and the radial derivative vanishes.
        let core = metric.phi_upstairs(l / 2.0).unwrap();
        assert_relative_eq!(core.exp(), (PI / l).powi(2), max_relative = 1e-13);
        let h = 1e-6;
        let dphi = (metric.phi_upstairs(l / 2.0 + h).unwrap()
            - metric.phi_upstairs(l / 2.0 - h).unwrap())
            / (2.0 * h);
        assert!(dphi.abs() < 1e-8, "phi_w at core: {dphi:e}");
        // Downstairs consistency at |z| = sqrt |t|.
        let z_core = c(1e-2, 0.0);
        assert_relative_eq!(
            metric.factor(z_core).unwrap(),
            (PI / l).powi(2) / 1e-4,
            max_relative = 1e-12
        );

        // Curvature: csc band and cusp zones are exactly hyperbolic; the
        // finite-difference check agrees.
        for &y in &[l / 2.0, l / 2.0 + 1.0, (3.0f64 / k).ln() + 0.2, 0.75] {
            let z = c((-y).exp(), 0.0);
            assert_eq!(curvature(&metric, z).unwrap(), -1.0);
            let kappa_fd = fd_kappa_of(|zz| metric.factor(zz).unwrap(), z, 1e-4 * z.norm());
            assert_relative_eq!(kappa_fd, -1.0, max_relative = 1e-5);
        }
        // Blend zone: the curvature defect comes from the smoothstep
        // derivatives times the cusp-vs-csc gap ~ (pi y / L)^2 / 3, so it
        // is O(1/L^2) with an O(100) constant.  Check the envelope and the
        // decay as the neck pinches.
        let worst_defect = |tt: f64| {
            let m = grafted_metric(c(tt, 0.0), k).unwrap();
            let seams = m.grafted_seams().unwrap();
            let mut worst = 0.0f64;
            for j in 0..=20 {
                let y = seams[0] + (seams[1] - seams[0]) * j as f64 / 20.0;
                let kappa_blend = curvature(&m, c((-y).exp(), 0.0)).unwrap();
                assert!(kappa_blend.is_finite());
                worst = worst.max((kappa_blend + 1.0).abs());
            }
            worst
        };
        let w4 = worst_defect(1e-4);
        let w8 = worst_defect(1e-8);
        assert!(w4 < 200.0 / (l * l), "blend kappa defect {w4} at t = 1e-4");
        assert!(w8 < w4, "defect must shrink as the neck pinches");
        assert!(w8 < 0.4, "defect {w8} at t = 1e-8");

        // Mirror symmetry for real t.
        for &y in &[1.0, 2.5, 4.0] {
            assert_relative_eq!(
                metric.phi_upstairs(y).unwrap(),
                metric.phi_upstairs(l - y).unwrap(),
                max_relative = 1e-12
            );
        }

        assert!(matches!(
            grafted_metric(c(0.04, 0.0), 0.5),
            Err(LabError::NeckTooWide(_))
        ));
    }

    #[test]
    fn conformal_factors_positive_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0021);
        let u = CubicLaurent::new(&[(-3, c(2.0, 0.0)), (-2, c(0.1, 0.0))]).unwrap();
        let ansatz = ansatz_metric(&u, 0.1, 0.5).unwrap();
        let grafted = grafted_metric(c(1e-5, 0.0), 0.5).unwrap();
        let l = -(1e-5f64).ln();
        for _ in 0..100_000 {
            let theta = rng.gen_range(0.0..2.0 * PI);
            let r = rng.gen_range(1e-3..0.95);
            let z = Complex64::from_polar(r, theta);
            assert!(cusp_factor(z).unwrap() > 0.0);
            assert!(flat_factor(2.0, z).unwrap() > 0.0);
            assert!(ansatz.factor(z).unwrap() > 0.0);
            let y = rng.gen_range((1.0 / 0.5f64).ln()..l - (1.0 / 0.5f64).ln());
            assert!(grafted.phi_upstairs(y).unwrap().exp() > 0.0);
        }
    }
}
