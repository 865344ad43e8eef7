//! Residue spectra of cubic-differential ends.
//!
//! A pole of order 3 with residue R determines the characteristic cubic
//!
//! ```text
//! chi(l) = l^3 + p l + q,   p = -3 (|R|^2 / 4)^(1/3),   q = -Im R,
//! ```
//!
//! whose roots l1 >= l2 >= l3 (real, zero sum) are the log-eigenvalues of
//! the end holonomy: the holonomy spectrum is (e^{2 pi l1}, e^{2 pi l2},
//! e^{2 pi l3}).  The discriminant-like quantity
//! `D = (Im R)^2 / 4 - |R|^2 / 4 <= 0` vanishes exactly when a root is
//! repeated, i.e. when Re R = 0.
//!
//! The normalized cube root eta with eta^3 = -i R / 2 drives the direction
//! asymptotics: along the ray of angle iota the frame generator has
//! eigenvalues mu_j = 2 Re(eta e^{i(iota + d_j)}), d = (0, -2pi/3, +2pi/3),
//! paired index-by-index with the boundary exponents
//! rho_j = 2 Re(eta e^{i d_j}).

use crate::error::{LabError, Result};
use crate::projlin::EndClass;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Which vertical end of the twist line a hyperbolic family limits to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwistSign {
    PlusInfinity,
    MinusInfinity,
}

impl std::fmt::Display for TwistSign {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TwistSign::PlusInfinity => "plus_infinity",
            TwistSign::MinusInfinity => "minus_infinity",
        })
    }
}

/// Angular offsets pairing direction eigenvalues with the eigencolumns
/// (1,1,1), (1, w^2, w), (1, w, w^2), w = e^{2 pi i / 3}.
pub const DELTA: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

/// Coefficients (p, q) of the characteristic cubic of residue R.
#[must_use]
pub fn chi_coefficients(r: Complex64) -> (f64, f64) {
    let r2 = r.norm_sqr();
    (-3.0 * (r2 / 4.0).cbrt(), -r.im)
}

/// `D = ((Im R)^2 - |R|^2) / 4`; zero exactly when Re R = 0.
#[must_use]
pub fn discriminant(r: Complex64) -> f64 {
    (r.im * r.im - r.norm_sqr()) / 4.0
}

/// Roots of a depressed cubic `l^3 + p l + q` known to have three real
/// roots (casus irreducibilis), descending order, with a snap to the exact
/// double-root factorization when the repeated-root locus is within
/// `snap` of the coefficients.
fn depressed_roots(p: f64, q: f64, snap: f64) -> [f64; 3] {
    if p >= 0.0 {
        // Only reachable at p = 0 (zero residue): triple root at zero.
        return [0.0; 3];
    }
    // Cardano discriminant surrogate: -4 p^3 - 27 q^2 >= 0 here, vanishing
    // on the double-root locus.  The residue parameterization gives
    // -4 p^3 - 27 q^2 = 27 (|R|^2 - (Im R)^2) = -108 D.
    let disc = -4.0 * p.powi(3) - 27.0 * q * q;
    if disc.abs() <= 27.0 * snap {
        let d = -(3.0 * q) / (2.0 * p); // double root
        let s = -2.0 * d; // simple root
        let mut roots = if d >= s { [d, d, s] } else { [s, d, d] };
        // Exact zero-sum by construction; normalize -0.0.
        for v in &mut roots {
            if *v == 0.0 {
                *v = 0.0;
            }
        }
        return roots;
    }
    let m = 2.0 * (-p / 3.0).sqrt();
    let c3 = (-4.0 * q / m.powi(3)).clamp(-1.0, 1.0);
    let phi = c3.acos() / 3.0;
    let mut roots = [0.0f64; 3];
    for (k, slot) in roots.iter_mut().enumerate() {
        *slot = m * (phi - 2.0 * PI * k as f64 / 3.0).cos();
    }
    // Two Newton polishes per root; the cubic is well-conditioned away
    // from the (snapped) double-root locus.
    for v in &mut roots {
        for _ in 0..2 {
            let f = v.powi(3) + p * *v + q;
            let df = 3.0 * *v * *v + p;
            if df.abs() > 1e-12 * (1.0 + p.abs()) {
                *v -= f / df;
            }
        }
    }
    roots.sort_by(|a, b| b.partial_cmp(a).expect("real roots"));
    // Recenter so the zero-sum invariant holds to machine precision.
    let shift = (roots[0] + roots[1] + roots[2]) / 3.0;
    for v in &mut roots {
        *v -= shift;
    }
    roots
}

/// Log-eigenvalues of the end holonomy for residue `r`, descending.
#[must_use]
pub fn chi_roots(r: Complex64) -> [f64; 3] {
    let (p, q) = chi_coefficients(r);
    let snap = 1e-14 * (1.0 + r.norm_sqr());
    depressed_roots(p, q, snap)
}

/// End type from the residue alone: zero residue is parabolic, purely
/// imaginary (within a snap of `1e-14 (1 + |R|)`) quasi-hyperbolic, and
/// anything else hyperbolic.
#[must_use]
pub fn classify_residue(r: Complex64) -> EndClass {
    if r.norm() == 0.0 {
        EndClass::Parabolic
    } else if r.re.abs() <= 1e-14 * (1.0 + r.norm()) {
        EndClass::QuasiHyperbolic
    } else {
        EndClass::Hyperbolic
    }
}

/// The residue symmetry `R -> -conj(R)` preserves |R| and Im R, hence the
/// whole characteristic data.  Returns true when the computed class and
/// roots agree to `1e-12 (1 + |R|)`.
#[must_use]
pub fn class_symmetry_check(r: Complex64) -> bool {
    let mirror = Complex64::new(-r.re, r.im);
    if classify_residue(r) != classify_residue(mirror) {
        return false;
    }
    let a = chi_roots(r);
    let b = chi_roots(mirror);
    let tol = 1e-12 * (1.0 + r.norm());
    a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= tol)
}

/// Branch cut normalization: `xi = (2i / R)^{1/3}` via the principal cube
/// root, so `arg xi` lies in `(-pi/3, pi/3]` and carries the sign of Re R.
pub fn xi_branch(r: Complex64) -> Result<Complex64> {
    if r.norm() == 0.0 {
        return Err(LabError::ZeroResidue(
            "branch normalization needs a nonzero residue".into(),
        ));
    }
    Ok((Complex64::new(0.0, 2.0) / r).powf(1.0 / 3.0))
}

/// The reciprocal branch `eta = 1 / xi`, satisfying `eta^3 = -i R / 2`.
/// This is the factor that rescales the end coordinate so the cubic
/// differential becomes `2 dnu^3`.
pub fn eta_branch(r: Complex64) -> Result<Complex64> {
    Ok(xi_branch(r)?.inv())
}

/// Frame-generator eigenvalues along the ray of angle `iota`, in
/// eigencolumn order (not sorted): `mu_j = 2 Re(eta e^{i(iota + d_j)})`.
///
/// Sorted descending they coincide with `chi_roots(R e^{3 i iota})` — the
/// ray of angle iota sees the effective residue `R e^{3 i iota}`.
pub fn direction_eigenvalues(r: Complex64, iota: f64) -> Result<[f64; 3]> {
    let eta = eta_branch(r)?;
    let mut mu = [0.0f64; 3];
    for (slot, delta) in mu.iter_mut().zip(DELTA) {
        *slot = 2.0 * (eta * Complex64::from_polar(1.0, iota + delta)).re;
    }
    Ok(mu)
}

/// Boundary exponents `rho_j = 2 Re(eta e^{i d_j})` (the iota = 0 case);
/// sorted descending they equal `chi_roots(R)`.
pub fn boundary_eigenvalues(r: Complex64) -> Result<[f64; 3]> {
    direction_eigenvalues(r, 0.0)
}

/// Ray angles in the open interval (0, pi) along which the top pair of
/// direction eigenvalues ties.  Always contains `pi/3 + arg xi`; contains
/// the second ray `pi + arg xi` exactly when Re R < 0.
pub fn tie_rays(r: Complex64) -> Result<Vec<f64>> {
    let arg_xi = xi_branch(r)?.arg();
    Ok([PI / 3.0 + arg_xi, PI + arg_xi]
        .into_iter()
        .filter(|&iota| iota > 0.0 && iota < PI)
        .collect())
}

/// Vertical twist sign of a hyperbolic residue; `None` when the sign is
/// undefined (zero or purely imaginary residue).
///
/// Re R > 0: the single interior tie ray's tied pair spans the attracting
/// and repelling vertices, so rays accumulate on the principal boundary
/// segment and the family escapes to the minus end of the twist line.
/// Re R < 0: two interior tie rays accumulate on the two non-principal
/// segments and the family escapes to the plus end.
#[must_use]
pub fn twist_sign(r: Complex64) -> Option<TwistSign> {
    match classify_residue(r) {
        EndClass::Hyperbolic => Some(if r.re > 0.0 {
            TwistSign::MinusInfinity
        } else {
            TwistSign::PlusInfinity
        }),
        _ => None,
    }
}

/// All residues whose characteristic roots realize the given zero-sum real
/// triple: two (opposite real parts) when the triple is distinct, one
/// (purely imaginary) when a root repeats, `{0}` for the zero triple.
pub fn residues_for_spectrum(lambda: &[f64; 3]) -> Result<Vec<Complex64>> {
    if lambda.iter().any(|v| !v.is_finite()) {
        return Err(LabError::InvalidSpectrum("non-finite entry".into()));
    }
    let scale = lambda.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let sum: f64 = lambda.iter().sum();
    if sum.abs() > 1e-9 * (1.0 + scale) {
        return Err(LabError::InvalidSpectrum(format!(
            "eigenvalue triple must sum to zero, got {sum:.3e}"
        )));
    }
    // Recenter, then read off the elementary symmetric functions.  For a
    // zero-sum real triple e2 = -(l1^2 + l2^2 + l3^2)/2 <= 0 automatically,
    // and |e3| <= 2 (-e2 / 3)^{3/2} by the double-root bound, so every
    // such triple is realized.
    let shift = sum / 3.0;
    let l: Vec<f64> = lambda.iter().map(|v| v - shift).collect();
    let e2 = l[0] * l[1] + l[0] * l[2] + l[1] * l[2];
    let e3 = l[0] * l[1] * l[2];
    let r_abs = 2.0 * (-e2 / 3.0).max(0.0).powf(1.5);
    if r_abs <= 1e-15 * (1.0 + scale.powi(3)) {
        return Ok(vec![Complex64::new(0.0, 0.0)]);
    }
    let im = e3;
    let re = (r_abs * r_abs - im * im).max(0.0).sqrt();
    if re <= 1e-13 * (1.0 + r_abs) {
        Ok(vec![Complex64::new(0.0, im)])
    } else {
        Ok(vec![Complex64::new(re, im), Complex64::new(-re, im)])
    }
}

/// Full spectral report for one residue.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub residue: Complex64,
    /// Log-eigenvalues, descending.
    pub lambda: [f64; 3],
    /// Holonomy eigenvalues `e^{2 pi lambda}`, descending; product 1.
    pub alpha: [f64; 3],
    pub class: EndClass,
    pub discriminant: f64,
    pub xi: Complex64,
    /// First tie ray, `pi/3 + arg xi`, always in (0, pi).
    pub iota: f64,
    /// Second tie ray `pi + arg xi`, present exactly when Re R < 0.
    pub iota_hat: Option<f64>,
    /// Direction eigenvalues at the first tie ray, eigencolumn order.
    pub mu: [f64; 3],
    /// Boundary exponents, eigencolumn order.
    pub rho: [f64; 3],
    pub twist: Option<TwistSign>,
}

/// Assemble the [`SpectrumReport`] of a nonzero residue.
pub fn spectrum_report(r: Complex64) -> Result<SpectrumReport> {
    let lambda = chi_roots(r);
    let xi = xi_branch(r)?;
    let rays = tie_rays(r)?;
    let iota = rays[0];
    let iota_hat = rays.get(1).copied();
    Ok(SpectrumReport {
        residue: r,
        lambda,
        alpha: lambda.map(|l| (2.0 * PI * l).exp()),
        class: classify_residue(r),
        discriminant: discriminant(r),
        xi,
        iota,
        iota_hat,
        mu: direction_eigenvalues(r, iota)?,
        rho: boundary_eigenvalues(r)?,
        twist: twist_sign(r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SQRT3: f64 = 1.732_050_807_568_877_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_triple(got: [f64; 3], want: [f64; 3], tol: f64) {
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= tol, "got {got:?}, want {want:?}");
        }
    }

    #[test]
    fn chi_roots_frozen_examples() {
        assert_triple(chi_roots(c(2.0, 0.0)), [SQRT3, 0.0, -SQRT3], 1e-14);
        assert_triple(chi_roots(c(-2.0, 0.0)), [SQRT3, 0.0, -SQRT3], 1e-14);
        assert_triple(chi_roots(c(0.0, 2.0)), [2.0, -1.0, -1.0], 1e-14);
        assert_triple(chi_roots(c(0.0, -2.0)), [1.0, 1.0, -2.0], 1e-14);
        assert_triple(chi_roots(c(0.0, 0.0)), [0.0, 0.0, 0.0], 0.0);
    }

    #[test]
    fn discriminant_frozen_examples() {
        assert_relative_eq!(discriminant(c(2.0, 0.0)), -1.0, max_relative = 1e-15);
        assert_relative_eq!(discriminant(c(0.0, 2.0)), 0.0, epsilon = 1e-15);
        assert!(discriminant(c(1.0, 1.0)) < 0.0);
    }

    #[test]
    fn chi_roots_satisfy_cubic_and_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0010);
        for _ in 0..500 {
            let r = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let (p, q) = chi_coefficients(r);
            let roots = chi_roots(r);
            assert!(roots[0] >= roots[1] && roots[1] >= roots[2]);
            let sum: f64 = roots.iter().sum();
            assert!(sum.abs() <= 1e-12 * (1.0 + r.norm()), "zero sum, got {sum:e}");
            for l in roots {
                let residual = l.powi(3) + p * l + q;
                assert!(
                    residual.abs() <= 1e-10 * (1.0 + r.norm_sqr()),
                    "chi({l}) = {residual:e} for R = {r}"
                );
            }
            // Elementary symmetric functions reproduce the coefficients.
            let e2 = roots[0] * roots[1] + roots[0] * roots[2] + roots[1] * roots[2];
            let e3 = roots[0] * roots[1] * roots[2];
            assert_relative_eq!(e2, p, max_relative = 1e-9, epsilon = 1e-10);
            assert_relative_eq!(e3, -q, max_relative = 1e-9, epsilon = 1e-10);
        }
    }

    #[test]
    fn classify_residue_with_snap() {
        assert_eq!(classify_residue(c(0.0, 0.0)), EndClass::Parabolic);
        assert_eq!(classify_residue(c(0.0, 2.0)), EndClass::QuasiHyperbolic);
        assert_eq!(classify_residue(c(1e-20, 2.0)), EndClass::QuasiHyperbolic);
        assert_eq!(classify_residue(c(2.0, 0.0)), EndClass::Hyperbolic);
        assert_eq!(classify_residue(c(-1.0, 5.0)), EndClass::Hyperbolic);
    }

    #[test]
    fn class_symmetry_holds_on_random_residues() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0011);
        for _ in 0..200 {
            let r = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            assert!(class_symmetry_check(r), "symmetry failed for {r}");
        }
    }

    #[test]
    fn xi_branch_frozen_values_and_range() {
        assert!((xi_branch(c(0.0, 2.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let xi2 = xi_branch(c(2.0, 0.0)).unwrap();
        assert!((xi2 - Complex64::from_polar(1.0, PI / 6.0)).norm() < 1e-15);
        let xim2 = xi_branch(c(-2.0, 0.0)).unwrap();
        assert!((xim2 - Complex64::from_polar(1.0, -PI / 6.0)).norm() < 1e-15);
        assert!(matches!(
            xi_branch(c(0.0, 0.0)),
            Err(LabError::ZeroResidue(_))
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0012);
        for _ in 0..300 {
            let r = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            if r.norm() < 1e-3 {
                continue;
            }
            let xi = xi_branch(r).unwrap();
            assert!((xi.powi(3) * r - c(0.0, 2.0)).norm() < 1e-12 * (1.0 + r.norm()));
            let arg = xi.arg();
            assert!(arg > -PI / 3.0 - 1e-15 && arg <= PI / 3.0 + 1e-15);
            if r.re.abs() > 1e-6 {
                assert_eq!(arg > 0.0, r.re > 0.0, "sign of arg xi tracks Re R");
            }
        }
    }

    #[test]
    fn eta_branch_cubes_to_minus_i_r_half() {
        let eta2 = eta_branch(c(2.0, 0.0)).unwrap();
        assert!((eta2 - Complex64::from_polar(1.0, -PI / 6.0)).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0013);
        for _ in 0..300 {
            let r = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            if r.norm() < 1e-3 {
                continue;
            }
            let eta = eta_branch(r).unwrap();
            let want = c(0.0, -0.5) * r;
            assert!((eta.powi(3) - want).norm() < 1e-13 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn direction_eigenvalues_frozen_examples() {
        // R = 2: eta = e^{-i pi/6}; the ray iota = pi/6 sees effective
        // residue 2 e^{i pi/2} = 2i with eigenvalues (2, -1, -1).
        assert_triple(
            direction_eigenvalues(c(2.0, 0.0), PI / 6.0).unwrap(),
            [2.0, -1.0, -1.0],
            1e-14,
        );
        // Tie ray for R = 2 is iota = pi/2: top pair ties at 1.
        assert_triple(
            direction_eigenvalues(c(2.0, 0.0), PI / 2.0).unwrap(),
            [1.0, 1.0, -2.0],
            1e-14,
        );
        // Boundary exponents keep eigencolumn order (not sorted).
        assert_triple(
            boundary_eigenvalues(c(2.0, 0.0)).unwrap(),
            [SQRT3, -SQRT3, 0.0],
            1e-14,
        );
        assert_triple(
            boundary_eigenvalues(c(-2.0, 0.0)).unwrap(),
            [SQRT3, 0.0, -SQRT3],
            1e-14,
        );
        assert_triple(
            boundary_eigenvalues(c(0.0, -2.0)).unwrap(),
            [1.0, -2.0, 1.0],
            1e-14,
        );
    }

    #[test]
    fn direction_eigenvalues_match_effective_residue() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0014);
        for _ in 0..300 {
            let r = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            if r.norm() < 1e-2 {
                continue;
            }
            let iota = rng.gen_range(0.0..PI);
            let mut mu = direction_eigenvalues(r, iota).unwrap();
            mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let effective = r * Complex64::from_polar(1.0, 3.0 * iota);
            assert_triple(mu, chi_roots(effective), 1e-9 * (1.0 + r.norm()));
            let sum: f64 = mu.iter().sum();
            assert!(sum.abs() < 1e-13 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn boundary_eigenvalues_sorted_match_chi_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0015);
        for _ in 0..200 {
            let r = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            if r.norm() < 1e-2 {
                continue;
            }
            let mut rho = boundary_eigenvalues(r).unwrap();
            rho.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert_triple(rho, chi_roots(r), 1e-10 * (1.0 + r.norm()));
        }
    }

    #[test]
    fn tie_rays_count_and_tie_structure() {
        let rays2 = tie_rays(c(2.0, 0.0)).unwrap();
        assert_eq!(rays2.len(), 1);
        assert_relative_eq!(rays2[0], PI / 2.0, max_relative = 1e-14);

        let raysm2 = tie_rays(c(-2.0, 0.0)).unwrap();
        assert_eq!(raysm2.len(), 2);
        assert_relative_eq!(raysm2[0], PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(raysm2[1], 5.0 * PI / 6.0, max_relative = 1e-14);

        let rays2i = tie_rays(c(0.0, 2.0)).unwrap();
        assert_eq!(rays2i.len(), 1);
        assert_relative_eq!(rays2i[0], PI / 3.0, max_relative = 1e-14);

        // At every tie ray the two largest direction eigenvalues coincide.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0016);
        for _ in 0..200 {
            let r = c(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
            if r.norm() < 1e-2 {
                continue;
            }
            for iota in tie_rays(r).unwrap() {
                let mut mu = direction_eigenvalues(r, iota).unwrap();
                mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
                assert!(
                    (mu[0] - mu[1]).abs() < 1e-12 * (1.0 + r.norm()),
                    "top pair must tie at iota = {iota} for {r}"
                );
            }
        }
    }

    #[test]
    fn twist_sign_frozen_examples() {
        assert_eq!(twist_sign(c(1.0, 0.0)), Some(TwistSign::MinusInfinity));
        assert_eq!(twist_sign(c(2.0, 0.0)), Some(TwistSign::MinusInfinity));
        assert_eq!(twist_sign(c(-2.0, 0.0)), Some(TwistSign::PlusInfinity));
        assert_eq!(twist_sign(c(-1.0, 5.0)), Some(TwistSign::PlusInfinity));
        assert_eq!(twist_sign(c(0.0, 3.0)), None);
        assert_eq!(twist_sign(c(0.0, 0.0)), None);
    }

    #[test]
    fn residues_for_spectrum_frozen_examples() {
        let qh = residues_for_spectrum(&[2.0, -1.0, -1.0]).unwrap();
        assert_eq!(qh.len(), 1);
        assert!((qh[0] - c(0.0, 2.0)).norm() < 1e-12);

        let hyp = residues_for_spectrum(&[SQRT3, 0.0, -SQRT3]).unwrap();
        assert_eq!(hyp.len(), 2);
        assert!((hyp[0] - c(2.0, 0.0)).norm() < 1e-12);
        assert!((hyp[1] - c(-2.0, 0.0)).norm() < 1e-12);

        let zero = residues_for_spectrum(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(zero.len(), 1);
        assert_eq!(zero[0], c(0.0, 0.0));

        assert!(matches!(
            residues_for_spectrum(&[1.0, 1.0, 1.0]),
            Err(LabError::InvalidSpectrum(_))
        ));
        assert!(matches!(
            residues_for_spectrum(&[f64::NAN, 0.0, 0.0]),
            Err(LabError::InvalidSpectrum(_))
        ));
    }

    #[test]
    fn residues_roundtrip_through_chi_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0017);
        for _ in 0..300 {
            let l1: f64 = rng.gen_range(0.3..3.0);
            let l2: f64 = rng.gen_range(-l1 / 2.0..l1 * 0.99);
            let triple_raw = [l1, l2, -l1 - l2];
            let mut triple = triple_raw;
            triple.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let residues = residues_for_spectrum(&triple).unwrap();
            let distinct =
                (triple[0] - triple[1]).abs() > 1e-9 && (triple[1] - triple[2]).abs() > 1e-9;
            if distinct {
                assert_eq!(residues.len(), 2, "distinct triple has two residues");
            }
            for r in residues {
                assert_triple(chi_roots(r), triple, 1e-8 * (1.0 + triple[0]));
            }
        }
    }

    #[test]
    fn spectrum_report_invariants() {
        let rep = spectrum_report(c(2.0, 0.0)).unwrap();
        assert_eq!(rep.class, EndClass::Hyperbolic);
        assert_triple(rep.lambda, [SQRT3, 0.0, -SQRT3], 1e-14);
        assert_relative_eq!(rep.alpha[0], (2.0 * PI * SQRT3).exp(), max_relative = 1e-12);
        assert_relative_eq!(rep.discriminant, -1.0, max_relative = 1e-15);
        assert_relative_eq!(rep.iota, PI / 2.0, max_relative = 1e-14);
        assert!(rep.iota_hat.is_none());
        assert_triple(rep.mu, [1.0, 1.0, -2.0], 1e-13);
        assert_triple(rep.rho, [SQRT3, -SQRT3, 0.0], 1e-14);
        assert_eq!(rep.twist, Some(TwistSign::MinusInfinity));

        let repm = spectrum_report(c(-2.0, 0.0)).unwrap();
        assert!(repm.iota_hat.is_some());
        assert_eq!(repm.twist, Some(TwistSign::PlusInfinity));

        // Product of holonomy eigenvalues is 1 for random residues.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0018);
        for _ in 0..100 {
            let r = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            if r.norm() < 1e-2 {
                continue;
            }
            let rep = spectrum_report(r).unwrap();
            let product: f64 = rep.alpha.iter().product();
            assert_relative_eq!(product, 1.0, max_relative = 1e-10);
            let sum: f64 = rep.lambda.iter().sum();
            assert!(sum.abs() <= 1e-12 * (1.0 + r.norm()));
        }
    }
}
