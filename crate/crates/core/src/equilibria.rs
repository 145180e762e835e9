//! Equilibria O and Z of the free system, their spectra and invariant
//! manifolds, the Hopf locus and the explicit periodic orbit for `a = b`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pl_core::{jacobian, State, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ManifoldDescriptor {
    /// The plane `x3 = 0`.
    PlaneX30,
    /// The open segment of the x3-axis between O and Z.
    X3AxisSegment,
    /// The positive x3-axis.
    X3AxisPositive,
    /// Two-dimensional manifold tangent to the `x1,x2` plane at Z.
    TangentPlaneAtZ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EquilibriumId {
    O,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumInfo {
    pub id: EquilibriumId,
    pub location: State,
    /// Complex pair first (positive imaginary part leading), then the real one.
    pub eigenvalues: [Complex64; 3],
    pub stable_dim: usize,
    pub unstable_dim: usize,
    pub stable_manifold: Option<ManifoldDescriptor>,
    pub unstable_manifold: Option<ManifoldDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticOrbit {
    pub rho0: f64,
    pub period: f64,
    /// Height of the orbit, equal to `h`.
    pub x3: f64,
}

impl AnalyticOrbit {
    /// Point of the orbit at time `t` from `(rho0, 0, h)`.
    pub fn at(&self, t: f64) -> State {
        let w = 2.0 * PI / self.period;
        Vector3::new(self.rho0 * (w * t).cos(), self.rho0 * (w * t).sin(), self.x3)
    }
}

/// Agreement required between closed-form and numeric spectra.
pub const SPECTRUM_TOL: f64 = 1e-10;

fn dims(eig: &[Complex64; 3]) -> (usize, usize) {
    let stable = eig.iter().filter(|l| l.re < 0.0).count();
    let unstable = eig.iter().filter(|l| l.re > 0.0).count();
    (stable, unstable)
}

/// Closed-form data for O and Z.
pub fn analyze_equilibria(p: &SystemParams) -> (EquilibriumInfo, EquilibriumInfo) {
    let (h2, r2, w) = (p.h * p.h, p.r * p.r, p.omega);

    let eo = [Complex64::new(-h2, w), Complex64::new(-h2, -w), Complex64::new(r2, 0.0)];
    let (so, uo) = dims(&eo);
    let o = EquilibriumInfo {
        id: EquilibriumId::O,
        location: Vector3::zeros(),
        eigenvalues: eo,
        stable_dim: so,
        unstable_dim: uo,
        stable_manifold: (so == 2).then_some(ManifoldDescriptor::PlaneX30),
        unstable_manifold: Some(ManifoldDescriptor::X3AxisSegment),
    };

    let g = r2 / p.c - h2;
    let ez = [Complex64::new(g, w), Complex64::new(g, -w), Complex64::new(-2.0 * r2, 0.0)];
    let (sz, uz) = dims(&ez);
    let z = EquilibriumInfo {
        id: EquilibriumId::Z,
        location: Vector3::new(0.0, 0.0, p.r / p.c.sqrt()),
        eigenvalues: ez,
        stable_dim: sz,
        unstable_dim: uz,
        stable_manifold: Some(ManifoldDescriptor::X3AxisPositive),
        unstable_manifold: (uz == 2).then_some(ManifoldDescriptor::TangentPlaneAtZ),
    };
    (o, z)
}

/// Numeric eigenvalues of the Jacobian at `x`, in no particular order.
pub fn numeric_spectrum(p: &SystemParams, x: &State) -> [Complex64; 3] {
    let ev = jacobian(p, x).complex_eigenvalues();
    [ev[0], ev[1], ev[2]]
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Largest deviation between closed-form and numeric spectra at O and Z,
/// under the best matching of eigenvalues.
pub fn spectrum_discrepancy(p: &SystemParams) -> f64 {
    let (o, z) = analyze_equilibria(p);
    [o, z]
        .iter()
        .map(|e| {
            let num = numeric_spectrum(p, &e.location);
            PERMUTATIONS
                .iter()
                .map(|perm| (0..3).map(|i| (e.eigenvalues[i] - num[perm[i]]).norm()).fold(0.0, f64::max))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Value of `h` at which the complex pair at Z crosses the imaginary axis.
pub fn hopf_threshold(p: &SystemParams) -> f64 {
    p.hopf_threshold()
}

/// The circle of radius `rho0` at height `h` that exists when `a = b`.
pub fn analytic_orbit(p: &SystemParams) -> Result<AnalyticOrbit> {
    if p.a != p.b {
        return Err(Error::NotApplicable("analytic orbit requires a = b".into()));
    }
    let q = p.r * p.r - p.c * p.h * p.h;
    if q <= 0.0 {
        return Err(Error::NotApplicable("analytic orbit requires r^2 - c h^2 > 0".into()));
    }
    Ok(AnalyticOrbit { rho0: (q / p.a).sqrt(), period: p.period(), x3: p.h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{flow, IntegratorConfig};
    use crate::pl_core::vector_field;

    fn base() -> SystemParams {
        SystemParams::new(1.0, 1.0, 1.0, 0.25, 3.0, 1.0).unwrap()
    }

    fn close(a: Complex64, re: f64, im: f64) -> bool {
        (a.re - re).abs() < 1e-14 && (a.im - im).abs() < 1e-14
    }

    #[test]
    fn closed_form_spectra() {
        let (o, z) = analyze_equilibria(&base());
        assert!(close(o.eigenvalues[0], -0.0625, 1.0));
        assert!(close(o.eigenvalues[1], -0.0625, -1.0));
        assert!(close(o.eigenvalues[2], 9.0, 0.0));
        assert_eq!(z.location, Vector3::new(0.0, 0.0, 3.0));
        assert!(close(z.eigenvalues[0], 8.9375, 1.0));
        assert!(close(z.eigenvalues[2], -18.0, 0.0));
        assert_eq!((o.stable_dim, o.unstable_dim), (2, 1));
        assert_eq!((z.stable_dim, z.unstable_dim), (1, 2));
        assert_eq!(o.stable_manifold, Some(ManifoldDescriptor::PlaneX30));
        assert_eq!(z.unstable_manifold, Some(ManifoldDescriptor::TangentPlaneAtZ));
    }

    #[test]
    fn numeric_agreement() {
        for p in [
            base(),
            SystemParams::new(1.2, 1.0, 1.0, 0.25, 3.0, 1.0).unwrap(),
            SystemParams::new(0.5, 2.0, 4.0, 0.7, 1.3, 2.5).unwrap(),
            SystemParams::new(1.0, 1.0, 4.0, 0.5, 1.0, 1.0).unwrap(),
        ] {
            assert!(spectrum_discrepancy(&p) < SPECTRUM_TOL, "{p}");
        }
    }

    #[test]
    fn hopf_locus() {
        let p = SystemParams::new(1.0, 1.0, 4.0, 0.5, 1.0, 1.0).unwrap();
        let (_, z) = analyze_equilibria(&p);
        assert_eq!(z.location[2], 0.5);
        assert_eq!(z.eigenvalues[0].re, 0.0);
        assert_eq!(z.unstable_dim, 0);
        assert_eq!(z.unstable_manifold, None);
        assert_eq!(hopf_threshold(&base()), 3.0);
        assert_eq!(hopf_threshold(&p), 0.5);
    }

    #[test]
    fn unstable_dim_follows_sign() {
        for (c, h, r) in [(1.0, 0.25, 3.0), (2.0, 1.0, 1.0), (1.0, 2.0, 1.9), (0.5, 1.0, 0.8)] {
            let p = SystemParams::new(1.0, 1.0, c, h, r, 1.0).unwrap();
            let (_, z) = analyze_equilibria(&p);
            assert_eq!(z.unstable_dim == 2, r * r / c > h * h);
        }
    }

    #[test]
    fn equilibria_are_fixed() {
        let p = base();
        let (o, z) = analyze_equilibria(&p);
        assert_eq!(vector_field(&p, &o.location).norm(), 0.0);
        assert!(vector_field(&p, &z.location).norm() < 1e-12);
    }

    #[test]
    fn analytic_orbit_values() {
        let o = analytic_orbit(&base()).unwrap();
        assert!((o.rho0 - 8.9375f64.sqrt()).abs() < 1e-15);
        assert!((o.period - 2.0 * PI).abs() < 1e-15);
        let p = SystemParams::new(1.0, 1.0, 1.0, 0.25, 1.0, 1.0).unwrap();
        assert!((analytic_orbit(&p).unwrap().rho0 - 0.9375f64.sqrt()).abs() < 1e-15);
        let edge = SystemParams::new(1.0, 1.0, 1.0, 3.0, 3.0, 1.0).unwrap();
        assert!(analytic_orbit(&edge).is_err());
        let near = SystemParams::new(1.0, 1.0, 1.0, 3.0 - 1e-9, 3.0, 1.0).unwrap();
        assert!(analytic_orbit(&near).unwrap().rho0 < 1e-3);
        let asym = SystemParams::new(1.2, 1.0, 1.0, 0.25, 3.0, 1.0).unwrap();
        assert!(matches!(analytic_orbit(&asym), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn analytic_orbit_is_a_solution() {
        let p = base();
        let o = analytic_orbit(&p).unwrap();
        let cfg = IntegratorConfig::default();
        let end = flow(&p, &o.at(0.0), o.period, &cfg).unwrap();
        assert!((end - o.at(0.0)).norm() < 1e-7);
        // the parametrisation solves the equations pointwise
        for k in 0..50 {
            let t = o.period * k as f64 / 50.0;
            let w = p.omega;
            let deriv = Vector3::new(-o.rho0 * w * (w * t).sin(), o.rho0 * w * (w * t).cos(), 0.0);
            assert!((deriv - vector_field(&p, &o.at(t))).norm() < 1e-12);
        }
    }

    #[test]
    fn plane_flows_to_origin_and_axis_to_z() {
        let p = base();
        let cfg = IntegratorConfig::default();
        let end = flow(&p, &Vector3::new(1.0, -0.5, 0.0), 200.0, &cfg).unwrap();
        assert!(end.norm() < 1e-4);
        let end = flow(&p, &Vector3::new(0.0, 0.0, 1e-3), 10.0, &cfg).unwrap();
        assert!((end - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-9);
    }
}
