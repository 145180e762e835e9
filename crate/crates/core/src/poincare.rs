//! Return map on the half-plane `{x2 = 0, x1 > 0, x3 > 0}`.
//!
//! Since the polar angle advances at the constant rate `omega`, the first
//! return to the half-plane happens after exactly `2 pi / omega`, so the map
//! is a fixed-time flow and needs no event location.

use nalgebra::{Matrix2, Matrix3, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{flow, flow_with_sensitivity, flow_with_variational, IntegratorConfig};
use crate::pl_core::{vector_field, Param, State, SystemParams};

/// Bound on the discarded x2-row of the monodromy, relative to its size.
const SECTION_ROW_TOL: f64 = 1e-6;

/// Point `(x1, 0, x3)` of the section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint {
    pub x1: f64,
    pub x3: f64,
}

impl SectionPoint {
    pub fn new(x1: f64, x3: f64) -> Result<Self> {
        if x1 > 0.0 && x3 > 0.0 && x1.is_finite() && x3.is_finite() {
            Ok(SectionPoint { x1, x3 })
        } else {
            Err(Error::LeftSection { x1, x3 })
        }
    }

    pub fn from_vector(v: &Vector2<f64>) -> Result<Self> {
        Self::new(v[0], v[1])
    }

    pub fn to_vector(&self) -> Vector2<f64> {
        Vector2::new(self.x1, self.x3)
    }

    pub fn to_state(&self) -> State {
        State::new(self.x1, 0.0, self.x3)
    }

    pub fn distance(&self, other: &SectionPoint) -> f64 {
        (self.x1 - other.x1).hypot(self.x3 - other.x3)
    }
}

fn project(img: &State) -> Result<SectionPoint> {
    SectionPoint::new(img[0], img[2])
}

/// Full three-dimensional image of `s` after one return time.
pub fn poincare_image(p: &SystemParams, s: &SectionPoint, cfg: &IntegratorConfig) -> Result<State> {
    flow(p, &s.to_state(), p.period(), cfg)
}

pub fn poincare_map(p: &SystemParams, s: &SectionPoint, cfg: &IntegratorConfig) -> Result<SectionPoint> {
    project(&poincare_image(p, s, cfg)?)
}

/// `P^n(s)`.
pub fn iterate_map(p: &SystemParams, s: &SectionPoint, n: usize, cfg: &IntegratorConfig) -> Result<SectionPoint> {
    let mut cur = *s;
    for _ in 0..n {
        cur = poincare_map(p, &cur, cfg)?;
    }
    Ok(cur)
}

/// The orbit `s, P(s), ..., P^n(s)`.
pub fn orbit(p: &SystemParams, s: &SectionPoint, n: usize, cfg: &IntegratorConfig) -> Result<Vec<SectionPoint>> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(*s);
    for _ in 0..n {
        let next = poincare_map(p, out.last().unwrap(), cfg)?;
        out.push(next);
    }
    Ok(out)
}

/// Half-return followed by the rotation `(x1, x2, x3) -> (-x1, -x2, x3)`.
/// This map sends the section to itself, commutes with `P`, and its square is
/// `P`; it exchanges the two branches created at the symmetric pitchfork.
pub fn symmetry_image(p: &SystemParams, s: &SectionPoint, cfg: &IntegratorConfig) -> Result<SectionPoint> {
    let half = flow(p, &s.to_state(), 0.5 * p.period(), cfg)?;
    SectionPoint::new(-half[0], half[2])
}

fn restrict(m: &Matrix3<f64>) -> Result<Matrix2<f64>> {
    let scale = m.amax().max(1.0);
    let resid = m[(1, 0)].abs().max(m[(1, 2)].abs());
    if resid > SECTION_ROW_TOL * scale {
        return Err(Error::SectionResidual(resid / scale));
    }
    Ok(Matrix2::new(m[(0, 0)], m[(0, 2)], m[(2, 0)], m[(2, 2)]))
}

/// `P(s)` and its 2x2 derivative.
pub fn poincare_map_with_jacobian(
    p: &SystemParams,
    s: &SectionPoint,
    cfg: &IntegratorConfig,
) -> Result<(SectionPoint, Matrix2<f64>)> {
    let (img, m) = flow_with_variational(p, &s.to_state(), p.period(), cfg)?;
    Ok((project(&img)?, restrict(&m)?))
}

pub fn poincare_jacobian(p: &SystemParams, s: &SectionPoint, cfg: &IntegratorConfig) -> Result<Matrix2<f64>> {
    Ok(poincare_map_with_jacobian(p, s, cfg)?.1)
}

/// `P(s)`, `DP(s)` and `dP/dparam`, including the change of the return time
/// when the parameter is `omega`.
pub fn poincare_map_with_sensitivity(
    p: &SystemParams,
    s: &SectionPoint,
    param: Param,
    cfg: &IntegratorConfig,
) -> Result<(SectionPoint, Matrix2<f64>, Vector2<f64>)> {
    let period = p.period();
    let (img, m, mut ds) = flow_with_sensitivity(p, param, &s.to_state(), period, cfg)?;
    if param == Param::Omega {
        ds += vector_field(p, &img) * (-period / p.omega);
    }
    Ok((project(&img)?, restrict(&m)?, Vector2::new(ds[0], ds[2])))
}

/// `P^n(s)` and `DP^n(s)`, chaining one-return Jacobians.
pub fn iterate_with_jacobian(
    p: &SystemParams,
    s: &SectionPoint,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<(SectionPoint, Matrix2<f64>)> {
    let mut cur = *s;
    let mut d = Matrix2::identity();
    for _ in 0..n {
        let (next, j) = poincare_map_with_jacobian(p, &cur, cfg)?;
        d = j * d;
        cur = next;
    }
    Ok((cur, d))
}

/// `P^n(s)`, `DP^n(s)` and `dP^n/dparam`.
pub fn iterate_with_sensitivity(
    p: &SystemParams,
    s: &SectionPoint,
    n: usize,
    param: Param,
    cfg: &IntegratorConfig,
) -> Result<(SectionPoint, Matrix2<f64>, Vector2<f64>)> {
    let mut cur = *s;
    let mut d = Matrix2::identity();
    let mut dp = Vector2::zeros();
    for _ in 0..n {
        let (next, j, sp) = poincare_map_with_sensitivity(p, &cur, param, cfg)?;
        d = j * d;
        dp = j * dp + sp;
        cur = next;
    }
    Ok((cur, d, dp))
}

/// Eigenvalues of a real 2x2 matrix, ordered by decreasing modulus.
pub fn eigenvalues2(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    let mut ev = if disc >= 0.0 {
        let sq = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = 0.5 * tr + sq.copysign(tr);
        let small = if big != 0.0 { det / big } else { 0.5 * tr - sq.copysign(tr) };
        [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex64::new(0.5 * tr, im), Complex64::new(0.5 * tr, -im)]
    };
    if ev[1].norm() > ev[0].norm() {
        ev.swap(0, 1);
    }
    ev
}

/// Unit eigenvector of a real 2x2 matrix for a real eigenvalue.
pub fn eigenvector2(m: &Matrix2<f64>, lambda: f64) -> Vector2<f64> {
    let a = m - Matrix2::identity() * lambda;
    // null vector of a rank-one matrix: orthogonal to its larger row
    let r0 = Vector2::new(a[(0, 0)], a[(0, 1)]);
    let r1 = Vector2::new(a[(1, 0)], a[(1, 1)]);
    let row = if r0.norm() >= r1.norm() { r0 } else { r1 };
    if row.norm() == 0.0 {
        return Vector2::new(1.0, 0.0);
    }
    Vector2::new(-row[1], row[0]).normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stability {
    Stable,
    Saddle,
    Unstable,
}

impl Stability {
    pub fn from_multipliers(m: &[Complex64; 2]) -> Self {
        match m.iter().filter(|z| z.norm() > 1.0).count() {
            0 => Stability::Stable,
            1 => Stability::Saddle,
            _ => Stability::Unstable,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stability::Stable => "STABLE",
            Stability::Saddle => "SADDLE",
            Stability::Unstable => "UNSTABLE",
        }
    }
}

/// Converged period-`n` point of the return map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPoint {
    pub point: SectionPoint,
    pub n: usize,
    pub params: SystemParams,
    pub multipliers: [Complex64; 2],
    pub stability: Stability,
    /// Derivative of `P^n` at the point.
    pub jacobian: Matrix2<f64>,
    /// Final `|P^n(s) - s|`.
    pub residual: f64,
}

impl PeriodicPoint {
    /// Evaluates multipliers and stability of an (assumed converged) point.
    pub fn at(p: &SystemParams, s: &SectionPoint, n: usize, cfg: &IntegratorConfig) -> Result<Self> {
        let (img, d) = iterate_with_jacobian(p, s, n, cfg)?;
        let multipliers = eigenvalues2(&d);
        Ok(PeriodicPoint {
            point: *s,
            n,
            params: *p,
            multipliers,
            stability: Stability::from_multipliers(&multipliers),
            jacobian: d,
            residual: img.distance(s),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings per iteration.
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 30, max_halvings: 8 }
    }
}

/// Determinant magnitude below which `DP^n - I` counts as singular.
pub const SINGULAR_DET: f64 = 1e-14;

/// Damped Newton iteration for `P^n(s) = s`; also returns the residual
/// `|P^n(s_k) - s_k|` of every iterate.
pub fn newton_periodic_traced(
    p: &SystemParams,
    guess: &SectionPoint,
    n: usize,
    cfg: &IntegratorConfig,
    opts: &NewtonOptions,
) -> Result<(PeriodicPoint, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("period must be >= 1".into()));
    }
    let mut s = *guess;
    let mut history = Vec::new();
    let (img, mut d) = iterate_with_jacobian(p, &s, n, cfg)?;
    let mut g = img.to_vector() - s.to_vector();
    for _ in 0..=opts.max_iter {
        let res = g.norm();
        history.push(res);
        if res < opts.tol {
            let multipliers = eigenvalues2(&d);
            let pt = PeriodicPoint {
                point: s,
                n,
                params: *p,
                multipliers,
                stability: Stability::from_multipliers(&multipliers),
                jacobian: d,
                residual: res,
            };
            return Ok((pt, history));
        }
        if history.len() > opts.max_iter {
            break;
        }
        let dg = d - Matrix2::identity();
        let det = dg.determinant();
        if det.abs() < SINGULAR_DET {
            return Err(Error::SingularJacobian(det.abs()));
        }
        let delta = -dg.try_inverse().ok_or(Error::SingularJacobian(det.abs()))? * g;
        let mut lambda = 1.0;
        let mut accepted = None;
        let mut fallback = None;
        for _ in 0..=opts.max_halvings {
            let trial = s.to_vector() + delta * lambda;
            if let Ok(ts) = SectionPoint::from_vector(&trial) {
                if let Ok((ti, td)) = iterate_with_jacobian(p, &ts, n, cfg) {
                    let tg = ti.to_vector() - ts.to_vector();
                    if tg.norm() < res {
                        accepted = Some((ts, ti, td, tg));
                        break;
                    }
                    fallback = Some((ts, ti, td, tg));
                }
            }
            lambda *= 0.5;
        }
        // no decrease at all: take the shortest trial and let the iteration
        // count decide
        let (ns, _, nd, ng) =
            accepted.or(fallback).ok_or(Error::NoConvergence { iterations: history.len(), residual: res })?;
        s = ns;
        d = nd;
        g = ng;
    }
    Err(Error::NoConvergence { iterations: history.len(), residual: g.norm() })
}

pub fn newton_periodic(
    p: &SystemParams,
    guess: &SectionPoint,
    n: usize,
    cfg: &IntegratorConfig,
    opts: &NewtonOptions,
) -> Result<PeriodicPoint> {
    newton_periodic_traced(p, guess, n, cfg, opts).map(|(pt, _)| pt)
}
