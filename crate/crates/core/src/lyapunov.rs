//! Largest Lyapunov exponent by tangent-vector growth with periodic
//! renormalisation.
//!
//! The angle about the x3-axis advances at the constant rate `omega`, so the
//! flow is a skew product over a rotation and the rotation direction only
//! contributes a zero exponent. The estimate therefore follows the
//! non-autonomous system in `(rho, x3)` with `theta = theta0 + omega t`;
//! its largest exponent is the largest non-trivial exponent of the flow.

use nalgebra::{SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{solve, IntegratorConfig, OdeSystem};
use crate::pl_core::{CylState, State, SystemParams};

struct ReducedTangent {
    params: SystemParams,
    theta0: f64,
}

impl OdeSystem<4> for ReducedTangent {
    fn rhs(&self, t: f64, y: &SVector<f64, 4>) -> SVector<f64, 4> {
        let p = &self.params;
        let (rho, z) = (y[0], y[1]);
        let th = self.theta0 + p.omega * t;
        let q = p.a * th.cos().powi(2) + p.b * th.sin().powi(2);
        let g = z * z - p.h * p.h;
        let l3 = p.r * p.r - q * rho * rho - p.c * z * z;
        let j00 = g;
        let j01 = 2.0 * z * rho;
        let j10 = -2.0 * q * rho * z;
        let j11 = l3 - 2.0 * p.c * z * z;
        SVector::<f64, 4>::from([g * rho, l3 * z, j00 * y[2] + j01 * y[3], j10 * y[2] + j11 * y[3]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovOptions {
    /// Total averaging time after the transient.
    pub t_end: f64,
    pub renorm_interval: f64,
    /// Time integrated before averaging starts.
    pub transient: f64,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions { t_end: 1000.0, renorm_interval: 1.0, transient: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// Running averages after each renormalisation.
    pub running: Vec<(f64, f64)>,
}

/// Largest Lyapunov exponent of the orbit of `x0`.
pub fn largest_lyapunov(
    p: &SystemParams,
    x0: &State,
    opts: &LyapunovOptions,
    cfg: &IntegratorConfig,
) -> Result<LyapunovEstimate> {
    if !(opts.renorm_interval > 0.0) || !(opts.t_end >= opts.renorm_interval) || !(opts.transient >= 0.0) {
        return Err(Error::InvalidArgument("need 0 < renorm_interval <= T and transient >= 0".into()));
    }
    let cyl = CylState::from_state(x0);
    let sys = ReducedTangent { params: *p, theta0: cyl.theta };
    let v0 = Vector2::new(1.0, 1.0).normalize();
    let mut y = SVector::<f64, 4>::from([cyl.rho, cyl.x3, v0[0], v0[1]]);
    let mut t = 0.0;
    if opts.transient > 0.0 {
        y = solve(&sys, 0.0, y, opts.transient, cfg, |_| {})?;
        t = opts.transient;
        renormalise(&mut y);
    }
    let steps = (opts.t_end / opts.renorm_interval).round() as usize;
    let mut sum = 0.0;
    let mut running = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t1 = t + opts.renorm_interval;
        y = solve(&sys, t, y, t1, cfg, |_| {})?;
        t = t1;
        sum += renormalise(&mut y).ln();
        running.push((k as f64 * opts.renorm_interval, sum / (k as f64 * opts.renorm_interval)));
    }
    let exponent = sum / (steps as f64 * opts.renorm_interval);
    Ok(LyapunovEstimate { exponent, running })
}

fn renormalise(y: &mut SVector<f64, 4>) -> f64 {
    let n = (y[2] * y[2] + y[3] * y[3]).sqrt();
    y[2] /= n;
    y[3] /= n;
    n
}
