//! Adaptive Dormand–Prince 5(4) integration with cubic Hermite dense output.
//!
//! The stepper is generic over the state dimension so the same controller
//! drives the plain flow (3), tangent systems (6, 12) and the parameter
//! sensitivity system used by continuation (15).

use std::io::{self, Write};

use nalgebra::{Matrix3, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pl_core::{
    classify_region, ellipsoid_level, field, field_jacobian, param_derivative, plane_level, FieldKind, Param, RegionId,
    State, SystemParams, DEFAULT_BOUNDARY_TOL,
};

/// Time resolution of region-transition location.
pub const EVENT_TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, max_step: 0.1, max_steps: 2_000_000 }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig { rel_tol, abs_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let tol_ok = |v: f64| v > 0.0 && v <= 1e-2;
        if !tol_ok(self.rel_tol) || !tol_ok(self.abs_tol) {
            return Err(Error::InvalidArgument(format!(
                "tolerances must lie in (0, 1e-2], got rel={} abs={}",
                self.rel_tol, self.abs_tol
            )));
        }
        if !(self.max_step > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidArgument("max_step and max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Right-hand side of `y' = F(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &SVector<f64, N>) -> SVector<f64, N>;
}

/// One accepted step with its Hermite interpolant.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: SVector<f64, N>,
    pub y1: SVector<f64, N>,
    pub f0: SVector<f64, N>,
    pub f1: SVector<f64, N>,
}

impl<const N: usize> Step<N> {
    /// Cubic Hermite interpolation on `[t0, t1]`.
    pub fn dense(&self, t: f64) -> SVector<f64, N> {
        let h = self.t1 - self.t0;
        if h == 0.0 {
            return self.y0;
        }
        let th = (t - self.t0) / h;
        let dy = self.y1 - self.y0;
        let corr = dy * (1.0 - 2.0 * th) + self.f0 * ((th - 1.0) * h) + self.f1 * (th * h);
        self.y0 * (1.0 - th) + self.y1 * th + corr * (th * (th - 1.0))
    }
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

fn error_norm<const N: usize>(
    err: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    cfg: &IntegratorConfig,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = cfg.abs_tol + cfg.rel_tol * y0[i].abs().max(y1[i].abs());
        let q = err[i] / sc;
        acc += q * q;
    }
    (acc / N as f64).sqrt()
}

fn initial_step<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    dir: f64,
    cfg: &IntegratorConfig,
) -> f64 {
    let scale = |y: &SVector<f64, N>, i: usize| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let norm = |v: &SVector<f64, N>| ((0..N).map(|i| (v[i] / scale(y0, i)).powi(2)).sum::<f64>() / N as f64).sqrt();
    let d0 = norm(y0);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(cfg.max_step);
    let y1 = y0 + f0 * (dir * h0);
    let f1 = sys.rhs(t0 + dir * h0, &y1);
    let d2 = norm(&(f1 - f0)) / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
    (100.0 * h0).min(h1).min(cfg.max_step)
}

/// Integrates from `t0` to `t_end` (either direction), calling `on_step` for
/// every accepted step. Returns the final state.
pub fn solve<S, F, const N: usize>(
    sys: &S,
    t0: f64,
    y0: SVector<f64, N>,
    t_end: f64,
    cfg: &IntegratorConfig,
    mut on_step: F,
) -> Result<SVector<f64, N>>
where
    S: OdeSystem<N>,
    F: FnMut(&Step<N>),
{
    if !t_end.is_finite() || !t0.is_finite() {
        return Err(Error::InvalidArgument("integration time must be finite".into()));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t: t0 });
    }
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0;
    let mut f = sys.rhs(t, &y);
    let mut h = initial_step(sys, t, &y, &f, dir, cfg);
    let mut err_old: f64 = 1e-4;
    let mut rejected = false;
    let mut steps = 0usize;

    loop {
        let remaining = (t_end - t) * dir;
        if remaining <= 0.0 {
            return Ok(y);
        }
        if steps >= cfg.max_steps {
            return Err(Error::StepLimit { max_steps: cfg.max_steps, t });
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t });
        }
        let hs = dir * h;

        let k1 = f;
        let k2 = sys.rhs(t + C2 * hs, &(y + k1 * (A21 * hs)));
        let k3 = sys.rhs(t + C3 * hs, &(y + (k1 * A31 + k2 * A32) * hs));
        let k4 = sys.rhs(t + C4 * hs, &(y + (k1 * A41 + k2 * A42 + k3 * A43) * hs));
        let k5 = sys.rhs(t + C5 * hs, &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * hs));
        let t_new = if last { t_end } else { t + hs };
        let k6 = sys.rhs(t + hs, &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * hs));
        let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * hs;
        let k7 = sys.rhs(t_new, &y_new);
        steps += 1;

        let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * hs;
        let err = error_norm(&err_vec, &y, &y_new, cfg);

        if !err.is_finite() {
            if y_new.iter().any(|v| !v.is_finite()) && h <= 1e-10 {
                return Err(Error::NonFinite { t });
            }
            h *= FAC_MIN;
            rejected = true;
            continue;
        }

        if err <= 1.0 {
            if y_new.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t: t_new });
            }
            let step = Step { t0: t, t1: t_new, y0: y, y1: y_new, f0: k1, f1: k7 };
            on_step(&step);
            t = t_new;
            y = y_new;
            f = k7;
            if last {
                return Ok(y);
            }
            let e = err.max(1e-10);
            let mut fac = SAFETY * e.powf(-(0.2 - 0.75 * BETA)) * err_old.powf(BETA);
            fac = fac.clamp(FAC_MIN, if rejected { 1.0 } else { FAC_MAX });
            err_old = e;
            h = (h * fac).min(cfg.max_step);
            rejected = false;
        } else {
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h *= fac;
            rejected = true;
        }
    }
}

/// Plain state flow of the free or closed-loop field.
pub struct FlowSystem {
    pub params: SystemParams,
    pub kind: FieldKind,
}

impl OdeSystem<3> for FlowSystem {
    #[inline]
    fn rhs(&self, _t: f64, y: &State) -> State {
        field(self.kind, &self.params, y)
    }
}

/// State plus the 3x3 fundamental matrix (column-major in entries 3..12).
pub struct VariationalSystem {
    pub params: SystemParams,
    pub kind: FieldKind,
}

impl OdeSystem<12> for VariationalSystem {
    fn rhs(&self, _t: f64, y: &SVector<f64, 12>) -> SVector<f64, 12> {
        let x = State::new(y[0], y[1], y[2]);
        let fx = field(self.kind, &self.params, &x);
        let j = field_jacobian(self.kind, &self.params, &x);
        let phi = Matrix3::from_column_slice(&y.as_slice()[3..12]);
        let dphi = j * phi;
        let mut out = SVector::<f64, 12>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&fx);
        out.as_mut_slice()[3..12].copy_from_slice(dphi.as_slice());
        out
    }
}

/// State, fundamental matrix and sensitivity `dx/dparam` (entries 12..15).
pub struct SensitivitySystem {
    pub params: SystemParams,
    pub param: Param,
}

impl OdeSystem<15> for SensitivitySystem {
    fn rhs(&self, _t: f64, y: &SVector<f64, 15>) -> SVector<f64, 15> {
        let x = State::new(y[0], y[1], y[2]);
        let fx = field(FieldKind::Free, &self.params, &x);
        let j = field_jacobian(FieldKind::Free, &self.params, &x);
        let phi = Matrix3::from_column_slice(&y.as_slice()[3..12]);
        let s = State::new(y[12], y[13], y[14]);
        let dphi = j * phi;
        let ds = j * s + param_derivative(&self.params, &x, self.param);
        let mut out = SVector::<f64, 15>::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&fx);
        out.as_mut_slice()[3..12].copy_from_slice(dphi.as_slice());
        out.fixed_rows_mut::<3>(12).copy_from(&ds);
        out
    }
}

/// State of the free system after time `t`.
pub fn flow(p: &SystemParams, x0: &State, t: f64, cfg: &IntegratorConfig) -> Result<State> {
    flow_field(FieldKind::Free, p, x0, t, cfg)
}

pub fn flow_field(kind: FieldKind, p: &SystemParams, x0: &State, t: f64, cfg: &IntegratorConfig) -> Result<State> {
    let sys = FlowSystem { params: *p, kind };
    solve(&sys, 0.0, *x0, t, cfg, |_| {})
}

/// Final state and monodromy `D Phi_t(x0)` of the free flow.
pub fn flow_with_variational(
    p: &SystemParams,
    x0: &State,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(State, Matrix3<f64>)> {
    let sys = VariationalSystem { params: *p, kind: FieldKind::Free };
    let mut y0 = SVector::<f64, 12>::zeros();
    y0.fixed_rows_mut::<3>(0).copy_from(x0);
    y0.as_mut_slice()[3..12].copy_from_slice(Matrix3::<f64>::identity().as_slice());
    let y = solve(&sys, 0.0, y0, t, cfg, |_| {})?;
    Ok((State::new(y[0], y[1], y[2]), Matrix3::from_column_slice(&y.as_slice()[3..12])))
}

/// Final state, monodromy and `d x(t) / d param` at fixed `t`.
pub fn flow_with_sensitivity(
    p: &SystemParams,
    param: Param,
    x0: &State,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(State, Matrix3<f64>, State)> {
    let sys = SensitivitySystem { params: *p, param };
    let mut y0 = SVector::<f64, 15>::zeros();
    y0.fixed_rows_mut::<3>(0).copy_from(x0);
    y0.as_mut_slice()[3..12].copy_from_slice(Matrix3::<f64>::identity().as_slice());
    let y = solve(&sys, 0.0, y0, t, cfg, |_| {})?;
    Ok((
        State::new(y[0], y[1], y[2]),
        Matrix3::from_column_slice(&y.as_slice()[3..12]),
        State::new(y[12], y[13], y[14]),
    ))
}

/// Time-ordered samples of a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, State)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&(f64, State)> {
        self.samples.last()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x1,x2,x3")?;
        for (t, x) in &self.samples {
            writeln!(w, "{},{},{},{}", fmt_num(*t), fmt_num(x[0]), fmt_num(x[1]), fmt_num(x[2]))?;
        }
        Ok(())
    }
}

/// 17 significant digits, `.` decimal separator.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub t: f64,
    pub from: RegionId,
    pub to: RegionId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionLog {
    pub entries: Vec<Transition>,
}

/// Which samples [`integrate_logged`] keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Output {
    /// Every accepted step.
    Steps,
    /// Dense output on a fixed time grid.
    Stride(f64),
}

fn bisect_crossing<const N: usize, G: Fn(&SVector<f64, N>) -> f64>(step: &Step<N>, g: G) -> f64 {
    let (mut lo, mut hi) = (step.t0, step.t1);
    let g_lo = g(&step.y0);
    while (hi - lo).abs() > EVENT_TIME_TOL {
        let mid = 0.5 * (lo + hi);
        let gm = g(&step.dense(mid));
        if (gm > 0.0) == (g_lo > 0.0) && gm != 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Integrates the free system for time `t_end >= 0`, recording samples and
/// every crossing of the two nullcline surfaces.
pub fn integrate_logged(
    p: &SystemParams,
    x0: &State,
    t_end: f64,
    cfg: &IntegratorConfig,
    output: Output,
) -> Result<(Trajectory, TransitionLog)> {
    if t_end < 0.0 {
        return Err(Error::InvalidArgument("logged integration runs forward only".into()));
    }
    let sys = FlowSystem { params: *p, kind: FieldKind::Free };
    let mut traj = Trajectory { samples: vec![(0.0, *x0)] };
    let mut log = TransitionLog::default();
    let mut next_out = match output {
        Output::Stride(dt) if dt > 0.0 => dt,
        Output::Stride(_) => return Err(Error::InvalidArgument("output stride must be positive".into())),
        Output::Steps => f64::INFINITY,
    };
    let mut out_index = 1u64;

    // sign state of (ellipsoid level, plane level); `None` until known
    let sign = |v: f64| {
        if v > 0.0 {
            Some(true)
        } else if v < 0.0 {
            Some(false)
        } else {
            None
        }
    };
    let mut s_ell = sign(ellipsoid_level(p, x0));
    let mut s_pl = sign(plane_level(p, x0));

    solve(&sys, 0.0, *x0, t_end, cfg, |st| {
        let mut events: Vec<(f64, usize)> = Vec::new();
        let e1 = sign(ellipsoid_level(p, &st.y1));
        let z1 = sign(plane_level(p, &st.y1));
        match (s_ell, e1) {
            (Some(a), Some(b)) if a != b => events.push((bisect_crossing(st, |y| ellipsoid_level(p, y)), 0)),
            (None, Some(_)) => s_ell = e1,
            _ => {}
        }
        match (s_pl, z1) {
            (Some(a), Some(b)) if a != b => events.push((bisect_crossing(st, |y| plane_level(p, y)), 1)),
            (None, Some(_)) => s_pl = z1,
            _ => {}
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t, which) in events {
            let (Some(e), Some(z)) = (s_ell, s_pl) else {
                if which == 0 {
                    s_ell = s_ell.map(|v| !v)
                } else {
                    s_pl = s_pl.map(|v| !v)
                }
                continue;
            };
            let from = RegionId::from_signs(e, z);
            if which == 0 {
                s_ell = Some(!e);
            } else {
                s_pl = Some(!z);
            }
            let to = RegionId::from_signs(s_ell.unwrap(), s_pl.unwrap());
            log.entries.push(Transition { t, from, to });
        }

        match output {
            Output::Steps => traj.samples.push((st.t1, st.y1)),
            Output::Stride(dt) => {
                while next_out <= st.t1 + 1e-12 * st.t1.abs() {
                    let t = next_out.min(st.t1);
                    traj.samples.push((t, st.dense(t)));
                    out_index += 1;
                    next_out = out_index as f64 * dt;
                }
            }
        }
    })?;
    Ok((traj, log))
}

/// Region of every sample of a trajectory (boundary tolerance at the default).
pub fn regions_along(p: &SystemParams, traj: &Trajectory) -> Vec<RegionId> {
    traj.samples.iter().map(|(_, x)| classify_region(p, x, DEFAULT_BOUNDARY_TOL)).collect()
}
