//! State-feedback stabilisation of the origin and master-slave
//! synchronisation of two copies of the system.

use std::io::{self, Write};

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{fmt_num, solve, FlowSystem, IntegratorConfig, OdeSystem};
use crate::pl_core::{vector_field, FieldKind, State, SystemParams};

/// `(1 - K) r^2 - a x1^2 - b x2^2 - c x3^2`.
pub fn closed_loop_ne3(p: &SystemParams, x: &State) -> f64 {
    (1.0 - p.k) * p.r * p.r - p.a * x[0] * x[0] - p.b * x[1] * x[1] - p.c * x[2] * x[2]
}

/// Third NEValue of the synchronisation error system, with the slave's
/// instantaneous `x1, x2` in place of their limit values.
pub fn sync_error_ne3(p: &SystemParams, xs: &State, xm: &State) -> f64 {
    -(p.a * xs[0] * xs[0] + p.b * xs[1] * xs[1] + p.c * (xs[2] * xs[2] + xs[2] * xm[2] + xm[2] * xm[2]))
}

/// Feedback input `-K r^2 x3` acting on the third equation.
pub fn feedback(p: &SystemParams, x: &State) -> f64 {
    -p.k * p.r * p.r * x[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSample {
    pub t: f64,
    pub x: State,
    pub u: f64,
    pub lambda3cl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledRun {
    pub params: SystemParams,
    pub samples: Vec<ControlSample>,
}

impl ControlledRun {
    pub fn final_state(&self) -> State {
        self.samples.last().map(|s| s.x).unwrap_or_else(Vector3::zeros)
    }

    pub fn max_lambda3cl(&self) -> f64 {
        self.samples.iter().map(|s| s.lambda3cl).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x1,x2,x3,u,lambda3cl")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_num(s.t),
                fmt_num(s.x[0]),
                fmt_num(s.x[1]),
                fmt_num(s.x[2]),
                fmt_num(s.u),
                fmt_num(s.lambda3cl)
            )?;
        }
        Ok(())
    }
}

fn check_stride(t_end: f64, stride: f64) -> Result<()> {
    if !(t_end >= 0.0) || !(stride > 0.0) {
        return Err(Error::InvalidArgument("need T >= 0 and a positive output stride".into()));
    }
    Ok(())
}

/// Drives `on_sample` on the grid `0, stride, 2 stride, ...` up to `t_end`
/// using dense output.
fn sampled<S, const N: usize>(
    sys: &S,
    y0: SVector<f64, N>,
    t_end: f64,
    stride: f64,
    cfg: &IntegratorConfig,
    mut on_sample: impl FnMut(f64, &SVector<f64, N>),
) -> Result<SVector<f64, N>>
where
    S: OdeSystem<N>,
{
    check_stride(t_end, stride)?;
    on_sample(0.0, &y0);
    let mut k = 1u64;
    let end = solve(sys, 0.0, y0, t_end, cfg, |st| {
        while (k as f64) * stride <= st.t1 + 1e-12 * st.t1.abs() {
            let t = ((k as f64) * stride).min(st.t1);
            on_sample(t, &st.dense(t));
            k += 1;
        }
    })?;
    Ok(end)
}

/// Integrates the closed loop with gain `p.k` and records the state, the
/// input and the closed-loop NEValue every `stride` time units.
pub fn run_controlled(
    p: &SystemParams,
    x0: &State,
    t_end: f64,
    stride: f64,
    cfg: &IntegratorConfig,
) -> Result<ControlledRun> {
    let sys = FlowSystem { params: *p, kind: FieldKind::Controlled };
    let mut samples = Vec::new();
    sampled(&sys, *x0, t_end, stride, cfg, |t, x| {
        samples.push(ControlSample { t, x: *x, u: feedback(p, x), lambda3cl: closed_loop_ne3(p, x) });
    })?;
    Ok(ControlledRun { params: *p, samples })
}

/// Synchronisation inputs `(u1, u2, u3)` for slave `xs` and master `xm`.
pub fn sync_inputs(p: &SystemParams, xs: &State, xm: &State) -> State {
    Vector3::new(
        -xs[2] * xs[2] * xs[0] + xm[2] * xm[2] * xm[0],
        -xs[2] * xs[2] * xs[1] + xm[2] * xm[2] * xm[1],
        -p.r * p.r * (xs[2] - xm[2]),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncSample {
    pub t: f64,
    pub master: State,
    pub slave: State,
    pub error: State,
    pub u: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncRun {
    pub params: SystemParams,
    pub samples: Vec<SyncSample>,
}

impl SyncRun {
    pub fn final_error(&self) -> State {
        self.samples.last().map(|s| s.error).unwrap_or_else(Vector3::zeros)
    }

    /// Largest relative deviation of `|(e1, e2)|(t)` from
    /// `|(e1, e2)|(0) exp(-h^2 t)`.
    pub fn envelope_deviation(&self) -> f64 {
        let Some(first) = self.samples.first() else { return 0.0 };
        let r0 = first.error.xy().norm();
        if r0 == 0.0 {
            return self.samples.iter().map(|s| s.error.xy().norm()).fold(0.0, f64::max);
        }
        let h2 = self.params.h * self.params.h;
        self.samples
            .iter()
            .map(|s| {
                let expect = r0 * (-h2 * s.t).exp();
                (s.error.xy().norm() - expect).abs() / expect
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,e1,e2,e3,u1,u2,u3")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_num(s.t),
                fmt_num(s.error[0]),
                fmt_num(s.error[1]),
                fmt_num(s.error[2]),
                fmt_num(s.u[0]),
                fmt_num(s.u[1]),
                fmt_num(s.u[2])
            )?;
        }
        Ok(())
    }
}

/// Master together with the scaled error `w = e exp(h^2 t)`.
///
/// The first two error equations are linear with rate `-h^2`, so in the
/// scaled variables they become a pure rotation; this keeps the error
/// accurate relative to its own size long after it drops below the
/// absolute tolerance.
struct ScaledErrorSystem {
    params: SystemParams,
}

impl OdeSystem<6> for ScaledErrorSystem {
    fn rhs(&self, t: f64, y: &SVector<f64, 6>) -> SVector<f64, 6> {
        let p = &self.params;
        let xm = Vector3::new(y[0], y[1], y[2]);
        let w = Vector3::new(y[3], y[4], y[5]);
        let h2 = p.h * p.h;
        let e = w * (-h2 * t).exp();
        let xs = xm + e;
        let fm = vector_field(p, &xm);
        let lam = sync_error_ne3(p, &xs, &xm);
        // e3 equation written without cancellation between master and slave
        let cross = -xm[2] * (p.a * w[0] * (xs[0] + xm[0]) + p.b * w[1] * (xs[1] + xm[1]));
        SVector::<f64, 6>::from([fm[0], fm[1], fm[2], -p.omega * w[1], p.omega * w[0], (lam + h2) * w[2] + cross])
    }
}

/// Coupled master and slave in their own coordinates.
struct DirectSyncSystem {
    params: SystemParams,
}

impl OdeSystem<6> for DirectSyncSystem {
    fn rhs(&self, _t: f64, y: &SVector<f64, 6>) -> SVector<f64, 6> {
        let p = &self.params;
        let xm = Vector3::new(y[0], y[1], y[2]);
        let xs = Vector3::new(y[3], y[4], y[5]);
        let fm = vector_field(p, &xm);
        let fs = vector_field(p, &xs) + sync_inputs(p, &xs, &xm);
        SVector::<f64, 6>::from([fm[0], fm[1], fm[2], fs[0], fs[1], fs[2]])
    }
}

fn sync_sample(p: &SystemParams, t: f64, xm: State, e: State) -> SyncSample {
    let xs = xm + e;
    SyncSample { t, master: xm, slave: xs, error: e, u: sync_inputs(p, &xs, &xm) }
}

/// Master-slave run, integrated in master and scaled-error coordinates.
pub fn run_sync(
    p: &SystemParams,
    xm0: &State,
    xs0: &State,
    t_end: f64,
    stride: f64,
    cfg: &IntegratorConfig,
) -> Result<SyncRun> {
    let sys = ScaledErrorSystem { params: *p };
    let e0 = xs0 - xm0;
    let y0 = SVector::<f64, 6>::from([xm0[0], xm0[1], xm0[2], e0[0], e0[1], e0[2]]);
    let h2 = p.h * p.h;
    let mut samples = Vec::new();
    sampled(&sys, y0, t_end, stride, cfg, |t, y| {
        let xm = Vector3::new(y[0], y[1], y[2]);
        let e = Vector3::new(y[3], y[4], y[5]) * (-h2 * t).exp();
        samples.push(sync_sample(p, t, xm, e));
    })?;
    Ok(SyncRun { params: *p, samples })
}

/// Same run integrated in master and slave coordinates; the error is the
/// difference of the two states.
pub fn run_sync_direct(
    p: &SystemParams,
    xm0: &State,
    xs0: &State,
    t_end: f64,
    stride: f64,
    cfg: &IntegratorConfig,
) -> Result<SyncRun> {
    let sys = DirectSyncSystem { params: *p };
    let y0 = SVector::<f64, 6>::from([xm0[0], xm0[1], xm0[2], xs0[0], xs0[1], xs0[2]]);
    let mut samples = Vec::new();
    sampled(&sys, y0, t_end, stride, cfg, |t, y| {
        let xm = Vector3::new(y[0], y[1], y[2]);
        let xs = Vector3::new(y[3], y[4], y[5]);
        samples.push(sync_sample(p, t, xm, xs - xm));
    })?;
    Ok(SyncRun { params: *p, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::flow;
    use crate::pl_core::{controlled_field, PlSystem, PseudoLinearForm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn control_params() -> SystemParams {
        SystemParams::new(5.0, 1.0, 0.1, 1.5, 10.0, 5.0).unwrap().with_gain(1.1).unwrap()
    }

    fn sync_params() -> SystemParams {
        SystemParams::new(5.0, 1.0, 0.1, 4.0, 10.0, 50.0).unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn ne3_values() {
        assert!((closed_loop_ne3(&control_params(), &Vector3::zeros()) + 10.0).abs() < 1e-12);
        let p = sync_params();
        let x = Vector3::new(0.0, 0.0, 2.0);
        assert!((sync_error_ne3(&p, &x, &x) + 3.0 * p.c * 4.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let xs = Vector3::from_fn(|_, _| rng.gen_range(-50.0..50.0));
            let xm = Vector3::from_fn(|_, _| rng.gen_range(-50.0..50.0));
            assert!(sync_error_ne3(&p, &xs, &xm) <= 0.0);
        }
    }

    #[test]
    fn controlled_form_is_pseudo_linear() {
        let p = control_params();
        let pl = PlSystem::controlled(p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x = Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
            let f = controlled_field(&p, &x);
            assert!((pl.matrix(&x) * x - f).norm() <= 1e-12 * f.norm().max(1.0));
            assert!((f[2] - (vector_field(&p, &x)[2] + feedback(&p, &x))).abs() < 1e-9);
            assert!(pl.blocks(&x).len() == 2);
        }
    }

    #[test]
    fn zero_gain_is_free_flow() {
        let p = SystemParams::new(1.2, 1.0, 1.0, 0.25, 3.0, 1.0).unwrap();
        let x0 = Vector3::new(2.9, 0.0, 0.1);
        let run = run_controlled(&p, &x0, 5.0, 0.5, &cfg()).unwrap();
        let free = flow(&p, &x0, 5.0, &cfg()).unwrap();
        assert!((run.final_state() - free).norm() < 1e-8);
        assert!(run.samples.iter().all(|s| s.u == 0.0));
    }

    #[test]
    fn feedback_stabilises() {
        let p = control_params();
        let x0 = flow(&control_params().with_gain(0.0).unwrap(), &Vector3::new(1.0, 0.0, 1.0), 20.0, &cfg()).unwrap();
        let run = run_controlled(&p, &x0, 50.0, 0.01, &cfg()).unwrap();
        assert!(run.final_state().norm() < 1e-3);
        assert!(run.max_lambda3cl() <= -10.0);
        // |x3| never increases, up to the absolute integration tolerance
        for w in run.samples.windows(2) {
            assert!(w[1].x[2].abs() <= w[0].x[2].abs() * (1.0 + 1e-9) + 1e-10);
        }
    }

    #[test]
    fn synchronisation_converges() {
        let p = sync_params();
        let xm0 = Vector3::new(1.0, -2.0, 3.0);
        let xs0 = Vector3::new(-2.0, 1.5, 0.5);
        let run = run_sync(&p, &xm0, &xs0, 5.0, 0.01, &cfg()).unwrap();
        assert!(run.final_error().norm() < 1e-4);
        assert!(run.envelope_deviation() < 1e-5);
        for s in &run.samples {
            assert!((s.slave - s.master - s.error).norm() <= 1e-12 * s.slave.norm().max(1.0));
        }
    }

    #[test]
    fn error_coordinates_agree_with_direct_route() {
        let p = sync_params();
        let xm0 = Vector3::new(0.5, 0.5, 1.0);
        let xs0 = Vector3::new(1.0, -0.5, 2.0);
        let tight = IntegratorConfig::with_tolerances(1e-12, 1e-14);
        let a = run_sync(&p, &xm0, &xs0, 0.5, 0.05, &tight).unwrap();
        let b = run_sync_direct(&p, &xm0, &xs0, 0.5, 0.05, &tight).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            let scale = x.master.norm().max(1.0);
            assert!((x.error - y.error).norm() < 1e-8 * scale, "{} {}", x.t, (x.error - y.error).norm());
        }
    }

    #[test]
    fn synchronised_start_stays_synchronised() {
        let p = sync_params();
        let x = Vector3::new(1.0, 2.0, 3.0);
        let run = run_sync(&p, &x, &x, 1.0, 0.1, &cfg()).unwrap();
        for s in &run.samples {
            assert_eq!(s.error, Vector3::zeros());
            assert_eq!(s.u[2], 0.0);
        }
    }

    #[test]
    fn csv_headers() {
        let p = sync_params();
        let x = Vector3::new(1.0, 2.0, 3.0);
        let run = run_sync(&p, &x, &x, 0.1, 0.1, &cfg()).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,e1,e2,e3,u1,u2,u3\n"));
        let c = run_controlled(&control_params(), &x, 0.1, 0.1, &cfg()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,x1,x2,x3,u,lambda3cl\n"));
    }
}
