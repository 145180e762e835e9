use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plchaos::continuation::{
    continue_branch, sweep, Branch, ContinuationOptions, StepControl, SweepGrid, SweepOptions,
};
use plchaos::control::{run_controlled, run_sync, run_sync_direct};
use plchaos::equilibria::{analytic_orbit, analyze_equilibria, hopf_threshold, AnalyticOrbit, EquilibriumInfo};
use plchaos::integrate::{flow, fmt_num, integrate_logged, regions_along, IntegratorConfig, Output, Transition};
use plchaos::lyapunov::{largest_lyapunov, LyapunovOptions};
use plchaos::manifold::{unstable_manifold_equilibrium, unstable_manifold_map, ManifoldCurve, ManifoldOptions};
use plchaos::poincare::{newton_periodic, orbit, NewtonOptions, PeriodicPoint, SectionPoint, Stability};
use plchaos::{State, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::parse::{Pair, Triple};
use crate::{Command, ManifoldKind, Side, UsageError};

pub const CASCADE: [f64; 6] = [1.0, 1.0, 1.0, 0.25, 3.0, 1.0];
pub const ATTRACTORS: [f64; 6] = [1.205, 1.0, 1.0, 0.25, 3.0, 1.0];
pub const SURFACE: [f64; 6] = [1.0, 1.0, 1.0, 0.25, 1.0, 1.0];
pub const CONTROL: [f64; 6] = [5.0, 1.0, 0.1, 1.5, 10.0, 5.0];
pub const SYNC: [f64; 6] = [5.0, 1.0, 0.1, 4.0, 10.0, 50.0];

pub fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn state(t: Triple) -> State {
    State::new(t.0[0], t.0[1], t.0[2])
}

fn section(p: Pair) -> Result<SectionPoint> {
    SectionPoint::new(p.0[0], p.0[1]).map_err(|e| UsageError(e.to_string()).into())
}

pub fn write_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct EquilibriaReport {
    pub params: SystemParams,
    pub origin: EquilibriumInfo,
    pub z: EquilibriumInfo,
    /// `-Z`, the mirror image of Z under `x3 -> -x3`.
    pub z_mirror: State,
    pub hopf_threshold: f64,
    pub analytic_orbit: Option<AnalyticOrbit>,
}

pub fn equilibria_report(p: &SystemParams) -> EquilibriaReport {
    let (origin, z) = analyze_equilibria(p);
    EquilibriaReport {
        params: *p,
        z_mirror: State::new(0.0, 0.0, -z.location[2]),
        origin,
        z,
        hopf_threshold: hopf_threshold(p),
        analytic_orbit: analytic_orbit(p).ok(),
    }
}

#[derive(Serialize)]
struct NewtonReport {
    point: SectionPoint,
    n: usize,
    /// `[re, im]` pairs.
    multipliers: [[f64; 2]; 2],
    stability: Stability,
    residual: f64,
    params: SystemParams,
}

pub fn write_branch_csv(mut w: impl Write, branch: &Branch) -> Result<()> {
    writeln!(w, "a,x1,x3,mult1_re,mult1_im,mult2_re,mult2_im,stability")?;
    for e in &branch.entries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            fmt_num(e.a),
            fmt_num(e.point.x1),
            fmt_num(e.point.x3),
            fmt_num(e.multipliers[0].re),
            fmt_num(e.multipliers[0].im),
            fmt_num(e.multipliers[1].re),
            fmt_num(e.multipliers[1].im),
            e.stability.label()
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Starting point for continuation: the explicit guess, else the analytic
/// orbit's section point.
pub fn continuation_start(
    p: &SystemParams,
    start: Option<Pair>,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<PeriodicPoint> {
    let guess = match start {
        Some(s) => section(s)?,
        None => {
            let orbit = analytic_orbit(p).map_err(|_| UsageError("--start is required unless a = b".into()))?;
            SectionPoint::new(orbit.rho0, orbit.x3)?
        }
    };
    Ok(newton_periodic(p, &guess, n, cfg, &NewtonOptions::default())?)
}

pub fn write_sweep_csv(mut w: impl Write, diagrams: &[plchaos::continuation::SweepDiagram]) -> Result<()> {
    writeln!(w, "a,x1")?;
    for d in diagrams {
        for (a, kept) in d.values.iter().zip(&d.retained) {
            for s in kept {
                writeln!(w, "{},{}", fmt_num(*a), fmt_num(s.x1))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Both sides of the manifold joined through the saddle into one polyline.
pub fn joined_manifold(curves: &[ManifoldCurve]) -> Vec<SectionPoint> {
    match curves {
        [one] => one.points.clone(),
        [plus, minus] => {
            let mut pts: Vec<SectionPoint> = plus.points.iter().rev().copied().collect();
            pts.push(plus.source.point);
            pts.extend_from_slice(&minus.points);
            pts
        }
        _ => Vec::new(),
    }
}

pub fn write_arc_csv(mut w: impl Write, pts: &[SectionPoint]) -> Result<()> {
    writeln!(w, "arc_index,x1,x3")?;
    for (i, s) in pts.iter().enumerate() {
        writeln!(w, "{},{},{}", i, fmt_num(s.x1), fmt_num(s.x3))?;
    }
    w.flush()?;
    Ok(())
}

pub fn random_states(seed: u64) -> (State, State) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || State::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    let a = draw();
    let b = draw();
    (a, b)
}

/// Settles the free system onto its attractor.
pub fn settled_state(p: &SystemParams, transient: f64, cfg: &IntegratorConfig) -> Result<State> {
    Ok(flow(&p.with_gain(0.0)?, &State::new(1.0, 0.0, 1.0), transient, cfg)?)
}

fn events_path(events: Option<PathBuf>, out: Option<&Path>) -> Option<PathBuf> {
    events.or_else(|| out.map(|o| o.with_extension("events.json")))
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { common, x0, t_end, stride } => {
            let p = common.system(CASCADE)?;
            let cfg = common.integrator()?;
            let output = stride.map_or(Output::Steps, Output::Stride);
            let (traj, _) = integrate_logged(&p, &state(x0), t_end, &cfg, output)?;
            let mut w = open_out(common.out.as_deref())?;
            traj.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Regions { common, x0, t_end, stride, transitions } => {
            let p = common.system(CASCADE)?;
            let cfg = common.integrator()?;
            let output = stride.map_or(Output::Steps, Output::Stride);
            let (traj, log) = integrate_logged(&p, &state(x0), t_end, &cfg, output)?;
            let regions = regions_along(&p, &traj);
            let mut w = open_out(common.out.as_deref())?;
            writeln!(w, "t,x1,x2,x3,region")?;
            for ((t, x), r) in traj.samples.iter().zip(regions) {
                writeln!(w, "{},{},{},{},{}", fmt_num(*t), fmt_num(x[0]), fmt_num(x[1]), fmt_num(x[2]), r.label())?;
            }
            w.flush()?;
            if let Some(path) = transitions {
                let entries: &Vec<Transition> = &log.entries;
                write_json(open_out(Some(&path))?, entries)?;
            }
        }
        Command::Equilibria { common } => {
            let p = common.system(CASCADE)?;
            write_json(open_out(common.out.as_deref())?, &equilibria_report(&p))?;
        }
        Command::Poincare { common, start, iterations } => {
            let p = common.system(ATTRACTORS)?;
            let cfg = common.integrator()?;
            let pts = orbit(&p, &section(start)?, iterations, &cfg)?;
            let mut w = open_out(common.out.as_deref())?;
            writeln!(w, "iter,x1,x3")?;
            for (i, s) in pts.iter().enumerate() {
                writeln!(w, "{},{},{}", i, fmt_num(s.x1), fmt_num(s.x3))?;
            }
            w.flush()?;
        }
        Command::Newton { common, start, period } => {
            let p = common.system(CASCADE)?;
            let cfg = common.integrator()?;
            let pt = continuation_start(&p, start, period, &cfg)?;
            let m = pt.multipliers;
            let report = NewtonReport {
                point: pt.point,
                n: pt.n,
                multipliers: [[m[0].re, m[0].im], [m[1].re, m[1].im]],
                stability: pt.stability,
                residual: pt.residual,
                params: pt.params,
            };
            write_json(open_out(common.out.as_deref())?, &report)?;
        }
        Command::Continue { common, start, period, param, range, h0, h_min, h_max, backward, events } => {
            let p = common.system(CASCADE)?;
            let cfg = common.integrator()?;
            if !(h_min > 0.0 && h_min <= h0 && h0 <= h_max) {
                return Err(UsageError("need 0 < h-min <= h0 <= h-max".into()).into());
            }
            let pt = continuation_start(&p, start, period, &cfg)?;
            let mut opts = ContinuationOptions::new(param, (range.0, range.1));
            opts.step = StepControl { h0, h_min, h_max };
            if backward {
                // only the sign of the parameter component matters
                opts.initial_direction = Some(State::new(0.0, 0.0, -1.0));
            }
            let (branch, evs) = continue_branch(&pt, &opts, &cfg)?;
            write_branch_csv(open_out(common.out.as_deref())?, &branch)?;
            match events_path(events, common.out.as_deref()) {
                Some(path) => write_json(open_out(Some(&path))?, &evs)?,
                None => write_json(io::stderr().lock(), &evs)?,
            }
        }
        Command::Sweep { common, a, param, seeds, iterations, keep } => {
            let p = common.system(ATTRACTORS)?;
            let cfg = common.integrator()?;
            let seeds: Vec<SectionPoint> = seeds.0.iter().map(|s| section(Pair(*s))).collect::<Result<_>>()?;
            let grid = SweepGrid { param, lo: a.0, hi: a.1, steps: a.2 };
            let opts = SweepOptions { iterations, keep };
            if keep > iterations {
                return Err(UsageError("--keep must not exceed --iterations".into()).into());
            }
            let diagrams = sweep(&p, &seeds, &grid, &opts, &cfg)?;
            write_sweep_csv(open_out(common.out.as_deref())?, &diagrams)?;
        }
        Command::Manifold { common, kind, start, period, side, eps, gap_max, n0, iters, seeds, t_end, stride } => {
            let cfg = common.integrator()?;
            match kind {
                ManifoldKind::Map => {
                    let p = common.system(ATTRACTORS)?;
                    let saddle = newton_periodic(&p, &section(start)?, period, &cfg, &NewtonOptions::default())?;
                    let opts = ManifoldOptions { eps, gap_max, n0, n_iters: iters, ..Default::default() };
                    let sides: &[i8] = match side {
                        Side::Both => &[1, -1],
                        Side::Plus => &[1],
                        Side::Minus => &[-1],
                    };
                    let curves = sides
                        .iter()
                        .map(|&s| unstable_manifold_map(&saddle, s, &opts, &cfg))
                        .collect::<Result<Vec<_>, _>>()?;
                    write_arc_csv(open_out(common.out.as_deref())?, &joined_manifold(&curves))?;
                }
                ManifoldKind::Equilibrium => {
                    let p = common.system(SURFACE)?;
                    let fan = unstable_manifold_equilibrium(&p, eps.unwrap_or(1e-3), seeds, t_end, stride, &cfg)?;
                    let mut w = open_out(common.out.as_deref())?;
                    fan.write_csv(&mut w)?;
                    w.flush()?;
                }
            }
        }
        Command::Control { common, gain, x0, transient, t_end, stride } => {
            let p = common.system(CONTROL)?.with_gain(gain).map_err(|e| UsageError(e.to_string()))?;
            let cfg = common.integrator()?;
            let x0 = match x0 {
                Some(x) => state(x),
                None => settled_state(&p, transient, &cfg)?,
            };
            let run = run_controlled(&p, &x0, t_end, stride, &cfg)?;
            let mut w = open_out(common.out.as_deref())?;
            run.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Sync { common, xm0, xs0, seed, t_end, stride, direct } => {
            let p = common.system(SYNC)?;
            let cfg = common.integrator()?;
            let (rm, rs) = random_states(seed);
            let xm0 = xm0.map_or(rm, state);
            let xs0 = xs0.map_or(rs, state);
            let run = if direct {
                run_sync_direct(&p, &xm0, &xs0, t_end, stride, &cfg)?
            } else {
                run_sync(&p, &xm0, &xs0, t_end, stride, &cfg)?
            };
            let mut w = open_out(common.out.as_deref())?;
            run.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Lyapunov { common, x0, t_end, renorm, transient } => {
            let p = common.system(ATTRACTORS)?;
            let cfg = common.integrator()?;
            let opts = LyapunovOptions { t_end, renorm_interval: renorm, transient };
            let est = largest_lyapunov(&p, &state(x0), &opts, &cfg)?;
            #[derive(Serialize)]
            struct Report {
                params: SystemParams,
                x0: State,
                t_end: f64,
                renorm_interval: f64,
                transient: f64,
                exponent: f64,
            }
            let report =
                Report { params: p, x0: state(x0), t_end, renorm_interval: renorm, transient, exponent: est.exponent };
            write_json(open_out(common.out.as_deref())?, &report)?;
        }
        Command::Reproduce { .. } => unreachable!("handled by the caller"),
    }
    Ok(())
}
