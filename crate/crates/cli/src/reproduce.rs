//! Reference data sets, each with its parameter values built in.
//!
//! Every CSV starts with a `# params=..., seed=..., version=...` line; JSON
//! files carry the same information in a `meta` object.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use plchaos::continuation::{
    capture_attractor, continue_branch, sweep, switch_branch, BifurcationEvent, BifurcationKind, Branch,
    ContinuationOptions, SweepGrid, SweepOptions, SwitchOptions,
};
use plchaos::control::{run_controlled, run_sync};
use plchaos::integrate::{fmt_num, IntegratorConfig};
use plchaos::manifold::{unstable_manifold_equilibrium, unstable_manifold_map, ManifoldOptions};
use plchaos::pl_core::{classify_region, nevalues, RegionId, DEFAULT_BOUNDARY_TOL};
use plchaos::poincare::{newton_periodic, NewtonOptions, PeriodicPoint, SectionPoint, Stability};
use plchaos::{Param, State, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands::{
    equilibria_report, joined_manifold, open_out, random_states, settled_state, write_arc_csv, write_branch_csv,
    write_json, write_sweep_csv, ATTRACTORS, CASCADE, CONTROL, SURFACE, SYNC,
};
use crate::Figure;

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Samples drawn per region for the region table.
const TABLE1_SAMPLES: usize = 8;

/// Attractor seeds: the two stable period-2 points before the cascade.
const SEEDS: [[f64; 2]; 2] = [[2.633, 0.00129], [3.203, 0.03657]];

/// Further period doublings followed past the first one.
const CASCADE_LEVELS: u32 = 3;

#[derive(Serialize)]
struct Meta {
    params: SystemParams,
    seed: u64,
    version: &'static str,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    meta: Meta,
    data: &'a T,
}

struct Ctx<'a> {
    dir: &'a Path,
    seed: u64,
    cfg: &'a IntegratorConfig,
}

impl Ctx<'_> {
    fn csv(&self, name: &str, p: &SystemParams) -> Result<Box<dyn Write>> {
        let mut w = open_out(Some(&self.dir.join(name)))?;
        writeln!(w, "# params={p}, seed={}, version={VERSION}", self.seed)?;
        Ok(w)
    }

    fn json<T: Serialize>(&self, name: &str, p: &SystemParams, data: &T) -> Result<()> {
        let meta = Meta { params: *p, seed: self.seed, version: VERSION };
        write_json(open_out(Some(&self.dir.join(name)))?, &Tagged { meta, data })
    }
}

fn params(v: [f64; 6]) -> SystemParams {
    SystemParams::from_slice(&v).expect("built-in parameters are valid")
}

pub fn reproduce(figure: Figure, out_dir: &Path, seed: u64, cfg: &IntegratorConfig) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let ctx = Ctx { dir: out_dir, seed, cfg };
    match figure {
        Figure::Table1 => table1(&ctx),
        Figure::Fig3 => fig3(&ctx),
        Figure::Fig4 => fig4(&ctx),
        Figure::Fig5 => fig5(&ctx),
        Figure::Fig6 => fig6(&ctx),
        Figure::Fig7 => fig7(&ctx),
        Figure::Fig8 => fig8(&ctx),
        Figure::All => {
            table1(&ctx)?;
            fig3(&ctx)?;
            fig4(&ctx)?;
            fig5(&ctx)?;
            fig6(&ctx)?;
            fig7(&ctx)?;
            fig8(&ctx)
        }
    }
}

/// Random points of each region with their NEValues.
fn table1(ctx: &Ctx) -> Result<()> {
    let p = params(CASCADE);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let regions = [RegionId::R1, RegionId::R2, RegionId::R3, RegionId::R4];
    let mut found: Vec<Vec<State>> = vec![Vec::new(); regions.len()];
    while found.iter().any(|f| f.len() < TABLE1_SAMPLES) {
        let x = State::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let r = classify_region(&p, &x, DEFAULT_BOUNDARY_TOL);
        if let Some(i) = regions.iter().position(|&q| q == r) {
            if found[i].len() < TABLE1_SAMPLES {
                found[i].push(x);
            }
        }
    }
    let mut w = ctx.csv("table1_regions.csv", &p)?;
    writeln!(w, "region,x1,x2,x3,lambda12_re,lambda12_im,lambda3")?;
    for (r, xs) in regions.iter().zip(&found) {
        for x in xs {
            let ne = nevalues(&p, x);
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.label(),
                fmt_num(x[0]),
                fmt_num(x[1]),
                fmt_num(x[2]),
                fmt_num(ne.lambda12_re),
                fmt_num(ne.lambda12_im),
                fmt_num(ne.lambda3)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fig3(ctx: &Ctx) -> Result<()> {
    let p = params(SURFACE);
    let fan = unstable_manifold_equilibrium(&p, 1e-3, 5, 100.0, 0.05, ctx.cfg)?;
    let mut w = ctx.csv("fig3_manifold_z.csv", &p)?;
    fan.write_csv(&mut w)?;
    w.flush()?;
    ctx.json("fig3_equilibria.json", &p, &equilibria_report(&p))
}

struct Diagram {
    symmetric: Branch,
    pitchfork: Vec<Branch>,
    cascade: Vec<Branch>,
    events: Vec<BifurcationEvent>,
}

/// Symmetric branch, the pitchfork pair and the period-doubling cascade on
/// the first emanating branch.
fn diagram(cfg: &IntegratorConfig) -> Result<Diagram> {
    let p = params(CASCADE);
    // the analytic orbit at a = b = 1
    let start = SectionPoint::new(((p.r * p.r - p.h * p.h) / p.a).sqrt(), p.h)?;
    let pt = newton_periodic(&p, &start, 1, cfg, &NewtonOptions::default())?;
    let opts = ContinuationOptions::new(Param::A, (1.0, 1.3));
    let (symmetric, mut events) = continue_branch(&pt, &opts, cfg)?;

    let mut pitchfork = Vec::new();
    if let Some(bp) = events.iter().find(|e| e.kind == BifurcationKind::BranchPoint).cloned() {
        for seed in switch_branch(&bp, &SwitchOptions::default(), cfg)? {
            let (b, ev) = continue_branch(&seed, &opts, cfg)?;
            events.extend(ev);
            pitchfork.push(b);
        }
    }

    let mut cascade = Vec::new();
    let first_pd = events
        .iter()
        .filter(|e| e.kind == BifurcationKind::PeriodDoubling && e.n == 1)
        .min_by(|x, y| x.a.total_cmp(&y.a))
        .cloned();
    if let Some(mut pd) = first_pd {
        for level in 0..CASCADE_LEVELS {
            let next = &switch_branch(&pd, &SwitchOptions::default(), cfg)?[0];
            // finer steps as the doublings crowd together
            let mut o = ContinuationOptions::new(Param::A, (1.17, 1.21));
            o.step.h_max = 2e-3 / f64::from(1 << level);
            o.step.h0 = o.step.h_max / 4.0;
            let (b, ev) = continue_branch(next, &o, cfg)?;
            let found = ev.iter().find(|e| e.kind == BifurcationKind::PeriodDoubling && e.a > pd.a).cloned();
            events.extend(ev);
            cascade.push(b);
            match found {
                Some(e) => pd = e,
                None => break,
            }
        }
    }
    Ok(Diagram { symmetric, pitchfork, cascade, events })
}

fn fig4(ctx: &Ctx) -> Result<()> {
    let p = params(CASCADE);
    let d = diagram(ctx.cfg)?;
    write_branch_csv(ctx.csv("fig4_branch_symmetric.csv", &p)?, &d.symmetric)?;
    for (b, name) in d.pitchfork.iter().zip(["a", "b"]) {
        write_branch_csv(ctx.csv(&format!("fig4_branch_pitchfork_{name}.csv"), &p)?, b)?;
    }
    for b in &d.cascade {
        write_branch_csv(ctx.csv(&format!("fig4_branch_period{}.csv", b.n), &p)?, b)?;
    }
    ctx.json("fig4_events.json", &p, &d.events)
}

fn fig5(ctx: &Ctx) -> Result<()> {
    let p = params(ATTRACTORS);
    let seeds: Vec<SectionPoint> = SEEDS.iter().map(|s| SectionPoint::new(s[0], s[1])).collect::<Result<_, _>>()?;
    let grid = SweepGrid { param: Param::A, lo: 1.197, hi: 1.205, steps: 1000 };
    let diagrams = sweep(&p, &seeds, &grid, &SweepOptions::default(), ctx.cfg)?;
    write_sweep_csv(ctx.csv("fig5_sweep.csv", &p)?, &diagrams)
}

/// The two attractors and the unstable manifolds of the nearest saddles.
fn fig6(ctx: &Ctx) -> Result<()> {
    let p = params(ATTRACTORS);
    let saddles: Vec<PeriodicPoint> = diagram(ctx.cfg)?
        .pitchfork
        .iter()
        .flat_map(|b| b.points_at(p.a, ctx.cfg))
        .filter(|s| s.stability == Stability::Saddle && s.multipliers[0].im == 0.0)
        .collect();
    for (k, s) in SEEDS.iter().enumerate() {
        let att = capture_attractor(&p, &SectionPoint::new(s[0], s[1])?, 500, 5000, ctx.cfg)?;
        let mut w = ctx.csv(&format!("fig6_attractor_{k}.csv"), &p)?;
        writeln!(w, "iter,x1,x3")?;
        for (i, q) in att.points.iter().enumerate() {
            writeln!(w, "{},{},{}", i, fmt_num(q.x1), fmt_num(q.x3))?;
        }
        w.flush()?;

        let n = att.points.len() as f64;
        let centre = SectionPoint {
            x1: att.points.iter().map(|q| q.x1).sum::<f64>() / n,
            x3: att.points.iter().map(|q| q.x3).sum::<f64>() / n,
        };
        let saddle = saddles
            .iter()
            .min_by(|x, y| x.point.distance(&centre).total_cmp(&y.point.distance(&centre)))
            .context("no saddle with a real unstable multiplier at a = 1.205")?;
        let curves = [1i8, -1]
            .iter()
            .map(|&side| unstable_manifold_map(saddle, side, &ManifoldOptions::default(), ctx.cfg))
            .collect::<Result<Vec<_>, _>>()?;
        write_arc_csv(ctx.csv(&format!("fig6_manifold_{k}.csv"), &p)?, &joined_manifold(&curves))?;
    }
    Ok(())
}

fn fig7(ctx: &Ctx) -> Result<()> {
    let free = params(CONTROL);
    let p = free.with_gain(1.1)?;
    let x0 = settled_state(&free, 20.0, ctx.cfg)?;
    let run = run_controlled(&p, &x0, 50.0, 0.01, ctx.cfg)?;
    let mut w = ctx.csv("fig7_control.csv", &p)?;
    run.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn fig8(ctx: &Ctx) -> Result<()> {
    let p = params(SYNC);
    let (xm0, xs0) = random_states(ctx.seed);
    let run = run_sync(&p, &xm0, &xs0, 5.0, 0.01, ctx.cfg)?;
    let mut w = ctx.csv("fig8_sync.csv", &p)?;
    run.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}
