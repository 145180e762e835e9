//! Unstable manifolds: one-dimensional manifolds of saddle points of the
//! return map grown from fundamental domains, and the two-dimensional
//! unstable manifold of Z sampled by a fan of orbits.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{fmt_num, integrate_logged, IntegratorConfig, Output, Trajectory};
use crate::pl_core::SystemParams;
use crate::poincare::{eigenvector2, iterate_map, PeriodicPoint, SectionPoint, Stability};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldOptions {
    /// Offset of the fundamental domain from the saddle; `None` selects
    /// `1e-4` times the size of the saddle coordinates.
    pub eps: Option<f64>,
    pub gap_max: f64,
    /// Points in the initial fundamental domain.
    pub n0: usize,
    /// Number of times the fundamental domain is mapped forward.
    pub n_iters: usize,
    /// Cap on the number of points of one image of the domain.
    pub max_points: usize,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        ManifoldOptions { eps: None, gap_max: 1e-3, n0: 64, n_iters: 8, max_points: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldCurve {
    pub source: PeriodicPoint,
    /// Direction along the unstable eigenvector, `+1` or `-1`.
    pub side: i8,
    pub eps: f64,
    /// Power of the return map that generates the curve (`n`, or `2n` for a
    /// negative unstable multiplier).
    pub map_power: usize,
    pub points: Vec<SectionPoint>,
    /// True when some image was truncated at `max_points`.
    pub truncated: bool,
}

impl ManifoldCurve {
    pub fn arclength(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    pub fn max_gap(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(&w[1])).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "arc_index,x1,x3")?;
        for (i, s) in self.points.iter().enumerate() {
            writeln!(w, "{},{},{}", i, fmt_num(s.x1), fmt_num(s.x3))?;
        }
        Ok(())
    }
}

/// Distance from `x` to a polyline.
pub fn distance_to_polyline(x: &SectionPoint, line: &[SectionPoint]) -> f64 {
    if line.len() == 1 {
        return x.distance(&line[0]);
    }
    let p = x.to_vector();
    line.windows(2)
        .map(|w| {
            let (a, b) = (w[0].to_vector(), w[1].to_vector());
            let d = b - a;
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (p - (a + d * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `max_{x in points} dist(x, line)`.
pub fn directed_distance_to_polyline(points: &[SectionPoint], line: &[SectionPoint]) -> f64 {
    points.par_iter().map(|x| distance_to_polyline(x, line)).reduce(|| 0.0, f64::max)
}

/// Unstable manifold of a saddle point of `P^n` on one side.
///
/// The fundamental domain is the segment from `s + eps v` to its image; its
/// images under the map are concatenated, and gaps larger than `gap_max` are
/// closed by inserting preimages from the fundamental domain.
pub fn unstable_manifold_map(
    saddle: &PeriodicPoint,
    side: i8,
    opts: &ManifoldOptions,
    cfg: &IntegratorConfig,
) -> Result<ManifoldCurve> {
    if saddle.stability != Stability::Saddle {
        return Err(Error::NotASaddle);
    }
    let mu = saddle.multipliers[0];
    if mu.im != 0.0 {
        return Err(Error::ComplexUnstableMultiplier);
    }
    if side != 1 && side != -1 {
        return Err(Error::InvalidArgument("side must be +1 or -1".into()));
    }
    if !(opts.gap_max > 0.0) || opts.n0 < 2 {
        return Err(Error::InvalidArgument("need gap_max > 0 and n0 >= 2".into()));
    }
    let power = if mu.re < 0.0 { 2 * saddle.n } else { saddle.n };
    let p = saddle.params;
    let s = saddle.point.to_vector();
    let scale = s.norm();
    let eps = opts.eps.unwrap_or(1e-4 * scale);
    let v = eigenvector2(&saddle.jacobian, mu.re) * f64::from(side);

    let start = SectionPoint::from_vector(&(s + v * eps))?;
    let end = iterate_map(&p, &start, power, cfg)?;
    let (a, b) = (start.to_vector(), end.to_vector());
    let domain = |tau: f64| SectionPoint::from_vector(&(a + (b - a) * tau));

    let mut taus: Vec<f64> = (0..opts.n0).map(|i| i as f64 / (opts.n0 - 1) as f64).collect();
    let mut level: Vec<SectionPoint> = taus.iter().map(|&t| domain(t)).collect::<Result<_>>()?;
    let mut points = level.clone();
    let mut truncated = false;

    for k in 1..=opts.n_iters {
        let mut imgs: Vec<SectionPoint> =
            level.par_iter().map(|x| iterate_map(&p, x, power, cfg)).collect::<Result<_>>()?;
        // refine: preimages of the midpoints, pushed through k map powers
        loop {
            let wide: Vec<usize> = (0..imgs.len() - 1)
                .filter(|&i| imgs[i].distance(&imgs[i + 1]) > opts.gap_max && taus[i + 1] - taus[i] > 1e-15)
                .collect();
            if wide.is_empty() {
                break;
            }
            if imgs.len() + wide.len() > opts.max_points {
                truncated = true;
                break;
            }
            let mids: Vec<f64> = wide.iter().map(|&i| 0.5 * (taus[i] + taus[i + 1])).collect();
            let new: Vec<(SectionPoint, SectionPoint)> = mids
                .par_iter()
                .map(|&t| {
                    let x0 = domain(t)?;
                    let mut x = x0;
                    for _ in 0..k - 1 {
                        x = iterate_map(&p, &x, power, cfg)?;
                    }
                    Ok((x, iterate_map(&p, &x, power, cfg)?))
                })
                .collect::<Result<_>>()?;
            let mut t2 = Vec::with_capacity(taus.len() + mids.len());
            let mut l2 = Vec::with_capacity(t2.capacity());
            let mut i2 = Vec::with_capacity(t2.capacity());
            let mut w = 0;
            for i in 0..taus.len() {
                t2.push(taus[i]);
                l2.push(level[i]);
                i2.push(imgs[i]);
                if w < wide.len() && wide[w] == i {
                    t2.push(mids[w]);
                    l2.push(new[w].0);
                    i2.push(new[w].1);
                    w += 1;
                }
            }
            taus = t2;
            level = l2;
            imgs = i2;
        }
        // the first image coincides with the last point of the previous level
        points.extend_from_slice(&imgs[1..]);
        level = imgs;
    }

    Ok(ManifoldCurve { source: saddle.clone(), side, eps, map_power: power, points, truncated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFan {
    pub params: SystemParams,
    pub eps: f64,
    pub seeds: Vec<Vector3<f64>>,
    pub orbits: Vec<Trajectory>,
}

impl SurfaceFan {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "seed,t,x1,x2,x3")?;
        for (i, orbit) in self.orbits.iter().enumerate() {
            for (t, x) in &orbit.samples {
                writeln!(w, "{},{},{},{},{}", i, fmt_num(*t), fmt_num(x[0]), fmt_num(x[1]), fmt_num(x[2]))?;
            }
        }
        Ok(())
    }
}

/// Orbits started on a circle of radius `eps` around Z in the horizontal
/// plane through Z, sampled every `stride` time units up to `t_end`.
pub fn unstable_manifold_equilibrium(
    p: &SystemParams,
    eps: f64,
    n_seeds: usize,
    t_end: f64,
    stride: f64,
    cfg: &IntegratorConfig,
) -> Result<SurfaceFan> {
    if p.r * p.r / p.c - p.h * p.h <= 0.0 {
        return Err(Error::ZStable);
    }
    if !(eps >= 0.0) || n_seeds == 0 {
        return Err(Error::InvalidArgument("need eps >= 0 and at least one seed".into()));
    }
    let z3 = p.r / p.c.sqrt();
    let seeds: Vec<Vector3<f64>> = (0..n_seeds)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n_seeds as f64;
            Vector3::new(eps * phi.cos(), eps * phi.sin(), z3)
        })
        .collect();
    let orbits = seeds
        .par_iter()
        .map(|x0| integrate_logged(p, x0, t_end, cfg, Output::Stride(stride)).map(|(t, _)| t))
        .collect::<Result<_>>()?;
    Ok(SurfaceFan { params: *p, eps, seeds, orbits })
}
