//! Pseudo-arclength continuation of period-`n` points of the return map in
//! one system constant, with detection of +1 and -1 multiplier crossings,
//! branch switching, brute-force sweeps and attractor sampling.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::IntegratorConfig;
use crate::pl_core::{Param, SystemParams};
use crate::poincare::{
    eigenvalues2, eigenvector2, iterate_map, iterate_with_sensitivity, newton_periodic, poincare_map, NewtonOptions,
    PeriodicPoint, SectionPoint, Stability,
};

/// Clustering tolerance used when counting distinct iterates.
pub const DISTINCT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { h0: 1e-3, h_min: 1e-7, h_max: 5e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    pub param: Param,
    pub range: (f64, f64),
    pub step: StepControl,
    /// Residual tolerance of the corrector.
    pub tol: f64,
    pub corrector_max_iter: usize,
    pub max_points: usize,
    /// Width (in arclength, hence also in the parameter) of located event brackets.
    pub event_tol: f64,
    /// Orientation hint for the first step; by default the parameter increases.
    pub initial_direction: Option<Vector3<f64>>,
}

impl ContinuationOptions {
    pub fn new(param: Param, range: (f64, f64)) -> Self {
        ContinuationOptions {
            param,
            range,
            step: StepControl::default(),
            tol: 1e-10,
            corrector_max_iter: 8,
            max_points: 5000,
            event_tol: 1e-5,
            initial_direction: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BifurcationKind {
    Fold,
    BranchPoint,
    PeriodDoubling,
    /// Complex pair crossing the unit circle; located but not continued.
    Unknown,
}

impl BifurcationKind {
    pub fn label(self) -> &'static str {
        match self {
            BifurcationKind::Fold => "FOLD",
            BifurcationKind::BranchPoint => "BRANCH_POINT",
            BifurcationKind::PeriodDoubling => "PERIOD_DOUBLING",
            BifurcationKind::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: BifurcationKind,
    pub param: Param,
    /// Parameter value at the bracket midpoint.
    pub a: f64,
    pub point: SectionPoint,
    /// Period of the branch on which the event was found.
    pub n: usize,
    /// Parameters at the event.
    pub params: SystemParams,
    pub multipliers: [Complex64; 2],
    /// Parameter values at the two ends of the final bracket.
    pub bracket: (f64, f64),
    /// Multipliers at the two ends of the final bracket.
    pub bracket_multipliers: ([Complex64; 2], [Complex64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchEntry {
    pub a: f64,
    pub point: SectionPoint,
    pub multipliers: [Complex64; 2],
    pub stability: Stability,
    /// Parameter component of the unit tangent.
    pub tangent_a: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// The parameter left the requested range.
    RangeExit,
    MaxPoints,
    /// The step size dropped below `h_min`; the branch is partial.
    StepUnderflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub n: usize,
    pub param: Param,
    pub base: SystemParams,
    pub entries: Vec<BranchEntry>,
    pub termination: Termination,
}

/// Solution of the augmented problem at one point `u = (x1, x3, a)`.
#[derive(Debug, Clone, Copy)]
struct Solved {
    u: Vector3<f64>,
    dp: Matrix2<f64>,
    tangent: Vector3<f64>,
    residual: f64,
}

impl Solved {
    fn multipliers(&self) -> [Complex64; 2] {
        eigenvalues2(&self.dp)
    }

    fn phi_plus(&self) -> f64 {
        (self.dp - Matrix2::identity()).determinant()
    }

    fn phi_minus(&self) -> f64 {
        (self.dp + Matrix2::identity()).determinant()
    }

    fn phi_ns(&self) -> f64 {
        self.dp.determinant() - 1.0
    }

    fn is_complex(&self) -> bool {
        self.multipliers()[0].im != 0.0
    }

    fn point(&self) -> SectionPoint {
        SectionPoint { x1: self.u[0], x3: self.u[1] }
    }
}

struct Problem<'a> {
    base: SystemParams,
    n: usize,
    opts: &'a ContinuationOptions,
    cfg: &'a IntegratorConfig,
}

impl Problem<'_> {
    fn params_at(&self, a: f64) -> SystemParams {
        self.base.with(self.opts.param, a)
    }

    /// `G(u) = P^n(s) - s`, `DP^n` and `dP^n/da`.
    fn eval(&self, u: &Vector3<f64>) -> Result<(Vector2<f64>, Matrix2<f64>, Vector2<f64>)> {
        if !(u[2] > 0.0) {
            return Err(Error::InvalidParams(format!("{} left the positive range", self.opts.param.name())));
        }
        let s = SectionPoint::new(u[0], u[1])?;
        let (img, dp, da) = iterate_with_sensitivity(&self.params_at(u[2]), &s, self.n, self.opts.param, self.cfg)?;
        Ok((img.to_vector() - s.to_vector(), dp, da))
    }

    /// Newton on `G(u) = 0`, `normal . (u - anchor) = 0`.
    fn correct(&self, guess: Vector3<f64>, normal: Vector3<f64>, anchor: Vector3<f64>) -> Result<Solved> {
        let mut u = guess;
        let mut last_res = f64::INFINITY;
        for it in 0..=self.opts.corrector_max_iter {
            let (g, dp, da) = self.eval(&u)?;
            let res = g.norm();
            let constraint = normal.dot(&(u - anchor));
            if res < self.opts.tol && constraint.abs() < 1e-9 {
                let tangent = kernel(&dp, &da);
                return Ok(Solved { u, dp, tangent, residual: res });
            }
            if it == self.opts.corrector_max_iter || (it > 2 && res > last_res) {
                return Err(Error::NoConvergence { iterations: it, residual: res });
            }
            last_res = res;
            let dg = dp - Matrix2::identity();
            let jac = Matrix3::new(
                dg[(0, 0)],
                dg[(0, 1)],
                da[0],
                dg[(1, 0)],
                dg[(1, 1)],
                da[1],
                normal[0],
                normal[1],
                normal[2],
            );
            let rhs = Vector3::new(-g[0], -g[1], -constraint);
            let du = jac.lu().solve(&rhs).ok_or(Error::SingularJacobian(jac.determinant().abs()))?;
            u += du;
        }
        unreachable!()
    }
}

/// Unit kernel of the 2x3 matrix `[DP - I | dP/da]`.
fn kernel(dp: &Matrix2<f64>, da: &Vector2<f64>) -> Vector3<f64> {
    let r0 = Vector3::new(dp[(0, 0)] - 1.0, dp[(0, 1)], da[0]);
    let r1 = Vector3::new(dp[(1, 0)], dp[(1, 1)] - 1.0, da[1]);
    let k = r0.cross(&r1);
    let nk = k.norm();
    if nk == 0.0 {
        Vector3::new(0.0, 0.0, 1.0)
    } else {
        k / nk
    }
}

fn entry_of(s: &Solved) -> BranchEntry {
    let m = s.multipliers();
    BranchEntry {
        a: s.u[2],
        point: s.point(),
        multipliers: m,
        stability: Stability::from_multipliers(&m),
        tangent_a: s.tangent[2],
        residual: s.residual,
    }
}

fn oriented(t: Vector3<f64>, reference: &Vector3<f64>) -> Vector3<f64> {
    if t.dot(reference) < 0.0 {
        -t
    } else {
        t
    }
}

/// Continues a converged periodic point in `opts.param`.
pub fn continue_branch(
    start: &PeriodicPoint,
    opts: &ContinuationOptions,
    cfg: &IntegratorConfig,
) -> Result<(Branch, Vec<BifurcationEvent>)> {
    let base = start.params;
    let a0 = base.get(opts.param);
    let (lo, hi) = opts.range;
    if !(lo < hi) || a0 < lo || a0 > hi {
        return Err(Error::InvalidArgument(format!("start value {a0} outside continuation range [{lo}, {hi}]")));
    }
    let prob = Problem { base, n: start.n, opts, cfg };
    let u0 = Vector3::new(start.point.x1, start.point.x3, a0);
    let (g0, dp0, da0) = prob.eval(&u0)?;
    if g0.norm() >= 10.0 * opts.tol {
        return Err(Error::StartNotConverged(g0.norm()));
    }
    let hint = opts.initial_direction.unwrap_or(Vector3::new(0.0, 0.0, 1.0));
    let first = Solved { u: u0, dp: dp0, tangent: oriented(kernel(&dp0, &da0), &hint), residual: g0.norm() };

    let mut solved = vec![first];
    let mut events = Vec::new();
    let mut h = opts.step.h0;
    let mut successes = 0;
    let mut direction = first.tangent;
    let termination;

    loop {
        if solved.len() >= opts.max_points {
            termination = Termination::MaxPoints;
            break;
        }
        let cur = *solved.last().unwrap();
        let pred = cur.u + direction * h;
        let attempt = prob.correct(pred, direction, pred).and_then(|s| {
            let jump = (s.u - pred).norm();
            if jump > h {
                Err(Error::NoConvergence { iterations: 0, residual: jump })
            } else {
                Ok(s)
            }
        });
        let next = match attempt {
            Ok(mut s) => {
                s.tangent = oriented(s.tangent, &direction);
                s
            }
            Err(_) => {
                h *= 0.5;
                successes = 0;
                if h < opts.step.h_min {
                    termination = Termination::StepUnderflow;
                    break;
                }
                continue;
            }
        };

        if next.u[2] < lo || next.u[2] > hi {
            locate_events(&prob, &cur, &next, &mut events);
            termination = Termination::RangeExit;
            break;
        }
        locate_events(&prob, &cur, &next, &mut events);
        // secant predictor for the next step
        let sec = next.u - cur.u;
        direction = sec / sec.norm();
        solved.push(next);
        successes += 1;
        if successes >= 3 {
            h = (h * 1.3).min(opts.step.h_max);
            successes = 0;
        }
    }

    let branch =
        Branch { n: start.n, param: opts.param, base, entries: solved.iter().map(entry_of).collect(), termination };
    Ok((branch, events))
}

fn locate_events(prob: &Problem<'_>, a: &Solved, b: &Solved, events: &mut Vec<BifurcationEvent>) {
    let mut found: Vec<(f64, BifurcationEvent)> = Vec::new();
    if a.phi_plus().signum() != b.phi_plus().signum() {
        let kind = if a.tangent[2].signum() != b.tangent[2].signum() {
            BifurcationKind::Fold
        } else {
            BifurcationKind::BranchPoint
        };
        if let Some(ev) = bisect(prob, a, b, kind, Solved::phi_plus) {
            found.push(ev);
        }
    }
    if a.phi_minus().signum() != b.phi_minus().signum() {
        if let Some(ev) = bisect(prob, a, b, BifurcationKind::PeriodDoubling, Solved::phi_minus) {
            found.push(ev);
        }
    }
    if a.is_complex() && b.is_complex() && a.phi_ns().signum() != b.phi_ns().signum() {
        if let Some(ev) = bisect(prob, a, b, BifurcationKind::Unknown, Solved::phi_ns) {
            found.push(ev);
        }
    }
    found.sort_by(|x, y| x.0.total_cmp(&y.0));
    events.extend(found.into_iter().map(|(_, e)| e));
}

/// Bisection in arclength along the chord from `a` to `b`, correcting every
/// probe back onto the branch. Returns the event and its chord position.
fn bisect(
    prob: &Problem<'_>,
    a: &Solved,
    b: &Solved,
    kind: BifurcationKind,
    test: fn(&Solved) -> f64,
) -> Option<(f64, BifurcationEvent)> {
    let chord = b.u - a.u;
    let len = chord.norm();
    let dir = chord / len;
    let (mut lo, mut hi) = (*a, *b);
    let (mut s_lo, mut s_hi) = (0.0, len);
    let f_lo = test(a).signum();
    let mut iters = 0;
    while s_hi - s_lo > prob.opts.event_tol && iters < 60 {
        iters += 1;
        let s_mid = 0.5 * (s_lo + s_hi);
        let anchor = a.u + dir * s_mid;
        let Ok(mid) = prob.correct(anchor, dir, anchor) else { break };
        if test(&mid).signum() == f_lo {
            lo = mid;
            s_lo = s_mid;
        } else {
            hi = mid;
            s_hi = s_mid;
        }
    }
    let s_mid = 0.5 * (s_lo + s_hi);
    let anchor = a.u + dir * s_mid;
    let mid = prob.correct(anchor, dir, anchor).unwrap_or(lo);
    let param_value = mid.u[2];
    Some((
        s_mid,
        BifurcationEvent {
            kind,
            param: prob.opts.param,
            a: param_value,
            point: mid.point(),
            n: prob.n,
            params: prob.params_at(param_value),
            multipliers: mid.multipliers(),
            bracket: (lo.u[2], hi.u[2]),
            bracket_multipliers: (lo.multipliers(), hi.multipliers()),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchOptions {
    /// Displacement of the seed along the critical eigenvector.
    pub offset: f64,
    /// Maximum distance of the critical multiplier from `±1`.
    pub multiplier_tol: f64,
    pub tol: f64,
    pub corrector_max_iter: usize,
}

impl Default for SwitchOptions {
    fn default() -> Self {
        SwitchOptions { offset: 1e-3, multiplier_tol: 0.05, tol: 1e-10, corrector_max_iter: 12 }
    }
}

/// Seeds on the branches emanating from a branch point (two, one per side of
/// the kernel direction) or a period doubling (one point of doubled period).
///
/// Each seed is corrected with the parameter free on the line through
/// `point ± offset * v` orthogonal to the critical eigenvector `v`.
pub fn switch_branch(
    event: &BifurcationEvent,
    opts: &SwitchOptions,
    cfg: &IntegratorConfig,
) -> Result<Vec<PeriodicPoint>> {
    let target = match event.kind {
        BifurcationKind::BranchPoint => 1.0,
        BifurcationKind::PeriodDoubling => -1.0,
        _ => return Err(Error::NotApplicable(format!("cannot switch at a {}", event.kind.label()))),
    };
    let p = event.params;
    let (_, dp, _) = iterate_with_sensitivity(&p, &event.point, event.n, event.param, cfg)?;
    let mults = eigenvalues2(&dp);
    let near: Vec<&Complex64> = mults.iter().filter(|m| (**m - target).norm() < opts.multiplier_tol).collect();
    if near.len() != 1 || near[0].im != 0.0 {
        // the critical eigenspace must be one-dimensional and real
        return Err(Error::NoConvergence { iterations: 0, residual: f64::NAN });
    }
    let v = eigenvector2(&dp, near[0].re);
    let new_n = if target > 0.0 { event.n } else { 2 * event.n };
    let copts = ContinuationOptions {
        tol: opts.tol,
        corrector_max_iter: opts.corrector_max_iter,
        ..ContinuationOptions::new(event.param, (f64::MIN, f64::MAX))
    };
    let prob = Problem { base: p, n: new_n, opts: &copts, cfg };
    let normal = Vector3::new(v[0], v[1], 0.0);
    let signs: &[f64] = if target > 0.0 { &[1.0, -1.0] } else { &[1.0] };
    let mut out = Vec::new();
    for &sign in signs {
        let anchor = Vector3::new(
            event.point.x1 + sign * opts.offset * v[0],
            event.point.x3 + sign * opts.offset * v[1],
            event.a,
        );
        let solved = prob.correct(anchor, normal, anchor)?;
        let params = prob.params_at(solved.u[2]);
        let multipliers = solved.multipliers();
        out.push(PeriodicPoint {
            point: solved.point(),
            n: new_n,
            params,
            multipliers,
            stability: Stability::from_multipliers(&multipliers),
            jacobian: solved.dp,
            residual: solved.residual,
        });
    }
    Ok(out)
}

/// Ratios `(a_k - a_{k-1}) / (a_{k+1} - a_k)` of successive doublings.
pub fn estimate_feigenbaum(pd_values: &[f64]) -> Result<Vec<f64>> {
    if pd_values.len() < 3 {
        return Err(Error::TooFewEvents);
    }
    Ok(pd_values.windows(3).map(|w| (w[1] - w[0]) / (w[2] - w[1])).collect())
}

/// Parameter grid `lo, ..., hi` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub param: Param,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 0 {
            return vec![self.lo];
        }
        (0..=self.steps).map(|i| self.lo + (self.hi - self.lo) * i as f64 / self.steps as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Iterates per grid value.
    pub iterations: usize,
    /// Trailing iterates kept per grid value.
    pub keep: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { iterations: 600, keep: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDiagram {
    pub seed: SectionPoint,
    pub values: Vec<f64>,
    /// Retained iterates per grid value.
    pub retained: Vec<Vec<SectionPoint>>,
}

impl SweepDiagram {
    /// Number of distinct retained x1-values at grid index `i`.
    pub fn distinct_at(&self, i: usize) -> usize {
        let xs: Vec<f64> = self.retained[i].iter().map(|s| s.x1).collect();
        count_distinct(&xs, DISTINCT_TOL)
    }
}

/// Brute-force diagram for one seed; the last point of each grid value
/// seeds the next.
pub fn sweep_one(
    template: &SystemParams,
    seed: &SectionPoint,
    grid: &SweepGrid,
    opts: &SweepOptions,
    cfg: &IntegratorConfig,
) -> Result<SweepDiagram> {
    if opts.keep > opts.iterations {
        return Err(Error::InvalidArgument("keep must not exceed iterations".into()));
    }
    let values = grid.values();
    let mut retained = Vec::with_capacity(values.len());
    let mut cur = *seed;
    for &a in &values {
        let p = template.with(grid.param, a);
        let mut kept = Vec::with_capacity(opts.keep);
        for i in 0..opts.iterations {
            cur = poincare_map(&p, &cur, cfg).map_err(|e| match e {
                Error::LeftSection { .. } => Error::LeftSectionAt { a },
                other => other,
            })?;
            if i >= opts.iterations - opts.keep {
                kept.push(cur);
            }
        }
        retained.push(kept);
    }
    Ok(SweepDiagram { seed: *seed, values, retained })
}

/// One diagram per seed; seeds run in parallel.
pub fn sweep(
    template: &SystemParams,
    seeds: &[SectionPoint],
    grid: &SweepGrid,
    opts: &SweepOptions,
    cfg: &IntegratorConfig,
) -> Result<Vec<SweepDiagram>> {
    seeds.par_iter().map(|s| sweep_one(template, s, grid, opts, cfg)).collect()
}

/// Number of clusters of `values` when neighbours closer than `tol` merge.
pub fn count_distinct(values: &[f64], tol: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    1 + v.windows(2).filter(|w| w[1] - w[0] > tol).count()
}

/// Same for section points (single linkage in the Euclidean metric, via a
/// sort on x1 plus a window scan).
pub fn count_distinct_points(points: &[SectionPoint], tol: f64) -> usize {
    let n = points.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| points[i].x1.total_cmp(&points[j].x1));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            let (i, j) = (idx[a], idx[b]);
            if points[j].x1 - points[i].x1 > tol {
                break;
            }
            if points[i].distance(&points[j]) <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri] = rj;
            }
        }
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorSample {
    pub a: f64,
    pub params: SystemParams,
    pub transient: usize,
    pub points: Vec<SectionPoint>,
}

/// Discards `transient` iterates of the return map and keeps the next `keep`.
pub fn capture_attractor(
    p: &SystemParams,
    seed: &SectionPoint,
    transient: usize,
    keep: usize,
    cfg: &IntegratorConfig,
) -> Result<AttractorSample> {
    let mut cur = iterate_map(p, seed, transient, cfg)?;
    let mut points = Vec::with_capacity(keep);
    for _ in 0..keep {
        cur = poincare_map(p, &cur, cfg)?;
        points.push(cur);
    }
    Ok(AttractorSample { a: p.a, params: *p, transient, points })
}

/// `max_{x in from} min_{y in to} |x - y|`.
pub fn directed_hausdorff(from: &[SectionPoint], to: &[SectionPoint]) -> f64 {
    from.par_iter().map(|x| to.iter().map(|y| x.distance(y)).fold(f64::INFINITY, f64::min)).reduce(|| 0.0, f64::max)
}

pub fn hausdorff(a: &[SectionPoint], b: &[SectionPoint]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

impl Branch {
    /// Points of the branch at parameter value `a`: every pair of consecutive
    /// entries that brackets `a` is interpolated and corrected by Newton at
    /// fixed `a`.
    pub fn points_at(&self, a: f64, cfg: &IntegratorConfig) -> Vec<PeriodicPoint> {
        let p = self.base.with(self.param, a);
        let opts = NewtonOptions::default();
        self.entries
            .windows(2)
            .filter(|w| (w[0].a - a) * (w[1].a - a) <= 0.0 && w[0].a != w[1].a)
            .filter_map(|w| {
                let t = (a - w[0].a) / (w[1].a - w[0].a);
                let guess = SectionPoint {
                    x1: w[0].point.x1 + t * (w[1].point.x1 - w[0].point.x1),
                    x3: w[0].point.x3 + t * (w[1].point.x3 - w[0].point.x3),
                };
                newton_periodic(&p, &guess, self.n, cfg, &opts).ok()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poincare::symmetry_image;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn base(a: f64) -> SystemParams {
        SystemParams::new(a, 1.0, 1.0, 0.25, 3.0, 1.0).unwrap()
    }

    fn symmetric_branch() -> (Branch, Vec<BifurcationEvent>) {
        let s = SectionPoint::new(8.9375f64.sqrt(), 0.25).unwrap();
        let pt = newton_periodic(&base(1.0), &s, 1, &cfg(), &NewtonOptions::default()).unwrap();
        continue_branch(&pt, &ContinuationOptions::new(Param::A, (1.0, 1.3)), &cfg()).unwrap()
    }

    #[test]
    fn feigenbaum_ratios() {
        assert_eq!(estimate_feigenbaum(&[1.0, 0.0]), Err(Error::TooFewEvents));
        let d: f64 = 4.669;
        let seq: Vec<f64> = (0..6).map(|k| 1.2 - 0.1 * d.powi(-k)).collect();
        for r in estimate_feigenbaum(&seq).unwrap() {
            assert!((r - d).abs() < 1e-9);
        }
    }

    #[test]
    fn distinct_counting() {
        assert_eq!(count_distinct(&[], 1e-6), 0);
        assert_eq!(count_distinct(&[1.0, 1.0 + 1e-9, 2.0, 2.0 - 5e-7, 3.0], 1e-6), 3);
        let pts: Vec<SectionPoint> = [(1.0, 1.0), (1.0, 2.0), (1.0 + 1e-8, 1.0)]
            .iter()
            .map(|&(a, b)| SectionPoint::new(a, b).unwrap())
            .collect();
        assert_eq!(count_distinct_points(&pts, 1e-6), 2);
    }

    #[test]
    fn hausdorff_distance() {
        let a = [SectionPoint::new(1.0, 1.0).unwrap(), SectionPoint::new(2.0, 1.0).unwrap()];
        let b = [SectionPoint::new(1.0, 1.5).unwrap()];
        assert!((directed_hausdorff(&b, &a) - 0.5).abs() < 1e-15);
        assert!((hausdorff(&a, &b) - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_branch_has_one_branch_point() {
        let (branch, events) = symmetric_branch();
        assert_eq!(branch.termination, Termination::RangeExit);
        assert_eq!(events.len(), 1);
        let bp = &events[0];
        assert_eq!(bp.kind, BifurcationKind::BranchPoint);
        assert!((bp.a - 1.196).abs() < 0.005);
        assert!((bp.bracket.1 - bp.bracket.0).abs() <= 1e-5);
        // the critical multiplier sits on opposite sides of +1 at the bracket ends
        let crit = |m: &[Complex64; 2]| {
            m.iter().map(|z| z.re).min_by(|x, y| (x - 1.0).abs().total_cmp(&(y - 1.0).abs())).unwrap()
        };
        let (lo, hi) = (crit(&bp.bracket_multipliers.0), crit(&bp.bracket_multipliers.1));
        assert!((lo - 1.0) * (hi - 1.0) < 0.0);
        assert!((lo - 1.0).abs() > 1e-8 && (hi - 1.0).abs() > 1e-8);
        // stability changes only across the event
        for w in branch.entries.windows(2) {
            if w[0].stability != w[1].stability {
                assert!(w[0].a <= bp.a + 1e-3 && w[1].a >= bp.a - 1e-3, "{} {}", w[0].a, w[1].a);
            }
        }
        // entries re-verify from scratch
        for e in branch.entries.iter().step_by(10) {
            let img = poincare_map(&base(e.a), &e.point, &cfg()).unwrap();
            assert!(img.distance(&e.point) < 1e-9);
        }
    }

    #[test]
    fn pitchfork_switch_gives_symmetric_pair() {
        let (_, events) = symmetric_branch();
        let seeds = switch_branch(&events[0], &SwitchOptions::default(), &cfg()).unwrap();
        assert_eq!(seeds.len(), 2);
        let (s1, s2) = (&seeds[0], &seeds[1]);
        assert!(s1.point.distance(&s2.point) > 1e-3);
        assert!(s1.residual < 1e-9 && s2.residual < 1e-9);
        // the half-return rotation exchanges the two fixed points
        let q = symmetry_image(&s1.params, &s1.point, &cfg()).unwrap();
        let s2_at = newton_periodic(&s1.params, &s2.point, 1, &cfg(), &NewtonOptions::default()).unwrap();
        assert!(q.distance(&s2_at.point) < 1e-6, "{}", q.distance(&s2_at.point));
    }

    #[test]
    fn switching_contracts() {
        let (_, events) = symmetric_branch();
        let mut fold = events[0].clone();
        fold.kind = BifurcationKind::Fold;
        assert!(matches!(switch_branch(&fold, &SwitchOptions::default(), &cfg()), Err(Error::NotApplicable(_))));
        // no multiplier near -1 at a pitchfork point
        let mut pd = events[0].clone();
        pd.kind = BifurcationKind::PeriodDoubling;
        assert!(matches!(switch_branch(&pd, &SwitchOptions::default(), &cfg()), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn period_doubling_switch_straddles_parent() {
        let (_, events) = symmetric_branch();
        let seeds = switch_branch(&events[0], &SwitchOptions::default(), &cfg()).unwrap();
        let (_, evs) = continue_branch(&seeds[0], &ContinuationOptions::new(Param::A, (1.0, 1.3)), &cfg()).unwrap();
        let kinds: Vec<_> = evs.iter().map(|e| e.kind).collect();
        assert_eq!(kinds.iter().filter(|k| **k == BifurcationKind::Fold).count(), 2);
        let pd = evs.iter().find(|e| e.kind == BifurcationKind::PeriodDoubling).unwrap();
        let two = &switch_branch(pd, &SwitchOptions::default(), &cfg()).unwrap()[0];
        assert_eq!(two.n, 2);
        let other = poincare_map(&two.params, &two.point, &cfg()).unwrap();
        assert!(other.distance(&two.point) > 1e-4);
        // the parent lies between the two iterates along the flip direction
        let parent = newton_periodic(&two.params, &pd.point, 1, &cfg(), &NewtonOptions::default()).unwrap();
        let v = eigenvector2(&parent.jacobian, parent.multipliers[1].re.min(parent.multipliers[0].re));
        let side = |s: &SectionPoint| v.dot(&(s.to_vector() - parent.point.to_vector()));
        assert!(side(&two.point) * side(&other) < 0.0);
    }

    #[test]
    fn start_must_be_converged() {
        let s = SectionPoint::new(2.9, 0.2).unwrap();
        let pt = PeriodicPoint::at(&base(1.1), &s, 1, &cfg()).unwrap();
        let r = continue_branch(&pt, &ContinuationOptions::new(Param::A, (1.0, 1.3)), &cfg());
        assert!(matches!(r, Err(Error::StartNotConverged(_))));
    }

    #[test]
    fn sweep_is_deterministic_and_periodic() {
        let grid = SweepGrid { param: Param::A, lo: 1.15, hi: 1.16, steps: 4 };
        let seeds = [SectionPoint::new(2.96, 0.2).unwrap()];
        let opts = SweepOptions { iterations: 200, keep: 50 };
        let d1 = sweep(&base(1.0), &seeds, &grid, &opts, &cfg()).unwrap();
        let d2 = sweep(&base(1.0), &seeds, &grid, &opts, &cfg()).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(d1[0].values.len(), 5);
        for i in 0..5 {
            assert_eq!(d1[0].retained[i].len(), 50);
            assert_eq!(d1[0].distinct_at(i), 1);
        }
        let bad = SweepOptions { iterations: 10, keep: 20 };
        assert!(sweep(&base(1.0), &seeds, &grid, &bad, &cfg()).is_err());
    }

    #[test]
    fn attractor_on_stable_branch_collapses() {
        let s = SectionPoint::new(2.633, 0.00129).unwrap();
        let att = capture_attractor(&base(1.15), &s, 500, 200, &cfg()).unwrap();
        assert_eq!(att.transient, 500);
        assert!(count_distinct_points(&att.points, 1e-6) <= 2);
    }

    #[test]
    fn points_at_recovers_fixed_points() {
        let (branch, _) = symmetric_branch();
        let pts = branch.points_at(1.15, &cfg());
        assert_eq!(pts.len(), 1);
        assert!(pts[0].residual < 1e-10);
        assert_eq!(pts[0].params.a, 1.15);
    }
}
