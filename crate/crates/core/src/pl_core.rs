//! Vector fields, pseudo-linear eigenstructure, region classification and the
//! escape bound of the chaotic system
//!
//! ```text
//! x1' = (x3^2 - h^2) x1 - w x2
//! x2' = w x1 + (x3^2 - h^2) x2
//! x3' = (r^2 - a x1^2 - b x2^2 - c x3^2) x3  [ - K r^2 x3 ]
//! ```
//!
//! The bracketed feedback term is only present in the controlled field.

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian state `(x1, x2, x3)`.
pub type State = Vector3<f64>;

/// Default relative tolerance used to flag points on the nullcline surfaces.
pub const DEFAULT_BOUNDARY_TOL: f64 = 1e-12;

/// Safety margin that turns the strict inequalities of the escape argument
/// into closed ones.
pub const ESCAPE_MARGIN: f64 = 1e-9;

/// The six positive system constants and the (optional) feedback gain `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub h: f64,
    pub r: f64,
    pub omega: f64,
    /// Feedback gain of the controlled field; ignored by the free field.
    pub k: f64,
}

/// Names one of the six system constants, e.g. as a continuation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    A,
    B,
    C,
    H,
    R,
    Omega,
}

impl Param {
    pub const ALL: [Param; 6] = [Param::A, Param::B, Param::C, Param::H, Param::R, Param::Omega];

    pub fn name(self) -> &'static str {
        match self {
            Param::A => "a",
            Param::B => "b",
            Param::C => "c",
            Param::H => "h",
            Param::R => "r",
            Param::Omega => "omega",
        }
    }
}

impl std::str::FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s || (s == "w" && *p == Param::Omega))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter '{s}'")))
    }
}

impl SystemParams {
    pub fn new(a: f64, b: f64, c: f64, h: f64, r: f64, omega: f64) -> Result<Self> {
        let p = SystemParams { a, b, c, h, r, omega, k: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from `[a, b, c, h, r, omega]`.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match *v {
            [a, b, c, h, r, omega] => Self::new(a, b, c, h, r, omega),
            _ => Err(Error::InvalidParams(format!("expected 6 values (a,b,c,h,r,omega), got {}", v.len()))),
        }
    }

    pub fn with_gain(mut self, k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::InvalidParams(format!("gain K must be >= 0, got {k}")));
        }
        self.k = k;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let v = self.get(p);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!("{} must be positive, got {v}", p.name())));
            }
        }
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err(Error::InvalidParams(format!("gain K must be >= 0, got {}", self.k)));
        }
        Ok(())
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::A => self.a,
            Param::B => self.b,
            Param::C => self.c,
            Param::H => self.h,
            Param::R => self.r,
            Param::Omega => self.omega,
        }
    }

    /// Copy with one constant replaced. The value is not validated so that
    /// continuation can probe freely; callers check positivity.
    pub fn with(mut self, p: Param, value: f64) -> Self {
        match p {
            Param::A => self.a = value,
            Param::B => self.b = value,
            Param::C => self.c = value,
            Param::H => self.h = value,
            Param::R => self.r = value,
            Param::Omega => self.omega = value,
        }
        self
    }

    /// `d = min{a, b}`.
    pub fn d(&self) -> f64 {
        self.a.min(self.b)
    }

    /// `r / sqrt(c)`: height of `Z` and the Hopf value of `h`.
    pub fn hopf_threshold(&self) -> f64 {
        self.r / self.c.sqrt()
    }

    /// Return time of the section, `2 pi / omega`.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a, self.b, self.c, self.h, self.r, self.omega]
    }
}

impl std::fmt::Display for SystemParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{},{},{}", self.a, self.b, self.c, self.h, self.r, self.omega)
    }
}

/// Cylindrical coordinates about the x3-axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylState {
    pub rho: f64,
    pub theta: f64,
    pub x3: f64,
}

impl CylState {
    pub fn from_state(x: &State) -> Self {
        CylState { rho: x[0].hypot(x[1]), theta: x[1].atan2(x[0]), x3: x[2] }
    }

    pub fn to_state(&self) -> State {
        let (s, c) = self.theta.sin_cos();
        State::new(self.rho * c, self.rho * s, self.x3)
    }
}

/// Field used by the integrator: free system or the closed loop with `u = -K r^2 x3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Free,
    Controlled,
}

#[inline]
fn rotation_gain(p: &SystemParams, x: &State) -> f64 {
    x[2] * x[2] - p.h * p.h
}

#[inline]
fn axial_gain(p: &SystemParams, x: &State, r2: f64) -> f64 {
    r2 - p.a * (x[0] * x[0]) - p.b * (x[1] * x[1]) - p.c * (x[2] * x[2])
}

#[inline]
fn field_with(p: &SystemParams, x: &State, r2: f64) -> State {
    let g1 = rotation_gain(p, x);
    let g3 = axial_gain(p, x, r2);
    State::new(g1 * x[0] - p.omega * x[1], p.omega * x[0] + g1 * x[1], g3 * x[2])
}

fn jacobian_with(p: &SystemParams, x: &State, r2: f64) -> Matrix3<f64> {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let g1 = rotation_gain(p, x);
    let g3 = axial_gain(p, x, r2);
    Matrix3::new(
        g1,
        -p.omega,
        2.0 * x3 * x1,
        p.omega,
        g1,
        2.0 * x3 * x2,
        -2.0 * p.a * x1 * x3,
        -2.0 * p.b * x2 * x3,
        g3 - 2.0 * p.c * x3 * x3,
    )
}

/// Free vector field.
#[inline]
pub fn vector_field(p: &SystemParams, x: &State) -> State {
    field_with(p, x, p.r * p.r)
}

/// Closed-loop field with the feedback `u = -K r^2 x3` acting on `x3'`.
#[inline]
pub fn controlled_field(p: &SystemParams, x: &State) -> State {
    field_with(p, x, (1.0 - p.k) * p.r * p.r)
}

pub fn field(kind: FieldKind, p: &SystemParams, x: &State) -> State {
    match kind {
        FieldKind::Free => vector_field(p, x),
        FieldKind::Controlled => controlled_field(p, x),
    }
}

/// Analytic Jacobian of the free field.
pub fn jacobian(p: &SystemParams, x: &State) -> Matrix3<f64> {
    jacobian_with(p, x, p.r * p.r)
}

pub fn controlled_jacobian(p: &SystemParams, x: &State) -> Matrix3<f64> {
    jacobian_with(p, x, (1.0 - p.k) * p.r * p.r)
}

pub fn field_jacobian(kind: FieldKind, p: &SystemParams, x: &State) -> Matrix3<f64> {
    match kind {
        FieldKind::Free => jacobian(p, x),
        FieldKind::Controlled => controlled_jacobian(p, x),
    }
}

/// Partial derivative of the free field with respect to one constant.
pub fn param_derivative(p: &SystemParams, x: &State, param: Param) -> State {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    match param {
        Param::A => State::new(0.0, 0.0, -x1 * x1 * x3),
        Param::B => State::new(0.0, 0.0, -x2 * x2 * x3),
        Param::C => State::new(0.0, 0.0, -x3 * x3 * x3),
        Param::H => State::new(-2.0 * p.h * x1, -2.0 * p.h * x2, 0.0),
        Param::R => State::new(0.0, 0.0, 2.0 * p.r * x3),
        Param::Omega => State::new(-x2, x1, 0.0),
    }
}

/// The three state-dependent eigenvalues `(x3^2-h^2) ± j w` and `r^2 - a x1^2 - b x2^2 - c x3^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NEValueSet {
    pub lambda12_re: f64,
    pub lambda12_im: f64,
    pub lambda3: f64,
}

impl NEValueSet {
    pub fn as_complex(&self) -> [Complex64; 3] {
        [
            Complex64::new(self.lambda12_re, self.lambda12_im),
            Complex64::new(self.lambda12_re, -self.lambda12_im),
            Complex64::new(self.lambda3, 0.0),
        ]
    }
}

pub fn nevalues(p: &SystemParams, x: &State) -> NEValueSet {
    NEValueSet { lambda12_re: rotation_gain(p, x), lambda12_im: p.omega, lambda3: axial_gain(p, x, p.r * p.r) }
}

/// One diagonal block of a block-diagonal pseudo-linear matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Block {
    /// `[g]`, one real eigenvalue `g`.
    Real { g: f64 },
    /// `[g, -w; w, g]`, eigenvalues `g ± j w`.
    Rotation { g: f64, omega: f64 },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Real { .. } => 1,
            Block::Rotation { .. } => 2,
        }
    }

    /// Real part shared by all eigenvalues of the block.
    pub fn real_part(&self) -> f64 {
        match *self {
            Block::Real { g } | Block::Rotation { g, .. } => g,
        }
    }
}

/// A system written as `x' = A(x) x` with block-diagonal `A(x)` whose blocks
/// are real scalars or rotation-scaling 2x2 blocks. Eigenvectors of such a
/// matrix do not depend on the state and every eigenvalue is semisimple.
pub trait PseudoLinearForm {
    fn blocks(&self, x: &State) -> Vec<Block>;
}

/// Assembles the block-diagonal matrix of a list of blocks.
pub fn block_matrix(blocks: &[Block]) -> DMatrix<f64> {
    let n = blocks.iter().map(Block::dim).sum();
    let mut m = DMatrix::zeros(n, n);
    let mut i = 0;
    for b in blocks {
        match *b {
            Block::Real { g } => m[(i, i)] = g,
            Block::Rotation { g, omega } => {
                m[(i, i)] = g;
                m[(i, i + 1)] = -omega;
                m[(i + 1, i)] = omega;
                m[(i + 1, i + 1)] = g;
            }
        }
        i += b.dim();
    }
    m
}

/// Pseudo-linear form of the free or closed-loop field.
#[derive(Debug, Clone, Copy)]
pub struct PlSystem {
    pub params: SystemParams,
    pub kind: FieldKind,
}

impl PlSystem {
    pub fn free(params: SystemParams) -> Self {
        PlSystem { params, kind: FieldKind::Free }
    }

    pub fn controlled(params: SystemParams) -> Self {
        PlSystem { params, kind: FieldKind::Controlled }
    }

    fn r2_eff(&self) -> f64 {
        let r2 = self.params.r * self.params.r;
        match self.kind {
            FieldKind::Free => r2,
            FieldKind::Controlled => (1.0 - self.params.k) * r2,
        }
    }

    /// `A(x)`, with `A(x) x` equal to the corresponding vector field.
    pub fn matrix(&self, x: &State) -> Matrix3<f64> {
        let p = &self.params;
        let g1 = rotation_gain(p, x);
        let g3 = axial_gain(p, x, self.r2_eff());
        Matrix3::new(g1, -p.omega, 0.0, p.omega, g1, 0.0, 0.0, 0.0, g3)
    }

    /// The state-independent eigenvectors `(1,-j,0)`, `(j,1,0)`, `(0,0,1)`.
    pub fn nevectors() -> [Vector3<Complex64>; 3] {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let j = Complex64::new(0.0, 1.0);
        [Vector3::new(one, -j, z), Vector3::new(j, one, z), Vector3::new(z, z, one)]
    }
}

impl PseudoLinearForm for PlSystem {
    fn blocks(&self, x: &State) -> Vec<Block> {
        vec![
            Block::Rotation { g: rotation_gain(&self.params, x), omega: self.params.omega },
            Block::Real { g: axial_gain(&self.params, x, self.r2_eff()) },
        ]
    }
}

/// Restricts a form to a subset of its blocks, e.g. to check only the axial
/// eigenvalue of the closed loop.
pub struct BlockSubset<'a, F: PseudoLinearForm> {
    form: &'a F,
    keep: Vec<usize>,
}

impl<'a, F: PseudoLinearForm> BlockSubset<'a, F> {
    pub fn new(form: &'a F, keep: &[usize]) -> Self {
        BlockSubset { form, keep: keep.to_vec() }
    }
}

impl<F: PseudoLinearForm> PseudoLinearForm for BlockSubset<'_, F> {
    fn blocks(&self, x: &State) -> Vec<Block> {
        let all = self.form.blocks(x);
        self.keep.iter().filter_map(|&i| all.get(i).copied()).collect()
    }
}

/// Open regions cut by the surfaces `a x1^2 + b x2^2 + c x3^2 = r^2` and `x3^2 = h^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegionId {
    R1,
    R2,
    R3,
    R4,
    Boundary,
}

impl RegionId {
    /// Region from the signs of `(ellipsoid - r^2, x3^2 - h^2)`.
    pub fn from_signs(outside_ellipsoid: bool, above_plane: bool) -> Self {
        match (outside_ellipsoid, above_plane) {
            (true, true) => RegionId::R1,
            (true, false) => RegionId::R2,
            (false, false) => RegionId::R3,
            (false, true) => RegionId::R4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RegionId::R1 => "R1",
            RegionId::R2 => "R2",
            RegionId::R3 => "R3",
            RegionId::R4 => "R4",
            RegionId::Boundary => "BOUNDARY",
        }
    }
}

impl std::fmt::Display for RegionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// `a x1^2 + b x2^2 + c x3^2 - r^2`; negative inside the ellipsoid.
pub fn ellipsoid_level(p: &SystemParams, x: &State) -> f64 {
    p.a * x[0] * x[0] + p.b * x[1] * x[1] + p.c * x[2] * x[2] - p.r * p.r
}

/// `x3^2 - h^2`; negative between the planes `x3 = ±h`.
pub fn plane_level(p: &SystemParams, x: &State) -> f64 {
    x[2] * x[2] - p.h * p.h
}

/// Region of `x`. A point whose ellipsoid level is within `tol * r^2` of zero,
/// or whose plane level is within `tol * h^2`, is on the boundary.
pub fn classify_region(p: &SystemParams, x: &State, tol: f64) -> RegionId {
    let e = ellipsoid_level(p, x);
    let z = plane_level(p, x);
    if e.abs() <= tol * p.r * p.r || z.abs() <= tol * p.h * p.h {
        return RegionId::Boundary;
    }
    RegionId::from_signs(e > 0.0, z > 0.0)
}

/// Bound on the distance from the x3-axis reached by an orbit starting in
/// region 1 before it descends to the plane `x3 = h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeBound {
    /// Radius beyond which `x3'/rho' < -1` on `h <= x3 <= x30`.
    pub rho1: f64,
    /// `rho1 + x30 - h`.
    pub rho0: f64,
    pub x30: f64,
}

/// Larger root of `d h rho^2 - (x30^2 - h^2) rho - r^2 h = 0`, i.e. where
/// `(r^2 - d rho^2) h / ((x30^2 - h^2) rho) = -1`.
fn slope_root(p: &SystemParams, x30: f64) -> f64 {
    let d = p.d();
    let qa = d * p.h;
    let qb = x30 * x30 - p.h * p.h;
    let qc = p.r * p.r * p.h;
    (qb + (qb * qb + 4.0 * qa * qc).sqrt()) / (2.0 * qa)
}

fn escape_radii(p: &SystemParams, rho_start: f64, x30: f64) -> (f64, f64) {
    let floor = (p.r / p.d().sqrt()).max(rho_start);
    let rho1 = slope_root(p, x30).max(floor) * (1.0 + ESCAPE_MARGIN);
    (rho1, rho1 + x30 - p.h)
}

/// Escape bound for an initial condition in region 1 with `x3 > h`.
pub fn compute_escape_bound(p: &SystemParams, x0: &State) -> Result<EscapeBound> {
    if classify_region(p, x0, DEFAULT_BOUNDARY_TOL) != RegionId::R1 || x0[2] <= p.h {
        return Err(Error::NotInR1);
    }
    let rho_start = x0[0].hypot(x0[1]);
    let (rho1, rho0) = escape_radii(p, rho_start, x0[2]);
    Ok(EscapeBound { rho1, rho0, x30: x0[2] })
}

/// Cylinder `{rho <= rho_max, |x3| <= x3_max}` containing every forward orbit
/// that starts inside `{rho <= rho_init, |x3| <= x3_init}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalBound {
    pub rho_max: f64,
    pub x3_max: f64,
}

impl GlobalBound {
    pub fn contains(&self, x: &State, slack: f64) -> bool {
        x[0].hypot(x[1]) <= self.rho_max + slack && x[2].abs() <= self.x3_max + slack
    }
}

/// Composes the escape bound with the region geometry:
/// `|x3|` never grows beyond `max(|x3(0)|, r/sqrt(c))`; `rho` grows only in
/// regions 1 and 4; region 4 lies inside `rho <= r/sqrt(d)`; and inside region 1
/// `rho` stays below the escape radius of the entry point.
pub fn global_bound(p: &SystemParams, rho_init: f64, x3_init: f64) -> GlobalBound {
    let x3_max = x3_init.abs().max(p.hopf_threshold());
    let rho_entry = rho_init.max(p.r / p.d().sqrt());
    let rho_max = if x3_max > p.h { escape_radii(p, rho_entry, x3_max).1 } else { rho_entry };
    GlobalBound { rho_max, x3_max }
}

/// Axis-aligned box used for sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBox {
    pub lo: State,
    pub hi: State,
}

impl SampleBox {
    pub fn cube(half_width: f64) -> Self {
        SampleBox { lo: State::repeat(-half_width), hi: State::repeat(half_width) }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while i > 0 {
        acc += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    acc
}

/// `n` points of the 3-D Halton sequence (bases 2, 3, 5) scaled into the box.
pub fn halton_points(bx: &SampleBox, n: usize) -> impl Iterator<Item = State> + '_ {
    (1..=n as u64).map(move |i| {
        let u = State::new(radical_inverse(i, 2), radical_inverse(i, 3), radical_inverse(i, 5));
        bx.lo + (bx.hi - bx.lo).component_mul(&u)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasReport {
    /// Every sampled real part was strictly negative.
    pub all_negative: bool,
    /// Sample with the largest real part.
    pub worst_point: State,
    pub worst_real_part: f64,
    /// Equal algebraic and geometric multiplicities; always true for block forms.
    pub semisimple: bool,
    /// State-independent eigenvectors; always true for block forms.
    pub state_independent_vectors: bool,
}

/// Sampling falsifier for the negative-real-part condition of the global
/// stability criterion. Only disproves; never certifies.
///
/// The box centre is sampled first (for symmetric boxes this is the
/// equilibrium), followed by `n_samples - 1` Halton points.
pub fn check_gas_conditions<F: PseudoLinearForm>(
    form: &F,
    sample_box: &SampleBox,
    n_samples: usize,
) -> Result<GasReport> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    let centre = (sample_box.lo + sample_box.hi) * 0.5;
    let mut worst = (f64::NEG_INFINITY, centre);
    for x in std::iter::once(centre).chain(halton_points(sample_box, n_samples - 1)) {
        let re = form.blocks(&x).iter().map(Block::real_part).fold(f64::NEG_INFINITY, f64::max);
        if re > worst.0 {
            worst = (re, x);
        }
    }
    Ok(GasReport {
        all_negative: worst.0 < 0.0,
        worst_point: worst.1,
        worst_real_part: worst.0,
        semisimple: true,
        state_independent_vectors: true,
    })
}
