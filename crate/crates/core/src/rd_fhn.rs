//! FitzHugh-Nagumo reaction-diffusion on a square with Neumann boundaries and
//! an additive lattice-periodic source.

use crate::lattice::Vec2;
use crate::tip::{find_tip, TipSample, TipTrajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const DEFAULT_N: usize = 200;
pub const HALF_WIDTH: f64 = 10.0 * PI;
pub const DEFAULT_DT: f64 = 0.01;
pub const DIVERGENCE_BOUND: f64 = 5.0;
/// Consecutive missing tip samples that are bridged by interpolation.
pub const MAX_TIP_GAP: usize = 5;
const HEADER_LEN: usize = 32;

pub const KAPPA: f64 = 10.0 / 3.0;
pub const RECOVERY: f64 = 0.3;
pub const SHIFT: f64 = 0.6;
pub const V_DAMPING: f64 = 0.5;

#[derive(Debug, Error)]
pub enum PdeError {
    #[error("grid needs n >= 50 points per side, got {0}")]
    GridTooSmall(usize),
    #[error("dt = {dt} exceeds the diffusion limit {limit}")]
    Unstable { dt: f64, limit: f64 },
    #[error("divergence at t = {t}: |value| = {value}")]
    Diverged { t: f64, value: f64 },
    #[error("tip lost for more than {MAX_TIP_GAP} samples at t = {t}")]
    TipLost { t: f64 },
    #[error("spawn failed: {0}")]
    SpawnFailed(String),
    #[error("field size {got} does not match grid size {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("bad snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self, PdeError> {
        if n < 50 {
            return Err(PdeError::GridTooSmall(n));
        }
        Ok(Self { n, half_width: HALF_WIDTH })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Cell-center coordinate of index `i`. Antisymmetric under `i -> n-1-i`.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5 - 0.5 * self.n as f64) * self.dx()
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(self.coord(i), self.coord(j))
    }

    /// Largest admissible explicit step, `0.9 dx^2 / 4`.
    pub fn dt_limit(&self) -> f64 {
        0.9 * self.dx() * self.dx() / 4.0
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n: DEFAULT_N, half_width: HALF_WIDTH }
    }
}

/// The two fields, row-major with `index = j * n + i` (`i` along x).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldPair {
    pub n: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub time: f64,
}

/// Real root of `u^3 + 3u + 3.6 = 0`, the resting `u`.
pub fn rest_state() -> (f64, f64) {
    let f = |u: f64| u * u * u + 3.0 * u + 3.6;
    let (mut a, mut b) = (-2.0, 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let u = 0.5 * (a + b);
    (u, (u + SHIFT) / V_DAMPING)
}

impl FieldPair {
    pub fn uniform(grid: &GridSpec, u: f64, v: f64) -> Self {
        Self {
            n: grid.n,
            u: vec![u; grid.len()],
            v: vec![v; grid.len()],
            time: 0.0,
        }
    }

    pub fn rest(grid: &GridSpec) -> Self {
        let (u, v) = rest_state();
        Self::uniform(grid, u, v)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Both fields rotated by a quarter turn about the origin: the new value at
    /// `p` is the old value at `R(-pi/2) p`. Exact on the cell-center grid.
    pub fn rotate_quarter(&self) -> Self {
        let n = self.n;
        let rot = |f: &[f64]| {
            let mut out = vec![0.0; n * n];
            for j in 0..n {
                for i in 0..n {
                    // (x_i, y_j) -> old point (y_j, -x_i) = (x_j, x_{n-1-i}).
                    out[j * n + i] = f[(n - 1 - i) * n + j];
                }
            }
            out
        };
        Self {
            n,
            u: rot(&self.u),
            v: rot(&self.v),
            time: self.time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InhomogeneityCoeffs {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl InhomogeneityCoeffs {
    pub const ZERO: Self = Self { a1: 0.0, b1: 0.0, c1: 0.0, a2: 0.0, b2: 0.0, c2: 0.0 };
    pub const FIRSTEXP: Self = Self { a1: 0.028, b1: 0.05, c1: 0.06, a2: -0.0044, b2: -0.02, c2: 0.01 };
    pub const SECONDEXP: Self = Self { a1: 0.016, b1: 0.05, c1: 0.0001, a2: 0.006, b2: -0.0001, c2: 0.03 };
    pub const THIRDEXP: Self = Self { a1: -0.016, b1: -0.05, c1: -0.0001, a2: -0.012, b2: 0.0001, c2: -0.06 };

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "zero" => Some(Self::ZERO),
            "firstexp" => Some(Self::FIRSTEXP),
            "secondexp" => Some(Self::SECONDEXP),
            "thirdexp" => Some(Self::THIRDEXP),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// `(eps g1, eps g2)` at a point.
    pub fn eval(&self, p: Vec2) -> (f64, f64) {
        let first = (0.5 * p.x).cos() + (0.5 * p.y).cos();
        let second = (0.5 * (3.0 * p.x - p.y)).cos() + (0.5 * (p.x + 3.0 * p.y)).cos();
        (
            self.a1 + self.b1 * first + self.c1 * second,
            self.a2 + self.b2 * first + self.c2 * second,
        )
    }
}

/// Source terms sampled at the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Inhomogeneity {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

pub fn build_inhomogeneity(coeffs: &InhomogeneityCoeffs, grid: &GridSpec) -> Inhomogeneity {
    let n = grid.n;
    let mut g1 = vec![0.0; n * n];
    let mut g2 = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            let (a, b) = coeffs.eval(grid.point(i, j));
            g1[j * n + i] = a;
            g2[j * n + i] = b;
        }
    }
    Inhomogeneity { g1, g2 }
}

/// Five-point Laplacian times `dx^2` at `(i, j)`, mirroring across the boundary.
#[inline]
fn laplacian_scaled(f: &[f64], n: usize, i: usize, j: usize) -> f64 {
    let c = f[j * n + i];
    let w = if i > 0 { f[j * n + i - 1] } else { c };
    let e = if i + 1 < n { f[j * n + i + 1] } else { c };
    let s = if j > 0 { f[(j - 1) * n + i] } else { c };
    let nn = if j + 1 < n { f[(j + 1) * n + i] } else { c };
    // Symmetric pairing keeps the stencil exactly invariant under quarter turns.
    ((e + w) + (nn + s)) - 4.0 * c
}

/// Discrete Laplacian of a whole field.
pub fn laplacian(f: &[f64], grid: &GridSpec) -> Vec<f64> {
    let n = grid.n;
    let inv = 1.0 / (grid.dx() * grid.dx());
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            *o = laplacian_scaled(f, n, i, j) * inv;
        }
    });
    out
}

/// One explicit Euler step into fresh buffers.
pub fn step(
    fields: &FieldPair,
    g: &Inhomogeneity,
    dt: f64,
    grid: &GridSpec,
) -> Result<FieldPair, PdeError> {
    let mut next = fields.clone();
    step_into(fields, &mut next, g, dt, grid)?;
    Ok(next)
}

fn check_step(fields: &FieldPair, g: &Inhomogeneity, dt: f64, grid: &GridSpec) -> Result<(), PdeError> {
    let limit = grid.dt_limit();
    if !(dt > 0.0 && dt <= limit) {
        return Err(PdeError::Unstable { dt, limit });
    }
    for len in [fields.u.len(), fields.v.len(), g.g1.len(), g.g2.len()] {
        if len != grid.len() {
            return Err(PdeError::SizeMismatch { got: len, expected: grid.len() });
        }
    }
    Ok(())
}

fn step_into(
    cur: &FieldPair,
    next: &mut FieldPair,
    g: &Inhomogeneity,
    dt: f64,
    grid: &GridSpec,
) -> Result<(), PdeError> {
    check_step(cur, g, dt, grid)?;
    let n = grid.n;
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let (u, v) = (&cur.u, &cur.v);
    next.u
        .par_chunks_mut(n)
        .zip(next.v.par_chunks_mut(n))
        .enumerate()
        .for_each(|(j, (urow, vrow))| {
            for i in 0..n {
                let k = j * n + i;
                let (uk, vk) = (u[k], v[k]);
                let lap = laplacian_scaled(u, n, i, j) * inv_dx2;
                let du = lap + KAPPA * (uk - uk * uk * uk / 3.0 - vk) + g.g1[k];
                let dv = RECOVERY * (uk + SHIFT - V_DAMPING * vk) + g.g2[k];
                urow[i] = uk + dt * du;
                vrow[i] = vk + dt * dv;
            }
        });
    next.time = cur.time + dt;
    next.n = n;
    let worst = next.max_abs();
    if !(worst <= DIVERGENCE_BOUND) {
        return Err(PdeError::Diverged { t: next.time, value: worst });
    }
    Ok(())
}

/// Advance `steps` steps in place, reusing one scratch buffer.
pub fn advance(
    fields: &mut FieldPair,
    g: &Inhomogeneity,
    dt: f64,
    grid: &GridSpec,
    steps: usize,
) -> Result<(), PdeError> {
    let mut scratch = fields.clone();
    for _ in 0..steps {
        step_into(fields, &mut scratch, g, dt, grid)?;
        std::mem::swap(fields, &mut scratch);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnOptions {
    /// Crossing point of the initial broken front.
    pub center: Vec2,
    pub settle_time: f64,
    pub dt: f64,
    /// Excited `u` value below the front.
    pub u_excited: f64,
    /// Refractory `v` value in the blocking half-plane.
    pub v_refractory: f64,
}

impl Default for SpawnOptions {
    fn default() -> Self {
        Self {
            center: Vec2::ZERO,
            settle_time: 200.0,
            dt: DEFAULT_DT,
            u_excited: 2.0,
            v_refractory: 1.0,
        }
    }
}

/// Cross-field initial data: excited below the front `y < cy`, refractory left
/// of `x < cx`, rest elsewhere.
pub fn cross_field(grid: &GridSpec, center: Vec2, u_excited: f64, v_refractory: f64) -> FieldPair {
    let mut f = FieldPair::rest(grid);
    let n = grid.n;
    for j in 0..n {
        for i in 0..n {
            let p = grid.point(i, j);
            let k = j * n + i;
            if p.y < center.y {
                f.u[k] = u_excited;
            }
            if p.x < center.x {
                f.v[k] = v_refractory;
            }
        }
    }
    f
}

/// Spiral initial data settled under the homogeneous (`eps = 0`) dynamics.
pub fn spawn_spiral(grid: &GridSpec, opts: &SpawnOptions) -> Result<FieldPair, PdeError> {
    let mut f = cross_field(grid, opts.center, opts.u_excited, opts.v_refractory);
    if opts.settle_time <= 0.0 {
        return Ok(f);
    }
    let g = build_inhomogeneity(&InhomogeneityCoeffs::ZERO, grid);
    let steps = (opts.settle_time / opts.dt).round() as usize;
    advance(&mut f, &g, opts.dt, grid, steps)?;
    if find_tip(&f.u, &f.v, grid, Some(opts.center)).is_none() {
        return Err(PdeError::SpawnFailed(format!(
            "no spiral tip after settling for {}",
            opts.settle_time
        )));
    }
    f.time = 0.0;
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between tip samples.
    pub sample_every: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, t_end: 1000.0, sample_every: 10 }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub fields: FieldPair,
    pub tips: TipTrajectory,
}

/// Integrate to `t_end`, sampling the tip every `sample_every` steps.
/// `on_sample` sees each sampled state (e.g. to persist snapshots).
pub fn run_with<F: FnMut(&FieldPair) -> Result<(), PdeError>>(
    mut fields: FieldPair,
    coeffs: &InhomogeneityCoeffs,
    grid: &GridSpec,
    opts: &RunOptions,
    mut on_sample: F,
) -> Result<RunOutput, PdeError> {
    let g = build_inhomogeneity(coeffs, grid);
    check_step(&fields, &g, opts.dt, grid)?;
    let every = opts.sample_every.max(1);
    let total = (opts.t_end / opts.dt).round() as usize;
    let t0 = fields.time;
    let mut tips = TipTrajectory::new(opts.dt * every as f64);
    let mut previous: Option<Vec2> = None;
    let mut pending: Vec<f64> = Vec::new();
    let mut scratch = fields.clone();
    let mut done = 0;
    while done < total {
        let chunk = every.min(total - done);
        for _ in 0..chunk {
            step_into(&fields, &mut scratch, &g, opts.dt, grid)?;
            std::mem::swap(&mut fields, &mut scratch);
        }
        done += chunk;
        // Re-derive the time from the step count to avoid accumulated rounding.
        fields.time = t0 + done as f64 * opts.dt;
        on_sample(&fields)?;
        match find_tip(&fields.u, &fields.v, grid, previous) {
            Some(p) => {
                if let (Some(last), false) = (tips.samples.last().copied(), pending.is_empty()) {
                    let span = fields.time - last.t;
                    for &t in &pending {
                        let s = (t - last.t) / span;
                        tips.samples.push(TipSample {
                            t,
                            x: last.x + s * (p.x - last.x),
                            y: last.y + s * (p.y - last.y),
                        });
                    }
                }
                pending.clear();
                tips.samples.push(TipSample { t: fields.time, x: p.x, y: p.y });
                previous = Some(p);
            }
            None => {
                pending.push(fields.time);
                if pending.len() > MAX_TIP_GAP {
                    return Err(PdeError::TipLost { t: fields.time });
                }
            }
        }
    }
    Ok(RunOutput { fields, tips })
}

pub fn run(
    fields: FieldPair,
    coeffs: &InhomogeneityCoeffs,
    grid: &GridSpec,
    opts: &RunOptions,
) -> Result<RunOutput, PdeError> {
    run_with(fields, coeffs, grid, opts, |_| Ok(()))
}

/// Raw snapshot: a 32-byte text header `"<n> <time>"` padded with spaces and
/// ending in a newline, then `u` and `v` as little-endian f64, row-major.
pub fn write_snapshot<W: Write>(fields: &FieldPair, mut out: W) -> Result<(), PdeError> {
    let mut header = format!("{} {:e}", fields.n, fields.time);
    if header.len() > HEADER_LEN - 1 {
        return Err(PdeError::BadSnapshot(format!("header too long: {header}")));
    }
    while header.len() < HEADER_LEN - 1 {
        header.push(' ');
    }
    header.push('\n');
    out.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(16 * fields.u.len());
    for x in fields.u.iter().chain(&fields.v) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<FieldPair, PdeError> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    let text = std::str::from_utf8(&header).map_err(|_| PdeError::BadSnapshot("header is not UTF-8".into()))?;
    let mut parts = text.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PdeError::BadSnapshot("missing grid size".into()))?;
    let time: f64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PdeError::BadSnapshot("missing time".into()))?;
    let mut bytes = vec![0u8; 16 * n * n];
    input.read_exact(&mut bytes)?;
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let (u, v) = vals.split_at(n * n);
    Ok(FieldPair { n, u: u.to_vec(), v: v.to_vec(), time })
}
