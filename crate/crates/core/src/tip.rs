//! Spiral-tip extraction from `(u, v)` fields and classification of tip paths.

use crate::lattice::{LatticeSpec, Vec2};
use crate::rd_fhn::GridSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::io::{self, BufRead, Write};
use thiserror::Error;

/// Lattice spacing of the inhomogeneity's first harmonic.
pub const LATTICE_SPACING: f64 = 4.0 * PI;
pub const DEFAULT_TRANSIENT: f64 = 0.5;
pub const ANCHOR_THRESHOLD: f64 = 0.05;
pub const MIN_SAMPLES: usize = 200;

#[derive(Debug, Error)]
pub enum TipError {
    #[error("need at least {need} samples after the transient, got {got}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("trajectory shorter than one period")]
    TooShort,
    #[error("tip CSV line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

/// Zero contour of a cell-center field, one or two segments per grid cell.
/// Saddle cells are resolved by the sign of the cell-average value.
pub fn extract_zero_contours(field: &[f64], grid: &GridSpec) -> Vec<Segment> {
    cell_contours(field, grid).into_iter().map(|(_, s)| s).collect()
}

fn cell_contours(field: &[f64], grid: &GridSpec) -> Vec<(usize, Segment)> {
    let n = grid.n;
    let mut out = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let corners = [
                (grid.point(i, j), field[j * n + i]),
                (grid.point(i + 1, j), field[j * n + i + 1]),
                (grid.point(i + 1, j + 1), field[(j + 1) * n + i + 1]),
                (grid.point(i, j + 1), field[(j + 1) * n + i]),
            ];
            let cell = j * n + i;
            for s in square_segments(&corners) {
                out.push((cell, s));
            }
        }
    }
    out
}

/// Corners in counter-clockwise order starting bottom-left.
fn square_segments(c: &[(Vec2, f64); 4]) -> Vec<Segment> {
    let pos = c.map(|(_, f)| f > 0.0);
    let mask = pos.iter().enumerate().fold(0u8, |m, (k, &p)| m | ((p as u8) << k));
    if mask == 0 || mask == 15 {
        return Vec::new();
    }
    // Edge k joins corner k and corner k+1.
    let cross = |k: usize| {
        let (pa, fa) = c[k];
        let (pb, fb) = c[(k + 1) % 4];
        let t = fa / (fa - fb);
        pa + (pb - pa) * t
    };
    let edges: Vec<usize> = (0..4).filter(|&k| pos[k] != pos[(k + 1) % 4]).collect();
    if edges.len() == 2 {
        return vec![Segment { a: cross(edges[0]), b: cross(edges[1]) }];
    }
    // Saddle: corners 0 and 2 share a sign, as do 1 and 3.
    let center = 0.25 * ((c[0].1 + c[2].1) + (c[1].1 + c[3].1));
    if (center > 0.0) == pos[0] {
        // Corners 0 and 2 are joined through the center; cut off 1 and 3.
        vec![
            Segment { a: cross(0), b: cross(1) },
            Segment { a: cross(2), b: cross(3) },
        ]
    } else {
        vec![
            Segment { a: cross(3), b: cross(0) },
            Segment { a: cross(1), b: cross(2) },
        ]
    }
}

/// Intersection point of two segments, if any.
pub fn segment_intersection(s: &Segment, t: &Segment) -> Option<Vec2> {
    let r = s.b - s.a;
    let w = t.b - t.a;
    let den = r.cross(w);
    if den.abs() < 1e-300 {
        return None;
    }
    let q = t.a - s.a;
    let a = q.cross(w) / den;
    let b = q.cross(r) / den;
    const EPS: f64 = 1e-12;
    if (-EPS..=1.0 + EPS).contains(&a) && (-EPS..=1.0 + EPS).contains(&b) {
        Some(s.a + r * a)
    } else {
        None
    }
}

/// All intersections of the `u = 0` and `v = 0` contours.
pub fn contour_intersections(u: &[f64], v: &[f64], grid: &GridSpec) -> Vec<Vec2> {
    let cu = cell_contours(u, grid);
    let cv = cell_contours(v, grid);
    // Segments never leave their cell, so only same-cell pairs can cross.
    let mut out = Vec::new();
    let mut k = 0;
    for (cell, su) in &cu {
        while k < cv.len() && cv[k].0 < *cell {
            k += 1;
        }
        let mut m = k;
        while m < cv.len() && cv[m].0 == *cell {
            if let Some(p) = segment_intersection(su, &cv[m].1) {
                out.push(p);
            }
            m += 1;
        }
    }
    out
}

/// Contour intersection closest to `previous` (or to the domain center).
pub fn find_tip(u: &[f64], v: &[f64], grid: &GridSpec, previous: Option<Vec2>) -> Option<Vec2> {
    let target = previous.unwrap_or(Vec2::ZERO);
    contour_intersections(u, v, grid)
        .into_iter()
        .min_by(|a, b| a.distance(target).total_cmp(&b.distance(target)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TipSample {
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipTrajectory {
    pub samples: Vec<TipSample>,
    pub sample_dt: f64,
}

impl TipTrajectory {
    pub fn new(sample_dt: f64) -> Self {
        Self { samples: Vec::new(), sample_dt }
    }

    pub fn from_fn(sample_dt: f64, count: usize, f: impl Fn(f64) -> Vec2) -> Self {
        let samples = (0..count)
            .map(|k| {
                let t = k as f64 * sample_dt;
                let p = f(t);
                TipSample { t, x: p.x, y: p.y }
            })
            .collect();
        Self { samples, sample_dt }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples with `t >= t_first + fraction * (t_last - t_first)`.
    pub fn after_transient(&self, fraction: f64) -> TipTrajectory {
        let (Some(first), Some(last)) = (self.samples.first(), self.samples.last()) else {
            return self.clone();
        };
        let cut = first.t + fraction * (last.t - first.t);
        TipTrajectory {
            samples: self.samples.iter().copied().filter(|s| s.t >= cut).collect(),
            sample_dt: self.sample_dt,
        }
    }

    pub fn translated(&self, d: Vec2) -> TipTrajectory {
        TipTrajectory {
            samples: self.samples.iter().map(|s| TipSample { t: s.t, x: s.x + d.x, y: s.y + d.y }).collect(),
            sample_dt: self.sample_dt,
        }
    }

    /// Linear interpolation at time `t` (clamped to the ends).
    pub fn at(&self, t: f64) -> Vec2 {
        let s = &self.samples;
        let k = s.partition_point(|p| p.t <= t);
        if k == 0 {
            return s[0].pos();
        }
        if k >= s.len() {
            return s[s.len() - 1].pos();
        }
        let (a, b) = (s[k - 1], s[k]);
        let w = (t - a.t) / (b.t - a.t);
        a.pos() + (b.pos() - a.pos()) * w
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,y")?;
        for s in &self.samples {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", s.t, s.x, s.y)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TipError> {
        let mut samples = Vec::new();
        for (k, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if k == 0 {
                if line != "t,x,y" {
                    return Err(TipError::Csv { line: 1, message: format!("expected header `t,x,y`, got `{line}`") });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match vals.as_deref() {
                Ok([t, x, y]) => samples.push(TipSample { t: *t, x: *x, y: *y }),
                _ => return Err(TipError::Csv { line: k + 1, message: format!("expected three numbers, got `{line}`") }),
            }
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(TipError::Csv { line: 0, message: "times must be strictly increasing".into() });
        }
        let sample_dt = if samples.len() >= 2 {
            (samples[samples.len() - 1].t - samples[0].t) / (samples.len() - 1) as f64
        } else {
            0.0
        };
        Ok(Self { samples, sample_dt })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    AnchoredRotation,
    Meander,
    LinearDrift,
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClassification {
    pub kind: MotionKind,
    pub anchor: Option<Vec2>,
    pub primary_period: Option<f64>,
    pub secondary_period: Option<f64>,
    pub drift_velocity: Option<Vec2>,
    pub st_symmetric: bool,
    /// Mean radius of the fitted rotation circles.
    pub mean_radius: Option<f64>,
    /// Spread of the fitted circle centers, `max |c - mean(c)|`.
    pub center_spread: Option<f64>,
    /// Symmetry residual about the nearest lattice or dual-lattice point.
    pub st_residual: Option<f64>,
}

/// Algebraic least-squares circle fit; returns `(center, radius)`.
pub fn fit_circle(points: &[Vec2]) -> Option<(Vec2, f64)> {
    if points.len() < 3 {
        return None;
    }
    let m = points.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / points.len() as f64);
    // Normal equations for x^2 + y^2 + D x + E y + F = 0 in centered coordinates.
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    for &p in points {
        let q = p - m;
        let row = [q.x, q.y, 1.0];
        let rhs = -(q.x * q.x + q.y * q.y);
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += row[r] * row[c];
            }
            b[r] += row[r] * rhs;
        }
    }
    let sol = solve3(a, b)?;
    let c = Vec2::new(-0.5 * sol[0], -0.5 * sol[1]);
    let r2 = c.x * c.x + c.y * c.y - sol[2];
    if !(r2 > 0.0) {
        return None;
    }
    Some((c + m, r2.sqrt()))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Mean spacing of upward zero crossings of `x - mean(x)`.
fn crossing_period(samples: &[TipSample]) -> Option<f64> {
    let mean = samples.iter().map(|s| s.x).sum::<f64>() / samples.len() as f64;
    let mut times = Vec::new();
    for w in samples.windows(2) {
        let (a, b) = (w[0].x - mean, w[1].x - mean);
        if a < 0.0 && b >= 0.0 {
            times.push(w[0].t + (w[1].t - w[0].t) * (-a) / (b - a));
        }
    }
    if times.len() < 3 {
        return None;
    }
    Some((times[times.len() - 1] - times[0]) / (times.len() - 1) as f64)
}

fn least_squares_slope(ts: &[f64], xs: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let mx = xs.iter().sum::<f64>() / n;
    let num: f64 = ts.iter().zip(xs).map(|(t, x)| (t - mt) * (x - mx)).sum();
    let den: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    num / den
}

fn drift_velocity(samples: &[TipSample]) -> Vec2 {
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    Vec2::new(least_squares_slope(&ts, &xs), least_squares_slope(&ts, &ys))
}

fn path_length(points: impl Iterator<Item = Vec2>) -> (f64, f64) {
    let pts: Vec<Vec2> = points.collect();
    let len = pts.windows(2).map(|w| w[0].distance(w[1])).sum();
    let net = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => a.distance(*b),
        _ => 0.0,
    };
    (len, net)
}

fn lattice() -> LatticeSpec {
    LatticeSpec::new(LATTICE_SPACING, Vec2::ZERO).expect("positive spacing")
}

/// Classify the post-transient tip motion. `threshold` is the anchored-vs-
/// meander bound on the center spread relative to the rotation radius.
pub fn classify_with(traj: &TipTrajectory, transient_fraction: f64, threshold: f64) -> Result<MotionClassification, TipError> {
    let post = traj.after_transient(transient_fraction);
    let s = &post.samples;
    if s.len() < MIN_SAMPLES {
        return Err(TipError::InsufficientSamples { got: s.len(), need: MIN_SAMPLES });
    }
    let mut out = MotionClassification {
        kind: MotionKind::Indeterminate,
        anchor: None,
        primary_period: None,
        secondary_period: None,
        drift_velocity: None,
        st_symmetric: false,
        mean_radius: None,
        center_spread: None,
        st_residual: None,
    };
    let (len, net) = path_length(s.iter().map(|p| p.pos()));
    let Some(period) = crossing_period(s) else {
        if net >= 0.5 * len {
            out.kind = MotionKind::LinearDrift;
            out.drift_velocity = Some(drift_velocity(s));
        }
        return Ok(out);
    };
    out.primary_period = Some(period);

    let dt = (s[s.len() - 1].t - s[0].t) / (s.len() - 1) as f64;
    let window = ((period / dt).round() as usize).max(8);
    if window > s.len() {
        return Ok(out);
    }
    let stride = (window / 4).max(1);
    let mut centers: Vec<(f64, Vec2)> = Vec::new();
    let mut radii = Vec::new();
    let mut start = 0;
    while start + window <= s.len() {
        let pts: Vec<Vec2> = s[start..start + window].iter().map(|p| p.pos()).collect();
        if let Some((c, r)) = fit_circle(&pts) {
            centers.push((s[start + window / 2].t, c));
            radii.push(r);
        }
        start += stride;
    }
    if centers.len() < 2 {
        return Ok(out);
    }
    let radius = radii.iter().sum::<f64>() / radii.len() as f64;
    let mean_c = centers.iter().fold(Vec2::ZERO, |a, (_, c)| a + *c) * (1.0 / centers.len() as f64);
    let spread = centers.iter().map(|(_, c)| c.distance(mean_c)).fold(0.0, f64::max);
    out.mean_radius = Some(radius);
    out.center_spread = Some(spread);

    if spread < threshold * radius {
        out.kind = MotionKind::AnchoredRotation;
        out.anchor = Some(mean_c);
        let (res, sym) = lattice_symmetry(&post, mean_c, period / 4.0, radius);
        out.st_residual = res;
        out.st_symmetric = sym;
        return Ok(out);
    }

    let (c_len, c_net) = path_length(centers.iter().map(|(_, c)| *c));
    let mut angles = Vec::with_capacity(centers.len());
    let mut prev: Option<f64> = None;
    for (_, c) in &centers {
        let d = *c - mean_c;
        let raw = d.y.atan2(d.x);
        let a = match prev {
            None => raw,
            Some(p) => p + (raw - p + PI).rem_euclid(TAU) - PI,
        };
        angles.push(a);
        prev = Some(a);
    }
    let winding = (angles[angles.len() - 1] - angles[0]).abs();
    if winding >= TAU && c_net < 0.5 * c_len {
        let ts: Vec<f64> = centers.iter().map(|(t, _)| *t).collect();
        let rate = least_squares_slope(&ts, &angles);
        let secondary = TAU / rate.abs();
        out.kind = MotionKind::Meander;
        out.anchor = Some(mean_c);
        out.secondary_period = Some(secondary);
        let (res, sym) = lattice_symmetry(&post, mean_c, secondary / 4.0, radius);
        out.st_residual = res;
        out.st_symmetric = sym;
        return Ok(out);
    }
    if c_net >= 0.5 * c_len || net >= 0.5 * len {
        out.kind = MotionKind::LinearDrift;
        out.drift_velocity = Some(drift_velocity(s));
    }
    Ok(out)
}

pub fn classify(traj: &TipTrajectory, transient_fraction: f64) -> Result<MotionClassification, TipError> {
    classify_with(traj, transient_fraction, ANCHOR_THRESHOLD)
}

/// Residual about the nearest lattice or dual-lattice point; symmetric when
/// below a tenth of the rotation radius.
fn lattice_symmetry(traj: &TipTrajectory, anchor: Vec2, quarter: f64, radius: f64) -> (Option<f64>, bool) {
    let l = lattice();
    let candidates = [l.nearest_point(anchor).0, l.dual().nearest_point(anchor).0];
    let best = candidates
        .iter()
        .filter_map(|&c| st_symmetry_test(traj, c, quarter).ok())
        .fold(f64::INFINITY, f64::min);
    if best.is_finite() {
        (Some(best), best < 0.1 * radius)
    } else {
        (None, false)
    }
}

/// Signed area swept about `anchor`: positive for counter-clockwise motion.
fn rotation_sense(traj: &TipTrajectory, anchor: Vec2) -> f64 {
    traj.samples
        .windows(2)
        .map(|w| (w[0].pos() - anchor).cross(w[1].pos() - anchor))
        .sum()
}

/// Mean distance between the quarter-turned path (about `anchor`, in the
/// direction of motion) and the path a quarter period later.
pub fn st_symmetry_test(traj: &TipTrajectory, anchor: Vec2, quarter_period: f64) -> Result<f64, TipError> {
    let s = &traj.samples;
    if s.len() < 2 || !(quarter_period > 0.0) || s[s.len() - 1].t - s[0].t < 4.0 * quarter_period {
        return Err(TipError::TooShort);
    }
    let turns = if rotation_sense(traj, anchor) >= 0.0 { 1 } else { -1 };
    let t_last = s[s.len() - 1].t;
    let mut total = 0.0;
    let mut count = 0usize;
    for p in s.iter().take_while(|p| p.t + quarter_period <= t_last) {
        let rotated = (p.pos() - anchor).rotate_quarter(turns) + anchor;
        total += rotated.distance(traj.at(p.t + quarter_period));
        count += 1;
    }
    Ok(total / count as f64)
}

/// Classification plus distances to the lattice of spacing `4 pi` and to its
/// half-spacing-shifted copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    #[serde(flatten)]
    pub classification: MotionClassification,
    pub nearest_lattice_point: Option<Vec2>,
    pub lattice_distance: Option<f64>,
    pub nearest_dual_point: Option<Vec2>,
    pub dual_distance: Option<f64>,
}

impl ClassificationRecord {
    pub fn new(classification: MotionClassification) -> Self {
        let l = lattice();
        let near = classification.anchor.map(|a| l.nearest_point(a));
        let dual = classification.anchor.map(|a| l.dual().nearest_point(a));
        Self {
            classification,
            nearest_lattice_point: near.map(|x| x.0),
            lattice_distance: near.map(|x| x.1),
            nearest_dual_point: dual.map(|x| x.0),
            dual_distance: dual.map(|x| x.1),
        }
    }
}
