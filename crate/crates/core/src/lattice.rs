//! Planar Euclidean group elements, the square-lattice subgroup and its
//! quarter-turn generator.
//!
//! Elements are stored as `(theta, p)` acting on the plane by `z -> R(theta) z + p`.
//! Angles are normalized to `[0, 2pi)` once, at construction.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, TAU};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// A point or displacement in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// `R(theta) * self`.
    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Exact rotation by `quarter_turns * pi/2`.
    pub fn rotate_quarter(self, quarter_turns: i32) -> Vec2 {
        match quarter_turns.rem_euclid(4) {
            0 => self,
            1 => Vec2::new(-self.y, self.x),
            2 => -self,
            _ => Vec2::new(self.y, -self.x),
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wrap an angle into `[0, 2pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Signed representative of an angle difference in `[-pi, pi)`.
pub fn wrap_signed(theta: f64) -> f64 {
    let w = wrap_angle(theta + std::f64::consts::PI) - std::f64::consts::PI;
    if w < -std::f64::consts::PI {
        w + TAU
    } else {
        w
    }
}

/// The quarter-turn `J = R(-pi/2)`: `(x, y) -> (y, -x)`.
pub fn apply_j(v: Vec2) -> Vec2 {
    Vec2::new(v.y, -v.x)
}

/// `J^k v` for any integer `k`.
pub fn apply_j_pow(v: Vec2, k: i32) -> Vec2 {
    v.rotate_quarter(-k)
}

/// An element `(theta, p)` of SE(2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SE2Element {
    theta: f64,
    p: Vec2,
}

impl SE2Element {
    pub const IDENTITY: SE2Element = SE2Element {
        theta: 0.0,
        p: Vec2::ZERO,
    };

    pub fn new(theta: f64, p: Vec2) -> Self {
        Self {
            theta: wrap_angle(theta),
            p,
        }
    }

    pub fn rotation(theta: f64) -> Self {
        Self::new(theta, Vec2::ZERO)
    }

    pub fn translation(p: Vec2) -> Self {
        Self::new(0.0, p)
    }

    /// The lattice element with rotation `l * pi/2` and integer translation `(m, n)`.
    pub fn lattice(l: i32, m: i64, n: i64) -> Self {
        Self::new(l.rem_euclid(4) as f64 * FRAC_PI_2, Vec2::new(m as f64, n as f64))
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn translation_part(&self) -> Vec2 {
        self.p
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &SE2Element) -> SE2Element {
        SE2Element::new(other.theta + self.theta, other.p.rotate(self.theta) + self.p)
    }

    pub fn inverse(&self) -> SE2Element {
        SE2Element::new(-self.theta, -self.p.rotate(-self.theta))
    }

    pub fn act_on_point(&self, z: Vec2) -> Vec2 {
        z.rotate(self.theta) + self.p
    }

    /// Distance to another element: angular gap plus translation gap.
    pub fn distance(&self, other: &SE2Element) -> f64 {
        wrap_signed(self.theta - other.theta).abs() + self.p.distance(other.p)
    }
}

/// Composition `g2 * g1` (apply `g1` first).
pub fn compose(g2: &SE2Element, g1: &SE2Element) -> SE2Element {
    g2.compose(g1)
}

/// Square lattice `origin + spacing * Z^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    spacing: f64,
    origin: Vec2,
}

impl LatticeSpec {
    /// Returns `None` unless `spacing` is positive and finite.
    pub fn new(spacing: f64, origin: Vec2) -> Option<Self> {
        (spacing > 0.0 && spacing.is_finite()).then_some(Self { spacing, origin })
    }

    /// Lattice of the symmetry subgroup: unit spacing through the origin.
    pub fn unit() -> Self {
        Self {
            spacing: 1.0,
            origin: Vec2::ZERO,
        }
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    /// The lattice shifted by half a spacing along both axes (cell centers).
    pub fn dual(&self) -> Self {
        Self {
            spacing: self.spacing,
            origin: self.origin + Vec2::new(0.5, 0.5) * self.spacing,
        }
    }

    pub fn point(&self, m: i64, n: i64) -> Vec2 {
        self.origin + Vec2::new(m as f64, n as f64) * self.spacing
    }

    /// Closest lattice point and its distance; ties go to the lexicographically
    /// smaller index pair.
    pub fn nearest_point(&self, z: Vec2) -> (Vec2, f64) {
        let rel = (z - self.origin) * (1.0 / self.spacing);
        let (m0, n0) = (rel.x.floor() as i64, rel.y.floor() as i64);
        let mut best: Option<(Vec2, f64)> = None;
        for m in m0..=m0 + 1 {
            for n in n0..=n0 + 1 {
                let q = self.point(m, n);
                let d = q.distance(z);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((q, d));
                }
            }
        }
        best.expect("four candidates")
    }
}

/// Free-function form of [`LatticeSpec::nearest_point`].
pub fn nearest_lattice_point(lattice: &LatticeSpec, z: Vec2) -> (Vec2, f64) {
    lattice.nearest_point(z)
}
