//! Finite trigonometric polynomials on the circle and on the two-torus.
//!
//! Every factor is `one`, `sin(k x)` or `cos(k x)`. Canonical factors have a
//! lexicographically positive mode (`cos` is even, `sin` is odd) and
//! `one` carries mode zero, so equal functions have equal term lists.

use crate::lattice::Vec2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Coefficients smaller than this are dropped when terms are merged.
pub const MERGE_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    One,
    Sin,
    Cos,
}

impl Kind {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Kind::One => 1.0,
            Kind::Sin => x.sin(),
            Kind::Cos => x.cos(),
        }
    }

    /// `d/dx` of the factor at `x`, per unit mode.
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            Kind::One => 0.0,
            Kind::Sin => x.cos(),
            Kind::Cos => -x.sin(),
        }
    }
}

/// Integer wave vector `(n1, n2)` on the two-torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode {
    pub n1: i64,
    pub n2: i64,
}

impl Mode {
    pub const ZERO: Mode = Mode { n1: 0, n2: 0 };

    pub const fn new(n1: i64, n2: i64) -> Self {
        Self { n1, n2 }
    }

    pub fn is_zero(self) -> bool {
        self.n1 == 0 && self.n2 == 0
    }

    /// Lexicographically positive: first nonzero entry is positive.
    pub fn is_positive(self) -> bool {
        self.n1 > 0 || (self.n1 == 0 && self.n2 > 0)
    }

    pub fn neg(self) -> Mode {
        Mode::new(-self.n1, -self.n2)
    }

    pub fn dot(self, v: Vec2) -> f64 {
        self.n1 as f64 * v.x + self.n2 as f64 * v.y
    }

    /// Mode after substituting `Psi -> -J Psi`, i.e. `(psi1, psi2) -> (-psi2, psi1)`.
    pub fn quarter_turn(self) -> Mode {
        Mode::new(self.n2, -self.n1)
    }

    pub fn l1(self) -> i64 {
        self.n1.abs() + self.n2.abs()
    }
}

/// A factor in `phi`: `one`, `sin(m phi)` or `cos(m phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhiFactor {
    pub kind: Kind,
    pub m: i64,
}

impl PhiFactor {
    pub const ONE: PhiFactor = PhiFactor { kind: Kind::One, m: 0 };

    pub fn sin(m: i64) -> Self {
        Self { kind: Kind::Sin, m }
    }

    pub fn cos(m: i64) -> Self {
        Self { kind: Kind::Cos, m }
    }

    pub fn eval(self, phi: f64) -> f64 {
        self.kind.eval(self.m as f64 * phi)
    }

    pub fn deriv(self, phi: f64) -> f64 {
        self.m as f64 * self.kind.deriv(self.m as f64 * phi)
    }

    /// Canonical form as `(sign, factor)`, or `None` when identically zero.
    pub fn canonical(self) -> Option<(f64, PhiFactor)> {
        match self.kind {
            Kind::One => Some((1.0, PhiFactor::ONE)),
            _ if self.m == 0 => match self.kind {
                Kind::Sin => None,
                _ => Some((1.0, PhiFactor::ONE)),
            },
            Kind::Cos => Some((1.0, PhiFactor::cos(self.m.abs()))),
            Kind::Sin => Some((self.m.signum() as f64, PhiFactor::sin(self.m.abs()))),
        }
    }

    /// The factor at `phi + pi/2`, as `(sign, factor)`.
    pub fn quarter_shift(self) -> (f64, PhiFactor) {
        let k = self.m.rem_euclid(4);
        match (self.kind, k) {
            (Kind::One, _) => (1.0, self),
            (_, 0) => (1.0, self),
            (Kind::Cos, 1) => (-1.0, PhiFactor::sin(self.m)),
            (Kind::Cos, 2) => (-1.0, self),
            (Kind::Cos, _) => (1.0, PhiFactor::sin(self.m)),
            (Kind::Sin, 1) => (1.0, PhiFactor::cos(self.m)),
            (Kind::Sin, 2) => (-1.0, self),
            (Kind::Sin, _) => (-1.0, PhiFactor::cos(self.m)),
        }
    }
}

/// A factor in `Psi`: `one`, `sin(n . Psi)` or `cos(n . Psi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PsiFactor {
    pub kind: Kind,
    pub mode: Mode,
}

impl PsiFactor {
    pub const ONE: PsiFactor = PsiFactor {
        kind: Kind::One,
        mode: Mode::ZERO,
    };

    pub fn sin(n1: i64, n2: i64) -> Self {
        Self {
            kind: Kind::Sin,
            mode: Mode::new(n1, n2),
        }
    }

    pub fn cos(n1: i64, n2: i64) -> Self {
        Self {
            kind: Kind::Cos,
            mode: Mode::new(n1, n2),
        }
    }

    pub fn eval(self, psi: Vec2) -> f64 {
        self.kind.eval(self.mode.dot(psi))
    }

    /// Gradient with respect to `(psi1, psi2)`.
    pub fn grad(self, psi: Vec2) -> Vec2 {
        let d = self.kind.deriv(self.mode.dot(psi));
        Vec2::new(self.mode.n1 as f64 * d, self.mode.n2 as f64 * d)
    }

    pub fn canonical(self) -> Option<(f64, PsiFactor)> {
        match self.kind {
            Kind::One => Some((1.0, PsiFactor::ONE)),
            _ if self.mode.is_zero() => match self.kind {
                Kind::Sin => None,
                _ => Some((1.0, PsiFactor::ONE)),
            },
            _ if self.mode.is_positive() => Some((1.0, self)),
            Kind::Cos => Some((
                1.0,
                PsiFactor {
                    kind: Kind::Cos,
                    mode: self.mode.neg(),
                },
            )),
            Kind::Sin => Some((
                -1.0,
                PsiFactor {
                    kind: Kind::Sin,
                    mode: self.mode.neg(),
                },
            )),
        }
    }

    /// The factor after `Psi -> -J Psi` (not canonicalized).
    pub fn quarter_turn(self) -> PsiFactor {
        PsiFactor {
            kind: self.kind,
            mode: self.mode.quarter_turn(),
        }
    }
}

fn merge<K: Ord + Copy, C: Copy>(
    items: impl IntoIterator<Item = (K, C)>,
    add: impl Fn(C, C) -> C,
    negligible: impl Fn(C) -> bool,
) -> Vec<(K, C)> {
    let mut map: BTreeMap<K, C> = BTreeMap::new();
    for (k, c) in items {
        map.entry(k).and_modify(|e| *e = add(*e, c)).or_insert(c);
    }
    map.into_iter().filter(|(_, c)| !negligible(*c)).collect()
}

/// Real trigonometric polynomial in one angle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseSeries {
    terms: Vec<(PhiFactor, f64)>,
}

impl PhaseSeries {
    pub fn new(terms: impl IntoIterator<Item = (PhiFactor, f64)>) -> Self {
        let canon = terms.into_iter().filter_map(|(f, c)| {
            f.canonical().map(|(s, f)| (f, s * c))
        });
        Self {
            terms: merge(canon, |a, b| a + b, |c| c.abs() < MERGE_EPS),
        }
    }

    pub fn terms(&self) -> &[(PhiFactor, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, factor: PhiFactor) -> f64 {
        self.terms
            .iter()
            .find(|(f, _)| *f == factor)
            .map_or(0.0, |(_, c)| *c)
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.terms.iter().map(|(f, c)| c * f.eval(phi)).sum()
    }

    pub fn deriv(&self, phi: f64) -> f64 {
        self.terms.iter().map(|(f, c)| c * f.deriv(phi)).sum()
    }

    pub fn second_deriv(&self, phi: f64) -> f64 {
        self.terms
            .iter()
            .map(|(f, c)| {
                let m = f.m as f64;
                -c * m * m * f.eval(phi)
            })
            .sum()
    }
}

impl fmt::Display for PhaseSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (fac, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            match fac.kind {
                Kind::One => write!(f, "{c:?}")?,
                Kind::Sin => write!(f, "{c:?}*sin({}p)", fac.m)?,
                Kind::Cos => write!(f, "{c:?}*cos({}p)", fac.m)?,
            }
        }
        Ok(())
    }
}

/// Real scalar trigonometric polynomial on the two-torus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TorusPoly {
    terms: Vec<(PsiFactor, f64)>,
}

impl TorusPoly {
    pub fn new(terms: impl IntoIterator<Item = (PsiFactor, f64)>) -> Self {
        let canon = terms.into_iter().filter_map(|(f, c)| {
            f.canonical().map(|(s, f)| (f, s * c))
        });
        Self {
            terms: merge(canon, |a, b| a + b, |c| c.abs() < MERGE_EPS),
        }
    }

    pub fn terms(&self) -> &[(PsiFactor, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Torus average, i.e. the constant coefficient.
    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .filter(|(f, _)| f.kind == Kind::One)
            .map(|(_, c)| *c)
            .sum()
    }

    pub fn eval(&self, psi: Vec2) -> f64 {
        self.terms.iter().map(|(f, c)| c * f.eval(psi)).sum()
    }

    pub fn grad(&self, psi: Vec2) -> Vec2 {
        self.terms
            .iter()
            .fold(Vec2::ZERO, |acc, (f, c)| acc + f.grad(psi) * *c)
    }

    /// Nonzero modes in the support.
    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        self.terms
            .iter()
            .filter(|(f, _)| f.kind != Kind::One)
            .map(|(f, _)| f.mode)
    }
}

/// Vector-valued (`R^2`) trigonometric polynomial on the two-torus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VecTorusPoly {
    terms: Vec<(PsiFactor, Vec2)>,
}

impl VecTorusPoly {
    pub fn new(terms: impl IntoIterator<Item = (PsiFactor, Vec2)>) -> Self {
        Self::with_tolerance(terms, MERGE_EPS)
    }

    /// Like [`VecTorusPoly::new`] but drops merged coefficients below `tol`.
    pub fn with_tolerance(terms: impl IntoIterator<Item = (PsiFactor, Vec2)>, tol: f64) -> Self {
        let canon = terms.into_iter().filter_map(|(f, c)| {
            f.canonical().map(|(s, f)| (f, c * s))
        });
        Self {
            terms: merge(canon, |a, b| a + b, |c| c.x.abs() < tol && c.y.abs() < tol),
        }
    }

    pub fn terms(&self) -> &[(PsiFactor, Vec2)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, psi: Vec2) -> Vec2 {
        self.terms
            .iter()
            .fold(Vec2::ZERO, |acc, (f, c)| acc + *c * f.eval(psi))
    }

    /// Jacobian `[[d1 G1, d2 G1], [d1 G2, d2 G2]]`.
    pub fn jacobian(&self, psi: Vec2) -> [[f64; 2]; 2] {
        let mut j = [[0.0; 2]; 2];
        for (f, c) in &self.terms {
            let g = f.grad(psi);
            j[0][0] += c.x * g.x;
            j[0][1] += c.x * g.y;
            j[1][0] += c.y * g.x;
            j[1][1] += c.y * g.y;
        }
        j
    }

    pub fn max_coefficient(&self) -> f64 {
        self.terms
            .iter()
            .map(|(_, c)| c.x.abs().max(c.y.abs()))
            .fold(0.0, f64::max)
    }
}
