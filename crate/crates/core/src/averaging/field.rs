use super::bessel::bessel_j_upto;
use super::AveragingError;
use crate::lattice::{apply_j, Vec2};
use crate::perturbation::{PerturbationSpec, TrigTerm};
use crate::trig::{Kind, PhiFactor, PsiFactor, VecTorusPoly};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Trapezoid order of the quadrature evaluator.
pub const QUADRATURE_ORDER: usize = 256;

/// Coefficients below this are treated as roundoff from the Bessel sums.
const DROP_TOL: f64 = 1e-15;

/// A smooth vector field on the plane (or on the torus, if 2pi-periodic).
pub trait PlanarField: Sync {
    fn eval(&self, x: Vec2) -> Vec2;

    /// `[[d1 f1, d2 f1], [d1 f2, d2 f2]]`. Central differences by default.
    fn jacobian(&self, x: Vec2) -> [[f64; 2]; 2] {
        let h = 1e-6;
        let dx = (self.eval(x + Vec2::new(h, 0.0)) - self.eval(x - Vec2::new(h, 0.0))) * (0.5 / h);
        let dy = (self.eval(x + Vec2::new(0.0, h)) - self.eval(x - Vec2::new(0.0, h))) * (0.5 / h);
        [[dx.x, dy.x], [dx.y, dy.y]]
    }

    fn divergence(&self, x: Vec2) -> f64 {
        let j = self.jacobian(x);
        j[0][0] + j[1][1]
    }
}

/// Wraps a closure as a [`PlanarField`] with a finite-difference Jacobian.
pub struct FnField<F>(pub F);

impl<F: Fn(Vec2) -> Vec2 + Sync> PlanarField for FnField<F> {
    fn eval(&self, x: Vec2) -> Vec2 {
        (self.0)(x)
    }
}

/// Time reversal of a field.
pub struct Reversed<'a, P: ?Sized>(pub &'a P);

impl<P: PlanarField + ?Sized> PlanarField for Reversed<'_, P> {
    fn eval(&self, x: Vec2) -> Vec2 {
        -self.0.eval(x)
    }

    fn jacobian(&self, x: Vec2) -> [[f64; 2]; 2] {
        let j = self.0.jacobian(x);
        [[-j[0][0], -j[0][1]], [-j[1][0], -j[1][1]]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Source {
    spec: PerturbationSpec,
    w: Vec2,
    omega: f64,
}

/// The first-order averaged field on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedField {
    pub terms: VecTorusPoly,
    pub quadrature_order: usize,
    #[serde(skip)]
    source: Option<Source>,
}

impl AveragedField {
    /// A field given directly by its trigonometric form.
    pub fn from_poly(terms: VecTorusPoly) -> Self {
        Self {
            terms,
            quadrature_order: QUADRATURE_ORDER,
            source: None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_zero()
    }

    /// `sum |c| max(1, |n|_1)`, an upper bound for the field and its Lipschitz constant.
    pub fn scale(&self) -> f64 {
        self.terms
            .terms()
            .iter()
            .map(|(f, c)| c.norm() * (f.mode.l1().max(1) as f64))
            .sum()
    }

    /// Trapezoid evaluation of the defining phi-average. `None` for fields
    /// built with [`AveragedField::from_poly`].
    pub fn eval_quadrature(&self, psi: Vec2) -> Option<Vec2> {
        let s = self.source.as_ref()?;
        Some(average_quadrature(&s.spec, s.w, s.omega, psi, self.quadrature_order))
    }

    /// `max |G(J psi) - J G(psi)|` over the given points.
    pub fn equivariance_residual(&self, points: &[Vec2]) -> f64 {
        points
            .iter()
            .map(|&p| (self.eval(apply_j(p)) - apply_j(self.eval(p))).norm())
            .fold(0.0, f64::max)
    }
}

impl PlanarField for AveragedField {
    fn eval(&self, x: Vec2) -> Vec2 {
        self.terms.eval(x)
    }

    fn jacobian(&self, x: Vec2) -> [[f64; 2]; 2] {
        self.terms.jacobian(x)
    }
}

/// First-order rescaled perturbation `H0 = (F^Psi - W F^phi) / omega` as two
/// lists of scaled terms.
fn rescaled_terms(spec: &PerturbationSpec, w: Vec2, omega: f64) -> [Vec<(f64, &TrigTerm)>; 2] {
    let inv = 1.0 / omega;
    let mut h1: Vec<(f64, &TrigTerm)> = spec.f_psi_1.iter().map(|t| (inv, t)).collect();
    let mut h2: Vec<(f64, &TrigTerm)> = spec.f_psi_2.iter().map(|t| (inv, t)).collect();
    if w.x != 0.0 {
        h1.extend(spec.f_phi.iter().map(|t| (-w.x * inv, t)));
    }
    if w.y != 0.0 {
        h2.extend(spec.f_phi.iter().map(|t| (-w.y * inv, t)));
    }
    [h1, h2]
}

type Harmonics = Vec<(i64, Complex64)>;

fn phi_harmonics(p: PhiFactor) -> Harmonics {
    let half = Complex64::new(0.5, 0.0);
    let ihalf = Complex64::new(0.0, 0.5);
    match p.kind {
        Kind::One => vec![(0, Complex64::new(1.0, 0.0))],
        Kind::Cos => vec![(p.m, half), (-p.m, half)],
        Kind::Sin => vec![(p.m, -ihalf), (-p.m, ihalf)],
    }
}

fn convolve(a: &Harmonics, b: &Harmonics) -> Harmonics {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &(ka, ca) in a {
        for &(kb, cb) in b {
            out.push((ka + kb, ca * cb));
        }
    }
    out
}

fn scaled(a: &Harmonics, s: f64) -> Harmonics {
    a.iter().map(|&(k, c)| (k, c * s)).collect()
}

/// `<f(phi) exp(i rho cos(phi - delta))>_phi` for `f` given by its harmonics.
fn jacobi_anger_mean(f: &Harmonics, rho: f64, delta: f64) -> Complex64 {
    let jmax = f.iter().map(|(k, _)| k.unsigned_abs() as usize).max().unwrap_or(0);
    let bj = bessel_j_upto(jmax, rho);
    let mut acc = Complex64::new(0.0, 0.0);
    for &(k, c) in f {
        // With m = -k the harmonic exp(i k phi) pairs with exp(i m phi) of the expansion.
        let m = -k;
        let am = m.unsigned_abs() as usize;
        let mut jm = bj[am];
        if m < 0 && am % 2 == 1 {
            jm = -jm;
        }
        let ipow = match m.rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        acc += c * ipow * jm * Complex64::from_polar(1.0, -(m as f64) * delta);
    }
    acc
}

/// The averaged field `<R(phi) H0(Psi + J R(phi) W, phi)>_phi` in closed form.
pub fn average_over_phi(spec: &PerturbationSpec, v: Vec2, omega: f64) -> Result<AveragedField, AveragingError> {
    if !(omega > 0.0) {
        return Err(AveragingError::NoRotation);
    }
    if !v.is_finite() || !omega.is_finite() {
        return Err(AveragingError::InvalidInput("non-finite drift or frequency".into()));
    }
    let w = v * (1.0 / omega);
    let jw = apply_j(w);
    let cos1 = phi_harmonics(PhiFactor::cos(1));
    let sin1 = phi_harmonics(PhiFactor::sin(1));
    let [h1, h2] = rescaled_terms(spec, w, omega);

    let mut out: Vec<(PsiFactor, Vec2)> = Vec::new();
    for (component, list) in [(0, &h1), (1, &h2)] {
        for &(scale, term) in list {
            let a = scale * term.coeff;
            let p = phi_harmonics(term.phi);
            // R(phi) e_1 = (cos, sin), R(phi) e_2 = (-sin, cos).
            let (gx, gy) = if component == 0 {
                (convolve(&cos1, &p), convolve(&sin1, &p))
            } else {
                (scaled(&convolve(&sin1, &p), -1.0), convolve(&cos1, &p))
            };
            let n = term.psi.mode;
            // Shift argument X(phi) = n . J R(phi) W = rho cos(phi - delta).
            let (rx, ry) = (n.dot(jw), n.dot(w));
            let rho = rx.hypot(ry);
            let delta = ry.atan2(rx);
            let sx = jacobi_anger_mean(&gx, rho, delta);
            let sy = jacobi_anger_mean(&gy, rho, delta);
            let re = Vec2::new(sx.re, sy.re) * a;
            let im = Vec2::new(sx.im, sy.im) * a;
            match term.psi.kind {
                Kind::One => out.push((PsiFactor::ONE, re)),
                // cos(t + X) = cos t cos X - sin t sin X
                Kind::Cos => {
                    out.push((PsiFactor { kind: Kind::Cos, mode: n }, re));
                    out.push((PsiFactor { kind: Kind::Sin, mode: n }, -im));
                }
                // sin(t + X) = sin t cos X + cos t sin X
                Kind::Sin => {
                    out.push((PsiFactor { kind: Kind::Sin, mode: n }, re));
                    out.push((PsiFactor { kind: Kind::Cos, mode: n }, im));
                }
            }
        }
    }
    let scale = out.iter().map(|(_, c)| c.norm()).fold(0.0, f64::max).max(1.0);
    Ok(AveragedField {
        terms: VecTorusPoly::with_tolerance(out, DROP_TOL * scale),
        quadrature_order: QUADRATURE_ORDER,
        source: Some(Source {
            spec: spec.clone(),
            w,
            omega,
        }),
    })
}

/// `order`-point trapezoid rule for the defining phi-average at one point.
pub fn average_quadrature(spec: &PerturbationSpec, w: Vec2, omega: f64, psi: Vec2, order: usize) -> Vec2 {
    let jw = apply_j(w);
    let mut acc = Vec2::ZERO;
    for k in 0..order {
        let phi = TAU * k as f64 / order as f64;
        let shifted = psi + jw.rotate(phi);
        let (fp, ff) = spec.evaluate(shifted, phi);
        let h = (fp - w * ff) * (1.0 / omega);
        acc = acc + h.rotate(phi);
    }
    acc * (1.0 / order as f64)
}
