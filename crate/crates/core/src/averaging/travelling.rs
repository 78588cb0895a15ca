use super::AveragingError;
use crate::lattice::Vec2;
use crate::perturbation::PerturbationSpec;
use crate::trig::{Kind, Mode, PhaseSeries, PsiFactor, TorusPoly};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const ZERO_SAMPLES: usize = 1024;
pub const TRANSVERSE_TOL: f64 = 1e-8;
pub const RESONANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MZero {
    pub phi_star: f64,
    /// `M'(phi_star)`.
    pub mu: f64,
    pub transverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    /// `min |n . R(phi*) V|` over the perturbation's psi-modes; infinite if there are none.
    pub margin: f64,
    pub worst_mode: Option<Mode>,
    pub alpha_beta: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravellingWaveReport {
    pub phi_star: f64,
    pub mu: f64,
    pub stable: bool,
    pub resonance_margin: f64,
    pub alpha_beta: Vec2,
}

/// Torus average of `F^phi`: only terms without a psi-dependence survive.
pub fn compute_m(spec: &PerturbationSpec) -> PhaseSeries {
    PhaseSeries::new(
        spec.f_phi
            .iter()
            .filter(|t| t.psi.kind == Kind::One)
            .map(|t| (t.phi, t.coeff)),
    )
}

/// `M(phi)` by an `n x n` midpoint rule on the torus.
pub fn compute_m_quadrature(spec: &PerturbationSpec, phi: f64, n: usize) -> f64 {
    let h = TAU / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let psi = Vec2::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            acc += spec.evaluate(psi, phi).1;
        }
    }
    acc / (n * n) as f64
}

fn newton_phase(m: &PhaseSeries, mut x: f64, bracket: Option<(f64, f64)>) -> f64 {
    for _ in 0..100 {
        let d = m.deriv(x);
        if d == 0.0 {
            break;
        }
        let next = x - m.eval(x) / d;
        if let Some((a, b)) = bracket {
            if !(a..=b).contains(&next) {
                return bisect(m, a, b);
            }
        }
        if (next - x).abs() < 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

fn bisect(m: &PhaseSeries, mut a: f64, mut b: f64) -> f64 {
    let mut fa = m.eval(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = m.eval(mid);
        if fm == 0.0 || (b - a) < 1e-16 {
            return mid;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU - 1e-14 { 0.0 } else { y }
}

/// Zeros of `M` on `[0, 2pi)`: sign changes on a uniform grid polished by
/// Newton, plus tangential zeros found as near-zero critical points.
pub fn find_m_zeros(m: &PhaseSeries) -> Result<Vec<MZero>, AveragingError> {
    if m.is_zero() {
        return Err(AveragingError::DegenerateM);
    }
    let n = ZERO_SAMPLES;
    let h = TAU / n as f64;
    let xs: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| m.eval(x)).collect();
    let mut roots: Vec<f64> = Vec::new();

    // Tangential zeros: critical points where |M| is tiny.
    let scale = m.terms().iter().map(|(_, c)| c.abs()).sum::<f64>().max(1.0);
    let dvals: Vec<f64> = xs.iter().map(|&x| m.deriv(x)).collect();
    for k in 0..n {
        if dvals[k] * dvals[k + 1] < 0.0 || dvals[k] == 0.0 {
            let mut x = bisect_deriv(m, xs[k], xs[k + 1]);
            // Newton on M' for the critical point.
            for _ in 0..50 {
                let dd = m.second_deriv(x);
                if dd == 0.0 {
                    break;
                }
                x -= m.deriv(x) / dd;
            }
            if m.eval(x).abs() < 1e-10 * scale {
                roots.push(x);
            }
        }
    }

    for k in 0..n {
        let (a, b) = (xs[k], xs[k + 1]);
        let (fa, fb) = (vals[k], vals[k + 1]);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let guess = a - fa * (b - a) / (fb - fa);
            roots.push(newton_phase(m, guess, Some((a, b))));
        }
    }

    let mut out: Vec<MZero> = Vec::new();
    for r in roots {
        let r = wrap_phase(r);
        let dup = out.iter().any(|z| {
            let d = (z.phi_star - r).rem_euclid(TAU);
            d.min(TAU - d) < 1e-6
        });
        if !dup {
            let mu = m.deriv(r);
            out.push(MZero {
                phi_star: r,
                mu,
                transverse: mu.abs() >= TRANSVERSE_TOL,
            });
        }
    }
    out.sort_by(|a, b| a.phi_star.total_cmp(&b.phi_star));
    Ok(out)
}

fn bisect_deriv(m: &PhaseSeries, mut a: f64, mut b: f64) -> f64 {
    let mut fa = m.deriv(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        let fm = m.deriv(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fa < 0.0) == (fm < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Smallest `|n . R(phi*) V|` over the nonzero psi-modes of `spec`.
pub fn resonance_check(v: Vec2, phi_star: f64, spec: &PerturbationSpec) -> Result<ResonanceReport, AveragingError> {
    let ab = v.rotate(phi_star);
    let mut margin = f64::INFINITY;
    let mut worst = None;
    for mode in spec.psi_modes() {
        let d = mode.dot(ab).abs();
        if d < margin {
            margin = d;
            worst = Some(mode);
        }
    }
    if margin < RESONANCE_TOL {
        let mode = worst.expect("finite margin has a mode");
        return Err(AveragingError::Resonance { mode, margin });
    }
    Ok(ResonanceReport {
        margin,
        worst_mode: worst,
        alpha_beta: ab,
    })
}

/// Zero-mean `Y` with `DY . w = input`, solved mode by mode.
pub fn solve_cohomological(input: &TorusPoly, w: Vec2) -> Result<TorusPoly, AveragingError> {
    let mean = input.mean();
    if mean != 0.0 {
        return Err(AveragingError::NonZeroMean { mean });
    }
    let mut out = Vec::with_capacity(input.terms().len());
    for &(f, c) in input.terms() {
        let nw = f.mode.dot(w);
        if nw.abs() < RESONANCE_TOL {
            return Err(AveragingError::Resonance {
                mode: f.mode,
                margin: nw.abs(),
            });
        }
        match f.kind {
            Kind::Cos => out.push((PsiFactor { kind: Kind::Sin, mode: f.mode }, c / nw)),
            Kind::Sin => out.push((PsiFactor { kind: Kind::Cos, mode: f.mode }, -c / nw)),
            Kind::One => unreachable!("constant term has zero mean"),
        }
    }
    Ok(TorusPoly::new(out))
}
