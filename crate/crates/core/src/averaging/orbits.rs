use super::equilibria::{torus_delta, torus_dist};
use super::field::{PlanarField, Reversed};
use crate::lattice::{apply_j, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StSymmetry {
    /// `Psi(t - T/4) = J Psi(t)`
    #[serde(rename = "+")]
    Plus,
    /// `Psi(t - T/4) = -J Psi(t)`
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "none")]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitReport {
    /// One period, first point repeated at the end. Unwrapped.
    #[serde(skip)]
    pub samples: Vec<Vec2>,
    pub period: f64,
    /// Mean divergence along the orbit.
    pub beta: f64,
    pub stable: bool,
    pub st_symmetric: StSymmetry,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitOptions {
    pub dt: f64,
    pub transient: f64,
    pub t_max: f64,
    /// Convergence tolerance for successive section returns.
    pub tol: f64,
    /// Resampled points per period, rounded up to a multiple of 4.
    pub samples: usize,
    /// Integrate the reversed field to locate repelling cycles.
    pub backward: bool,
    pub symmetry_tol: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            transient: 50.0,
            t_max: 5000.0,
            tol: 1e-8,
            samples: 2048,
            backward: false,
            symmetry_tol: 1e-6,
        }
    }
}

impl OrbitOptions {
    /// Defaults with times scaled for a field of size `scale`.
    pub fn for_scale(scale: f64) -> Self {
        let s = scale.max(1e-6);
        let d = Self::default();
        Self {
            dt: (d.dt / s).min(0.05),
            transient: d.transient / s,
            t_max: d.t_max / s,
            ..d
        }
    }
}

pub(crate) fn rk4<F: PlanarField + ?Sized>(field: &F, x: Vec2, h: f64) -> Vec2 {
    let k1 = field.eval(x);
    let k2 = field.eval(x + k1 * (0.5 * h));
    let k3 = field.eval(x + k2 * (0.5 * h));
    let k4 = field.eval(x + k3 * h);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Limit cycle reached from `seed`, or `None` if the flow settles on an
/// equilibrium or no stable return is seen before `t_max`.
pub fn find_periodic_orbit<F: PlanarField + ?Sized>(
    field: &F,
    seed: Vec2,
    opts: &OrbitOptions,
) -> Option<PeriodicOrbitReport> {
    if opts.backward {
        let rev = Reversed(field);
        let (start, period) = search(&rev, seed, opts)?;
        let mut samples = sample_orbit(&rev, start, period, opts);
        samples.reverse();
        Some(report(field, samples, period, opts))
    } else {
        let (start, period) = search(field, seed, opts)?;
        let samples = sample_orbit(field, start, period, opts);
        Some(report(field, samples, period, opts))
    }
}

/// A point on the cycle and its period, from successive returns to a section
/// through the post-transient state normal to the flow.
fn search<F: PlanarField + ?Sized>(field: &F, seed: Vec2, opts: &OrbitOptions) -> Option<(Vec2, f64)> {
    let h = opts.dt;
    let mut x = seed;
    let mut t = 0.0;
    while t < opts.transient {
        x = rk4(field, x, h);
        t += h;
        if !x.is_finite() {
            return None;
        }
    }
    let x0 = x;
    let v0 = field.eval(x0);
    let speed0 = v0.norm();
    if speed0 < 1e-9 {
        return None;
    }
    let normal = v0 * (1.0 / speed0);
    let side = |p: Vec2| torus_delta(p, x0).dot(normal);

    let mut reach = 0.0f64;
    let mut last: Option<(Vec2, f64)> = None;
    let mut last_period: Option<f64> = None;
    let mut t_local = 0.0;
    let mut s_prev = side(x);
    while t < opts.t_max {
        let xn = rk4(field, x, h);
        if !xn.is_finite() {
            return None;
        }
        let s_new = side(xn);
        t += h;
        t_local += h;
        reach = reach.max(torus_dist(xn, x0));
        if field.eval(xn).norm() < 1e-9 * speed0.max(1.0) {
            return None;
        }
        if s_prev < 0.0 && s_new >= 0.0 {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if side(rk4(field, x, mid)) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = 0.5 * (lo + hi);
            let pc = rk4(field, x, tau);
            let tc = t_local - h + tau;
            // Far crossings belong to other branches of the section line.
            if torus_dist(pc, x0) < 0.05 * reach {
                if let Some((pp, tp)) = last {
                    let period = tc - tp;
                    let settled = last_period.is_some_and(|q| (q - period).abs() < opts.tol * period.max(1.0));
                    if torus_dist(pc, pp) < opts.tol && settled {
                        return Some((pc, period));
                    }
                    last_period = Some(period);
                }
                last = Some((pc, tc));
            }
        }
        s_prev = s_new;
        x = xn;
    }
    None
}

fn sample_orbit<F: PlanarField + ?Sized>(field: &F, start: Vec2, period: f64, opts: &OrbitOptions) -> Vec<Vec2> {
    let n = opts.samples.div_ceil(4).max(16) * 4;
    let h = period / n as f64;
    let sub = (h / opts.dt).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(n + 1);
    let mut x = start;
    samples.push(x);
    for _ in 0..n {
        for _ in 0..sub {
            x = rk4(field, x, h / sub as f64);
        }
        samples.push(x);
    }
    samples
}

fn report<F: PlanarField + ?Sized>(
    field: &F,
    samples: Vec<Vec2>,
    period: f64,
    opts: &OrbitOptions,
) -> PeriodicOrbitReport {
    let n = samples.len() - 1;
    let beta = samples[..n].iter().map(|&p| field.divergence(p)).sum::<f64>() / n as f64;
    let q = n / 4;
    let residual = |sign: f64| {
        (0..n)
            .map(|k| torus_dist(samples[(k + n - q) % n], apply_j(samples[k]) * sign))
            .fold(0.0, f64::max)
    };
    let st_symmetric = if residual(1.0) < opts.symmetry_tol {
        StSymmetry::Plus
    } else if residual(-1.0) < opts.symmetry_tol {
        StSymmetry::Minus
    } else {
        StSymmetry::None
    };
    PeriodicOrbitReport {
        samples,
        period,
        beta,
        stable: beta < 0.0,
        st_symmetric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::field::{AveragedField, FnField};
    use crate::lattice::apply_j_pow;
    use crate::trig::{PsiFactor, VecTorusPoly};
    use std::f64::consts::TAU;

    /// `r' = r - r^3`, `theta' = sign`.
    fn hopf(sign: f64) -> impl PlanarField {
        FnField(move |p: Vec2| {
            let r2 = p.dot(p);
            Vec2::new(p.x * (1.0 - r2) - sign * p.y, p.y * (1.0 - r2) + sign * p.x)
        })
    }

    #[test]
    fn normal_form_cycle() {
        let r = find_periodic_orbit(&hopf(1.0), Vec2::new(0.3, 0.1), &OrbitOptions::default()).unwrap();
        assert!((r.period - TAU).abs() < 1e-6, "{}", r.period);
        // div = 2 - 4 r^2 on r = 1
        assert!((r.beta + 2.0).abs() < 1e-6);
        assert!(r.stable);
        assert_eq!(r.st_symmetric, StSymmetry::Plus);
        assert!(r.samples.iter().all(|p| (p.norm() - 1.0).abs() < 1e-7));
        let r = find_periodic_orbit(&hopf(-1.0), Vec2::new(0.3, 0.1), &OrbitOptions::default()).unwrap();
        assert_eq!(r.st_symmetric, StSymmetry::Minus);
    }

    #[test]
    fn repelling_cycle_found_backward() {
        // r' = r^3 - r makes r = 1 repelling.
        let f = FnField(|p: Vec2| {
            let r2 = p.dot(p);
            Vec2::new(p.x * (r2 - 1.0) - p.y, p.y * (r2 - 1.0) + p.x)
        });
        assert!(find_periodic_orbit(&f, Vec2::new(0.9, 0.0), &OrbitOptions::default()).is_none());
        let opts = OrbitOptions { backward: true, ..Default::default() };
        let r = find_periodic_orbit(&f, Vec2::new(0.9, 0.0), &opts).unwrap();
        assert!((r.beta - 2.0).abs() < 1e-6 && !r.stable);
        assert_eq!(r.st_symmetric, StSymmetry::Plus);
    }

    #[test]
    fn gradient_like_field_has_no_cycle() {
        let f = AveragedField::from_poly(VecTorusPoly::new([
            (PsiFactor::sin(1, 0), Vec2::new(-1.0, 0.0)),
            (PsiFactor::sin(0, 1), Vec2::new(0.0, -1.0)),
        ]));
        for seed in [Vec2::new(1.0, 2.0), Vec2::new(3.0, 0.2), Vec2::new(5.0, 4.0)] {
            assert!(find_periodic_orbit(&f, seed, &OrbitOptions::default()).is_none());
        }
    }

    #[test]
    fn conjugate_seed_gives_rotated_orbit() {
        let f = hopf(1.0);
        let seed = Vec2::new(0.4, -0.2);
        let a = find_periodic_orbit(&f, seed, &OrbitOptions::default()).unwrap();
        let b = find_periodic_orbit(&f, apply_j_pow(seed, 1), &OrbitOptions::default()).unwrap();
        assert!((a.period - b.period).abs() < 1e-7);
        for p in &b.samples {
            let q = apply_j_pow(*p, 3);
            let d = a.samples.iter().map(|s| s.distance(q)).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-2);
        }
    }
}
