use super::field::PlanarField;
use crate::lattice::{apply_j, apply_j_pow, wrap_angle, wrap_signed, Vec2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const SEED_GRID: usize = 16;
pub const NEWTON_TOL: f64 = 1e-12;
pub const DEDUP_TOL: f64 = 1e-6;
const ORIGIN_TOL: f64 = 1e-8;
const MAX_NEWTON: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Position on the torus, components in `[0, 2pi)`.
    pub psi_star: Vec2,
    pub eigenvalues: [Eigenvalue; 2],
    pub stable: bool,
    pub hyperbolic: bool,
    pub at_origin: bool,
    /// Fixed by `J` on the torus, i.e. `(0, 0)` or `(pi, pi)`.
    pub st_symmetric: bool,
    /// `J^k psi_star` for `k = 0..4`, wrapped.
    pub conjugates: [Vec2; 4],
    /// Index of the conjugate class, shared by all `J`-images.
    pub class: usize,
    pub residual: f64,
}

/// Componentwise difference wrapped to `[-pi, pi)`.
pub fn torus_delta(a: Vec2, b: Vec2) -> Vec2 {
    Vec2::new(wrap_signed(a.x - b.x), wrap_signed(a.y - b.y))
}

pub fn torus_dist(a: Vec2, b: Vec2) -> f64 {
    torus_delta(a, b).norm()
}

pub fn wrap_point(p: Vec2) -> Vec2 {
    // wrap_angle can round up to exactly 2pi for tiny negative inputs.
    let w = |x: f64| {
        let y = wrap_angle(x);
        if y >= TAU { 0.0 } else { y }
    };
    Vec2::new(w(p.x), w(p.y))
}

pub fn eigenvalues(j: [[f64; 2]; 2]) -> [Eigenvalue; 2] {
    let tr = j[0][0] + j[1][1];
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let half = 0.5 * tr;
    let disc = half * half - det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        // Avoid cancellation in the smaller root.
        let big = if half >= 0.0 { half + s } else { half - s };
        let small = if big != 0.0 { det / big } else { 0.0 };
        let (a, b) = if big < small { (big, small) } else { (small, big) };
        [Eigenvalue { re: a, im: 0.0 }, Eigenvalue { re: b, im: 0.0 }]
    } else {
        let s = (-disc).sqrt();
        [Eigenvalue { re: half, im: -s }, Eigenvalue { re: half, im: s }]
    }
}

fn newton<F: PlanarField + ?Sized>(field: &F, seed: Vec2, tol: f64) -> Option<Vec2> {
    let mut x = seed;
    let mut converged_at = None;
    for it in 0..MAX_NEWTON {
        let f = field.eval(x);
        if !f.is_finite() {
            return None;
        }
        if f.norm() <= tol && converged_at.is_none() {
            converged_at = Some(it);
        }
        // Two polishing steps after the tolerance is met.
        if converged_at.is_some_and(|c| it >= c + 2) {
            return Some(x);
        }
        let j = field.jacobian(x);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 || !det.is_finite() {
            return converged_at.map(|_| x);
        }
        let mut step = Vec2::new(
            -(j[1][1] * f.x - j[0][1] * f.y) / det,
            -(-j[1][0] * f.x + j[0][0] * f.y) / det,
        );
        let len = step.norm();
        if len > 1.0 {
            step = step * (1.0 / len);
        }
        x = x + step;
    }
    converged_at.map(|_| x)
}

/// Zeros of a torus field found by Newton iteration from a uniform seed grid,
/// closed under `J`, deduplicated and sorted by torus coordinates.
pub fn find_equilibria<F: PlanarField + ?Sized>(field: &F) -> Vec<EquilibriumReport> {
    let seeds: Vec<Vec2> = (0..SEED_GRID * SEED_GRID)
        .map(|k| {
            let h = TAU / SEED_GRID as f64;
            Vec2::new((k % SEED_GRID) as f64 * h, (k / SEED_GRID) as f64 * h)
        })
        .collect();
    let scale = seeds
        .iter()
        .map(|&s| field.eval(s).norm())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        log::warn!("averaged field vanishes identically: degenerate, no isolated equilibria");
        return Vec::new();
    }
    let tol = NEWTON_TOL * scale.max(1.0);

    let found: Vec<Vec2> = seeds
        .par_iter()
        .filter_map(|&s| newton(field, s, tol))
        .map(wrap_point)
        .collect();
    if found.is_empty() {
        log::warn!("Newton iteration did not converge from any seed");
        return Vec::new();
    }

    let mut roots: Vec<Vec2> = Vec::new();
    let push = |roots: &mut Vec<Vec2>, p: Vec2| {
        if !roots.iter().any(|&q| torus_dist(p, q) < DEDUP_TOL) {
            roots.push(p);
        }
    };
    for p in found {
        push(&mut roots, p);
    }
    let mut i = 0;
    while i < roots.len() {
        let r = roots[i];
        for k in 1..4 {
            let img = wrap_point(apply_j_pow(r, k));
            if !roots.iter().any(|&q| torus_dist(img, q) < DEDUP_TOL) {
                if let Some(p) = newton(field, img, tol) {
                    push(&mut roots, wrap_point(p));
                }
            }
        }
        i += 1;
    }
    roots.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    let mut classes: Vec<Option<usize>> = vec![None; roots.len()];
    let mut next_class = 0;
    for i in 0..roots.len() {
        if classes[i].is_some() {
            continue;
        }
        classes[i] = Some(next_class);
        for k in 1..4 {
            let img = apply_j_pow(roots[i], k);
            for (j, &q) in roots.iter().enumerate() {
                if classes[j].is_none() && torus_dist(img, q) < DEDUP_TOL {
                    classes[j] = Some(next_class);
                }
            }
        }
        next_class += 1;
    }

    roots
        .iter()
        .zip(classes)
        .map(|(&p, class)| {
            let ev = eigenvalues(field.jacobian(p));
            let lip = scale.max(f64::MIN_POSITIVE);
            EquilibriumReport {
                psi_star: p,
                eigenvalues: ev,
                stable: ev.iter().all(|e| e.re < 0.0),
                hyperbolic: ev.iter().all(|e| e.re.abs() > 1e-9 * lip),
                at_origin: torus_dist(p, Vec2::ZERO) < ORIGIN_TOL,
                st_symmetric: torus_dist(apply_j(p), p) < ORIGIN_TOL,
                conjugates: [0, 1, 2, 3].map(|k| wrap_point(apply_j_pow(p, k))),
                class: class.unwrap_or(0),
                residual: field.eval(p).norm(),
            }
        })
        .collect()
}
