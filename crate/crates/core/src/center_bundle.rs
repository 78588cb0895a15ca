//! Center-bundle dynamics on the three-torus:
//!
//! ```text
//! dPsi/dt = R(phi) (V + eps F^Psi(Psi, phi))
//! dphi/dt = omega + eps F^phi(Psi, phi)
//! ```
//!
//! integrated with fixed-step classical RK4 on the unwrapped lift. The
//! time-rescaled form (`dphi/ds = 1`) and the co-rotating frame used by the
//! averaging analysis live here too.

use crate::lattice::{apply_j, wrap_angle, wrap_signed, Vec2};
use crate::perturbation::PerturbationSpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("co-rotating frame requires omega > 0")]
    NoRotation,
    #[error(
        "time rescaling needs eps * max|F^phi| < omega / 2 (got {bound} >= {half_omega})"
    )]
    RescalingUnsafe { bound: f64, half_omega: f64 },
    #[error("only {got} post-transient samples, need at least {need}")]
    InsufficientData { got: usize, need: usize },
}

/// A point of the three-torus. Components are kept in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusState {
    pub psi: Vec2,
    pub phi: f64,
}

impl TorusState {
    pub fn new(psi: Vec2, phi: f64) -> Self {
        Self {
            psi: Vec2::new(wrap_angle(psi.x), wrap_angle(psi.y)),
            phi: wrap_angle(phi),
        }
    }

    /// `(J Psi, phi - pi/2)`, the conjugate state under the lattice quarter-turn.
    pub fn conjugate(&self) -> Self {
        Self::new(apply_j(self.psi), self.phi - FRAC_PI_2)
    }
}

/// Unwrapped lift `(psi1, psi2, phi)` of a torus point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lift {
    pub psi: Vec2,
    pub phi: f64,
}

impl Lift {
    pub fn wrapped(&self) -> TorusState {
        TorusState::new(self.psi, self.phi)
    }

    fn axpy(&self, k: f64, d: &Lift) -> Lift {
        Lift {
            psi: self.psi + d.psi * k,
            phi: self.phi + k * d.phi,
        }
    }

    fn is_finite(&self) -> bool {
        self.psi.is_finite() && self.phi.is_finite()
    }
}

/// Distance on the flat three-torus.
pub fn torus_distance(a: &Lift, b: &Lift) -> f64 {
    let d1 = wrap_signed(a.psi.x - b.psi.x);
    let d2 = wrap_signed(a.psi.y - b.psi.y);
    let d3 = wrap_signed(a.phi - b.phi);
    (d1 * d1 + d2 * d2 + d3 * d3).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Drift constant `V`.
    pub v: Vec2,
    pub omega: f64,
    pub epsilon: f64,
    pub spec: PerturbationSpec,
}

impl SystemParams {
    pub fn new(v: Vec2, omega: f64, epsilon: f64, spec: PerturbationSpec) -> Result<Self, DynamicsError> {
        let p = Self { v, omega, epsilon, spec };
        p.validate()?;
        Ok(p)
    }

    /// The co-rotating system `dPsi/dphi = eps R(phi) G(Psi, phi)`, written as
    /// the center-bundle system with `V = 0`, `omega = 1` and `F^Psi = G`.
    pub fn corotating(g: &PerturbationSpec, epsilon: f64) -> Result<Self, DynamicsError> {
        let spec = PerturbationSpec::new(g.f_psi_1.clone(), g.f_psi_2.clone(), []);
        Self::new(Vec2::ZERO, 1.0, epsilon, spec)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.v.is_finite() && self.omega.is_finite() && self.epsilon.is_finite()) {
            return Err(DynamicsError::InvalidParams("non-finite parameter".into()));
        }
        if self.omega < 0.0 {
            return Err(DynamicsError::InvalidParams(format!("omega = {} < 0", self.omega)));
        }
        if self.epsilon < 0.0 {
            return Err(DynamicsError::InvalidParams(format!("epsilon = {} < 0", self.epsilon)));
        }
        Ok(())
    }

    /// Rescaled drift `W = V / omega`.
    pub fn rescaled_drift(&self) -> Result<Vec2, DynamicsError> {
        if self.omega > 0.0 {
            Ok(self.v * (1.0 / self.omega))
        } else {
            Err(DynamicsError::NoRotation)
        }
    }

    /// Ensure `dphi/dt` stays above `omega / 2`.
    pub fn check_rescaling(&self) -> Result<(), DynamicsError> {
        if self.omega <= 0.0 {
            return Err(DynamicsError::NoRotation);
        }
        let bound = self.epsilon * self.spec.f_phi_bound();
        if bound >= 0.5 * self.omega {
            return Err(DynamicsError::RescalingUnsafe {
                bound,
                half_omega: 0.5 * self.omega,
            });
        }
        Ok(())
    }
}

/// `(dPsi/dt, dphi/dt)` of the center-bundle system.
pub fn vector_field(params: &SystemParams, psi: Vec2, phi: f64) -> (Vec2, f64) {
    let (fp, ff) = params.spec.evaluate(psi, phi);
    let dpsi = (params.v + fp * params.epsilon).rotate(phi);
    let dphi = params.omega + params.epsilon * ff;
    (dpsi, dphi)
}

/// Field of the time-rescaled system with `dphi/ds = 1`.
pub fn rescaled_vector_field(params: &SystemParams, psi: Vec2, phi: f64) -> (Vec2, f64) {
    let (dpsi, dphi) = vector_field(params, psi, phi);
    (dpsi * (1.0 / dphi), 1.0)
}

/// First-order rescaled perturbation `H(Psi, phi, 0) = (F^Psi - W F^phi) / omega`.
pub fn rescaled_perturbation(params: &SystemParams, psi: Vec2, phi: f64) -> Vec2 {
    let w = params.v * (1.0 / params.omega);
    let (fp, ff) = params.spec.evaluate(psi, phi);
    (fp - w * ff) * (1.0 / params.omega)
}

/// Integrated time series. `states` holds unwrapped lifts, one per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Step size actually used (`t_end` divided by a whole number of steps).
    pub dt: f64,
    pub sample_every: usize,
    pub times: Vec<f64>,
    pub states: Vec<Lift>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &Lift {
        self.states.last().expect("trajectories hold at least the initial state")
    }

    /// Write `t,psi1,psi2,phi,psi1_wrapped,psi2_wrapped,phi_wrapped` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,psi1,psi2,phi,psi1_wrapped,psi2_wrapped,phi_wrapped")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let w = s.wrapped();
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                t, s.psi.x, s.psi.y, s.phi, w.psi.x, w.psi.y, w.phi
            )?;
        }
        Ok(())
    }
}

fn rk4_step<F: Fn(&Lift) -> Lift>(f: &F, y: &Lift, h: f64) -> Lift {
    let k1 = f(y);
    let k2 = f(&y.axpy(0.5 * h, &k1));
    let k3 = f(&y.axpy(0.5 * h, &k2));
    let k4 = f(&y.axpy(h, &k3));
    Lift {
        psi: y.psi + (k1.psi + (k2.psi + k3.psi) * 2.0 + k4.psi) * (h / 6.0),
        phi: y.phi + (k1.phi + 2.0 * (k2.phi + k3.phi) + k4.phi) * (h / 6.0),
    }
}

/// Fixed-step RK4 for a field on the lift. The step is shrunk so that a whole
/// number of steps lands exactly on `t_end`.
pub fn integrate_field<F: Fn(&Lift) -> Lift>(
    field: F,
    initial: Lift,
    t0: f64,
    dt: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<Trajectory, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidParams(format!("dt = {dt} must be positive")));
    }
    if !(t_end >= dt && t_end.is_finite()) {
        return Err(DynamicsError::InvalidParams(format!("t_end = {t_end} must be >= dt")));
    }
    let sample_every = sample_every.max(1);
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let mut times = Vec::with_capacity(steps / sample_every + 2);
    let mut states = Vec::with_capacity(steps / sample_every + 2);
    times.push(t0);
    states.push(initial);
    let mut y = initial;
    for i in 1..=steps {
        y = rk4_step(&field, &y, h);
        if !y.is_finite() {
            return Err(DynamicsError::NonFinite { t: t0 + i as f64 * h });
        }
        if i % sample_every == 0 || i == steps {
            times.push(t0 + i as f64 * h);
            states.push(y);
        }
    }
    Ok(Trajectory {
        dt: h,
        sample_every,
        times,
        states,
    })
}

/// Integrate the center-bundle system from `initial` over `[0, t_end]`.
pub fn integrate(
    params: &SystemParams,
    initial: Lift,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory, DynamicsError> {
    integrate_sampled(params, initial, dt, t_end, 1)
}

pub fn integrate_sampled(
    params: &SystemParams,
    initial: Lift,
    dt: f64,
    t_end: f64,
    sample_every: usize,
) -> Result<Trajectory, DynamicsError> {
    params.validate()?;
    integrate_field(
        |y| {
            let (dpsi, dphi) = vector_field(params, y.psi, y.phi);
            Lift { psi: dpsi, phi: dphi }
        },
        initial,
        0.0,
        dt,
        t_end,
        sample_every,
    )
}

/// Integrate the time-rescaled system (`dphi/ds = 1`) over `s in [0, s_end]`.
pub fn integrate_rescaled(
    params: &SystemParams,
    initial: Lift,
    ds: f64,
    s_end: f64,
    sample_every: usize,
) -> Result<Trajectory, DynamicsError> {
    params.validate()?;
    params.check_rescaling()?;
    integrate_field(
        |y| {
            let (dpsi, dphi) = rescaled_vector_field(params, y.psi, y.phi);
            Lift { psi: dpsi, phi: dphi }
        },
        initial,
        0.0,
        ds,
        s_end,
        sample_every,
    )
}

/// Closed-form unperturbed solution for `omega > 0`:
/// `Psi(t) = Psi0 + (R(phi(t)) - R(phi0)) J V / omega`.
pub fn unperturbed_solution(v: Vec2, omega: f64, initial: Lift, t: f64) -> Lift {
    if omega == 0.0 {
        return Lift {
            psi: initial.psi + v.rotate(initial.phi) * t,
            phi: initial.phi,
        };
    }
    let phi = initial.phi + omega * t;
    let jv = apply_j(v) * (1.0 / omega);
    Lift {
        psi: initial.psi + jv.rotate(phi) - jv.rotate(initial.phi),
        phi,
    }
}

/// Map a trajectory to co-rotating coordinates `Psi~ = Psi - J R(phi) W`.
pub fn to_corotating_frame(params: &SystemParams, traj: &Trajectory) -> Result<Trajectory, DynamicsError> {
    let w = params.rescaled_drift()?;
    let jw = apply_j(w);
    let states = traj
        .states
        .iter()
        .map(|s| Lift {
            psi: s.psi - jw.rotate(s.phi),
            phi: s.phi,
        })
        .collect();
    Ok(Trajectory {
        states,
        ..traj.clone()
    })
}

/// Max torus distance between the trajectory started at the conjugate initial
/// state and the conjugate of `traj`, sampled on the same grid.
pub fn conjugacy_residual(params: &SystemParams, traj: &Trajectory) -> Result<f64, DynamicsError> {
    let conj = |s: &Lift| Lift {
        psi: apply_j(s.psi),
        phi: s.phi - FRAC_PI_2,
    };
    let t_end = traj.times.last().copied().unwrap_or(0.0) - traj.times[0];
    let other = integrate_sampled(params, conj(&traj.states[0]), traj.dt, t_end, traj.sample_every)?;
    if other.len() != traj.len() {
        return Err(DynamicsError::InvalidParams(
            "trajectory grid could not be reproduced".into(),
        ));
    }
    Ok(traj
        .states
        .iter()
        .zip(&other.states)
        .map(|(a, b)| torus_distance(&conj(a), b))
        .fold(0.0, f64::max))
}

/// Summary of the post-transient `phi` distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDiagnostic {
    /// Circular mean of `phi`, in `[0, 2pi)`.
    pub phi_mean: f64,
    /// Largest circular deviation of `phi` from the mean.
    pub phi_maxdev: f64,
    /// Post-transient wrapped samples `(psi1, psi2, phi)`.
    #[serde(skip)]
    pub samples: Vec<TorusState>,
}

pub fn invariant_surface_diagnostic(
    traj: &Trajectory,
    transient_fraction: f64,
) -> Result<SurfaceDiagnostic, DynamicsError> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(DynamicsError::InvalidParams(format!(
            "transient_fraction = {transient_fraction} outside [0, 1)"
        )));
    }
    let skip = (traj.len() as f64 * transient_fraction).floor() as usize;
    let tail = &traj.states[skip.min(traj.len())..];
    if tail.len() < 10 {
        return Err(DynamicsError::InsufficientData { got: tail.len(), need: 10 });
    }
    let (s, c) = tail
        .iter()
        .fold((0.0, 0.0), |(s, c), st| (s + st.phi.sin(), c + st.phi.cos()));
    let phi_mean = wrap_angle(s.atan2(c));
    let phi_maxdev = tail
        .iter()
        .map(|st| wrap_signed(st.phi - phi_mean).abs())
        .fold(0.0, f64::max);
    Ok(SurfaceDiagnostic {
        phi_mean,
        phi_maxdev,
        samples: tail.iter().map(Lift::wrapped).collect(),
    })
}

/// Default initial condition of the travelling-wave experiment.
pub const TORUS_INITIAL: Lift = Lift {
    psi: Vec2 { x: 1.0, y: 2.0 },
    phi: 0.5,
};

/// Parameters of the travelling-wave experiment: `eps = 0.1`, `omega = 0`, `V = (pi, sqrt 2)`.
pub fn simdata_params(epsilon: f64) -> SystemParams {
    SystemParams::new(
        Vec2::new(std::f64::consts::PI, std::f64::consts::SQRT_2),
        0.0,
        epsilon,
        crate::perturbation::simdata_spec(),
    )
    .expect("valid parameters")
}
