use super::equilibria::{find_equilibria, torus_dist, wrap_point, Eigenvalue, EquilibriumReport};
use super::field::{average_over_phi, AveragedField};
use super::orbits::{find_periodic_orbit, OrbitOptions, PeriodicOrbitReport, StSymmetry};
use super::travelling::{compute_m, find_m_zeros, resonance_check, TravellingWaveReport};
use super::AveragingError;
use crate::center_bundle::SystemParams;
use crate::lattice::Vec2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionMode {
    Rotating,
    Travelling,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPrediction {
    pub psi_star: Vec2,
    /// `psi_star / 2pi`: the rotation center in units of the lattice spacing.
    pub lattice_coords: Vec2,
    pub stable: bool,
    pub st_symmetric: bool,
    pub at_origin: bool,
    pub eigenvalues: [Eigenvalue; 2],
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanderPrediction {
    /// Period of the averaged planar flow.
    pub period: f64,
    /// The slow meander period in original time, `period / (eps omega)`.
    pub meander_period: f64,
    pub beta: f64,
    pub stable: bool,
    pub st_symmetric: StSymmetry,
    /// A point on the orbit, wrapped to the torus.
    pub point: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravellingPrediction {
    #[serde(flatten)]
    pub wave: TravellingWaveReport,
    pub resonant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mode: PredictionMode,
    pub anchors: Vec<AnchorPrediction>,
    pub meander_orbits: Vec<MeanderPrediction>,
    pub travelling: Vec<TravellingPrediction>,
    pub reason: Option<String>,
    /// `eps max|F^phi| / omega`; rotating predictions need it below 1/2.
    pub guard_ratio: Option<f64>,
}

impl Prediction {
    fn empty(mode: PredictionMode, reason: Option<String>) -> Self {
        Self {
            mode,
            anchors: Vec::new(),
            meander_orbits: Vec::new(),
            travelling: Vec::new(),
            reason,
            guard_ratio: None,
        }
    }
}

/// Seeds for the limit-cycle search: cell centers of a 4 x 4 grid.
const ORBIT_SEEDS: usize = 4;

pub fn anchors_from(eq: &[EquilibriumReport]) -> Vec<AnchorPrediction> {
    eq.iter()
        .map(|e| AnchorPrediction {
            psi_star: e.psi_star,
            lattice_coords: e.psi_star * (1.0 / TAU),
            stable: e.stable,
            st_symmetric: e.st_symmetric,
            at_origin: e.at_origin,
            eigenvalues: e.eigenvalues,
            class: e.class,
        })
        .collect()
}

/// Distinct limit cycles of `field`, attracting ones by forward and repelling
/// ones by backward integration.
pub fn find_limit_cycles(field: &AveragedField, equilibria: &[EquilibriumReport]) -> Vec<PeriodicOrbitReport> {
    let base = OrbitOptions::for_scale(field.scale());
    let h = TAU / ORBIT_SEEDS as f64;
    let mut jobs = Vec::new();
    for k in 0..ORBIT_SEEDS * ORBIT_SEEDS {
        let seed = Vec2::new(
            ((k % ORBIT_SEEDS) as f64 + 0.5) * h,
            ((k / ORBIT_SEEDS) as f64 + 0.5) * h,
        );
        if equilibria.iter().any(|e| torus_dist(e.psi_star, seed) < 1e-3) {
            continue;
        }
        for backward in [false, true] {
            jobs.push((seed, OrbitOptions { backward, ..base }));
        }
    }
    let found: Vec<PeriodicOrbitReport> = jobs
        .par_iter()
        .filter_map(|(seed, opts)| find_periodic_orbit(field, *seed, opts))
        .collect();

    let mut out: Vec<PeriodicOrbitReport> = Vec::new();
    for orbit in found {
        if !out.iter().any(|o| same_orbit(o, &orbit)) {
            out.push(orbit);
        }
    }
    out.sort_by(|a, b| {
        let (pa, pb) = (wrap_point(a.samples[0]), wrap_point(b.samples[0]));
        a.period.total_cmp(&b.period).then(pa.x.total_cmp(&pb.x)).then(pa.y.total_cmp(&pb.y))
    });
    out
}

fn same_orbit(a: &PeriodicOrbitReport, b: &PeriodicOrbitReport) -> bool {
    if (a.period - b.period).abs() > 1e-5 * a.period.max(1.0) {
        return false;
    }
    let step = b
        .samples
        .windows(2)
        .map(|w| torus_dist(w[0], w[1]))
        .fold(0.0, f64::max);
    let p = a.samples[0];
    b.samples.iter().any(|&q| torus_dist(p, q) <= 2.0 * step + 1e-9)
}

/// Theorem-level outcome for the given center-bundle system.
pub fn predict(params: &SystemParams) -> Result<Prediction, AveragingError> {
    params.validate()?;
    let report = params.spec.check_z4_symmetry()?;
    if !report.passes {
        return Err(AveragingError::AsymmetricSpec(
            report
                .violating_terms
                .iter()
                .map(|(c, t)| format!("{}: {t}", c.key()))
                .collect(),
        ));
    }
    if params.epsilon == 0.0 || params.spec.is_empty() {
        return Ok(Prediction::empty(
            PredictionMode::None,
            Some("no prediction: Euclidean case, continuum of centers".into()),
        ));
    }
    if params.omega > 0.0 {
        let guard = params.epsilon * params.spec.f_phi_bound() / params.omega;
        if guard >= 0.5 {
            let mut p = Prediction::empty(
                PredictionMode::None,
                Some(format!(
                    "region-R boundary, no prediction: eps max|F^phi| / omega = {guard:.4} >= 1/2"
                )),
            );
            p.guard_ratio = Some(guard);
            return Ok(p);
        }
        let field = average_over_phi(&params.spec, params.v, params.omega)?;
        let mut p = Prediction::empty(PredictionMode::Rotating, None);
        p.guard_ratio = Some(guard);
        if field.is_zero() {
            p.reason = Some("averaged field vanishes identically: degenerate at first order".into());
            return Ok(p);
        }
        let eq = find_equilibria(&field);
        p.anchors = anchors_from(&eq);
        let slow = params.epsilon * params.omega;
        p.meander_orbits = find_limit_cycles(&field, &eq)
            .into_iter()
            .map(|o| MeanderPrediction {
                period: o.period,
                meander_period: o.period / slow,
                beta: o.beta,
                stable: o.stable,
                st_symmetric: o.st_symmetric,
                point: wrap_point(o.samples[0]),
            })
            .collect();
        if p.anchors.is_empty() && p.meander_orbits.is_empty() {
            p.reason = Some("no equilibria or limit cycles of the averaged field found".into());
        }
        return Ok(p);
    }

    let m = compute_m(&params.spec);
    let zeros = match find_m_zeros(&m) {
        Ok(z) => z,
        Err(AveragingError::DegenerateM) => {
            return Ok(Prediction::empty(
                PredictionMode::None,
                Some("M vanishes identically: degenerate, needs higher-order analysis".into()),
            ));
        }
        Err(e) => return Err(e),
    };
    let mut p = Prediction::empty(PredictionMode::Travelling, None);
    for z in zeros.iter().filter(|z| z.transverse) {
        let (margin, alpha_beta, resonant) = match resonance_check(params.v, z.phi_star, &params.spec) {
            Ok(r) => (r.margin, r.alpha_beta, false),
            Err(AveragingError::Resonance { mode, margin }) => {
                log::warn!("travelling wave at phi* = {} is resonant in mode {mode:?}", z.phi_star);
                (margin, params.v.rotate(z.phi_star), true)
            }
            Err(e) => return Err(e),
        };
        p.travelling.push(TravellingPrediction {
            wave: TravellingWaveReport {
                phi_star: z.phi_star,
                mu: z.mu,
                stable: z.mu < 0.0,
                resonance_margin: margin,
                alpha_beta,
            },
            resonant,
        });
    }
    if p.travelling.is_empty() {
        p.reason = Some("M has no transverse zeros".into());
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::center_bundle::simdata_params;
    use crate::perturbation::PerturbationSpec;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn gradient_like() -> PerturbationSpec {
        PerturbationSpec::parse("fpsi1: -cos(p)*sin(a) - sin(p)*sin(b)\nfpsi2: sin(p)*sin(a) - cos(p)*sin(b)\n").unwrap()
    }

    #[test]
    fn simdata_travelling_prediction() {
        let p = predict(&simdata_params(0.1)).unwrap();
        assert_eq!(p.mode, PredictionMode::Travelling);
        assert_eq!(p.travelling.len(), 8);
        let at = |phi: f64| p.travelling.iter().find(|t| (t.wave.phi_star - phi).abs() < 1e-9).unwrap();
        let s = at(FRAC_PI_4);
        assert!(s.wave.stable && (s.wave.mu + 8.0).abs() < 1e-9 && !s.resonant);
        let u = at(0.0);
        assert!(!u.wave.stable && (u.wave.mu - 8.0).abs() < 1e-9);
    }

    #[test]
    fn synthetic_anchor_at_origin() {
        let params = SystemParams::new(Vec2::ZERO, 1.0, 0.05, gradient_like()).unwrap();
        let p = predict(&params).unwrap();
        assert_eq!(p.mode, PredictionMode::Rotating);
        let stable: Vec<_> = p.anchors.iter().filter(|a| a.stable).collect();
        assert_eq!(stable.len(), 1);
        assert!(stable[0].at_origin && stable[0].st_symmetric);
        assert!(p.meander_orbits.is_empty());
        let pp = p.anchors.iter().find(|a| torus_dist(a.psi_star, Vec2::new(PI, PI)) < 1e-9).unwrap();
        assert!((pp.lattice_coords.x - 0.5).abs() < 1e-12);
    }

    #[test]
    fn euclidean_case_has_no_prediction() {
        let p = predict(&simdata_params(0.0)).unwrap();
        assert_eq!(p.mode, PredictionMode::None);
        assert!(p.reason.unwrap().contains("Euclidean"));
    }

    #[test]
    fn intermediate_regime_is_reported() {
        let spec = PerturbationSpec::parse("fphi: sin(4p)").unwrap();
        let params = SystemParams::new(Vec2::new(1.0, 0.0), 0.1, 0.2, spec).unwrap();
        let p = predict(&params).unwrap();
        assert_eq!(p.mode, PredictionMode::None);
        assert!(p.reason.unwrap().contains("region-R"));
    }

    #[test]
    fn asymmetric_spec_is_rejected() {
        let spec = PerturbationSpec::parse("fpsi1: cos(a)").unwrap();
        let params = SystemParams::new(Vec2::ZERO, 1.0, 0.1, spec).unwrap();
        assert!(matches!(predict(&params), Err(AveragingError::AsymmetricSpec(_))));
    }

    #[test]
    fn prediction_json_shape() {
        let p = predict(&simdata_params(0.1)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["mode"], "travelling");
        assert!(v["anchors"].as_array().unwrap().is_empty());
        assert!(v["travelling"][0]["phi_star"].is_number());
        assert!(v["travelling"][0]["resonance_margin"].is_number());
    }
}
