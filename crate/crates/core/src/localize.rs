//! Weighted-RMSE trilateration.
//!
//! The objective at a candidate `p` is
//! `sqrt( Σ_j (ω_j · (dist(p, ref_j) − f⁻¹(RTT_j)))² / R )`
//! with `ω_j` evaluated at the measured distance `f⁻¹(RTT_j)`. It is
//! minimized by gradient descent in local tangent-plane coordinates (km)
//! around the current iterate, with backtracking and a fixed set of
//! restarts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, UnitVector, EARTH_RADIUS_KM};
use crate::propagation::PropagationModel;

/// A reference location with the symmetric RTT measured against it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub location: GeoPoint,
    pub rtt_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeConfig {
    pub max_iterations: usize,
    /// Additional starts at `(±offset, ±offset)` degrees around the initial guess.
    pub restarts: usize,
    pub restart_offset_deg: f64,
    pub min_step_km: f64,
    pub min_improvement_km: f64,
    pub initial_step_km: f64,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            max_iterations: 500,
            restarts: 4,
            restart_offset_deg: 2.0,
            min_step_km: 0.1,
            min_improvement_km: 1e-6,
            initial_step_km: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    pub estimate: GeoPoint,
    /// Objective value at the estimate, km.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Fewer than three references were supplied.
    pub underdetermined: bool,
}

/// The weighted-RMSE objective over a fixed reference set.
#[derive(Debug, Clone)]
pub struct Objective {
    refs: Vec<UnitVector>,
    dist: Vec<f64>,
    weight: Vec<f64>,
}

impl Objective {
    pub fn new(refs: &[Reference], model: &PropagationModel) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::arg("no references"));
        }
        let mut dist = Vec::with_capacity(refs.len());
        let mut weight = Vec::with_capacity(refs.len());
        for r in refs {
            let d = model.time_to_distance(r.rtt_ms)?;
            dist.push(d);
            weight.push(model.noise_weight(d));
        }
        Ok(Objective { refs: refs.iter().map(|r| r.location.to_unit()).collect(), dist, weight })
    }

    /// Same objective with every ω set to 1.
    pub fn unweighted(mut self) -> Self {
        self.weight.iter_mut().for_each(|w| *w = 1.0);
        self
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn measured_distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn value(&self, p: &UnitVector) -> f64 {
        let mut s = 0.0;
        for k in 0..self.refs.len() {
            let e = (p.distance_km(&self.refs[k]) - self.dist[k]) * self.weight[k];
            s += e * e;
        }
        (s / self.refs.len() as f64).sqrt()
    }

    /// Analytic gradient with respect to (east, north) displacement in km.
    pub fn gradient(&self, p: &UnitVector) -> [f64; 2] {
        let basis = p.tangent_basis();
        self.gradient_in(p, &basis)
    }

    fn gradient_in(&self, p: &UnitVector, (east, north): &([f64; 3], [f64; 3])) -> [f64; 2] {
        let n = self.refs.len() as f64;
        let mut s = 0.0;
        let mut g = [0.0; 2];
        for k in 0..self.refs.len() {
            let r = &self.refs[k];
            let d = p.distance_km(r);
            let e = d - self.dist[k];
            let w2 = self.weight[k] * self.weight[k];
            s += w2 * e * e;
            let sin_theta = (d / EARTH_RADIUS_KM).sin();
            if sin_theta.abs() < 1e-12 {
                continue;
            }
            let de = -(east[0] * r.0[0] + east[1] * r.0[1] + east[2] * r.0[2]) / sin_theta;
            let dn = -(north[0] * r.0[0] + north[1] * r.0[1] + north[2] * r.0[2]) / sin_theta;
            g[0] += w2 * e * de;
            g[1] += w2 * e * dn;
        }
        let f = (s / n).sqrt();
        if f == 0.0 {
            return [0.0, 0.0];
        }
        [g[0] / (f * n), g[1] / (f * n)]
    }
}

/// Centroid of reference locations weighted by `1 / f⁻¹(RTT)`.
pub fn initial_guess(refs: &[Reference], model: &PropagationModel) -> Result<GeoPoint> {
    if refs.is_empty() {
        return Err(Error::arg("no references"));
    }
    let mut v = [0.0; 3];
    for r in refs {
        let w = 1.0 / model.time_to_distance(r.rtt_ms)?.max(1e-3);
        let u = r.location.to_unit();
        for k in 0..3 {
            v[k] += w * u.0[k];
        }
    }
    Ok(UnitVector::normalized(v).unwrap_or_else(|| refs[0].location.to_unit()).to_geo())
}

struct Run {
    point: UnitVector,
    value: f64,
    iterations: usize,
    converged: bool,
}

fn descend(obj: &Objective, start: UnitVector, cfg: &LocalizeConfig) -> Run {
    let mut p = start;
    let mut f = obj.value(&p);
    let mut step = cfg.initial_step_km;
    for it in 1..=cfg.max_iterations {
        let basis = p.tangent_basis();
        let g = obj.gradient_in(&p, &basis);
        let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
        if gn < 1e-12 {
            return Run { point: p, value: f, iterations: it, converged: true };
        }
        let dir = [-g[0] / gn, -g[1] / gn];
        let mut s = step;
        let accepted = loop {
            let q = p.offset(&basis, dir[0] * s, dir[1] * s);
            let fq = obj.value(&q);
            // Armijo condition on the directional derivative -gn
            if fq <= f - 1e-4 * s * gn {
                break Some((q, fq));
            }
            s *= 0.5;
            if s < cfg.min_step_km {
                break None;
            }
        };
        match accepted {
            None => return Run { point: p, value: f, iterations: it, converged: true },
            Some((q, fq)) => {
                let improvement = f - fq;
                p = q;
                f = fq;
                if s < cfg.min_step_km || improvement < cfg.min_improvement_km {
                    return Run { point: p, value: f, iterations: it, converged: true };
                }
                step = (2.0 * s).min(4.0 * cfg.initial_step_km);
            }
        }
    }
    Run { point: p, value: f, iterations: cfg.max_iterations, converged: false }
}

fn restart_points(g: GeoPoint, cfg: &LocalizeConfig) -> Vec<GeoPoint> {
    let o = cfg.restart_offset_deg;
    let offsets = [(o, o), (o, -o), (-o, o), (-o, -o)];
    let mut pts = vec![g];
    for k in 0..cfg.restarts {
        let (dlat, dlon) = offsets[k % 4];
        let scale = (k / 4 + 1) as f64;
        let lat = (g.lat + dlat * scale).clamp(-90.0, 90.0);
        pts.push(GeoPoint::new(lat, g.lon + dlon * scale).unwrap_or(g));
    }
    pts
}

/// Minimizes the objective from the initial guess and the restart points;
/// the lowest residual wins, earlier starts winning exact ties.
pub fn estimate_location(refs: &[Reference], model: &PropagationModel, cfg: &LocalizeConfig) -> Result<LocalizationEstimate> {
    if refs.is_empty() {
        return Err(Error::arg("no references"));
    }
    // canonical order makes the result independent of input order
    let mut sorted = refs.to_vec();
    sorted.sort_by(|a, b| {
        a.location
            .lat
            .total_cmp(&b.location.lat)
            .then(a.location.lon.total_cmp(&b.location.lon))
            .then(a.rtt_ms.total_cmp(&b.rtt_ms))
    });
    let obj = Objective::new(&sorted, model)?;
    let guess = initial_guess(&sorted, model)?;
    let mut best: Option<Run> = None;
    for start in restart_points(guess, cfg) {
        let run = descend(&obj, start.to_unit(), cfg);
        if best.as_ref().map_or(true, |b| run.value < b.value) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    let underdetermined = refs.len() < 3;
    Ok(LocalizationEstimate {
        estimate: best.point.to_geo(),
        residual: best.value,
        iterations: best.iterations,
        converged: best.converged && !underdetermined,
        underdetermined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::great_circle_distance;
    use proptest::prelude::*;
    use rand::Rng;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn exact_refs(truth: GeoPoint, locs: &[GeoPoint], model: &PropagationModel) -> Vec<Reference> {
        locs.iter()
            .map(|&l| Reference { location: l, rtt_ms: model.distance_to_time(great_circle_distance(truth, l)) })
            .collect()
    }

    #[test]
    fn single_reference_guess() {
        let m = PropagationModel::constant_speed(100.0).unwrap();
        let r = [Reference { location: pt(45.0, 9.0), rtt_ms: 3.0 }];
        let g = initial_guess(&r, &m).unwrap();
        assert!((g.lat - 45.0).abs() < 1e-9 && (g.lon - 9.0).abs() < 1e-9);
        assert!(initial_guess(&[], &m).is_err());
        assert!(estimate_location(&[], &m, &LocalizeConfig::default()).is_err());
    }

    #[test]
    fn square_guess_is_center() {
        let m = PropagationModel::constant_speed(100.0).unwrap();
        let refs: Vec<_> = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|&(a, b)| Reference { location: pt(a, b), rtt_ms: 2.0 })
            .collect();
        let g = initial_guess(&refs, &m).unwrap();
        assert!(g.lat.abs() < 1e-9 && g.lon.abs() < 1e-9);
    }

    #[test]
    fn guess_is_weighted_toward_fast_reference() {
        let m = PropagationModel::constant_speed(100.0).unwrap();
        let a = pt(48.0, 2.0);
        let b = pt(48.0, 12.0);
        let refs = [Reference { location: a, rtt_ms: 1.0 }, Reference { location: b, rtt_ms: 3.0 }];
        let g = initial_guess(&refs, &m).unwrap();
        // normalized 3:1 vector sum: angle from a is atan2(sin Θ, 3 + cos Θ)
        let theta = great_circle_distance(a, b) / EARTH_RADIUS_KM;
        let expected = (theta.sin()).atan2(3.0 + theta.cos()) * EARTH_RADIUS_KM;
        assert!((great_circle_distance(a, g) - expected).abs() < 1e-6);
        assert!((great_circle_distance(a, g) + great_circle_distance(g, b) - great_circle_distance(a, b)).abs() < 1e-6);
        let ratio = great_circle_distance(g, b) / great_circle_distance(a, g);
        assert!((ratio - 3.0).abs() < 0.01, "{ratio}");
    }

    #[test]
    fn noise_free_recovery() {
        let m = PropagationModel::constant_speed(120.0).unwrap();
        let truth = pt(47.3, 8.5);
        let locs = [pt(48.8, 2.3), pt(52.5, 13.4), pt(41.9, 12.5), pt(40.4, -3.7), pt(50.1, 19.9)];
        let est = estimate_location(&exact_refs(truth, &locs, &m), &m, &LocalizeConfig::default()).unwrap();
        assert!(great_circle_distance(est.estimate, truth) < 1.0);
        assert!(est.converged && !est.underdetermined);
    }

    #[test]
    fn symmetric_minima_break_ties_deterministically() {
        // two references give mirror-image solutions north and south of the baseline
        let m = PropagationModel::constant_speed(100.0).unwrap();
        let refs = [
            Reference { location: pt(0.0, -1.0), rtt_ms: 2.0 },
            Reference { location: pt(0.0, 1.0), rtt_ms: 2.0 },
        ];
        let a = estimate_location(&refs, &m, &LocalizeConfig::default()).unwrap();
        let b = estimate_location(&refs, &m, &LocalizeConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.underdetermined && !a.converged);
    }

    #[test]
    fn unweighted_objective_is_plain_rmse() {
        let m = PropagationModel::default_model();
        let refs = [
            Reference { location: pt(48.8, 2.3), rtt_ms: 9.0 },
            Reference { location: pt(52.5, 13.4), rtt_ms: 14.0 },
            Reference { location: pt(41.9, 12.5), rtt_ms: 12.0 },
        ];
        let obj = Objective::new(&refs, m).unwrap().unweighted();
        let p = pt(46.0, 8.0);
        let direct = (refs
            .iter()
            .map(|r| (great_circle_distance(p, r.location) - m.time_to_distance(r.rtt_ms).unwrap()).powi(2))
            .sum::<f64>()
            / 3.0)
            .sqrt();
        assert!((obj.value(&p.to_unit()) - direct).abs() < 1e-9);
    }

    fn random_case(seed: u64) -> (GeoPoint, Vec<Reference>) {
        let mut rng = crate::seed::rng(seed);
        let truth = pt(rng.gen_range(36.0..58.0), rng.gen_range(-8.0..30.0));
        let refs = (0..rng.gen_range(5..12))
            .map(|_| Reference {
                location: pt(rng.gen_range(36.0..58.0), rng.gen_range(-8.0..30.0)),
                rtt_ms: rng.gen_range(1.0..40.0),
            })
            .collect();
        (truth, refs)
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(seed in any::<u64>()) {
            let m = PropagationModel::default_model();
            let (p, refs) = random_case(seed);
            let obj = Objective::new(&refs, m).unwrap();
            let u = p.to_unit();
            let basis = u.tangent_basis();
            let g = obj.gradient(&u);
            let h = 1e-3;
            let fd = [
                (obj.value(&u.offset(&basis, h, 0.0)) - obj.value(&u.offset(&basis, -h, 0.0))) / (2.0 * h),
                (obj.value(&u.offset(&basis, 0.0, h)) - obj.value(&u.offset(&basis, 0.0, -h))) / (2.0 * h),
            ];
            let norm = (fd[0] * fd[0] + fd[1] * fd[1]).sqrt().max(1e-12);
            let err = ((g[0] - fd[0]).powi(2) + (g[1] - fd[1]).powi(2)).sqrt() / norm;
            prop_assert!(err < 1e-4, "relative error {err}");
        }

        #[test]
        fn residual_never_exceeds_initial(seed in any::<u64>()) {
            let m = PropagationModel::default_model();
            let (_, refs) = random_case(seed);
            let est = estimate_location(&refs, m, &LocalizeConfig::default()).unwrap();
            let obj = Objective::new(&refs, m).unwrap();
            let g = initial_guess(&refs, m).unwrap();
            prop_assert!(est.residual >= 0.0);
            prop_assert!(est.residual <= obj.value(&g.to_unit()) + 1e-9);
        }

        #[test]
        fn permutation_invariance(seed in any::<u64>(), rot in 1usize..5) {
            let m = PropagationModel::default_model();
            let (_, refs) = random_case(seed);
            let mut shuffled = refs.clone();
            shuffled.reverse();
            shuffled.rotate_left(rot % refs.len());
            let a = estimate_location(&refs, m, &LocalizeConfig::default()).unwrap();
            let b = estimate_location(&shuffled, m, &LocalizeConfig::default()).unwrap();
            prop_assert!((a.estimate.lat - b.estimate.lat).abs() < 1e-6);
            prop_assert!((a.estimate.lon - b.estimate.lon).abs() < 1e-6);
            prop_assert_eq!(a.residual, b.residual);
        }
    }
}
