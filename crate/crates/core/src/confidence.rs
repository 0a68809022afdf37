//! Confidence scores: the fraction of a node's reference pairs whose implied
//! speeds (claimed distance over RTT, both directions) fall inside
//! `[l(d)·(1 − τ), (2/3)·c]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::great_circle_distance;
use crate::netgen::{MeasurementSet, Network};
use crate::propagation::{PropagationModel, MAX_SPEED_KM_PER_MS};
use crate::schedule::ReferenceSchedule;

pub const DEFAULT_TAU: f64 = 0.01;
pub const WILD_TAU: f64 = 0.2;
pub const DEFAULT_UPSILON: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub pass: bool,
    pub fwd: Option<Bound>,
    pub rev: Option<Bound>,
}

impl PairCheck {
    pub fn violates(&self, b: Bound) -> bool {
        self.fwd == Some(b) || self.rev == Some(b)
    }
}

fn check_direction(rtt: f64, d: f64, b_l: f64) -> Option<Bound> {
    let s = d / rtt;
    if s > MAX_SPEED_KM_PER_MS {
        Some(Bound::Upper)
    } else if s < b_l {
        Some(Bound::Lower)
    } else {
        None
    }
}

/// Checks both directions of a pair against the speed bounds at the claimed
/// distance. `τ` relaxes only the lower bound.
pub fn pair_within_bounds(rtt_fwd: f64, rtt_rev: f64, claimed_distance: f64, model: &PropagationModel, tau: f64) -> PairCheck {
    let b_l = model.lower_bound_speed(claimed_distance, tau);
    let fwd = check_direction(rtt_fwd, claimed_distance, b_l);
    let rev = check_direction(rtt_rev, claimed_distance, b_l);
    PairCheck { pass: fwd.is_none() && rev.is_none(), fwd, rev }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// Accept iff `score >= υ`.
pub fn decide(score: f64, upsilon: f64) -> Decision {
    if score >= upsilon {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub reference: usize,
    pub check: PairCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceResult {
    pub node: usize,
    pub score: f64,
    pub n_refs: usize,
    pub n_pass: usize,
    pub n_fail_lower: usize,
    pub n_fail_upper: usize,
    pub decision: Decision,
    pub details: Vec<ReferenceCheck>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub tau: f64,
    pub upsilon: f64,
}

impl Default for ConfidenceParams {
    fn default() -> Self {
        ConfidenceParams { tau: DEFAULT_TAU, upsilon: DEFAULT_UPSILON }
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.upsilon) {
            return Err(Error::Config(format!("tau {} and upsilon {} must lie in [0, 1]", self.tau, self.upsilon)));
        }
        Ok(())
    }
}

/// Scores `node` over all its scheduled references using claimed locations.
pub fn confidence_score(
    node: usize,
    schedule: &ReferenceSchedule,
    measurements: &MeasurementSet,
    net: &Network,
    model: &PropagationModel,
    params: &ConfidenceParams,
) -> Result<ConfidenceResult> {
    let refs = schedule.refs(node);
    if refs.is_empty() {
        return Err(Error::arg(format!("node {node} has no references")));
    }
    let me = net.nodes[node].claimed_location;
    let mut details = Vec::with_capacity(refs.len());
    let (mut n_pass, mut n_lower, mut n_upper) = (0, 0, 0);
    for &j in refs {
        let fwd = measurements.rtt(node, j).ok_or_else(|| Error::arg(format!("missing measurement {node} -> {j}")))?;
        let rev = measurements.rtt(j, node).ok_or_else(|| Error::arg(format!("missing measurement {j} -> {node}")))?;
        let d = great_circle_distance(me, net.nodes[j].claimed_location);
        let check = pair_within_bounds(fwd, rev, d, model, params.tau);
        n_pass += check.pass as usize;
        n_lower += check.violates(Bound::Lower) as usize;
        n_upper += check.violates(Bound::Upper) as usize;
        details.push(ReferenceCheck { reference: j, check });
    }
    let score = n_pass as f64 / refs.len() as f64;
    Ok(ConfidenceResult {
        node,
        score,
        n_refs: refs.len(),
        n_pass,
        n_fail_lower: n_lower,
        n_fail_upper: n_upper,
        decision: decide(score, params.upsilon),
        details,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{GeoPoint, ZoneMap};
    use crate::netgen::{generate_network, simulate_measurements, Annotation, PairMeasurement, ProbeConfig, PropagationMatrix};
    use crate::schedule::{build_schedule, complete_references, Beacon};
    use proptest::prelude::*;

    fn model() -> &'static PropagationModel {
        PropagationModel::default_model()
    }

    #[test]
    fn too_fast_violates_upper() {
        let d = 1000.0;
        let fast = d / (MAX_SPEED_KM_PER_MS * 1.01);
        let c = pair_within_bounds(fast, model().distance_to_time(d), d, model(), 0.01);
        assert!(!c.pass);
        assert_eq!(c.fwd, Some(Bound::Upper));
        assert_eq!(c.rev, None);
    }

    #[test]
    fn expected_speed_passes() {
        for d in [20.0, 300.0, 1500.0, 4000.0] {
            let t = model().distance_to_time(d);
            assert!(pair_within_bounds(t, t, d, model(), 0.01).pass);
        }
    }

    #[test]
    fn one_slow_direction_fails() {
        let d = 800.0;
        let t = model().distance_to_time(d);
        let slow = d / (0.5 * model().lower_bound(d));
        let c = pair_within_bounds(t, slow, d, model(), 0.01);
        assert!(!c.pass);
        assert_eq!(c.rev, Some(Bound::Lower));
    }

    #[test]
    fn decisions() {
        assert_eq!(decide(0.19, 0.2), Decision::Reject);
        assert_eq!(decide(0.20, 0.2), Decision::Accept);
        assert_eq!(decide(0.0, 0.0), Decision::Accept);
    }

    fn tiny_world(n_refs: usize, pass: usize) -> (Network, ReferenceSchedule, MeasurementSet) {
        let mut net = generate_network(n_refs + 1, ZoneMap::europe15(), "europe15", 1).unwrap();
        let p = GeoPoint::new(48.0, 10.0).unwrap();
        for (k, n) in net.nodes.iter_mut().enumerate() {
            let q = GeoPoint::new(48.0 + 0.5 * k as f64, 10.0).unwrap();
            n.true_location = if k == 0 { p } else { q };
            n.claimed_location = n.true_location;
        }
        let initial: Vec<Vec<usize>> = (0..=n_refs).map(|i| if i == 0 { (1..=n_refs).collect() } else { vec![] }).collect();
        let s = complete_references(initial);
        let pairs = (1..=n_refs)
            .map(|j| {
                let d = great_circle_distance(net.nodes[0].claimed_location, net.nodes[j].claimed_location);
                let t = model().distance_to_time(d);
                let rtt = if j <= pass { t } else { t * 3.0 };
                PairMeasurement { a: 0, b: j, rtt_ab: rtt, rtt_ba: t, ann_ab: Annotation::Benign, ann_ba: Annotation::Benign }
            })
            .collect();
        let m = MeasurementSet::from_pairs(n_refs + 1, pairs).unwrap();
        (net, s, m)
    }

    #[test]
    fn score_ratios() {
        let (net, s, m) = tiny_world(80, 80);
        let r = confidence_score(0, &s, &m, &net, model(), &ConfidenceParams::default()).unwrap();
        assert_eq!(r.score, 1.0);
        let (net, s, m) = tiny_world(80, 40);
        let r = confidence_score(0, &s, &m, &net, model(), &ConfidenceParams::default()).unwrap();
        assert_eq!(r.score, 0.5);
        assert_eq!(r.n_fail_lower, 40);
        assert_eq!(r.decision, Decision::Accept);
        // the same pair counts against the reference as well
        let r1 = confidence_score(80, &s, &m, &net, model(), &ConfidenceParams::default()).unwrap();
        assert_eq!(r1.score, 0.0);
    }

    #[test]
    fn zero_references_is_an_error() {
        let (net, _, m) = tiny_world(3, 3);
        let s = complete_references(vec![vec![], vec![], vec![], vec![]]);
        assert!(confidence_score(0, &s, &m, &net, model(), &ConfidenceParams::default()).is_err());
    }

    #[test]
    fn scores_are_rationals_over_reference_count() {
        let net = generate_network(200, ZoneMap::europe15(), "europe15", 2).unwrap();
        let s = build_schedule(&Beacon::from_seed(2), &net.keys(), 20).unwrap();
        let mx = PropagationMatrix::lazy(&net, model(), 3);
        let m = simulate_measurements(&s, &mx, &ProbeConfig::default(), 4).unwrap();
        for i in 0..200 {
            let r = confidence_score(i, &s, &m, &net, model(), &ConfidenceParams::default()).unwrap();
            assert!((0.0..=1.0).contains(&r.score));
            assert_eq!(r.n_refs, s.refs(i).len());
            assert_eq!(r.score, r.n_pass as f64 / r.n_refs as f64);
        }
    }

    proptest! {
        #[test]
        fn tau_is_monotone(fwd in 0.1f64..100.0, rev in 0.1f64..100.0, d in 0.0f64..5000.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let a = pair_within_bounds(fwd, rev, d, model(), lo);
            let b = pair_within_bounds(fwd, rev, d, model(), hi);
            prop_assert!(!a.pass || b.pass);
        }
    }
}
