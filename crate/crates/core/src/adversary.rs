//! Attack engine: adversarial role assignment, per-pair manipulation
//! classes, measurement rewriting for false location claims, and framing of
//! honest nodes.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, ZoneMap};
use crate::netgen::{sample_in_zones, Annotation, MeasurementSet, Network, NodeDescriptor};
use crate::propagation::PropagationModel;
use crate::schedule::ReferenceSchedule;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationClass {
    /// Both endpoints adversarial: both directions fabricated.
    PerfectManipulation,
    /// Honest reference farther from the claim than from the truth: the
    /// adversary fabricates its own report and delays its replies.
    SlowDown,
    /// Honest reference closer to the claim: nothing can be done.
    NoManipulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterMode {
    /// Factor drawn from `1 + U(-m, m)`.
    Symmetric,
    /// Factor drawn from `1 + U(0, m)`: noise only adds delay.
    DelayOnly,
}

/// Multiplicative noise the adversary adds to fabricated RTTs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub mode: JitterMode,
    pub magnitude: f64,
}

impl Jitter {
    pub const NONE: Jitter = Jitter { mode: JitterMode::Symmetric, magnitude: 0.0 };

    pub fn factor<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.magnitude <= 0.0 {
            return 1.0;
        }
        match self.mode {
            JitterMode::Symmetric => 1.0 + rng.gen_range(-self.magnitude..=self.magnitude),
            JitterMode::DelayOnly => 1.0 + rng.gen_range(0.0..=self.magnitude),
        }
    }
}

/// Who is adversarial and who claims a false location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Selection {
    /// Sizes as fractions of N; `claiming <= adversarial`.
    Fractions { adversarial: f64, claiming: f64 },
    Explicit { adversarial: Vec<usize>, claiming: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub selection: Selection,
    /// Honest nodes whose scores adversarial references try to depress.
    #[serde(default)]
    pub framing_targets: Vec<usize>,
    pub perfect_jitter: Jitter,
    pub slowdown_jitter: Jitter,
    /// Framed directions report this fraction of the lower speed bound.
    pub framing_speed_fraction: f64,
    pub seed: u64,
}

impl AttackConfig {
    pub fn fractions(adversarial: f64, claiming: f64, seed: u64) -> Self {
        AttackConfig { selection: Selection::Fractions { adversarial, claiming }, seed, ..Default::default() }
    }
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            selection: Selection::Fractions { adversarial: 0.05, claiming: 0.05 },
            framing_targets: Vec::new(),
            perfect_jitter: Jitter { mode: JitterMode::DelayOnly, magnitude: 0.045 },
            slowdown_jitter: Jitter { mode: JitterMode::DelayOnly, magnitude: 0.5 },
            framing_speed_fraction: 0.5,
            seed: 0,
        }
    }
}

fn resolve_sets(cfg: &AttackConfig, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let (mut a, mut c) = match &cfg.selection {
        Selection::Fractions { adversarial, claiming } => {
            if !(0.0..=1.0).contains(adversarial) || !(0.0..=*adversarial).contains(claiming) {
                return Err(Error::Config(format!(
                    "fractions must satisfy 0 <= claiming ({claiming}) <= adversarial ({adversarial}) <= 1"
                )));
            }
            let na = (adversarial * n as f64).round() as usize;
            let nc = ((claiming * n as f64).round() as usize).min(na);
            let mut rng = seed::rng(seed::derive(cfg.seed, "adversaries"));
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            let a: Vec<usize> = all[..na].to_vec();
            let c = a[..nc].to_vec();
            (a, c)
        }
        Selection::Explicit { adversarial, claiming } => (adversarial.clone(), claiming.clone()),
    };
    a.sort_unstable();
    a.dedup();
    c.sort_unstable();
    c.dedup();
    if a.iter().any(|&i| i >= n) {
        return Err(Error::Config("adversarial index out of range".into()));
    }
    if c.iter().any(|i| a.binary_search(i).is_err()) {
        return Err(Error::Config("every claiming node must be adversarial".into()));
    }
    Ok((a, c))
}

/// Marks adversarial nodes and gives every claiming node a false location
/// drawn uniformly from the zones other than its true zone.
pub fn assign_roles(net: &Network, zones: &ZoneMap, cfg: &AttackConfig) -> Result<Network> {
    let (a, c) = resolve_sets(cfg, net.len())?;
    let mut out = net.clone();
    let mut rng = seed::rng(seed::derive(cfg.seed, "claims"));
    for &i in &a {
        out.nodes[i].is_adversarial = true;
    }
    for &i in &c {
        let node = &mut out.nodes[i];
        let own = zones
            .zone_of(node.true_location)
            .ok_or_else(|| Error::Config(format!("node {i} lies outside every zone")))?;
        node.claimed_location = sample_in_zones(zones, &mut rng, Some(own));
        node.claims_false_location = true;
    }
    Ok(out)
}

pub fn adversarial_set(net: &Network) -> Vec<usize> {
    net.nodes.iter().filter(|n| n.is_adversarial).map(|n| n.index).collect()
}

pub fn claiming_set(net: &Network) -> Vec<usize> {
    net.nodes.iter().filter(|n| n.claims_false_location).map(|n| n.index).collect()
}

pub fn classify(target: &NodeDescriptor, reference: &NodeDescriptor) -> Result<ManipulationClass> {
    if !target.claims_false_location {
        return Err(Error::arg(format!("node {} does not claim a false location", target.index)));
    }
    if reference.is_adversarial {
        return Ok(ManipulationClass::PerfectManipulation);
    }
    let claimed = great_circle_distance(target.claimed_location, reference.true_location);
    let truth = great_circle_distance(target.true_location, reference.true_location);
    Ok(if claimed > truth { ManipulationClass::SlowDown } else { ManipulationClass::NoManipulation })
}

/// `d / f(d)` scaled by a jitter factor.
pub fn spoofed_rtt<R: rand::Rng + ?Sized>(claimed_distance: f64, model: &PropagationModel, jitter: &Jitter, rng: &mut R) -> f64 {
    model.distance_to_time(claimed_distance.max(1e-6)) * jitter.factor(rng)
}

fn pair_rng(seed: u64, i: usize, j: usize) -> seed::Rng {
    seed::rng(seed::mix(seed, i as u64, j as u64))
}

/// Rewrites measurements of every claiming node according to the class of
/// each of its references. The network must already carry roles and claims.
pub fn apply_attack(
    net: &Network,
    schedule: &ReferenceSchedule,
    measurements: &MeasurementSet,
    model: &PropagationModel,
    cfg: &AttackConfig,
) -> Result<MeasurementSet> {
    let mut out = measurements.clone();
    let seed = seed::derive(cfg.seed, "spoof");
    for c in claiming_set(net) {
        let target = &net.nodes[c];
        for &r in schedule.refs(c) {
            let reference = &net.nodes[r];
            let claimed_d = great_circle_distance(target.claimed_location, reference.claimed_location);
            match classify(target, reference)? {
                ManipulationClass::PerfectManipulation => {
                    // streams keyed by direction so a pair of two claimants is
                    // rewritten identically from either side
                    let fwd = spoofed_rtt(claimed_d, model, &cfg.perfect_jitter, &mut pair_rng(seed, c, r));
                    let rev = spoofed_rtt(claimed_d, model, &cfg.perfect_jitter, &mut pair_rng(seed, r, c));
                    out.set(c, r, fwd, Annotation::Spoofed)?;
                    out.set(r, c, rev, Annotation::Spoofed)?;
                }
                ManipulationClass::SlowDown => {
                    let fwd = spoofed_rtt(claimed_d, model, &cfg.slowdown_jitter, &mut pair_rng(seed, c, r));
                    let target_rev = spoofed_rtt(claimed_d, model, &cfg.slowdown_jitter, &mut pair_rng(seed, r, c));
                    let orig = measurements.rtt(r, c).ok_or_else(|| Error::arg("missing measurement"))?;
                    out.set(c, r, fwd, Annotation::Spoofed)?;
                    out.set(r, c, orig.max(target_rev), Annotation::Delayed)?;
                }
                ManipulationClass::NoManipulation => {}
            }
        }
    }
    Ok(out)
}

/// Adversarial references of each framing target report an out-of-bounds
/// slow RTT in their own direction.
pub fn framing_attack(
    net: &Network,
    schedule: &ReferenceSchedule,
    measurements: &MeasurementSet,
    model: &PropagationModel,
    cfg: &AttackConfig,
    tau: f64,
) -> Result<MeasurementSet> {
    let mut out = measurements.clone();
    for &h in &cfg.framing_targets {
        let target = net.nodes.get(h).ok_or_else(|| Error::Config(format!("framing target {h} out of range")))?;
        if target.is_adversarial {
            return Err(Error::Config(format!("framing target {h} is adversarial")));
        }
        for &r in schedule.refs(h) {
            let attacker = &net.nodes[r];
            if !attacker.is_adversarial {
                continue;
            }
            let d = great_circle_distance(attacker.claimed_location, target.claimed_location);
            let rtt = if d > 0.0 {
                d / (cfg.framing_speed_fraction * model.lower_bound_speed(d, tau))
            } else {
                2.0 * model.distance_to_time(1.0)
            };
            out.set(r, h, rtt, Annotation::Framed)?;
        }
    }
    Ok(out)
}

/// Uniform subset of `k` candidates, sorted.
pub fn sample_targets<R: rand::Rng + ?Sized>(candidates: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut v = candidates.to_vec();
    v.shuffle(rng);
    v.truncate(k);
    v.sort_unstable();
    v
}
