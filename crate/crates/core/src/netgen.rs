//! Simulated world: node placement and descriptors, the pairwise ground-truth
//! propagation table, probe measurement and the measurement set.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::Record;
use crate::error::{Error, Result};
use crate::geo::{GeoPoint, UnitVector, ZoneMap};
use crate::propagation::PropagationModel;
use crate::schedule::ReferenceSchedule;
use crate::seed;

/// Pair distances are floored here before sampling so that co-located nodes
/// still get a positive RTT.
pub const MIN_PAIR_KM: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDescriptor {
    pub index: usize,
    #[serde(with = "hex_key")]
    pub public_key: Vec<u8>,
    pub address: String,
    pub true_location: GeoPoint,
    pub claimed_location: GeoPoint,
    pub is_adversarial: bool,
    pub claims_false_location: bool,
}

mod hex_key {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// Zone map id (`europe15`) or path.
    pub zone_map: String,
    pub seed: u64,
    pub nodes: Vec<NodeDescriptor>,
}

impl Network {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn keys(&self) -> Vec<Vec<u8>> {
        self.nodes.iter().map(|n| n.public_key.clone()).collect()
    }

    pub fn true_units(&self) -> Vec<UnitVector> {
        self.nodes.iter().map(|n| n.true_location.to_unit()).collect()
    }

    pub fn claimed_units(&self) -> Vec<UnitVector> {
        self.nodes.iter().map(|n| n.claimed_location.to_unit()).collect()
    }

    /// Checks descriptor invariants.
    pub fn validate(&self) -> Result<()> {
        for (k, n) in self.nodes.iter().enumerate() {
            if n.index != k {
                return Err(Error::Config(format!("node at position {k} has index {}", n.index)));
            }
            if n.claims_false_location && !n.is_adversarial {
                return Err(Error::Config(format!("node {k} claims a false location but is not adversarial")));
            }
            if !n.is_adversarial && n.claimed_location != n.true_location {
                return Err(Error::Config(format!("honest node {k} has a claim different from its location")));
            }
        }
        if self.nodes.windows(2).any(|w| w[0].public_key >= w[1].public_key) {
            return Err(Error::Config("nodes must be ordered by strictly ascending public key".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Uniform point (by area) over the union of zones, by rejection from the
/// map's bounding box. With `exclude`, points in that zone are rejected too.
pub fn sample_in_zones<R: rand::Rng + ?Sized>(zones: &ZoneMap, rng: &mut R, exclude: Option<&str>) -> GeoPoint {
    let b = zones.bbox();
    let (s0, s1) = (b.min_lat.to_radians().sin(), b.max_lat.to_radians().sin());
    loop {
        let lat = rng.gen_range(s0..=s1).asin().to_degrees();
        let lon = rng.gen_range(b.min_lon..=b.max_lon);
        let p = GeoPoint { lat, lon };
        match zones.zone_of(p) {
            Some(z) if Some(z) != exclude => return p,
            _ => {}
        }
    }
}

pub fn address_for(index: usize) -> String {
    format!("10.{}.{}.{}:8000", (index >> 16) & 0xff, (index >> 8) & 0xff, index & 0xff)
}

/// `n` honest nodes placed uniformly over the zones, with deterministic
/// 32-byte keys; indices follow ascending key order.
pub fn generate_network(n: usize, zones: &ZoneMap, zone_map_id: &str, seed: u64) -> Result<Network> {
    if n < 2 {
        return Err(Error::arg(format!("need at least 2 nodes, got {n}")));
    }
    let mut rng = seed::rng(seed::derive(seed, "network"));
    let mut raw: Vec<(Vec<u8>, GeoPoint)> = (0..n)
        .map(|_| {
            let p = sample_in_zones(zones, &mut rng, None);
            let mut key = vec![0u8; 32];
            rng.fill(&mut key[..]);
            (key, p)
        })
        .collect();
    raw.sort_by(|a, b| a.0.cmp(&b.0));
    let nodes = raw
        .into_iter()
        .enumerate()
        .map(|(index, (public_key, p))| NodeDescriptor {
            index,
            public_key,
            address: address_for(index),
            true_location: p,
            claimed_location: p,
            is_adversarial: false,
            claims_false_location: false,
        })
        .collect();
    Ok(Network { zone_map: zone_map_id.to_string(), seed, nodes })
}

/// Where each node's traffic enters the network: its true location moved by
/// a Gaussian offset with `scale_km` per axis. Offsets leaving the node's
/// zone are redrawn; after 32 misses the true location is used.
pub fn attachment_points(net: &Network, zones: &ZoneMap, scale_km: f64, seed: u64) -> Vec<GeoPoint> {
    net.nodes
        .par_iter()
        .map(|d| {
            let p = d.true_location;
            if scale_km <= 0.0 {
                return p;
            }
            let home = zones.zone_of(p);
            let u = p.to_unit();
            let basis = u.tangent_basis();
            let mut rng = seed::rng(seed::mix(seed, d.index as u64, 0x6174));
            for _ in 0..32 {
                let east: f64 = StandardNormal.sample(&mut rng);
                let north: f64 = StandardNormal.sample(&mut rng);
                let q = u.offset(&basis, east * scale_km, north * scale_km).to_geo();
                if zones.zone_of(q) == home {
                    return q;
                }
            }
            p
        })
        .collect()
}

/// Ground-truth base RTT for every ordered pair. Each entry is one draw of
/// [`PropagationModel::sample_rtt`] from a stream derived from
/// `(seed, i, j)`, so directions are independent and the lazy and
/// materialized forms agree bit for bit.
pub struct PropagationMatrix<'a> {
    model: &'a PropagationModel,
    locations: Vec<UnitVector>,
    seed: u64,
    dense: Option<Vec<f64>>,
}

impl<'a> PropagationMatrix<'a> {
    pub fn lazy(net: &Network, model: &'a PropagationModel, seed: u64) -> Self {
        PropagationMatrix { model, locations: net.true_units(), seed, dense: None }
    }

    /// Lazy matrix over explicit network positions, e.g. [`attachment_points`].
    pub fn from_points(points: &[GeoPoint], model: &'a PropagationModel, seed: u64) -> Self {
        PropagationMatrix { model, locations: points.iter().map(|p| p.to_unit()).collect(), seed, dense: None }
    }

    pub fn materialize(net: &Network, model: &'a PropagationModel, seed: u64) -> Self {
        let mut m = Self::lazy(net, model, seed);
        let n = m.locations.len();
        let dense: Vec<f64> = (0..n * n).into_par_iter().map(|k| m.sample(k / n, k % n)).collect();
        m.dense = Some(dense);
        m
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.locations[i].distance_km(&self.locations[j])
    }

    fn sample(&self, i: usize, j: usize) -> f64 {
        let d = self.distance(i, j).max(MIN_PAIR_KM);
        let mut rng = seed::rng(seed::mix(self.seed, i as u64, j as u64));
        self.model.sample_rtt(d, &mut rng)
    }

    /// Base RTT for direction `i → j`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(d) => d[i * self.locations.len() + j],
            None => self.sample(i, j),
        }
    }
}

/// Probe model: each probe observes the base RTT inflated by exponential
/// queueing delay plus a fixed processing cost; the minimum is kept. No probe
/// can be faster than the base RTT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub probes: usize,
    /// Mean queueing delay as a fraction of the base RTT.
    pub queue_mean_fraction: f64,
    /// Added to every probe, e.g. hash-computation latency.
    pub processing_ms: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { probes: 200, queue_mean_fraction: 0.05, processing_ms: 0.0 }
    }
}

const PROBE_SALT: u64 = 0x7072_6f62_6573;

/// Minimum RTT over `probes` draws for direction `i → j`.
pub fn measure_pair(i: usize, j: usize, matrix: &PropagationMatrix<'_>, probe: &ProbeConfig, seed: u64) -> Result<f64> {
    if probe.probes == 0 {
        return Err(Error::arg("probes must be at least 1"));
    }
    let base = matrix.entry(i, j);
    let mut rng = seed::rng(seed::mix(seed ^ PROBE_SALT, i as u64, j as u64));
    let mut best = f64::INFINITY;
    for _ in 0..probe.probes {
        let q: f64 = Exp1.sample(&mut rng);
        best = best.min(base * (1.0 + probe.queue_mean_fraction * q));
    }
    Ok(best + probe.processing_ms)
}

/// `(fwd + rev) / 2`.
pub fn symmetric_rtt(fwd: f64, rev: f64) -> Result<f64> {
    if !(fwd > 0.0) || !(rev > 0.0) {
        return Err(Error::arg(format!("rtts must be positive, got {fwd} and {rev}")));
    }
    Ok(0.5 * (fwd + rev))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    #[default]
    Benign,
    /// Fabricated by an adversary.
    Spoofed,
    /// Honest measurement lengthened by adversarial delay.
    Delayed,
    /// Out-of-bounds value injected to depress an honest node's score.
    Framed,
}

/// Both directions of one scheduled pair `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub a: usize,
    pub b: usize,
    /// RTT(a → b), measured and reported by `a`.
    pub rtt_ab: f64,
    /// RTT(b → a), measured and reported by `b`.
    pub rtt_ba: f64,
    pub ann_ab: Annotation,
    pub ann_ba: Annotation,
}

#[derive(Serialize, Deserialize)]
struct MeasurementFile {
    nodes: usize,
    pairs: Vec<PairMeasurement>,
}

/// Directed minimum RTTs for every scheduled pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasurementFile", into = "MeasurementFile")]
pub struct MeasurementSet {
    n: usize,
    pairs: Vec<PairMeasurement>,
    /// Per node: `(other, pair index)` sorted by `other`.
    lookup: Vec<Vec<(usize, usize)>>,
}

impl TryFrom<MeasurementFile> for MeasurementSet {
    type Error = Error;

    fn try_from(f: MeasurementFile) -> Result<Self> {
        MeasurementSet::from_pairs(f.nodes, f.pairs)
    }
}

impl From<MeasurementSet> for MeasurementFile {
    fn from(m: MeasurementSet) -> Self {
        MeasurementFile { nodes: m.n, pairs: m.pairs }
    }
}

impl MeasurementSet {
    pub fn from_pairs(n: usize, mut pairs: Vec<PairMeasurement>) -> Result<Self> {
        for p in &mut pairs {
            if p.a > p.b {
                std::mem::swap(&mut p.a, &mut p.b);
                std::mem::swap(&mut p.rtt_ab, &mut p.rtt_ba);
                std::mem::swap(&mut p.ann_ab, &mut p.ann_ba);
            }
            if p.a == p.b || p.b >= n {
                return Err(Error::Config(format!("invalid measurement pair ({}, {})", p.a, p.b)));
            }
            if !(p.rtt_ab > 0.0 && p.rtt_ba > 0.0) {
                return Err(Error::Config(format!("non-positive rtt for pair ({}, {})", p.a, p.b)));
            }
        }
        pairs.sort_by_key(|p| (p.a, p.b));
        if pairs.windows(2).any(|w| (w[0].a, w[0].b) == (w[1].a, w[1].b)) {
            return Err(Error::Config("duplicate measurement pair".into()));
        }
        let mut lookup = vec![Vec::new(); n];
        for (k, p) in pairs.iter().enumerate() {
            lookup[p.a].push((p.b, k));
            lookup[p.b].push((p.a, k));
        }
        for l in &mut lookup {
            l.sort_unstable();
        }
        Ok(MeasurementSet { n, pairs, lookup })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[PairMeasurement] {
        &self.pairs
    }

    fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let l = self.lookup.get(i)?;
        l.binary_search_by_key(&j, |e| e.0).ok().map(|k| l[k].1)
    }

    /// RTT(i → j) as reported by `i`.
    pub fn rtt(&self, i: usize, j: usize) -> Option<f64> {
        let p = &self.pairs[self.pair_index(i, j)?];
        Some(if p.a == i { p.rtt_ab } else { p.rtt_ba })
    }

    pub fn annotation(&self, i: usize, j: usize) -> Option<Annotation> {
        let p = &self.pairs[self.pair_index(i, j)?];
        Some(if p.a == i { p.ann_ab } else { p.ann_ba })
    }

    /// Overwrites direction `i → j`.
    pub fn set(&mut self, i: usize, j: usize, rtt: f64, ann: Annotation) -> Result<()> {
        if !(rtt > 0.0) {
            return Err(Error::arg(format!("rtt must be positive, got {rtt}")));
        }
        let k = self
            .pair_index(i, j)
            .ok_or_else(|| Error::arg(format!("pair ({i}, {j}) is not scheduled")))?;
        let p = &mut self.pairs[k];
        if p.a == i {
            p.rtt_ab = rtt;
            p.ann_ab = ann;
        } else {
            p.rtt_ba = rtt;
            p.ann_ba = ann;
        }
        Ok(())
    }

    /// Eq.-style symmetric RTT of the pair.
    pub fn symmetric(&self, i: usize, j: usize) -> Option<f64> {
        let p = &self.pairs[self.pair_index(i, j)?];
        Some(0.5 * (p.rtt_ab + p.rtt_ba))
    }

    /// Whether the set holds exactly the scheduled pairs.
    pub fn covers_exactly(&self, schedule: &ReferenceSchedule) -> bool {
        schedule.len() == self.n
            && (0..self.n).all(|i| {
                let refs = schedule.refs(i);
                refs.len() == self.lookup[i].len() && refs.iter().zip(&self.lookup[i]).all(|(r, l)| *r == l.0)
            })
    }

    /// Node `i`'s own reports as 5-byte records, in reference order.
    pub fn node_records(&self, i: usize) -> Result<Vec<Record>> {
        self.lookup[i]
            .iter()
            .map(|&(j, _)| Record::from_ms(j as u32, self.rtt(i, j).expect("scheduled")))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measurements serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Ok(serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Probes every scheduled pair in both directions.
pub fn simulate_measurements(
    schedule: &ReferenceSchedule,
    matrix: &PropagationMatrix<'_>,
    probe: &ProbeConfig,
    seed: u64,
) -> Result<MeasurementSet> {
    if probe.probes == 0 {
        return Err(Error::arg("probes must be at least 1"));
    }
    let pairs: Vec<PairMeasurement> = schedule
        .pairs()
        .into_par_iter()
        .map(|(a, b)| {
            Ok(PairMeasurement {
                a,
                b,
                rtt_ab: measure_pair(a, b, matrix, probe, seed)?,
                rtt_ba: measure_pair(b, a, matrix, probe, seed)?,
                ann_ab: Annotation::Benign,
                ann_ba: Annotation::Benign,
            })
        })
        .collect::<Result<_>>()?;
    MeasurementSet::from_pairs(schedule.len(), pairs)
}
