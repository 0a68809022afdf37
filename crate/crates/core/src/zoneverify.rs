//! Zone verification: intersect spherical caps of radius `(2/3)·c·RTT`
//! around the references, score the surviving grid points with
//! `exp(−RMSE)` and sum the normalized scores per zone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{make_grid, BBox, GeoPoint, UnitVector, ZoneMap, EARTH_RADIUS_KM};
use crate::localize::{Objective, Reference};
use crate::propagation::{PropagationModel, MAX_SPEED_KM_PER_MS};

/// `(2/3)·c·rtt`, km. The full RTT is used without halving.
pub fn max_distance(rtt_ms: f64) -> Result<f64> {
    if !(rtt_ms > 0.0) || !rtt_ms.is_finite() {
        return Err(Error::arg(format!("rtt must be positive, got {rtt_ms}")));
    }
    Ok(MAX_SPEED_KM_PER_MS * rtt_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoneVerifyConfig {
    pub resolution_deg: f64,
    /// Stop adding caps once one removes less than this fraction of points.
    pub shrink_threshold: f64,
}

impl Default for ZoneVerifyConfig {
    fn default() -> Self {
        ZoneVerifyConfig { resolution_deg: 0.2, shrink_threshold: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetArea {
    /// Indices into the reference slice, in the order the caps were applied.
    pub contributing: Vec<usize>,
    /// Member count after each applied cap.
    pub member_history: Vec<usize>,
    pub bbox: Option<BBox>,
    pub points: Vec<GeoPoint>,
    /// Normalized scores, parallel to `points`; empty until scored.
    pub scores: Vec<f64>,
}

impl TargetArea {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_scored(&self) -> bool {
        !self.points.is_empty() && self.scores.len() == self.points.len()
    }

    /// Member point with the highest score.
    pub fn argmax(&self) -> Option<GeoPoint> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &s) in self.scores.iter().enumerate() {
            if best.map_or(true, |(_, b)| s > b) {
                best = Some((k, s));
            }
        }
        best.map(|(k, _)| self.points[k])
    }
}

fn snap_down(x: f64, res: f64) -> f64 {
    (x / res).floor() * res
}

fn snap_up(x: f64, res: f64) -> f64 {
    (x / res).ceil() * res
}

/// Lattice-anchored bounding box of a spherical cap.
fn cap_bbox(center: GeoPoint, radius_km: f64, res: f64) -> BBox {
    let ang = radius_km / EARTH_RADIUS_KM;
    let dlat = ang.to_degrees();
    let lat_lo = center.lat - dlat;
    let lat_hi = center.lat + dlat;
    let full_lon = BBox::new(0.0, 0.0, -180.0, 180.0 - res);
    let (min_lon, max_lon) = if lat_hi >= 90.0 || lat_lo <= -90.0 || ang >= std::f64::consts::FRAC_PI_2 {
        (full_lon.min_lon, full_lon.max_lon)
    } else {
        let s = ang.sin() / center.lat.to_radians().cos();
        if s >= 1.0 {
            (full_lon.min_lon, full_lon.max_lon)
        } else {
            let dlon = s.asin().to_degrees();
            (center.lon - dlon, center.lon + dlon)
        }
    };
    BBox::new(
        snap_down(lat_lo.max(-90.0), res),
        snap_up(lat_hi.min(90.0), res),
        snap_down(min_lon, res),
        snap_up(max_lon, res),
    )
}

/// Feasible region: caps applied in ascending `dist_max` order until one
/// shrinks the member set by less than the threshold. An empty result is a
/// valid, flagged outcome.
pub fn target_area(refs: &[Reference], cfg: &ZoneVerifyConfig) -> Result<TargetArea> {
    if refs.is_empty() {
        return Err(Error::arg("no references"));
    }
    if !(cfg.resolution_deg > 0.0) {
        return Err(Error::Config("grid resolution must be positive".into()));
    }
    let radii = refs.iter().map(|r| max_distance(r.rtt_ms)).collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..refs.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]).then(a.cmp(&b)));

    let first = order[0];
    let bbox = cap_bbox(refs[first].location, radii[first], cfg.resolution_deg);
    let c0 = refs[first].location.to_unit();
    let mut members: Vec<(GeoPoint, UnitVector)> = make_grid(&bbox, cfg.resolution_deg)
        .into_iter()
        .map(|p| (p, p.to_unit()))
        .filter(|(_, u)| u.distance_km(&c0) <= radii[first])
        .collect();
    let mut contributing = vec![first];
    let mut history = vec![members.len()];

    for &k in &order[1..] {
        if members.is_empty() {
            break;
        }
        let c = refs[k].location.to_unit();
        let before = members.len();
        members.retain(|(_, u)| u.distance_km(&c) <= radii[k]);
        contributing.push(k);
        history.push(members.len());
        if ((before - members.len()) as f64) < cfg.shrink_threshold * before as f64 {
            break;
        }
    }
    Ok(TargetArea {
        contributing,
        member_history: history,
        bbox: Some(bbox),
        points: members.into_iter().map(|(p, _)| p).collect(),
        scores: Vec::new(),
    })
}

/// Scores member points with `exp(−RMSE)` over all references and
/// normalizes them (log-sum-exp) to sum to one.
pub fn score_grid(mut area: TargetArea, refs: &[Reference], model: &PropagationModel) -> Result<TargetArea> {
    if area.is_empty() {
        return Err(Error::arg("cannot score an empty target area"));
    }
    let obj = Objective::new(refs, model)?;
    let rmse: Vec<f64> = area.points.iter().map(|p| obj.value(&p.to_unit())).collect();
    let best = rmse.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = rmse.iter().map(|r| (best - r).exp()).collect();
    let total: f64 = raw.iter().sum();
    area.scores = raw.into_iter().map(|r| r / total).collect();
    Ok(area)
}

/// Zone lookup precomputed on the lattice used by [`target_area`].
pub struct ZoneLattice<'a> {
    zones: &'a ZoneMap,
    res: f64,
    lat0: i64,
    lon0: i64,
    cols: usize,
    rows: usize,
    cells: Vec<Option<u16>>,
}

impl<'a> ZoneLattice<'a> {
    pub fn new(zones: &'a ZoneMap, res: f64) -> Self {
        let b = zones.bbox();
        let lat0 = (b.min_lat / res).floor() as i64;
        let lon0 = (b.min_lon / res).floor() as i64;
        let rows = ((b.max_lat / res).ceil() as i64 - lat0 + 1) as usize;
        let cols = ((b.max_lon / res).ceil() as i64 - lon0 + 1) as usize;
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let p = GeoPoint { lat: (lat0 + r as i64) as f64 * res, lon: (lon0 + c as i64) as f64 * res };
                cells.push(
                    zones
                        .zone_of(p)
                        .map(|id| zones.zones().iter().position(|z| z.id == id).expect("zone exists") as u16),
                );
            }
        }
        ZoneLattice { zones, res, lat0, lon0, cols, rows, cells }
    }

    pub fn zone_of(&self, p: GeoPoint) -> Option<&'a str> {
        let fr = p.lat / self.res;
        let fc = p.lon / self.res;
        let (ir, ic) = (fr.round(), fc.round());
        if (fr - ir).abs() > 1e-6 || (fc - ic).abs() > 1e-6 {
            return self.zones.zone_of(p);
        }
        let r = ir as i64 - self.lat0;
        let c = ic as i64 - self.lon0;
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            return None;
        }
        self.cells[r as usize * self.cols + c as usize].map(|k| self.zones.zones()[k as usize].id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneScoreTable {
    pub masses: BTreeMap<String, f64>,
    /// Mass on points outside every zone.
    pub outside: f64,
    pub winner: Option<String>,
}

impl ZoneScoreTable {
    pub fn winner_mass(&self) -> f64 {
        self.winner.as_ref().map_or(0.0, |w| self.masses[w])
    }
}

fn tabulate<'z>(area: &TargetArea, zone_of: impl Fn(GeoPoint) -> Option<&'z str>) -> ZoneScoreTable {
    let mut masses: BTreeMap<String, f64> = BTreeMap::new();
    let mut outside = 0.0;
    if area.is_scored() {
        for (p, &s) in area.points.iter().zip(&area.scores) {
            match zone_of(*p) {
                Some(z) => *masses.entry(z.to_string()).or_insert(0.0) += s,
                None => outside += s,
            }
        }
    }
    // BTreeMap iterates ids ascending, so strict `>` keeps the smallest id on ties
    let mut winner: Option<(&String, f64)> = None;
    for (id, &m) in &masses {
        if winner.map_or(true, |(_, b)| m > b) {
            winner = Some((id, m));
        }
    }
    let winner = winner.filter(|(_, m)| *m > 0.0).map(|(id, _)| id.clone());
    ZoneScoreTable { masses, outside, winner }
}

/// Per-zone probability mass and the winning zone.
pub fn zone_scores(area: &TargetArea, zones: &ZoneMap) -> ZoneScoreTable {
    tabulate(area, |p| zones.zone_of(p))
}

/// As [`zone_scores`] with a precomputed lattice lookup.
pub fn zone_scores_lattice(area: &TargetArea, lattice: &ZoneLattice<'_>) -> ZoneScoreTable {
    tabulate(area, |p| lattice.zone_of(p))
}

/// True iff the winner equals the claimed zone.
pub fn verify_zone(claimed_zone: &str, table: &ZoneScoreTable) -> bool {
    table.winner.as_deref() == Some(claimed_zone)
}
