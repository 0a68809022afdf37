//! Geographic primitives: coordinates, great-circle distance, zones and
//! sampling grids.
//!
//! All distances use a spherical Earth of mean radius [`EARTH_RADIUS_KM`].
//! Zone containment is evaluated with a planar ray cast in longitude/latitude
//! space, which is adequate for the simplified country outlines shipped with
//! the crate (none of them cross the antimeridian).

use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const EUROPE15_GEOJSON: &str = include_str!("../data/europe15.geojson");

/// A point on the sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Validates latitude and normalizes longitude into (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidCoordinate { lat, lon });
        }
        Ok(GeoPoint { lat, lon: normalize_lon(lon) })
    }

    pub fn to_unit(self) -> UnitVector {
        UnitVector::from(self)
    }
}

fn normalize_lon(lon: f64) -> f64 {
    if lon > -180.0 && lon <= 180.0 {
        return lon;
    }
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l <= -180.0 {
        l + 360.0
    } else {
        l
    }
}

/// Haversine great-circle distance in kilometers.
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Cartesian unit vector; the fast path for repeated distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector(pub [f64; 3]);

impl From<GeoPoint> for UnitVector {
    fn from(p: GeoPoint) -> Self {
        let (slat, clat) = p.lat.to_radians().sin_cos();
        let (slon, clon) = p.lon.to_radians().sin_cos();
        UnitVector([clat * clon, clat * slon, slat])
    }
}

impl UnitVector {
    pub fn dot(&self, other: &UnitVector) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    /// Great-circle distance in km via the chord length (numerically stable at
    /// small and large separations).
    pub fn distance_km(&self, other: &UnitVector) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        let dz = self.0[2] - other.0[2];
        let chord = (dx * dx + dy * dy + dz * dz).sqrt();
        2.0 * EARTH_RADIUS_KM * (0.5 * chord).min(1.0).asin()
    }

    pub fn normalized(v: [f64; 3]) -> Option<UnitVector> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n < 1e-15 || !n.is_finite() {
            return None;
        }
        Some(UnitVector([v[0] / n, v[1] / n, v[2] / n]))
    }

    pub fn to_geo(self) -> GeoPoint {
        let [x, y, z] = self.0;
        let lat = z.clamp(-1.0, 1.0).asin().to_degrees();
        let lon = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x).to_degrees() };
        GeoPoint { lat, lon: normalize_lon(lon) }
    }

    /// Local east and north tangent directions. At the poles east is
    /// taken along +y.
    pub fn tangent_basis(&self) -> ([f64; 3], [f64; 3]) {
        let [x, y, z] = self.0;
        let r = (x * x + y * y).sqrt();
        let east = if r < 1e-12 { [0.0, 1.0, 0.0] } else { [-y / r, x / r, 0.0] };
        // north = self x east
        let north = [
            y * east[2] - z * east[1],
            z * east[0] - x * east[2],
            x * east[1] - y * east[0],
        ];
        (east, north)
    }

    /// Exponential map: move `east_km`, `north_km` along the sphere from self.
    pub fn offset(&self, basis: &([f64; 3], [f64; 3]), east_km: f64, north_km: f64) -> UnitVector {
        let rho = (east_km * east_km + north_km * north_km).sqrt();
        if rho == 0.0 {
            return *self;
        }
        let ang = rho / EARTH_RADIUS_KM;
        let (s, c) = ang.sin_cos();
        let (e, n) = basis;
        let mut v = [0.0; 3];
        for k in 0..3 {
            let dir = (east_km * e[k] + north_km * n[k]) / rho;
            v[k] = c * self.0[k] + s * dir;
        }
        UnitVector::normalized(v).unwrap_or(*self)
    }
}

/// Latitude/longitude rectangle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn new(min_lat: f64, max_lat: f64, min_lon: f64, max_lon: f64) -> Self {
        BBox { min_lat, max_lat, min_lon, max_lon }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max_lat > self.min_lat && self.max_lon > self.min_lon)
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min_lat: self.min_lat.min(other.min_lat),
            max_lat: self.max_lat.max(other.max_lat),
            min_lon: self.min_lon.min(other.min_lon),
            max_lon: self.max_lon.max(other.max_lon),
        }
    }

    fn of_points<'a>(pts: impl IntoIterator<Item = &'a GeoPoint>) -> Option<BBox> {
        pts.into_iter().fold(None, |acc, p| {
            let b = BBox::new(p.lat, p.lat, p.lon, p.lon);
            Some(match acc {
                None => b,
                Some(a) => a.union(&b),
            })
        })
    }
}

/// Number of lattice steps along an axis, tolerant to float error in `span / resolution`.
fn axis_count(span: f64, resolution: f64) -> usize {
    (span / resolution + 1e-9).floor() as usize + 1
}

/// Row-major lattice spaced `resolution` degrees, starting at the bbox's
/// south-west corner. Rows run south to north, columns west to east.
pub fn make_grid(bbox: &BBox, resolution: f64) -> Vec<GeoPoint> {
    if bbox.is_degenerate() || !(resolution > 0.0) || !resolution.is_finite() {
        return Vec::new();
    }
    let rows = axis_count(bbox.max_lat - bbox.min_lat, resolution);
    let cols = axis_count(bbox.max_lon - bbox.min_lon, resolution);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let lat = bbox.min_lat + r as f64 * resolution;
        for c in 0..cols {
            let lon = bbox.min_lon + c as f64 * resolution;
            out.push(GeoPoint { lat, lon: normalize_lon(lon) });
        }
    }
    out
}

/// A polygon with an exterior ring and optional holes. Rings are stored
/// without the closing duplicate vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<GeoPoint>,
    pub holes: Vec<Vec<GeoPoint>>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum RingPosition {
    Inside,
    Outside,
    Boundary,
}

fn ring_position(ring: &[GeoPoint], p: GeoPoint) -> RingPosition {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        // on-segment test
        let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
        if cross.abs() <= 1e-12
            && p.lon >= a.lon.min(b.lon)
            && p.lon <= a.lon.max(b.lon)
            && p.lat >= a.lat.min(b.lat)
            && p.lat <= a.lat.max(b.lat)
        {
            return RingPosition::Boundary;
        }
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    if inside {
        RingPosition::Inside
    } else {
        RingPosition::Outside
    }
}

impl Polygon {
    /// Boundary-inclusive containment.
    pub fn contains(&self, p: GeoPoint) -> bool {
        match ring_position(&self.exterior, p) {
            RingPosition::Outside => false,
            RingPosition::Boundary => true,
            RingPosition::Inside => self
                .holes
                .iter()
                .all(|h| ring_position(h, p) != RingPosition::Inside),
        }
    }

    fn rings(&self) -> impl Iterator<Item = &Vec<GeoPoint>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

fn segments_cross(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    fn orient(p: GeoPoint, q: GeoPoint, r: GeoPoint) -> f64 {
        (q.lon - p.lon) * (r.lat - p.lat) - (q.lat - p.lat) * (r.lon - p.lon)
    }
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    // proper crossings only; shared vertices between adjacent edges are fine
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

fn ring_self_intersects(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    for i in 0..n {
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n]) {
                return true;
            }
        }
    }
    false
}

/// A named territorial region.
#[derive(Debug, Clone)]
pub struct Zone {
    pub id: String,
    pub name: String,
    pub polygons: Vec<Polygon>,
    bbox: BBox,
}

impl Zone {
    pub fn new(id: impl Into<String>, name: impl Into<String>, polygons: Vec<Polygon>) -> Result<Self> {
        let id = id.into();
        if polygons.is_empty() {
            return Err(Error::InvalidZoneMap(format!("zone {id} has no polygons")));
        }
        for poly in &polygons {
            for ring in poly.rings() {
                if ring.len() < 3 {
                    return Err(Error::InvalidZoneMap(format!("zone {id}: ring with fewer than 3 vertices")));
                }
                if ring_self_intersects(ring) {
                    return Err(Error::InvalidZoneMap(format!("zone {id}: self-intersecting ring")));
                }
            }
        }
        let bbox = BBox::of_points(polygons.iter().flat_map(|p| p.exterior.iter()))
            .expect("non-empty polygons");
        Ok(Zone { id, name: name.into(), polygons, bbox })
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        self.bbox.contains(p) && self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// A set of non-overlapping zones, kept sorted by id.
#[derive(Debug, Clone)]
pub struct ZoneMap {
    name: String,
    zones: Vec<Zone>,
    bbox: BBox,
}

impl ZoneMap {
    pub fn new(name: impl Into<String>, mut zones: Vec<Zone>) -> Result<Self> {
        if zones.is_empty() {
            return Err(Error::InvalidZoneMap("no zones".into()));
        }
        zones.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = zones.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::InvalidZoneMap(format!("duplicate zone id {}", w[0].id)));
        }
        let bbox = zones.iter().skip(1).fold(zones[0].bbox, |acc, z| acc.union(&z.bbox));
        Ok(ZoneMap { name: name.into(), zones, bbox })
    }

    /// The fifteen-country European map bundled with the crate.
    pub fn europe15() -> &'static ZoneMap {
        static MAP: OnceLock<ZoneMap> = OnceLock::new();
        MAP.get_or_init(|| ZoneMap::from_geojson("europe15", EUROPE15_GEOJSON).expect("bundled zone map is valid"))
    }

    /// Resolves a zone map by id (`europe15`) or by path to a GeoJSON file.
    pub fn resolve(id_or_path: &str) -> Result<ZoneMap> {
        if id_or_path == "europe15" {
            return Ok(ZoneMap::europe15().clone());
        }
        ZoneMap::load(id_or_path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ZoneMap> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("zones");
        ZoneMap::from_geojson(name, &text)
    }

    /// Parses a GeoJSON FeatureCollection whose features carry `id` and
    /// `name` properties and Polygon or MultiPolygon geometries.
    pub fn from_geojson(name: &str, text: &str) -> Result<ZoneMap> {
        let fc: geojson::FeatureCollection = serde_json::from_str(text)?;
        let mut zones = Vec::with_capacity(fc.features.len());
        for f in fc.features {
            let polys = match f.geometry {
                geojson::Geometry::Polygon { coordinates } => vec![coordinates],
                geojson::Geometry::MultiPolygon { coordinates } => coordinates,
            };
            let mut polygons = Vec::with_capacity(polys.len());
            for rings in polys {
                let mut rings = rings
                    .into_iter()
                    .map(|ring| {
                        let mut pts = ring
                            .into_iter()
                            .map(|[lon, lat]| GeoPoint::new(lat, lon))
                            .collect::<Result<Vec<_>>>()?;
                        if pts.len() > 1 && pts.first() == pts.last() {
                            pts.pop();
                        }
                        Ok(pts)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if rings.is_empty() {
                    return Err(Error::InvalidZoneMap(format!("zone {}: empty polygon", f.properties.id)));
                }
                let exterior = rings.remove(0);
                polygons.push(Polygon { exterior, holes: rings });
            }
            let zname = f.properties.name.unwrap_or_else(|| f.properties.id.clone());
            zones.push(Zone::new(f.properties.id, zname, polygons)?);
        }
        ZoneMap::new(name, zones)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn get(&self, id: &str) -> Option<&Zone> {
        self.zones
            .binary_search_by(|z| z.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.zones[i])
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    /// The zone containing `p`. Points on a shared border resolve to the
    /// lexicographically smallest id because zones are scanned in id order.
    pub fn zone_of(&self, p: GeoPoint) -> Option<&str> {
        if !self.bbox.contains(p) {
            return None;
        }
        self.zones.iter().find(|z| z.contains(p)).map(|z| z.id.as_str())
    }
}

/// Free function form of [`ZoneMap::zone_of`].
pub fn zone_of<'a>(p: GeoPoint, zones: &'a ZoneMap) -> Option<&'a str> {
    zones.zone_of(p)
}

mod geojson {
    use serde::Deserialize;

    #[derive(Deserialize)]
    pub struct FeatureCollection {
        pub features: Vec<Feature>,
    }

    #[derive(Deserialize)]
    pub struct Feature {
        pub properties: Properties,
        pub geometry: Geometry,
    }

    #[derive(Deserialize)]
    pub struct Properties {
        pub id: String,
        pub name: Option<String>,
    }

    #[derive(Deserialize)]
    #[serde(tag = "type")]
    pub enum Geometry {
        Polygon { coordinates: Vec<Vec<[f64; 2]>> },
        MultiPolygon { coordinates: Vec<Vec<Vec<[f64; 2]>>> },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    // independent evaluation with the spherical law of cosines
    fn cosine_law(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).clamp(-1.0, 1.0).acos() * 6371.0
    }

    #[test]
    fn distance_identity_is_zero() {
        let p = pt(48.8566, 2.3522);
        assert_eq!(great_circle_distance(p, p), 0.0);
    }

    #[test]
    fn paris_berlin() {
        let d = great_circle_distance(pt(48.8566, 2.3522), pt(52.52, 13.405));
        let oracle = cosine_law(pt(48.8566, 2.3522), pt(52.52, 13.405));
        assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
        assert!((d - 878.0).abs() < 1.0, "{d}");
    }

    #[test]
    fn antipodal_is_half_circumference() {
        let d = great_circle_distance(pt(0.0, 0.0), pt(0.0, 180.0));
        assert!((d - std::f64::consts::PI * 6371.0).abs() < 1e-6);
        assert!((d - 20015.1).abs() < 0.1);
    }

    #[test]
    fn longitude_is_normalized() {
        assert_eq!(pt(0.0, -180.0).lon, 180.0);
        assert_eq!(pt(0.0, 190.0).lon, -170.0);
        assert_eq!(pt(0.0, 540.0).lon, 180.0);
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn unit_vector_matches_haversine() {
        let a = pt(41.9, 12.5);
        let b = pt(-33.9, 151.2);
        let d1 = great_circle_distance(a, b);
        let d2 = a.to_unit().distance_km(&b.to_unit());
        assert!((d1 - d2).abs() < 1e-6);
        let back = a.to_unit().to_geo();
        assert!((back.lat - a.lat).abs() < 1e-12 && (back.lon - a.lon).abs() < 1e-12);
    }

    #[test]
    fn offset_moves_requested_distance() {
        let p = pt(50.0, 10.0).to_unit();
        let basis = p.tangent_basis();
        let q = p.offset(&basis, 30.0, 40.0);
        assert!((p.distance_km(&q) - 50.0).abs() < 1e-6);
        let north = p.offset(&basis, 0.0, 100.0).to_geo();
        assert!(north.lat > 50.0 && (north.lon - 10.0).abs() < 1e-9);
    }

    #[test]
    fn grid_counts() {
        assert_eq!(make_grid(&BBox::new(0.0, 1.0, 0.0, 1.0), 0.5).len(), 9);
        assert_eq!(make_grid(&BBox::new(0.0, 1.0, 0.0, 2.0), 0.25).len(), 45);
        assert!(make_grid(&BBox::new(1.0, 1.0, 0.0, 2.0), 0.25).is_empty());
        assert!(make_grid(&BBox::new(0.0, 1.0, 0.0, 1.0), 0.0).is_empty());
        let g = make_grid(&BBox::new(0.0, 1.0, 0.0, 1.0), 0.5);
        assert_eq!(g[0], GeoPoint { lat: 0.0, lon: 0.0 });
        assert_eq!(g[1], GeoPoint { lat: 0.0, lon: 0.5 });
        assert_eq!(g[8], GeoPoint { lat: 1.0, lon: 1.0 });
    }

    #[test]
    fn europe_map_loads() {
        let map = ZoneMap::europe15();
        assert_eq!(map.zones().len(), 15);
        let ids: Vec<_> = map.zones().iter().map(|z| z.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn rome_is_in_italy() {
        assert_eq!(ZoneMap::europe15().zone_of(pt(41.9028, 12.4964)), Some("IT"));
        assert_eq!(ZoneMap::europe15().zone_of(pt(52.52, 13.405)), Some("DE"));
        assert_eq!(ZoneMap::europe15().zone_of(pt(48.8566, 2.3522)), Some("FR"));
    }

    #[test]
    fn mid_atlantic_is_in_no_zone() {
        assert_eq!(ZoneMap::europe15().zone_of(pt(40.0, -35.0)), None);
    }

    #[test]
    fn shared_border_vertex_resolves_to_smallest_id() {
        let map = ZoneMap::europe15();
        // find a vertex of a zone that is also contained (boundary) by another zone
        let mut found = false;
        for z in map.zones() {
            for v in &z.polygons[0].exterior {
                let owners: Vec<_> = map.zones().iter().filter(|o| o.contains(*v)).map(|o| o.id.clone()).collect();
                if owners.len() > 1 {
                    let min = owners.iter().min().unwrap();
                    assert_eq!(map.zone_of(*v), Some(min.as_str()));
                    assert_eq!(map.zone_of(*v), map.zone_of(*v));
                    found = true;
                }
            }
        }
        assert!(found, "expected at least one shared border vertex");
    }

    #[test]
    fn grid_points_resolve_to_at_most_one_zone_interior() {
        let map = ZoneMap::europe15();
        let grid = make_grid(&map.bbox(), 0.25);
        for p in grid {
            let owners = map.zones().iter().filter(|z| z.contains(p)).count();
            // more than one owner is only possible exactly on a shared border
            if owners > 1 {
                let first = map.zone_of(p).unwrap();
                assert!(map.zones().iter().filter(|z| z.contains(p)).any(|z| z.id == first));
            }
            assert_eq!(map.zone_of(p), map.zone_of(p));
        }
    }

    #[test]
    fn polygon_with_hole() {
        let sq = |a: f64, b: f64| vec![pt(a, a), pt(a, b), pt(b, b), pt(b, a)];
        let poly = Polygon { exterior: sq(0.0, 10.0), holes: vec![sq(4.0, 6.0)] };
        assert!(poly.contains(pt(2.0, 2.0)));
        assert!(!poly.contains(pt(5.0, 5.0)));
        assert!(poly.contains(pt(0.0, 5.0)));
        assert!(poly.contains(pt(4.0, 5.0)));
    }

    #[test]
    fn invalid_zones_rejected() {
        let bow = vec![pt(0.0, 0.0), pt(1.0, 1.0), pt(0.0, 1.0), pt(1.0, 0.0)];
        assert!(Zone::new("X", "x", vec![Polygon { exterior: bow, holes: vec![] }]).is_err());
        let tiny = vec![pt(0.0, 0.0), pt(1.0, 1.0)];
        assert!(Zone::new("X", "x", vec![Polygon { exterior: tiny, holes: vec![] }]).is_err());
        let sq = vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 1.0), pt(1.0, 0.0)];
        let z1 = Zone::new("A", "a", vec![Polygon { exterior: sq.clone(), holes: vec![] }]).unwrap();
        let z2 = Zone::new("A", "a", vec![Polygon { exterior: sq, holes: vec![] }]).unwrap();
        assert!(ZoneMap::new("dup", vec![z1, z2]).is_err());
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (-90.0f64..=90.0, -180.0f64..180.0).prop_map(|(lat, lon)| GeoPoint::new(lat, lon).unwrap())
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(a in arb_point(), b in arb_point()) {
            let d1 = great_circle_distance(a, b);
            let d2 = great_circle_distance(b, a);
            prop_assert!(d1 >= 0.0);
            prop_assert!((d1 - d2).abs() < 1e-9);
        }

        #[test]
        fn triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            let ab = great_circle_distance(a, b);
            let bc = great_circle_distance(b, c);
            let ac = great_circle_distance(a, c);
            prop_assert!(ac <= ab + bc + 1e-6);
        }
    }
}
