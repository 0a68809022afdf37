//! Real-world data path: measurement payloads reported by live nodes, city
//! name resolution for self-reported locations, assembly of analysis inputs
//! and self-reported vs. external location consistency.
//!
//! Payload schema (version 1):
//!
//! ```json
//! {
//!   "node": "<identity>",
//!   "location": "Berlin, DE",
//!   "measurements": [{ "ref": "<identity>", "min_rtt_ms": 12.5 }]
//! }
//! ```
//!
//! `location` is optional. A trailing `, CC` two-letter suffix is used as a
//! country hint when resolving the city.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use deunicode::deunicode;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geo::{great_circle_distance, GeoPoint, ZoneMap};
use crate::harness::median;
use crate::netgen::{Annotation, MeasurementSet, Network, NodeDescriptor, PairMeasurement};
use crate::schedule::{complete_references, ReferenceSchedule};
use crate::seed;

pub const PAYLOAD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEntry {
    #[serde(rename = "ref")]
    pub reference: String,
    pub min_rtt_ms: f64,
}

/// Entries skipped while parsing one payload.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    /// RTT zero, negative or not finite.
    pub non_positive_rtt: usize,
    /// Entry is not an object with a string `ref` and a numeric `min_rtt_ms`.
    pub malformed: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.non_positive_rtt + self.malformed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawMeasurementFile {
    pub node: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    pub measurements: Vec<RawEntry>,
    #[serde(skip)]
    pub dropped: DropCounts,
}

impl RawMeasurementFile {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("payload serializes")
    }
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Parse(format!("measurement payload: {}", msg.into()))
}

/// Parses one payload. Total over arbitrary bytes: anything that is not a
/// JSON object with a string `node` and an array `measurements` is a
/// [`Error::Parse`] naming the first violation; bad entries are dropped and
/// counted.
pub fn parse_measurement_file(bytes: &[u8]) -> Result<RawMeasurementFile> {
    let v: Value = serde_json::from_slice(bytes).map_err(|e| schema(format!("not JSON: {e}")))?;
    let Value::Object(obj) = v else {
        return Err(schema("top level is not an object"));
    };
    let node = match obj.get("node") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.trim().to_string(),
        Some(_) => return Err(schema("`node` must be a non-empty string")),
        None => return Err(schema("missing `node`")),
    };
    let location = match obj.get("location") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(schema("`location` must be a string")),
    };
    let entries = match obj.get("measurements") {
        Some(Value::Array(a)) => a,
        Some(_) => return Err(schema("`measurements` must be an array")),
        None => return Err(schema("missing `measurements`")),
    };
    let mut dropped = DropCounts::default();
    let mut measurements = Vec::with_capacity(entries.len());
    for e in entries {
        let (Some(r), Some(rtt)) = (e.get("ref").and_then(Value::as_str), e.get("min_rtt_ms").and_then(Value::as_f64)) else {
            dropped.malformed += 1;
            continue;
        };
        if !(rtt > 0.0 && rtt.is_finite()) {
            dropped.non_positive_rtt += 1;
            continue;
        }
        measurements.push(RawEntry { reference: r.trim().to_string(), min_rtt_ms: rtt });
    }
    Ok(RawMeasurementFile { node, location, measurements, dropped })
}

/// Parses every `*.json` file of a directory, sorted by file name. Files
/// that fail to parse are returned separately with their error.
pub fn read_payload_dir(dir: impl AsRef<Path>) -> Result<(Vec<RawMeasurementFile>, Vec<(String, Error)>)> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let parsed: Vec<_> = paths
        .par_iter()
        .map(|p| {
            let name = p.display().to_string();
            std::fs::read(p).map_err(|e| Error::io(p, e)).and_then(|b| parse_measurement_file(&b)).map_err(|e| (name, e))
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in parsed {
        match r {
            Ok(f) => ok.push(f),
            Err(e) => failed.push(e),
        }
    }
    Ok((ok, failed))
}

/// Case-folded, trimmed, diacritics stripped, inner whitespace collapsed.
pub fn normalize_name(s: &str) -> String {
    deunicode(s).to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CityRecord {
    pub name: String,
    /// Upper-case country code.
    pub country: String,
    pub center: GeoPoint,
}

#[derive(Debug, Deserialize)]
struct CityRow {
    name: String,
    country: String,
    lat: f64,
    lon: f64,
}

/// City lookup keyed by normalized name.
#[derive(Debug, Clone, Default)]
pub struct CityTable {
    records: Vec<CityRecord>,
    by_name: HashMap<String, Vec<usize>>,
}

impl CityTable {
    /// Normalizes names and country codes; duplicate `(name, country)` keys
    /// are an error.
    pub fn new(records: impl IntoIterator<Item = CityRecord>) -> Result<Self> {
        let mut t = CityTable::default();
        let mut keys = BTreeSet::new();
        for mut r in records {
            r.name = normalize_name(&r.name);
            r.country = r.country.trim().to_uppercase();
            if r.name.is_empty() {
                return Err(Error::Parse("city with empty name".into()));
            }
            if !keys.insert((r.name.clone(), r.country.clone())) {
                return Err(Error::Parse(format!("duplicate city {} ({})", r.name, r.country)));
            }
            t.by_name.entry(r.name.clone()).or_default().push(t.records.len());
            t.records.push(r);
        }
        Ok(t)
    }

    /// CSV with header `name,country,lat,lon`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rows = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize::<CityRow>() {
            let row = row?;
            rows.push(CityRecord { name: row.name, country: row.country, center: GeoPoint::new(row.lat, row.lon)? });
        }
        CityTable::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        CityTable::from_csv(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[CityRecord] {
        &self.records
    }

    /// Exact match on the normalized name. Several countries sharing the
    /// name resolve only with a matching `country_hint`.
    pub fn resolve(&self, name: &str, country_hint: Option<&str>) -> CityResolution {
        let key = normalize_name(name);
        let Some(hits) = self.by_name.get(&key) else {
            return CityResolution::NotFound;
        };
        let hint = country_hint.map(|h| h.trim().to_uppercase());
        let chosen: Vec<&CityRecord> = hits
            .iter()
            .map(|&k| &self.records[k])
            .filter(|r| hint.as_ref().is_none_or(|h| &r.country == h))
            .collect();
        match chosen.as_slice() {
            [r] => CityResolution::Resolved(r.center),
            [] => CityResolution::NotFound,
            many => CityResolution::Ambiguous(many.iter().map(|r| r.country.clone()).collect()),
        }
    }

    /// Resolves a free-form `"City"` or `"City, CC"` string.
    pub fn resolve_reported(&self, reported: &str) -> CityResolution {
        match reported.rsplit_once(',') {
            Some((city, cc)) if cc.trim().len() == 2 && cc.trim().chars().all(|c| c.is_ascii_alphabetic()) => {
                self.resolve(city, Some(cc))
            }
            _ => self.resolve(reported, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CityResolution {
    Resolved(GeoPoint),
    NotFound,
    /// Countries sharing the name.
    Ambiguous(Vec<String>),
}

impl CityResolution {
    pub fn point(&self) -> Option<GeoPoint> {
        match self {
            CityResolution::Resolved(p) => Some(*p),
            _ => None,
        }
    }
}

pub fn resolve_city(name: &str, cities: &CityTable) -> CityResolution {
    cities.resolve(name, None)
}

/// One node of the live network as listed in the descriptor file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildDescriptor {
    /// Identity used in payloads: hex public key or address.
    pub id: String,
    /// Overrides the location string of the node's payload.
    #[serde(default)]
    pub location: Option<String>,
}

pub fn read_descriptors(path: impl AsRef<Path>) -> Result<Vec<WildDescriptor>> {
    let path = path.as_ref();
    Ok(serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Exclusion {
    NoPayload,
    NoLocation,
    UnresolvedLocation,
    AmbiguousLocation { countries: Vec<String> },
    TooFewReferences { usable: usize, required: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedNode {
    pub id: String,
    #[serde(flatten)]
    pub reason: Exclusion,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub files: usize,
    pub unknown_payload_nodes: usize,
    pub duplicate_payloads: usize,
    pub dropped_entries: usize,
    pub unresolved_references: usize,
    /// Directions copied from the opposite report.
    pub mirrored_directions: usize,
}

/// Network, per-node reference subsets and measurements ready for
/// localization, zone verification and scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisInput {
    /// `true_location == claimed_location ==` the resolved self-reported
    /// location; index order follows the descriptor list.
    pub network: Network,
    /// `references[i]` is the subset chosen for `i`; empty for nodes not
    /// selected. Not symmetric.
    pub schedule: ReferenceSchedule,
    pub measurements: MeasurementSet,
    pub selected: Vec<usize>,
    pub excluded: Vec<ExcludedNode>,
    /// Directed pairs `(i, j)` whose `i → j` value was missing and mirrored.
    pub mirrored: Vec<(usize, usize)>,
    pub counts: IngestCounts,
}

impl AnalysisInput {
    pub fn mirrored_for(&self, node: usize) -> usize {
        self.mirrored.iter().filter(|&&(i, j)| i == node || j == node).count()
    }
}

fn same_point(a: GeoPoint, b: GeoPoint) -> bool {
    a.lat == b.lat && a.lon == b.lon
}

/// Picks `r` references with pairwise distinct locations for every node
/// that has a payload, a resolvable location and enough usable entries.
/// Candidates are visited in seeded random order; a candidate whose location
/// repeats one already picked is skipped and the next one drawn.
pub fn build_analysis_input(
    files: &[RawMeasurementFile],
    descriptors: &[WildDescriptor],
    cities: &CityTable,
    r: usize,
    seed: u64,
) -> Result<AnalysisInput> {
    if r == 0 {
        return Err(Error::arg("reference count must be positive"));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (k, d) in descriptors.iter().enumerate() {
        if index.insert(d.id.as_str(), k).is_some() {
            return Err(Error::Config(format!("duplicate descriptor {}", d.id)));
        }
    }
    let n = descriptors.len();
    let mut counts = IngestCounts { files: files.len(), ..Default::default() };
    let mut payload: Vec<Option<&RawMeasurementFile>> = vec![None; n];
    for f in files {
        counts.dropped_entries += f.dropped.total();
        match index.get(f.node.as_str()) {
            Some(&k) if payload[k].is_none() => payload[k] = Some(f),
            Some(_) => counts.duplicate_payloads += 1,
            None => counts.unknown_payload_nodes += 1,
        }
    }

    let mut excluded = Vec::new();
    let mut location: Vec<Option<GeoPoint>> = vec![None; n];
    let mut location_issue: Vec<Option<Exclusion>> = vec![None; n];
    for (k, d) in descriptors.iter().enumerate() {
        let reported = d.location.as_deref().or(payload[k].and_then(|f| f.location.as_deref()));
        match reported.map(|s| cities.resolve_reported(s)) {
            Some(CityResolution::Resolved(p)) => location[k] = Some(p),
            Some(CityResolution::NotFound) => location_issue[k] = Some(Exclusion::UnresolvedLocation),
            Some(CityResolution::Ambiguous(c)) => location_issue[k] = Some(Exclusion::AmbiguousLocation { countries: c }),
            None => location_issue[k] = Some(Exclusion::NoLocation),
        }
    }

    // Directed minimum RTT per (reporter, reference).
    let mut directed: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (k, f) in payload.iter().enumerate() {
        let Some(f) = f else { continue };
        for e in &f.measurements {
            match index.get(e.reference.as_str()) {
                Some(&j) if j != k => {
                    let v = directed[k].entry(j).or_insert(e.min_rtt_ms);
                    *v = v.min(e.min_rtt_ms);
                }
                Some(_) => {}
                None => counts.unresolved_references += 1,
            }
        }
    }

    let mut initial = vec![Vec::new(); n];
    let mut selected = Vec::new();
    for k in 0..n {
        let id = descriptors[k].id.clone();
        if payload[k].is_none() {
            excluded.push(ExcludedNode { id, reason: Exclusion::NoPayload });
            continue;
        }
        if let Some(issue) = location_issue[k].take() {
            excluded.push(ExcludedNode { id, reason: issue });
            continue;
        }
        let mut candidates: Vec<usize> = directed[k].keys().copied().filter(|&j| location[j].is_some()).collect();
        let usable = candidates.len();
        let mut rng = seed::rng(seed::mix(seed, k as u64, 0x696e));
        candidates.shuffle(&mut rng);
        let mut picks: Vec<usize> = Vec::with_capacity(r);
        let mut seen: Vec<GeoPoint> = Vec::with_capacity(r);
        for j in candidates {
            let p = location[j].expect("filtered");
            if seen.iter().any(|&q| same_point(p, q)) {
                continue;
            }
            seen.push(p);
            picks.push(j);
            if picks.len() == r {
                break;
            }
        }
        if picks.len() < r {
            excluded.push(ExcludedNode { id, reason: Exclusion::TooFewReferences { usable, required: r } });
            continue;
        }
        picks.sort_unstable();
        initial[k] = picks;
        selected.push(k);
    }

    let mut pairs: BTreeMap<(usize, usize), PairMeasurement> = BTreeMap::new();
    let mut mirrored = Vec::new();
    for &i in &selected {
        for &j in &initial[i] {
            let (a, b) = (i.min(j), i.max(j));
            if pairs.contains_key(&(a, b)) {
                continue;
            }
            let ab = directed[a].get(&b).copied();
            let ba = directed[b].get(&a).copied();
            let (rtt_ab, rtt_ba) = match (ab, ba) {
                (Some(x), Some(y)) => (x, y),
                (Some(x), None) => {
                    mirrored.push((b, a));
                    (x, x)
                }
                (None, Some(y)) => {
                    mirrored.push((a, b));
                    (y, y)
                }
                (None, None) => unreachable!("picked references carry a measurement"),
            };
            pairs.insert(
                (a, b),
                PairMeasurement { a, b, rtt_ab, rtt_ba, ann_ab: Annotation::Benign, ann_ba: Annotation::Benign },
            );
        }
    }
    mirrored.sort_unstable();
    counts.mirrored_directions = mirrored.len();

    let measurements = MeasurementSet::from_pairs(n, pairs.into_values().collect())?;
    let mut schedule = complete_references(initial.clone());
    schedule.references = initial;

    // Nodes without a location keep a placeholder; they are never used as
    // references and never selected.
    let placeholder = GeoPoint::new(0.0, 0.0)?;
    let nodes = descriptors
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let p = location[k].unwrap_or(placeholder);
            NodeDescriptor {
                index: k,
                public_key: hex::decode(&d.id).unwrap_or_else(|_| d.id.as_bytes().to_vec()),
                address: d.id.clone(),
                true_location: p,
                claimed_location: p,
                is_adversarial: false,
                claims_false_location: false,
            }
        })
        .collect();
    Ok(AnalysisInput {
        network: Network { zone_map: String::new(), seed, nodes },
        schedule,
        measurements,
        selected,
        excluded,
        mirrored,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub node: String,
    pub distance_km: f64,
    pub self_zone: Option<String>,
    pub external_zone: Option<String>,
    /// The two locations fall in different zones (or one outside all zones).
    pub conflict: bool,
}

pub fn location_consistency(node: &str, self_loc: GeoPoint, external_loc: GeoPoint, zones: &ZoneMap) -> ConsistencyRow {
    let self_zone = zones.zone_of(self_loc).map(str::to_string);
    let external_zone = zones.zone_of(external_loc).map(str::to_string);
    ConsistencyRow {
        node: node.to_string(),
        distance_km: great_circle_distance(self_loc, external_loc),
        conflict: self_zone != external_zone,
        self_zone,
        external_zone,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    pub median_km: f64,
    pub mean_km: f64,
    pub conflict_fraction: f64,
}

impl ConsistencyReport {
    pub fn from_rows(rows: Vec<ConsistencyRow>) -> Self {
        let d: Vec<f64> = rows.iter().map(|r| r.distance_km).collect();
        let n = rows.len();
        let (mean_km, conflict_fraction) = if n == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (d.iter().sum::<f64>() / n as f64, rows.iter().filter(|r| r.conflict).count() as f64 / n as f64)
        };
        ConsistencyReport { median_km: median(&d), mean_km, conflict_fraction, rows }
    }
}

#[derive(Debug, Deserialize)]
struct ExternalRow {
    node: String,
    lat: f64,
    lon: f64,
}

/// External (GeoIP-style) locations, CSV with header `node,lat,lon`.
pub fn read_external_locations<R: Read>(reader: R) -> Result<BTreeMap<String, GeoPoint>> {
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(reader).deserialize::<ExternalRow>() {
        let row = row?;
        out.insert(row.node, GeoPoint::new(row.lat, row.lon)?);
    }
    Ok(out)
}

/// Compares every located node of `input` that also has an external
/// location.
pub fn consistency_report(input: &AnalysisInput, external: &BTreeMap<String, GeoPoint>, zones: &ZoneMap) -> ConsistencyReport {
    let excluded: BTreeSet<&str> = input
        .excluded
        .iter()
        .filter(|e| !matches!(e.reason, Exclusion::TooFewReferences { .. } | Exclusion::NoPayload))
        .map(|e| e.id.as_str())
        .collect();
    let rows = input
        .network
        .nodes
        .iter()
        .filter(|d| !excluded.contains(d.address.as_str()))
        .filter_map(|d| external.get(&d.address).map(|&x| location_consistency(&d.address, d.claimed_location, x, zones)))
        .collect();
    ConsistencyReport::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIXTURE: &str = include_str!("../data/fixtures/payload_3refs.json");
    const CITIES: &str = include_str!("../data/fixtures/cities.csv");

    fn cities() -> CityTable {
        CityTable::from_csv(CITIES.as_bytes()).unwrap()
    }

    #[test]
    fn fixture_round_trips_byte_for_byte() {
        let f = parse_measurement_file(FIXTURE.as_bytes()).unwrap();
        assert_eq!(f.measurements.len(), 3);
        assert_eq!(f.dropped, DropCounts::default());
        assert_eq!(f.to_json_pretty(), FIXTURE.trim_end());
    }

    #[test]
    fn empty_list_is_valid() {
        let f = parse_measurement_file(br#"{"node":"a","measurements":[]}"#).unwrap();
        assert!(f.measurements.is_empty());
        assert_eq!(f.location, None);
    }

    #[test]
    fn bad_entries_are_dropped_and_counted() {
        let f = parse_measurement_file(
            br#"{"node":"a","measurements":[{"ref":"b","min_rtt_ms":0},{"ref":"c","min_rtt_ms":-3.5},
               {"ref":"d"},{"ref":"e","min_rtt_ms":"7"},{"ref":"f","min_rtt_ms":4.25}]}"#,
        )
        .unwrap();
        assert_eq!(f.measurements, vec![RawEntry { reference: "f".into(), min_rtt_ms: 4.25 }]);
        assert_eq!(f.dropped, DropCounts { non_positive_rtt: 2, malformed: 2 });
    }

    #[test]
    fn schema_violations_name_the_problem() {
        for (input, needle) in [
            (&b"\xff\xfe"[..], "not JSON"),
            (b"[1,2]", "not an object"),
            (br#"{"measurements":[]}"#, "missing `node`"),
            (br#"{"node":"a"}"#, "missing `measurements`"),
            (br#"{"node":"a","measurements":{}}"#, "must be an array"),
            (br#"{"node":5,"measurements":[]}"#, "`node`"),
        ] {
            let e = parse_measurement_file(input).unwrap_err().to_string();
            assert!(e.contains(needle), "{e}");
        }
    }

    #[test]
    fn city_normalization() {
        let c = cities();
        let berlin = c.resolve("  BERLIN ", None).point().unwrap();
        assert!((berlin.lat - 52.52).abs() < 1e-9);
        assert!(c.resolve("Zürich", None).point().is_some());
        assert!(c.resolve("zurich", None).point().is_some());
        assert!(c.resolve("São Paulo", None).point().is_some());
        assert_eq!(c.resolve("Berlinn", None), CityResolution::NotFound);
    }

    #[test]
    fn ambiguous_city_needs_a_hint() {
        let c = cities();
        assert_eq!(resolve_city("London", &c), CityResolution::Ambiguous(vec!["GB".into(), "CA".into()]));
        let gb = c.resolve("london", Some("gb")).point().unwrap();
        assert!(gb.lat > 51.0 && gb.lat < 52.0);
        assert_eq!(c.resolve_reported("London, CA").point().unwrap().lon, -81.2453);
        assert_eq!(c.resolve("London", Some("FR")), CityResolution::NotFound);
    }

    #[test]
    fn duplicate_city_keys_are_rejected() {
        let csv = "name,country,lat,lon\nParis,FR,48.85,2.35\nPARIS ,fr,48.0,2.0\n";
        assert!(CityTable::from_csv(csv.as_bytes()).is_err());
    }

    fn world(nodes: usize, refs_per_node: usize, distinct_sites: usize) -> (Vec<RawMeasurementFile>, Vec<WildDescriptor>, CityTable) {
        let recs: Vec<CityRecord> = (0..distinct_sites)
            .map(|k| CityRecord { name: format!("site {k}"), country: "XX".into(), center: GeoPoint::new(40.0 + (k / 100) as f64 * 0.1, 5.0 + (k % 100) as f64 * 0.1).unwrap() })
            .collect();
        let cities = CityTable::new(recs).unwrap();
        let desc: Vec<WildDescriptor> = (0..nodes).map(|k| WildDescriptor { id: format!("n{k}"), location: None }).collect();
        let files = (0..nodes)
            .map(|k| RawMeasurementFile {
                node: format!("n{k}"),
                location: Some(format!("site {}", k % distinct_sites)),
                measurements: (1..=refs_per_node)
                    .map(|o| RawEntry { reference: format!("n{}", (k + o) % nodes), min_rtt_ms: 1.0 + o as f64 })
                    .collect(),
                dropped: DropCounts::default(),
            })
            .collect();
        (files, desc, cities)
    }

    #[test]
    fn subsets_are_distinct_and_sized() {
        let (files, desc, cities) = world(1000, 902, 1000);
        let a = build_analysis_input(&files, &desc, &cities, 40, 9).unwrap();
        assert_eq!(a.selected.len(), 1000);
        for &i in &a.selected {
            let refs = a.schedule.refs(i);
            assert_eq!(refs.len(), 40);
            let locs: BTreeSet<(u64, u64)> = refs
                .iter()
                .map(|&j| {
                    let p = a.network.nodes[j].claimed_location;
                    (p.lat.to_bits(), p.lon.to_bits())
                })
                .collect();
            assert_eq!(locs.len(), 40);
            for &j in refs {
                assert!(a.measurements.rtt(i, j).is_some() && a.measurements.rtt(j, i).is_some());
            }
        }
        let b = build_analysis_input(&files, &desc, &cities, 40, 9).unwrap();
        assert_eq!(a.schedule, b.schedule);
        let c = build_analysis_input(&files, &desc, &cities, 40, 10).unwrap();
        assert_ne!(a.schedule, c.schedule);
    }

    #[test]
    fn duplicate_locations_are_resampled() {
        // 30 nodes on 10 sites: 29 candidates but only 10 distinct locations
        let (files, desc, cities) = world(30, 29, 10);
        let a = build_analysis_input(&files, &desc, &cities, 10, 1).unwrap();
        assert_eq!(a.selected.len(), 30);
        for &i in &a.selected {
            let sites: BTreeSet<usize> = a.schedule.refs(i).iter().map(|&j| j % 10).collect();
            assert_eq!(sites.len(), 10);
        }
        let b = build_analysis_input(&files, &desc, &cities, 11, 1).unwrap();
        assert!(b.selected.is_empty());
        assert!(b.excluded.iter().all(|e| matches!(e.reason, Exclusion::TooFewReferences { usable: 29, required: 11 })));
    }

    #[test]
    fn missing_reverse_is_mirrored_and_flagged() {
        let (mut files, desc, cities) = world(6, 5, 6);
        files[1].measurements.retain(|e| e.reference != "n0");
        let a = build_analysis_input(&files, &desc, &cities, 5, 3).unwrap();
        assert_eq!(a.mirrored, vec![(1, 0)]);
        assert_eq!(a.measurements.rtt(1, 0), a.measurements.rtt(0, 1));
        assert_eq!(a.counts.mirrored_directions, 1);
        assert_eq!(a.mirrored_for(0), 1);
    }

    #[test]
    fn exclusion_reasons() {
        let (mut files, mut desc, cities) = world(8, 7, 8);
        files[2].location = Some("Atlantis".into());
        files[3].location = None;
        files.remove(4);
        files[0].measurements.push(RawEntry { reference: "stranger".into(), min_rtt_ms: 3.0 });
        desc.push(WildDescriptor { id: "n8".into(), location: Some("site 1".into()) });
        let a = build_analysis_input(&files, &desc, &cities, 5, 3).unwrap();
        let reason = |id: &str| a.excluded.iter().find(|e| e.id == id).map(|e| e.reason.clone());
        assert_eq!(reason("n2"), Some(Exclusion::UnresolvedLocation));
        assert_eq!(reason("n3"), Some(Exclusion::NoLocation));
        assert_eq!(reason("n4"), Some(Exclusion::NoPayload));
        assert_eq!(reason("n8"), Some(Exclusion::NoPayload));
        assert_eq!(a.counts.unresolved_references, 1);
        assert_eq!(a.selected.len() + a.excluded.len(), 9);
    }

    #[test]
    fn consistency_rows() {
        let zones = ZoneMap::europe15();
        let berlin = GeoPoint::new(52.52, 13.405).unwrap();
        let r = location_consistency("x", berlin, berlin, zones);
        assert_eq!(r.distance_km, 0.0);
        assert!(!r.conflict);
        let paris = GeoPoint::new(48.8566, 2.3522).unwrap();
        let r = location_consistency("x", berlin, paris, zones);
        assert!(r.conflict);
        assert_eq!(r.self_zone.as_deref(), Some("DE"));
        assert_eq!(r.external_zone.as_deref(), Some("FR"));
    }

    #[test]
    fn consistency_aggregates_recompute() {
        let zones = ZoneMap::europe15();
        let base = GeoPoint::new(50.0, 10.0).unwrap();
        let rows: Vec<ConsistencyRow> = (0..7)
            .map(|k| location_consistency(&format!("n{k}"), base, GeoPoint::new(50.0, 10.0 + k as f64 * 1.7).unwrap(), zones))
            .collect();
        let rep = ConsistencyReport::from_rows(rows.clone());
        let mut d: Vec<f64> = rows.iter().map(|r| r.distance_km).collect();
        d.sort_by(f64::total_cmp);
        assert_eq!(rep.median_km, d[3]);
        let mean = d.iter().fold(0.0, |a, b| a + b) / 7.0;
        assert!((rep.mean_km - mean).abs() < 1e-9);
        let conflicts = rows.iter().filter(|r| r.self_zone != r.external_zone).count();
        assert_eq!(rep.conflict_fraction, conflicts as f64 / 7.0);
    }

    proptest! {
        #[test]
        fn parsing_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = parse_measurement_file(&bytes);
        }

        #[test]
        fn parsing_is_total_on_json_like(s in r#"\{("node"|"measurements"|"location"|"ref"|"min_rtt_ms"|[:,\[\]{}0-9.\-e"a-z ]){0,40}\}"#) {
            if let Ok(f) = parse_measurement_file(s.as_bytes()) {
                prop_assert!(f.measurements.iter().all(|e| e.min_rtt_ms > 0.0));
            }
        }
    }
}
