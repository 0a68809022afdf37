//! Ingests a synthetic live-network crawl in which some nodes self-report
//! the wrong city, then checks that accepted nodes localize closer to their
//! reported location than rejected ones.

use geoverify::confidence::{confidence_score, ConfidenceParams, Decision, WILD_TAU};
use geoverify::geo::{great_circle_distance, ZoneMap};
use geoverify::ingest::{build_analysis_input, parse_measurement_file, CityRecord, CityTable, RawEntry, RawMeasurementFile, WildDescriptor};
use geoverify::localize::{estimate_location, LocalizeConfig, Reference};
use geoverify::netgen::{generate_network, measure_pair, ProbeConfig, PropagationMatrix};
use geoverify::PropagationModel;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn accepted_nodes_localize_closer_than_rejected() {
    let zones = ZoneMap::europe15();
    let model = PropagationModel::default_model();
    let net = generate_network(240, zones, "europe15", 5).unwrap();
    let n = net.len();
    let matrix = PropagationMatrix::lazy(&net, model, 6);
    let probe = ProbeConfig::default();
    let ids: Vec<String> = net.nodes.iter().map(|d| hex::encode(&d.public_key)).collect();
    let city = |k: usize| format!("town {k}");

    let country: Vec<String> = net.nodes.iter().map(|d| zones.zone_of(d.true_location).unwrap().to_string()).collect();
    let cities = CityTable::new((0..n).map(|k| CityRecord {
        name: city(k),
        country: country[k].clone(),
        center: net.nodes[k].true_location,
    }))
    .unwrap();

    // every fifth node reports the city of a node at least 800 km away
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let reported: Vec<usize> = (0..n)
        .map(|k| {
            if k % 5 != 0 {
                return k;
            }
            let mut far: Vec<usize> = (0..n)
                .filter(|&j| great_circle_distance(net.nodes[k].true_location, net.nodes[j].true_location) > 800.0)
                .collect();
            far.shuffle(&mut rng);
            far[0]
        })
        .collect();

    let files: Vec<RawMeasurementFile> = (0..n)
        .map(|i| {
            let raw = RawMeasurementFile {
                node: ids[i].clone(),
                location: Some(format!("{}, {}", city(reported[i]), country[reported[i]])),
                measurements: (0..n)
                    .filter(|&j| j != i)
                    .map(|j| RawEntry { reference: ids[j].clone(), min_rtt_ms: measure_pair(i, j, &matrix, &probe, 9).unwrap() })
                    .collect(),
                dropped: Default::default(),
            };
            parse_measurement_file(raw.to_json_pretty().as_bytes()).unwrap()
        })
        .collect();
    let descriptors: Vec<WildDescriptor> = ids.iter().map(|id| WildDescriptor { id: id.clone(), location: None }).collect();

    let input = build_analysis_input(&files, &descriptors, &cities, 40, 10).unwrap();
    assert!(input.selected.len() > n * 3 / 4, "{} of {n} selected", input.selected.len());
    let params = ConfidenceParams { tau: WILD_TAU, ..ConfidenceParams::default() };
    let (mut accepted, mut rejected) = (Vec::new(), Vec::new());
    for &i in &input.selected {
        let conf = confidence_score(i, &input.schedule, &input.measurements, &input.network, model, &params).unwrap();
        let refs: Vec<Reference> = input
            .schedule
            .refs(i)
            .iter()
            .map(|&j| Reference {
                location: input.network.nodes[j].claimed_location,
                rtt_ms: input.measurements.symmetric(i, j).unwrap(),
            })
            .collect();
        let est = estimate_location(&refs, model, &LocalizeConfig::default()).unwrap();
        let err = great_circle_distance(est.estimate, input.network.nodes[i].claimed_location);
        match conf.decision {
            Decision::Accept => accepted.push(err),
            Decision::Reject => rejected.push(err),
        }
    }
    assert!(!accepted.is_empty() && !rejected.is_empty());
    let (a, r) = (median(accepted), median(rejected));
    assert!(a < r, "accepted median {a:.1} km, rejected median {r:.1} km");
}
