use criterion::{black_box, criterion_group, criterion_main, Criterion};

use geoverify::geo::{great_circle_distance, GeoPoint, ZoneMap};
use geoverify::localize::{estimate_location, LocalizeConfig, Reference};
use geoverify::netgen::generate_network;
use geoverify::schedule::{build_schedule, Beacon};
use geoverify::PropagationModel;

fn haversine(c: &mut Criterion) {
    let a = GeoPoint::new(48.8566, 2.3522).unwrap();
    let b = GeoPoint::new(52.52, 13.405).unwrap();
    c.bench_function("great_circle_distance", |bench| bench.iter(|| great_circle_distance(black_box(a), black_box(b))));
}

fn localization(c: &mut Criterion) {
    let model = PropagationModel::default_model();
    let net = generate_network(41, ZoneMap::europe15(), "europe15", 3).unwrap();
    let target = net.nodes[0].true_location;
    let refs: Vec<Reference> = net.nodes[1..]
        .iter()
        .map(|d| Reference {
            location: d.true_location,
            rtt_ms: model.distance_to_time(great_circle_distance(d.true_location, target)) * 1.1,
        })
        .collect();
    let cfg = LocalizeConfig::default();
    c.bench_function("estimate_location_40_refs", |bench| bench.iter(|| estimate_location(black_box(&refs), model, &cfg).unwrap()));
}

fn schedule(c: &mut Criterion) {
    let keys: Vec<Vec<u8>> = (0..1000u32).map(|k| k.to_be_bytes().repeat(8)).collect();
    let beacon = Beacon::from_seed(7);
    let mut group = c.benchmark_group("schedule");
    group.sample_size(20);
    group.bench_function("build_n1000_t50", |bench| bench.iter(|| build_schedule(&beacon, black_box(&keys), 50).unwrap()));
    group.finish();
}

criterion_group!(benches, haversine, localization, schedule);
criterion_main!(benches);
