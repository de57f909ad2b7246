use criterion::{black_box, criterion_group, criterion_main, Criterion};

use vlcsim::channel::{los_power, power_map};
use vlcsim::config::SimConfig;
use vlcsim::engine::run;
use vlcsim::localization::estimate_position;
use vlcsim::prediction::build_database;
use vlcsim::{default_scenario, Point2, RssReport};

fn channel(c: &mut Criterion) {
    let s = default_scenario();
    c.bench_function("power_map_0.1m", |b| b.iter(|| power_map(black_box(&s), 0.1).unwrap()));
    c.bench_function("database_0.5m", |b| b.iter(|| build_database(black_box(&s), 0.5).unwrap()));
}

fn localization(c: &mut Criterion) {
    let s = default_scenario();
    let p = Point2::new(1.3, -2.2);
    let report = RssReport {
        device_id: 1,
        superframe_index: 0,
        readings: s
            .aps
            .iter()
            .map(|ap| (ap.id, s.channel.responsivity_a_per_w * los_power(ap, p, &s.channel, &s.room)))
            .collect(),
    };
    c.bench_function("estimate_position", |b| b.iter(|| estimate_position(black_box(&report), &s).unwrap()));
}

fn engine(c: &mut Criterion) {
    let cfg = SimConfig::default();
    c.bench_function("run_default_both_schemes", |b| b.iter(|| run(black_box(&cfg)).unwrap()));
}

criterion_group!(benches, channel, localization, engine);
criterion_main!(benches);
