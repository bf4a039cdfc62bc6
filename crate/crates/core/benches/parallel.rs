use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use mapfusion_core::align::{build_rubber_sheet, deviation_stats_with, ControlPointPair};
use mapfusion_core::conflate::{
    build_reference_polylines, buffer_grow_match_with, collapse_lanelets, MatchParams, OsmGraph,
};
use mapfusion_core::geo::{BoundingRect, LocalPoint, UtmProjector};
use mapfusion_core::par::Exec;
use mapfusion_core::synthetic;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn rubber_sheet(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(7);
    let extent = BoundingRect::new([0.0, 0.0], [1000.0, 1000.0]);
    let cps: Vec<ControlPointPair> = (0..400)
        .map(|_| {
            let s = [rng.random_range(10.0..990.0), rng.random_range(10.0..990.0)];
            ControlPointPair::new(s, [s[0] + rng.random_range(-2.0..2.0), s[1] + rng.random_range(-2.0..2.0)])
        })
        .collect();
    let sheet = build_rubber_sheet(&cps, extent).unwrap();
    let cloud: Vec<LocalPoint> = (0..200_000)
        .map(|_| LocalPoint::with_z(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0), 1.0))
        .collect();
    let mut g = c.benchmark_group("rubber_sheet_200k_points");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| sheet.apply_all_with(&cloud, exec).unwrap())
        });
    }
    g.finish();
}

fn matching(c: &mut Criterion) {
    let map = synthetic::town();
    let proj = UtmProjector::new(synthetic::origin()).unwrap();
    let net = synthetic::derived_osm(&map, &proj, synthetic::town_tags).unwrap();
    let osm = OsmGraph::project(&net, &proj).unwrap();
    let refs = build_reference_polylines(&collapse_lanelets(&map, 0.2).unwrap());
    let params = MatchParams::default();
    let mut g = c.benchmark_group("buffer_grow_match_town");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| buffer_grow_match_with(&refs, &osm, &params, exec).unwrap())
        });
    }
    g.finish();
}

fn deviation(c: &mut Criterion) {
    let s = synthetic::scenario();
    let proj = UtmProjector::new(s.origin).unwrap();
    let gnss = s.gnss.try_map(|p| proj.project(p)).unwrap();
    let slam = s.slam.try_map(|p| Ok::<_, ()>(s.rigid.apply(p))).unwrap();
    let mut g = c.benchmark_group("deviation_stats");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| deviation_stats_with(&slam, &gnss, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, rubber_sheet, matching, deviation);
criterion_main!(benches);
