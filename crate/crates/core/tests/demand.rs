mod common;

use altruroute_core::demand::{
    build_districts, compute_fleet_size, read_population_csv, read_trips_csv, sample_trips,
    sample_uniform_trips, write_trips_csv, PopulationRecord,
};
use altruroute_core::network::{generate_grid, RoadNetwork};
use altruroute_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rec(x: f64, y: f64, population: u64) -> PopulationRecord {
    PopulationRecord { x, y, population }
}

/// 4x4 nodes spanning 300 m; with 200 m cells this is a 2x2 district grid.
fn small_city() -> RoadNetwork {
    generate_grid(4, 4, 100.0, 10.0, 1).unwrap()
}

fn cell_of_origin(net: &RoadNetwork, e: altruroute_core::network::EdgeIx, size: f64) -> (i64, i64) {
    let n = net.node(net.edge_from(e));
    ((n.x / size).floor() as i64, (n.y / size).floor() as i64)
}

#[test]
fn single_record_takes_all_weight() {
    let net = small_city();
    let grid = build_districts(&[rec(50.0, 50.0, 10)], &net, 200.0, 5.0).unwrap();
    assert_eq!(grid.districts.len(), 1);
    assert_eq!(grid.districts[0].weight, 1.0);
    assert_eq!(grid.districts[0].cell, (0, 0));
    let trips = sample_trips(&grid, &net, 500, 3, 5.0).unwrap();
    assert!(trips.iter().all(|t| cell_of_origin(&net, t.origin, 200.0) == (0, 0)));
}

#[test]
fn weights_follow_population() {
    let net = small_city();
    let grid = build_districts(&[rec(50.0, 50.0, 300), rec(250.0, 250.0, 100)], &net, 200.0, 5.0).unwrap();
    assert_eq!(grid.weight_of(10.0, 10.0), 0.75);
    assert_eq!(grid.weight_of(290.0, 290.0), 0.25);
    assert_eq!(grid.weight_of(250.0, 50.0), 0.0);
}

#[test]
fn boundary_records_use_half_open_cells() {
    let net = small_city();
    let grid = build_districts(&[rec(200.0, 0.0, 5), rec(199.999, 0.0, 15)], &net, 200.0, 5.0).unwrap();
    let weights: Vec<_> = grid.districts.iter().map(|d| (d.cell, d.weight)).collect();
    assert_eq!(weights, vec![((0, 0), 0.75), ((1, 0), 0.25)]);
}

#[test]
fn records_outside_the_city_are_dropped() {
    let net = small_city();
    let grid = build_districts(&[rec(50.0, 50.0, 10), rec(5000.0, 50.0, 1000)], &net, 200.0, 5.0).unwrap();
    assert_eq!(grid.districts.len(), 1);
    assert_eq!(grid.districts[0].weight, 1.0);
    let err = build_districts(&[rec(-10.0, 50.0, 10)], &net, 200.0, 5.0).unwrap_err();
    assert!(matches!(err, Error::Demand(_)));
    assert!(build_districts(&[rec(50.0, 50.0, 0)], &net, 200.0, 5.0).is_err());
}

#[test]
fn uniform_districts_sample_uniformly() {
    let net = small_city();
    let records = [(50.0, 50.0), (250.0, 50.0), (50.0, 250.0), (250.0, 250.0)].map(|(x, y)| rec(x, y, 1000));
    let grid = build_districts(&records, &net, 200.0, 5.0).unwrap();
    assert_eq!(grid.districts.len(), 4);
    let n = 20_000;
    let trips = sample_trips(&grid, &net, n, 11, 5.0).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for t in &trips {
        *counts.entry(cell_of_origin(&net, t.origin, 200.0)).or_insert(0usize) += 1;
        assert_ne!(t.origin, t.destination);
    }
    let expected = n as f64 / 4.0;
    let sigma = (n as f64 * 0.25 * 0.75).sqrt();
    assert_eq!(counts.len(), 4);
    for (cell, &c) in &counts {
        assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{cell:?}: {c}");
    }
}

#[test]
fn destinations_cover_the_network() {
    let net = small_city();
    let grid = build_districts(&[rec(50.0, 50.0, 1)], &net, 200.0, 5.0).unwrap();
    let trips = sample_trips(&grid, &net, 5000, 2, 5.0).unwrap();
    let mut seen = vec![false; net.edge_count()];
    for t in &trips {
        seen[t.destination.index()] = true;
    }
    assert!(seen.iter().all(|&s| s));
}

#[test]
fn trips_csv_round_trip() {
    let net = small_city();
    let trips = sample_uniform_trips(&net, 50, 4, 5.0).unwrap();
    let mut buf = Vec::new();
    write_trips_csv(&net, &trips, &mut buf).unwrap();
    assert!(buf.starts_with(b"origin_edge,dest_edge\n"));
    assert_eq!(read_trips_csv(&net, buf.as_slice()).unwrap(), trips);
}

#[test]
fn population_csv_parses() {
    let text = "x_m,y_m,population\n10.5,20,300\n0,0,0\n";
    let records = read_population_csv(text.as_bytes()).unwrap();
    assert_eq!(records, vec![rec(10.5, 20.0, 300), rec(0.0, 0.0, 0)]);
    assert!(read_population_csv("x_m,y_m,population\n1,2,-3\n".as_bytes()).is_err());
}

#[test]
fn fleet_sizes() {
    let duluth = compute_fleet_size(116_688, 0.744, 6).unwrap();
    assert!((duluth.unrounded - 14469.312).abs() < 1e-9);
    assert_eq!(duluth.rounded, 14_000);
    let manhattan = compute_fleet_size(1_002_576, 0.058, 6).unwrap();
    assert!((manhattan.unrounded - 9691.568).abs() < 1e-9);
    assert_eq!(manhattan.rounded, 10_000);
    let all = compute_fleet_size(12_345, 1.0, 1).unwrap();
    assert_eq!(all.unrounded, 12_345.0);
    assert_eq!(all.rounded, 12_000);
    for (p, s, k) in [(0, 0.5, 6), (100, 0.0, 6), (100, 1.5, 6), (100, 0.5, 0)] {
        assert!(matches!(compute_fleet_size(p, s, k), Err(Error::Config(_))));
    }
}

fn arbitrary_records() -> impl Strategy<Value = Vec<(f64, f64, u64)>> {
    prop::collection::vec((0.0f64..900.0, 0.0f64..900.0, 0u64..5000), 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_sum_to_one(raw in arbitrary_records(), cell in 50.0f64..1200.0) {
        let net = common::acceptance_grid().build().unwrap();
        let records: Vec<_> = raw.iter().map(|&(x, y, p)| rec(x, y, p)).collect();
        if let Ok(grid) = build_districts(&records, &net, cell, 5.0) {
            let total: f64 = grid.districts.iter().map(|d| d.weight).sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(grid.districts.iter().all(|d| d.weight > 0.0 && !d.edges.is_empty()));
        }
    }

    #[test]
    fn zero_population_records_do_not_matter(raw in arbitrary_records(), zeros in prop::collection::vec((0.0f64..900.0, 0.0f64..900.0), 0..20)) {
        let net = common::acceptance_grid().build().unwrap();
        let records: Vec<_> = raw.iter().map(|&(x, y, p)| rec(x, y, p + 1)).collect();
        let mut padded = records.clone();
        padded.extend(zeros.iter().map(|&(x, y)| rec(x, y, 0)));
        let a = build_districts(&records, &net, 300.0, 5.0).unwrap();
        let b = build_districts(&padded, &net, 300.0, 5.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn record_order_is_irrelevant(raw in arbitrary_records(), seed in any::<u64>()) {
        let net = common::acceptance_grid().build().unwrap();
        let records: Vec<_> = raw.iter().map(|&(x, y, p)| rec(x, y, p + 1)).collect();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = build_districts(&records, &net, 300.0, 5.0).unwrap();
        let b = build_districts(&shuffled, &net, 300.0, 5.0).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(
            sample_trips(&a, &net, 200, seed, 5.0).unwrap(),
            sample_trips(&b, &net, 200, seed, 5.0).unwrap()
        );
    }
}
