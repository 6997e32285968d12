mod common;

use altruroute_core::mesosim::{
    edge_capacity, effective_speed, mean_first_trip_overhead, run_seeded, SimConfig, SimOutput,
    SimState, TripRecord, VehicleSpec, RandomDestinations,
};
use altruroute_core::network::{generate_grid, Edge, EdgeIx, Node, RoadNetwork};
use altruroute_core::routing::{shortest_route, CostMode, Route};
use altruroute_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` streets in a line plus one long street back to the start.
fn corridor(n: usize, length: f64, speed: f64, lanes: u32) -> RoadNetwork {
    let nodes = (0..=n)
        .map(|i| Node { id: format!("p{i:02}"), x: i as f64 * length, y: 0.0 })
        .collect();
    let mut edges: Vec<Edge> = (0..n)
        .map(|i| Edge {
            id: format!("c{i:02}"),
            from: format!("p{i:02}"),
            to: format!("p{:02}", i + 1),
            length,
            max_speed: speed,
            lanes,
        })
        .collect();
    edges.push(Edge {
        id: "return".into(),
        from: format!("p{n:02}"),
        to: "p00".into(),
        length: length * n as f64,
        max_speed: speed,
        lanes,
    });
    RoadNetwork::new(nodes, edges).unwrap()
}

fn along(net: &RoadNetwork, from: usize, to: usize) -> Route {
    Route::from_edges(net, (from..to).map(|i| net.require_edge(&format!("c{i:02}")).unwrap()).collect())
}

fn vehicle(id: u32, route: Route) -> VehicleSpec {
    VehicleSpec { id, route, router: CostMode::Balanced, respawn_router: CostMode::Balanced }
}

fn first_trip(out: &SimOutput, id: u32) -> Option<&TripRecord> {
    out.first_trips().find(|t| t.vehicle == id)
}

#[test]
fn lone_vehicle_drives_at_free_flow() {
    let net = corridor(10, 100.0, 10.0, 1);
    let out = run_seeded(&net, vec![vehicle(0, along(&net, 0, 10))], SimConfig::new(300), 1).unwrap();
    let trip = first_trip(&out, 0).unwrap();
    assert_eq!(trip.theoretical, 100.0);
    assert_eq!(trip.actual, 100.0);
    assert_eq!(trip.overhead, 1.0);
    assert_eq!(mean_first_trip_overhead(&out), Some(1.0));
}

#[test]
fn shared_street_slows_the_follower() {
    let net = corridor(3, 100.0, 10.0, 1);
    let out = run_seeded(
        &net,
        vec![vehicle(0, along(&net, 0, 3)), vehicle(1, along(&net, 0, 3))],
        SimConfig::new(200),
        1,
    )
    .unwrap();
    let overheads: Vec<f64> = (0..2).map(|v| first_trip(&out, v).unwrap().overhead).collect();
    assert!(overheads.iter().any(|&o| o > 1.0), "{overheads:?}");
}

#[test]
fn short_horizon_records_nothing() {
    let net = corridor(10, 100.0, 10.0, 1);
    let out = run_seeded(&net, vec![vehicle(0, along(&net, 0, 10))], SimConfig::new(20), 1).unwrap();
    assert!(out.trips.is_empty());
    assert_eq!(mean_first_trip_overhead(&out), None);
    assert_eq!(out.vehicles_per_tick, vec![1; 20]);
}

#[test]
fn speed_and_capacity_rules() {
    assert_eq!(effective_speed(13.9, 0.0), 13.9);
    assert_eq!(effective_speed(10.0, 1.0), 1.0);
    assert_eq!(effective_speed(10.0, 0.95), 1.0);
    assert_eq!(effective_speed(10.0, 0.5), 5.0);
    assert_eq!(edge_capacity(100.0, 2, 5.0, 2.5), 26);
    assert_eq!(edge_capacity(5.0, 1, 5.0, 2.5), 1);
    assert_eq!(edge_capacity(0.5, 1, 5.0, 2.5), 1);
}

#[test]
fn mean_overhead_uses_first_trips_only() {
    let rec = |vehicle, trip_index, overhead| TripRecord {
        vehicle,
        trip_index,
        router: CostMode::MinLength,
        origin: EdgeIx(0),
        destination: EdgeIx(1),
        start_tick: 0,
        end_tick: 1,
        actual: overhead,
        theoretical: 1.0,
        overhead,
    };
    let out = SimOutput { trips: vec![rec(0, 0, 2.0), rec(1, 0, 4.0), rec(0, 1, 50.0)], ..SimOutput::default() };
    assert_eq!(mean_first_trip_overhead(&out), Some(3.0));
    assert_eq!(out.completed_first_trips(), 2);
}

#[test]
fn full_street_holds_vehicles_back() {
    // One-slot streets: the second vehicle cannot enter until the first leaves.
    let net = corridor(3, 6.0, 3.0, 1);
    assert_eq!(edge_capacity(6.0, 1, 5.0, 2.5), 1);
    let mut state = SimState::new(
        &net,
        vec![vehicle(0, along(&net, 0, 3)), vehicle(1, along(&net, 0, 3))],
        SimConfig::new(50),
    )
    .unwrap();
    let mut respawn = RandomDestinations::new(&net, 5.0, 1);
    state.step(&mut respawn).unwrap();
    assert_eq!(state.waiting(), 1);
    for _ in 0..30 {
        state.step(&mut respawn).unwrap();
        for e in net.edge_indices() {
            assert!(state.occupants(e) <= state.capacity(e));
        }
        assert_eq!(state.vehicle_count(), 2);
    }
}

#[test]
fn route_outside_the_network_is_rejected() {
    let net = corridor(3, 100.0, 10.0, 1);
    let other = generate_grid(4, 4, 100.0, 10.0, 1).unwrap();
    let foreign = Route::from_edges(&other, vec![EdgeIx(30), EdgeIx(31)]);
    let err = run_seeded(&net, vec![vehicle(0, foreign)], SimConfig::new(10), 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = run_seeded(&net, vec![], SimConfig::new(0), 1).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn respawned_trips_use_the_respawn_router() {
    let net = common::acceptance_grid().build().unwrap();
    let o = EdgeIx(0);
    let d = EdgeIx(17);
    let route = shortest_route(&net, o, d, CostMode::MaxSpeed).unwrap();
    let spec = VehicleSpec { id: 0, route, router: CostMode::MaxSpeed, respawn_router: CostMode::MinLength };
    let out = run_seeded(&net, vec![spec], SimConfig::new(1800), 5).unwrap();
    assert!(out.trips.len() > 2);
    assert_eq!(out.trips[0].router, CostMode::MaxSpeed);
    for pair in out.trips.windows(2) {
        let next = &pair[1];
        assert_eq!(next.router, CostMode::MinLength);
        assert_eq!(next.origin, pair[0].destination);
        assert_eq!(next.start_tick, pair[0].end_tick);
        let expected = shortest_route(&net, next.origin, next.destination, CostMode::MinLength).unwrap();
        assert_eq!(next.theoretical, expected.free_flow_time);
    }
}

fn random_fleet(net: &RoadNetwork, rng: &mut ChaCha8Rng, n: usize) -> Vec<VehicleSpec> {
    let m = net.edge_count() as u32;
    (0..n as u32)
        .map(|id| {
            let (o, d) = (EdgeIx(rng.gen_range(0..m)), EdgeIx(rng.gen_range(0..m)));
            let router = CostMode::ALL[rng.gen_range(0..3)];
            VehicleSpec {
                id,
                route: shortest_route(net, o, d, router).unwrap(),
                router,
                respawn_router: CostMode::ALL[rng.gen_range(0..3)],
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn population_and_capacity_are_conserved(seed in any::<u64>(), n in 3usize..10, chords in 0usize..12, vehicles in 1usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = common::random_network(&mut rng, n, chords);
        let fleet = random_fleet(&net, &mut rng, vehicles);
        let mut state = SimState::new(&net, fleet, SimConfig::new(300)).unwrap();
        let mut respawn = RandomDestinations::new(&net, 5.0, seed);
        for _ in 0..300 {
            state.step(&mut respawn).unwrap();
            prop_assert_eq!(state.vehicle_count(), vehicles);
            let mut on_streets = 0;
            for v in 0..vehicles {
                if let Some((e, offset)) = state.position(v) {
                    on_streets += 1;
                    prop_assert!(offset >= 0.0 && offset <= net.edge(e).length);
                }
            }
            prop_assert_eq!(on_streets + state.waiting(), vehicles);
            for e in net.edge_indices() {
                prop_assert!(state.occupants(e) <= state.capacity(e));
            }
        }
        let out = state.finish();
        prop_assert!(out.vehicles_per_tick.iter().all(|&c| c as usize == vehicles));
        for t in &out.trips {
            prop_assert!(t.overhead >= 1.0);
            prop_assert!(t.actual >= t.theoretical - 1e-9);
            prop_assert!(t.end_tick > t.start_tick);
        }
    }

    #[test]
    fn same_seed_same_output(seed in any::<u64>(), vehicles in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = generate_grid(5, 5, 100.0, 10.0, 1).unwrap();
        let fleet = random_fleet(&net, &mut rng, vehicles);
        let config = SimConfig { record_occupancy: true, ..SimConfig::new(400) };
        let a = run_seeded(&net, fleet.clone(), config, seed).unwrap();
        let b = run_seeded(&net, fleet, config, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_trip_csv(&net, &mut ca).unwrap();
        b.write_trip_csv(&net, &mut cb).unwrap();
        prop_assert_eq!(ca, cb);
    }

    #[test]
    fn more_leaders_never_speed_up_the_follower(
        streets in 2usize..8,
        length in 20.0f64..200.0,
        speed in 5.0f64..25.0,
        lanes in 1u32..3,
        leaders in 0usize..12,
    ) {
        // Leaders are listed first so they enter ahead of the follower.
        let net = corridor(streets, length, speed, lanes);
        let duration = |k: usize| {
            let mut fleet: Vec<_> = (0..k as u32).map(|id| vehicle(id, along(&net, 0, streets))).collect();
            fleet.push(vehicle(k as u32, along(&net, 0, streets)));
            let out = run_seeded(&net, fleet, SimConfig::new(5000), 1).unwrap();
            first_trip(&out, k as u32).map(|t| t.actual).unwrap()
        };
        prop_assert!(duration(leaders + 1) >= duration(leaders));
    }
}
