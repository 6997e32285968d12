//! Tick-based mesoscopic traffic simulation.
//!
//! Every street holds at most `floor(lanes * length / (vehicle_length + min_gap))`
//! vehicles (at least one). A vehicle drives at
//! `max_speed * max(1 - rho, 0.1)`, where `rho` is the share of the street's
//! capacity taken by the *other* vehicles on it at the start of the tick.
//! Reaching the end of a street, a vehicle moves on only if the next street
//! has room; otherwise it waits at the end (vertical queue). Leftover time
//! within a tick carries over to the next street.
//!
//! Vehicles that finish a trip immediately start a new one from the street
//! they are on, so the population is constant.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeIx, RoadNetwork};
use crate::routing::{shortest_route, CostMode, Route};

pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;
pub const DEFAULT_MIN_GAP: f64 = 2.5;
/// Lower bound of the speed factor on a crowded street.
pub const SPEED_FLOOR: f64 = 0.1;
pub const RESPAWN_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon_ticks: u32,
    pub vehicle_length: f64,
    pub min_gap: f64,
    /// Seconds per tick.
    pub tick: f64,
    pub record_occupancy: bool,
}

impl SimConfig {
    pub fn new(horizon_ticks: u32) -> Self {
        SimConfig {
            horizon_ticks,
            vehicle_length: DEFAULT_VEHICLE_LENGTH,
            min_gap: DEFAULT_MIN_GAP,
            tick: 1.0,
            record_occupancy: false,
        }
    }
}

/// Street capacity in vehicles.
pub fn edge_capacity(length: f64, lanes: u32, vehicle_length: f64, min_gap: f64) -> u32 {
    ((lanes as f64 * length / (vehicle_length + min_gap)).floor() as u32).max(1)
}

/// Congestion-dependent speed for a street with density `rho`.
#[inline]
pub fn effective_speed(max_speed: f64, rho: f64) -> f64 {
    max_speed * (1.0 - rho).max(SPEED_FLOOR)
}

/// One completed trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub vehicle: u32,
    pub trip_index: u32,
    pub router: CostMode,
    pub origin: EdgeIx,
    pub destination: EdgeIx,
    pub start_tick: u32,
    pub end_tick: u32,
    pub actual: f64,
    pub theoretical: f64,
    pub overhead: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimOutput {
    pub trips: Vec<TripRecord>,
    /// `(tick, edge, occupants)` for occupied streets, when recording is on.
    pub occupancy: Option<Vec<(u32, EdgeIx, u32)>>,
    /// Vehicles on streets plus vehicles waiting to enter, after each tick.
    pub vehicles_per_tick: Vec<u32>,
}

impl SimOutput {
    pub fn first_trips(&self) -> impl Iterator<Item = &TripRecord> {
        self.trips.iter().filter(|t| t.trip_index == 0)
    }

    pub fn completed_first_trips(&self) -> usize {
        self.first_trips().count()
    }

    pub fn write_trip_csv<W: Write>(&self, net: &RoadNetwork, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "vehicle", "trip_index", "origin", "dest", "start_tick", "end_tick", "actual_s",
            "theoretical_s", "overhead",
        ])?;
        for t in &self.trips {
            out.write_record([
                t.vehicle.to_string(),
                t.trip_index.to_string(),
                net.edge(t.origin).id.clone(),
                net.edge(t.destination).id.clone(),
                t.start_tick.to_string(),
                t.end_tick.to_string(),
                t.actual.to_string(),
                t.theoretical.to_string(),
                t.overhead.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_occupancy_csv<W: Write>(&self, net: &RoadNetwork, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["tick", "edge", "occupants"])?;
        for &(tick, e, n) in self.occupancy.iter().flatten() {
            out.write_record([tick.to_string(), net.edge(e).id.clone(), n.to_string()])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Mean overhead over each vehicle's first completed trip; `None` when no
/// first trip completed.
pub fn mean_first_trip_overhead(out: &SimOutput) -> Option<f64> {
    let (sum, n) = out
        .first_trips()
        .fold((0.0, 0usize), |(s, n), t| (s + t.overhead, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// A vehicle at tick 0: its first route and the router used after it.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSpec {
    pub id: u32,
    pub route: Route,
    pub router: CostMode,
    pub respawn_router: CostMode,
}

/// Supplies the next route for a vehicle that just finished a trip on `at`.
pub trait Respawn {
    fn next_route(&mut self, net: &RoadNetwork, vehicle: u32, router: CostMode, at: EdgeIx)
        -> Result<Route>;
}

/// Uniform destinations over spawnable streets, routed with the vehicle's
/// respawn router.
#[derive(Debug, Clone)]
pub struct RandomDestinations {
    spawnable: Vec<EdgeIx>,
    rng: ChaCha8Rng,
}

impl RandomDestinations {
    pub fn new(net: &RoadNetwork, vehicle_length: f64, seed: u64) -> Self {
        RandomDestinations {
            spawnable: net.spawnable_edges(vehicle_length),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Respawn for RandomDestinations {
    fn next_route(
        &mut self,
        net: &RoadNetwork,
        _vehicle: u32,
        router: CostMode,
        at: EdgeIx,
    ) -> Result<Route> {
        respawn_trip(net, &self.spawnable, &mut self.rng, router, at)
    }
}

/// Draws a fresh destination and routes to it from `at`.
pub fn respawn_trip<R: Rng>(
    net: &RoadNetwork,
    spawnable: &[EdgeIx],
    rng: &mut R,
    router: CostMode,
    at: EdgeIx,
) -> Result<Route> {
    if spawnable.is_empty() {
        return Err(Error::Demand("no spawnable street to respawn to".into()));
    }
    for _ in 0..RESPAWN_ATTEMPTS {
        let dest = spawnable[rng.gen_range(0..spawnable.len())];
        if dest == at {
            continue;
        }
        match shortest_route(net, at, dest, router) {
            Ok(route) => return Ok(route),
            Err(Error::Routing(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Demand(format!(
        "no reachable destination from \"{}\" after {RESPAWN_ATTEMPTS} draws",
        net.edge(at).id
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Waiting,
    Driving,
}

#[derive(Debug, Clone)]
struct VehicleState {
    id: u32,
    route: Route,
    router: CostMode,
    respawn_router: CostMode,
    pos: usize,
    offset: f64,
    trip_start: u32,
    trip_index: u32,
    status: Status,
}

impl VehicleState {
    fn edge(&self) -> EdgeIx {
        self.route.edges[self.pos]
    }
}

/// Simulation state between ticks.
pub struct SimState<'a> {
    net: &'a RoadNetwork,
    config: SimConfig,
    capacity: Vec<u32>,
    occupants: Vec<u32>,
    vehicles: Vec<VehicleState>,
    spawn_queue: Vec<usize>,
    tick: u32,
    order: Vec<usize>,
    snapshot: Vec<u32>,
    output: SimOutput,
}

impl<'a> SimState<'a> {
    pub fn new(net: &'a RoadNetwork, vehicles: Vec<VehicleSpec>, config: SimConfig) -> Result<Self> {
        if config.horizon_ticks == 0 {
            return Err(Error::Config("horizon must be at least one tick".into()));
        }
        if !(config.vehicle_length > 0.0 && config.min_gap >= 0.0 && config.tick > 0.0) {
            return Err(Error::Config("vehicle length and tick must be positive".into()));
        }
        for v in &vehicles {
            let bad_index = v.route.edges.iter().any(|e| e.index() >= net.edge_count());
            if v.route.edges.is_empty() || bad_index || !v.route.is_valid_in(net) {
                return Err(Error::Config(format!(
                    "vehicle {} has a route that does not fit the network",
                    v.id
                )));
            }
        }
        let capacity = net
            .edges()
            .iter()
            .map(|e| edge_capacity(e.length, e.lanes, config.vehicle_length, config.min_gap))
            .collect();
        let states: Vec<VehicleState> = vehicles
            .into_iter()
            .map(|v| VehicleState {
                id: v.id,
                route: v.route,
                router: v.router,
                respawn_router: v.respawn_router,
                pos: 0,
                offset: 0.0,
                trip_start: 0,
                trip_index: 0,
                status: Status::Waiting,
            })
            .collect();
        Ok(SimState {
            net,
            config,
            capacity,
            occupants: vec![0; net.edge_count()],
            spawn_queue: (0..states.len()).collect(),
            vehicles: states,
            tick: 0,
            order: Vec::new(),
            snapshot: vec![0; net.edge_count()],
            output: SimOutput {
                occupancy: config.record_occupancy.then(Vec::new),
                ..SimOutput::default()
            },
        })
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn occupants(&self, e: EdgeIx) -> u32 {
        self.occupants[e.index()]
    }

    pub fn capacity(&self, e: EdgeIx) -> u32 {
        self.capacity[e.index()]
    }

    /// Street and offset of a vehicle, or `None` while it waits to enter.
    pub fn position(&self, vehicle: usize) -> Option<(EdgeIx, f64)> {
        let v = &self.vehicles[vehicle];
        (v.status == Status::Driving).then(|| (v.edge(), v.offset))
    }

    pub fn waiting(&self) -> usize {
        self.spawn_queue.len()
    }

    pub fn vehicle_count(&self) -> usize {
        self.occupants.iter().map(|&n| n as usize).sum::<usize>() + self.spawn_queue.len()
    }

    /// Advances the simulation by one tick.
    pub fn step(&mut self, respawn: &mut dyn Respawn) -> Result<()> {
        let t = self.tick;
        let dt = self.config.tick;

        let occupants = &mut self.occupants;
        let capacity = &self.capacity;
        let vehicles = &mut self.vehicles;
        self.spawn_queue.retain(|&i| {
            let v = &mut vehicles[i];
            let e = v.edge().index();
            if occupants[e] < capacity[e] {
                occupants[e] += 1;
                v.status = Status::Driving;
                v.offset = 0.0;
                v.trip_start = t;
                false
            } else {
                true
            }
        });

        self.snapshot.copy_from_slice(&self.occupants);
        self.order.clear();
        self.order.extend(
            (0..self.vehicles.len()).filter(|&i| self.vehicles[i].status == Status::Driving),
        );
        {
            let vehicles = &self.vehicles;
            self.order.sort_by(|&a, &b| {
                let (va, vb) = (&vehicles[a], &vehicles[b]);
                va.edge()
                    .cmp(&vb.edge())
                    .then(vb.offset.total_cmp(&va.offset))
                    .then(va.id.cmp(&vb.id))
            });
        }

        for k in 0..self.order.len() {
            let i = self.order[k];
            self.advance(i, t, dt, respawn)?;
        }

        if let Some(rows) = self.output.occupancy.as_mut() {
            for (e, &n) in self.occupants.iter().enumerate() {
                if n > 0 {
                    rows.push((t, EdgeIx(e as u32), n));
                }
            }
        }
        let count = self.vehicle_count() as u32;
        self.output.vehicles_per_tick.push(count);
        self.tick += 1;
        Ok(())
    }

    fn advance(&mut self, i: usize, t: u32, dt: f64, respawn: &mut dyn Respawn) -> Result<()> {
        let net = self.net;
        let mut time_left = dt;
        // The snapshot counts this vehicle on the street it started the tick on.
        let mut self_in_snapshot = true;
        loop {
            let v = &mut self.vehicles[i];
            let e = v.edge();
            let edge = net.edge(e);
            let others = self.snapshot[e.index()] - u32::from(self_in_snapshot);
            let rho = others as f64 / self.capacity[e.index()] as f64;
            let speed = effective_speed(edge.max_speed, rho);

            let remaining = edge.length - v.offset;
            if remaining > 0.0 {
                let needed = remaining / speed;
                if needed > time_left {
                    v.offset += speed * time_left;
                    return Ok(());
                }
                time_left -= needed;
                v.offset = edge.length;
            }

            if v.pos + 1 == v.route.edges.len() {
                self.finish_trip(i, t, respawn)?;
                return Ok(());
            }
            let next = v.route.edges[v.pos + 1];
            if self.occupants[next.index()] >= self.capacity[next.index()] {
                return Ok(());
            }
            self.occupants[e.index()] -= 1;
            self.occupants[next.index()] += 1;
            v.pos += 1;
            v.offset = 0.0;
            self_in_snapshot = false;
        }
    }

    fn finish_trip(&mut self, i: usize, t: u32, respawn: &mut dyn Respawn) -> Result<()> {
        let end_tick = t + 1;
        let v = &mut self.vehicles[i];
        let actual = (end_tick - v.trip_start) as f64 * self.config.tick;
        let theoretical = v.route.free_flow_time;
        // Whole-tick durations never undercut free flow; the clamp only
        // absorbs floating-point noise in the distance bookkeeping.
        let overhead = (actual / theoretical).max(1.0);
        self.output.trips.push(TripRecord {
            vehicle: v.id,
            trip_index: v.trip_index,
            router: v.router,
            origin: v.route.origin(),
            destination: v.route.destination(),
            start_tick: v.trip_start,
            end_tick,
            actual,
            theoretical,
            overhead,
        });
        let at = v.edge();
        let route = respawn.next_route(self.net, v.id, v.respawn_router, at)?;
        debug_assert_eq!(route.origin(), at);
        v.route = route;
        v.router = v.respawn_router;
        v.pos = 0;
        v.offset = 0.0;
        v.trip_start = end_tick;
        v.trip_index += 1;
        Ok(())
    }

    pub fn finish(self) -> SimOutput {
        self.output
    }
}

/// Simulates `config.horizon_ticks` ticks.
pub fn run(
    net: &RoadNetwork,
    vehicles: Vec<VehicleSpec>,
    config: SimConfig,
    respawn: &mut dyn Respawn,
) -> Result<SimOutput> {
    let mut state = SimState::new(net, vehicles, config)?;
    for _ in 0..config.horizon_ticks {
        state.step(respawn)?;
    }
    Ok(state.finish())
}

/// Simulates with uniform respawn destinations drawn from `seed`.
pub fn run_seeded(
    net: &RoadNetwork,
    vehicles: Vec<VehicleSpec>,
    config: SimConfig,
    seed: u64,
) -> Result<SimOutput> {
    let mut respawn = RandomDestinations::new(net, config.vehicle_length, seed);
    run(net, vehicles, config, &mut respawn)
}
