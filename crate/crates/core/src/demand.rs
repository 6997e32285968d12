//! Trip demand: population-weighted origins over square districts and
//! destinations drawn uniformly over the street network.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeIx, RoadNetwork};

pub const DEFAULT_CELL_SIZE: f64 = 1000.0;
/// Draws allowed when an origin/destination pair collides.
pub const REDRAW_BUDGET: usize = 100;

/// A population centroid in network coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRecord {
    #[serde(rename = "x_m")]
    pub x: f64,
    #[serde(rename = "y_m")]
    pub y: f64,
    pub population: u64,
}

pub fn read_population_csv<R: Read>(r: R) -> Result<Vec<PopulationRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct District {
    /// Column and row of the cell, counted from the bounding-box corner.
    pub cell: (i64, i64),
    pub weight: f64,
    pub edges: Vec<EdgeIx>,
}

/// Square districts with positive population share and at least one
/// spawnable street each, sorted by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DistrictGrid {
    pub cell_size: f64,
    pub bounding_box: (f64, f64, f64, f64),
    pub districts: Vec<District>,
}

impl DistrictGrid {
    fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        cell_of(self.bounding_box, self.cell_size, x, y)
    }

    pub fn weight_of(&self, x: f64, y: f64) -> f64 {
        let key = self.cell_of(x, y);
        self.districts
            .iter()
            .find(|d| d.cell == key)
            .map_or(0.0, |d| d.weight)
    }
}

/// Half-open cell `[x0 + i*size, x0 + (i+1)*size)` in each axis.
fn cell_of(bbox: (f64, f64, f64, f64), size: f64, x: f64, y: f64) -> (i64, i64) {
    (
        ((x - bbox.0) / size).floor() as i64,
        ((y - bbox.1) / size).floor() as i64,
    )
}

pub fn build_districts(
    records: &[PopulationRecord],
    net: &RoadNetwork,
    cell_size: f64,
    vehicle_length: f64,
) -> Result<DistrictGrid> {
    if cell_size.is_nan() || cell_size <= 0.0 {
        return Err(Error::Demand(format!("cell size must be positive, got {cell_size}")));
    }
    let bbox = net.bounding_box();
    let inside = |r: &PopulationRecord| {
        r.x >= bbox.0 && r.x <= bbox.2 && r.y >= bbox.1 && r.y <= bbox.3
    };

    let mut population: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    let mut dropped = 0;
    for r in records {
        if !inside(r) {
            dropped += 1;
            continue;
        }
        if r.population > 0 {
            *population.entry(cell_of(bbox, cell_size, r.x, r.y)).or_default() += r.population;
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} population record(s) outside the network bounding box");
    }

    let mut edges: BTreeMap<(i64, i64), Vec<EdgeIx>> = BTreeMap::new();
    for e in net.spawnable_edges(vehicle_length) {
        let n = net.node(net.edge_from(e));
        edges.entry(cell_of(bbox, cell_size, n.x, n.y)).or_default().push(e);
    }

    let mut districts = Vec::new();
    let mut orphaned = 0u64;
    for (cell, pop) in population {
        match edges.remove(&cell) {
            Some(cell_edges) => districts.push(District {
                cell,
                weight: pop as f64,
                edges: cell_edges,
            }),
            None => orphaned += pop,
        }
    }
    if orphaned > 0 {
        log::warn!(
            "{orphaned} residents live in districts without spawnable streets; \
             their share is spread over the remaining districts"
        );
    }
    let total: f64 = districts.iter().map(|d| d.weight).sum();
    if districts.is_empty() || total <= 0.0 {
        return Err(Error::Demand(
            "no populated district inside the network contains a spawnable street".into(),
        ));
    }
    for d in &mut districts {
        d.weight /= total;
    }
    Ok(DistrictGrid {
        cell_size,
        bounding_box: bbox,
        districts,
    })
}

/// An origin/destination street pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trip {
    pub origin: EdgeIx,
    pub destination: EdgeIx,
}

fn draw_destination<R: Rng>(
    rng: &mut R,
    spawnable: &[EdgeIx],
    origin: EdgeIx,
) -> Result<EdgeIx> {
    for _ in 0..REDRAW_BUDGET {
        let d = spawnable[rng.gen_range(0..spawnable.len())];
        if d != origin {
            return Ok(d);
        }
    }
    Err(Error::Demand(format!(
        "no destination distinct from origin after {REDRAW_BUDGET} draws"
    )))
}

/// Origins weighted by district population, destinations uniform.
pub fn sample_trips(
    grid: &DistrictGrid,
    net: &RoadNetwork,
    n: usize,
    seed: u64,
    vehicle_length: f64,
) -> Result<Vec<Trip>> {
    let spawnable = net.spawnable_edges(vehicle_length);
    if spawnable.is_empty() {
        return Err(Error::Demand("network has no spawnable street".into()));
    }
    let weights = WeightedIndex::new(grid.districts.iter().map(|d| d.weight))
        .map_err(|e| Error::Demand(format!("district weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let district = &grid.districts[weights.sample(&mut rng)];
            let origin = district.edges[rng.gen_range(0..district.edges.len())];
            let destination = draw_destination(&mut rng, &spawnable, origin)?;
            Ok(Trip { origin, destination })
        })
        .collect()
}

/// Origins and destinations both uniform over spawnable streets.
pub fn sample_uniform_trips(
    net: &RoadNetwork,
    n: usize,
    seed: u64,
    vehicle_length: f64,
) -> Result<Vec<Trip>> {
    let spawnable = net.spawnable_edges(vehicle_length);
    if spawnable.is_empty() {
        return Err(Error::Demand("network has no spawnable street".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let origin = spawnable[rng.gen_range(0..spawnable.len())];
            let destination = draw_destination(&mut rng, &spawnable, origin)?;
            Ok(Trip { origin, destination })
        })
        .collect()
}

pub fn write_trips_csv<W: Write>(net: &RoadNetwork, trips: &[Trip], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["origin_edge", "dest_edge"])?;
    for t in trips {
        out.write_record([&net.edge(t.origin).id, &net.edge(t.destination).id])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_trips_csv<R: Read>(net: &RoadNetwork, r: R) -> Result<Vec<Trip>> {
    #[derive(Deserialize)]
    struct Row {
        origin_edge: String,
        dest_edge: String,
    }
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| {
            let row: Row = row?;
            Ok(Trip {
                origin: net.require_edge(&row.origin_edge)?,
                destination: net.require_edge(&row.dest_edge)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FleetSize {
    pub unrounded: f64,
    /// Rounded to the nearest thousand.
    pub rounded: u64,
}

/// Vehicles active in one commute period.
pub fn compute_fleet_size(population: u64, commute_share: f64, periods: u32) -> Result<FleetSize> {
    if population == 0 || !(commute_share > 0.0 && commute_share <= 1.0) || periods == 0 {
        return Err(Error::Config(format!(
            "fleet size needs population > 0, share in (0,1], periods >= 1 \
             (got {population}, {commute_share}, {periods})"
        )));
    }
    let unrounded = population as f64 * commute_share / periods as f64;
    let rounded = ((unrounded / 1000.0).round() * 1000.0) as u64;
    log::info!("fleet size {unrounded:.1} -> {rounded}");
    Ok(FleetSize { unrounded, rounded })
}
