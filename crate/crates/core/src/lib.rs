//! Decentralized route-choice optimization for connected vehicles.
//!
//! The pipeline: build or load a [`network::RoadNetwork`], compute three
//! candidate routes per trip ([`routing`]), encode them as street
//! utilization plans ([`plans`]), let the agents pick one plan each on a
//! tree ([`collective`]), replay the chosen routes in the tick-based
//! simulator ([`mesosim`]) and aggregate everything into sweep tables
//! ([`experiment`]). Trip demand comes from [`demand`].

pub mod collective;
pub mod demand;
pub mod error;
pub mod experiment;
pub mod mesosim;
pub mod network;
pub mod plans;
pub mod routing;
pub mod seeds;

pub use error::{Error, Result};
