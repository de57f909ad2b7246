//! Deterministic simulator for indoor visible-light networks.
//!
//! The crate models a room lit by ceiling LED access points, the optical
//! channel between those LEDs and a receiver plane, RSS-based trilateration,
//! a coordinator that predicts where each user device is heading and
//! pre-emptively switches its serving LED, and a conventional scan-based hard
//! handover baseline for comparison.
//!
//! Module map:
//!
//! - [`scenario`]: room, access points, channel constants, validation.
//! - [`channel`]: illuminance, LOS and first-reflection power, noisy RSS.
//! - [`grid`]: sampled maps over the room footprint and their text format.
//! - [`localization`]: RSS to distance inversion and trilateration.
//! - [`prediction`]: path history, next-position extrapolation, best-AP table.
//! - [`protocol`]: superframe timing, delay models, UD and coordinator logic.
//! - [`mobility`]: ground-truth trajectories and cell gain.
//! - [`engine`]: the superframe-synchronous simulation loop and metrics.
//! - [`config`]: the TOML config schema, `key=value` overrides and hashing.

pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod localization;
pub mod mobility;
pub mod prediction;
pub mod protocol;
pub mod rng;
pub mod scenario;
pub mod timeline;

pub use channel::OpticalSample;
pub use config::SimConfig;
pub use engine::{Comparison, SchemeMetrics, SimMetrics, SimOutput};
pub use error::{Error, Result};
pub use geometry::Point2;
pub use grid::GridMap;
pub use localization::{PositionEstimate, RssReport};
pub use mobility::Trajectory;
pub use prediction::{BestApDatabase, PathReport};
pub use protocol::{DelayParams, HandoverEvent, Outcome, Phase, Scheme, SuperframeConfig};
pub use scenario::{default_scenario, AccessPoint, ApId, ChannelParams, Room, Scenario};
